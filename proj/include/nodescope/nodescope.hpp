// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/bench.hpp"
#include "nodescope/json_io.hpp"
#include "nodescope/service.hpp"
