// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/tensor.hpp"

#include <optional>

namespace nodescope {

/// Synthesised "normal" behaviour for one metric over a node selection.
struct BaselineSpec {
    enum class Origin { Auto, User };

    std::size_t metric = 0;
    std::vector<std::size_t> nodes;
    std::int64_t window_start = 0;  // inclusive timestamp bounds of the normal segment
    std::int64_t window_end = 0;
    std::size_t range_begin = 0;    // tensor time indices [begin, end) that the tiles cover
    std::size_t range_end = 0;
    Matrix tiled;                   // nodes x (range_end - range_begin)
    Origin origin = Origin::Auto;
    bool widened = false;             // Tukey fences were needed
    bool degenerate = false;          // no window found; per-node median constant
    double q1 = 0.0, q3 = 0.0;
};

inline std::string_view to_string(BaselineSpec::Origin o) { return o == BaselineSpec::Origin::User ? "user" : "auto"; }

inline std::size_t approx_bytes(const BaselineSpec& b) {
    return sizeof(BaselineSpec) + static_cast<std::size_t>(b.tiled.size()) * sizeof(double) +
           b.nodes.size() * sizeof(std::size_t);
}

/// Longest run of true values; ties keep the earliest. Returns {begin, length}.
inline std::pair<std::size_t, std::size_t> longest_run(const std::vector<bool>& ok) {
    std::size_t best_begin = 0, best_len = 0, cur_begin = 0, cur_len = 0;
    for (std::size_t i = 0; i < ok.size(); ++i) {
        if (ok[i]) {
            if (cur_len == 0) cur_begin = i;
            ++cur_len;
            if (cur_len > best_len) {
                best_len = cur_len;
                best_begin = cur_begin;
            }
        } else {
            cur_len = 0;
        }
    }
    return {best_begin, best_len};
}

/// Repeats columns [begin, begin + length) of `data` left to right until the
/// full width is covered; the last repetition is truncated.
inline Matrix tile_window(const Matrix& data, std::size_t begin, std::size_t length) {
    require(length > 0, "baseline window is empty");
    require(begin + length <= static_cast<std::size_t>(data.cols()), "baseline window exceeds the data range");
    Matrix out(data.rows(), data.cols());
    for (Eigen::Index c = 0; c < data.cols(); ++c)
        out.col(c) = data.col(static_cast<Eigen::Index>(begin + static_cast<std::size_t>(c) % length));
    return out;
}

/// Builds the baseline for `metric` over `nodes` and the time range [from, to].
///
/// Without a hint: Q1 and Q3 are taken over every reading in the selection and
/// the longest run of timestamps at which every node lies in [Q1, Q3] becomes
/// the window (earliest on ties). If no timestamp qualifies the acceptance band
/// widens to the Tukey fences; if that also fails each node gets a constant
/// baseline at its median. With a hint the hinted window is tiled directly.
inline BaselineSpec auto_baseline(const MonitoringTensor& tensor, std::size_t metric, std::vector<std::size_t> nodes,
                                  std::int64_t from, std::int64_t to,
                                  std::optional<std::pair<std::int64_t, std::int64_t>> hint = std::nullopt) {
    TensorSelection sel;
    sel.nodes = nodes;
    sel.metrics = {metric};
    sel.t_start = from;
    sel.t_end = to;
    const auto [lo, hi] = sel.time_range(tensor);
    require(tensor.dense(), "baseline extraction requires a dense (imputed) tensor");
    const Matrix data = tensor.slice(metric, nodes, lo, hi);
    require(data.size() >= 4, "baseline extraction needs at least 4 readings");

    BaselineSpec spec;
    spec.metric = metric;
    spec.nodes = std::move(nodes);
    spec.range_begin = lo;
    spec.range_end = hi;
    const auto width = static_cast<std::size_t>(data.cols());

    std::vector<double> all(data.data(), data.data() + data.size());
    std::sort(all.begin(), all.end());
    spec.q1 = detail::quantile_sorted(all, 0.25);
    spec.q3 = detail::quantile_sorted(all, 0.75);

    if (hint) {
        require(hint->first <= hint->second, "baseline window start is after its end");
        const auto a = tensor.lower_index(hint->first), b = tensor.upper_index(hint->second);
        require(a >= lo && b <= hi && a < b, "baseline window must lie inside the selected time range");
        spec.origin = BaselineSpec::Origin::User;
        spec.window_start = tensor.timestamps()[a];
        spec.window_end = tensor.timestamps()[b - 1];
        spec.tiled = tile_window(data, a - lo, b - a);
        return spec;
    }

    auto qualifying = [&](double low, double high) {
        std::vector<bool> ok(width, true);
        for (std::size_t t = 0; t < width; ++t)
            for (Eigen::Index r = 0; r < data.rows() && ok[t]; ++r) {
                const double v = data(r, static_cast<Eigen::Index>(t));
                ok[t] = v >= low && v <= high;
            }
        return longest_run(ok);
    };
    auto [begin, length] = qualifying(spec.q1, spec.q3);
    if (length == 0) {
        const double iqr = spec.q3 - spec.q1;
        std::tie(begin, length) = qualifying(spec.q1 - 1.5 * iqr, spec.q3 + 1.5 * iqr);
        spec.widened = true;
    }
    if (length == 0) {
        spec.degenerate = true;
        spec.window_start = tensor.timestamps()[lo];
        spec.window_end = tensor.timestamps()[hi - 1];
        spec.tiled.resize(data.rows(), data.cols());
        for (Eigen::Index r = 0; r < data.rows(); ++r) {
            std::vector<double> row(data.cols());
            for (Eigen::Index c = 0; c < data.cols(); ++c) row[static_cast<std::size_t>(c)] = data(r, c);
            spec.tiled.row(r).setConstant(detail::median(std::move(row)));
        }
        return spec;
    }
    spec.window_start = tensor.timestamps()[lo + begin];
    spec.window_end = tensor.timestamps()[lo + begin + length - 1];
    spec.tiled = tile_window(data, begin, length);
    return spec;
}

}  // namespace nodescope
