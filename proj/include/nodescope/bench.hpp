// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/pipeline.hpp"
#include "nodescope/synth.hpp"

#include <ostream>

namespace nodescope {

struct BenchPoint {
    std::size_t nodes = 0;
    std::size_t metrics = 0;
};

struct BenchConfig {
    std::vector<BenchPoint> sweep;
    std::size_t times = 256;
    int repetitions = 3;
    std::uint64_t seed = 42;
    AnalysisParams params;  // selection is ignored (whole tensor)
};

/// One row of the timing table; stage "total" sums the others.
struct BenchRow {
    std::string stage;
    std::size_t nodes = 0;
    std::size_t metrics = 0;
    double cold_ms = 0.0;
    double warm_ms = 0.0;
};

/// Cold = first analysis on an empty cache. Warm = the same analysis with a
/// different k-means seed, so ingest, dr1 and dr2 are cache hits and only
/// clustering and contrastive PCA run. Medians over the repetitions; every
/// repetition starts from a fresh cache.
inline std::vector<BenchRow> bench(const BenchConfig& cfg, const std::function<void(const BenchRow&)>& progress = {}) {
    require(cfg.repetitions >= 1, "repetitions must be positive");
    static const std::vector<std::string> stages{"ingest", "dr1", "dr2", "cluster", "ccpca", "total"};
    std::vector<BenchRow> rows;
    for (const auto& pt : cfg.sweep) {
        SynthSpec spec;
        spec.nodes = pt.nodes;
        spec.metrics = pt.metrics;
        spec.times = cfg.times;
        spec.seed = cfg.seed;
        auto fixture = synth_generate(spec);
        std::map<std::string, std::vector<double>> cold, warm;
        for (int rep = 0; rep < cfg.repetitions; ++rep) {
            Engine engine;
            const auto ds = engine.add_dataset(fixture.tensor);
            auto p = cfg.params;
            p.selection = {};
            const auto first = engine.run_analysis("bench", ds, p);
            p.seed += 1;
            const auto second = engine.run_analysis("bench", ds, p);
            for (const auto& r : first.stages) cold[r.stage].push_back(r.ms);
            for (const auto& r : second.stages) warm[r.stage].push_back(r.ms);
            cold["total"].push_back(first.total_ms());
            warm["total"].push_back(second.total_ms());
        }
        for (const auto& s : stages) {
            BenchRow row{s, pt.nodes, pt.metrics, detail::median(cold[s]), detail::median(warm[s])};
            if (progress) progress(row);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
    out << "stage,N,M,cold_ms,warm_ms\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.3f,%.3f", r.cold_ms, r.warm_ms);
        out << r.stage << ',' << r.nodes << ',' << r.metrics << ',' << buf << '\n';
    }
}

}  // namespace nodescope
