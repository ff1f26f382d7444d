// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/tensor.hpp"

#include <random>

namespace nodescope {

/// Temporal template of one behaviour group: per metric a level, a linear
/// trend over the whole range, and one oscillation.
struct GroupTemplate {
    std::vector<double> level;
    std::vector<double> trend;      // total change from first to last sample
    std::vector<double> amplitude;
    std::vector<double> period;     // samples
    std::vector<double> phase;      // radians
};

struct Anomaly {
    enum class Kind { Spike, FrequencyBurst, NullDowntime };

    Kind kind = Kind::FrequencyBurst;
    std::vector<std::size_t> nodes;
    std::size_t metric = 0;         // ignored by NullDowntime (all metrics)
    std::size_t t_begin = 0;        // time indices, inclusive
    std::size_t t_end = 0;
    double amplitude = 1.0;
    double period = 8.0;            // samples, FrequencyBurst only
};

struct SynthSpec {
    std::size_t nodes = 200;
    std::size_t metrics = 31;
    std::size_t times = 2000;
    std::size_t groups = 4;
    std::vector<GroupTemplate> templates;  // generated from the seed when empty
    double separation = 3.0;   // spread of generated group levels
    double noise = 0.1;        // Gaussian sd added per reading
    std::vector<Anomaly> anomalies;
    std::uint64_t seed = 42;
    std::int64_t start = 1'700'000'000;
    std::int64_t interval = 15;
};

struct SynthResult {
    MonitoringTensor tensor;
    std::vector<int> labels;  // ground-truth group per node
};

/// Random but well separated group templates.
inline std::vector<GroupTemplate> generate_templates(std::size_t groups, std::size_t metrics, std::size_t times,
                                                     double separation, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<GroupTemplate> out(groups);
    for (auto& g : out) {
        for (std::size_t m = 0; m < metrics; ++m) {
            g.level.push_back(separation * gauss(rng));
            g.trend.push_back(0.5 * separation * gauss(rng));
            g.amplitude.push_back(0.25 + 0.75 * unit(rng));
            g.period.push_back(std::max(32.0, static_cast<double>(times) * (0.1 + 0.4 * unit(rng))));
            g.phase.push_back(2.0 * M_PI * unit(rng));
        }
    }
    return out;
}

/// Deterministic fixture: node n belongs to group n * groups / nodes. The
/// same seed reproduces the same tensor bit for bit.
inline SynthResult synth_generate(const SynthSpec& spec) {
    require(spec.groups >= 1 && spec.groups <= spec.nodes, "group count must lie in [1, N]");
    require(spec.metrics >= 1 && spec.times >= 2, "synthetic tensor needs M >= 1 and T >= 2");
    require(spec.interval > 0, "sample interval must be positive");
    std::mt19937_64 rng(spec.seed);
    auto templates = spec.templates;
    if (templates.empty()) templates = generate_templates(spec.groups, spec.metrics, spec.times, spec.separation, rng);
    require(templates.size() == spec.groups, "one template per group is required");
    for (const auto& g : templates)
        require(g.level.size() == spec.metrics && g.trend.size() == spec.metrics && g.amplitude.size() == spec.metrics &&
                    g.period.size() == spec.metrics && g.phase.size() == spec.metrics,
                "template vectors must have one entry per metric");

    std::vector<std::string> node_ids, metric_names;
    for (std::size_t n = 0; n < spec.nodes; ++n) node_ids.push_back("node" + std::to_string(n));
    for (std::size_t m = 0; m < spec.metrics; ++m) metric_names.push_back("metric" + std::to_string(m));
    std::vector<std::int64_t> ts(spec.times);
    for (std::size_t t = 0; t < spec.times; ++t) ts[t] = spec.start + static_cast<std::int64_t>(t) * spec.interval;

    SynthResult out{MonitoringTensor(std::move(node_ids), std::move(metric_names), std::move(ts),
                                     static_cast<double>(spec.interval)),
                    std::vector<int>(spec.nodes)};
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double span = static_cast<double>(spec.times - 1);
    for (std::size_t n = 0; n < spec.nodes; ++n) {
        const auto g = n * spec.groups / spec.nodes;
        out.labels[n] = static_cast<int>(g);
        const auto& tpl = templates[g];
        for (std::size_t m = 0; m < spec.metrics; ++m) {
            auto s = out.tensor.series(n, m);
            auto mask = out.tensor.series_mask(n, m);
            const double w = 2.0 * M_PI / tpl.period[m];
            for (std::size_t t = 0; t < spec.times; ++t) {
                const double x = static_cast<double>(t);
                s[t] = tpl.level[m] + tpl.trend[m] * x / span + tpl.amplitude[m] * std::sin(w * x + tpl.phase[m]) +
                       spec.noise * gauss(rng);
                mask[t] = 0;
            }
        }
    }
    for (const auto& a : spec.anomalies) {
        require(a.t_begin <= a.t_end && a.t_end < spec.times, "anomaly time range is outside the tensor");
        for (auto n : a.nodes) require(n < spec.nodes, "anomaly node out of range");
        if (a.kind != Anomaly::Kind::NullDowntime) require(a.metric < spec.metrics, "anomaly metric out of range");
        for (auto n : a.nodes) {
            switch (a.kind) {
            case Anomaly::Kind::Spike: {
                auto s = out.tensor.series(n, a.metric);
                for (std::size_t t = a.t_begin; t <= a.t_end; ++t) s[t] += a.amplitude;
                break;
            }
            case Anomaly::Kind::FrequencyBurst: {
                require(a.period > 0.0, "burst period must be positive");
                auto s = out.tensor.series(n, a.metric);
                for (std::size_t t = a.t_begin; t <= a.t_end; ++t)
                    s[t] += a.amplitude * std::sin(2.0 * M_PI * static_cast<double>(t - a.t_begin) / a.period);
                break;
            }
            case Anomaly::Kind::NullDowntime:
                for (std::size_t m = 0; m < spec.metrics; ++m)
                    for (std::size_t t = a.t_begin; t <= a.t_end; ++t) out.tensor.set_null(n, m, t);
                break;
            }
        }
    }
    return out;
}

}  // namespace nodescope
