// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/baseline.hpp"
#include "nodescope/mrdmd.hpp"

#include <map>
#include <optional>

namespace nodescope {

/// Metric x node deviation scores against baseline mode signatures.
struct ZScoreMatrix {
    std::vector<std::size_t> metrics;  // rows (tensor metric indices)
    std::vector<std::size_t> nodes;    // columns (tensor node indices)
    Matrix z;
    std::vector<BaselineSpec> baselines;  // one per row, tiles dropped
    std::map<std::size_t, std::vector<std::string>> flags;  // metric -> flags
};

inline std::size_t approx_bytes(const ZScoreMatrix& z) {
    return sizeof(ZScoreMatrix) + static_cast<std::size_t>(z.z.size()) * sizeof(double) +
           (z.metrics.size() + z.nodes.size()) * sizeof(std::size_t) + z.baselines.size() * sizeof(BaselineSpec);
}

struct ZScoreOptions {
    std::optional<std::pair<double, double>> band;  // cycles/second; default [0, Nyquist]
    double power_quantile = 0.5;
    MrdmdParams mrdmd;
};

/// Per-node signature sum_i P_i |phi_i[n]| over the selected modes.
inline Vector node_signature(const ModeTree& tree, const std::vector<IsolatedMode>& modes) {
    Vector s = Vector::Zero(tree.channels);
    for (const auto& m : modes) {
        const auto& phi = tree.bins[m.bin].modes.modes.col(m.mode);
        s += m.power * phi.cwiseAbs();
    }
    return s;
}

struct MetricScore {
    Vector z;
    std::vector<std::string> flags;
};

/// Scores one data matrix (nodes x T) against its baseline of identical shape.
inline MetricScore score_against_baseline(const Matrix& data, const Matrix& baseline, double dt,
                                          const ZScoreOptions& opt) {
    require(data.rows() == baseline.rows() && data.cols() == baseline.cols(),
            "baseline shape must match the data matrix");
    MetricScore out;
    const double f_nyq = nyquist(dt);
    auto [f_lo, f_hi] = opt.band.value_or(std::make_pair(0.0, f_nyq));
    const auto tree_d = mrdmd(data, dt, opt.mrdmd);
    const auto tree_b = mrdmd(baseline, dt, opt.mrdmd);
    auto modes_d = isolate_modes(tree_d, f_lo, f_hi, opt.power_quantile);
    auto modes_b = isolate_modes(tree_b, f_lo, f_hi, opt.power_quantile);
    if (modes_d.empty() || modes_b.empty()) {
        out.flags.emplace_back("band_widened");
        modes_d = isolate_modes(tree_d, 0.0, f_nyq, opt.power_quantile);
        modes_b = isolate_modes(tree_b, 0.0, f_nyq, opt.power_quantile);
    }
    const Vector sd = node_signature(tree_d, modes_d);
    const Vector sb = node_signature(tree_b, modes_b);
    const double mu = sb.mean();
    const double sigma = std::sqrt((sb.array() - mu).square().mean());
    const double floor = 1e-9 * std::max(1.0, mu);
    if (sigma < floor) out.flags.emplace_back("sigma_floored");
    out.z = (sd.array() - mu) / std::max(sigma, floor);
    return out;
}

/// z-scores per selected metric and node. `baselines` maps tensor metric index
/// to its baseline; every selected metric needs one, covering the selection's
/// nodes and time range.
inline ZScoreMatrix zscores(const MonitoringTensor& tensor, const TensorSelection& selection,
                            const std::map<std::size_t, BaselineSpec>& baselines, const ZScoreOptions& opt = {}) {
    require(tensor.dense(), "z-scores require a dense (imputed) tensor");
    const auto [lo, hi] = selection.time_range(tensor);
    ZScoreMatrix out;
    out.metrics = selection.metrics;
    out.nodes = selection.nodes;
    out.z.resize(static_cast<Eigen::Index>(out.metrics.size()), static_cast<Eigen::Index>(out.nodes.size()));
    for (std::size_t row = 0; row < out.metrics.size(); ++row) {
        const auto metric = out.metrics[row];
        auto it = baselines.find(metric);
        require(it != baselines.end(), "no baseline for metric '" + tensor.metric_names()[metric] + "'");
        const BaselineSpec& base = it->second;
        require(base.nodes == selection.nodes && base.range_begin == lo && base.range_end == hi,
                "baseline does not cover the selection for metric '" + tensor.metric_names()[metric] + "'");
        const Matrix data = tensor.slice(metric, selection.nodes, lo, hi);
        auto score = score_against_baseline(data, base.tiled, tensor.sample_interval(), opt);
        out.z.row(static_cast<Eigen::Index>(row)) = score.z.transpose();
        if (base.degenerate) score.flags.emplace_back("degenerate_baseline");
        if (base.widened) score.flags.emplace_back("baseline_widened");
        if (!score.flags.empty()) out.flags[metric] = std::move(score.flags);
        BaselineSpec meta = base;
        meta.tiled.resize(0, 0);
        out.baselines.push_back(std::move(meta));
    }
    return out;
}

}  // namespace nodescope
