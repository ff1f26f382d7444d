// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/dmd.hpp"

namespace nodescope {

struct MrdmdParams {
    int max_level = 4;
    double slow_threshold = 1.0;  // cycles per bin
    int min_bin_snapshots = 16;
    DmdOptions dmd;
};

/// DMD of one time bin at one level.
struct ModeBin {
    int level = 0;
    int index = 0;               // position within its level
    std::size_t begin = 0;       // snapshot range [begin, end)
    std::size_t end = 0;
    double span_seconds = 0.0;   // (end - begin) * dt
    DMDModes modes;
    std::vector<bool> slow;      // per mode
    ComplexVector slow_fit;      // per mode; amplitudes subtracted from the bin, zero for fast modes
    bool leaf = true;
};

struct ModeTree {
    MrdmdParams params;
    double dt = 1.0;
    std::size_t snapshots = 0;
    Eigen::Index channels = 0;
    std::vector<ModeBin> bins;   // depth-first order
    int depth = 0;               // deepest level reached
};

namespace detail {

// Least-squares amplitudes for the slow modes over the whole bin. Each complex
// amplitude b contributes Re(b) Re(phi lambda^t) - Im(b) Im(phi lambda^t), so
// the fit is a real linear problem and the subtracted part is an orthogonal
// projection of the bin: removing it never adds energy.
inline Matrix fit_slow(ModeBin& bin, const std::vector<Eigen::Index>& slow_idx, const Matrix& data) {
    const Eigen::Index rows = data.rows(), cols = data.cols();
    const auto r = static_cast<Eigen::Index>(slow_idx.size());
    Matrix design(rows * cols, 2 * r);
    for (Eigen::Index j = 0; j < r; ++j) {
        const Eigen::Index i = slow_idx[static_cast<std::size_t>(j)];
        ComplexVector col = bin.modes.modes.col(i);
        for (Eigen::Index k = 0; k < cols; ++k) {
            design.block(k * rows, 2 * j, rows, 1) = col.real();
            design.block(k * rows, 2 * j + 1, rows, 1) = -col.imag();
            col *= bin.modes.eigenvalues(i);
        }
    }
    const Eigen::Map<const Vector> target(data.data(), rows * cols);
    const Vector coef = design.completeOrthogonalDecomposition().solve(target);
    for (Eigen::Index j = 0; j < r; ++j)
        bin.slow_fit(slow_idx[static_cast<std::size_t>(j)]) = Complex(coef(2 * j), coef(2 * j + 1));
    const Vector fitted = design * coef;
    return Eigen::Map<const Matrix>(fitted.data(), rows, cols);
}

inline void mrdmd_recurse(ModeTree& tree, const Matrix& data, std::size_t begin, int level, int index) {
    const auto& p = tree.params;
    ModeBin bin;
    bin.level = level;
    bin.index = index;
    bin.begin = begin;
    bin.end = begin + static_cast<std::size_t>(data.cols());
    bin.span_seconds = static_cast<double>(data.cols()) * tree.dt;
    bin.modes = dmd(data, tree.dt, p.dmd);
    const double limit = p.slow_threshold / bin.span_seconds;
    bin.slow.resize(static_cast<std::size_t>(bin.modes.rank));
    DMDModes slow_only;
    std::vector<Eigen::Index> slow_idx;
    for (Eigen::Index i = 0; i < bin.modes.rank; ++i) {
        bin.slow[static_cast<std::size_t>(i)] = bin.modes.frequency(i) <= limit;
        if (bin.slow[static_cast<std::size_t>(i)]) slow_idx.push_back(i);
    }
    bin.slow_fit = ComplexVector::Zero(bin.modes.rank);
    Matrix residual = data;
    if (!slow_idx.empty())
        residual -= fit_slow(bin, slow_idx, data);
    const auto half = data.cols() / 2;
    const bool split = level < p.max_level && half >= p.min_bin_snapshots &&
                       data.cols() - half >= p.min_bin_snapshots;
    bin.leaf = !split;
    tree.depth = std::max(tree.depth, level);
    tree.bins.push_back(std::move(bin));
    if (!split) return;
    mrdmd_recurse(tree, residual.leftCols(half), begin, level + 1, 2 * index);
    mrdmd_recurse(tree, residual.rightCols(data.cols() - half), begin + static_cast<std::size_t>(half), level + 1,
                  2 * index + 1);
}

}  // namespace detail

/// Multi-resolution DMD: at each bin the slow modes (at most `slow_threshold`
/// cycles across the bin) are recorded and subtracted with amplitudes refit
/// over the bin, then the residual is
/// halved and decomposed again until `max_level` or the minimum bin length.
inline ModeTree mrdmd(const Matrix& snapshots, double dt, const MrdmdParams& params = {}) {
    require(params.min_bin_snapshots >= 2, "min_bin_snapshots must be at least 2");
    require(snapshots.cols() >= params.min_bin_snapshots, "mrDMD needs at least min_bin_snapshots snapshots");
    require(params.max_level >= 0, "max_level must be non-negative");
    ModeTree tree;
    tree.params = params;
    tree.dt = dt;
    tree.snapshots = static_cast<std::size_t>(snapshots.cols());
    tree.channels = snapshots.rows();
    detail::mrdmd_recurse(tree, snapshots, 0, 0, 0);
    return tree;
}

/// A mode selected from the tree by band and power.
struct IsolatedMode {
    std::size_t bin = 0;   // index into ModeTree::bins
    Eigen::Index mode = 0;
    int level = 0;
    double frequency = 0.0;
    double power = 0.0;
};

/// Modes that describe the signal: slow modes of every bin plus the fast
/// modes of leaf bins (non-leaf fast content is re-decomposed further down).
inline std::vector<IsolatedMode> flatten_modes(const ModeTree& tree) {
    std::vector<IsolatedMode> out;
    for (std::size_t b = 0; b < tree.bins.size(); ++b) {
        const auto& bin = tree.bins[b];
        for (Eigen::Index i = 0; i < bin.modes.rank; ++i)
            if (bin.slow[static_cast<std::size_t>(i)] || bin.leaf)
                out.push_back({b, i, bin.level, bin.modes.frequency(i), bin.modes.power(i)});
    }
    return out;
}

/// Keeps modes with frequency in [f_lo, f_hi] (cycles/second) whose power is at
/// least the q-quantile of the in-band powers.
inline std::vector<IsolatedMode> isolate_modes(const ModeTree& tree, double f_lo, double f_hi, double q) {
    require(f_lo <= f_hi, "frequency band is inverted");
    require(q >= 0.0 && q < 1.0, "power quantile must lie in [0, 1)");
    std::vector<IsolatedMode> band;
    for (auto& m : flatten_modes(tree))
        if (m.frequency >= f_lo * (1.0 - 1e-12) && m.frequency <= f_hi * (1.0 + 1e-12)) band.push_back(m);
    if (band.empty()) return band;
    std::vector<double> powers;
    powers.reserve(band.size());
    for (const auto& m : band) powers.push_back(m.power);
    const double cut = detail::quantile(powers, q);
    std::vector<IsolatedMode> out;
    for (auto& m : band)
        if (m.power >= cut) out.push_back(m);
    return out;
}

inline double nyquist(double dt) { return 0.5 / dt; }

}  // namespace nodescope
