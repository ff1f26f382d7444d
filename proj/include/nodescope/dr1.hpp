// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/tensor.hpp"

#include <Eigen/Eigenvalues>

namespace nodescope {

/// Per-node, per-metric temporal-variation scores (rows = nodes, cols = metrics).
struct FeatureMatrix {
    std::vector<std::size_t> nodes;    // tensor node indices
    std::vector<std::size_t> metrics;  // tensor metric indices
    Matrix values;                     // nodes x metrics
    std::vector<Vector> loadings;      // one unit vector of length T per metric
    std::vector<std::size_t> zero_variance;  // metric positions whose slice had no variance
    std::int64_t t_start = 0;
    std::int64_t t_end = 0;
};

namespace detail {

/// Top eigenvector of a symmetric matrix (eigenvalues ascending in Eigen).
inline Vector top_eigenvector(const Matrix& sym, double* eigenvalue = nullptr) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    const auto last = sym.rows() - 1;
    if (eigenvalue) *eigenvalue = es.eigenvalues()(last);
    return es.eigenvectors().col(last);
}

}  // namespace detail

struct Pc1Result {
    Vector scores;   // one per row
    Vector loading;  // unit, length = cols
    bool zero_variance = false;
};

/// First principal component of `slice` (rows = samples, cols = timestamps).
///
/// Columns are centered across rows. The loading is oriented so that its inner
/// product with the column-mean profile (taken before centering, minus its own
/// time average so a constant offset cannot flip the sign) is non-negative;
/// when that product vanishes the largest-magnitude entry is made positive.
inline Pc1Result first_component(Matrix slice, bool normalize) {
    const auto rows = slice.rows(), cols = slice.cols();
    require(cols >= 2, "phase-1 PCA needs at least 2 timestamps");
    require(rows >= 2, "phase-1 PCA needs at least 2 nodes");
    if (normalize) {
        const double mu = slice.mean();
        const double sd = std::sqrt((slice.array() - mu).square().mean());
        if (sd > 0.0) slice = ((slice.array() - mu) / sd).matrix();
        else slice.setZero();
    }
    Vector profile = slice.colwise().mean().transpose();
    slice.rowwise() -= profile.transpose();
    profile.array() -= profile.mean();

    Pc1Result out;
    const double scale = std::max(1.0, profile.norm() + slice.norm());
    if (slice.norm() <= 1e-12 * scale) {
        out.scores = Vector::Zero(rows);
        out.loading = Vector::Constant(cols, 1.0 / std::sqrt(static_cast<double>(cols)));
        out.zero_variance = true;
        return out;
    }
    Vector loading;
    if (rows <= cols) {
        // Gram route: the top eigenvector of X X^T maps to the loading through X^T.
        const Matrix gram = slice * slice.transpose();
        loading = slice.transpose() * detail::top_eigenvector(gram);
    } else {
        const Matrix cov = slice.transpose() * slice;
        loading = detail::top_eigenvector(cov);
    }
    loading.normalize();

    const double ip = loading.dot(profile);
    const double tol = 1e-9 * (profile.norm() + slice.norm() / std::sqrt(static_cast<double>(rows)));
    if (std::abs(ip) > tol) {
        if (ip < 0) loading = -loading;
    } else {
        Eigen::Index arg = 0;
        loading.cwiseAbs().maxCoeff(&arg);
        if (loading(arg) < 0) loading = -loading;
    }
    out.loading = loading;
    out.scores = slice * loading;
    return out;
}

/// Phase 1 of the two-phase reduction: compresses each metric's node x time
/// slice to one score per node.
inline FeatureMatrix dr1_time_compress(const MonitoringTensor& tensor, const TensorSelection& selection,
                                       bool normalize = true) {
    require(tensor.dense(), "phase-1 PCA requires a dense (imputed) tensor");
    const auto [t0, t1] = selection.time_range(tensor);
    require(t1 - t0 >= 2, "phase-1 PCA needs at least 2 timestamps (T < 2)");
    require(selection.nodes.size() >= 2, "phase-1 PCA needs at least 2 nodes");

    FeatureMatrix fm;
    fm.nodes = selection.nodes;
    fm.metrics = selection.metrics;
    fm.t_start = tensor.timestamps()[t0];
    fm.t_end = tensor.timestamps()[t1 - 1];
    fm.values.resize(static_cast<Eigen::Index>(fm.nodes.size()), static_cast<Eigen::Index>(fm.metrics.size()));
    fm.loadings.reserve(fm.metrics.size());
    for (std::size_t j = 0; j < fm.metrics.size(); ++j) {
        auto pc = first_component(tensor.slice(fm.metrics[j], fm.nodes, t0, t1), normalize);
        fm.values.col(static_cast<Eigen::Index>(j)) = pc.scores;
        fm.loadings.push_back(std::move(pc.loading));
        if (pc.zero_variance) fm.zero_variance.push_back(j);
    }
    return fm;
}

inline std::size_t approx_bytes(const FeatureMatrix& f) {
    std::size_t b = sizeof(FeatureMatrix) + static_cast<std::size_t>(f.values.size()) * sizeof(double);
    for (const auto& l : f.loadings) b += static_cast<std::size_t>(l.size()) * sizeof(double);
    return b + (f.nodes.size() + f.metrics.size()) * sizeof(std::size_t);
}

}  // namespace nodescope
