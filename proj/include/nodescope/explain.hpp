// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/dr1.hpp"

#include <map>
#include <optional>

namespace nodescope {

struct ClusterContribution {
    int cluster = 0;
    double alpha = 0.0;
    Vector weights;             // unit length over metrics
    double score = 0.0;         // Var_target / Var_background at the chosen alpha
    bool mean_difference = false;  // fallback for single-member targets
};

struct ContributionSet {
    std::vector<std::size_t> metrics;  // tensor metric indices, weight order
    std::vector<ClusterContribution> clusters;
    std::vector<std::size_t> ranking;  // positions into `metrics`, most important first
};

inline std::size_t approx_bytes(const ContributionSet& c) {
    return sizeof(ContributionSet) + c.clusters.size() * (sizeof(ClusterContribution) + c.metrics.size() * sizeof(double)) +
           2 * c.metrics.size() * sizeof(std::size_t);
}

struct CcpcaOptions {
    bool standardize = false;   // z-score feature columns before contrasting
    double min_target_share = 0.05;
    double epsilon = 1e-12;
    std::vector<double> alphas;  // empty = {0} plus 61 log-spaced values in [1e-3, 1e3]

    std::vector<double> alpha_grid() const {
        if (!alphas.empty()) return alphas;
        std::vector<double> g{0.0};
        for (int i = 0; i <= 60; ++i) g.push_back(std::pow(10.0, -3.0 + 6.0 * i / 60.0));
        return g;
    }
};

namespace detail {

struct Moments {
    Vector sum;
    Matrix scatter;  // sum of x x^T
    double count = 0.0;

    explicit Moments(Eigen::Index dim) : sum(Vector::Zero(dim)), scatter(Matrix::Zero(dim, dim)) {}

    Vector mean() const { return count > 0 ? Vector(sum / count) : Vector(Vector::Zero(sum.size())); }
    /// Sample covariance (n - 1 denominator); zero for fewer than two rows.
    Matrix covariance() const {
        if (count < 2.0) return Matrix::Zero(sum.size(), sum.size());
        return (scatter - sum * sum.transpose() / count) / (count - 1.0);
    }
};

/// Number of eigenvalues of the symmetric tridiagonal (d, e) below x.
inline Eigen::Index sturm_count(const Vector& d, const Vector& e, double x) {
    Eigen::Index count = 0;
    double q = d(0) - x;
    if (q < 0.0) ++count;
    for (Eigen::Index i = 1; i < d.size(); ++i) {
        if (q == 0.0) q = std::numeric_limits<double>::epsilon() * (std::abs(e(i - 1)) + 1e-300);
        q = d(i) - x - e(i - 1) * e(i - 1) / q;
        if (q < 0.0) ++count;
    }
    return count;
}

/// Largest eigenpair of a symmetric matrix: Householder tridiagonalisation,
/// Laguerre on det(T - xI) from above the spectrum for the eigenvalue
/// (monotone for a real-rooted polynomial, bisection if that stalls), then
/// inverse iteration shifted just above it (the shifted matrix is negative
/// definite, so the unpivoted elimination is stable). Much cheaper than a full
/// decomposition when only one eigenvector is needed. `upper` is an optional
/// bound on the largest eigenvalue; a wrong one is detected and ignored.
inline Vector top_eigenpair(const Matrix& sym, double* eigenvalue = nullptr, std::optional<double> upper = {}) {
    const auto n = sym.rows();
    if (n <= 2) return top_eigenvector(sym, eigenvalue);
    Eigen::Tridiagonalization<Matrix> tri(sym);
    const Vector d = tri.diagonal();
    const Vector e = tri.subDiagonal();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = (i > 0 ? std::abs(e(i - 1)) : 0.0) + (i + 1 < n ? std::abs(e(i)) : 0.0);
        lo = std::min(lo, d(i) - r);
        hi = std::max(hi, d(i) + r);
    }
    const double scale = std::max({std::abs(lo), std::abs(hi), std::numeric_limits<double>::min()});
    const double tol = 4.0 * std::numeric_limits<double>::epsilon() * scale;
    if (upper && *upper + 2.0 * tol < hi && *upper + 2.0 * tol > lo && sturm_count(d, e, *upper + 2.0 * tol) == n)
        hi = *upper + 2.0 * tol;
    const double start = hi;

    const double dim = static_cast<double>(n);
    for (int it = 0; it < 100; ++it) {
        // pivots q_i of T - x I and their x-derivatives; g = (log p)', h = -(log p)''
        double q = d(0) - hi, dq = -1.0, ddq = 0.0;
        if (q == 0.0) break;
        double g = dq / q, h = g * g;
        for (Eigen::Index i = 1; i < n && q != 0.0; ++i) {
            const double e2 = e(i - 1) * e(i - 1);
            const double next_ddq = e2 * (ddq / (q * q) - 2.0 * dq * dq / (q * q * q));
            dq = -1.0 + e2 * dq / (q * q);
            ddq = next_ddq;
            q = d(i) - hi - e2 / q;
            g += dq / q;
            h += (dq / q) * (dq / q) - ddq / q;
        }
        if (q == 0.0 || !(g > 0.0) || !std::isfinite(h)) break;
        const double step = dim / (g + std::sqrt(std::max(0.0, (dim - 1.0) * (dim * h - g * g))));
        if (!(step > tol)) break;
        hi -= step;
    }
    if (hi + tol <= start && sturm_count(d, e, hi + tol) == n && sturm_count(d, e, hi - 2.0 * tol) < n) {
        lo = hi - 2.0 * tol;
        hi += tol;
    } else {
        hi = start;  // not bracketed: plain bisection
    }
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (sturm_count(d, e, mid) == n) hi = mid;
        else lo = mid;
    }
    if (eigenvalue) *eigenvalue = hi;
    const double mu = hi + 1e-12 * scale;
    Vector y = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
    Vector diag(n), rhs(n);
    for (int it = 0; it < 3; ++it) {
        diag = d.array() - mu;
        rhs = y;
        for (Eigen::Index i = 1; i < n; ++i) {
            const double m = e(i - 1) / diag(i - 1);
            diag(i) -= m * e(i - 1);
            rhs(i) -= m * rhs(i - 1);
        }
        y(n - 1) = rhs(n - 1) / diag(n - 1);
        for (Eigen::Index i = n - 2; i >= 0; --i) y(i) = (rhs(i) - e(i) * y(i + 1)) / diag(i);
        y.normalize();
    }
    return tri.matrixQ() * y;
}

}  // namespace detail

/// Top eigenvector of Cov(target) - alpha * Cov(background). `upper` optionally
/// bounds the top eigenvalue, e.g. lambda_max(Ct) - alpha * lambda_min(Cb).
inline Vector contrastive_direction(const Matrix& cov_target, const Matrix& cov_background, double alpha,
                                    std::optional<double> upper = {}) {
    return detail::top_eigenpair(cov_target - alpha * cov_background, nullptr, upper);
}

/// One-vs-rest contrastive PCA: one signed, unit-norm weight vector per cluster.
///
/// Alpha is chosen from a fixed grid by maximising Var_t(v) / (Var_b(v) + eps)
/// among directions that keep at least `min_target_share` of the target's own
/// first-component variance; ties go to the smaller alpha. Weights are
/// oriented so the target's mean projection is not below the background's.
inline ContributionSet ccpca_contributions(const FeatureMatrix& features, std::span<const int> labels,
                                           const CcpcaOptions& opt = {}) {
    const auto n = features.values.rows();
    const auto m = features.values.cols();
    require(static_cast<Eigen::Index>(labels.size()) == n, "labels must cover every feature row");
    require(features.values.allFinite(), "feature matrix contains non-finite values");
    require(m >= 1, "no metrics to contrast");

    Matrix x = features.values;
    if (opt.standardize) {
        const Vector mu = x.colwise().mean().transpose();
        x.rowwise() -= mu.transpose();
        for (Eigen::Index c = 0; c < m; ++c) {
            const double sd = std::sqrt(x.col(c).squaredNorm() / static_cast<double>(n));
            if (sd > 0.0) x.col(c) /= sd;
        }
    }

    std::map<int, detail::Moments> groups;
    detail::Moments all(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int l = labels[static_cast<std::size_t>(i)];
        require(l >= 0, "every row needs a cluster label");
        auto it = groups.try_emplace(l, m).first;
        const Vector row = x.row(i).transpose();
        it->second.sum += row;
        it->second.scatter.noalias() += row * row.transpose();
        it->second.count += 1.0;
    }
    require(groups.size() >= 2, "contrastive analysis needs at least 2 clusters");
    for (const auto& [l, g] : groups) {
        all.sum += g.sum;
        all.scatter += g.scatter;
        all.count += g.count;
    }

    ContributionSet out;
    out.metrics = features.metrics;
    const auto grid = opt.alpha_grid();
    for (const auto& [label, target] : groups) {
        detail::Moments background(m);
        background.sum = all.sum - target.sum;
        background.scatter = all.scatter - target.scatter;
        background.count = all.count - target.count;
        const Vector mean_gap = target.mean() - background.mean();

        ClusterContribution cc;
        cc.cluster = label;
        if (target.count < 2.0) {
            cc.mean_difference = true;
            cc.weights = mean_gap;
            if (cc.weights.norm() == 0.0) cc.weights = Vector::Unit(m, 0);
            cc.weights.normalize();
            out.clusters.push_back(std::move(cc));
            continue;
        }
        const Matrix ct = target.covariance();
        const Matrix cb = background.covariance();
        double own_var = 0.0;
        detail::top_eigenvector(ct, &own_var);
        const double floor_var = opt.min_target_share * own_var;
        const double cb_min = Eigen::SelfAdjointEigenSolver<Matrix>(cb, Eigen::EigenvaluesOnly).eigenvalues()(0);

        double best_score = -1.0;
        for (double alpha : grid) {
            Vector v = contrastive_direction(ct, cb, alpha, own_var - alpha * cb_min);
            const double vt = v.dot(ct * v);
            if (alpha != 0.0 && vt < floor_var) continue;
            const double vb = v.dot(cb * v);
            const double score = vt / (vb + opt.epsilon);
            if (score > best_score || (score == best_score && alpha < cc.alpha)) {
                best_score = score;
                cc.alpha = alpha;
                cc.weights = std::move(v);
            }
        }
        cc.score = best_score;
        cc.weights.normalize();
        out.clusters.push_back(std::move(cc));
    }
    for (auto& cc : out.clusters) {
        const auto& target = groups.at(cc.cluster);
        const Vector gap = target.mean() - (all.sum - target.sum) / std::max(1.0, all.count - target.count);
        if (cc.weights.dot(gap) < 0.0) cc.weights = -cc.weights;
    }

    out.ranking.resize(static_cast<std::size_t>(m));
    std::iota(out.ranking.begin(), out.ranking.end(), std::size_t{0});
    std::vector<double> importance(static_cast<std::size_t>(m), 0.0);
    for (const auto& cc : out.clusters)
        for (Eigen::Index j = 0; j < m; ++j)
            importance[static_cast<std::size_t>(j)] = std::max(importance[static_cast<std::size_t>(j)], std::abs(cc.weights(j)));
    std::stable_sort(out.ranking.begin(), out.ranking.end(),
                     [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
    return out;
}

/// Cluster-average polyline for one metric.
struct ClusterSeries {
    int cluster = 0;
    std::size_t metric = 0;
    std::vector<std::int64_t> times;
    std::vector<double> mean_values;
    int smooth_window = 1;
    std::vector<std::size_t> carried;  // time positions where every member was null
};

/// max(1, round(T / 200)).
inline int default_smooth_window(std::size_t t) {
    return std::max(1, static_cast<int>(std::lround(static_cast<double>(t) / 200.0)));
}

/// Centered moving average; the window shrinks at the series edges.
inline std::vector<double> centered_moving_average(const std::vector<double>& v, int window) {
    if (window <= 1 || v.empty()) return v;
    const auto n = static_cast<std::ptrdiff_t>(v.size());
    const std::ptrdiff_t left = (window - 1) / 2, right = window / 2;
    std::vector<double> prefix(v.size() + 1, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) prefix[i + 1] = prefix[i] + v[i];
    std::vector<double> out(v.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto lo = std::max<std::ptrdiff_t>(0, i - left);
        const auto hi = std::min<std::ptrdiff_t>(n - 1, i + right);
        out[static_cast<std::size_t>(i)] =
            (prefix[static_cast<std::size_t>(hi + 1)] - prefix[static_cast<std::size_t>(lo)]) / static_cast<double>(hi - lo + 1);
    }
    return out;
}

/// Per-cluster mean of non-null member readings for `metric`, smoothed.
/// `labels[n]` is the cluster of tensor node n (negative = unassigned).
inline std::vector<ClusterSeries> cluster_average_series(const MonitoringTensor& tensor, std::span<const int> labels,
                                                         std::size_t metric, int smooth_window,
                                                         std::int64_t from = std::numeric_limits<std::int64_t>::min(),
                                                         std::int64_t to = std::numeric_limits<std::int64_t>::max()) {
    require(metric < tensor.metrics(), "metric index out of range");
    require(labels.size() == tensor.nodes(), "labels must cover every node");
    require(smooth_window >= 1, "smoothing window must be positive");
    const auto lo = tensor.lower_index(from), hi = tensor.upper_index(to);
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t n = 0; n < labels.size(); ++n)
        if (labels[n] >= 0) members[labels[n]].push_back(n);

    std::vector<ClusterSeries> out;
    for (const auto& [cluster, nodes] : members) {
        ClusterSeries s;
        s.cluster = cluster;
        s.metric = metric;
        s.smooth_window = smooth_window;
        std::vector<double> means;
        double previous = 0.0;
        for (std::size_t t = lo; t < hi; ++t) {
            double sum = 0.0;
            std::size_t count = 0;
            for (auto n : nodes)
                if (!tensor.is_null(n, metric, t)) {
                    sum += tensor.value(n, metric, t);
                    ++count;
                }
            if (count == 0) {
                s.carried.push_back(t - lo);
            } else {
                previous = sum / static_cast<double>(count);
            }
            means.push_back(previous);
            s.times.push_back(tensor.timestamps()[t]);
        }
        // Leading all-null stretch has no previous mean: take the first observed one.
        std::size_t lead = 0;
        while (lead < s.carried.size() && s.carried[lead] == lead) ++lead;
        if (lead > 0 && lead < means.size())
            std::fill(means.begin(), means.begin() + static_cast<std::ptrdiff_t>(lead), means[lead]);
        s.mean_values = centered_moving_average(means, smooth_window);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace nodescope
