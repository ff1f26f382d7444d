// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/umap.hpp"

#include <map>

namespace nodescope {

struct QualityReport {
    double silhouette = 0.0;
    double davies_bouldin = 0.0;
    double davies_bouldin_norm = 0.0;      // filled by normalize_reports
    double calinski_harabasz = 0.0;
    double calinski_harabasz_norm = 0.0;
    double trustworthiness = 0.0;
    double continuity = 0.0;
    int k_neighbors = 15;
};

namespace detail {

inline Matrix pairwise_distances(const Matrix& x) {
    const auto n = x.rows();
    Matrix d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).norm();
    }
    return d;
}

/// Dense relabelling 0..k-1 in order of first appearance of each sorted label.
inline std::vector<int> compact_labels(std::span<const int> labels, int* clusters) {
    std::map<int, int> ids;
    for (int l : labels) ids.emplace(l, 0);
    int next = 0;
    for (auto& [l, id] : ids) id = next++;
    if (clusters) *clusters = next;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = ids[labels[i]];
    return out;
}

/// For each point, the other points ordered by distance (ties by index).
inline std::vector<std::vector<Eigen::Index>> neighbour_order(const Matrix& dist) {
    const auto n = dist.rows();
    std::vector<std::vector<Eigen::Index>> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& o = order[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) o.push_back(j);
        std::stable_sort(o.begin(), o.end(), [&](Eigen::Index a, Eigen::Index b) { return dist(i, a) < dist(i, b); });
    }
    return order;
}

}  // namespace detail

/// Mean silhouette; points in singleton clusters contribute 0.
inline double silhouette_score(const Matrix& x, std::span<const int> labels) {
    int k = 0;
    const auto lab = detail::compact_labels(labels, &k);
    require(k >= 2, "silhouette needs at least 2 clusters");
    const auto n = x.rows();
    require(static_cast<Eigen::Index>(labels.size()) == n, "labels must cover every point");
    const Matrix d = detail::pairwise_distances(x);
    std::vector<double> size(static_cast<std::size_t>(k), 0.0);
    for (int l : lab) size[static_cast<std::size_t>(l)] += 1.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int own = lab[static_cast<std::size_t>(i)];
        if (size[static_cast<std::size_t>(own)] < 2.0) continue;
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        for (Eigen::Index j = 0; j < n; ++j) sum[static_cast<std::size_t>(lab[static_cast<std::size_t>(j)])] += d(i, j);
        const double a = sum[static_cast<std::size_t>(own)] / (size[static_cast<std::size_t>(own)] - 1.0);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c)
            if (c != own) b = std::min(b, sum[static_cast<std::size_t>(c)] / size[static_cast<std::size_t>(c)]);
        const double m = std::max(a, b);
        if (m > 0.0) total += (b - a) / m;
    }
    return total / static_cast<double>(n);
}

inline Matrix cluster_centroids(const Matrix& x, const std::vector<int>& lab, int k, std::vector<double>& size) {
    Matrix c = Matrix::Zero(k, x.cols());
    size.assign(static_cast<std::size_t>(k), 0.0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        c.row(lab[static_cast<std::size_t>(i)]) += x.row(i);
        size[static_cast<std::size_t>(lab[static_cast<std::size_t>(i)])] += 1.0;
    }
    for (int j = 0; j < k; ++j) c.row(j) /= size[static_cast<std::size_t>(j)];
    return c;
}

/// Mean over clusters of the worst (s_i + s_j) / d(c_i, c_j), with s the mean
/// distance of members to their centroid.
inline double davies_bouldin_score(const Matrix& x, std::span<const int> labels) {
    int k = 0;
    const auto lab = detail::compact_labels(labels, &k);
    require(k >= 2, "Davies-Bouldin needs at least 2 clusters");
    std::vector<double> size;
    const Matrix c = cluster_centroids(x, lab, k, size);
    std::vector<double> scatter(static_cast<std::size_t>(k), 0.0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int l = lab[static_cast<std::size_t>(i)];
        scatter[static_cast<std::size_t>(l)] += (x.row(i) - c.row(l)).norm();
    }
    for (int j = 0; j < k; ++j) scatter[static_cast<std::size_t>(j)] /= size[static_cast<std::size_t>(j)];
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
        double worst = 0.0;
        for (int j = 0; j < k; ++j) {
            if (j == i) continue;
            const double dc = (c.row(i) - c.row(j)).norm();
            const double s = scatter[static_cast<std::size_t>(i)] + scatter[static_cast<std::size_t>(j)];
            if (dc > 0.0) worst = std::max(worst, s / dc);  // coincident centroids are skipped
        }
        total += worst;
    }
    return total / k;
}

/// Between/within dispersion ratio scaled by (N - k) / (k - 1).
inline double calinski_harabasz_score(const Matrix& x, std::span<const int> labels) {
    int k = 0;
    const auto lab = detail::compact_labels(labels, &k);
    const auto n = x.rows();
    require(k >= 2 && k < n, "Calinski-Harabasz needs 2 <= clusters < points");
    std::vector<double> size;
    const Matrix c = cluster_centroids(x, lab, k, size);
    const Eigen::RowVectorXd mu = x.colwise().mean();
    double between = 0.0, within = 0.0;
    for (int j = 0; j < k; ++j) between += size[static_cast<std::size_t>(j)] * (c.row(j) - mu).squaredNorm();
    for (Eigen::Index i = 0; i < n; ++i) within += (x.row(i) - c.row(lab[static_cast<std::size_t>(i)])).squaredNorm();
    if (within == 0.0) return 1.0;
    return between * static_cast<double>(n - k) / (within * static_cast<double>(k - 1));
}

/// Rank-penalty neighbourhood preservation of `low` relative to `high`:
/// 1 - 2 / (n k (2n - 3k - 1)) * sum over low-space neighbours missing from
/// the high-space k-NN of (high-space rank - k).
inline double trustworthiness(const Matrix& high, const Matrix& low, int k) {
    const auto n = high.rows();
    require(low.rows() == n, "both spaces must hold the same points");
    require(k >= 1 && 2 * n - 3 * k - 1 > 0, "trustworthiness needs k < (2N - 1) / 3");
    const auto order_h = detail::neighbour_order(detail::pairwise_distances(high));
    const auto order_l = detail::neighbour_order(detail::pairwise_distances(low));
    std::vector<Eigen::Index> rank(static_cast<std::size_t>(n));
    double penalty = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& oh = order_h[static_cast<std::size_t>(i)];
        for (std::size_t r = 0; r < oh.size(); ++r) rank[static_cast<std::size_t>(oh[r])] = static_cast<Eigen::Index>(r + 1);
        const auto& ol = order_l[static_cast<std::size_t>(i)];
        for (int j = 0; j < k; ++j) {
            const auto rk = rank[static_cast<std::size_t>(ol[static_cast<std::size_t>(j)])];
            if (rk > k) penalty += static_cast<double>(rk - k);
        }
    }
    const double nn = static_cast<double>(n), kk = static_cast<double>(k);
    return 1.0 - 2.0 / (nn * kk * (2.0 * nn - 3.0 * kk - 1.0)) * penalty;
}

/// Trustworthiness with the roles of the spaces swapped.
inline double continuity(const Matrix& high, const Matrix& low, int k) { return trustworthiness(low, high, k); }

/// Cluster scores on the embedding, neighbourhood scores between the feature
/// rows and the embedding.
inline QualityReport quality_report(const Matrix& high, const Matrix& low, std::span<const int> labels, int k = 15) {
    require(!labels.empty(), "quality report needs cluster labels");
    require(high.allFinite() && low.allFinite(), "quality report input contains non-finite values");
    QualityReport q;
    q.k_neighbors = k;
    q.silhouette = silhouette_score(low, labels);
    q.davies_bouldin = davies_bouldin_score(low, labels);
    q.calinski_harabasz = calinski_harabasz_score(low, labels);
    q.trustworthiness = trustworthiness(high, low, k);
    q.continuity = continuity(high, low, k);
    return q;
}

inline QualityReport quality_report(const FeatureMatrix& high, const EmbeddingFrame& low, int k = 15) {
    return quality_report(high.values, low.coords, low.labels, k);
}

/// Min-max normalises Davies-Bouldin and Calinski-Harabasz across reports
/// compared together. A single report (or equal values) normalises to 0.
inline void normalize_reports(std::vector<QualityReport>& reports) {
    auto scale = [&](double QualityReport::*raw, double QualityReport::*norm) {
        if (reports.empty()) return;
        double lo = reports.front().*raw, hi = lo;
        for (const auto& r : reports) {
            lo = std::min(lo, r.*raw);
            hi = std::max(hi, r.*raw);
        }
        for (auto& r : reports) r.*norm = hi > lo ? (r.*raw - lo) / (hi - lo) : 0.0;
    };
    scale(&QualityReport::davies_bouldin, &QualityReport::davies_bouldin_norm);
    scale(&QualityReport::calinski_harabasz, &QualityReport::calinski_harabasz_norm);
}

/// Adjusted Rand index between two labelings of the same points.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    require(a.size() == b.size(), "labelings differ in length");
    const auto n = a.size();
    if (n < 2) return 1.0;
    int ka = 0, kb = 0;
    const auto la = detail::compact_labels(a, &ka), lb = detail::compact_labels(b, &kb);
    std::vector<double> table(static_cast<std::size_t>(ka * kb), 0.0), ra(static_cast<std::size_t>(ka), 0.0),
        rb(static_cast<std::size_t>(kb), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        table[static_cast<std::size_t>(la[i] * kb + lb[i])] += 1.0;
        ra[static_cast<std::size_t>(la[i])] += 1.0;
        rb[static_cast<std::size_t>(lb[i])] += 1.0;
    }
    auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (double v : table) index += c2(v);
    for (double v : ra) sa += c2(v);
    for (double v : rb) sb += c2(v);
    const double expected = sa * sb / c2(static_cast<double>(n));
    const double maximum = 0.5 * (sa + sb);
    if (maximum == expected) return 1.0;
    return (index - expected) / (maximum - expected);
}

}  // namespace nodescope
