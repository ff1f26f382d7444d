// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/umap.hpp"

#include <random>

namespace nodescope {

struct KMeansOptions {
    int k = 4;
    std::uint64_t seed = 42;
    int max_iter = 300;
    int n_init = 10;  // independent k-means++ restarts; the lowest inertia wins
};

struct KMeansResult {
    std::vector<int> labels;
    Matrix centroids;
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> inertia_history;  // per Lloyd iteration of the winning run
};

namespace detail {

inline double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

inline Matrix kmeans_pp_seed(const Matrix& x, int k, std::mt19937_64& rng) {
    const auto n = x.rows();
    Matrix c(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    c.row(0) = x.row(first(rng));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(x, i, c, 0);
    for (int j = 1; j < k; ++j) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        Eigen::Index chosen = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            for (Eigen::Index i = 0; i < n; ++i) {
                r -= d2[static_cast<std::size_t>(i)];
                if (r <= 0.0) {
                    chosen = i;
                    break;
                }
                chosen = i;
            }
        } else {
            chosen = first(rng);
        }
        c.row(j) = x.row(chosen);
        for (Eigen::Index i = 0; i < n; ++i)
            d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(x, i, c, j));
    }
    return c;
}

inline KMeansResult lloyd(const Matrix& x, Matrix centroids, int max_iter) {
    const auto n = x.rows();
    const auto k = centroids.rows();
    KMeansResult r;
    r.labels.assign(static_cast<std::size_t>(n), -1);
    auto assign = [&]() {
        bool changed = false;
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < k; ++j) {
                const double d = sq_dist(x, i, centroids, j);
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(j);
                }
            }
            inertia += bd;
            if (r.labels[static_cast<std::size_t>(i)] != best) {
                r.labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        r.inertia = inertia;
        return changed;
    };
    assign();
    r.inertia_history.push_back(r.inertia);
    for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
        Matrix sums = Matrix::Zero(k, x.cols());
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(r.labels[static_cast<std::size_t>(i)]) += x.row(i);
            ++counts[static_cast<std::size_t>(r.labels[static_cast<std::size_t>(i)])];
        }
        std::vector<char> taken(static_cast<std::size_t>(n), 0);
        for (Eigen::Index j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0) {
                centroids.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
                continue;
            }
            // Empty cluster: reseed at the point farthest from its own centroid.
            Eigen::Index far = -1;
            double fd = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (taken[static_cast<std::size_t>(i)]) continue;
                const double d = sq_dist(x, i, centroids, r.labels[static_cast<std::size_t>(i)]);
                if (d > fd) {
                    fd = d;
                    far = i;
                }
            }
            taken[static_cast<std::size_t>(far)] = 1;
            centroids.row(j) = x.row(far);
        }
        const bool changed = assign();
        r.inertia_history.push_back(r.inertia);
        if (!changed) break;
    }
    r.iterations = std::min(r.iterations, max_iter);
    r.centroids = std::move(centroids);
    return r;
}

}  // namespace detail

/// Relabels clusters by descending size; equal sizes are ordered by their
/// smallest member index.
inline void canonical_relabel(KMeansResult& r) {
    const auto k = static_cast<std::size_t>(r.centroids.rows());
    std::vector<std::size_t> size(k, 0), first(k, std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        const auto l = static_cast<std::size_t>(r.labels[i]);
        ++size[l];
        first[l] = std::min(first[l], i);
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (size[a] != size[b]) return size[a] > size[b];
        return first[a] < first[b];
    });
    std::vector<int> remap(k);
    Matrix c(r.centroids.rows(), r.centroids.cols());
    for (std::size_t newl = 0; newl < k; ++newl) {
        remap[order[newl]] = static_cast<int>(newl);
        c.row(static_cast<Eigen::Index>(newl)) = r.centroids.row(static_cast<Eigen::Index>(order[newl]));
    }
    for (auto& l : r.labels) l = remap[static_cast<std::size_t>(l)];
    r.centroids = std::move(c);
}

/// Lloyd's algorithm with k-means++ seeding; labels are canonicalised.
inline KMeansResult kmeans(const Matrix& points, const KMeansOptions& opt) {
    require(opt.k >= 1, "k must be positive");
    require(points.rows() >= opt.k, "k must not exceed the number of points");
    require(points.allFinite(), "k-means input contains non-finite coordinates");
    std::mt19937_64 rng(opt.seed);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int run = 0; run < std::max(1, opt.n_init); ++run) {
        auto r = detail::lloyd(points, detail::kmeans_pp_seed(points, opt.k, rng), opt.max_iter);
        if (r.inertia < best.inertia) best = std::move(r);
    }
    canonical_relabel(best);
    return best;
}

inline EmbeddingFrame kmeans(EmbeddingFrame frame, int k, std::uint64_t seed, int n_init = 10) {
    auto r = kmeans(frame.coords, KMeansOptions{k, seed, 300, n_init});
    frame.labels = std::move(r.labels);
    frame.centroids = std::move(r.centroids);
    return frame;
}

}  // namespace nodescope
