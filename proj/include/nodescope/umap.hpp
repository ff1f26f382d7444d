// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/dr1.hpp"

#include <Eigen/Sparse>

#include <atomic>
#include <functional>
#include <queue>
#include <random>

namespace nodescope {

struct UmapParams {
    int n_neighbors = 15;
    double min_dist = 0.1;
    int n_components = 2;
    std::uint64_t seed = 42;
    int n_epochs = 0;  // 0 = 500 when N <= 10000, else 200
    double spread = 1.0;
    double learning_rate = 1.0;
    double repulsion_strength = 1.0;
    int negative_sample_rate = 5;
    std::size_t exact_knn_max = 5000;      // above this, k-NN uses NN-descent
    std::size_t spectral_init_max = 2000;  // above this, layout starts from random
};

/// 2-D node map plus optional k-means assignment.
struct EmbeddingFrame {
    std::vector<std::size_t> nodes;  // tensor node indices, row order of coords
    Matrix coords;                   // N x n_components
    UmapParams params;
    double a = 0.0, b = 0.0;         // fitted curve parameters
    std::vector<int> labels;         // empty until clustered
    Matrix centroids;                // k x n_components
    bool spectral_init = false;
};

inline std::size_t approx_bytes(const EmbeddingFrame& e) {
    return sizeof(EmbeddingFrame) + static_cast<std::size_t>(e.coords.size() + e.centroids.size()) * sizeof(double) +
           e.labels.size() * sizeof(int) + e.nodes.size() * sizeof(std::size_t);
}

namespace umap {

/// k nearest neighbours per row, nearest first; the point itself is entry 0.
struct KnnGraph {
    std::vector<std::vector<std::size_t>> indices;
    std::vector<std::vector<double>> distances;
};

inline KnnGraph knn_exact(const Matrix& x, int k) {
    const auto n = static_cast<std::size_t>(x.rows());
    KnnGraph g;
    g.indices.resize(n);
    g.distances.resize(n);
    std::vector<std::pair<double, std::size_t>> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            row[j] = {i == j ? -1.0 : (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm(), j};
        std::partial_sort(row.begin(), row.begin() + k, row.end());
        for (int r = 0; r < k; ++r) {
            g.indices[i].push_back(row[static_cast<std::size_t>(r)].second);
            g.distances[i].push_back(std::max(0.0, row[static_cast<std::size_t>(r)].first));
        }
    }
    return g;
}

/// Approximate k-NN by neighbour-of-neighbour refinement (NN-descent).
inline KnnGraph knn_descent(const Matrix& x, int k, std::uint64_t seed, int max_iters = 12, double delta = 0.001) {
    const auto n = static_cast<std::size_t>(x.rows());
    const auto kk = static_cast<std::size_t>(k - 1);  // neighbours excluding self
    auto dist = [&](std::size_t i, std::size_t j) {
        return (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
    };
    struct Cand {
        double d;
        std::size_t j;
        bool fresh;
    };
    std::vector<std::vector<Cand>> heaps(n);  // sorted ascending, size kk
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    auto insert = [&](std::size_t i, std::size_t j, double d) {
        if (i == j) return false;
        auto& h = heaps[i];
        if (h.size() >= kk && d >= h.back().d) return false;
        for (const auto& c : h)
            if (c.j == j) return false;
        auto pos = std::upper_bound(h.begin(), h.end(), d, [](double v, const Cand& c) { return v < c.d; });
        h.insert(pos, Cand{d, j, true});
        if (h.size() > kk) h.pop_back();
        return true;
    };
    for (std::size_t i = 0; i < n; ++i)
        while (heaps[i].size() < kk) {
            const auto j = pick(rng);
            insert(i, j, dist(i, j));
        }
    for (int it = 0; it < max_iters; ++it) {
        std::vector<std::vector<std::size_t>> fresh(n), old(n);
        for (std::size_t i = 0; i < n; ++i)
            for (auto& c : heaps[i]) {
                if (c.fresh) {
                    fresh[i].push_back(c.j);
                    fresh[c.j].push_back(i);
                    c.fresh = false;
                } else {
                    old[i].push_back(c.j);
                    old[c.j].push_back(i);
                }
            }
        std::size_t updates = 0;
        for (std::size_t v = 0; v < n; ++v) {
            auto& fv = fresh[v];
            auto& ov = old[v];
            std::sort(fv.begin(), fv.end());
            fv.erase(std::unique(fv.begin(), fv.end()), fv.end());
            std::sort(ov.begin(), ov.end());
            ov.erase(std::unique(ov.begin(), ov.end()), ov.end());
            for (std::size_t a = 0; a < fv.size(); ++a) {
                for (std::size_t b = a + 1; b < fv.size(); ++b) {
                    const double d = dist(fv[a], fv[b]);
                    updates += insert(fv[a], fv[b], d);
                    updates += insert(fv[b], fv[a], d);
                }
                for (auto u : ov) {
                    if (u == fv[a]) continue;
                    const double d = dist(fv[a], u);
                    updates += insert(fv[a], u, d);
                    updates += insert(u, fv[a], d);
                }
            }
        }
        if (static_cast<double>(updates) <= delta * static_cast<double>(n * kk)) break;
    }
    KnnGraph g;
    g.indices.resize(n);
    g.distances.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        g.indices[i].push_back(i);
        g.distances[i].push_back(0.0);
        for (const auto& c : heaps[i]) {
            g.indices[i].push_back(c.j);
            g.distances[i].push_back(c.d);
        }
    }
    return g;
}

struct Smoothing {
    std::vector<double> sigmas;
    std::vector<double> rhos;
};

/// Per-point bandwidths: sigma_i is bisected so that the membership weights of
/// the k-1 non-self neighbours sum to log2(k); rho_i is the nearest non-zero distance.
inline Smoothing smooth_knn_dist(const KnnGraph& knn, int k, int n_iter = 64) {
    constexpr double tolerance = 1e-5;
    constexpr double min_k_dist_scale = 1e-3;
    const auto n = knn.distances.size();
    const double target = std::log2(static_cast<double>(k));
    double mean_all = 0.0;
    std::size_t count = 0;
    for (const auto& row : knn.distances)
        for (double d : row) {
            mean_all += d;
            ++count;
        }
    mean_all /= static_cast<double>(std::max<std::size_t>(count, 1));

    Smoothing s{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = knn.distances[i];
        double rho = 0.0;
        for (double d : row)
            if (d > 0.0) {
                rho = d;
                break;
            }
        s.rhos[i] = rho;
        double lo = 0.0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
        for (int it = 0; it < n_iter; ++it) {
            double psum = 0.0;
            for (std::size_t j = 1; j < row.size(); ++j) {
                const double d = row[j] - rho;
                psum += d > 0.0 ? std::exp(-d / mid) : 1.0;
            }
            if (std::abs(psum - target) < tolerance) break;
            if (psum > target) {
                hi = mid;
                mid = 0.5 * (lo + hi);
            } else {
                lo = mid;
                mid = std::isinf(hi) ? mid * 2.0 : 0.5 * (lo + hi);
            }
        }
        if (rho > 0.0) {
            const double mean_i = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
            mid = std::max(mid, min_k_dist_scale * mean_i);
        } else {
            mid = std::max(mid, min_k_dist_scale * mean_all);
        }
        s.sigmas[i] = mid;
    }
    return s;
}

using SparseGraph = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Fuzzy union of the directed membership graph: w = a + a^T - a * a^T.
inline SparseGraph fuzzy_simplicial_set(const KnnGraph& knn, const Smoothing& s) {
    const auto n = static_cast<Eigen::Index>(knn.indices.size());
    std::vector<Eigen::Triplet<double>> trips;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        for (std::size_t r = 0; r < knn.indices[ui].size(); ++r) {
            const auto j = knn.indices[ui][r];
            if (j == ui) continue;
            const double d = knn.distances[ui][r] - s.rhos[ui];
            const double w = (d <= 0.0 || s.sigmas[ui] == 0.0) ? 1.0 : std::exp(-d / s.sigmas[ui]);
            trips.emplace_back(i, static_cast<Eigen::Index>(j), w);
        }
    }
    SparseGraph a(n, n);
    a.setFromTriplets(trips.begin(), trips.end());
    SparseGraph at = a.transpose();
    SparseGraph prod = a.cwiseProduct(at);
    SparseGraph w = a + at - prod;
    w.prune(0.0);
    return w;
}

/// Least-squares fit of 1 / (1 + a x^(2b)) to the offset-exponential target
/// curve on 300 points in [0, 3 * spread] (Levenberg-Marquardt from a = b = 1).
inline std::pair<double, double> find_ab_params(double spread, double min_dist) {
    constexpr int samples = 300;
    std::vector<double> xs(samples), ys(samples);
    for (int i = 0; i < samples; ++i) {
        xs[static_cast<std::size_t>(i)] = 3.0 * spread * i / (samples - 1);
        const double x = xs[static_cast<std::size_t>(i)];
        ys[static_cast<std::size_t>(i)] = x < min_dist ? 1.0 : std::exp(-(x - min_dist) / spread);
    }
    auto residuals = [&](double a, double b, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(samples);
        if (jac) jac->resize(samples, 2);
        for (int i = 0; i < samples; ++i) {
            const double x = xs[static_cast<std::size_t>(i)];
            const double p = x > 0.0 ? std::pow(x, 2.0 * b) : 0.0;
            const double den = 1.0 + a * p;
            r(i) = 1.0 / den - ys[static_cast<std::size_t>(i)];
            if (jac) {
                (*jac)(i, 0) = -p / (den * den);
                (*jac)(i, 1) = x > 0.0 ? -a * p * 2.0 * std::log(x) / (den * den) : 0.0;
            }
        }
    };
    double a = 1.0, b = 1.0, lambda = 1e-3;
    Eigen::VectorXd r, r_try;
    Eigen::MatrixXd jac;
    residuals(a, b, r, &jac);
    double cost = r.squaredNorm();
    for (int it = 0; it < 500; ++it) {
        const Eigen::Matrix2d jtj = jac.transpose() * jac;
        const Eigen::Vector2d g = jac.transpose() * r;
        Eigen::Matrix2d damped = jtj;
        damped.diagonal() += lambda * jtj.diagonal();
        const Eigen::Vector2d step = damped.ldlt().solve(-g);
        residuals(a + step(0), b + step(1), r_try, nullptr);
        const double cost_try = r_try.squaredNorm();
        if (cost_try < cost) {
            a += step(0);
            b += step(1);
            const double rel = (cost - cost_try) / std::max(cost, 1e-300);
            cost = cost_try;
            residuals(a, b, r, &jac);
            lambda = std::max(lambda / 10.0, 1e-15);
            if (rel < 1e-15 && step.norm() < 1e-12 * (std::abs(a) + std::abs(b))) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
    }
    return {a, b};
}

inline std::size_t connected_components(const SparseGraph& g) {
    const auto n = static_cast<std::size_t>(g.rows());
    std::vector<int> comp(n, -1);
    std::size_t count = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (comp[s] >= 0) continue;
        comp[s] = static_cast<int>(count);
        stack.push_back(s);
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (SparseGraph::InnerIterator it(g, static_cast<Eigen::Index>(v)); it; ++it) {
                const auto u = static_cast<std::size_t>(it.col());
                if (comp[u] < 0) {
                    comp[u] = static_cast<int>(count);
                    stack.push_back(u);
                }
            }
        }
        ++count;
    }
    return count;
}

/// Laplacian-eigenmap initialisation from the symmetric normalised Laplacian.
inline Matrix spectral_layout(const SparseGraph& g, int dim) {
    const auto n = g.rows();
    Vector deg = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (SparseGraph::InnerIterator it(g, i); it; ++it) deg(i) += it.value();
    Matrix lap = Matrix::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (SparseGraph::InnerIterator it(g, i); it; ++it)
            lap(i, it.col()) -= it.value() / std::sqrt(deg(i) * deg(it.col()));
    Eigen::SelfAdjointEigenSolver<Matrix> es(lap);
    return es.eigenvectors().middleCols(1, dim);
}

/// Stochastic gradient descent on the fuzzy set cross-entropy with negative
/// sampling. Single-threaded, deterministic for a fixed seed.
inline void optimize_layout(Matrix& emb, const std::vector<std::size_t>& head, const std::vector<std::size_t>& tail,
                            const std::vector<double>& epochs_per_sample, int n_epochs, double a, double b,
                            const UmapParams& p, std::mt19937_64& rng,
                            const std::function<bool()>& cancelled = {}) {
    const auto n = static_cast<std::size_t>(emb.rows());
    const auto dim = emb.cols();
    const double gamma = p.repulsion_strength;
    auto clip = [](double v) { return std::clamp(v, -4.0, 4.0); };
    std::vector<double> per_negative(epochs_per_sample.size());
    for (std::size_t i = 0; i < per_negative.size(); ++i)
        per_negative[i] = epochs_per_sample[i] / p.negative_sample_rate;
    std::vector<double> next_negative = per_negative;
    std::vector<double> next_sample = epochs_per_sample;
    std::uniform_int_distribution<std::size_t> vertex(0, n - 1);
    double alpha = p.learning_rate;
    // Row-major scratch copy for cache-friendly updates.
    std::vector<double> y(n * static_cast<std::size_t>(dim));
    for (std::size_t i = 0; i < n; ++i)
        for (Eigen::Index d = 0; d < dim; ++d) y[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)] = emb(static_cast<Eigen::Index>(i), d);
    const auto ud = static_cast<std::size_t>(dim);

    for (int epoch = 0; epoch < n_epochs; ++epoch) {
        if (cancelled && cancelled()) throw CancelledError();
        for (std::size_t e = 0; e < head.size(); ++e) {
            if (next_sample[e] > epoch) continue;
            const auto j = head[e], k = tail[e];
            double* cur = &y[j * ud];
            double* oth = &y[k * ud];
            double d2 = 0.0;
            for (std::size_t d = 0; d < ud; ++d) d2 += (cur[d] - oth[d]) * (cur[d] - oth[d]);
            double coeff = 0.0;
            if (d2 > 0.0) coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
            for (std::size_t d = 0; d < ud; ++d) {
                const double g = clip(coeff * (cur[d] - oth[d]));
                cur[d] += g * alpha;
                oth[d] -= g * alpha;
            }
            next_sample[e] += epochs_per_sample[e];

            const auto n_neg = static_cast<int>((epoch - next_negative[e]) / per_negative[e]);
            for (int s = 0; s < n_neg; ++s) {
                const auto r = vertex(rng);
                oth = &y[r * ud];
                d2 = 0.0;
                for (std::size_t d = 0; d < ud; ++d) d2 += (cur[d] - oth[d]) * (cur[d] - oth[d]);
                if (d2 > 0.0) {
                    coeff = 2.0 * gamma * b / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0));
                } else if (r == j) {
                    continue;
                } else {
                    coeff = 0.0;
                }
                for (std::size_t d = 0; d < ud; ++d) {
                    const double g = coeff > 0.0 ? clip(coeff * (cur[d] - oth[d])) : 4.0;
                    cur[d] += g * alpha;
                }
            }
            next_negative[e] += n_neg * per_negative[e];
        }
        alpha = p.learning_rate * (1.0 - static_cast<double>(epoch) / static_cast<double>(n_epochs));
    }
    for (std::size_t i = 0; i < n; ++i)
        for (Eigen::Index d = 0; d < dim; ++d) emb(static_cast<Eigen::Index>(i), d) = y[i * ud + static_cast<std::size_t>(d)];
}

}  // namespace umap

/// Phase 2: embeds the feature rows into `params.n_components` dimensions.
inline EmbeddingFrame dr2_umap(const FeatureMatrix& features, const UmapParams& params = {},
                               const std::function<bool()>& cancelled = {}) {
    const auto n = static_cast<std::size_t>(features.values.rows());
    require(features.values.cols() >= 1, "UMAP needs at least one metric column");
    require(params.n_neighbors >= 2, "n_neighbors must be at least 2");
    require(n > static_cast<std::size_t>(params.n_neighbors),
            "UMAP needs more nodes (" + std::to_string(n) + ") than n_neighbors (" +
                std::to_string(params.n_neighbors) + "); reduce n_neighbors");
    require(features.values.allFinite(), "feature matrix contains NaN or infinite values");
    require(params.n_components >= 1, "n_components must be positive");
    require(params.min_dist >= 0.0 && params.min_dist <= params.spread, "min_dist must lie in [0, spread]");

    const Matrix& x = features.values;
    const auto knn = n <= params.exact_knn_max ? umap::knn_exact(x, params.n_neighbors)
                                               : umap::knn_descent(x, params.n_neighbors, params.seed);
    const auto smoothing = umap::smooth_knn_dist(knn, params.n_neighbors);
    auto graph = umap::fuzzy_simplicial_set(knn, smoothing);

    const int n_epochs = params.n_epochs > 0 ? params.n_epochs : (n <= 10000 ? 500 : 200);
    double wmax = 0.0;
    for (Eigen::Index i = 0; i < graph.outerSize(); ++i)
        for (umap::SparseGraph::InnerIterator it(graph, i); it; ++it) wmax = std::max(wmax, it.value());
    const double cutoff = wmax / n_epochs;

    std::vector<std::size_t> head, tail;
    std::vector<double> weights;
    for (Eigen::Index i = 0; i < graph.outerSize(); ++i)
        for (umap::SparseGraph::InnerIterator it(graph, i); it; ++it) {
            if (it.value() < cutoff) continue;
            head.push_back(static_cast<std::size_t>(i));
            tail.push_back(static_cast<std::size_t>(it.col()));
            weights.push_back(it.value());
        }
    std::vector<double> epochs_per_sample(weights.size());
    for (std::size_t e = 0; e < weights.size(); ++e)
        epochs_per_sample[e] = static_cast<double>(n_epochs) / (n_epochs * weights[e] / wmax);

    std::mt19937_64 rng(params.seed);
    const auto dim = params.n_components;
    Matrix emb;
    EmbeddingFrame frame;
    if (n <= params.spectral_init_max && umap::connected_components(graph) == 1) {
        emb = umap::spectral_layout(graph, dim);
        const double expansion = 10.0 / emb.cwiseAbs().maxCoeff();
        std::normal_distribution<double> noise(0.0, 1e-4);
        emb *= expansion;
        for (Eigen::Index i = 0; i < emb.size(); ++i) emb.data()[i] += noise(rng);
        frame.spectral_init = true;
    } else {
        std::uniform_real_distribution<double> uni(-10.0, 10.0);
        emb.resize(static_cast<Eigen::Index>(n), dim);
        for (Eigen::Index i = 0; i < emb.rows(); ++i)
            for (Eigen::Index d = 0; d < dim; ++d) emb(i, d) = uni(rng);
    }
    for (Eigen::Index d = 0; d < dim; ++d) {
        const double lo = emb.col(d).minCoeff(), hi = emb.col(d).maxCoeff();
        if (hi > lo) emb.col(d) = (10.0 * (emb.col(d).array() - lo) / (hi - lo)).matrix();
    }
    const auto [a, b] = umap::find_ab_params(params.spread, params.min_dist);
    umap::optimize_layout(emb, head, tail, epochs_per_sample, n_epochs, a, b, params, rng, cancelled);

    frame.nodes = features.nodes;
    frame.coords = std::move(emb);
    frame.params = params;
    frame.a = a;
    frame.b = b;
    return frame;
}

}  // namespace nodescope
