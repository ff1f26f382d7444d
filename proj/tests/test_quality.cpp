// SPDX-License-Identifier: Apache-2.0
#include "nodescope/nodescope.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace nodescope;

namespace {

// Fixed 20-point set with reference scores computed by scikit-learn.
struct Reference {
    Matrix high{20, 5};
    Matrix low{20, 2};
    std::vector<int> labels;
};

Reference reference() {
    Reference r;
    for (int i = 0; i < 20; ++i) {
        for (int d = 0; d < 5; ++d) r.high(i, d) = std::sin(1.3 * i + 0.7 * d) * (1 + i % 3) + (i / 5) * 2.0;
        r.low(i, 0) = r.high(i, 0) + 0.5 * r.high(i, 1);
        r.low(i, 1) = r.high(i, 2) - r.high(i, 3);
        r.labels.push_back(i / 5);
    }
    return r;
}

Matrix random_points(std::mt19937& rng, int n, int d) {
    std::normal_distribution<double> g;
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    return x;
}

std::vector<int> random_labels(std::mt19937& rng, int n, int k) {
    std::vector<int> lab(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) lab[static_cast<std::size_t>(i)] = i < k ? i : static_cast<int>(rng() % k);
    return lab;
}

}  // namespace

TEST(Quality, MatchesScikitLearnReference) {
    const auto r = reference();
    EXPECT_NEAR(silhouette_score(r.low, r.labels), 0.06960636932443486, 1e-9);
    EXPECT_NEAR(davies_bouldin_score(r.low, r.labels), 1.401716493583626, 1e-9);
    EXPECT_NEAR(calinski_harabasz_score(r.low, r.labels), 12.429394935859541, 1e-9);
    EXPECT_NEAR(trustworthiness(r.high, r.low, 3), 0.8577777777777778, 1e-9);
    EXPECT_NEAR(continuity(r.high, r.low, 3), 0.8566666666666667, 1e-9);
}

TEST(Quality, MatchesBruteForceOracles) {
    std::mt19937 rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 8 + static_cast<int>(rng() % 43);  // 8..50
        const int k = 2 + static_cast<int>(rng() % 4);
        const Matrix high = random_points(rng, n, 6);
        const Matrix low = random_points(rng, n, 2);
        const auto lab = random_labels(rng, n, k);
        EXPECT_NEAR(silhouette_score(low, lab), oracle::silhouette(low, lab), 1e-9);
        EXPECT_NEAR(davies_bouldin_score(low, lab), oracle::davies_bouldin(low, lab), 1e-9);
        EXPECT_NEAR(calinski_harabasz_score(low, lab), oracle::calinski_harabasz(low, lab), 1e-9);
        const int nn = std::min(5, (2 * n - 2) / 3);
        EXPECT_NEAR(trustworthiness(high, low, nn), oracle::trustworthiness(high, low, nn), 1e-9) << "n=" << n;
        EXPECT_NEAR(continuity(high, low, nn), oracle::trustworthiness(low, high, nn), 1e-9);
    }
}

TEST(Quality, IdentityEmbeddingPreservesNeighbourhoods) {
    std::mt19937 rng(5);
    for (int n : {10, 30, 50}) {
        const Matrix x = random_points(rng, n, 3);
        EXPECT_DOUBLE_EQ(trustworthiness(x, x, 5), 1.0);
        EXPECT_DOUBLE_EQ(continuity(x, x, 5), 1.0);
    }
}

TEST(Quality, SeparatedBlobsScoreWell) {
    std::mt19937 rng(2);
    std::normal_distribution<double> g(0.0, 0.1);
    Matrix x(40, 2);
    std::vector<int> lab;
    for (int i = 0; i < 40; ++i) {
        lab.push_back(i / 10);
        x(i, 0) = 10.0 * (i / 10) + g(rng);
        x(i, 1) = g(rng);
    }
    EXPECT_GT(silhouette_score(x, lab), 0.9);
    EXPECT_LT(davies_bouldin_score(x, lab), 0.1);
    EXPECT_GT(calinski_harabasz_score(x, lab), 1e3);
    const auto q = quality_report(x, x, lab, 5);
    EXPECT_DOUBLE_EQ(q.trustworthiness, 1.0);
    EXPECT_EQ(q.k_neighbors, 5);
}

TEST(Quality, SingletonClusterContributesZeroSilhouette) {
    Matrix x(5, 1);
    x << 0, 1, 2, 10, 50;
    const std::vector<int> lab{0, 0, 0, 1, 2};
    EXPECT_NEAR(silhouette_score(x, lab), oracle::silhouette(x, lab), 1e-12);
    EXPECT_THROW(silhouette_score(x, std::vector<int>(5, 0)), PreconditionError);
    EXPECT_THROW(calinski_harabasz_score(x, std::vector<int>{0, 1, 2, 3, 4}), PreconditionError);
    EXPECT_THROW(trustworthiness(x, x, 3), PreconditionError);
}

TEST(Quality, AdjustedRandIndex) {
    const std::vector<int> a{0, 0, 1, 1, 2, 2, 2}, b{1, 1, 0, 0, 0, 2, 2};
    EXPECT_NEAR(adjusted_rand_index(a, b), 0.475, 1e-12);
    EXPECT_DOUBLE_EQ(adjusted_rand_index(a, a), 1.0);
    const std::vector<int> relabeled{5, 5, 3, 3, 9, 9, 9};
    EXPECT_DOUBLE_EQ(adjusted_rand_index(a, relabeled), 1.0);
    EXPECT_NEAR(adjusted_rand_index(a, b), adjusted_rand_index(b, a), 1e-15);
}

TEST(Quality, NormalizedVariantsLieInUnitInterval) {
    std::mt19937 rng(8);
    std::vector<QualityReport> reports;
    for (int i = 0; i < 6; ++i) {
        const Matrix x = random_points(rng, 30, 2);
        reports.push_back(quality_report(x, x, random_labels(rng, 30, 3), 5));
    }
    normalize_reports(reports);
    double lo = 1.0, hi = 0.0;
    for (const auto& r : reports) {
        EXPECT_GE(r.davies_bouldin_norm, 0.0);
        EXPECT_LE(r.davies_bouldin_norm, 1.0);
        EXPECT_GE(r.calinski_harabasz_norm, 0.0);
        EXPECT_LE(r.calinski_harabasz_norm, 1.0);
        lo = std::min(lo, r.calinski_harabasz_norm);
        hi = std::max(hi, r.calinski_harabasz_norm);
    }
    EXPECT_EQ(lo, 0.0);
    EXPECT_EQ(hi, 1.0);

    std::vector<QualityReport> one{reports.front()};
    normalize_reports(one);
    EXPECT_EQ(one[0].davies_bouldin_norm, 0.0);
    EXPECT_EQ(one[0].calinski_harabasz_norm, 0.0);
}

TEST(Synth, SameSeedSameTensor) {
    SynthSpec spec;
    spec.nodes = 30;
    spec.metrics = 4;
    spec.times = 100;
    spec.seed = 11;
    const auto a = synth_generate(spec), b = synth_generate(spec);
    ASSERT_TRUE(a.tensor.dense());
    for (std::size_t n = 0; n < 30; ++n)
        for (std::size_t m = 0; m < 4; ++m)
            for (std::size_t t = 0; t < 100; ++t) EXPECT_EQ(a.tensor.value(n, m, t), b.tensor.value(n, m, t));
    EXPECT_EQ(a.labels, b.labels);
    spec.seed = 12;
    EXPECT_NE(synth_generate(spec).tensor.value(0, 0, 0), a.tensor.value(0, 0, 0));
}

TEST(Synth, NoiselessGroupsAreRecovered) {
    SynthSpec spec;
    spec.nodes = 60;
    spec.metrics = 6;
    spec.times = 128;
    spec.noise = 0.0;
    spec.seed = 4;
    const auto fx = synth_generate(spec);
    const auto f = dr1_time_compress(fx.tensor, TensorSelection::all(fx.tensor));
    const auto e = kmeans(dr2_umap(f, UmapParams{}), 4, 42, 10);
    EXPECT_DOUBLE_EQ(adjusted_rand_index(e.labels, fx.labels), 1.0);
}

TEST(Synth, AnomaliesLandWhereRequested) {
    SynthSpec spec;
    spec.nodes = 10;
    spec.metrics = 3;
    spec.times = 50;
    spec.noise = 0.0;
    spec.seed = 1;
    const auto clean = synth_generate(spec);
    spec.anomalies.push_back({Anomaly::Kind::Spike, {2}, 1, 10, 12, 5.0});
    spec.anomalies.push_back({Anomaly::Kind::NullDowntime, {4, 7}, 0, 20, 29});
    const auto fx = synth_generate(spec);
    for (std::size_t t = 0; t < 50; ++t) {
        const double expect = clean.tensor.value(2, 1, t) + (t >= 10 && t <= 12 ? 5.0 : 0.0);
        EXPECT_DOUBLE_EQ(fx.tensor.value(2, 1, t), expect);
    }
    const auto act = null_activity(fx.tensor, fx.tensor.timestamps().front(), fx.tensor.timestamps().back(), fx.labels);
    std::size_t listed = 0;
    ASSERT_EQ(act.entries.size(), 50u);
    for (std::size_t t = 0; t < act.entries.size(); ++t) {
        const auto& e = act.entries[t];
        ASSERT_EQ(e.timestamp, fx.tensor.timestamps()[t]);
        if (t >= 20 && t <= 29) {
            ASSERT_EQ(e.nodes.size(), 2u);
            EXPECT_EQ(e.nodes[0].node, 4u);
            EXPECT_EQ(e.nodes[1].node, 7u);
            EXPECT_EQ(e.nodes[0].label, fx.labels[4]);
        } else {
            EXPECT_TRUE(e.nodes.empty());
        }
        listed += e.nodes.size();
    }
    EXPECT_EQ(listed, 20u);
}

TEST(Bench, ProducesOneRowPerStageAndPoint) {
    BenchConfig cfg;
    cfg.sweep = {{30, 3}, {40, 3}};
    cfg.times = 48;
    cfg.repetitions = 1;
    const auto rows = bench(cfg);
    ASSERT_EQ(rows.size(), 12u);
    for (const auto& r : rows) {
        EXPECT_GE(r.cold_ms, 0.0);
        EXPECT_GE(r.warm_ms, 0.0);
    }
    EXPECT_EQ(rows[5].stage, "total");
    EXPECT_EQ(rows[6].nodes, 40u);
    std::ostringstream out;
    write_bench_csv(rows, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "stage,N,M,cold_ms,warm_ms");
    std::getline(in, line);
    EXPECT_EQ(line.rfind("ingest,30,3,", 0), 0u);
    BenchConfig bad = cfg;
    bad.repetitions = 0;
    EXPECT_THROW(bench(bad), PreconditionError);
}
