// SPDX-License-Identifier: Apache-2.0
#include "nodescope/nodescope.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace nodescope;

namespace {

MonitoringTensor tensor_from(const std::vector<Matrix>& per_metric, std::int64_t interval = 15) {
    const auto n = per_metric.front().rows(), t = per_metric.front().cols();
    std::vector<std::string> nodes, metrics;
    for (Eigen::Index i = 0; i < n; ++i) nodes.push_back("n" + std::to_string(i));
    for (std::size_t m = 0; m < per_metric.size(); ++m) metrics.push_back("m" + std::to_string(m));
    std::vector<std::int64_t> ts;
    for (Eigen::Index i = 0; i < t; ++i) ts.push_back(i * interval);
    MonitoringTensor x(nodes, metrics, ts);
    for (std::size_t m = 0; m < per_metric.size(); ++m)
        for (Eigen::Index a = 0; a < n; ++a)
            for (Eigen::Index b = 0; b < t; ++b)
                x.set(static_cast<std::size_t>(a), m, static_cast<std::size_t>(b), per_metric[m](a, b));
    return x;
}

std::vector<std::size_t> all_nodes(const MonitoringTensor& x) {
    std::vector<std::size_t> v(x.nodes());
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

// Channels mixing a slow and a fast sinusoid with per-channel phases.
Matrix two_tone(Eigen::Index s, Eigen::Index t, double slow_cycles, double fast_cycles, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
    Matrix x(s, t);
    for (Eigen::Index c = 0; c < s; ++c) {
        const double p1 = u(rng), p2 = u(rng);
        for (Eigen::Index k = 0; k < t; ++k) {
            const double tt = static_cast<double>(k) / static_cast<double>(t);
            x(c, k) = 3.0 * std::sin(2.0 * M_PI * slow_cycles * tt + p1) + std::sin(2.0 * M_PI * fast_cycles * tt + p2);
        }
    }
    return x;
}

// numpy-style linear-interpolation quantile
double np_quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

TEST(Dmd, RecoversRankTwoEigenvalues) {
    std::mt19937 rng(2);
    std::normal_distribution<double> g;
    Matrix basis(6, 2), p(2, 2);
    for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = g(rng);
    p << 1.0, 0.4, -0.3, 1.0;
    const Matrix a = p * Eigen::Vector2d(0.9, 0.5).asDiagonal() * p.inverse();
    Matrix x(6, 40);
    Eigen::Vector2d z(1.0, 1.0);
    for (int t = 0; t < 40; ++t) {
        x.col(t) = basis * z;
        z = a * z;
    }
    const auto m = dmd(x, 1.0);
    ASSERT_EQ(m.rank, 2);
    std::vector<double> lam{m.eigenvalues(0).real(), m.eigenvalues(1).real()};
    std::sort(lam.begin(), lam.end());
    EXPECT_NEAR(lam[0], 0.5, 1e-9);
    EXPECT_NEAR(lam[1], 0.9, 1e-9);
    EXPECT_NEAR(std::abs(m.eigenvalues(0).imag()) + std::abs(m.eigenvalues(1).imag()), 0.0, 1e-9);
}

TEST(Dmd, RecoversDampedOscillationRate) {
    const Complex omega(-0.1, 2.0 * M_PI * 0.05);
    std::mt19937 rng(5);
    std::normal_distribution<double> g;
    ComplexVector phi(8);
    for (int i = 0; i < 8; ++i) phi(i) = Complex(g(rng), g(rng));
    for (double dt : {1.0, 0.5}) {
        Matrix x(8, 80);
        for (int t = 0; t < 80; ++t)
            for (int i = 0; i < 8; ++i) x(i, t) = (phi(i) * std::exp(omega * (t * dt))).real();
        const auto m = dmd(x, dt);
        ASSERT_EQ(m.rank, 2);
        for (int i = 0; i < 2; ++i) {
            EXPECT_NEAR(m.omegas(i).real(), -0.1, 1e-6);
            EXPECT_NEAR(std::abs(m.omegas(i).imag()), 2.0 * M_PI * 0.05, 1e-6);
            EXPECT_NEAR(m.frequency(i), 0.05, 1e-6);
        }
    }
}

TEST(Dmd, ConstantAndZeroInputs) {
    Matrix c(5, 30);
    for (int i = 0; i < 5; ++i) c.row(i).setConstant(i + 1.0);
    const auto m = dmd(c, 15.0);
    ASSERT_EQ(m.rank, 1);
    EXPECT_NEAR(std::abs(m.eigenvalues(0) - Complex(1.0, 0.0)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(m.omegas(0)), 0.0, 1e-12);
    EXPECT_NEAR(m.modes.col(0).norm(), 1.0, 1e-12);

    const auto z = dmd(Matrix::Zero(4, 20), 1.0);
    EXPECT_EQ(z.rank, 0);
    EXPECT_EQ(z.modes.cols(), 0);

    EXPECT_THROW(dmd(Matrix::Zero(3, 1), 1.0), PreconditionError);
    EXPECT_THROW(dmd(Matrix::Ones(3, 5), 0.0), PreconditionError);
}

TEST(Dmd, ReconstructsLinearData) {
    std::mt19937 rng(11);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 5; ++trial) {
        // random stable 4-dimensional linear system observed through 10 channels
        Matrix a(4, 4), basis(10, 4);
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
        for (Eigen::Index i = 0; i < basis.size(); ++i) basis.data()[i] = g(rng);
        Eigen::EigenSolver<Matrix> es(a);
        a /= 1.05 * es.eigenvalues().cwiseAbs().maxCoeff();
        Matrix x(10, 60);
        Vector z = Vector::Ones(4);
        for (int t = 0; t < 60; ++t) {
            x.col(t) = basis * z;
            z = a * z;
        }
        DmdOptions opt;
        opt.rank = 4;
        const auto m = dmd(x, 1.0, opt);
        const Matrix r = dmd_reconstruct(m, 10, 60);
        EXPECT_LE((r - x).norm() / x.norm(), 1e-6) << "trial " << trial;
    }
}

TEST(Dmd, RankCappedByEnergyAndLimits) {
    std::mt19937 rng(1);
    std::normal_distribution<double> g;
    Matrix noise(3, 200);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = g(rng);
    EXPECT_LE(dmd(noise, 1.0).rank, 3);
    Matrix wide(100, 10);
    for (Eigen::Index i = 0; i < wide.size(); ++i) wide.data()[i] = g(rng);
    EXPECT_LE(dmd(wide, 1.0).rank, 9);
}

TEST(Mrdmd, SlowRampLivesAtLevelZero) {
    // offset plus slow exponential growth: two real, zero-frequency modes
    Matrix x(6, 512);
    for (int c = 0; c < 6; ++c)
        for (int t = 0; t < 512; ++t) x(c, t) = (c + 1.0) + (0.5 * c - 1.0) * std::exp(1.5 * t / 512.0);
    const auto tree = mrdmd(x, 15.0);
    double level0 = 0.0, deeper = 0.0;
    for (const auto& bin : tree.bins)
        for (Eigen::Index i = 0; i < bin.modes.rank; ++i) (bin.level == 0 ? level0 : deeper) += bin.modes.power(i);
    ASSERT_GT(level0, 0.0);
    EXPECT_LE(deeper, 1e-6 * level0);
    for (bool s : tree.bins.front().slow) EXPECT_TRUE(s);
}

TEST(Mrdmd, TwoTonePartition) {
    const Eigen::Index t = 1024;
    const double dt = 2.0;
    const Matrix x = two_tone(8, t, 0.5, 32.0, 3);
    const auto tree = mrdmd(x, dt);
    EXPECT_EQ(tree.depth, 4);
    const double f_slow = 0.5 / (t * dt), f_fast = 32.0 / (t * dt);
    const auto& root = tree.bins.front();
    bool slow_found = false;
    for (Eigen::Index i = 0; i < root.modes.rank; ++i)
        if (root.slow[static_cast<std::size_t>(i)]) {
            EXPECT_NEAR(root.modes.frequency(i), f_slow, 0.05 * f_fast);
            slow_found = true;
        }
    EXPECT_TRUE(slow_found);
    // the fast tone never counts as slow under four levels (it needs 2^5 bins)
    bool leaf_fast = false;
    for (const auto& bin : tree.bins)
        for (Eigen::Index i = 0; i < bin.modes.rank; ++i) {
            const double f = bin.modes.frequency(i);
            const bool near_fast = std::abs(f - f_fast) < 0.1 * f_fast;
            if (near_fast) EXPECT_FALSE(bin.slow[static_cast<std::size_t>(i)]) << "level " << bin.level;
            if (near_fast && bin.leaf && bin.modes.power(i) > 1e-3) leaf_fast = true;
        }
    EXPECT_TRUE(leaf_fast);

    // a band around the fast tone keeps only fast-tone modes
    const auto fast = isolate_modes(tree, 0.8 * f_fast, 1.2 * f_fast, 0.0);
    ASSERT_FALSE(fast.empty());
    for (const auto& m : fast) EXPECT_NEAR(m.frequency, f_fast, 0.2 * f_fast);
}

TEST(Mrdmd, BinsTileEachLevel) {
    for (Eigen::Index t : {64, 100, 777, 1000}) {
        const Matrix x = two_tone(4, t, 1.0, 9.0, 7);
        MrdmdParams p;
        p.min_bin_snapshots = 16;
        const auto tree = mrdmd(x, 1.0, p);
        std::map<int, std::vector<std::pair<std::size_t, std::size_t>>> levels;
        for (const auto& b : tree.bins) levels[b.level].emplace_back(b.begin, b.end);
        // leaves plus every level's bins cover the range without gaps or overlap
        for (auto& [level, spans] : levels) {
            std::sort(spans.begin(), spans.end());
            for (std::size_t i = 1; i < spans.size(); ++i) EXPECT_EQ(spans[i].first, spans[i - 1].second);
            if (level == 0) EXPECT_EQ(spans.front(), (std::pair<std::size_t, std::size_t>{0, static_cast<std::size_t>(t)}));
        }
        std::vector<std::pair<std::size_t, std::size_t>> leaves;
        for (const auto& b : tree.bins) {
            if (b.leaf) leaves.emplace_back(b.begin, b.end);
            EXPECT_GE(b.end - b.begin, 16u);
            EXPECT_LE(b.level, 4);
        }
        std::sort(leaves.begin(), leaves.end());
        EXPECT_EQ(leaves.front().first, 0u);
        EXPECT_EQ(leaves.back().second, static_cast<std::size_t>(t));
        for (std::size_t i = 1; i < leaves.size(); ++i) EXPECT_EQ(leaves[i].first, leaves[i - 1].second);
    }
}

TEST(Mrdmd, SlowRemovalDoesNotAddEnergy) {
    std::mt19937 rng(9);
    std::normal_distribution<double> g;
    for (unsigned seed = 0; seed < 5; ++seed) {
        Matrix x = two_tone(6, 512, 0.5 + seed, 20.0 + 3 * seed, seed);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += 0.05 * g(rng);
        const auto tree = mrdmd(x, 1.0);
        // Replay the recursion: each bin's data is its parent's residual half.
        std::size_t next = 0;
        std::function<void(const Matrix&)> walk = [&](const Matrix& data) {
            const auto& bin = tree.bins[next++];
            ASSERT_EQ(static_cast<Eigen::Index>(bin.end - bin.begin), data.cols());
            DMDModes slow;
            std::vector<Eigen::Index> idx;
            for (Eigen::Index i = 0; i < bin.modes.rank; ++i)
                if (bin.slow[static_cast<std::size_t>(i)]) idx.push_back(i);
            Matrix residual = data;
            if (!idx.empty()) {
                const auto r = static_cast<Eigen::Index>(idx.size());
                slow.rank = static_cast<int>(r);
                slow.modes.resize(data.rows(), r);
                slow.eigenvalues.resize(r);
                slow.amplitudes.resize(r);
                for (Eigen::Index j = 0; j < r; ++j) {
                    slow.modes.col(j) = bin.modes.modes.col(idx[static_cast<std::size_t>(j)]);
                    slow.eigenvalues(j) = bin.modes.eigenvalues(idx[static_cast<std::size_t>(j)]);
                    slow.amplitudes(j) = bin.slow_fit(idx[static_cast<std::size_t>(j)]);
                }
                residual -= dmd_reconstruct(slow, data.rows(), data.cols());
            }
            EXPECT_LE(residual.squaredNorm(), data.squaredNorm() * (1.0 + 1e-9)) << "bin level " << bin.level;
            for (Eigen::Index i = 0; i < bin.modes.rank; ++i)
                if (!bin.slow[static_cast<std::size_t>(i)]) EXPECT_EQ(bin.slow_fit(i), Complex(0.0, 0.0));
            if (bin.leaf) return;
            const auto half = data.cols() / 2;
            walk(residual.leftCols(half));
            walk(residual.rightCols(data.cols() - half));
        };
        walk(x);
        EXPECT_EQ(next, tree.bins.size());
    }
}

TEST(Mrdmd, ZeroMatrixGivesEmptyModeSets) {
    const auto tree = mrdmd(Matrix::Zero(5, 128), 1.0);
    EXPECT_FALSE(tree.bins.empty());
    for (const auto& b : tree.bins) EXPECT_EQ(b.modes.rank, 0);
    EXPECT_TRUE(flatten_modes(tree).empty());
    EXPECT_TRUE(isolate_modes(tree, 0.0, 0.5, 0.5).empty());
    EXPECT_THROW(mrdmd(Matrix::Zero(5, 10), 1.0), PreconditionError);
}

TEST(IsolateModes, FullBandQuantileZeroKeepsEverything) {
    const auto tree = mrdmd(two_tone(6, 512, 1.0, 12.0, 4), 1.0);
    EXPECT_EQ(isolate_modes(tree, 0.0, nyquist(1.0), 0.0).size(), flatten_modes(tree).size());
    EXPECT_THROW(isolate_modes(tree, 0.3, 0.1, 0.5), PreconditionError);
    EXPECT_THROW(isolate_modes(tree, 0.0, 0.5, 1.0), PreconditionError);
}

TEST(IsolateModes, EqualPowersAllSurviveHighQuantile) {
    ModeTree tree;
    tree.channels = 3;
    ModeBin bin;
    bin.modes.rank = 10;
    bin.modes.eigenvalues = ComplexVector::Ones(10);
    bin.modes.omegas = ComplexVector::Zero(10);
    bin.modes.amplitudes = ComplexVector::Constant(10, Complex(0.6, 0.8));
    bin.modes.modes = ComplexMatrix::Identity(3, 10);
    bin.slow.assign(10, true);
    tree.bins.push_back(bin);
    EXPECT_EQ(isolate_modes(tree, 0.0, 1.0, 0.9).size(), 10u);
    // one weaker mode drops out at q = 0.5
    tree.bins[0].modes.amplitudes(3) = Complex(0.1, 0.0);
    const auto kept = isolate_modes(tree, 0.0, 1.0, 0.5);
    EXPECT_EQ(kept.size(), 9u);
    for (const auto& m : kept) EXPECT_NE(m.mode, 3);
}

TEST(Baseline, ConstantSeriesUsesWholeRange) {
    const auto x = tensor_from({Matrix::Constant(4, 30, 5.0)});
    const auto b = auto_baseline(x, 0, all_nodes(x), 0, 1000);
    EXPECT_EQ(b.window_start, 0);
    EXPECT_EQ(b.window_end, 29 * 15);
    EXPECT_EQ(b.tiled, x.slice(0, all_nodes(x), 0, 30));
    EXPECT_FALSE(b.widened);
    EXPECT_FALSE(b.degenerate);
    EXPECT_EQ(b.origin, BaselineSpec::Origin::Auto);
}

TEST(Baseline, SingleSpikeSplitsTheRun) {
    Matrix flat = Matrix::Constant(3, 100, 2.0);
    flat(0, 50) = 9.0;
    const auto x = tensor_from({flat});
    const auto b = auto_baseline(x, 0, all_nodes(x), x.timestamps().front(), x.timestamps().back());
    // [0, 49] holds 50 samples and [51, 99] only 49, so the earlier run wins
    EXPECT_EQ(b.window_start, 0);
    EXPECT_EQ(b.window_end, 49 * 15);
    for (Eigen::Index c = 0; c < 100; ++c) EXPECT_EQ(b.tiled(0, c), 2.0);
    flat(1, 20) = -4.0;  // now [51, 99] is the longest
    const auto x2 = tensor_from({flat});
    const auto b2 = auto_baseline(x2, 0, all_nodes(x2), 0, 99 * 15);
    EXPECT_EQ(b2.window_start, 51 * 15);
    EXPECT_EQ(b2.window_end, 99 * 15);
}

TEST(Baseline, MatchesBruteForceOnRandomFixtures) {
    std::mt19937 rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 4);
        const int t = 4 + static_cast<int>(rng() % 40);
        const int levels = 2 + static_cast<int>(rng() % 6);
        Matrix data(n, t);
        for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = static_cast<double>(rng() % static_cast<unsigned>(levels));
        if (trial % 7 == 0) data(static_cast<Eigen::Index>(rng() % static_cast<unsigned>(n)), static_cast<Eigen::Index>(rng() % static_cast<unsigned>(t))) = 100.0;
        const auto x = tensor_from({data});
        const auto b = auto_baseline(x, 0, all_nodes(x), 0, (t - 1) * 15);

        const std::vector<double> all(data.data(), data.data() + data.size());
        const double q1 = np_quantile(all, 0.25), q3 = np_quantile(all, 0.75);
        auto scan = [&](double lo, double hi) {
            std::vector<bool> ok(static_cast<std::size_t>(t));
            for (int c = 0; c < t; ++c) {
                bool good = true;
                for (int r = 0; r < n; ++r) good = good && data(r, c) >= lo && data(r, c) <= hi;
                ok[static_cast<std::size_t>(c)] = good;
            }
            return oracle::longest_run(ok);
        };
        auto [begin, length] = scan(q1, q3);
        bool widened = false;
        if (length == 0) {
            std::tie(begin, length) = scan(q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1));
            widened = true;
        }
        ASSERT_EQ(b.widened, widened) << "trial " << trial;
        ASSERT_EQ(b.degenerate, length == 0) << "trial " << trial;
        if (length == 0) continue;
        ASSERT_EQ(b.window_start, static_cast<std::int64_t>(begin) * 15) << "trial " << trial;
        ASSERT_EQ(b.window_end, static_cast<std::int64_t>(begin + length - 1) * 15) << "trial " << trial;
        for (int c = 0; c < t; ++c)
            for (int r = 0; r < n; ++r)
                ASSERT_EQ(b.tiled(r, c), data(r, static_cast<Eigen::Index>(begin + static_cast<std::size_t>(c) % length)));
    }
}

TEST(Baseline, BrushTilesHintedWindow) {
    Matrix data(2, 95);
    for (int c = 0; c < 95; ++c) {
        data(0, c) = c;
        data(1, c) = -c;
    }
    const auto x = tensor_from({data}, 1);
    const auto b = auto_baseline(x, 0, all_nodes(x), 0, 94, std::make_pair<std::int64_t, std::int64_t>(10, 20));
    EXPECT_EQ(b.origin, BaselineSpec::Origin::User);
    EXPECT_EQ(b.window_start, 10);
    EXPECT_EQ(b.window_end, 20);
    ASSERT_EQ(b.tiled.cols(), 95);
    // 8 full repeats of the 11-sample window, then 7 samples
    for (int c = 0; c < 95; ++c) EXPECT_EQ(b.tiled(0, c), 10 + c % 11);
    EXPECT_EQ(b.tiled(0, 88), 10);
    EXPECT_EQ(b.tiled(0, 94), 16);
    EXPECT_EQ(b.tiled(1, 94), -16);
    EXPECT_THROW(auto_baseline(x, 0, all_nodes(x), 0, 50, std::make_pair<std::int64_t, std::int64_t>(40, 60)),
                 PreconditionError);
}

TEST(Baseline, TiledValuesComeFromTheSourceWindow) {
    std::mt19937 rng(3);
    std::normal_distribution<double> g;
    Matrix data(5, 200);
    for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = g(rng);
    const auto x = tensor_from({data});
    const auto b = auto_baseline(x, 0, all_nodes(x), 0, 199 * 15);
    const auto lo = x.lower_index(b.window_start), hi = x.upper_index(b.window_end);
    for (Eigen::Index r = 0; r < 5; ++r) {
        std::set<double> source;
        for (auto c = lo; c < hi; ++c) source.insert(data(r, static_cast<Eigen::Index>(c)));
        for (Eigen::Index c = 0; c < 200; ++c) EXPECT_TRUE(source.count(b.tiled(r, c)));
    }
}

TEST(Baseline, TukeyThenDegenerateFallbacks) {
    // every timestamp holds one low and one high reading outside [Q1, Q3]
    auto fixture = [](double low, double high) {
        Matrix d(4, 16);
        for (int t = 0; t < 16; ++t)
            for (int n = 0; n < 4; ++n) d(n, t) = n == t % 4 ? low : n == (t + 2) % 4 ? high : 5.0;
        return tensor_from({d});
    };
    const auto widened = fixture(0.0, 10.0);
    const auto b = auto_baseline(widened, 0, all_nodes(widened), 0, 15 * 15);
    EXPECT_TRUE(b.widened);
    EXPECT_FALSE(b.degenerate);
    EXPECT_EQ(b.window_end - b.window_start, 15 * 15);

    const auto degenerate = fixture(0.0, 100.0);
    const auto d = auto_baseline(degenerate, 0, all_nodes(degenerate), 0, 15 * 15);
    EXPECT_TRUE(d.widened);
    EXPECT_TRUE(d.degenerate);
    EXPECT_EQ(d.tiled, Matrix::Constant(4, 16, 5.0));

    MonitoringTensor tiny({"a"}, {"m"}, {0, 1, 2});
    for (std::size_t t = 0; t < 3; ++t) tiny.set(0, 0, t, 1.0);
    EXPECT_THROW(auto_baseline(tiny, 0, {0}, 0, 2), PreconditionError);
}

TEST(ZScores, SelfComparisonGivesStandardScores) {
    std::mt19937 rng(8);
    std::normal_distribution<double> g;
    Matrix d = two_tone(12, 256, 1.0, 10.0, 8);
    for (Eigen::Index r = 0; r < d.rows(); ++r) d.row(r) *= 1.0 + 0.2 * r;
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] += 0.01 * g(rng);
    const auto s = score_against_baseline(d, d, 15.0, {});
    const double mean = s.z.mean();
    const double sd = std::sqrt((s.z.array() - mean).square().mean());
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(sd, 1.0, 1e-9);
    EXPECT_TRUE(s.flags.empty());
}

TEST(ZScores, InjectedNodeHasLargestDeviation) {
    // A homogeneous cluster: one template, 5% amplitude spread, 2% noise.
    for (unsigned seed = 0; seed < 10; ++seed) {
        std::mt19937 rng(seed);
        std::normal_distribution<double> g;
        const Eigen::Index n = 20, t = 512;
        Matrix base(n, t);
        for (Eigen::Index r = 0; r < n; ++r) {
            const double amp = 1.0 + 0.05 * g(rng);
            for (Eigen::Index c = 0; c < t; ++c)
                base(r, c) = 10.0 + amp * std::sin(2.0 * M_PI * c / 128.0) + 0.02 * g(rng);
        }
        Matrix data = base;
        const Eigen::Index victim = static_cast<Eigen::Index>((seed * 7) % n);
        for (Eigen::Index c = 200; c < 400; ++c) data(victim, c) += 2.0 * std::sin(2.0 * M_PI * c / 6.0);
        const auto s = score_against_baseline(data, base, 15.0, {});
        Eigen::Index arg = 0;
        s.z.cwiseAbs().maxCoeff(&arg);
        EXPECT_EQ(arg, victim) << "seed " << seed;
    }
}

TEST(ZScores, OppositeExtremesOnOneColumn) {
    for (unsigned seed = 0; seed < 5; ++seed) {
        std::mt19937 rng(seed);
        std::normal_distribution<double> g;
        const Eigen::Index n = 16, t = 512;
        const auto victim = static_cast<Eigen::Index>((seed * 5) % n);
        Matrix a(n, t), b(n, t);
        for (Eigen::Index r = 0; r < n; ++r) {
            // The victim barely oscillates on b throughout.
            const double amp_a = 1.0 + 0.05 * g(rng), amp_b = r == victim ? 0.1 : 1.0 + 0.05 * g(rng);
            for (Eigen::Index c = 0; c < t; ++c) {
                a(r, c) = 5.0 + amp_a * std::sin(2.0 * M_PI * c / 64.0) + 0.02 * g(rng);
                b(r, c) = 8.0 + amp_b * std::cos(2.0 * M_PI * c / 32.0) + 0.02 * g(rng);
            }
        }
        // Extra fast activity on a in the second half.
        for (Eigen::Index c = 256; c < t; ++c) a(victim, c) += 2.0 * std::sin(2.0 * M_PI * c / 5.0);
        const auto x = tensor_from({a, b});
        TensorSelection sel = TensorSelection::all(x);
        std::map<std::size_t, BaselineSpec> bases;
        for (std::size_t m = 0; m < 2; ++m)
            bases[m] = auto_baseline(x, m, sel.nodes, sel.t_start, sel.t_end,
                                     std::make_pair<std::int64_t, std::int64_t>(0, 255 * 15));
        const auto z = zscores(x, sel, bases);
        ASSERT_EQ(z.z.rows(), 2);
        ASSERT_EQ(z.z.cols(), n);
        Eigen::Index hi = 0, lo = 0;
        z.z.row(0).maxCoeff(&hi);
        z.z.row(1).minCoeff(&lo);
        EXPECT_EQ(hi, victim) << "seed " << seed;
        EXPECT_EQ(lo, victim) << "seed " << seed;
        EXPECT_TRUE(z.z.allFinite());
        EXPECT_EQ(z.baselines.size(), 2u);
        EXPECT_EQ(z.baselines[0].tiled.size(), 0);
    }
}

TEST(ZScores, NodePermutationPermutesColumns) {
    std::mt19937 rng(4);
    std::normal_distribution<double> g;
    Matrix a(10, 256);
    for (Eigen::Index r = 0; r < 10; ++r)
        for (Eigen::Index c = 0; c < 256; ++c)
            a(r, c) = (1.0 + 0.3 * r) * std::sin(2.0 * M_PI * c / (20.0 + r)) + 0.1 * g(rng);
    const auto x = tensor_from({a});
    TensorSelection sel = TensorSelection::all(x);
    const std::vector<std::size_t> perm{4, 9, 0, 2, 7, 1, 8, 3, 6, 5};
    TensorSelection psel = sel;
    psel.nodes = perm;
    const auto z1 = zscores(x, sel, {{0, auto_baseline(x, 0, sel.nodes, sel.t_start, sel.t_end)}});
    const auto z2 = zscores(x, psel, {{0, auto_baseline(x, 0, psel.nodes, sel.t_start, sel.t_end)}});
    for (std::size_t i = 0; i < perm.size(); ++i)
        EXPECT_NEAR(z2.z(0, static_cast<Eigen::Index>(i)), z1.z(0, static_cast<Eigen::Index>(perm[i])),
                    1e-6 * std::max(1.0, std::abs(z1.z(0, static_cast<Eigen::Index>(perm[i])))));
}

TEST(ZScores, SigmaFloorAndFlags) {
    // identical baseline rows: every baseline signature is equal
    Matrix base(6, 128);
    for (Eigen::Index c = 0; c < 128; ++c) base.col(c).setConstant(std::sin(2.0 * M_PI * c / 16.0) + 0.5 * std::sin(2.0 * M_PI * c / 40.0));
    Matrix data = base;
    data.row(2) *= 3.0;
    const auto s = score_against_baseline(data, base, 1.0, {});
    EXPECT_NE(std::find(s.flags.begin(), s.flags.end(), "sigma_floored"), s.flags.end());
    EXPECT_TRUE(s.z.allFinite());
    Eigen::Index arg = 0;
    s.z.cwiseAbs().maxCoeff(&arg);
    EXPECT_EQ(arg, 2);

    ZScoreOptions narrow;
    narrow.band = std::make_pair(0.49, 0.5);  // nothing up there
    const auto w = score_against_baseline(data, base, 1.0, narrow);
    EXPECT_NE(std::find(w.flags.begin(), w.flags.end(), "band_widened"), w.flags.end());
}

TEST(ZScores, DegenerateBaselineIsFlagged) {
    Matrix d(4, 64);
    for (int t = 0; t < 64; ++t)
        for (int n = 0; n < 4; ++n) d(n, t) = (n == t % 4 ? 0.0 : n == (t + 2) % 4 ? 100.0 : 5.0) + 0.1 * n;
    const auto x = tensor_from({d});
    const auto sel = TensorSelection::all(x);
    const auto base = auto_baseline(x, 0, sel.nodes, sel.t_start, sel.t_end);
    ASSERT_TRUE(base.degenerate);
    const auto z = zscores(x, sel, {{0, base}});
    const auto& flags = z.flags.at(0);
    EXPECT_NE(std::find(flags.begin(), flags.end(), "degenerate_baseline"), flags.end());
    EXPECT_TRUE(z.z.allFinite());

    EXPECT_THROW(zscores(x, sel, {}), PreconditionError);
    auto other = sel;
    other.nodes = {0, 1};
    EXPECT_THROW(zscores(x, other, {{0, base}}), PreconditionError);
}
