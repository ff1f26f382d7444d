// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/cache.hpp"
#include "nodescope/explain.hpp"
#include "nodescope/ingest.hpp"
#include "nodescope/kmeans.hpp"
#include "nodescope/zscore.hpp"

#include <atomic>
#include <chrono>

namespace nodescope {

inline std::size_t approx_bytes(const ImputeResult& r) {
    const auto cells = r.tensor.nodes() * r.tensor.metrics() * r.tensor.times();
    return sizeof(ImputeResult) + cells * (sizeof(double) + 2 * sizeof(std::uint8_t)) +
           r.all_null_series.size() * 2 * sizeof(std::size_t);
}

/// Everything that determines an analysis run, with ids already resolved to
/// tensor indices.
struct AnalysisParams {
    TensorSelection selection;  // empty node/metric lists mean "all"
    ImputePolicy impute = ImputePolicy::ForwardBackwardFill;
    bool normalize = true;
    UmapParams umap;
    int k = 4;
    std::uint64_t seed = 42;  // k-means
    int n_init = 10;
    CcpcaOptions ccpca;
};

struct ZScoreRequest {
    std::vector<std::size_t> nodes;
    std::vector<std::size_t> metrics;  // empty = the analysis metrics
    std::optional<std::pair<double, double>> band;
    double q = 0.5;
    MrdmdParams mrdmd;
    std::map<std::size_t, std::pair<std::int64_t, std::int64_t>> baseline_windows;  // per-request overrides
};

struct StageRun {
    std::string stage;
    StageKey key;
    bool hit = false;
    double ms = 0.0;
};

struct Dataset {
    std::string id;
    std::shared_ptr<const MonitoringTensor> tensor;  // as ingested, nulls kept
    IngestReport report;
};

struct AnalysisResult {
    std::string session;
    std::shared_ptr<const Dataset> dataset;
    std::shared_ptr<const ImputeResult> imputed;
    std::shared_ptr<const FeatureMatrix> features;
    std::shared_ptr<const EmbeddingFrame> embedding;  // clustered
    std::shared_ptr<const ContributionSet> contributions;
    NullActivity null_activity;
    std::vector<int> node_labels;  // per tensor node; -1 outside the selection
    std::vector<StageRun> stages;

    double total_ms() const {
        double t = 0.0;
        for (const auto& s : stages) t += s.ms;
        return t;
    }
};

struct ZScoreResult {
    std::shared_ptr<const ZScoreMatrix> matrix;
    std::vector<StageRun> stages;
};

/// Dataset registry, per-session state and the stage cache. All public
/// members are safe to call concurrently; calls on one session are
/// serialised, different sessions run in parallel.
class Engine {
public:
    explicit Engine(std::size_t cache_bytes = StageCache::default_budget) : cache_(cache_bytes) {}

    std::string add_dataset(MonitoringTensor tensor, IngestReport report = {}) {
        tensor.validate();
        auto ds = std::make_shared<Dataset>();
        ds->tensor = std::make_shared<const MonitoringTensor>(std::move(tensor));
        ds->report = report;
        std::lock_guard lock(mu_);
        ds->id = "ds" + std::to_string(++dataset_counter_);
        datasets_[ds->id] = ds;
        return ds->id;
    }

    std::shared_ptr<const Dataset> dataset(const std::string& id) const {
        std::lock_guard lock(mu_);
        auto it = datasets_.find(id);
        if (it == datasets_.end()) throw NotFoundError("unknown dataset '" + id + "'");
        return it->second;
    }

    /// Removes the dataset and every cached stage derived from it.
    std::size_t drop_dataset(const std::string& id) {
        {
            std::lock_guard lock(mu_);
            if (datasets_.erase(id) == 0) throw NotFoundError("unknown dataset '" + id + "'");
        }
        return cache_.invalidate(id);
    }

    StageCache& cache() noexcept { return cache_; }

    /// Runs ingest -> dr1 -> dr2 -> cluster -> ccpca through the cache and
    /// makes the result the session's current analysis.
    AnalysisResult run_analysis(const std::string& session_id, const std::string& dataset_id, AnalysisParams params) {
        auto session = open_session(session_id);
        std::lock_guard slock(session->mu);
        auto ds = dataset(dataset_id);
        const auto& raw = *ds->tensor;
        auto& sel = params.selection;
        if (sel.nodes.empty()) sel.nodes = TensorSelection::all(raw).nodes;
        if (sel.metrics.empty()) sel.metrics = TensorSelection::all(raw).metrics;
        const auto [lo, hi] = sel.time_range(raw);
        sel.t_start = raw.timestamps()[lo];
        sel.t_end = raw.timestamps()[hi - 1];
        require(params.k >= 1, "k must be positive");
        require(static_cast<std::size_t>(params.k) <= sel.nodes.size(), "k exceeds the number of selected nodes");
        const auto epoch = session->cancel_epoch.load();
        auto cancelled = [session, epoch] { return session->cancel_epoch.load() != epoch; };

        AnalysisResult out;
        out.session = session_id;
        out.dataset = ds;
        const auto k_ingest = ingest_key(ds->id, params.impute);
        out.imputed = timed<ImputeResult>(out.stages, "ingest", k_ingest, [&] { return impute(raw, params.impute); });

        nlohmann::json p1{{"nodes", sel.nodes}, {"metrics", sel.metrics}, {"t_start", sel.t_start},
                          {"t_end", sel.t_end}, {"normalize", params.normalize}};
        const auto k_dr1 = make_stage_key("dr1", ds->id, p1, &k_ingest);
        out.features = timed<FeatureMatrix>(out.stages, "dr1", k_dr1, [&] {
            return dr1_time_compress(out.imputed->tensor, sel, params.normalize);
        });

        const auto& u = params.umap;
        nlohmann::json p2{{"n_neighbors", u.n_neighbors}, {"min_dist", u.min_dist}, {"n_components", u.n_components},
                          {"seed", u.seed}, {"n_epochs", u.n_epochs}, {"spread", u.spread},
                          {"learning_rate", u.learning_rate}, {"repulsion_strength", u.repulsion_strength},
                          {"negative_sample_rate", u.negative_sample_rate}};
        const auto k_dr2 = make_stage_key("dr2", ds->id, p2, &k_dr1);
        auto layout = timed<EmbeddingFrame>(out.stages, "dr2", k_dr2,
                                            [&] { return dr2_umap(*out.features, params.umap, cancelled); });

        nlohmann::json p3{{"k", params.k}, {"seed", params.seed}, {"n_init", params.n_init}};
        const auto k_cluster = make_stage_key("cluster", ds->id, p3, &k_dr2);
        out.embedding = timed<EmbeddingFrame>(out.stages, "cluster", k_cluster,
                                              [&] { return kmeans(*layout, params.k, params.seed, params.n_init); });

        nlohmann::json p4{{"standardize", params.ccpca.standardize}, {"min_target_share", params.ccpca.min_target_share},
                          {"epsilon", params.ccpca.epsilon}, {"alphas", params.ccpca.alphas}};
        const auto k_ccpca = make_stage_key("ccpca", ds->id, p4, &k_cluster);
        out.contributions = timed<ContributionSet>(out.stages, "ccpca", k_ccpca, [&] {
            return ccpca_contributions(*out.features, out.embedding->labels, params.ccpca);
        });

        out.node_labels.assign(raw.nodes(), -1);
        for (std::size_t i = 0; i < sel.nodes.size(); ++i) out.node_labels[sel.nodes[i]] = out.embedding->labels[i];
        out.null_activity = null_activity(raw, sel.t_start, sel.t_end, out.node_labels);

        session->dataset = ds;
        session->params = params;
        session->analysis = std::make_shared<const AnalysisResult>(out);
        session->ingest_key = k_ingest;
        return out;
    }

    /// Z-scores for a node subset of the session's current analysis. Baselines
    /// come from, in order: the request, the session overrides, auto discovery.
    ZScoreResult run_zscores(const std::string& session_id, ZScoreRequest req) {
        auto session = find_session(session_id);
        std::lock_guard slock(session->mu);
        const auto& a = require_analysis(*session);
        require(!req.nodes.empty(), "node selection is empty");
        if (req.metrics.empty()) req.metrics = session->params.selection.metrics;
        for (const auto& [m, w] : req.baseline_windows) session->baseline_windows[m] = w;

        ZScoreResult out;
        TensorSelection sel;
        sel.nodes = req.nodes;
        sel.metrics = req.metrics;
        sel.t_start = session->params.selection.t_start;
        sel.t_end = session->params.selection.t_end;
        sel.time_range(*a.dataset->tensor);

        std::map<std::size_t, BaselineSpec> baselines;
        nlohmann::json base_ids = nlohmann::json::array();
        for (auto m : req.metrics) {
            auto [key, spec] = baseline_stage(*session, m, req.nodes, out.stages);
            base_ids.push_back(key.id());
            baselines.emplace(m, *spec);
        }
        nlohmann::json band = nullptr;
        if (req.band) band = {req.band->first, req.band->second};
        const auto& mp = req.mrdmd;
        nlohmann::json pz{{"nodes", req.nodes}, {"metrics", req.metrics}, {"band", band}, {"q", req.q},
                          {"max_level", mp.max_level}, {"slow_threshold", mp.slow_threshold},
                          {"min_bin_snapshots", mp.min_bin_snapshots}, {"energy", mp.dmd.energy},
                          {"max_rank", mp.dmd.max_rank}, {"baselines", base_ids}};
        const auto kz = make_stage_key("zscore", a.dataset->id, pz, &session->ingest_key);
        ZScoreOptions opt{req.band, req.q, req.mrdmd};
        out.matrix = timed<ZScoreMatrix>(out.stages, "zscore", kz, [&] {
            return zscores(a.imputed->tensor, sel, baselines, opt);
        });
        session->last_zscore_nodes = req.nodes;
        return out;
    }

    /// Baseline for `metric` over `nodes` (default: last z-score node set, else
    /// the analysis selection) honouring the session's override.
    std::shared_ptr<const BaselineSpec> baseline(const std::string& session_id, std::size_t metric,
                                                 std::vector<std::size_t> nodes = {}) {
        auto session = find_session(session_id);
        std::lock_guard slock(session->mu);
        require_analysis(*session);
        if (nodes.empty()) nodes = session->last_zscore_nodes;
        if (nodes.empty()) nodes = session->params.selection.nodes;
        std::vector<StageRun> runs;
        return baseline_stage(*session, metric, nodes, runs).second;
    }

    /// Sets (or with nullopt clears) the user-brushed window for `metric`.
    void set_baseline_window(const std::string& session_id, std::size_t metric,
                             std::optional<std::pair<std::int64_t, std::int64_t>> window) {
        auto session = find_session(session_id);
        std::lock_guard slock(session->mu);
        const auto& a = require_analysis(*session);
        require(metric < a.dataset->tensor->metrics(), "metric index out of range");
        if (window) {
            require(window->first <= window->second, "baseline window start is after its end");
            session->baseline_windows[metric] = *window;
        } else {
            session->baseline_windows.erase(metric);
        }
    }

    std::vector<ClusterSeries> series(const std::string& session_id, std::size_t metric,
                                      std::optional<int> smooth_window = std::nullopt) {
        auto session = find_session(session_id);
        std::lock_guard slock(session->mu);
        const auto& a = require_analysis(*session);
        const auto& raw = *a.dataset->tensor;
        const auto& sel = session->params.selection;
        const auto [lo, hi] = sel.time_range(raw);
        return cluster_average_series(raw, a.node_labels, metric, smooth_window.value_or(default_smooth_window(hi - lo)),
                                      sel.t_start, sel.t_end);
    }

    std::shared_ptr<const AnalysisResult> analysis(const std::string& session_id) {
        auto session = find_session(session_id);
        std::lock_guard slock(session->mu);
        return std::make_shared<const AnalysisResult>(require_analysis(*session));
    }

    /// Time window of the session's analysis selection.
    std::pair<std::int64_t, std::int64_t> session_window(const std::string& session_id) {
        auto session = find_session(session_id);
        std::lock_guard slock(session->mu);
        require_analysis(*session);
        return {session->params.selection.t_start, session->params.selection.t_end};
    }

    NullActivity dataset_null_activity(const std::string& dataset_id, std::int64_t from, std::int64_t to,
                                       const std::string& session_id = {}) {
        auto ds = dataset(dataset_id);
        std::vector<int> labels;
        if (!session_id.empty()) {
            auto session = find_session(session_id);
            std::lock_guard slock(session->mu);
            if (session->analysis && session->analysis->dataset->id == dataset_id) labels = session->analysis->node_labels;
        }
        return null_activity(*ds->tensor, from, to, labels);
    }

    /// Asks the session's in-flight computation to stop at its next check.
    void cancel(const std::string& session_id) { find_session(session_id)->cancel_epoch.fetch_add(1); }

    bool has_session(const std::string& id) const {
        std::lock_guard lock(mu_);
        return sessions_.count(id) != 0;
    }

private:
    struct Session {
        std::mutex mu;
        std::atomic<std::uint64_t> cancel_epoch{0};
        std::shared_ptr<const Dataset> dataset;
        AnalysisParams params;
        std::shared_ptr<const AnalysisResult> analysis;
        StageKey ingest_key;
        std::map<std::size_t, std::pair<std::int64_t, std::int64_t>> baseline_windows;
        std::vector<std::size_t> last_zscore_nodes;
    };

    static StageKey ingest_key(const std::string& dataset, ImputePolicy policy) {
        return make_stage_key("ingest", dataset, nlohmann::json{{"impute", std::string(to_string(policy))}});
    }

    template <class T, class F>
    std::shared_ptr<const T> timed(std::vector<StageRun>& runs, std::string stage, const StageKey& key, F&& producer) {
        const auto t0 = std::chrono::steady_clock::now();
        auto r = cache_.get_or_compute<T>(key, std::forward<F>(producer));
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        runs.push_back({std::move(stage), key, r.hit, ms});
        return r.value;
    }

    std::pair<StageKey, std::shared_ptr<const BaselineSpec>> baseline_stage(Session& s, std::size_t metric,
                                                                            const std::vector<std::size_t>& nodes,
                                                                            std::vector<StageRun>& runs) {
        const auto& a = *s.analysis;
        const auto& sel = s.params.selection;
        std::optional<std::pair<std::int64_t, std::int64_t>> hint;
        if (auto it = s.baseline_windows.find(metric); it != s.baseline_windows.end()) hint = it->second;
        nlohmann::json window = nullptr;
        if (hint) window = {hint->first, hint->second};
        nlohmann::json pb{{"metric", metric}, {"nodes", nodes}, {"t_start", sel.t_start}, {"t_end", sel.t_end},
                          {"window", window}};
        auto key = make_stage_key("baseline", a.dataset->id, pb, &s.ingest_key);
        auto spec = timed<BaselineSpec>(runs, "baseline", key, [&] {
            return auto_baseline(a.imputed->tensor, metric, nodes, sel.t_start, sel.t_end, hint);
        });
        return {key, spec};
    }

    std::shared_ptr<Session> open_session(const std::string& id) {
        require(!id.empty(), "session id is empty");
        std::lock_guard lock(mu_);
        auto& s = sessions_[id];
        if (!s) s = std::make_shared<Session>();
        return s;
    }

    std::shared_ptr<Session> find_session(const std::string& id) const {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
        return it->second;
    }

    static const AnalysisResult& require_analysis(const Session& s) {
        if (!s.analysis) throw PreconditionError("run an analysis in this session first");
        return *s.analysis;
    }

    StageCache cache_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t dataset_counter_ = 0;
};

}  // namespace nodescope
