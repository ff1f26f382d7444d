// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/pipeline.hpp"
#include "nodescope/quality.hpp"

namespace nodescope {

using nlohmann::json;

namespace detail {

inline json matrix_rows(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vector_values(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

template <class Names>
json names_of(const Names& all, const std::vector<std::size_t>& idx) {
    json out = json::array();
    for (auto i : idx) out.push_back(all[i]);
    return out;
}

inline std::size_t resolve(const MonitoringTensor& t, const json& v, bool node) {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    const auto name = v.get<std::string>();
    auto idx = node ? t.node_index(name) : t.metric_index(name);
    if (!idx) throw PreconditionError(std::string(node ? "unknown node '" : "unknown metric '") + name + "'");
    return *idx;
}

template <class F>
auto guarded(F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw PreconditionError(std::string("malformed request: ") + e.what());
    }
}

}  // namespace detail

/// Node ids or indices to tensor indices.
inline std::vector<std::size_t> resolve_nodes(const MonitoringTensor& t, const json& list) {
    std::vector<std::size_t> out;
    for (const auto& v : list) out.push_back(detail::resolve(t, v, true));
    return out;
}

inline std::vector<std::size_t> resolve_metrics(const MonitoringTensor& t, const json& list) {
    std::vector<std::size_t> out;
    for (const auto& v : list) out.push_back(detail::resolve(t, v, false));
    return out;
}

inline std::size_t resolve_metric(const MonitoringTensor& t, const std::string& name) {
    return detail::resolve(t, json(name), false);
}

inline UmapParams parse_umap(const json& j, UmapParams u = {}) {
    return detail::guarded([&] {
        u.n_neighbors = j.value("n_neighbors", u.n_neighbors);
        u.min_dist = j.value("min_dist", u.min_dist);
        u.n_components = j.value("n_components", u.n_components);
        u.seed = j.value("seed", u.seed);
        u.n_epochs = j.value("n_epochs", u.n_epochs);
        u.spread = j.value("spread", u.spread);
        u.learning_rate = j.value("learning_rate", u.learning_rate);
        u.repulsion_strength = j.value("repulsion_strength", u.repulsion_strength);
        u.negative_sample_rate = j.value("negative_sample_rate", u.negative_sample_rate);
        return u;
    });
}

inline MrdmdParams parse_mrdmd(const json& j, MrdmdParams p = {}) {
    return detail::guarded([&] {
        p.max_level = j.value("max_level", p.max_level);
        p.slow_threshold = j.value("slow_threshold", p.slow_threshold);
        p.min_bin_snapshots = j.value("min_bin_snapshots", p.min_bin_snapshots);
        p.dmd.energy = j.value("energy", p.dmd.energy);
        p.dmd.max_rank = j.value("max_rank", p.dmd.max_rank);
        return p;
    });
}

/// Request body of an analysis run; node and metric entries may be ids or indices.
inline AnalysisParams parse_analysis_params(const json& j, const MonitoringTensor& t) {
    return detail::guarded([&] {
        AnalysisParams p;
        if (j.contains("selection")) {
            const auto& s = j.at("selection");
            if (s.contains("nodes")) p.selection.nodes = resolve_nodes(t, s.at("nodes"));
            if (s.contains("metrics")) p.selection.metrics = resolve_metrics(t, s.at("metrics"));
            p.selection.t_start = s.value("t_start", p.selection.t_start);
            p.selection.t_end = s.value("t_end", p.selection.t_end);
        }
        if (j.contains("impute")) p.impute = parse_impute_policy(j.at("impute").get<std::string>());
        p.normalize = j.value("normalize", p.normalize);
        if (j.contains("umap")) p.umap = parse_umap(j.at("umap"));
        p.k = j.value("k", p.k);
        p.seed = j.value("seed", p.seed);
        p.n_init = j.value("n_init", p.n_init);
        if (j.contains("ccpca")) {
            const auto& c = j.at("ccpca");
            p.ccpca.standardize = c.value("standardize", p.ccpca.standardize);
            p.ccpca.min_target_share = c.value("min_target_share", p.ccpca.min_target_share);
            if (c.contains("alphas")) p.ccpca.alphas = c.at("alphas").get<std::vector<double>>();
        }
        return p;
    });
}

/// Window pair [a, b] as JSON array.
inline std::optional<std::pair<std::int64_t, std::int64_t>> parse_window(const json& j) {
    if (j.is_null()) return std::nullopt;
    if (!j.is_array() || j.size() != 2) throw PreconditionError("a window must be a [start, end] pair");
    return std::make_pair(j[0].get<std::int64_t>(), j[1].get<std::int64_t>());
}

/// Request body of a z-score run. Nodes come from "nodes" or from the members
/// of "cluster" in the given analysis.
inline ZScoreRequest parse_zscore_request(const json& j, const MonitoringTensor& t, const AnalysisResult* analysis) {
    return detail::guarded([&] {
        ZScoreRequest r;
        if (j.contains("nodes")) {
            r.nodes = resolve_nodes(t, j.at("nodes"));
        } else if (j.contains("cluster") && analysis) {
            const int c = j.at("cluster").get<int>();
            for (std::size_t n = 0; n < analysis->node_labels.size(); ++n)
                if (analysis->node_labels[n] == c) r.nodes.push_back(n);
        }
        if (j.contains("metrics")) r.metrics = resolve_metrics(t, j.at("metrics"));
        if (j.contains("band") && !j.at("band").is_null()) {
            const auto& b = j.at("band");
            if (!b.is_array() || b.size() != 2) throw PreconditionError("band must be a [f_lo, f_hi] pair");
            r.band = std::make_pair(b[0].get<double>(), b[1].get<double>());
        }
        r.q = j.value("q", r.q);
        if (j.contains("mrdmd")) r.mrdmd = parse_mrdmd(j.at("mrdmd"));
        if (j.contains("baselines"))
            for (const auto& [name, w] : j.at("baselines").items())
                if (auto win = parse_window(w)) r.baseline_windows[resolve_metric(t, name)] = *win;
        return r;
    });
}

inline json to_json(const IngestReport& r) {
    return {{"rows", r.rows}, {"duplicates", r.duplicates}, {"snapped", r.snapped}, {"all_null_series", r.all_null_series}};
}

inline json to_json(const Dataset& d) {
    const auto& t = *d.tensor;
    return {{"id", d.id},
            {"nodes", t.node_ids()},
            {"metrics", t.metric_names()},
            {"times", t.times()},
            {"t_start", t.times() ? t.timestamps().front() : 0},
            {"t_end", t.times() ? t.timestamps().back() : 0},
            {"sample_interval", t.sample_interval()},
            {"report", to_json(d.report)}};
}

inline json to_json(const CacheStats& s) {
    return {{"entries", s.entries}, {"bytes", s.bytes}, {"hits", s.hits}, {"misses", s.misses},
            {"coalesced", s.coalesced}, {"evictions", s.evictions}};
}

inline json to_json(const StageRun& r) {
    return {{"stage", r.stage}, {"key", r.key.hex()}, {"hit", r.hit}, {"ms", r.ms}};
}

inline json to_json(const std::vector<StageRun>& runs) {
    json out = json::array();
    for (const auto& r : runs) out.push_back(to_json(r));
    return out;
}

inline json to_json(const NullActivity& a, const MonitoringTensor& t) {
    json out = json::array();
    for (const auto& e : a.entries) {
        json nodes = json::array();
        for (const auto& n : e.nodes) nodes.push_back({{"node", t.node_ids()[n.node]}, {"label", n.label ? json(*n.label) : json()}});
        out.push_back({{"timestamp", e.timestamp}, {"nodes", std::move(nodes)}});
    }
    return out;
}

inline json to_json(const EmbeddingFrame& e, const MonitoringTensor& t) {
    return {{"nodes", detail::names_of(t.node_ids(), e.nodes)},
            {"coords", detail::matrix_rows(e.coords)},
            {"labels", e.labels},
            {"centroids", detail::matrix_rows(e.centroids)},
            {"a", e.a},
            {"b", e.b},
            {"spectral_init", e.spectral_init}};
}

inline json to_json(const ContributionSet& c, const MonitoringTensor& t) {
    json clusters = json::array();
    for (const auto& cc : c.clusters)
        clusters.push_back({{"id", cc.cluster},
                            {"alpha", cc.alpha},
                            {"score", cc.score},
                            {"weights", detail::vector_values(cc.weights)},
                            {"mean_difference", cc.mean_difference}});
    json ranking = json::array();
    for (auto pos : c.ranking) ranking.push_back(t.metric_names()[c.metrics[pos]]);
    return {{"metrics", detail::names_of(t.metric_names(), c.metrics)}, {"clusters", clusters}, {"ranking", ranking}};
}

inline json to_json(const AnalysisResult& a) {
    const auto& t = *a.dataset->tensor;
    return {{"session", a.session},
            {"dataset", a.dataset->id},
            {"embedding", to_json(*a.embedding, t)},
            {"contributions", to_json(*a.contributions, t)},
            {"null_activity", to_json(a.null_activity, t)},
            {"zero_variance_metrics", detail::names_of(t.metric_names(), [&] {
                 std::vector<std::size_t> m;
                 for (auto pos : a.features->zero_variance) m.push_back(a.features->metrics[pos]);
                 return m;
             }())},
            {"stages", to_json(a.stages)}};
}

inline json to_json(const BaselineSpec& b, const MonitoringTensor& t, bool with_series = false) {
    json j{{"metric", t.metric_names()[b.metric]},
           {"nodes", detail::names_of(t.node_ids(), b.nodes)},
           {"window", {b.window_start, b.window_end}},
           {"range", {t.timestamps()[b.range_begin], t.timestamps()[b.range_end - 1]}},
           {"origin", std::string(to_string(b.origin))},
           {"widened", b.widened},
           {"degenerate", b.degenerate},
           {"q1", b.q1},
           {"q3", b.q3}};
    if (with_series) j["tiled"] = detail::matrix_rows(b.tiled);
    return j;
}

inline json to_json(const ZScoreMatrix& z, const MonitoringTensor& t) {
    json flags = json::object();
    for (const auto& [m, f] : z.flags) flags[t.metric_names()[m]] = f;
    json baselines = json::array();
    for (const auto& b : z.baselines) baselines.push_back(to_json(b, t));
    return {{"metrics", detail::names_of(t.metric_names(), z.metrics)},
            {"nodes", detail::names_of(t.node_ids(), z.nodes)},
            {"z", detail::matrix_rows(z.z)},
            {"flags", flags},
            {"baselines", baselines}};
}

inline json to_json(const std::vector<ClusterSeries>& series, const MonitoringTensor& t) {
    json out = json::array();
    for (const auto& s : series)
        out.push_back({{"cluster", s.cluster},
                       {"metric", t.metric_names()[s.metric]},
                       {"t", s.times},
                       {"v", s.mean_values},
                       {"smooth_window", s.smooth_window},
                       {"carried", s.carried}});
    return out;
}

/// Raw readings of `nodes` for one metric in [from, to]; nulls stay null.
inline json raw_series_json(const MonitoringTensor& t, std::size_t metric, const std::vector<std::size_t>& nodes,
                            std::int64_t from, std::int64_t to) {
    require(metric < t.metrics(), "metric index out of range");
    const auto lo = t.lower_index(from), hi = t.upper_index(to);
    json series = json::array();
    for (auto n : nodes) {
        require(n < t.nodes(), "node index out of range");
        json v = json::array();
        for (std::size_t i = lo; i < hi; ++i) v.push_back(t.is_null(n, metric, i) ? json() : json(t.value(n, metric, i)));
        series.push_back({{"node", t.node_ids()[n]}, {"v", std::move(v)}});
    }
    std::vector<std::int64_t> times(t.timestamps().begin() + static_cast<std::ptrdiff_t>(lo),
                                    t.timestamps().begin() + static_cast<std::ptrdiff_t>(hi));
    return {{"metric", t.metric_names()[metric]}, {"t", times}, {"series", series}};
}

inline json to_json(const QualityReport& q) {
    return {{"silhouette", q.silhouette},
            {"davies_bouldin", q.davies_bouldin},
            {"davies_bouldin_norm", q.davies_bouldin_norm},
            {"calinski_harabasz", q.calinski_harabasz},
            {"calinski_harabasz_norm", q.calinski_harabasz_norm},
            {"trustworthiness", q.trustworthiness},
            {"continuity", q.continuity},
            {"k_neighbors", q.k_neighbors}};
}

}  // namespace nodescope
