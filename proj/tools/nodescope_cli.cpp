// SPDX-License-Identifier: Apache-2.0
// Command-line front end: batch analysis, scoring, evaluation, benchmarks and
// the HTTP service.

#include "nodescope/nodescope.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

using namespace nodescope;

namespace {

struct Input {
    std::vector<std::string> files;
    std::string format = "long";
    std::string node_column;
    std::string synth;  // JSON text or @file
};

struct Analysis {
    std::string nodes, metrics;
    std::string from, to;
    std::string impute = "ffill";
    bool no_normalize = false;
    int k = 4;
    std::uint64_t seed = 42;
    int n_init = 10;
    UmapParams umap;
    bool standardize = false;
};

std::string out_path;

void add_input(CLI::App* cmd, Input& in) {
    cmd->add_option("files", in.files, "CSV files");
    cmd->add_option("--format", in.format, "CSV layout: long or wide")->check(CLI::IsMember({"long", "wide"}));
    cmd->add_option("--node-column", in.node_column, "wide layout: column holding the node id");
    cmd->add_option("--synth", in.synth, "synthetic fixture spec as JSON text or @file instead of CSV files");
}

void add_analysis(CLI::App* cmd, Analysis& a) {
    cmd->add_option("--nodes", a.nodes, "comma-separated node ids (default: all)");
    cmd->add_option("--metrics", a.metrics, "comma-separated metric names (default: all)");
    cmd->add_option("--from", a.from, "window start (epoch seconds or ISO-8601)");
    cmd->add_option("--to", a.to, "window end (epoch seconds or ISO-8601)");
    cmd->add_option("--impute", a.impute, "ffill or zero");
    cmd->add_flag("--no-normalize", a.no_normalize, "skip per-metric z-scaling before phase-1 PCA");
    cmd->add_option("-k,--clusters", a.k, "k-means cluster count");
    cmd->add_option("--seed", a.seed, "k-means seed");
    cmd->add_option("--n-init", a.n_init, "k-means restarts");
    cmd->add_option("--n-neighbors", a.umap.n_neighbors, "UMAP neighbourhood size");
    cmd->add_option("--min-dist", a.umap.min_dist, "UMAP min_dist");
    cmd->add_option("--umap-seed", a.umap.seed, "UMAP seed");
    cmd->add_option("--epochs", a.umap.n_epochs, "UMAP epochs (0 = automatic)");
    cmd->add_flag("--standardize-ccpca", a.standardize, "z-score features before contrastive PCA");
}

void add_out(CLI::App* cmd) { cmd->add_option("-o,--out", out_path, "write output here instead of stdout"); }

void emit(const std::string& text) {
    if (out_path.empty()) {
        std::cout << text << '\n';
        return;
    }
    std::ofstream f(out_path);
    if (!f) throw Error("cannot write " + out_path);
    f << text << '\n';
}

void emit(const json& j) { emit(j.dump(2)); }

std::string read_spec(const std::string& s) {
    if (s.empty() || s[0] != '@') return s;
    std::ifstream f(s.substr(1));
    if (!f) throw Error("cannot open " + s.substr(1));
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string item; std::getline(in, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

struct Loaded {
    std::string id;
    std::vector<int> truth;  // synthetic ground truth, if any
};

Loaded load(Engine& engine, const Input& in) {
    if (!in.synth.empty()) {
        auto fixture = synth_generate(parse_synth_spec(json::parse(read_spec(in.synth))));
        return {engine.add_dataset(std::move(fixture.tensor)), std::move(fixture.labels)};
    }
    if (in.files.empty()) throw PreconditionError("no input: pass CSV files or --synth");
    json layout{{"format", in.format}, {"node_column", in.node_column}};
    std::vector<std::filesystem::path> files(in.files.begin(), in.files.end());
    auto r = ingest_csv(files, parse_layout(layout));
    return {engine.add_dataset(std::move(r.tensor), r.report), {}};
}

AnalysisResult analyze(Engine& engine, const std::string& id, const Analysis& a) {
    const auto& t = *engine.dataset(id)->tensor;
    json j{{"impute", a.impute}, {"normalize", !a.no_normalize}, {"k", a.k}, {"seed", a.seed}, {"n_init", a.n_init},
           {"ccpca", {{"standardize", a.standardize}}}};
    json sel = json::object();
    if (!a.nodes.empty()) sel["nodes"] = split(a.nodes);
    if (!a.metrics.empty()) sel["metrics"] = split(a.metrics);
    std::int64_t v = 0;
    if (!a.from.empty()) {
        if (!csv::parse_timestamp(a.from, v)) throw PreconditionError("invalid --from");
        sel["t_start"] = v;
    }
    if (!a.to.empty()) {
        if (!csv::parse_timestamp(a.to, v)) throw PreconditionError("invalid --to");
        sel["t_end"] = v;
    }
    j["selection"] = sel;
    auto params = parse_analysis_params(j, t);
    params.umap = a.umap;
    return engine.run_analysis("cli", id, params);
}


}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nodescope: behaviour analysis for fleet telemetry"};
    app.require_subcommand(1);

    Input input;
    Analysis analysis;

    auto* ingest_cmd = app.add_subcommand("ingest", "parse CSV telemetry and report the tensor shape");
    std::string impute_policy = "ffill", export_path;
    add_input(ingest_cmd, input);
    ingest_cmd->add_option("--impute", impute_policy, "ffill or zero; reported series counts use it");
    ingest_cmd->add_option("--export", export_path, "write the tensor back as long-format CSV");
    add_out(ingest_cmd);

    auto* analyze_cmd = app.add_subcommand("analyze", "two-phase reduction, clustering and metric contributions");
    add_input(analyze_cmd, input);
    add_analysis(analyze_cmd, analysis);
    add_out(analyze_cmd);

    auto* explain_cmd = app.add_subcommand("explain", "contributions plus cluster-average series of one metric");
    std::string explain_metric;
    int smooth = 0;
    add_input(explain_cmd, input);
    add_analysis(explain_cmd, analysis);
    explain_cmd->add_option("--metric", explain_metric, "metric for the cluster-average series (default: top ranked)");
    explain_cmd->add_option("--smooth", smooth, "smoothing window in samples (0 = automatic)");
    add_out(explain_cmd);

    auto* z_cmd = app.add_subcommand("zscores", "mrDMD z-scores of a node subset against baselines");
    std::string z_nodes, z_metrics, z_band;
    std::vector<std::string> z_baselines;
    int z_cluster = -1;
    double z_q = 0.5;
    MrdmdParams z_mrdmd;
    add_input(z_cmd, input);
    add_analysis(z_cmd, analysis);
    z_cmd->add_option("--cluster", z_cluster, "score the members of this cluster");
    z_cmd->add_option("--select", z_nodes, "comma-separated node ids to score");
    z_cmd->add_option("--score-metrics", z_metrics, "comma-separated metrics to score (default: analysis metrics)");
    z_cmd->add_option("--band", z_band, "frequency band f_lo,f_hi in Hz (default: 0 to Nyquist)");
    z_cmd->add_option("--q", z_q, "power quantile for mode isolation");
    z_cmd->add_option("--baseline", z_baselines, "metric=start:end user baseline window (repeatable)");
    z_cmd->add_option("--max-level", z_mrdmd.max_level, "mrDMD depth");
    z_cmd->add_option("--slow-threshold", z_mrdmd.slow_threshold, "slow-mode limit in cycles per bin");
    z_cmd->add_option("--min-bin", z_mrdmd.min_bin_snapshots, "smallest bin in snapshots");
    add_out(z_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "cluster and embedding quality of an analysis");
    int eval_k = 15;
    std::string labels_path;
    add_input(eval_cmd, input);
    add_analysis(eval_cmd, analysis);
    eval_cmd->add_option("--tc-neighbors", eval_k, "neighbourhood size for trustworthiness and continuity");
    eval_cmd->add_option("--labels", labels_path, "JSON {node: label} ground truth for the adjusted Rand index");
    add_out(eval_cmd);

    auto* bench_cmd = app.add_subcommand("bench", "cold vs cache-warm stage timings over a size sweep");
    std::vector<std::size_t> bench_nodes{50, 100, 200, 400, 800}, bench_metrics{46};
    BenchConfig bench_cfg;
    bench_cmd->add_option("--nodes", bench_nodes, "node counts to sweep")->delimiter(',');
    bench_cmd->add_option("--metrics", bench_metrics, "metric counts to sweep")->delimiter(',');
    bench_cmd->add_option("--times", bench_cfg.times, "timestamps per fixture");
    bench_cmd->add_option("--reps", bench_cfg.repetitions, "repetitions per point (median reported)");
    bench_cmd->add_option("--seed", bench_cfg.seed, "fixture seed");
    add_out(bench_cmd);

    auto* serve_cmd = app.add_subcommand("serve", "run the HTTP JSON service");
    ServiceConfig service_cfg;
    serve_cmd->add_option("--host", service_cfg.host, "listen address");
    serve_cmd->add_option("--port", service_cfg.port, "listen port (0 = any free port)");
    serve_cmd->add_option("--data-dir", service_cfg.data_dir, "directory POST /datasets may read files from");
    serve_cmd->add_option("--cache-bytes", service_cfg.cache_bytes, "stage cache budget in bytes");

    CLI11_PARSE(app, argc, argv);

    try {
        Engine engine;
        if (ingest_cmd->parsed()) {
            auto loaded = load(engine, input);
            auto ds = engine.dataset(loaded.id);
            auto j = to_json(*ds);
            j["impute"] = {{"policy", impute_policy},
                           {"all_null_series", impute(*ds->tensor, parse_impute_policy(impute_policy)).all_null_series.size()}};
            if (!export_path.empty()) {
                std::ofstream f(export_path);
                if (!f) throw Error("cannot write " + export_path);
                export_long_csv(*ds->tensor, f);
            }
            emit(j);
        } else if (analyze_cmd->parsed()) {
            auto loaded = load(engine, input);
            emit(to_json(analyze(engine, loaded.id, analysis)));
        } else if (explain_cmd->parsed()) {
            auto loaded = load(engine, input);
            auto a = analyze(engine, loaded.id, analysis);
            const auto& t = *a.dataset->tensor;
            const auto metric = explain_metric.empty() ? a.contributions->metrics[a.contributions->ranking.front()]
                                                       : resolve_metric(t, explain_metric);
            std::optional<int> window;
            if (smooth > 0) window = smooth;
            emit(json{{"contributions", to_json(*a.contributions, t)},
                      {"series", to_json(engine.series("cli", metric, window), t)}});
        } else if (z_cmd->parsed()) {
            auto loaded = load(engine, input);
            auto a = analyze(engine, loaded.id, analysis);
            const auto& t = *a.dataset->tensor;
            json req = json::object();
            if (!z_nodes.empty()) req["nodes"] = split(z_nodes);
            else if (z_cluster >= 0) req["cluster"] = z_cluster;
            else throw PreconditionError("pass --cluster or --select to choose the nodes to score");
            if (!z_metrics.empty()) req["metrics"] = split(z_metrics);
            if (!z_band.empty()) {
                auto parts = split(z_band);
                if (parts.size() != 2) throw PreconditionError("--band needs f_lo,f_hi");
                req["band"] = {std::stod(parts[0]), std::stod(parts[1])};
            }
            req["q"] = z_q;
            json bl = json::object();
            for (const auto& b : z_baselines) {
                const auto eq = b.find('='), colon = b.rfind(':');
                if (eq == std::string::npos || colon == std::string::npos || colon < eq)
                    throw PreconditionError("--baseline needs metric=start:end");
                std::int64_t s = 0, e = 0;
                if (!csv::parse_timestamp(b.substr(eq + 1, colon - eq - 1), s) || !csv::parse_timestamp(b.substr(colon + 1), e))
                    throw PreconditionError("invalid --baseline window '" + b + "'");
                bl[b.substr(0, eq)] = {s, e};
            }
            req["baselines"] = bl;
            auto r = parse_zscore_request(req, t, &a);
            r.mrdmd = z_mrdmd;
            auto z = engine.run_zscores("cli", std::move(r));
            auto out = to_json(*z.matrix, t);
            out["stages"] = to_json(z.stages);
            emit(out);
        } else if (eval_cmd->parsed()) {
            auto loaded = load(engine, input);
            auto a = analyze(engine, loaded.id, analysis);
            const auto& t = *a.dataset->tensor;
            json out{{"quality", to_json(quality_report(*a.features, *a.embedding, eval_k))},
                     {"clusters", a.contributions->clusters.size()}};
            std::vector<int> truth;
            if (!labels_path.empty()) {
                std::ifstream f(labels_path);
                if (!f) throw Error("cannot open " + labels_path);
                const auto j = json::parse(f);
                for (auto n : a.embedding->nodes) truth.push_back(j.at(t.node_ids()[n]).get<int>());
            } else if (!loaded.truth.empty()) {
                for (auto n : a.embedding->nodes) truth.push_back(loaded.truth[n]);
            }
            if (!truth.empty()) out["ari"] = adjusted_rand_index(a.embedding->labels, truth);
            emit(out);
        } else if (bench_cmd->parsed()) {
            for (auto m : bench_metrics)
                for (auto n : bench_nodes) bench_cfg.sweep.push_back({n, m});
            auto rows = bench(bench_cfg, [](const BenchRow& r) {
                std::cerr << r.stage << " N=" << r.nodes << " M=" << r.metrics << " cold " << r.cold_ms << " ms, warm "
                          << r.warm_ms << " ms\n";
            });
            std::ostringstream csv_out;
            write_bench_csv(rows, csv_out);
            auto text = csv_out.str();
            if (!text.empty() && text.back() == '\n') text.pop_back();
            emit(text);
        } else if (serve_cmd->parsed()) {
            Service service(service_cfg);
            const int port = service.bind();
            std::cerr << "listening on " << service_cfg.host << ':' << port << '\n';
            static Service* running = &service;
            std::signal(SIGINT, [](int) { running->stop(); });
            std::signal(SIGTERM, [](int) { running->stop(); });
            if (!service.run()) return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
