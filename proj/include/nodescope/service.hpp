// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/json_io.hpp"
#include "nodescope/synth.hpp"

#include <httplib.h>

#include <filesystem>
#include <sstream>

namespace nodescope {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 = pick a free port
    std::filesystem::path data_dir = ".";
    std::size_t cache_bytes = StageCache::default_budget;
};

inline CsvLayout parse_layout(const json& j) {
    return detail::guarded([&] {
        CsvLayout l;
        const auto format = j.value("format", std::string("long"));
        if (format == "wide") l = CsvLayout::wide(j.value("timestamp_column", std::string("timestamp")),
                                                  j.value("node_column", std::string()));
        else if (format != "long") throw PreconditionError("unknown CSV format '" + format + "'");
        if (j.contains("metric_columns")) l.metric_columns = j.at("metric_columns").get<std::vector<std::string>>();
        return l;
    });
}

inline SynthSpec parse_synth_spec(const json& j) {
    return detail::guarded([&] {
        SynthSpec s;
        s.nodes = j.value("nodes", s.nodes);
        s.metrics = j.value("metrics", s.metrics);
        s.times = j.value("times", s.times);
        s.groups = j.value("groups", s.groups);
        s.noise = j.value("noise", s.noise);
        s.separation = j.value("separation", s.separation);
        s.seed = j.value("seed", s.seed);
        s.interval = j.value("interval", s.interval);
        s.start = j.value("start", s.start);
        for (const auto& a : j.value("anomalies", json::array())) {
            Anomaly an;
            const auto kind = a.at("kind").get<std::string>();
            if (kind == "spike") an.kind = Anomaly::Kind::Spike;
            else if (kind == "burst") an.kind = Anomaly::Kind::FrequencyBurst;
            else if (kind == "downtime") an.kind = Anomaly::Kind::NullDowntime;
            else throw PreconditionError("unknown anomaly kind '" + kind + "'");
            an.nodes = a.at("nodes").get<std::vector<std::size_t>>();
            an.metric = a.value("metric", an.metric);
            an.t_begin = a.at("t_begin").get<std::size_t>();
            an.t_end = a.value("t_end", an.t_begin);
            an.amplitude = a.value("amplitude", an.amplitude);
            an.period = a.value("period", an.period);
            s.anomalies.push_back(std::move(an));
        }
        return s;
    });
}

/// HTTP JSON front end over an Engine.
class Service {
public:
    explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)), engine_(cfg_.cache_bytes) { routes(); }

    Engine& engine() noexcept { return engine_; }
    httplib::Server& server() noexcept { return server_; }

    /// Binds the listening socket; returns the bound port.
    int bind() {
        if (cfg_.port == 0) {
            const int port = server_.bind_to_any_port(cfg_.host);
            if (port < 0) throw Error("cannot bind " + cfg_.host + " to a free port");
            return cfg_.port = port;
        }
        if (!server_.bind_to_port(cfg_.host, cfg_.port))
            throw Error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
        return cfg_.port;
    }

    /// Serves until stop(); call bind() first.
    bool run() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    int port() const noexcept { return cfg_.port; }

private:
    using Req = httplib::Request;
    using Res = httplib::Response;

    static void send(Res& res, const json& body, int status = 200) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void fail(Res& res, int status, const std::string& message) {
        send(res, json{{"error", message}}, status);
    }

    /// Maps engine exceptions to status codes.
    template <class F>
    static void handle(Res& res, F&& f) {
        try {
            f();
        } catch (const NotFoundError& e) {
            fail(res, 404, e.what());
        } catch (const PreconditionError& e) {
            fail(res, 422, e.what());
        } catch (const ParseError& e) {
            fail(res, 400, e.what());
        } catch (const CancelledError& e) {
            fail(res, 409, e.what());
        } catch (const json::exception& e) {
            fail(res, 400, std::string("invalid JSON: ") + e.what());
        } catch (const std::exception& e) {
            fail(res, 500, e.what());
        }
    }

    static json body_json(const Req& req) {
        if (req.body.empty()) return json::object();
        return json::parse(req.body);
    }

    static std::string param(const Req& req, const std::string& name) {
        if (!req.has_param(name)) throw PreconditionError("missing query parameter '" + name + "'");
        return req.get_param_value(name);
    }

    static std::int64_t int_param(const Req& req, const std::string& name, std::int64_t fallback) {
        if (!req.has_param(name)) return fallback;
        std::int64_t v = 0;
        if (!csv::parse_timestamp(req.get_param_value(name), v))
            throw PreconditionError("query parameter '" + name + "' is not a timestamp");
        return v;
    }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::stringstream in(s);
        for (std::string item; std::getline(in, item, ',');)
            if (!item.empty()) out.push_back(item);
        return out;
    }

    std::filesystem::path data_file(const std::string& name) const {
        namespace fs = std::filesystem;
        const auto root = fs::weakly_canonical(cfg_.data_dir);
        const auto path = fs::weakly_canonical(root / name);
        const auto rel = path.lexically_relative(root);
        if (rel.empty() || *rel.begin() == "..") throw PreconditionError("file '" + name + "' is outside the data directory");
        if (!fs::is_regular_file(path)) throw NotFoundError("no file '" + name + "' in the data directory");
        return path;
    }

    void create_dataset(const Req& req, Res& res) {
        const auto& type = req.get_header_value("Content-Type");
        std::string id;
        if (type.rfind("application/json", 0) == 0) {
            const auto j = json::parse(req.body);
            if (j.contains("synth")) {
                auto fixture = synth_generate(parse_synth_spec(j.at("synth")));
                id = engine_.add_dataset(std::move(fixture.tensor));
            } else {
                std::vector<std::filesystem::path> files;
                for (const auto& f : j.at("files")) files.push_back(data_file(f.get<std::string>()));
                auto r = ingest_csv(files, parse_layout(j));
                id = engine_.add_dataset(std::move(r.tensor), r.report);
            }
        } else {
            json opts = json::object();
            if (req.has_param("format")) opts["format"] = req.get_param_value("format");
            if (req.has_param("node_column")) opts["node_column"] = req.get_param_value("node_column");
            std::istringstream in(req.body);
            auto r = ingest_streams({{req.has_param("name") ? req.get_param_value("name") : "upload", &in}},
                                    parse_layout(opts));
            id = engine_.add_dataset(std::move(r.tensor), r.report);
        }
        send(res, to_json(*engine_.dataset(id)), 201);
    }

    void routes() {
        server_.Get("/health", [](const Req&, Res& res) { send(res, json{{"status", "ok"}}); });

        server_.Get("/cache/stats", [this](const Req&, Res& res) { send(res, to_json(engine_.cache().stats())); });

        server_.Post("/datasets", [this](const Req& req, Res& res) { handle(res, [&] { create_dataset(req, res); }); });

        server_.Get(R"(/datasets/([^/]+))", [this](const Req& req, Res& res) {
            handle(res, [&] { send(res, to_json(*engine_.dataset(req.matches[1]))); });
        });

        server_.Delete(R"(/datasets/([^/]+))", [this](const Req& req, Res& res) {
            handle(res, [&] { send(res, json{{"evicted", engine_.drop_dataset(req.matches[1])}}); });
        });

        server_.Get(R"(/datasets/([^/]+)/null-activity)", [this](const Req& req, Res& res) {
            handle(res, [&] {
                auto ds = engine_.dataset(req.matches[1]);
                const auto& t = *ds->tensor;
                const auto from = int_param(req, "from", t.times() ? t.timestamps().front() : 0);
                const auto to = int_param(req, "to", t.times() ? t.timestamps().back() : 0);
                const auto session = req.has_param("session") ? req.get_param_value("session") : std::string();
                send(res, to_json(engine_.dataset_null_activity(ds->id, from, to, session), t));
            });
        });

        server_.Post(R"(/sessions/([^/]+)/analysis)", [this](const Req& req, Res& res) {
            handle(res, [&] {
                const auto j = body_json(req);
                if (!j.contains("dataset")) throw PreconditionError("request needs a 'dataset' id");
                auto ds = engine_.dataset(j.at("dataset").get<std::string>());
                auto params = parse_analysis_params(j, *ds->tensor);
                send(res, to_json(engine_.run_analysis(req.matches[1], ds->id, std::move(params))));
            });
        });

        server_.Get(R"(/sessions/([^/]+)/contributions)", [this](const Req& req, Res& res) {
            handle(res, [&] {
                auto a = engine_.analysis(req.matches[1]);
                send(res, to_json(*a->contributions, *a->dataset->tensor));
            });
        });

        server_.Get(R"(/sessions/([^/]+)/series)", [this](const Req& req, Res& res) {
            handle(res, [&] {
                auto a = engine_.analysis(req.matches[1]);
                const auto& t = *a->dataset->tensor;
                const auto metric = resolve_metric(t, param(req, "metric"));
                std::optional<int> smooth;
                if (req.has_param("smooth")) smooth = std::stoi(req.get_param_value("smooth"));
                send(res, to_json(engine_.series(req.matches[1], metric, smooth), t));
            });
        });

        server_.Get(R"(/sessions/([^/]+)/raw)", [this](const Req& req, Res& res) {
            handle(res, [&] {
                auto a = engine_.analysis(req.matches[1]);
                const auto& t = *a->dataset->tensor;
                const auto metric = resolve_metric(t, param(req, "metric"));
                auto nodes = req.has_param("nodes") ? resolve_nodes(t, json(split_list(req.get_param_value("nodes"))))
                                                    : a->features->nodes;
                const auto [from, to] = engine_.session_window(req.matches[1]);
                send(res, raw_series_json(t, metric, nodes, int_param(req, "from", from), int_param(req, "to", to)));
            });
        });

        server_.Get(R"(/sessions/([^/]+)/baseline)", [this](const Req& req, Res& res) {
            handle(res, [&] {
                auto a = engine_.analysis(req.matches[1]);
                const auto& t = *a->dataset->tensor;
                const auto metric = resolve_metric(t, param(req, "metric"));
                std::vector<std::size_t> nodes;
                if (req.has_param("nodes")) nodes = resolve_nodes(t, json(split_list(req.get_param_value("nodes"))));
                send(res, to_json(*engine_.baseline(req.matches[1], metric, nodes), t, true));
            });
        });

        server_.Put(R"(/sessions/([^/]+)/baseline)", [this](const Req& req, Res& res) {
            handle(res, [&] {
                auto a = engine_.analysis(req.matches[1]);
                const auto& t = *a->dataset->tensor;
                const auto j = body_json(req);
                const auto metric = resolve_metric(t, j.at("metric").get<std::string>());
                engine_.set_baseline_window(req.matches[1], metric, parse_window(j.value("window", json())));
                std::vector<std::size_t> nodes;
                if (j.contains("nodes")) nodes = resolve_nodes(t, j.at("nodes"));
                send(res, to_json(*engine_.baseline(req.matches[1], metric, nodes), t));
            });
        });

        server_.Post(R"(/sessions/([^/]+)/zscores)", [this](const Req& req, Res& res) {
            handle(res, [&] {
                auto a = engine_.analysis(req.matches[1]);
                const auto& t = *a->dataset->tensor;
                auto request = parse_zscore_request(body_json(req), t, a.get());
                auto z = engine_.run_zscores(req.matches[1], std::move(request));
                auto body = to_json(*z.matrix, t);
                body["stages"] = to_json(z.stages);
                send(res, body);
            });
        });

        server_.Post(R"(/sessions/([^/]+)/cancel)", [this](const Req& req, Res& res) {
            handle(res, [&] {
                engine_.cancel(req.matches[1]);
                send(res, json{{"cancelled", true}});
            });
        });
    }

    ServiceConfig cfg_;
    Engine engine_;
    httplib::Server server_;
};

}  // namespace nodescope
