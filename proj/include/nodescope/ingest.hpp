// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/tensor.hpp"

#include <charconv>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <tuple>
#include <unordered_map>

namespace nodescope {

/// How CSV columns map onto the tensor axes.
///
/// Long format has one reading per row (`node,metric,timestamp,value`).
/// Wide format has one row per timestamp and one column per metric; the node
/// id comes from `node_column` when set, otherwise from the file stem.
struct CsvLayout {
    enum class Format { Long, Wide };
    Format format = Format::Long;
    std::string node_column = "node";
    std::string metric_column = "metric";
    std::string timestamp_column = "timestamp";
    std::string value_column = "value";
    std::vector<std::string> metric_columns;  // wide only; empty = every other column

    static CsvLayout wide(std::string timestamp_column = "timestamp", std::string node_column = "") {
        CsvLayout l;
        l.format = Format::Wide;
        l.timestamp_column = std::move(timestamp_column);
        l.node_column = std::move(node_column);
        return l;
    }
};

struct IngestReport {
    std::size_t rows = 0;
    std::size_t duplicates = 0;
    std::size_t snapped = 0;
    std::size_t all_null_series = 0;
};

struct IngestResult {
    MonitoringTensor tensor;
    IngestReport report;
};

namespace csv {

/// Splits one CSV record. Handles double-quoted fields with "" escapes.
inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw Error("unterminated quoted field");
    out.push_back(std::move(cur));
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

inline int digits(std::string_view s, std::size_t pos, std::size_t count) {
    if (pos + count > s.size()) return -1;
    int v = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        if (s[i] < '0' || s[i] > '9') return -1;
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

/// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

/// Integer epoch seconds, or ISO-8601 `YYYY-MM-DD[T ]HH:MM:SS[.fff][Z|+HH:MM]`.
/// Fractional seconds are rounded to the nearest second; no offset means UTC.
inline bool parse_timestamp(std::string_view s, std::int64_t& out) {
    s = trim(s);
    if (s.empty()) return false;
    std::int64_t epoch = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), epoch);
    if (res.ec == std::errc{} && res.ptr == s.data() + s.size()) {
        out = epoch;
        return true;
    }
    double fractional_epoch = 0.0;
    if (parse_double(s, fractional_epoch) && s.find('-', 1) == std::string_view::npos) {
        out = static_cast<std::int64_t>(std::llround(fractional_epoch));
        return true;
    }
    const int year = digits(s, 0, 4), month = digits(s, 5, 2), day = digits(s, 8, 2);
    if (year < 0 || month < 1 || month > 12 || day < 1 || day > 31 || s[4] != '-' || s[7] != '-') return false;
    std::int64_t secs = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 86400;
    std::size_t pos = 10;
    if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
        const int hh = digits(s, pos + 1, 2), mm = digits(s, pos + 4, 2);
        if (hh < 0 || mm < 0 || hh > 23 || mm > 59 || s[pos + 3] != ':') return false;
        int ss = 0;
        pos += 6;
        if (pos < s.size() && s[pos] == ':') {
            ss = digits(s, pos + 1, 2);
            if (ss < 0 || ss > 60) return false;
            pos += 3;
        }
        double frac = 0.0;
        if (pos < s.size() && s[pos] == '.') {
            std::size_t end = pos + 1;
            while (end < s.size() && s[end] >= '0' && s[end] <= '9') ++end;
            parse_double(std::string("0") + std::string(s.substr(pos, end - pos)), frac);
            pos = end;
        }
        secs += hh * 3600 + mm * 60 + ss + (frac >= 0.5 ? 1 : 0);
        if (pos < s.size()) {
            if (s[pos] == 'Z') {
                ++pos;
            } else if (s[pos] == '+' || s[pos] == '-') {
                const int oh = digits(s, pos + 1, 2);
                const std::size_t mpos = (pos + 3 < s.size() && s[pos + 3] == ':') ? pos + 4 : pos + 3;
                const int om = digits(s, mpos, 2);
                if (oh < 0 || om < 0) return false;
                const int sign = s[pos] == '+' ? 1 : -1;
                secs -= sign * (oh * 3600 + om * 60);
                pos = mpos + 2;
            }
        }
    }
    if (pos != s.size()) return false;
    out = secs;
    return true;
}

/// Shortest text that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace csv

namespace detail {

struct RawReading {
    std::size_t node;
    std::size_t metric;
    std::int64_t timestamp;
    std::optional<double> value;
};

class Interner {
public:
    std::size_t id(const std::string& key) {
        auto [it, inserted] = index_.try_emplace(key, names_.size());
        if (inserted) names_.push_back(key);
        return it->second;
    }
    std::vector<std::string> take() { return std::move(names_); }

private:
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::string> names_;
};

inline std::size_t column_of(const std::vector<std::string>& header, const std::string& name,
                             const std::string& file) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(file, 1, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

inline std::optional<double> parse_value(std::string_view field, const std::string& file, std::size_t line) {
    field = csv::trim(field);
    if (field.empty() || field == "NaN" || field == "nan" || field == "null" || field == "NULL")
        return std::nullopt;
    double v = 0.0;
    if (!csv::parse_double(field, v) || !std::isfinite(v))
        throw ParseError(file, line, "invalid value '" + std::string(field) + "'");
    return v;
}

inline void read_stream(std::istream& in, const std::string& name, const CsvLayout& layout, Interner& nodes,
                        Interner& metrics, std::vector<RawReading>& out) {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!csv::trim(line).empty()) break;
    }
    if (lineno == 0 || csv::trim(line).empty()) return;
    try {
        header = csv::split(line);
    } catch (const Error& e) {
        throw ParseError(name, lineno, e.what());
    }
    for (auto& h : header) h = std::string(csv::trim(h));

    if (layout.format == CsvLayout::Format::Long) {
        const auto cn = column_of(header, layout.node_column, name);
        const auto cm = column_of(header, layout.metric_column, name);
        const auto ct = column_of(header, layout.timestamp_column, name);
        const auto cv = column_of(header, layout.value_column, name);
        const auto width = header.size();
        while (std::getline(in, line)) {
            ++lineno;
            if (csv::trim(line).empty()) continue;
            std::vector<std::string> f;
            try {
                f = csv::split(line);
            } catch (const Error& e) {
                throw ParseError(name, lineno, e.what());
            }
            if (f.size() != width)
                throw ParseError(name, lineno, "expected " + std::to_string(width) + " fields, got " +
                                                   std::to_string(f.size()));
            const std::string node(csv::trim(f[cn])), metric(csv::trim(f[cm]));
            if (node.empty() || metric.empty()) throw ParseError(name, lineno, "empty node or metric id");
            std::int64_t ts = 0;
            if (!csv::parse_timestamp(f[ct], ts))
                throw ParseError(name, lineno, "invalid timestamp '" + f[ct] + "'");
            out.push_back({nodes.id(node), metrics.id(metric), ts, parse_value(f[cv], name, lineno)});
        }
        return;
    }

    const auto ct = column_of(header, layout.timestamp_column, name);
    std::optional<std::size_t> cn;
    if (!layout.node_column.empty()) cn = column_of(header, layout.node_column, name);
    std::vector<std::pair<std::size_t, std::size_t>> metric_cols;  // column -> metric id
    if (layout.metric_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (c != ct && (!cn || c != *cn)) metric_cols.emplace_back(c, metrics.id(header[c]));
    } else {
        for (const auto& m : layout.metric_columns) metric_cols.emplace_back(column_of(header, m, name), metrics.id(m));
    }
    const std::string stem = std::filesystem::path(name).stem().string();
    std::optional<std::size_t> file_node;
    if (!cn) file_node = nodes.id(stem);
    while (std::getline(in, line)) {
        ++lineno;
        if (csv::trim(line).empty()) continue;
        std::vector<std::string> f;
        try {
            f = csv::split(line);
        } catch (const Error& e) {
            throw ParseError(name, lineno, e.what());
        }
        if (f.size() != header.size())
            throw ParseError(name, lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                               std::to_string(f.size()));
        std::int64_t ts = 0;
        if (!csv::parse_timestamp(f[ct], ts)) throw ParseError(name, lineno, "invalid timestamp '" + f[ct] + "'");
        std::size_t node = 0;
        if (cn) {
            const std::string id(csv::trim(f[*cn]));
            if (id.empty()) throw ParseError(name, lineno, "empty node id");
            node = nodes.id(id);
        } else {
            node = *file_node;
        }
        for (const auto& [c, m] : metric_cols) out.push_back({node, m, ts, parse_value(f[c], name, lineno)});
    }
}

/// Regular grid derived from raw timestamps. When the distinct timestamps
/// already sit on one grid its median gap is the interval; otherwise (clock
/// jitter splits the gaps) the median gap between consecutive readings of the
/// same series is used. The phase is the most common residue.
struct TimeGrid {
    std::int64_t interval = 1;
    std::int64_t phase = 0;

    /// Nearest grid point; exact half-interval ties go to the earlier point.
    std::int64_t snap(std::int64_t t) const {
        const std::int64_t rel = t - phase;
        std::int64_t k = rel >= 0 ? rel / interval : -((-rel + interval - 1) / interval);
        const std::int64_t below = phase + k * interval;
        const std::int64_t above = below + interval;
        return (t - below) <= (above - t) ? below : above;
    }

    static TimeGrid infer(const std::vector<std::int64_t>& distinct_sorted, std::vector<double> series_gaps) {
        TimeGrid g;
        if (distinct_sorted.size() < 2) {
            g.phase = distinct_sorted.empty() ? 0 : distinct_sorted.front();
            return g;
        }
        const auto rounded = [](double v) { return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(v))); };
        g.interval = rounded(MonitoringTensor::median_gap(distinct_sorted));
        const auto residue = [&](std::int64_t t) { return ((t % g.interval) + g.interval) % g.interval; };
        const bool regular = std::all_of(distinct_sorted.begin(), distinct_sorted.end(),
                                         [&](std::int64_t t) { return residue(t) == residue(distinct_sorted.front()); });
        if (!regular && !series_gaps.empty()) g.interval = rounded(detail::median(std::move(series_gaps)));
        std::map<std::int64_t, std::size_t> phases;
        for (auto t : distinct_sorted) ++phases[((t % g.interval) + g.interval) % g.interval];
        std::size_t best = 0;
        for (const auto& [p, count] : phases)
            if (count > best) {
                best = count;
                g.phase = p;
            }
        return g;
    }
};

inline IngestResult assemble(std::vector<RawReading>& rows, Interner& nodes, Interner& metrics) {
    if (rows.empty()) throw PreconditionError("empty input: no readings found");
    std::vector<std::int64_t> distinct;
    distinct.reserve(rows.size());
    for (const auto& r : rows) distinct.push_back(r.timestamp);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(rows[a].node, rows[a].metric, rows[a].timestamp) <
               std::tie(rows[b].node, rows[b].metric, rows[b].timestamp);
    });
    std::vector<double> gaps;
    for (std::size_t i = 1; i < order.size(); ++i) {
        const auto& p = rows[order[i - 1]];
        const auto& c = rows[order[i]];
        if (p.node == c.node && p.metric == c.metric && c.timestamp > p.timestamp)
            gaps.push_back(static_cast<double>(c.timestamp - p.timestamp));
    }
    const auto grid = TimeGrid::infer(distinct, std::move(gaps));

    IngestReport report;
    report.rows = rows.size();
    std::vector<std::int64_t> snapped_ts(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        snapped_ts[i] = grid.snap(rows[i].timestamp);
        if (snapped_ts[i] != rows[i].timestamp) ++report.snapped;
    }
    std::vector<std::int64_t> timestamps = snapped_ts;
    std::sort(timestamps.begin(), timestamps.end());
    timestamps.erase(std::unique(timestamps.begin(), timestamps.end()), timestamps.end());

    MonitoringTensor tensor(nodes.take(), metrics.take(), timestamps, static_cast<double>(grid.interval));
    std::vector<std::uint8_t> seen(tensor.nodes() * tensor.metrics() * tensor.times(), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto t = tensor.lower_index(snapped_ts[i]);
        const auto off = tensor.offset(rows[i].node, rows[i].metric, t);
        if (seen[off]) ++report.duplicates;
        seen[off] = 1;
        if (rows[i].value) tensor.set(rows[i].node, rows[i].metric, t, *rows[i].value);
        else tensor.set_null(rows[i].node, rows[i].metric, t);
    }
    for (std::size_t n = 0; n < tensor.nodes(); ++n)
        for (std::size_t m = 0; m < tensor.metrics(); ++m) {
            const auto mask = tensor.series_mask(n, m);
            if (std::all_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; })) ++report.all_null_series;
        }
    return {std::move(tensor), report};
}

}  // namespace detail

/// Parses in-memory CSV streams (`name` is used for error messages and, in
/// wide format without a node column, as the node id).
inline IngestResult ingest_streams(std::vector<std::pair<std::string, std::istream*>> inputs,
                                   const CsvLayout& layout = {}) {
    detail::Interner nodes, metrics;
    std::vector<detail::RawReading> rows;
    for (auto& [name, stream] : inputs) detail::read_stream(*stream, name, layout, nodes, metrics, rows);
    return detail::assemble(rows, nodes, metrics);
}

inline IngestResult ingest_csv(const std::vector<std::filesystem::path>& files, const CsvLayout& layout = {}) {
    if (files.empty()) throw PreconditionError("empty input: no files given");
    detail::Interner nodes, metrics;
    std::vector<detail::RawReading> rows;
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) throw Error("cannot open " + f.string());
        detail::read_stream(in, f.string(), layout, nodes, metrics, rows);
    }
    return detail::assemble(rows, nodes, metrics);
}

/// Writes every non-null reading in long format. Values use the shortest
/// round-trip representation, so re-ingesting reproduces them bit-exactly.
inline void export_long_csv(const MonitoringTensor& tensor, std::ostream& out) {
    out << "node,metric,timestamp,value\n";
    for (std::size_t n = 0; n < tensor.nodes(); ++n)
        for (std::size_t m = 0; m < tensor.metrics(); ++m)
            for (std::size_t t = 0; t < tensor.times(); ++t) {
                if (tensor.is_null(n, m, t)) continue;
                out << tensor.node_ids()[n] << ',' << tensor.metric_names()[m] << ',' << tensor.timestamps()[t]
                    << ',' << csv::format_double(tensor.value(n, m, t)) << '\n';
            }
}

}  // namespace nodescope
