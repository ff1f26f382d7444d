// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/common.hpp"

#include <limits>
#include <optional>
#include <span>
#include <unordered_set>
#include <utility>

namespace nodescope {

/// Node x metric x time reading cube. Values are stored node-major, then
/// metric, then time, so one (node, metric) series is contiguous.
class MonitoringTensor {
public:
    MonitoringTensor() = default;

    /// Allocates a cube with every reading marked null.
    MonitoringTensor(std::vector<std::string> node_ids, std::vector<std::string> metric_names,
                     std::vector<std::int64_t> timestamps, double sample_interval = 0.0)
        : node_ids_(std::move(node_ids)),
          metric_names_(std::move(metric_names)),
          timestamps_(std::move(timestamps)),
          values_(node_ids_.size() * metric_names_.size() * timestamps_.size(), 0.0),
          null_mask_(values_.size(), 1),
          sample_interval_(sample_interval) {
        if (sample_interval_ <= 0.0) sample_interval_ = median_gap(timestamps_);
    }

    std::size_t nodes() const noexcept { return node_ids_.size(); }
    std::size_t metrics() const noexcept { return metric_names_.size(); }
    std::size_t times() const noexcept { return timestamps_.size(); }

    const std::vector<std::string>& node_ids() const noexcept { return node_ids_; }
    const std::vector<std::string>& metric_names() const noexcept { return metric_names_; }
    const std::vector<std::int64_t>& timestamps() const noexcept { return timestamps_; }
    double sample_interval() const noexcept { return sample_interval_; }

    std::size_t offset(std::size_t node, std::size_t metric, std::size_t t) const noexcept {
        return (node * metrics() + metric) * times() + t;
    }

    double value(std::size_t node, std::size_t metric, std::size_t t) const noexcept {
        return values_[offset(node, metric, t)];
    }
    bool is_null(std::size_t node, std::size_t metric, std::size_t t) const noexcept {
        return null_mask_[offset(node, metric, t)] != 0;
    }

    void set(std::size_t node, std::size_t metric, std::size_t t, double v) noexcept {
        values_[offset(node, metric, t)] = v;
        null_mask_[offset(node, metric, t)] = 0;
    }
    void set_null(std::size_t node, std::size_t metric, std::size_t t) noexcept {
        values_[offset(node, metric, t)] = 0.0;
        null_mask_[offset(node, metric, t)] = 1;
    }

    std::span<const double> series(std::size_t node, std::size_t metric) const noexcept {
        return {values_.data() + offset(node, metric, 0), times()};
    }
    std::span<double> series(std::size_t node, std::size_t metric) noexcept {
        return {values_.data() + offset(node, metric, 0), times()};
    }
    std::span<const std::uint8_t> series_mask(std::size_t node, std::size_t metric) const noexcept {
        return {null_mask_.data() + offset(node, metric, 0), times()};
    }
    std::span<std::uint8_t> series_mask(std::size_t node, std::size_t metric) noexcept {
        return {null_mask_.data() + offset(node, metric, 0), times()};
    }

    const std::vector<std::uint8_t>& null_mask() const noexcept { return null_mask_; }
    const std::vector<double>& raw_values() const noexcept { return values_; }

    bool dense() const noexcept {
        return std::none_of(null_mask_.begin(), null_mask_.end(), [](std::uint8_t b) { return b != 0; });
    }

    std::optional<std::size_t> node_index(std::string_view id) const {
        return find(node_ids_, id);
    }
    std::optional<std::size_t> metric_index(std::string_view name) const {
        return find(metric_names_, name);
    }

    /// Index of the first timestamp >= t (times() when none).
    std::size_t lower_index(std::int64_t t) const {
        return static_cast<std::size_t>(
            std::lower_bound(timestamps_.begin(), timestamps_.end(), t) - timestamps_.begin());
    }
    /// One past the last timestamp <= t.
    std::size_t upper_index(std::int64_t t) const {
        return static_cast<std::size_t>(
            std::upper_bound(timestamps_.begin(), timestamps_.end(), t) - timestamps_.begin());
    }

    /// nodes x [t_begin, t_end) matrix for one metric.
    Matrix slice(std::size_t metric, std::span<const std::size_t> nodes, std::size_t t_begin,
                 std::size_t t_end) const {
        Matrix out(static_cast<Eigen::Index>(nodes.size()), static_cast<Eigen::Index>(t_end - t_begin));
        for (std::size_t r = 0; r < nodes.size(); ++r) {
            const auto s = series(nodes[r], metric);
            for (std::size_t t = t_begin; t < t_end; ++t)
                out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t - t_begin)) = s[t];
        }
        return out;
    }

    /// Throws PreconditionError when a structural invariant does not hold.
    void validate() const {
        for (std::size_t i = 1; i < timestamps_.size(); ++i)
            require(timestamps_[i] > timestamps_[i - 1], "timestamps must be strictly increasing");
        require(unique(node_ids_), "duplicate node id");
        require(unique(metric_names_), "duplicate metric name");
        require(values_.size() == nodes() * metrics() * times(), "value cube shape mismatch");
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (!null_mask_[i]) require(std::isfinite(values_[i]), "non-null reading is not finite");
    }

    static double median_gap(const std::vector<std::int64_t>& ts) {
        if (ts.size() < 2) return 1.0;
        std::vector<double> gaps;
        gaps.reserve(ts.size() - 1);
        for (std::size_t i = 1; i < ts.size(); ++i) gaps.push_back(static_cast<double>(ts[i] - ts[i - 1]));
        return detail::median(std::move(gaps));
    }

private:
    static std::optional<std::size_t> find(const std::vector<std::string>& v, std::string_view key) {
        auto it = std::find(v.begin(), v.end(), key);
        if (it == v.end()) return std::nullopt;
        return static_cast<std::size_t>(it - v.begin());
    }
    static bool unique(const std::vector<std::string>& v) {
        std::unordered_set<std::string> seen(v.begin(), v.end());
        return seen.size() == v.size();
    }

    std::vector<std::string> node_ids_;
    std::vector<std::string> metric_names_;
    std::vector<std::int64_t> timestamps_;
    std::vector<double> values_;
    std::vector<std::uint8_t> null_mask_;
    double sample_interval_ = 1.0;
};

/// User selection of nodes, metrics and an inclusive time window.
struct TensorSelection {
    std::vector<std::size_t> nodes;
    std::vector<std::size_t> metrics;
    std::int64_t t_start = std::numeric_limits<std::int64_t>::min();
    std::int64_t t_end = std::numeric_limits<std::int64_t>::max();

    static TensorSelection all(const MonitoringTensor& tensor) {
        TensorSelection sel;
        sel.nodes.resize(tensor.nodes());
        std::iota(sel.nodes.begin(), sel.nodes.end(), std::size_t{0});
        sel.metrics.resize(tensor.metrics());
        std::iota(sel.metrics.begin(), sel.metrics.end(), std::size_t{0});
        if (tensor.times() > 0) {
            sel.t_start = tensor.timestamps().front();
            sel.t_end = tensor.timestamps().back();
        }
        return sel;
    }

    /// Half-open index range [first, second) of the window; validates the selection.
    std::pair<std::size_t, std::size_t> time_range(const MonitoringTensor& tensor) const {
        require(!nodes.empty(), "node selection is empty");
        require(!metrics.empty(), "metric selection is empty");
        require(t_start <= t_end, "time window start is after its end");
        for (auto n : nodes) require(n < tensor.nodes(), "node index out of range");
        for (auto m : metrics) require(m < tensor.metrics(), "metric index out of range");
        const auto lo = tensor.lower_index(t_start);
        const auto hi = tensor.upper_index(t_end);
        require(lo < hi, "time window does not intersect the tensor's timestamps");
        return {lo, hi};
    }
};

/// Nodes whose readings are null on every metric, per timestamp.
struct NullActivity {
    struct Node {
        std::size_t node;
        std::optional<int> label;
    };
    struct Entry {
        std::int64_t timestamp;
        std::vector<Node> nodes;
    };
    std::vector<Entry> entries;
};

inline NullActivity null_activity(const MonitoringTensor& tensor, std::int64_t from, std::int64_t to,
                                  std::span<const int> labels = {}) {
    NullActivity out;
    const auto lo = tensor.lower_index(from);
    const auto hi = tensor.upper_index(to);
    for (std::size_t t = lo; t < hi; ++t) {
        NullActivity::Entry entry{tensor.timestamps()[t], {}};
        for (std::size_t n = 0; n < tensor.nodes(); ++n) {
            bool all_null = tensor.metrics() > 0;
            for (std::size_t m = 0; m < tensor.metrics() && all_null; ++m) all_null = tensor.is_null(n, m, t);
            if (!all_null) continue;
            std::optional<int> label;
            if (n < labels.size() && labels[n] >= 0) label = labels[n];
            entry.nodes.push_back({n, label});
        }
        out.entries.push_back(std::move(entry));
    }
    return out;
}

enum class ImputePolicy { ForwardBackwardFill, ZeroFill };

inline std::string_view to_string(ImputePolicy p) {
    return p == ImputePolicy::ZeroFill ? "zero-fill" : "forward-then-backward-fill";
}

inline ImputePolicy parse_impute_policy(std::string_view s) {
    if (s == "zero-fill" || s == "zero") return ImputePolicy::ZeroFill;
    if (s == "forward-then-backward-fill" || s == "ffill") return ImputePolicy::ForwardBackwardFill;
    throw PreconditionError("unknown imputation policy: " + std::string(s));
}

struct ImputeResult {
    MonitoringTensor tensor;                 // dense
    std::vector<std::uint8_t> original_mask; // provenance
    std::vector<std::pair<std::size_t, std::size_t>> all_null_series;  // (node, metric), filled with 0
};

/// Fills one series in place. Returns false when the series was entirely null.
inline bool fill_series(std::span<double> values, std::span<std::uint8_t> mask, ImputePolicy policy) {
    const std::size_t n = values.size();
    auto first = std::find(mask.begin(), mask.end(), std::uint8_t{0});
    if (first == mask.end()) {
        std::fill(values.begin(), values.end(), 0.0);
        std::fill(mask.begin(), mask.end(), std::uint8_t{0});
        return false;
    }
    if (policy == ImputePolicy::ZeroFill) {
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i]) values[i] = 0.0;
    } else {
        const auto lead = static_cast<std::size_t>(first - mask.begin());
        for (std::size_t i = 0; i < lead; ++i) values[i] = values[lead];
        double last = values[lead];
        for (std::size_t i = lead; i < n; ++i) {
            if (mask[i]) values[i] = last;
            else last = values[i];
        }
    }
    std::fill(mask.begin(), mask.end(), std::uint8_t{0});
    return true;
}

inline ImputeResult impute(const MonitoringTensor& tensor, ImputePolicy policy = ImputePolicy::ForwardBackwardFill) {
    ImputeResult out{tensor, tensor.null_mask(), {}};
    for (std::size_t n = 0; n < tensor.nodes(); ++n)
        for (std::size_t m = 0; m < tensor.metrics(); ++m)
            if (!fill_series(out.tensor.series(n, m), out.tensor.series_mask(n, m), policy))
                out.all_null_series.emplace_back(n, m);
    return out;
}

}  // namespace nodescope
