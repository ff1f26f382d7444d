// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nodescope/common.hpp"

#include <json.hpp>

#include <cstdio>
#include <functional>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <typeindex>
#include <unordered_map>

namespace nodescope {

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Identifies one pipeline stage result. The hash covers the dataset, the
/// stage parameters in canonical JSON form and the upstream key, so changing
/// anything upstream changes every key below it.
struct StageKey {
    std::string stage;
    std::string dataset;
    std::uint64_t hash = 0;

    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
        return buf;
    }
    std::string id() const { return stage + ":" + hex(); }

    friend bool operator==(const StageKey& a, const StageKey& b) {
        return a.hash == b.hash && a.stage == b.stage && a.dataset == b.dataset;
    }
};

/// nlohmann's object type keeps keys sorted and its number formatting is
/// fixed, so dump() is canonical.
inline StageKey make_stage_key(std::string stage, std::string dataset, const nlohmann::json& params,
                               const StageKey* upstream = nullptr) {
    StageKey k{std::move(stage), std::move(dataset), 0};
    std::uint64_t h = fnv1a64(k.stage);
    h = fnv1a64(std::string_view("\x1f", 1), h);
    h = fnv1a64(k.dataset, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
    h = fnv1a64(params.dump(), h);
    if (upstream) {
        h = fnv1a64(std::string_view("\x1f", 1), h);
        h = fnv1a64(upstream->id(), h);
    }
    k.hash = h;
    return k;
}

struct CacheStats {
    std::size_t entries = 0;
    std::size_t bytes = 0;
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t coalesced = 0;  // misses that waited on another caller's computation
    std::uint64_t evictions = 0;
};

template <class T>
struct CacheResult {
    std::shared_ptr<const T> value;
    bool hit = false;
};

namespace detail {
template <class T>
std::size_t cached_bytes(const T& v) {
    return approx_bytes(v);  // found by ADL next to each stage type
}
}  // namespace detail

/// Thread-safe in-memory memo of stage results with LRU eviction by bytes.
class StageCache {
public:
    static constexpr std::size_t default_budget = std::size_t{2} << 30;

    explicit StageCache(std::size_t budget_bytes = default_budget) : budget_(budget_bytes) {}

    /// Returns the cached value for `key` or runs `producer` (a callable
    /// returning T). Concurrent misses on one key share a single producer run.
    /// A throwing producer leaves nothing behind and the exception propagates
    /// to every waiter.
    template <class T, class F>
    CacheResult<T> get_or_compute(const StageKey& key, F&& producer) {
        const std::string id = key.id();
        std::promise<Slot> promise;
        {
            std::unique_lock lock(mu_);
            if (auto it = entries_.find(id); it != entries_.end()) {
                check_type<T>(it->second.type);
                lru_.splice(lru_.begin(), lru_, it->second.lru);
                ++stats_.hits;
                return {std::static_pointer_cast<const T>(it->second.value), true};
            }
            ++stats_.misses;
            if (auto it = inflight_.find(id); it != inflight_.end()) {
                auto fut = it->second;
                ++stats_.coalesced;
                lock.unlock();
                Slot s = fut.get();
                check_type<T>(s.type);
                return {std::static_pointer_cast<const T>(s.value), false};
            }
            inflight_.emplace(id, promise.get_future().share());
        }
        std::shared_ptr<const T> value;
        try {
            value = std::make_shared<const T>(producer());
        } catch (...) {
            std::lock_guard lock(mu_);
            promise.set_exception(std::current_exception());
            inflight_.erase(id);
            throw;
        }
        const std::size_t bytes = detail::cached_bytes(*value);
        std::lock_guard lock(mu_);
        Slot slot{value, std::type_index(typeid(T))};
        promise.set_value(slot);
        inflight_.erase(id);
        if (bytes <= budget_) {
            lru_.push_front(id);
            entries_.insert_or_assign(id, Entry{slot.value, slot.type, bytes, key.dataset, lru_.begin()});
            stats_.bytes += bytes;
            evict_over_budget();
        }
        return {value, false};
    }

    bool contains(const StageKey& key) const {
        std::lock_guard lock(mu_);
        return entries_.count(key.id()) != 0;
    }

    /// Drops every entry derived from `dataset`; returns how many went.
    std::size_t invalidate(const std::string& dataset) {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (auto it = entries_.begin(); it != entries_.end();) {
            if (it->second.dataset == dataset) {
                stats_.bytes -= it->second.bytes;
                lru_.erase(it->second.lru);
                it = entries_.erase(it);
                ++n;
            } else {
                ++it;
            }
        }
        return n;
    }

    void clear() {
        std::lock_guard lock(mu_);
        entries_.clear();
        lru_.clear();
        stats_.bytes = 0;
    }

    CacheStats stats() const {
        std::lock_guard lock(mu_);
        CacheStats s = stats_;
        s.entries = entries_.size();
        return s;
    }

    std::size_t budget() const noexcept { return budget_; }

private:
    struct Slot {
        std::shared_ptr<const void> value;
        std::type_index type;
    };
    struct Entry {
        std::shared_ptr<const void> value;
        std::type_index type;
        std::size_t bytes;
        std::string dataset;
        std::list<std::string>::iterator lru;
    };

    template <class T>
    static void check_type(std::type_index stored) {
        if (stored != std::type_index(typeid(T))) throw Error("cache entry holds a different stage type");
    }

    void evict_over_budget() {
        while (stats_.bytes > budget_ && !lru_.empty()) {
            auto it = entries_.find(lru_.back());
            stats_.bytes -= it->second.bytes;
            entries_.erase(it);
            lru_.pop_back();
            ++stats_.evictions;
        }
    }

    std::size_t budget_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, Entry> entries_;
    std::list<std::string> lru_;  // front = most recently used
    std::unordered_map<std::string, std::shared_future<Slot>> inflight_;
    CacheStats stats_;
};

}  // namespace nodescope
