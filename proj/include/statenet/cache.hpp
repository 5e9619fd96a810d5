#pragma once

#include <cstdint>
#include <set>
#include <tuple>
#include <variant>
#include <map>
#include <utility>

#include "address.hpp"
#include "hash.hpp"

namespace statenet {

struct cache_stats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t insertions = 0;
    std::uint64_t evictions = 0;
    std::uint64_t bypasses = 0;   // entries too large or out-frequencied
};

// Most-frequently-used cache segment with a byte capacity.  Eviction
// removes the lowest-frequency entry, ties broken by least recent access.
// An incoming entry never displaces a victim with a strictly higher
// frequency; oversized entries bypass the cache entirely.
template <class Key, class Value = std::monostate>
class mfu_segment {
public:
    explicit mfu_segment(std::uint64_t capacity_bytes) : capacity_(capacity_bytes) {}

    std::uint64_t capacity() const { return capacity_; }
    std::uint64_t used_bytes() const { return used_; }
    std::size_t size() const { return map_.size(); }
    const cache_stats& stats() const { return stats_; }

    bool contains(const Key& k) const { return map_.count(k) != 0; }

    const Value* peek(const Key& k) const
    {
        auto it = map_.find(k);
        return it == map_.end() ? nullptr : &it->second.value;
    }

    // Counts an access: bumps frequency and recency on a hit.
    Value* hit(const Key& k)
    {
        auto it = map_.find(k);
        if (it == map_.end()) {
            ++stats_.misses;
            return nullptr;
        }
        ++stats_.hits;
        order_.erase({it->second.freq, it->second.tick, k});
        ++it->second.freq;
        it->second.tick = ++tick_;
        order_.insert({it->second.freq, it->second.tick, k});
        return &it->second.value;
    }

    // Inserts a new entry with frequency 1 (or refreshes an existing one).
    // Returns true when the entry is resident afterwards.
    bool insert(const Key& k, std::uint64_t entry_bytes, Value v = {})
    {
        if (auto it = map_.find(k); it != map_.end()) {
            set_bytes(it, entry_bytes);
            it->second.value = std::move(v);
            return true;
        }
        if (entry_bytes > capacity_) {
            ++stats_.bypasses;
            return false;
        }
        if (!make_room(entry_bytes, 1)) {
            ++stats_.bypasses;
            return false;
        }
        entry e;
        e.freq = 1;
        e.tick = ++tick_;
        e.bytes = entry_bytes;
        e.value = std::move(v);
        order_.insert({e.freq, e.tick, k});
        used_ += entry_bytes;
        map_.emplace(k, std::move(e));
        ++stats_.insertions;
        return true;
    }

    // Adjusts a resident entry's charge (e.g. its proof grew); may evict
    // other entries but never the entry itself.
    void resize(const Key& k, std::uint64_t entry_bytes)
    {
        auto it = map_.find(k);
        if (it == map_.end()) return;
        set_bytes(it, entry_bytes);
    }

    void erase(const Key& k)
    {
        auto it = map_.find(k);
        if (it == map_.end()) return;
        order_.erase({it->second.freq, it->second.tick, k});
        used_ -= it->second.bytes;
        map_.erase(it);
    }

    template <class Fn>
    void for_each(Fn&& fn) const
    {
        for (const auto& [k, e] : map_) fn(k, e.bytes, e.value);
    }

    template <class Fn>
    void for_each_mut(Fn&& fn)
    {
        for (auto& [k, e] : map_) fn(k, e.bytes, e.value);
    }

private:
    struct entry {
        std::uint64_t freq = 0;
        std::uint64_t tick = 0;
        std::uint64_t bytes = 0;
        Value value{};
    };
    using order_key = std::tuple<std::uint64_t, std::uint64_t, Key>;
    using map_iter = typename std::map<Key, entry>::iterator;

    void set_bytes(map_iter it, std::uint64_t entry_bytes)
    {
        used_ -= it->second.bytes;
        it->second.bytes = entry_bytes;
        used_ += entry_bytes;
        while (used_ > capacity_) {
            auto victim = order_.begin();
            bool progressed = false;
            while (victim != order_.end()) {
                if (std::get<2>(*victim) != it->first) {
                    evict(*victim);
                    progressed = true;
                    break;
                }
                ++victim;
            }
            if (!progressed) break;  // only the entry itself remains
        }
    }

    bool make_room(std::uint64_t need, std::uint64_t incoming_freq)
    {
        while (used_ + need > capacity_) {
            auto victim = order_.begin();
            if (victim == order_.end()) return false;
            if (std::get<0>(*victim) > incoming_freq) return false;
            evict(*victim);
        }
        return true;
    }

    void evict(const order_key& ok)
    {
        const Key& k = std::get<2>(ok);
        auto it = map_.find(k);
        used_ -= it->second.bytes;
        map_.erase(it);
        order_.erase(ok);
        ++stats_.evictions;
    }

    std::uint64_t capacity_;
    std::uint64_t used_ = 0;
    std::uint64_t tick_ = 0;
    std::map<Key, entry> map_;
    std::set<order_key> order_;
    cache_stats stats_;
};

using slot_cache_key = std::pair<address, address>;  // (account, slot key)

struct segment_capacities {
    std::uint64_t headers = 0;
    std::uint64_t slots = 0;
    std::uint64_t code = 0;
};

// The three independently managed segments: account headers, slots, code.
template <class HeaderV, class SlotV, class CodeV>
struct segmented_cache {
    explicit segmented_cache(const segment_capacities& cap)
        : headers(cap.headers), slots(cap.slots), code(cap.code)
    {}

    mfu_segment<address, HeaderV> headers;
    mfu_segment<slot_cache_key, SlotV> slots;
    mfu_segment<digest, CodeV> code;
};

} // namespace statenet
