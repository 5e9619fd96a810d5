#pragma once

#include <algorithm>
#include <deque>
#include <set>
#include <vector>

#include "address.hpp"

namespace statenet {

struct peer_entry {
    node_identity peer;
    std::uint64_t last_seen = 0;
};

// Candidate order for storer-aware search: covering peers first (most
// specific prefix, then XOR-closest), then the rest by XOR distance.
// Proximity alone does not imply storage, hence the coverage tier.
struct candidate_order {
    address target;

    bool operator()(const node_identity& a, const node_identity& b) const
    {
        bool ca = covers(a, target);
        bool cb = covers(b, target);
        if (ca != cb) return ca;
        if (ca && a.prefix_len != b.prefix_len) return a.prefix_len > b.prefix_len;
        auto da = xor_distance(a.id, target);
        auto db = xor_distance(b.id, target);
        if (da != db) return da < db;
        return a.id < b.id;
    }
};

// k-buckets: bucket i holds peers sharing exactly i leading bits with the
// owner id, head = oldest, tail = most recently seen.
class routing_table {
public:
    explicit routing_table(node_identity owner, int bucket_capacity = 16)
        : owner_(std::move(owner)),
          capacity_(bucket_capacity),
          buckets_(static_cast<std::size_t>(owner_.id.width()))
    {}

    const node_identity& owner() const { return owner_; }
    int bucket_capacity() const { return capacity_; }
    int bucket_count() const { return static_cast<int>(buckets_.size()); }
    const std::deque<peer_entry>& bucket(int i) const { return buckets_[static_cast<std::size_t>(i)]; }

    std::size_t size() const
    {
        std::size_t n = 0;
        for (const auto& b : buckets_) n += b.size();
        return n;
    }

    // Records traffic from `peer`.  A full bucket pings its oldest entry:
    // a dead head is evicted for the newcomer, a live head moves to the
    // tail and the newcomer is discarded.
    template <class Probe>
    void observe(const node_identity& peer, Probe&& probe, std::uint64_t now)
    {
        if (peer.id == owner_.id) return;
        auto& bucket = buckets_[static_cast<std::size_t>(common_prefix_len(owner_.id, peer.id))];
        auto it = std::find_if(bucket.begin(), bucket.end(),
                               [&](const peer_entry& e) { return e.peer.id == peer.id; });
        if (it != bucket.end()) {
            peer_entry e = *it;
            e.last_seen = now;
            e.peer.endpoint = peer.endpoint;
            bucket.erase(it);
            bucket.push_back(e);
            return;
        }
        if (bucket.size() < static_cast<std::size_t>(capacity_)) {
            bucket.push_back({peer, now});
            return;
        }
        peer_entry head = bucket.front();
        if (probe(head.peer)) {
            bucket.pop_front();
            head.last_seen = now;
            bucket.push_back(head);
        } else {
            bucket.pop_front();
            bucket.push_back({peer, now});
        }
    }

    void erase(const address& id)
    {
        for (auto& b : buckets_) {
            auto it = std::find_if(b.begin(), b.end(),
                                   [&](const peer_entry& e) { return e.peer.id == id; });
            if (it != b.end()) {
                b.erase(it);
                return;
            }
        }
    }

    template <class Fn>
    void for_each_peer(Fn&& fn) const
    {
        for (const auto& b : buckets_)
            for (const auto& e : b) fn(e.peer);
    }

    // Up to n known peers whose prefix rule covers `key`: most specific
    // prefix first, ties by XOR distance to the key.
    std::vector<node_identity> find_storers(const address& key, std::size_t n) const
    {
        std::vector<node_identity> out;
        for_each_peer([&](const node_identity& p) {
            if (covers(p, key)) out.push_back(p);
        });
        sort_take(out, key, n);
        return out;
    }

    // Up to n known peers by ascending XOR distance to `target`.
    std::vector<node_identity> find_closest(const address& target, std::size_t n) const
    {
        std::vector<node_identity> out;
        out.reserve(size());
        for_each_peer([&](const node_identity& p) { out.push_back(p); });
        std::sort(out.begin(), out.end(), [&](const node_identity& a, const node_identity& b) {
            auto da = xor_distance(a.id, target);
            auto db = xor_distance(b.id, target);
            if (da != db) return da < db;
            return a.id < b.id;
        });
        if (out.size() > n) out.resize(n);
        return out;
    }

    // Lookup response: storers first, padded with closest peers, capped at n.
    std::vector<node_identity> answer_lookup(const address& target, std::size_t n) const
    {
        std::vector<node_identity> out = find_storers(target, n);
        if (out.size() < n) {
            for (const auto& p : find_closest(target, n)) {
                bool dup = false;
                for (const auto& q : out)
                    if (q.id == p.id) { dup = true; break; }
                if (!dup) out.push_back(p);
                if (out.size() == n) break;
            }
        }
        return out;
    }

private:
    static void sort_take(std::vector<node_identity>& v, const address& key, std::size_t n)
    {
        std::sort(v.begin(), v.end(), [&](const node_identity& a, const node_identity& b) {
            if (a.prefix_len != b.prefix_len) return a.prefix_len > b.prefix_len;
            auto da = xor_distance(a.id, key);
            auto db = xor_distance(b.id, key);
            if (da != db) return da < db;
            return a.id < b.id;
        });
        if (v.size() > n) v.resize(n);
    }

    node_identity owner_;
    int capacity_;
    std::vector<std::deque<peer_entry>> buckets_;
};

// Driver-agnostic iterative lookup: tracks the shortlist, hands out query
// rounds of up to alpha peers, and absorbs candidate responses.  The
// shortlist follows classic Kademlia (terminate once the `want` best seen
// candidates have all been queried) with the coverage-first order above.
class lookup_state {
public:
    lookup_state(address target, address self_id, int alpha, std::size_t want)
        : target_(std::move(target)),
          self_id_(std::move(self_id)),
          alpha_(alpha),
          want_(want),
          shortlist_(candidate_order{target_})
    {}

    void add_candidates(const std::vector<node_identity>& cands)
    {
        for (const auto& c : cands) {
            if (c.id == self_id_) continue;
            shortlist_.insert(c);
        }
    }

    // Up to alpha best unqueried candidates; counts a round when non-empty.
    std::vector<node_identity> next_round()
    {
        std::vector<node_identity> out;
        std::size_t scanned = 0;
        for (const auto& c : shortlist_) {
            if (scanned++ >= want_) break;  // only the `want` best matter
            if (queried_.count(c.id)) continue;
            out.push_back(c);
            if (out.size() == static_cast<std::size_t>(alpha_)) break;
        }
        for (const auto& c : out) queried_.insert(c.id);
        if (!out.empty()) ++rounds_;
        return out;
    }

    bool exhausted() const
    {
        std::size_t scanned = 0;
        for (const auto& c : shortlist_) {
            if (scanned++ >= want_) break;
            if (!queried_.count(c.id)) return false;
        }
        return true;
    }

    int rounds() const { return rounds_; }
    std::size_t queried_count() const { return queried_.size(); }

private:
    address target_;
    address self_id_;
    int alpha_;
    std::size_t want_;
    std::set<node_identity, candidate_order> shortlist_;
    std::set<address> queried_;
    int rounds_ = 0;
};

struct lookup_outcome {
    bool found = false;
    node_identity holder;
    int iterations = 0;
    int queries = 0;
};

// Synchronous lookup over an abstract query function, used by the search
// experiments.  QueryFn(peer, target) -> pair<bool has_payload,
// vector<node_identity> candidates>.
template <class QueryFn>
lookup_outcome iterative_lookup(const routing_table& table, const address& target, int alpha,
                                std::size_t want, QueryFn&& query)
{
    lookup_state st(target, table.owner().id, alpha, want);
    st.add_candidates(table.answer_lookup(target, want));
    lookup_outcome out;
    while (!st.exhausted()) {
        auto round = st.next_round();
        if (round.empty()) break;
        for (const auto& peer : round) {
            ++out.queries;
            auto [has, cands] = query(peer, target);
            if (has) {
                out.found = true;
                out.holder = peer;
                out.iterations = st.rounds();
                return out;
            }
            st.add_candidates(cands);
        }
    }
    out.iterations = st.rounds();
    return out;
}

} // namespace statenet
