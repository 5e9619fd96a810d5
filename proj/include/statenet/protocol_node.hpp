#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "cache.hpp"
#include "messages.hpp"
#include "partial_state.hpp"
#include "routing.hpp"
#include "size_model.hpp"
#include "trace.hpp"

namespace statenet {

struct node_params {
    int fanout = 8;
    int alpha = 3;
    int lookup_width = 16;           // candidates returned per lookup reply
    segment_capacities cache;
    size_mode mode = size_mode::merkle;
    key_mapper mapper;
    std::uint64_t request_timeout_us = 2'000'000;
    int join_chunk_bits = 2;         // owned range splits into 2^bits chunks
    std::vector<std::uint32_t> static_gossip;  // scripted fanout (scenarios)
};

struct node_stats {
    std::uint64_t forwards = 0;
    std::uint64_t state_requests = 0;
    std::uint64_t state_responses_served = 0;
    std::uint64_t lookups_started = 0;
    std::uint64_t lookup_failures = 0;
    std::uint64_t remote_records_verified = 0;
    std::uint64_t proof_failures = 0;
    std::uint64_t blocks_executed = 0;
    std::uint64_t blocks_rejected = 0;
    std::uint64_t unverified_uses = 0;   // must stay zero
    std::uint64_t snapshot_exchanges = 0;
    std::uint64_t diff_requests = 0;
    std::uint64_t state_list_mismatches = 0;
};

struct cached_header {
    account_record record;
    merkle_proof proof;  // against the current global root
};

struct cached_slot {
    slot_value value;
    merkle_proof proof;  // against the owning account's storage root
};

// The validator state machine.  Driven entirely through on_message/on_timer
// by a deterministic scheduler; all outward effects go through env.
template <class H = sha256_hasher>
class protocol_node {
public:
    struct env {
        virtual ~env() = default;
        virtual std::uint64_t now_us() const = 0;
        virtual void send(std::uint32_t to, message msg) = 0;
        virtual void set_timer(std::uint64_t delay_us, std::uint64_t cookie) = 0;
        // synchronous liveness check; the simulator books the ping/pong
        virtual bool probe(const node_identity& peer) = 0;
        virtual std::uint64_t rand64() = 0;
        virtual void block_executed(std::uint64_t number, const digest& post_root) = 0;
    };

    protocol_node(node_identity self, node_params cfg, partial_state<H> st,
                  const nominal_sizes* noms, env* e)
        : self_(std::move(self)),
          cfg_(cfg),
          state_(std::move(st)),
          noms_(noms),
          env_(e),
          table_(self_, cfg.lookup_width),
          headers_(cfg.cache.headers),
          slots_(cfg.cache.slots),
          code_(cfg.cache.code)
    {}

    const node_identity& self() const { return self_; }
    routing_table& table() { return table_; }
    partial_state<H>& state() { return state_; }
    node_stats& stats() { return stats_; }
    const node_params& params() const { return cfg_; }
    bool synced() const { return join_.phase == join_phase::none; }

    mfu_segment<address, cached_header>& header_cache() { return headers_; }
    mfu_segment<slot_cache_key, cached_slot>& slot_cache() { return slots_; }
    mfu_segment<digest, code_blob>& code_cache() { return code_; }

    void bootstrap(const std::vector<node_identity>& peers)
    {
        for (const auto& p : peers) observe(p);
    }

    // Scenario hook: preload one account bundle into the caches.
    void preload_cache(const account_witness& w)
    {
        if (!verify_account_witness<H>(state_.global_root(), w))
            throw verification_error("cache preload does not verify");
        insert_header(w.key, *w.record, w.account_proof);
        for (const auto& s : w.slots)
            if (s.value) insert_slot(w.key, s.key, *s.value, s.proof);
        if (w.code) insert_code(w.code);
    }

    // --- block production --------------------------------------------------

    // Starts proposing: resolves every touched item (locally, from cache, or
    // via lookups), executes, then announces block + state list.
    void propose(std::uint64_t number, std::vector<transaction> txs)
    {
        pending_block pb;
        pb.blk.number = number;
        pb.blk.proposer = self_.endpoint;
        pb.blk.parent_root = state_.global_root();
        pb.blk.txs = std::move(txs);
        pb.proposing = true;
        pb.sender = self_.endpoint;
        pb.list = declared_list(pb.blk);
        pending_.emplace(number, std::move(pb));
        seen_.insert(number);
        auto& entry = pending_.at(number);
        compute_needs(entry);
        if (!fetch_missing_via_lookup(entry)) try_execute(entry);
    }

    // --- message entry points ------------------------------------------------

    void on_message(const node_identity& from, const message& msg)
    {
        observe(from);
        std::visit([&](const auto& m) { handle(from, m); }, msg);
    }

    void on_timer(std::uint64_t cookie)
    {
        auto it = pending_.find(cookie);
        if (it == pending_.end() || it->second.executed) return;
        // sender did not deliver in time: fall back to the search path
        if (!it->second.awaiting_response) return;
        it->second.awaiting_response = false;
        fetch_missing_via_lookup(it->second);
    }

    // Missing pieces of a state list relative to owned storage and caches,
    // at slot granularity; code is checked by code hash.
    std::vector<wanted_entry> compute_missing(const state_list& list)
    {
        std::vector<wanted_entry> out;
        for (const auto& e : list.entries) {
            const address key = cfg_.mapper.map(e.account);
            if (state_.covers_key(key)) continue;
            wanted_entry w;
            w.account = e.account;
            const cached_header* h = headers_.peek(key);
            if (!h) {
                w.code = e.code_needed;
            } else if (e.code_needed && !code_.contains(h->record.code_hash)
                       && !state_.code(h->record.code_hash)) {
                w.code = true;
            }
            for (const auto& raw_slot : e.slots) {
                if (!slots_.contains({key, cfg_.mapper.map(raw_slot)})) w.slots.push_back(raw_slot);
            }
            if (!h || w.code || !w.slots.empty()) out.push_back(std::move(w));
        }
        return out;
    }

    // --- join / state sync -----------------------------------------------------

    // Starts from empty (or stale) owned storage: pulls snapshot chunks for
    // the owned range, then repairs divergence through diff descent until a
    // server confirms the owned subtree digest.
    void begin_join(bool have_stale_state)
    {
        join_.phase = have_stale_state ? join_phase::diffing : join_phase::snapshotting;
        join_.next_chunk = 0;
        join_.chunks = 1u << cfg_.join_chunk_bits;
        if (static_cast<int>(cfg_.join_chunk_bits) + self_.prefix_len > state_.width())
            join_.chunks = 1;
        if (join_.phase == join_phase::diffing)
            join_.frontier.emplace_back(state_.owned_prefix(), self_.prefix_len);
        pick_join_server();
        advance_join();
    }

private:
    enum class join_phase { none, snapshotting, diffing };

    struct pending_need {
        bool header = false;
        bool code = false;
        std::vector<address> raw_slots;
        std::uint32_t code_size = 0;
        bool contract = false;
    };

    struct pending_block {
        block blk;
        state_list list;
        std::uint32_t sender = 0;
        bool proposing = false;
        bool executed = false;
        bool awaiting_response = false;
        std::map<address, pending_need> needs;          // by raw account
        std::map<address, account_witness> fetched;     // by state key
        std::map<digest, code_blob> code_blobs;         // shared across accounts
        std::set<address> inflight;                     // raw accounts under lookup
        std::vector<std::pair<std::uint32_t, msg_state_request>> deferred;
    };

    // Pre-state witnesses for an executed block, served to later requesters
    // so that proofs stay pinned to that block's parent root.
    struct served_bundle {
        digest parent_root = zero_digest;
        std::map<address, account_witness> items;  // by state key
    };

    struct pending_lookup {
        pending_lookup(std::uint64_t id, address target, address self_id, int alpha,
                       std::size_t want)
            : lookup_id(id), target_key(target), ls(std::move(target), std::move(self_id), alpha, want)
        {}

        std::uint64_t id() const { return lookup_id; }

        std::uint64_t lookup_id;
        address target_key;
        lookup_state ls;
        std::uint64_t block_number = 0;
        address raw_account;
        std::vector<address> slot_keys;  // state keys
        bool want_code = false;
        int outstanding = 0;
    };

    struct join_state {
        join_phase phase = join_phase::none;
        node_identity server{};
        bool have_server = false;
        std::uint32_t next_chunk = 0;
        std::uint32_t chunks = 0;
        std::vector<std::pair<address, int>> frontier;  // diff positions
        std::set<std::pair<address, int>> outstanding_diffs;
        bool repaired = false;  // something changed during this diff pass
    };

    // --- plumbing ---------------------------------------------------------------

    void observe(const node_identity& peer)
    {
        if (peer.id == self_.id) return;
        table_.observe(peer, [&](const node_identity& p) { return env_->probe(p); },
                       env_->now_us());
    }

    void send(std::uint32_t to, message msg) { env_->send(to, std::move(msg)); }

    // --- gossip ----------------------------------------------------------------

    void forward_announce(const msg_block_announce& ann, std::uint32_t skip_endpoint)
    {
        if (!cfg_.static_gossip.empty()) {
            for (auto ep : cfg_.static_gossip) {
                send(ep, ann);
                ++stats_.forwards;
            }
            return;
        }
        std::vector<node_identity> peers;
        table_.for_each_peer([&](const node_identity& p) {
            if (p.endpoint != skip_endpoint && p.endpoint != self_.endpoint) peers.push_back(p);
        });
        for (int i = 0; i < cfg_.fanout && !peers.empty(); ++i) {
            std::size_t pick = env_->rand64() % peers.size();
            send(peers[pick].endpoint, ann);
            ++stats_.forwards;
            peers.erase(peers.begin() + static_cast<std::ptrdiff_t>(pick));
        }
    }

    void handle(const node_identity& from, const msg_block_announce& ann)
    {
        if (seen_.count(ann.blk.number)) return;
        seen_.insert(ann.blk.number);

        // forward first: propagation must not wait for state retrieval
        forward_announce(ann, from.endpoint);

        if (join_.phase != join_phase::none) return;  // syncing nodes gossip only
        if (ann.blk.parent_root != state_.global_root()) {
            ++stats_.blocks_rejected;
            return;
        }

        pending_block pb;
        pb.blk = ann.blk;
        pb.list = ann.list;
        pb.sender = from.endpoint;
        pending_.emplace(ann.blk.number, std::move(pb));
        auto& entry = pending_.at(ann.blk.number);
        compute_needs(entry);

        if (entry.needs.empty()) {
            try_execute(entry);
            return;
        }
        msg_state_request req;
        req.block_number = entry.blk.number;
        for (const auto& [raw, need] : entry.needs) {
            wanted_entry w;
            w.account = raw;
            w.code = need.code;
            w.slots = need.raw_slots;
            req.wanted.push_back(std::move(w));
        }
        entry.awaiting_response = true;
        ++stats_.state_requests;
        send(entry.sender, std::move(req));
        env_->set_timer(cfg_.request_timeout_us, entry.blk.number);
    }

    void handle(const node_identity& from, const msg_state_request& req)
    {
        // a request can race our own execution of that block: answer once
        // the pre-state bundle exists
        if (auto pit = pending_.find(req.block_number);
            pit != pending_.end() && !pit->second.executed) {
            pit->second.deferred.emplace_back(from.endpoint, req);
            return;
        }
        serve_state_request(from.endpoint, req);
    }

    void serve_state_request(std::uint32_t to, const msg_state_request& req)
    {
        msg_state_response resp;
        resp.block_number = req.block_number;
        auto bundle = served_.find(req.block_number);
        std::set<digest> code_sent;
        for (const auto& w : req.wanted) {
            std::optional<account_witness> item;
            if (bundle != served_.end())
                item = serve_from_bundle(bundle->second, w, code_sent);
            if (item)
                resp.items.push_back(std::move(*item));
            else
                resp.not_held.push_back(w.account);
        }
        ++stats_.state_responses_served;
        send(to, std::move(resp));
    }

    // Filters the retained witness down to the requested slots and code.
    std::optional<account_witness> serve_from_bundle(const served_bundle& bundle,
                                                     const wanted_entry& w,
                                                     std::set<digest>& code_sent)
    {
        auto it = bundle.items.find(cfg_.mapper.map(w.account));
        if (it == bundle.items.end()) return std::nullopt;
        account_witness out;
        out.key = it->second.key;
        out.record = it->second.record;
        out.account_proof = it->second.account_proof;
        if (w.all_slots) {
            out.slots = it->second.slots;
        } else {
            for (const auto& raw : w.slots) {
                const address skey = cfg_.mapper.map(raw);
                bool found = false;
                for (const auto& s : it->second.slots)
                    if (s.key == skey) {
                        out.slots.push_back(s);
                        found = true;
                        break;
                    }
                if (!found) return std::nullopt;
            }
        }
        if (w.code && out.record) {
            if (!it->second.code) return std::nullopt;
            if (code_sent.insert(out.record->code_hash).second) out.code = it->second.code;
        }
        return out;
    }

    void handle(const node_identity& from, const msg_state_response& resp)
    {
        (void)from;
        auto it = pending_.find(resp.block_number);
        if (it == pending_.end() || it->second.executed) return;
        auto& entry = it->second;
        entry.awaiting_response = false;

        bool all_good = true;
        for (const auto& item : resp.items) {
            if (!verify_account_witness<H>(state_.global_root(), item)) {
                ++stats_.proof_failures;
                all_good = false;
                continue;
            }
            stats_.remote_records_verified += 1 + item.slots.size();
            absorb_witness(entry, item);
        }
        (void)all_good;
        try_execute(entry);
        if (!entry.executed) {
            // incomplete or partially rejected response: search for the rest
            compute_needs(entry);
            auto needs_copy = entry.needs;
            for (const auto& [raw, need] : needs_copy) start_lookup(entry, raw, need);
        }
    }

    void handle(const node_identity& from, const msg_ping&) { send(from.endpoint, msg_pong{}); }
    void handle(const node_identity&, const msg_pong&) {}

    void handle(const node_identity& from, const msg_lookup_request& req)
    {
        msg_lookup_response resp;
        resp.lookup_id = req.lookup_id;
        wanted_entry w;
        w.account = req.target;  // already a state key
        w.all_slots = req.all_slots;
        w.code = req.code;
        for (const auto& s : req.slots) w.slots.push_back(s);
        std::set<digest> code_sent;
        auto item = serve_state_key(req.target, w, code_sent, true);
        if (item) {
            resp.found = true;
            resp.payload = std::move(*item);
        } else {
            resp.candidates = table_.answer_lookup(req.target, cfg_.lookup_width);
        }
        send(from.endpoint, std::move(resp));
    }

    void handle(const node_identity& from, const msg_lookup_response& resp)
    {
        auto it = lookups_.find(resp.lookup_id);
        if (it == lookups_.end()) return;
        auto& lk = it->second;
        lk.outstanding = lk.outstanding > 0 ? lk.outstanding - 1 : 0;

        if (resp.found && resp.payload
            && verify_account_witness<H>(state_.global_root(), *resp.payload)) {
            stats_.remote_records_verified += 1 + resp.payload->slots.size();
            auto pit = pending_.find(lk.block_number);
            address raw = lk.raw_account;
            if (pit != pending_.end() && !pit->second.executed) {
                absorb_witness(pit->second, *resp.payload);
                std::uint64_t bn = lk.block_number;
                erase_lookup(resp.lookup_id);
                auto& entry = pending_.at(bn);
                entry.inflight.erase(raw);
                try_execute(entry);
            } else {
                erase_lookup(resp.lookup_id);
            }
            return;
        }
        if (resp.found) ++stats_.proof_failures;  // bad payload: keep searching
        lk.ls.add_candidates(resp.candidates);
        (void)from;
        pump_lookup(lk);
    }

    void handle(const node_identity& from, const msg_snapshot_request& req)
    {
        msg_snapshot_response resp;
        try {
            resp.snap = state_.subtree_snapshot(req.path, req.path_len);
            resp.held = true;
        } catch (const not_held_error&) {
            resp.held = false;
        }
        send(from.endpoint, std::move(resp));
    }

    void handle(const node_identity& from, const msg_snapshot_response& resp)
    {
        if (join_.phase == join_phase::none) return;
        ++stats_.snapshot_exchanges;
        if (!resp.held || !verify_snapshot<H>(resp.snap, state_.width())) {
            if (!resp.held)
                next_join_server();
            else
                ++stats_.proof_failures;
            advance_join();
            return;
        }
        state_.load_snapshot(resp.snap);
        if (join_.phase == join_phase::snapshotting) {
            ++join_.next_chunk;
            if (join_.next_chunk >= join_.chunks) {
                join_.phase = join_phase::diffing;
                join_.frontier.clear();
                join_.frontier.emplace_back(state_.owned_prefix(), self_.prefix_len);
            }
        } else {
            join_.repaired = true;  // a diff-phase repair landed
        }
        (void)from;
        advance_join();
    }

    void handle(const node_identity& from, const msg_diff_request& req)
    {
        msg_diff_response resp;
        resp.path = req.path;
        resp.path_len = req.path_len;
        try {
            resp.digests = state_.diff_hashes(req.path, req.path_len);
            resp.held = true;
        } catch (const not_held_error&) {
            resp.held = false;
        }
        send(from.endpoint, std::move(resp));
    }

    void handle(const node_identity& from, const msg_diff_response& resp)
    {
        (void)from;
        if (join_.phase != join_phase::diffing) return;
        join_.outstanding_diffs.erase({resp.path, resp.path_len});
        if (!resp.held) {
            next_join_server();
            advance_join();
            return;
        }
        diff_result mine = state_.diff_hashes(resp.path, resp.path_len);
        if (mine.node != resp.digests.node) {
            if (resp.path_len >= state_.width()) {
                request_snapshot(resp.path, resp.path_len);
                return;
            }
            bool left_differs = mine.child0 != resp.digests.child0;
            bool right_differs = mine.child1 != resp.digests.child1;
            // a differing interior digest implies at least one child differs
            if (left_differs)
                join_.frontier.emplace_back(resp.path.truncated(resp.path_len), resp.path_len + 1);
            if (right_differs)
                join_.frontier.emplace_back(
                    resp.path.truncated(resp.path_len).with_bit(resp.path_len, true),
                    resp.path_len + 1);
            // when both children agree but the parent differs the peer
            // advanced mid-descent; restart from the top
            if (!left_differs && !right_differs)
                join_.frontier.emplace_back(state_.owned_prefix(), self_.prefix_len);
        }
        advance_join();
    }

    void handle(const node_identity&, const msg_blob&) {}

    // --- needs / resolution -------------------------------------------------------

    // The proposer knows its access list up front; this is the declared
    // manifest used both for resolution and for the announcement.
    state_list declared_list(const block& blk)
    {
        state_list list;
        std::map<address, state_list_entry> agg;
        for (const auto& tx : blk.txs) {
            for (const auto& op : tx.ops) {
                auto& e = agg[op.account];
                e.account = op.account;
                switch (op.kind) {
                case op_kind::read_slot:
                case op_kind::write_slot: {
                    e.kind = account_kind::contract;
                    bool dup = false;
                    for (const auto& s : e.slots)
                        if (s == op.slot) { dup = true; break; }
                    if (!dup) e.slots.push_back(op.slot);
                    break;
                }
                case op_kind::exec_code:
                    e.kind = account_kind::contract;
                    e.code_needed = true;
                    e.code_size = op.code_size;
                    break;
                default:
                    break;
                }
            }
        }
        for (auto& [raw, e] : agg) {
            std::sort(e.slots.begin(), e.slots.end());
            list.entries.push_back(std::move(e));
        }
        return list;
    }

    void compute_needs(pending_block& entry)
    {
        entry.needs.clear();
        for (const auto& e : entry.list.entries) {
            const address key = cfg_.mapper.map(e.account);
            if (state_.covers_key(key)) continue;
            pending_need need;
            need.contract = e.kind == account_kind::contract;
            need.code_size = e.code_size;
            const cached_header* h = headers_.peek(key);
            const account_witness* fetched = nullptr;
            if (auto it = entry.fetched.find(key); it != entry.fetched.end()) fetched = &it->second;
            if (!h && !fetched) {
                need.header = true;
                need.code = e.code_needed;
            } else if (e.code_needed) {
                digest ch = h ? h->record.code_hash
                              : (fetched->record ? fetched->record->code_hash : zero_digest);
                if (ch != zero_digest && !code_.contains(ch) && !state_.code(ch)
                    && !(fetched && fetched->code) && !entry.code_blobs.count(ch))
                    need.code = true;
            }
            for (const auto& raw_slot : e.slots) {
                const address skey = cfg_.mapper.map(raw_slot);
                bool have = slots_.contains({key, skey});
                if (!have && fetched)
                    for (const auto& s : fetched->slots)
                        if (s.key == skey) { have = true; break; }
                if (!have) need.raw_slots.push_back(raw_slot);
            }
            if (need.header || need.code || !need.raw_slots.empty())
                entry.needs[e.account] = std::move(need);
        }
    }

    // Returns true when lookups were started (resolution continues async).
    bool fetch_missing_via_lookup(pending_block& entry)
    {
        compute_needs(entry);
        if (entry.needs.empty()) return false;
        auto needs_copy = entry.needs;
        for (const auto& [raw, need] : needs_copy) start_lookup(entry, raw, need);
        return true;
    }

    void start_lookup(pending_block& entry, const address& raw, const pending_need& need)
    {
        if (!entry.inflight.insert(raw).second) return;  // one lookup per account
        pending_lookup lk(next_lookup_id_, cfg_.mapper.map(raw), self_.id, cfg_.alpha,
                          static_cast<std::size_t>(cfg_.lookup_width));
        lk.block_number = entry.blk.number;
        lk.raw_account = raw;
        for (const auto& rs : need.raw_slots) lk.slot_keys.push_back(cfg_.mapper.map(rs));
        lk.want_code = need.code;
        lk.ls.add_candidates(
            table_.answer_lookup(lk.target_key, static_cast<std::size_t>(cfg_.lookup_width)));
        ++stats_.lookups_started;
        auto [it, fresh] = lookups_.emplace(next_lookup_id_, std::move(lk));
        ++next_lookup_id_;
        if (fresh) pump_lookup(it->second);
    }

    void pump_lookup(pending_lookup& lk)
    {
        if (lk.outstanding > 0) return;
        auto round = lk.ls.next_round();
        if (round.empty()) {
            ++stats_.lookup_failures;
            if (auto pit = pending_.find(lk.block_number); pit != pending_.end())
                pit->second.inflight.erase(lk.raw_account);
            erase_lookup(lk.id());
            return;
        }
        msg_lookup_request req;
        req.lookup_id = lk.id();
        req.target = lk.target_key;
        req.slots = lk.slot_keys;
        req.code = lk.want_code;
        lk.outstanding = static_cast<int>(round.size());
        for (const auto& peer : round) send(peer.endpoint, req);
    }

    void erase_lookup(std::uint64_t id) { lookups_.erase(id); }

    void absorb_witness(pending_block& entry, const account_witness& w)
    {
        if (w.code && w.record) entry.code_blobs[w.record->code_hash] = w.code;
        auto [it, fresh] = entry.fetched.emplace(w.key, w);
        if (!fresh) {
            // merge newly fetched slots/code into the existing bundle
            auto& dst = it->second;
            for (const auto& s : w.slots) {
                bool dup = false;
                for (const auto& d : dst.slots)
                    if (d.key == s.key) { dup = true; break; }
                if (!dup) dst.slots.push_back(s);
            }
            if (!dst.code && w.code) dst.code = w.code;
        }
    }

    // Serves one lookup target from owned state or cache; nullopt = not held.
    std::optional<account_witness> serve_state_key(const address& key, const wanted_entry& w,
                                                   std::set<digest>& code_sent, bool key_is_mapped)
    {
        if (state_.covers_key(key)) {
            std::optional<std::vector<address>> slot_keys;
            if (!w.all_slots) {
                std::vector<address> sks;
                for (const auto& raw : w.slots)
                    sks.push_back(key_is_mapped ? raw : cfg_.mapper.map(raw));
                slot_keys = std::move(sks);
            }
            auto item = state_.get_with_proof(key, slot_keys, w.code);
            if (item.code) {
                if (!code_sent.insert(item.record->code_hash).second) item.code = nullptr;
            }
            return item;
        }
        // cache-backed serving
        const cached_header* h = headers_.hit(key);
        if (!h) return std::nullopt;
        account_witness item;
        item.key = key;
        item.record = h->record;
        item.account_proof = h->proof;
        if (w.all_slots) return std::nullopt;  // cache cannot enumerate a full slot set
        for (const auto& raw : w.slots) {
            const address skey = key_is_mapped ? raw : cfg_.mapper.map(raw);
            const cached_slot* s = slots_.hit({key, skey});
            if (!s) return std::nullopt;
            proven_slot ps;
            ps.key = skey;
            ps.value = s->value;
            ps.proof = s->proof;
            item.slots.push_back(std::move(ps));
        }
        if (w.code) {
            code_blob blob;
            if (const code_blob* c = code_.hit(h->record.code_hash)) blob = *c;
            if (!blob) blob = state_.code(h->record.code_hash);
            if (!blob) return std::nullopt;
            if (code_sent.insert(h->record.code_hash).second) item.code = blob;
        }
        return item;
    }

    // --- execution ------------------------------------------------------------

    void try_execute(pending_block& entry)
    {
        if (entry.executed) return;
        compute_needs(entry);
        if (!entry.needs.empty()) return;

        exec_view view;
        std::vector<account_witness> witnesses;
        served_bundle bundle;
        bundle.parent_root = entry.blk.parent_root;
        if (!build_view(entry, view, witnesses, bundle)) return;

        exec_outcome outcome = execute_block(entry.blk, view, cfg_.mapper);
        if (!entry.proposing && !same_manifest(outcome.touched, entry.list)) {
            ++stats_.state_list_mismatches;
            ++stats_.blocks_rejected;
            entry.executed = true;
            return;
        }

        state_update upd =
            state_.apply_block_writes(outcome.writes, witnesses, entry.blk.parent_root);
        if (entry.proposing) {
            entry.blk.post_root = upd.new_root;
            entry.list = outcome.touched;  // announce the trace-exact manifest
        } else if (upd.new_root != entry.blk.post_root) {
            ++stats_.blocks_rejected;
            entry.executed = true;
            return;
        }

        refresh_caches(entry, outcome, upd);
        entry.executed = true;
        ++stats_.blocks_executed;

        // retain the pre-state witnesses and answer requests that raced us
        served_[entry.blk.number] = std::move(bundle);
        while (served_.size() > 4) served_.erase(served_.begin());
        for (auto& [to, req] : entry.deferred) serve_state_request(to, req);
        entry.deferred.clear();

        env_->block_executed(entry.blk.number, upd.new_root);

        if (entry.proposing) {
            msg_block_announce ann;
            ann.blk = entry.blk;
            ann.list = entry.list;
            forward_announce(ann, self_.endpoint);
        }
    }

    bool build_view(pending_block& entry, exec_view& view, std::vector<account_witness>& witnesses,
                    served_bundle& bundle)
    {
        for (const auto& e : entry.list.entries) {
            const address key = cfg_.mapper.map(e.account);
            if (state_.covers_key(key)) {
                auto rec = state_.record(key);
                view.accounts[key] = rec;
                std::vector<address> slot_keys;
                for (const auto& raw_slot : e.slots) {
                    const address skey = cfg_.mapper.map(raw_slot);
                    view.slots[{key, skey}] = state_.slot(key, skey);
                    slot_keys.push_back(skey);
                }
                if (e.code_needed && rec) {
                    if (state_.code(rec->code_hash)) view.code_present.insert(rec->code_hash);
                }
                // pre-state witness retained for later requesters
                bundle.items.emplace(key,
                                     state_.get_with_proof(key, slot_keys, e.code_needed));
                continue;
            }
            // assemble a witness from fetched + cached pieces
            account_witness wit;
            wit.key = key;
            auto fit = entry.fetched.find(key);
            if (fit != entry.fetched.end()) {
                wit = fit->second;
            } else if (const cached_header* h = headers_.peek(key)) {
                wit.record = h->record;
                wit.account_proof = h->proof;
            } else {
                return false;  // resolution incomplete
            }
            view.accounts[key] = wit.record;
            for (const auto& raw_slot : e.slots) {
                const address skey = cfg_.mapper.map(raw_slot);
                bool have = false;
                for (const auto& s : wit.slots)
                    if (s.key == skey) {
                        view.slots[{key, skey}] = s.value;
                        have = true;
                        break;
                    }
                if (!have) {
                    const cached_slot* s = slots_.peek({key, skey});
                    if (!s) return false;
                    proven_slot ps;
                    ps.key = skey;
                    ps.value = s->value;
                    ps.proof = s->proof;
                    wit.slots.push_back(ps);
                    view.slots[{key, skey}] = s->value;
                }
            }
            if (e.code_needed && wit.record) {
                digest ch = wit.record->code_hash;
                if (!wit.code) {
                    if (const code_blob* c = code_.peek(ch))
                        wit.code = *c;
                    else if (auto it = entry.code_blobs.find(ch); it != entry.code_blobs.end())
                        wit.code = it->second;
                    else
                        wit.code = state_.code(ch);
                }
                if (!wit.code) return false;
                view.code_present.insert(ch);
            }
            bundle.items.emplace(wit.key, wit);
            witnesses.push_back(std::move(wit));
        }
        return true;
    }

    static bool same_manifest(const state_list& a, const state_list& b)
    {
        if (a.entries.size() != b.entries.size()) return false;
        for (std::size_t i = 0; i < a.entries.size(); ++i) {
            const auto& x = a.entries[i];
            const auto& y = b.entries[i];
            if (x.account != y.account || x.kind != y.kind || x.slots != y.slots
                || x.code_needed != y.code_needed)
                return false;
        }
        return true;
    }

    // --- cache maintenance --------------------------------------------------------

    std::uint64_t header_entry_bytes(account_kind kind) const
    {
        size_model m;
        std::uint64_t bytes = kind == account_kind::contract ? 124 : 60;
        if (cfg_.mode == size_mode::merkle)
            bytes += noms_ ? m.proof_bytes_for_entries(noms_->account_entries)
                           : 32 * static_cast<std::uint64_t>(state_.width())
                                 + proof_framing_bytes(state_.width());
        return bytes;
    }

    std::uint64_t slot_entry_bytes(const address& acct_key) const
    {
        size_model m;
        std::uint64_t bytes = 32;
        if (cfg_.mode == size_mode::merkle)
            bytes += noms_ ? m.proof_bytes_for_entries(noms_->slots_for(acct_key))
                           : 32 * static_cast<std::uint64_t>(state_.width())
                                 + proof_framing_bytes(state_.width());
        return bytes;
    }

    void insert_header(const address& key, const account_record& rec, const merkle_proof& proof)
    {
        headers_.insert(key, header_entry_bytes(rec.kind), {rec, proof});
    }

    void insert_slot(const address& acct, const address& skey, const slot_value& v,
                     const merkle_proof& proof)
    {
        slots_.insert({acct, skey}, slot_entry_bytes(acct), {v, proof});
    }

    void insert_code(const code_blob& blob)
    {
        if (blob) code_.insert(H::hash(*blob), blob->size(), blob);
    }

    void refresh_caches(pending_block& entry, const exec_outcome& outcome, const state_update& upd)
    {
        // 1. refresh retained proofs against the new root
        headers_.for_each_mut([&](const address& key, std::uint64_t, cached_header& h) {
            refresh_levels(key, 0, h.proof.levels, upd.account_changed);
            h.proof.root = upd.new_root;
        });
        for (const auto& [acct, change] : upd.storage_changed) {
            slots_.for_each_mut([&](const slot_cache_key& k, std::uint64_t, cached_slot& s) {
                if (k.first != acct) return;
                refresh_levels(k.second, 0, s.proof.levels, change.second);
                s.proof.root = change.first;
            });
        }

        // 2. fold the block's own writes into resident entries
        std::map<address, const account_write*> write_of;
        for (const auto& w : outcome.writes) write_of[w.key] = &w;
        headers_.for_each_mut([&](const address& key, std::uint64_t, cached_header& h) {
            auto it = write_of.find(key);
            if (it == write_of.end()) return;
            h.record.nonce = it->second->nonce;
            h.record.balance = it->second->balance;
            if (auto sc = upd.storage_changed.find(key); sc != upd.storage_changed.end())
                h.record.storage_root = sc->second.first;
            h.proof.leaf = trie_hash<H>::leaf(h.record.serialize());
        });
        slots_.for_each_mut([&](const slot_cache_key& k, std::uint64_t, cached_slot& s) {
            auto it = write_of.find(k.first);
            if (it == write_of.end()) return;
            for (const auto& [sk, sv] : it->second->slot_writes)
                if (sk == k.second) {
                    s.value = sv;
                    s.proof.leaf = trie_hash<H>::leaf(byte_view(sv.data(), sv.size()));
                }
        });

        // 3. bump frequencies for touched residents, insert fetched entries
        for (const auto& e : entry.list.entries) {
            const address key = cfg_.mapper.map(e.account);
            if (state_.covers_key(key)) continue;
            auto fit = entry.fetched.find(key);
            const account_write* w = nullptr;
            if (auto wi = write_of.find(key); wi != write_of.end()) w = wi->second;

            if (headers_.hit(key) == nullptr) {
                // not resident: insert from the fetched witness, post-update
                if (fit == entry.fetched.end()) continue;
                const auto& fw = fit->second;
                if (!fw.record) continue;  // proven absent accounts are not cached
                account_record rec = *fw.record;
                merkle_proof proof = fw.account_proof;
                refresh_levels(key, 0, proof.levels, upd.account_changed);
                proof.root = upd.new_root;
                if (w) {
                    rec.nonce = w->nonce;
                    rec.balance = w->balance;
                    if (auto sc = upd.storage_changed.find(key); sc != upd.storage_changed.end())
                        rec.storage_root = sc->second.first;
                }
                proof.leaf = trie_hash<H>::leaf(rec.serialize());
                insert_header(key, rec, proof);
            }

            for (const auto& raw_slot : e.slots) {
                const address skey = cfg_.mapper.map(raw_slot);
                if (slots_.hit({key, skey}) != nullptr) continue;
                if (fit == entry.fetched.end()) continue;
                for (const auto& s : fit->second.slots) {
                    if (s.key != skey || !s.value) continue;
                    slot_value v = *s.value;
                    merkle_proof proof = s.proof;
                    if (auto sc = upd.storage_changed.find(key); sc != upd.storage_changed.end()) {
                        refresh_levels(skey, 0, proof.levels, sc->second.second);
                        proof.root = sc->second.first;
                    }
                    if (w)
                        for (const auto& [wsk, wsv] : w->slot_writes)
                            if (wsk == skey) {
                                v = wsv;
                                proof.leaf = trie_hash<H>::leaf(byte_view(v.data(), v.size()));
                            }
                    insert_slot(key, skey, v, proof);
                    break;
                }
            }

            if (e.code_needed) {
                digest ch = zero_digest;
                if (const cached_header* h = headers_.peek(key)) ch = h->record.code_hash;
                if (ch != zero_digest) {
                    if (code_.hit(ch) == nullptr && fit != entry.fetched.end() && fit->second.code)
                        insert_code(fit->second.code);
                }
            }
        }
    }

    // --- join plumbing ---------------------------------------------------------

    void pick_join_server()
    {
        auto storers = table_.find_storers(self_.id, 8);
        join_.have_server = false;
        for (const auto& s : storers) {
            if (s.prefix_len <= self_.prefix_len) {
                join_.server = s;
                join_.have_server = true;
                return;
            }
        }
        if (!storers.empty()) {
            join_.server = storers.front();
            join_.have_server = true;
        }
    }

    void next_join_server()
    {
        auto storers = table_.find_storers(self_.id, 8);
        for (const auto& s : storers) {
            if (s.prefix_len <= self_.prefix_len && s.id != join_.server.id) {
                join_.server = s;
                join_.have_server = true;
                return;
            }
        }
    }

    void request_snapshot(const address& path, int len)
    {
        msg_snapshot_request req;
        req.path = path.truncated(len);
        req.path_len = len;
        send(join_.server.endpoint, req);
    }

    void advance_join()
    {
        if (!join_.have_server || join_.phase == join_phase::none) return;
        if (join_.phase == join_phase::snapshotting) {
            if (join_.next_chunk < join_.chunks) {
                int bits = 0;
                for (std::uint32_t c = join_.chunks; c > 1; c >>= 1) ++bits;
                address path = state_.owned_prefix();
                for (int b = 0; b < bits; ++b)
                    path.set_bit(self_.prefix_len + b, (join_.next_chunk >> (bits - 1 - b)) & 1);
                request_snapshot(path, self_.prefix_len + bits);
            }
            return;
        }
        // diffing: drain the frontier
        while (!join_.frontier.empty()) {
            auto [path, len] = join_.frontier.back();
            join_.frontier.pop_back();
            if (join_.outstanding_diffs.insert({path.truncated(len), len}).second) {
                msg_diff_request req;
                req.path = path.truncated(len);
                req.path_len = len;
                ++stats_.diff_requests;
                send(join_.server.endpoint, req);
            }
        }
        if (join_.outstanding_diffs.empty()) {
            if (join_.repaired) {
                // something changed this pass: confirm with a clean root diff
                join_.repaired = false;
                join_.frontier.emplace_back(state_.owned_prefix(), self_.prefix_len);
                advance_join();
                return;
            }
            join_.phase = join_phase::none;  // synced
        }
    }

    node_identity self_;
    node_params cfg_;
    partial_state<H> state_;
    const nominal_sizes* noms_;
    env* env_;
    routing_table table_;
    mfu_segment<address, cached_header> headers_;
    mfu_segment<slot_cache_key, cached_slot> slots_;
    mfu_segment<digest, code_blob> code_;
    node_stats stats_;
    std::set<std::uint64_t> seen_;
    std::map<std::uint64_t, pending_block> pending_;
    std::map<std::uint64_t, served_bundle> served_;
    std::map<std::uint64_t, pending_lookup> lookups_;
    std::uint64_t next_lookup_id_ = 1;
    join_state join_;
};

} // namespace statenet
