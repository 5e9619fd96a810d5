#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "protocol_node.hpp"
#include "size_model.hpp"
#include "world_state.hpp"

namespace statenet {

// One-way latency samples between nodes.  The region matrix ships as a
// config file (configs/regions_default.cfg); constant and uniform models
// cover unit tests and micro-benchmarks.
struct latency_model {
    enum class kind { constant, uniform, regions };

    kind model = kind::constant;
    std::uint64_t constant_us = 50'000;
    std::uint64_t uniform_lo_us = 10'000;
    std::uint64_t uniform_hi_us = 150'000;
    std::vector<std::string> region_names;
    std::vector<double> region_weights;
    std::vector<std::vector<std::uint64_t>> rtt_us;  // symmetric matrix

    int sample_region(rng& r) const
    {
        if (model != kind::regions || region_weights.empty()) return 0;
        double total = 0;
        for (double w : region_weights) total += w;
        double u = r.unit() * total;
        for (std::size_t i = 0; i < region_weights.size(); ++i) {
            u -= region_weights[i];
            if (u <= 0) return static_cast<int>(i);
        }
        return static_cast<int>(region_weights.size() - 1);
    }

    std::uint64_t sample_us(rng& r, int from_region, int to_region) const
    {
        switch (model) {
        case kind::constant: return constant_us;
        case kind::uniform:
            return uniform_lo_us + r.bounded(uniform_hi_us - uniform_lo_us + 1);
        case kind::regions: {
            std::uint64_t rtt = rtt_us[static_cast<std::size_t>(from_region)]
                                      [static_cast<std::size_t>(to_region)];
            // one-way latency with +/-10% deterministic jitter
            std::uint64_t base = rtt / 2;
            std::uint64_t jitter = base / 5 == 0 ? 0 : r.bounded(base / 5 + 1);
            return base - base / 10 + jitter;
        }
        }
        return constant_us;
    }

    // File format: `region <name> <weight>` lines, then `rtt <a> <b> <ms>`
    // entries (symmetric, self entries allowed).
    static latency_model parse_regions(const std::string& text)
    {
        latency_model m;
        m.model = kind::regions;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        std::map<std::string, std::size_t> index;
        std::vector<std::tuple<std::string, std::string, std::uint64_t>> rtts;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ls(line);
            std::string tag;
            ls >> tag;
            if (tag == "region") {
                std::string name;
                double weight;
                if (!(ls >> name >> weight)) throw parse_error("bad region line", lineno);
                index[name] = m.region_names.size();
                m.region_names.push_back(name);
                m.region_weights.push_back(weight);
            } else if (tag == "rtt") {
                std::string a, b;
                double ms;
                if (!(ls >> a >> b >> ms)) throw parse_error("bad rtt line", lineno);
                rtts.emplace_back(a, b, static_cast<std::uint64_t>(ms * 1000.0));
            } else {
                throw parse_error("unknown directive '" + tag + "'", lineno);
            }
        }
        const std::size_t n = m.region_names.size();
        if (n == 0) throw parse_error("no regions defined");
        m.rtt_us.assign(n, std::vector<std::uint64_t>(n, 0));
        for (const auto& [a, b, us] : rtts) {
            if (!index.count(a) || !index.count(b)) throw parse_error("rtt names unknown region");
            m.rtt_us[index[a]][index[b]] = us;
            m.rtt_us[index[b]][index[a]] = us;
        }
        return m;
    }
};

struct sim_config {
    std::uint32_t nodes = 200;
    int width = 32;
    int prefix_len = 4;                   // constant prefix length
    std::vector<int> prefix_lens;         // per-node override when non-empty
    int bucket_size = 16;
    int fanout = 8;
    int alpha = 3;
    int lookup_width = 16;
    segment_capacities cache;
    latency_model latency;
    std::uint64_t uplink_bytes_per_sec = 12'500'000;  // 100 Mbit/s
    std::uint64_t seed = 1;
    size_mode mode = size_mode::merkle;
    bool hashed_keys = true;
    // spread node ids across all prefixes so every key has a storer (the
    // availability assumption); uniform random ids otherwise
    bool stratify_ids = false;
    std::uint32_t bootstrap_peers = 256;
    std::uint64_t request_timeout_us = 10'000'000;
    std::uint64_t block_gap_us = 1000;
    std::uint64_t validation_us = 0;      // per-block compute time model
};

struct sim_log_record {
    std::uint64_t time_us = 0;
    std::uint64_t seq = 0;
    std::uint32_t from = 0;
    std::uint32_t to = 0;
    std::uint8_t kind = 0;      // message variant index
    std::uint64_t block = 0;    // block number when the message names one
    std::uint64_t bytes = 0;
};

struct bandwidth_flows {
    byte_split sent;
    byte_split received;
};

struct bandwidth_ledger {
    std::vector<bandwidth_flows> per_node;
    std::map<std::uint64_t, bandwidth_flows> per_block;
    bandwidth_flows total;
    std::uint64_t dropped_messages = 0;

    void book_send(std::uint32_t node, std::uint64_t block, const byte_split& s)
    {
        per_node[node].sent += s;
        per_block[block].sent += s;
        total.sent += s;
    }

    void book_receive(std::uint32_t node, std::uint64_t block, const byte_split& s)
    {
        per_node[node].received += s;
        per_block[block].received += s;
        total.received += s;
    }

    bool conserved() const
    {
        for (std::size_t i = 0; i < byte_category_count; ++i)
            if (total.sent.by_category[i] != total.received.by_category[i]) return false;
        return true;
    }
};

inline std::uint64_t block_of_message(const message& msg)
{
    if (const auto* a = std::get_if<msg_block_announce>(&msg)) return a->blk.number;
    if (const auto* r = std::get_if<msg_state_request>(&msg)) return r->block_number;
    if (const auto* r = std::get_if<msg_state_response>(&msg)) return r->block_number;
    if (const auto* b = std::get_if<msg_blob>(&msg)) return b->id;
    return 0;
}

// Deterministic discrete-event network simulator over protocol nodes.
// Events fire in (timestamp, sequence) order; the clock is integer
// microseconds; every random draw comes from seeded per-purpose streams.
template <class H = sha256_hasher>
class simnet {
public:
    explicit simnet(sim_config cfg)
        : cfg_(std::move(cfg)),
          root_rng_(cfg_.seed),
          topo_rng_(root_rng_.child(1)),
          link_rng_(root_rng_.child(2)),
          drive_rng_(root_rng_.child(3)),
          world_(cfg_.width)
    {
        model_.width = cfg_.width;
    }

    // Builds genesis from the trace, creates the node population with their
    // owned slices, and bootstraps routing tables.
    void init_from_trace(const access_trace& trace)
    {
        genesis_ = derive_genesis(trace);
        trace_ = &trace;
        key_mapper mapper{cfg_.width, cfg_.hashed_keys};
        for (const auto& [raw, acct] : genesis_.accounts) {
            account_record rec;
            rec.kind = acct.kind;
            rec.balance = genesis_balance(raw);
            const address key = mapper.map(raw);
            if (acct.kind == account_kind::contract) {
                auto blob = make_code_blob(acct.code_id, acct.code_size);
                rec.code_hash = world_.set_code(blob);
                for (const auto& rk : acct.slot_keys)
                    world_.set_slot(key, mapper.map(rk), genesis_slot_value(raw, rk));
                nominals_.contract_slots[key] = genesis_spec::nominal_slots(acct.access_count);
            }
            world_.set_account(key, rec);
        }
        build_nodes();
    }

    // Propagation-only topology: routing tables, no state.
    void init_topology_only()
    {
        build_nodes();
    }

    std::uint32_t node_count() const { return static_cast<std::uint32_t>(nodes_.size()); }
    protocol_node<H>& node(std::uint32_t i) { return *nodes_[i]->proto; }
    const node_identity& identity(std::uint32_t i) const { return nodes_[i]->id; }
    world_state<H>& genesis_world() { return world_; }
    const nominal_sizes& nominals() const { return nominals_; }
    bandwidth_ledger& ledger() { return ledger_; }
    std::uint64_t now_us() const { return now_; }
    const std::vector<sim_log_record>& log() const { return log_; }
    void capture_log(bool on) { capture_ = on; }

    digest log_hash() const
    {
        auto ctx = hash_ctx_;  // finish() pads; hash a copy
        return ctx.finish();
    }

    // --- event scheduling ----------------------------------------------------

    std::uint64_t schedule(std::uint64_t delay_us, std::uint32_t target, message payload,
                           std::uint32_t from)
    {
        events_.push(event{now_ + delay_us, next_seq_++, target, from, event::kind_t::deliver,
                           std::move(payload), 0, {}});
        return next_seq_ - 1;
    }

    void schedule_timer(std::uint32_t target, std::uint64_t delay_us, std::uint64_t cookie)
    {
        events_.push(event{now_ + delay_us, next_seq_++, target, target, event::kind_t::timer, {},
                           cookie, {}});
    }

    void schedule_action(std::uint64_t delay_us, std::function<void()> fn)
    {
        events_.push(event{now_ + delay_us, next_seq_++, 0, 0, event::kind_t::action, {}, 0,
                           std::move(fn)});
    }

    // Uplink-serialized transmission: the sender's uplink is a FIFO; the
    // message leaves after serialization and arrives one latency later.
    void transmit(std::uint32_t from, std::uint32_t to, message msg)
    {
        byte_split split = message_bytes(msg, cfg_.mode, model_, trace_ ? &nominals_ : nullptr);
        const std::uint64_t bytes = split.total();
        const std::uint64_t block = block_of_message(msg);
        ledger_.book_send(from, block, split);
        const std::uint64_t send_seq = next_seq_++;
        note_log(send_seq, from, to, static_cast<std::uint8_t>(msg.index()), block, bytes);

        auto& up = nodes_[from]->uplink_free_us;
        const std::uint64_t start = std::max(now_, up);
        const std::uint64_t ser =
            bytes == 0 ? 0 : ceil_div(bytes * 1'000'000ull, cfg_.uplink_bytes_per_sec);
        up = start + ser;
        if (!nodes_[to]->alive) {
            ++ledger_.dropped_messages;
            return;
        }
        const std::uint64_t lat = cfg_.latency.sample_us(link_rng_, nodes_[from]->region,
                                                         nodes_[to]->region);
        const std::uint64_t deliver = start + ser + lat;
        events_.push(event{deliver, next_seq_++, to, from, event::kind_t::deliver, std::move(msg),
                           0, {}});
    }

    // Synchronous liveness probe; books the ping (and pong when alive).
    bool probe(std::uint32_t from, const node_identity& peer)
    {
        byte_split ping = message_bytes(msg_ping{}, cfg_.mode, model_, nullptr);
        ledger_.book_send(from, 0, ping);
        if (peer.endpoint >= nodes_.size() || !nodes_[peer.endpoint]->alive) return false;
        ledger_.book_receive(peer.endpoint, 0, ping);
        byte_split pong = message_bytes(msg_pong{}, cfg_.mode, model_, nullptr);
        ledger_.book_send(peer.endpoint, 0, pong);
        ledger_.book_receive(from, 0, pong);
        return true;
    }

    // Runs until the queue drains or the clock passes `until_us`.
    void run(std::uint64_t until_us = ~0ull)
    {
        while (!events_.empty()) {
            event ev = events_.top();
            if (ev.time_us > until_us) break;
            events_.pop();
            now_ = ev.time_us;
            dispatch(ev);
        }
    }

    bool idle() const { return events_.empty(); }

    // --- protocol experiment driver -------------------------------------------

    // Replays the trace: one block at a time, proposer drawn per block,
    // network quiesced between blocks (block production is paced far slower
    // than propagation, as on the real network).
    struct run_report {
        std::uint64_t blocks_proposed = 0;
        std::uint64_t blocks_executed_total = 0;
        bool converged = true;
        digest final_root = zero_digest;
    };

    // Successive calls continue from where the previous one stopped.
    run_report run_trace_protocol(std::size_t max_blocks = ~std::size_t{0})
    {
        run_report rep;
        if (!trace_) throw error("simnet: no trace loaded");
        const auto& blocks = trace_->blocks;
        for (std::size_t done = 0; trace_cursor_ < blocks.size() && done < max_blocks; ++done) {
            const std::size_t i = trace_cursor_++;
            std::uint32_t proposer =
                static_cast<std::uint32_t>(drive_rng_.bounded(nodes_.size()));
            current_block_ = blocks[i].number;
            schedule_action(cfg_.block_gap_us, [this, i, proposer]() {
                node(proposer).propose(trace_->blocks[i].number, trace_->blocks[i].txs);
            });
            run();
            ++rep.blocks_proposed;
        }
        digest root = node(0).state().global_root();
        rep.final_root = root;
        for (auto& n : nodes_) {
            if (!n->proto->synced()) continue;
            rep.blocks_executed_total += n->proto->stats().blocks_executed;
            if (n->proto->state().global_root() != root) rep.converged = false;
        }
        return rep;
    }

    // --- propagation experiment -----------------------------------------------

    struct coverage_result {
        std::vector<double> receive_times_ms;  // sorted, one per reached node
        double coverage_at(double fraction) const
        {
            if (receive_times_ms.empty()) return 0;
            std::size_t idx = static_cast<std::size_t>(
                std::ceil(fraction * static_cast<double>(total_nodes)));
            if (idx == 0) idx = 1;
            if (idx > receive_times_ms.size()) return -1;  // never reached
            return receive_times_ms[idx - 1];
        }
        std::size_t total_nodes = 0;
    };

    // Floods one opaque blob from a seeded origin through the gossip fanout
    // and reports the block arrival time distribution.
    coverage_result run_propagation(std::uint64_t blob_bytes, std::uint64_t blob_id = 1)
    {
        blob_seen_.assign(nodes_.size(), false);
        blob_times_.assign(nodes_.size(), 0);
        std::uint32_t origin = static_cast<std::uint32_t>(drive_rng_.bounded(nodes_.size()));
        const std::uint64_t t0 = now_;
        blob_seen_[origin] = true;
        blob_times_[origin] = now_;
        forward_blob(origin, msg_blob{blob_id, blob_bytes});
        run();
        coverage_result res;
        res.total_nodes = nodes_.size();
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (blob_seen_[i])
                res.receive_times_ms.push_back(
                    static_cast<double>(blob_times_[i] - t0) / 1000.0);
        std::sort(res.receive_times_ms.begin(), res.receive_times_ms.end());
        return res;
    }

    // --- churn -------------------------------------------------------------------

    void churn_out(std::uint32_t node_idx) { nodes_[node_idx]->alive = false; }

    // Spawns a node with empty owned storage at `at_us`; it bootstraps,
    // gossips statelessly, and syncs its owned range via snapshots + diffs.
    std::uint32_t churn_join(int prefix_len, std::uint64_t at_us, bool stale_copy = false)
    {
        auto id = next_identity(prefix_len);
        std::uint32_t idx = id.endpoint;
        make_node(id,
                  stale_copy ? std::optional<partial_state<H>>(world_.make_partial(id))
                             : std::nullopt,
                  stale_copy);
        schedule_action(at_us > now_ ? at_us - now_ : 0, [this, idx]() {
            bootstrap_node(idx);
            nodes_[idx]->proto->begin_join(nodes_[idx]->stale);
        });
        return idx;
    }

private:
    struct event {
        enum class kind_t { deliver, timer, action };
        std::uint64_t time_us;
        std::uint64_t seq;
        std::uint32_t target;
        std::uint32_t from;
        kind_t kind;
        message payload;
        std::uint64_t cookie;
        std::function<void()> fn;

        bool operator>(const event& o) const
        {
            return time_us != o.time_us ? time_us > o.time_us : seq > o.seq;
        }
    };

    struct sim_node_env final : protocol_node<H>::env {
        simnet* net = nullptr;
        std::uint32_t index = 0;
        node_identity id;
        std::unique_ptr<protocol_node<H>> proto;
        bool alive = true;
        bool stale = false;
        std::uint64_t uplink_free_us = 0;
        int region = 0;
        rng rand{0};

        std::uint64_t now_us() const override { return net->now_; }
        void send(std::uint32_t to, message msg) override
        {
            net->transmit(index, to, std::move(msg));
        }
        void set_timer(std::uint64_t delay_us, std::uint64_t cookie) override
        {
            net->schedule_timer(index, delay_us, cookie);
        }
        bool probe(const node_identity& peer) override { return net->probe(index, peer); }
        std::uint64_t rand64() override { return rand.next(); }
        void block_executed(std::uint64_t number, const digest& root) override
        {
            net->note_executed(index, number, root);
        }
    };

    void build_nodes()
    {
        for (std::uint32_t i = 0; i < cfg_.nodes; ++i) {
            int pl = cfg_.prefix_lens.empty()
                         ? cfg_.prefix_len
                         : cfg_.prefix_lens[i % cfg_.prefix_lens.size()];
            auto id = next_identity(pl);
            make_node(id,
                      trace_ ? std::optional<partial_state<H>>(world_.make_partial(id))
                             : std::nullopt,
                      false);
        }
        for (std::uint32_t i = 0; i < cfg_.nodes; ++i) bootstrap_node(i);
    }

    node_identity next_identity(int prefix_len)
    {
        auto draw = [&]() {
            address id = topo_rng_.random_address(cfg_.width);
            if (cfg_.stratify_ids && prefix_len > 0) {
                std::uint64_t slot = nodes_.size() % (1ull << prefix_len);
                for (int b = 0; b < prefix_len; ++b)
                    id.set_bit(b, (slot >> (prefix_len - 1 - b)) & 1);
            }
            return id;
        };
        address id = draw();
        while (used_ids_.count(id)) id = draw();
        used_ids_.insert(id);
        return node_identity{id, prefix_len, static_cast<std::uint32_t>(nodes_.size())};
    }

    void make_node(const node_identity& id, std::optional<partial_state<H>> st, bool stale)
    {
        auto env = std::make_unique<sim_node_env>();
        env->net = this;
        env->index = id.endpoint;
        env->id = id;
        env->region = cfg_.latency.sample_region(topo_rng_);
        env->rand = root_rng_.child(0x1000 + id.endpoint);
        env->stale = stale;
        node_params np;
        np.fanout = cfg_.fanout;
        np.alpha = cfg_.alpha;
        np.lookup_width = cfg_.lookup_width;
        np.cache = cfg_.cache;
        np.mode = cfg_.mode;
        np.mapper = key_mapper{cfg_.width, cfg_.hashed_keys};
        np.request_timeout_us = cfg_.request_timeout_us;
        partial_state<H> ps = st ? std::move(*st) : partial_state<H>(cfg_.width, id);
        env->proto = std::make_unique<protocol_node<H>>(id, np, std::move(ps),
                                                        trace_ ? &nominals_ : nullptr, env.get());
        ledger_.per_node.push_back({});
        nodes_.push_back(std::move(env));
    }

    void bootstrap_node(std::uint32_t i)
    {
        if (nodes_.size() < 2) return;
        std::vector<node_identity> peers;
        std::uint32_t want = std::min<std::uint32_t>(cfg_.bootstrap_peers,
                                                     static_cast<std::uint32_t>(nodes_.size()) - 1);
        auto picks = topo_rng_.sample_indices(nodes_.size(), want + 1);
        for (auto p : picks) {
            if (p == i || peers.size() == want) continue;
            peers.push_back(nodes_[p]->id);
        }
        nodes_[i]->proto->bootstrap(peers);
    }

    void dispatch(const event& ev)
    {
        switch (ev.kind) {
        case event::kind_t::deliver: {
            if (!nodes_[ev.target]->alive) {
                ++ledger_.dropped_messages;
                return;
            }
            byte_split split =
                message_bytes(ev.payload, cfg_.mode, model_, trace_ ? &nominals_ : nullptr);
            ledger_.book_receive(ev.target, block_of_message(ev.payload), split);
            if (const auto* blob = std::get_if<msg_blob>(&ev.payload)) {
                on_blob(ev.target, *blob);
                return;
            }
            nodes_[ev.target]->proto->on_message(nodes_[ev.from]->id, ev.payload);
            return;
        }
        case event::kind_t::timer:
            if (nodes_[ev.target]->alive) nodes_[ev.target]->proto->on_timer(ev.cookie);
            return;
        case event::kind_t::action:
            ev.fn();
            return;
        }
    }

    void on_blob(std::uint32_t target, const msg_blob& blob)
    {
        if (blob_seen_.size() != nodes_.size() || blob_seen_[target]) return;
        blob_seen_[target] = true;
        blob_times_[target] = now_ + cfg_.validation_us;
        forward_blob(target, blob);
    }

    void forward_blob(std::uint32_t from, const msg_blob& blob)
    {
        std::vector<node_identity> peers;
        nodes_[from]->proto->table().for_each_peer(
            [&](const node_identity& p) { peers.push_back(p); });
        auto& r = nodes_[from]->rand;
        for (int i = 0; i < cfg_.fanout && !peers.empty(); ++i) {
            std::size_t pick = r.bounded(peers.size());
            transmit(from, peers[pick].endpoint, blob);
            peers.erase(peers.begin() + static_cast<std::ptrdiff_t>(pick));
        }
    }

    void note_executed(std::uint32_t node_idx, std::uint64_t number, const digest& root)
    {
        executions_.emplace_back(node_idx, number, root);
        bytes log_line;
        put_u64_be(log_line, number);
        put_u64_be(log_line, node_idx);
        log_line.insert(log_line.end(), root.begin(), root.end());
        hash_ctx_.update(log_line);
    }

    void note_log(std::uint64_t seq, std::uint32_t from, std::uint32_t to, std::uint8_t kind,
                  std::uint64_t block, std::uint64_t bytes_total)
    {
        if (capture_) log_.push_back({now_, seq, from, to, kind, block, bytes_total});
        bytes rec;
        put_u64_be(rec, now_);
        put_u64_be(rec, seq);
        put_u64_be(rec, from);
        put_u64_be(rec, to);
        rec.push_back(kind);
        put_u64_be(rec, block);
        put_u64_be(rec, bytes_total);
        hash_ctx_.update(rec);
    }

public:
    const std::vector<std::tuple<std::uint32_t, std::uint64_t, digest>>& executions() const
    {
        return executions_;
    }

private:
    sim_config cfg_;
    size_model model_;
    rng root_rng_, topo_rng_, link_rng_, drive_rng_;
    world_state<H> world_;
    genesis_spec genesis_;
    const access_trace* trace_ = nullptr;
    nominal_sizes nominals_;
    std::vector<std::unique_ptr<sim_node_env>> nodes_;
    std::set<address> used_ids_;
    std::priority_queue<event, std::vector<event>, std::greater<>> events_;
    std::uint64_t now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t current_block_ = 0;
    std::size_t trace_cursor_ = 0;
    bandwidth_ledger ledger_;
    std::vector<bool> blob_seen_;
    std::vector<std::uint64_t> blob_times_;
    std::vector<sim_log_record> log_;
    bool capture_ = false;
    std::vector<std::tuple<std::uint32_t, std::uint64_t, digest>> executions_;
    detail::sha256_ctx hash_ctx_;
};

} // namespace statenet
