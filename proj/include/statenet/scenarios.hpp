#pragma once

#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "protocol_node.hpp"
#include "world_state.hpp"

namespace statenet {

// Scripted protocol scenarios (docs/formats.md): a JSON file names the
// nodes, their prefix assignments, cache preloads, explicit gossip edges,
// the genesis leaves, and the blocks to run.  Addresses are bit strings and
// keys map identically so that positions in the file are literal trie
// positions.
struct scenario {
    struct node_spec {
        std::string name;
        address id;
        int prefix_len = 0;
        std::vector<address> cached_accounts;
        std::vector<std::string> peers;  // gossip edges by node name
    };
    struct genesis_entry {
        address addr;
        std::uint64_t balance = 0;
    };
    struct tx_spec {
        std::vector<access_op> ops;
    };
    struct block_spec {
        std::string proposer;
        std::vector<tx_spec> txs;
    };

    std::string name;
    int width = 3;
    bool hashed_keys = false;
    std::vector<genesis_entry> genesis;
    std::vector<node_spec> nodes;
    std::vector<block_spec> blocks;
};

inline scenario parse_scenario(const std::string& text)
{
    nlohmann::json j = nlohmann::json::parse(text);
    scenario sc;
    sc.name = j.value("name", "scenario");
    sc.width = j.at("width").get<int>();
    sc.hashed_keys = j.value("key_mode", "identity") == "hashed";
    for (const auto& g : j.at("genesis")) {
        scenario::genesis_entry e;
        e.addr = address::from_bits(g.at("address").get<std::string>());
        e.balance = g.value("balance", 0ull);
        sc.genesis.push_back(e);
    }
    for (const auto& n : j.at("nodes")) {
        scenario::node_spec ns;
        ns.name = n.at("name").get<std::string>();
        ns.id = address::from_bits(n.at("id").get<std::string>());
        ns.prefix_len = n.at("prefix_len").get<int>();
        if (n.contains("cache"))
            for (const auto& c : n["cache"])
                ns.cached_accounts.push_back(address::from_bits(c.get<std::string>()));
        if (n.contains("peers"))
            for (const auto& p : n["peers"]) ns.peers.push_back(p.get<std::string>());
        sc.nodes.push_back(std::move(ns));
    }
    for (const auto& b : j.at("blocks")) {
        scenario::block_spec bs;
        bs.proposer = b.at("proposer").get<std::string>();
        for (const auto& tx : b.at("txs")) {
            scenario::tx_spec ts;
            for (const auto& o : tx) {
                access_op op;
                std::string kind = o.at("op").get<std::string>();
                op.kind = op_from_token(kind, 0);
                op.account = address::from_bits(o.at("account").get<std::string>());
                if (o.contains("slot"))
                    op.slot = address::from_bits(o.at("slot").get<std::string>());
                if (o.contains("value")) op.literal = o.at("value").get<std::uint64_t>();
                ts.ops.push_back(std::move(op));
            }
            bs.txs.push_back(std::move(ts));
        }
        sc.blocks.push_back(std::move(bs));
    }
    return sc;
}

inline scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw config_error("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

// Runs a scenario over a synchronous FIFO message queue (zero latency,
// deterministic delivery order) and records every message for assertions.
template <class H = sha256_hasher>
class scenario_runner {
public:
    struct logged {
        std::uint32_t from;
        std::uint32_t to;
        message msg;
    };

    explicit scenario_runner(const scenario& sc) : sc_(sc), world_(sc.width)
    {
        for (const auto& g : sc.genesis) {
            account_record rec;
            rec.balance = g.balance;
            world_.set_account(g.addr, rec);
        }
        for (std::size_t i = 0; i < sc.nodes.size(); ++i)
            name_to_index_[sc.nodes[i].name] = static_cast<std::uint32_t>(i);

        for (std::size_t i = 0; i < sc.nodes.size(); ++i) {
            const auto& ns = sc.nodes[i];
            node_identity id{ns.id, ns.prefix_len, static_cast<std::uint32_t>(i)};
            node_params np;
            np.mapper = key_mapper{sc.width, sc.hashed_keys};
            np.cache.headers = 1 << 16;
            np.cache.slots = 1 << 16;
            np.cache.code = 1 << 16;
            for (const auto& peer : ns.peers) np.static_gossip.push_back(name_to_index_.at(peer));
            auto env = std::make_unique<env_impl>();
            env->runner = this;
            env->index = static_cast<std::uint32_t>(i);
            env->rand = rng(1000 + i);
            envs_.push_back(std::move(env));
            nodes_.push_back(std::make_unique<protocol_node<H>>(
                id, np, world_.make_partial(id), nullptr, envs_.back().get()));
            identities_.push_back(id);
        }
        for (std::size_t i = 0; i < sc.nodes.size(); ++i) {
            std::vector<node_identity> peers;
            for (std::size_t k = 0; k < sc.nodes.size(); ++k)
                if (k != i) peers.push_back(identities_[k]);
            nodes_[i]->bootstrap(peers);
            for (const auto& acct : sc_.nodes[i].cached_accounts) {
                const address key = nodes_[i]->params().mapper.map(acct);
                if (!nodes_[i]->state().covers_key(key))
                    nodes_[i]->preload_cache(world_.make_witness(key));
            }
        }
    }

    void run()
    {
        for (std::size_t b = 0; b < sc_.blocks.size(); ++b) {
            const auto& bs = sc_.blocks[b];
            std::vector<transaction> txs;
            for (const auto& ts : bs.txs) txs.push_back({ts.ops});
            nodes_[name_to_index_.at(bs.proposer)]->propose(b, std::move(txs));
            pump();
        }
    }

    protocol_node<H>& node(const std::string& name)
    {
        return *nodes_[name_to_index_.at(name)];
    }

    std::uint32_t index_of(const std::string& name) const { return name_to_index_.at(name); }
    std::size_t node_count() const { return nodes_.size(); }
    protocol_node<H>& node_at(std::size_t i) { return *nodes_[i]; }
    const std::vector<logged>& log() const { return log_; }
    world_state<H>& world() { return world_; }

private:
    struct env_impl final : protocol_node<H>::env {
        scenario_runner* runner = nullptr;
        std::uint32_t index = 0;
        rng rand{0};

        std::uint64_t now_us() const override { return runner->clock_; }
        void send(std::uint32_t to, message msg) override
        {
            runner->log_.push_back({index, to, msg});
            runner->queue_.push_back({index, to, std::move(msg)});
        }
        void set_timer(std::uint64_t, std::uint64_t) override {}  // synchronous runs
        bool probe(const node_identity&) override { return true; }
        std::uint64_t rand64() override { return rand.next(); }
        void block_executed(std::uint64_t, const digest&) override { ++runner->clock_; }
    };

    void pump()
    {
        while (!queue_.empty()) {
            logged m = std::move(queue_.front());
            queue_.pop_front();
            ++clock_;
            nodes_[m.to]->on_message(identities_[m.from], m.msg);
        }
    }

    scenario sc_;
    world_state<H> world_;
    std::vector<std::unique_ptr<env_impl>> envs_;
    std::vector<std::unique_ptr<protocol_node<H>>> nodes_;
    std::vector<node_identity> identities_;
    std::map<std::string, std::uint32_t> name_to_index_;
    std::deque<logged> queue_;
    std::vector<logged> log_;
    std::uint64_t clock_ = 0;
};

} // namespace statenet
