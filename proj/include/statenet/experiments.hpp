#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "config.hpp"
#include "replay.hpp"
#include "routing.hpp"
#include "simnet.hpp"
#include "stats.hpp"
#include "workload.hpp"

namespace statenet {

inline constexpr const char* tool_version = "statenet 0.1.0";

// Plot-ready table with a provenance header; regeneration from the same
// (spec, seed) is byte-identical.
struct result_table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::string to_csv(const std::string& config_hash, std::uint64_t seed) const
    {
        std::ostringstream out;
        out << "# " << tool_version << "\n";
        out << "# config_hash=" << config_hash << " seed=" << seed
            << " size_model=" << size_model::version << "\n";
        for (std::size_t i = 0; i < columns.size(); ++i)
            out << (i ? "," : "") << columns[i];
        out << "\n";
        out << std::setprecision(10);
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i) out << ",";
                double v = row[i];
                if (v == static_cast<double>(static_cast<std::int64_t>(v)))
                    out << static_cast<std::int64_t>(v);
                else
                    out << v;
            }
            out << "\n";
        }
        return out.str();
    }
};

// --- search experiment -------------------------------------------------------

struct search_spec {
    std::uint32_t nodes = 1000;
    int width = 32;
    int prefix_len = 6;
    int bucket_size = 16;
    int alpha = 3;
    std::uint32_t bootstrap_peers = 256;
    int lookups = 1000;
    std::uint64_t seed = 42;
    std::string sweep;                   // "k" or "prefix_len"
    std::vector<double> sweep_values;    // axis points
};

// Routing tables only: lookups executed synchronously over the query
// abstraction, which is what the iteration counts measure.
class search_network {
public:
    search_network(std::uint32_t n, int width, int prefix_len, int k,
                   std::uint32_t bootstrap, std::uint64_t seed)
        : width_(width)
    {
        rng r(seed);
        std::set<address> used;
        for (std::uint32_t i = 0; i < n; ++i) {
            address id = r.random_address(width);
            while (!used.insert(id).second) id = r.random_address(width);
            nodes_.push_back({id, prefix_len, i});
        }
        for (std::uint32_t i = 0; i < n; ++i) {
            tables_.emplace_back(nodes_[i], k);
            auto picks = r.sample_indices(n, std::min<std::uint32_t>(bootstrap, n - 1) + 1);
            std::uint32_t added = 0;
            for (auto p : picks) {
                if (p == i || added == bootstrap) continue;
                tables_[i].observe(nodes_[p], [](const node_identity&) { return true; }, 0);
                ++added;
            }
        }
    }

    const std::vector<node_identity>& nodes() const { return nodes_; }
    const routing_table& table(std::size_t i) const { return tables_[i]; }

    // Random key conditioned on availability: lookups target state that
    // exists, per the data-availability assumption.
    address covered_key(rng& r) const
    {
        for (;;) {
            address key = r.random_address(width_);
            for (const auto& n : nodes_)
                if (covers(n, key)) return key;
        }
    }

    struct lookup_sample {
        double mean = 0, p50 = 0, p90 = 0, min = 0, max = 0, failure_rate = 0;
    };

    lookup_sample run_lookups(int count, int alpha, std::size_t want, std::uint64_t seed) const
    {
        rng r(seed);
        std::vector<double> iters;
        int failures = 0;
        auto query = [&](const node_identity& peer, const address& target) {
            if (covers(peer, target)) return std::pair(true, std::vector<node_identity>{});
            return std::pair(false, tables_[peer.endpoint].answer_lookup(target, want));
        };
        for (int i = 0; i < count; ++i) {
            const auto& table = tables_[r.bounded(tables_.size())];
            address key = covered_key(r);
            auto out = iterative_lookup(table, key, alpha, want, query);
            if (!out.found) {
                ++failures;
                continue;
            }
            iters.push_back(static_cast<double>(out.iterations));
        }
        lookup_sample s;
        s.failure_rate = static_cast<double>(failures) / count;
        if (!iters.empty()) {
            s.mean = mean(iters);
            s.p50 = percentile(iters, 0.5);
            s.p90 = percentile(iters, 0.9);
            s.min = *std::min_element(iters.begin(), iters.end());
            s.max = *std::max_element(iters.begin(), iters.end());
        }
        return s;
    }

private:
    int width_;
    std::vector<node_identity> nodes_;
    std::vector<routing_table> tables_;
};

inline result_table run_search_experiment(const search_spec& spec)
{
    result_table t;
    t.columns = {spec.sweep == "k" ? "k" : "prefix_len",
                 "mean_iterations",
                 "p50",
                 "p90",
                 "min",
                 "max",
                 "failure_rate"};
    for (double v : spec.sweep_values) {
        int k = spec.sweep == "k" ? static_cast<int>(v) : spec.bucket_size;
        int pl = spec.sweep == "prefix_len" ? static_cast<int>(v) : spec.prefix_len;
        search_network net(spec.nodes, spec.width, pl, k, spec.bootstrap_peers, spec.seed);
        auto s = net.run_lookups(spec.lookups, spec.alpha, static_cast<std::size_t>(k),
                                 spec.seed ^ 0x5eedull);
        t.rows.push_back({v, s.mean, s.p50, s.p90, s.min, s.max, s.failure_rate});
    }
    return t;
}

// --- bandwidth experiments ------------------------------------------------------

struct bandwidth_spec {
    std::string kind = "bandwidth-vs-prefix";  // or bandwidth-vs-cache | verkle-bandwidth
    std::vector<double> sweep_values;           // prefix lens or cache byte budgets
    size_mode mode = size_mode::merkle;
    std::uint64_t seed = 42;
    int stateless_prefix_len = 32;              // PL for cache sweeps
    segment_capacities fixed_cache{};           // for prefix sweeps
};

// Splits one byte budget across the three segments in proportion to their
// hot-set weights on the default trace (roughly headers 1 : slots 4 : code 3).
inline segment_capacities split_cache_budget(std::uint64_t total)
{
    segment_capacities c;
    c.headers = total / 8;
    c.slots = total / 2;
    c.code = total - c.headers - c.slots;
    return c;
}

inline result_table run_bandwidth_experiment(const replay_workload& w, const bandwidth_spec& spec)
{
    result_table t;
    const bool cache_sweep = spec.kind != "bandwidth-vs-prefix";
    t.columns = {cache_sweep ? "cache_bytes" : "prefix_len",
                 "extra_bytes_per_block",
                 "block_body_per_block",
                 "state_list_per_block",
                 "account_header",
                 "account_proof",
                 "slot_data",
                 "slot_proof",
                 "code",
                 "witness",
                 "request",
                 "bypass_rate"};
    for (double v : spec.sweep_values) {
        replay_config cfg;
        cfg.mode = spec.kind == "verkle-bandwidth" ? size_mode::verkle : spec.mode;
        cfg.seed = spec.seed;
        if (cache_sweep) {
            cfg.prefix_len = spec.stateless_prefix_len;
            cfg.cache = split_cache_budget(static_cast<std::uint64_t>(v));
        } else {
            cfg.prefix_len = static_cast<int>(v);
            cfg.cache = spec.fixed_cache;
        }
        auto r = replay_bandwidth(w, cfg);
        const double blocks = static_cast<double>(r.blocks);
        auto per_block = [&](byte_category c) {
            return static_cast<double>(r.extra[c]) / blocks;
        };
        double total_entries = static_cast<double>(
            r.header_stats.insertions + r.slot_stats.insertions + r.code_stats.insertions
            + r.bypassed_entries);
        t.rows.push_back({v, r.mean_extra_per_block, r.mean_block_body,
                          static_cast<double>(r.state_list_bytes) / blocks,
                          per_block(byte_category::account_header),
                          per_block(byte_category::account_proof),
                          per_block(byte_category::slot_data),
                          per_block(byte_category::slot_proof), per_block(byte_category::code),
                          per_block(byte_category::witness),
                          per_block(byte_category::state_list),
                          total_entries == 0 ? 0.0
                                             : static_cast<double>(r.bypassed_entries)
                                                   / total_entries});
    }
    return t;
}

// --- latency experiment -----------------------------------------------------------

struct latency_spec {
    std::uint32_t nodes = 7000;
    int width = 32;
    int prefix_len = 6;
    int bucket_size = 16;
    int fanout = 8;
    std::uint32_t bootstrap_peers = 256;
    std::uint64_t uplink_bytes_per_sec = 12'500'000;
    std::vector<double> block_bytes = {100'000, 5'000'000};
    std::uint64_t seed = 42;
    latency_model latency;  // defaults to the shipped region matrix in the CLI
};

inline result_table run_latency_experiment(const latency_spec& spec)
{
    result_table t;
    t.columns = {"block_bytes", "t50_ms", "t67_ms", "t95_ms", "t99_ms", "t100_ms", "reached"};
    for (double bytes : spec.block_bytes) {
        sim_config cfg;
        cfg.nodes = spec.nodes;
        cfg.width = spec.width;
        cfg.prefix_len = spec.prefix_len;
        cfg.bucket_size = spec.bucket_size;
        cfg.fanout = spec.fanout;
        cfg.bootstrap_peers = spec.bootstrap_peers;
        cfg.uplink_bytes_per_sec = spec.uplink_bytes_per_sec;
        cfg.seed = spec.seed;
        cfg.latency = spec.latency;
        simnet<fast_hasher> sim(cfg);
        sim.init_topology_only();
        auto cov = sim.run_propagation(static_cast<std::uint64_t>(bytes));
        t.rows.push_back({bytes, cov.coverage_at(0.50), cov.coverage_at(0.67),
                          cov.coverage_at(0.95), cov.coverage_at(0.99), cov.coverage_at(1.0),
                          static_cast<double>(cov.receive_times_ms.size())});
    }
    return t;
}

// --- storage report --------------------------------------------------------------

struct storage_spec {
    std::uint32_t nodes = 1000;
    double stored_fraction = 0.02;    // per node; overrides prefix_len when > 0
    int prefix_len = 0;
    int width = 32;
    std::uint64_t seed = 42;
    std::uint64_t mc_items = 100000;  // empirical replication sample
};

inline result_table run_storage_report(const storage_spec& spec)
{
    std::vector<double> fractions(spec.nodes, spec.stored_fraction > 0
                                                  ? spec.stored_fraction
                                                  : std::pow(2.0, -spec.prefix_len));
    auto rep = storage_savings_from_fractions(fractions);

    // empirical replication over a seeded population (prefix rule)
    int pl = spec.stored_fraction > 0
                 ? static_cast<int>(std::lround(-std::log2(spec.stored_fraction)))
                 : spec.prefix_len;
    rng r(spec.seed);
    std::vector<node_identity> nodes;
    for (std::uint32_t i = 0; i < spec.nodes; ++i)
        nodes.push_back({r.random_address(spec.width), pl, i});
    double replicas_total = 0;
    for (std::uint64_t i = 0; i < spec.mc_items; ++i) {
        address item = r.random_address(spec.width);
        for (const auto& n : nodes)
            if (covers(n, item)) replicas_total += 1;
    }
    double mean_replicas = replicas_total / static_cast<double>(spec.mc_items);

    result_table t;
    t.columns = {"nodes",          "stored_fraction",    "savings",
                 "loss_probability", "mean_replicas_mc", "expected_replicas"};
    t.rows.push_back({static_cast<double>(spec.nodes), fractions[0], rep.savings,
                      rep.loss_probability, mean_replicas,
                      static_cast<double>(spec.nodes) * std::pow(2.0, -pl)});
    return t;
}

// --- output plumbing ---------------------------------------------------------------

struct run_output {
    std::string name;
    std::string content;
};

inline std::string sha_hex(const std::string& s)
{
    return to_hex(sha256(bytes(s.begin(), s.end())));
}

// Writes tables plus a run manifest naming every artifact and its digest.
inline void write_outputs(const std::string& dir, const std::vector<run_output>& outputs,
                          const std::string& config_hash, std::uint64_t seed)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string manifest = "{\n";
    manifest += "  \"tool\": \"" + std::string(tool_version) + "\",\n";
    manifest += "  \"size_model\": \"" + std::string(size_model::version) + "\",\n";
    manifest += "  \"config_hash\": \"" + config_hash + "\",\n";
    manifest += "  \"seed\": " + std::to_string(seed) + ",\n";
    manifest += "  \"outputs\": [\n";
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        std::ofstream f(fs::path(dir) / outputs[i].name, std::ios::binary);
        f << outputs[i].content;
        manifest += "    {\"file\": \"" + outputs[i].name + "\", \"sha256\": \""
                    + sha_hex(outputs[i].content) + "\"}";
        manifest += i + 1 < outputs.size() ? ",\n" : "\n";
    }
    manifest += "  ]\n}\n";
    std::ofstream mf(fs::path(dir) / "run-manifest.json", std::ios::binary);
    mf << manifest;
}

} // namespace statenet
