#include <catch2/catch_amalgamated.hpp>

#include <statenet/scenarios.hpp>
#include <statenet/simnet.hpp>
#include <statenet/workload.hpp>

#include "reference_oracle.hpp"

using namespace statenet;

namespace {

sim_config proto_cfg(std::uint32_t nodes, int pl, std::uint64_t seed)
{
    sim_config cfg;
    cfg.nodes = nodes;
    cfg.prefix_len = pl;
    cfg.seed = seed;
    cfg.bootstrap_peers = nodes - 1;
    cfg.cache.headers = 1 << 20;
    cfg.cache.slots = 1 << 20;
    cfg.cache.code = 1 << 22;
    cfg.latency.model = latency_model::kind::constant;
    cfg.latency.constant_us = 500;
    cfg.stratify_ids = true;  // guarantee the availability assumption
    return cfg;
}

// Replays every block's writes against a flat full-state oracle and returns
// the final recursively recomputed root.
template <class H>
digest oracle_root_after(simnet<H>& sim, const access_trace& trace, std::size_t blocks)
{
    refo::flat_state<H> oracle(32);
    key_mapper mapper{32, true};
    sim.genesis_world().for_each_account(
        [&](const address& k, const account_record& rec) { oracle.accounts[k] = rec; });
    for (const auto& [raw, gacct] : derive_genesis(trace).accounts) {
        const address key = mapper.map(raw);
        for (const auto& rk : gacct.slot_keys)
            oracle.slots[key][mapper.map(rk)] = genesis_slot_value(raw, rk);
    }
    for (std::size_t i = 0; i < blocks; ++i) {
        exec_view view;
        block blk = trace.blocks[i];
        for (const auto& tx : blk.txs) {
            for (const auto& op : tx.ops) {
                const address key = mapper.map(op.account);
                if (!view.accounts.count(key)) {
                    auto it = oracle.accounts.find(key);
                    view.accounts[key] = it == oracle.accounts.end()
                                             ? std::optional<account_record>{}
                                             : std::optional<account_record>{it->second};
                }
                if (op.kind == op_kind::read_slot || op.kind == op_kind::write_slot) {
                    const address skey = mapper.map(op.slot);
                    if (!view.slots.count({key, skey})) {
                        auto& m = oracle.slots[key];
                        auto it = m.find(skey);
                        view.slots[{key, skey}] = it == m.end()
                                                      ? std::optional<slot_value>{}
                                                      : std::optional<slot_value>{it->second};
                    }
                } else if (op.kind == op_kind::exec_code) {
                    auto rec = view.accounts[key];
                    if (rec) view.code_present.insert(rec->code_hash);
                }
            }
        }
        auto outcome = execute_block(blk, view, mapper);
        oracle.apply(outcome.writes);
    }
    return oracle.root();
}

} // namespace

TEST_CASE("propose with everything owned locally sends no state traffic")
{
    trace_params tp;
    tp.blocks = 3;
    tp.txs_per_block = 5;
    tp.popular_universe = 300;
    tp.sender_pool = 200;
    auto gen = gen_trace(tp, 2);

    sim_config cfg = proto_cfg(4, 0, 9);  // prefix 0: everyone owns everything
    simnet<fast_hasher> sim(cfg);
    sim.init_from_trace(gen.trace);
    sim.capture_log(true);
    auto rep = sim.run_trace_protocol();
    REQUIRE(rep.converged);
    CHECK(rep.blocks_executed_total == 3 * 4);

    for (const auto& r : sim.log()) {
        // variant indices: 1 = state_request, 5 = lookup_request
        CHECK(r.kind != 1);
        CHECK(r.kind != 5);
    }
    for (std::uint32_t i = 0; i < sim.node_count(); ++i) {
        CHECK(sim.node(i).stats().state_requests == 0);
        CHECK(sim.node(i).stats().lookups_started == 0);
    }
}

TEST_CASE("validators pull missing state from the sender and verify it")
{
    trace_params tp;
    tp.blocks = 6;
    tp.txs_per_block = 8;
    tp.popular_universe = 400;
    tp.sender_pool = 250;
    auto gen = gen_trace(tp, 3);

    sim_config cfg = proto_cfg(10, 3, 10);
    simnet<fast_hasher> sim(cfg);
    sim.init_from_trace(gen.trace);
    auto rep = sim.run_trace_protocol();
    REQUIRE(rep.converged);

    std::uint64_t requests = 0, verified = 0, failures = 0, unverified = 0;
    for (std::uint32_t i = 0; i < sim.node_count(); ++i) {
        const auto& st = sim.node(i).stats();
        requests += st.state_requests;
        verified += st.remote_records_verified;
        failures += st.proof_failures;
        unverified += st.unverified_uses;
    }
    CHECK(requests > 0);
    CHECK(verified > 0);
    CHECK(failures == 0);
    CHECK(unverified == 0);
}

TEST_CASE("converged roots equal the full-state oracle root")
{
    trace_params tp;
    tp.blocks = 8;
    tp.txs_per_block = 8;
    tp.popular_universe = 400;
    tp.sender_pool = 250;
    auto gen = gen_trace(tp, 4);

    sim_config cfg = proto_cfg(12, 2, 11);
    simnet<fast_hasher> sim(cfg);
    sim.init_from_trace(gen.trace);
    auto rep = sim.run_trace_protocol();
    REQUIRE(rep.converged);
    CHECK(rep.final_root == oracle_root_after(sim, gen.trace, gen.trace.blocks.size()));
}

TEST_CASE("forward-before-fetch holds for every block at every node")
{
    trace_params tp;
    tp.blocks = 5;
    tp.txs_per_block = 8;
    tp.popular_universe = 400;
    tp.sender_pool = 250;
    auto gen = gen_trace(tp, 5);

    sim_config cfg = proto_cfg(10, 3, 12);
    simnet<fast_hasher> sim(cfg);
    sim.init_from_trace(gen.trace);
    sim.capture_log(true);
    auto rep = sim.run_trace_protocol();
    REQUIRE(rep.converged);

    // per (node, block): every announce-forward send precedes the node's
    // first state request for that block in (time, seq) order
    std::map<std::pair<std::uint32_t, std::uint64_t>, std::pair<std::uint64_t, std::uint64_t>>
        last_fwd, first_req;
    for (const auto& r : sim.log()) {
        auto key = std::make_pair(r.from, r.block);
        auto stamp = std::make_pair(r.time_us, r.seq);
        if (r.kind == 0) {  // block announce
            auto it = last_fwd.find(key);
            if (it == last_fwd.end() || stamp > it->second) last_fwd[key] = stamp;
        } else if (r.kind == 1) {  // state request
            auto it = first_req.find(key);
            if (it == first_req.end() || stamp < it->second) first_req[key] = stamp;
        }
    }
    int checked = 0;
    for (const auto& [key, req_stamp] : first_req) {
        auto it = last_fwd.find(key);
        if (it == last_fwd.end()) continue;
        CHECK(it->second < req_stamp);
        ++checked;
    }
    CHECK(checked > 0);
}

TEST_CASE("duplicate announce is ignored")
{
    trace_params tp;
    tp.blocks = 1;
    tp.txs_per_block = 3;
    tp.popular_universe = 300;
    tp.sender_pool = 150;
    auto gen = gen_trace(tp, 6);

    sim_config cfg = proto_cfg(5, 0, 13);
    simnet<fast_hasher> sim(cfg);
    sim.init_from_trace(gen.trace);
    sim.capture_log(true);
    auto rep = sim.run_trace_protocol();
    REQUIRE(rep.converged);
    // fanout 8 over 4 peers with dedup: each node forwarded the block at
    // most once to each peer, and executed exactly once
    for (std::uint32_t i = 0; i < sim.node_count(); ++i)
        CHECK(sim.node(i).stats().blocks_executed == 1);
}

TEST_CASE("cache effect: repeated access stops re-fetching")
{
    // one hot contract touched in every block; after the first fetch the
    // validator serves itself from cache
    trace_params tp;
    tp.blocks = 6;
    tp.txs_per_block = 4;
    tp.popular_universe = 220;
    tp.sender_pool = 150;
    tp.force_exponent = 2.0;  // extreme skew: blocks reuse the same accounts
    auto gen = gen_trace(tp, 7);

    sim_config cfg = proto_cfg(6, 2, 14);
    simnet<fast_hasher> sim(cfg);
    sim.init_from_trace(gen.trace);
    auto rep = sim.run_trace_protocol();
    REQUIRE(rep.converged);

    std::uint64_t hits = 0;
    for (std::uint32_t i = 0; i < sim.node_count(); ++i) {
        hits += sim.node(i).header_cache().stats().hits;
        hits += sim.node(i).slot_cache().stats().hits;
        hits += sim.node(i).code_cache().stats().hits;
    }
    CHECK(hits > 0);
}

TEST_CASE("state list exactness: announced manifests match execution traces")
{
    trace_params tp;
    tp.blocks = 4;
    tp.txs_per_block = 6;
    tp.popular_universe = 300;
    tp.sender_pool = 200;
    auto gen = gen_trace(tp, 8);

    sim_config cfg = proto_cfg(8, 2, 15);
    simnet<fast_hasher> sim(cfg);
    sim.init_from_trace(gen.trace);
    auto rep = sim.run_trace_protocol();
    REQUIRE(rep.converged);
    for (std::uint32_t i = 0; i < sim.node_count(); ++i)
        CHECK(sim.node(i).stats().state_list_mismatches == 0);
}

TEST_CASE("four-node lifecycle scenario follows the scripted flow")
{
    auto sc = load_scenario(std::string(STATENET_SOURCE_DIR) + "/scenarios/fig2_lifecycle.json");
    scenario_runner<sha256_hasher> run(sc);
    run.run();

    // everyone converges on one post root with the value moved into 100
    digest root = run.node("node1").state().global_root();
    for (std::size_t i = 0; i < run.node_count(); ++i)
        CHECK(run.node_at(i).state().global_root() == root);

    refo::flat_state<sha256_hasher> oracle(3);
    run.world().for_each_account(
        [&](const address& k, const account_record& rec) { oracle.accounts[k] = rec; });
    // the transaction: balance at 100 becomes the value held at 111 (2),
    // and the write bumps the account nonce
    oracle.accounts[address::from_bits("100")].balance = 2;
    oracle.accounts[address::from_bits("100")].nonce = 1;
    CHECK(root == oracle.root());
    CHECK(run.node("node2").state().record(address::from_bits("100"))->balance == 2);
    CHECK(run.node("node4").state().record(address::from_bits("100"))->balance == 2);

    // node4 held 100 in storage and 111 in cache: no state request at all
    CHECK(run.node("node4").stats().state_requests == 0);

    // node3 had neither: it requested both values (with proofs) from node2
    // node1 had 100 cached: it requested only 111, from node3
    const auto n1 = run.index_of("node1"), n2 = run.index_of("node2");
    const auto n3 = run.index_of("node3");
    bool n3_asked_n2_both = false, n1_asked_n3_one = false;
    for (const auto& rec : run.log()) {
        if (const auto* req = std::get_if<msg_state_request>(&rec.msg)) {
            if (rec.from == n3) {
                CHECK(rec.to == n2);
                CHECK(req->wanted.size() == 2);
                n3_asked_n2_both = true;
            } else if (rec.from == n1) {
                CHECK(rec.to == n3);
                REQUIRE(req->wanted.size() == 1);
                CHECK(req->wanted[0].account == address::from_bits("111"));
                n1_asked_n3_one = true;
            }
        }
    }
    CHECK(n3_asked_n2_both);
    CHECK(n1_asked_n3_one);

    // node1's cache picked up the fetched value at 111
    CHECK(run.node("node1").header_cache().contains(address::from_bits("111")));

    // no unverified state anywhere
    for (std::size_t i = 0; i < run.node_count(); ++i)
        CHECK(run.node_at(i).stats().unverified_uses == 0);
}

TEST_CASE("compute_missing is slot-granular and code-hash aware")
{
    trace_params tp;
    tp.blocks = 2;
    tp.txs_per_block = 4;
    tp.popular_universe = 300;
    tp.sender_pool = 150;
    auto gen = gen_trace(tp, 9);

    sim_config cfg = proto_cfg(4, 0, 16);
    simnet<fast_hasher> sim(cfg);
    sim.init_from_trace(gen.trace);

    // prefix 0 nodes own everything: nothing is ever missing
    state_list list;
    state_list_entry e;
    e.account = address::from_u64(32, 1234);
    e.kind = account_kind::contract;
    e.slots = {address::from_u64(32, 1), address::from_u64(32, 2)};
    list.entries.push_back(e);
    CHECK(sim.node(0).compute_missing(list).empty());
}
