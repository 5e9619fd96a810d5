#include <catch2/catch_amalgamated.hpp>

#include <statenet/partial_state.hpp>
#include <statenet/rng.hpp>
#include <statenet/world_state.hpp>

#include "reference_oracle.hpp"

using namespace statenet;

namespace {

// 3-bit world with an external account at every address, balance = leaf
// value; mirrors the four-node transaction lifecycle example.
template <class H>
world_state<H> three_bit_world()
{
    world_state<H> w(3);
    const std::uint64_t values[8] = {5, 9, 1, 4, 7, 3, 8, 2};  // addr 111 holds 2
    for (std::uint64_t i = 0; i < 8; ++i) {
        account_record r;
        r.balance = values[i];
        w.set_account(address::from_u64(3, i), r);
    }
    return w;
}

account_write balance_write(const address& key, const account_record& pre, std::uint64_t balance)
{
    account_write w;
    w.key = key;
    w.kind = pre.kind;
    w.nonce = pre.nonce;
    w.balance = balance;
    w.code_hash = pre.code_hash;
    return w;
}

} // namespace

TEST_CASE("lifecycle write converges on all four nodes")
{
    using H = sha256_hasher;
    auto world = three_bit_world<H>();

    // node 2 owns 1xx, node 3 owns 00x, node 4 owns 10x, node 1 owns 01x
    std::vector<node_identity> ids = {
        {address::from_bits("010"), 2, 1},
        {address::from_bits("100"), 1, 2},
        {address::from_bits("000"), 2, 3},
        {address::from_bits("101"), 2, 4},
    };
    std::vector<partial_state<H>> nodes;
    for (const auto& id : ids) nodes.push_back(world.make_partial(id));
    digest parent = world.root();
    for (auto& n : nodes) REQUIRE(n.global_root() == parent);

    // the transaction writes the value at 111 (which is 2) into 100
    address target = address::from_u64(3, 0b100);
    address source = address::from_u64(3, 0b111);
    std::vector<account_write> writes = {
        balance_write(target, *world.record(target), world.record(source)->balance)};

    // witnesses for both touched accounts, as gossiped with the block
    std::vector<account_witness> wits = {world.make_witness(target), world.make_witness(source)};

    refo::flat_state<H> oracle(3);
    world.for_each_account([&](const address& k, const account_record& r) { oracle.accounts[k] = r; });
    oracle.apply(writes);
    digest expect = oracle.root();

    for (auto& n : nodes) {
        auto upd = n.apply_block_writes(writes, wits, parent);
        CHECK(upd.new_root == expect);
        CHECK(n.global_root() == expect);
    }
    CHECK(world.apply(writes) == expect);
    CHECK(nodes[1].record(target)->balance == 2);
}

TEST_CASE("owned-only write leaves the proof path untouched")
{
    using H = sha256_hasher;
    auto world = three_bit_world<H>();
    node_identity id{address::from_bits("100"), 1, 1};  // owns 1xx
    auto node = world.make_partial(id);
    auto before = node.proof_path();

    address target = address::from_u64(3, 0b110);
    std::vector<account_write> writes = {balance_write(target, *world.record(target), 42)};
    auto upd = node.apply_block_writes(writes, {}, world.root());

    // nothing under 0xx changed, so the single path sibling is stable
    REQUIRE(node.proof_path().size() == 1);
    CHECK(node.proof_path()[0].sibling == before[0].sibling);
    CHECK(upd.new_root == world.apply(writes));
}

TEST_CASE("random write batches match the full-trie oracle leaf by leaf")
{
    using H = fast_hasher;
    const int width = 16;
    rng r(909);

    world_state<H> world(width);
    refo::flat_state<H> oracle(width);
    std::vector<address> keys;
    while (keys.size() < 4096) {
        address k = r.random_address(width);
        if (oracle.accounts.count(k)) continue;
        account_record rec;
        rec.balance = r.next();
        world.set_account(k, rec);
        oracle.accounts[k] = rec;
        keys.push_back(k);
    }

    node_identity id{r.random_address(width), 3, 1};
    auto node = world.make_partial(id);
    REQUIRE(node.global_root() == oracle.root());

    // 1,000 random writes split over a few blocks
    for (int block = 0; block < 4; ++block) {
        std::vector<account_write> writes;
        std::set<address> picked;
        while (writes.size() < 250) {
            const address& k = keys[r.bounded(keys.size())];
            if (!picked.insert(k).second) continue;
            writes.push_back(balance_write(k, oracle.accounts[k], r.next()));
        }
        std::vector<account_witness> wits;
        for (const auto& w : writes) wits.push_back(world.make_witness(w.key));

        digest parent = node.global_root();
        auto upd = node.apply_block_writes(writes, wits, parent);
        oracle.apply(writes);
        digest expect = oracle.root();
        CHECK(upd.new_root == expect);
        CHECK(world.apply(writes) == expect);
    }

    // leaf-by-leaf: every owned account equals the oracle's view
    std::size_t owned = 0;
    node.for_each_account([&](const address& k, const account_record& rec) {
        ++owned;
        CHECK(oracle.accounts.at(k) == rec);
    });
    CHECK(owned > 0);
}

TEST_CASE("contract slot writes update storage roots through proofs")
{
    using H = sha256_hasher;
    const int width = 12;
    rng r(42);

    world_state<H> world(width);
    address contract = r.random_address(width);
    auto blob = std::make_shared<const bytes>(bytes{0xde, 0xad, 0xbe, 0xef});
    account_record rec;
    rec.kind = account_kind::contract;
    rec.code_hash = world.set_code(blob);
    world.set_account(contract, rec);
    std::vector<address> slot_keys;
    for (int i = 0; i < 20; ++i) {
        address sk = r.random_address(width);
        world.set_slot(contract, sk, slot_value_from_u64(r.next()));
        slot_keys.push_back(sk);
    }
    // a few externals elsewhere
    for (int i = 0; i < 10; ++i) {
        account_record e;
        e.balance = r.next();
        world.set_account(r.random_address(width), e);
    }

    // a node that does NOT own the contract must still track the root
    node_identity id{contract ^ address::from_u64(width, 1 << (width - 1)), 1, 1};
    auto node = world.make_partial(id);
    REQUIRE_FALSE(node.covers_key(contract));

    account_write w;
    w.key = contract;
    w.kind = account_kind::contract;
    w.nonce = world.record(contract)->nonce + 1;
    w.balance = 0;
    w.code_hash = world.record(contract)->code_hash;
    w.slot_writes = {{slot_keys[3], slot_value_from_u64(111)},
                     {r.random_address(width), slot_value_from_u64(222)}};  // one fresh slot

    std::vector<address> touched_slots = {w.slot_writes[0].first, w.slot_writes[1].first};
    auto wit = world.make_witness(contract, touched_slots);

    digest parent = node.global_root();
    auto upd = node.apply_block_writes({w}, {wit}, parent);
    CHECK(upd.new_root == world.apply({w}));
    CHECK(upd.storage_changed.count(contract) == 1);
}

TEST_CASE("missing witness and bad proofs are rejected")
{
    using H = sha256_hasher;
    auto world = three_bit_world<H>();
    node_identity id{address::from_bits("000"), 2, 1};
    auto node = world.make_partial(id);
    address outside = address::from_u64(3, 0b110);

    std::vector<account_write> writes = {balance_write(outside, *world.record(outside), 7)};
    CHECK_THROWS_AS(node.apply_block_writes(writes, {}, node.global_root()), cannot_update_error);

    auto wit = world.make_witness(outside);
    wit.record->balance ^= 1;  // record no longer matches the proof
    CHECK_THROWS_AS(node.apply_block_writes(writes, {wit}, node.global_root()),
                    verification_error);
}

TEST_CASE("get_with_proof returns verifiable bundles")
{
    using H = sha256_hasher;
    const int width = 12;
    rng r(7);
    world_state<H> world(width);

    address contract = address::from_u64(width, 0b000000000111);
    auto blob = std::make_shared<const bytes>(bytes(100, 0xAB));
    account_record rec;
    rec.kind = account_kind::contract;
    rec.code_hash = world.set_code(blob);
    world.set_account(contract, rec);
    std::vector<address> sks;
    for (int i = 0; i < 5; ++i) {
        address sk = r.random_address(width);
        world.set_slot(contract, sk, slot_value_from_u64(1000 + static_cast<std::uint64_t>(i)));
        sks.push_back(sk);
    }

    node_identity id{address::from_u64(width, 0), 2, 1};  // owns 00...
    auto node = world.make_partial(id);

    // two requested slots
    auto w = node.get_with_proof(contract, std::vector<address>{sks[0], sks[1]});
    REQUIRE(w.record);
    CHECK(w.slots.size() == 2);
    CHECK(w.code != nullptr);
    CHECK(verify_account_witness<H>(node.global_root(), w));

    // unspecified slot set returns all five
    auto all = node.get_with_proof(contract);
    CHECK(all.slots.size() == 5);
    CHECK(verify_account_witness<H>(node.global_root(), all));

    // unknown slot key gets an absence proof
    address missing = address::from_u64(width, 0xF0F);
    auto abs = node.get_with_proof(contract, std::vector<address>{missing});
    REQUIRE(abs.slots.size() == 1);
    CHECK_FALSE(abs.slots[0].value.has_value());
    CHECK(verify_account_witness<H>(node.global_root(), abs));

    // outside the owned prefix
    address outside = address::from_u64(width, 0xFFF);
    CHECK_THROWS_AS(node.get_with_proof(outside), not_held_error);
}

TEST_CASE("root agreement across nodes covering the whole space")
{
    using H = fast_hasher;
    const int width = 16;
    rng r(5150);
    world_state<H> world(width);
    refo::flat_state<H> oracle(width);
    std::vector<address> keys;
    while (keys.size() < 500) {
        address k = r.random_address(width);
        if (oracle.accounts.count(k)) continue;
        account_record rec;
        rec.balance = r.next();
        world.set_account(k, rec);
        oracle.accounts[k] = rec;
        keys.push_back(k);
    }

    // seven nodes: one full node, both 1-bit halves, all four 2-bit quarters
    std::vector<node_identity> ids;
    ids.push_back({r.random_address(width), 0, 0});
    for (std::uint64_t p = 0; p < 2; ++p)
        ids.push_back({address::from_u64(width, p << (width - 1)), 1, 0});
    for (std::uint64_t p = 0; p < 4; ++p)
        ids.push_back({address::from_u64(width, p << (width - 2)), 2, 0});
    std::vector<partial_state<H>> nodes;
    for (const auto& id : ids) nodes.push_back(world.make_partial(id));

    std::vector<account_write> writes;
    for (std::size_t i = 0; i < 40; ++i)
        writes.push_back(balance_write(keys[i * 7], oracle.accounts[keys[i * 7]], r.next()));
    std::vector<account_witness> wits;
    for (const auto& w : writes) wits.push_back(world.make_witness(w.key));

    oracle.apply(writes);
    digest expect = oracle.root();
    for (auto& n : nodes) {
        auto upd = n.apply_block_writes(writes, wits, world.root());
        CHECK(upd.new_root == expect);
    }
}

TEST_CASE("snapshots are self-verifying and splittable")
{
    using H = sha256_hasher;
    const int width = 10;
    rng r(88);
    world_state<H> world(width);
    for (int i = 0; i < 200; ++i) {
        account_record rec;
        rec.balance = r.next();
        world.set_account(r.random_address(width), rec);
    }
    node_identity id{address::from_u64(width, 0b01ull << (width - 2)), 2, 1};
    auto node = world.make_partial(id);

    auto whole = node.subtree_snapshot(node.owned_prefix(), node.prefix_len());
    CHECK(whole.entries.size() == node.account_count());
    CHECK(verify_snapshot<H>(whole, width));

    // one bit deeper: the two halves partition the owned range
    auto left = node.subtree_snapshot(node.owned_prefix(), node.prefix_len() + 1);
    auto right = node.subtree_snapshot(node.owned_prefix().with_bit(node.prefix_len(), true),
                                       node.prefix_len() + 1);
    CHECK(left.entries.size() + right.entries.size() == whole.entries.size());
    CHECK(verify_snapshot<H>(left, width));
    CHECK(verify_snapshot<H>(right, width));

    CHECK_THROWS_AS(node.subtree_snapshot(address::from_u64(width, 0), 2), not_held_error);

    // a tampered snapshot fails verification
    auto bad = whole;
    bad.entries[0].record.balance ^= 1;
    CHECK_FALSE(verify_snapshot<H>(bad, width));

    // a fresh node loads the two chunks and anchors to the same root
    node_identity id2{id.id, 2, 9};
    partial_state<H> joined(width, id2);
    joined.load_snapshot(left);
    joined.load_snapshot(right);
    CHECK(joined.global_root() == node.global_root());
    CHECK(joined.subtree_root() == node.subtree_root());
    CHECK(joined.account_count() == node.account_count());
}

TEST_CASE("diff hashes locate a single stale leaf in depth many steps")
{
    using H = sha256_hasher;
    const int width = 10;
    rng r(17);
    world_state<H> world(width);
    std::vector<address> keys;
    while (keys.size() < 128) {
        address k = r.random_address(width);
        account_record rec;
        rec.balance = r.next();
        world.set_account(k, rec);
        keys.push_back(k);
    }
    node_identity id{r.random_address(width), 1, 1};
    auto fresh = world.make_partial(id);
    auto stale = world.make_partial(id);

    // identical states agree at every probed position
    for (int i = 0; i < 20; ++i) {
        address p = id.id.truncated(1);
        int depth = 1 + static_cast<int>(r.bounded(static_cast<std::uint64_t>(width)));
        for (int d = 1; d < depth; ++d) p.set_bit(d, r.bounded(2) != 0);
        CHECK(fresh.diff_hashes(p, depth).node == stale.diff_hashes(p, depth).node);
    }

    // perturb one owned leaf in the fresh copy (simulates a missed update)
    address victim;
    for (const auto& k : keys)
        if (covers(id, k)) victim = k;
    REQUIRE(victim.width() == width);
    {
        account_record rec = *world.record(victim);
        std::vector<account_write> w = {
            balance_write(victim, rec, rec.balance ^ 0x5a5a)};
        auto wits = std::vector<account_witness>{world.make_witness(victim)};
        fresh.apply_block_writes(w, wits, world.root());
    }

    CHECK(fresh.diff_hashes(id.id, 1).node != stale.diff_hashes(id.id, 1).node);

    // descend: exactly one child mismatches per level until the leaf
    address path = id.id.truncated(1);
    int depth = 1;
    int steps = 0;
    while (depth < width) {
        auto a = fresh.diff_hashes(path, depth);
        auto b = stale.diff_hashes(path, depth);
        REQUIRE(a.node != b.node);
        bool left_differs = a.child0 != b.child0;
        bool right_differs = a.child1 != b.child1;
        CHECK(left_differs != right_differs);  // exactly one branch diverges
        if (right_differs) path.set_bit(depth, true);
        ++depth;
        ++steps;
    }
    CHECK(steps == width - 1);
    CHECK(path == victim);
}

TEST_CASE("code store deduplicates shared blobs")
{
    using H = sha256_hasher;
    const int width = 10;
    world_state<H> world(width);
    auto blob = std::make_shared<const bytes>(bytes(500, 0x11));
    digest h = world.set_code(blob);
    for (std::uint64_t i = 0; i < 6; ++i) {
        account_record rec;
        rec.kind = account_kind::contract;
        rec.code_hash = h;
        world.set_account(address::from_u64(width, i), rec);
    }
    node_identity id{address::from_u64(width, 0), 0, 1};
    auto node = world.make_partial(id);
    CHECK(node.account_count() == 6);
    CHECK(node.stored_code_bytes() == 500);  // charged once
}

TEST_CASE("measure_proof_size follows the wire framing")
{
    using H = sha256_hasher;
    const int width = 32;
    world_state<H> world(width);
    account_record rec;
    rec.balance = 1;
    world.set_account(address::from_u64(width, 5), rec);
    node_identity id{address::from_u64(width, 0), 0, 1};
    auto node = world.make_partial(id);
    // single leaf: framing only
    CHECK(node.measure_proof_size(address::from_u64(width, 5)) == proof_framing_bytes(width));
    CHECK_THROWS_AS(node.measure_proof_size(address::from_u64(width, 6)), not_held_error);
}
