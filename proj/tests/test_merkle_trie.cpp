#include <catch2/catch_amalgamated.hpp>

#include <statenet/merkle_trie.hpp>
#include <statenet/rng.hpp>
#include <statenet/util.hpp>

#include "reference_oracle.hpp"

using namespace statenet;

namespace {

bytes val(std::uint64_t v)
{
    bytes b;
    put_u64_be(b, v);
    return b;
}

template <class H>
std::map<address, bytes> random_leaves(rng& r, int width, std::size_t n)
{
    std::map<address, bytes> m;
    while (m.size() < n) m.emplace(r.random_address(width), val(r.next()));
    return m;
}

} // namespace

TEST_CASE("trie root matches recursive oracle")
{
    rng r(101);
    for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{2}, std::size_t{7},
                          std::size_t{64}, std::size_t{300}}) {
        auto leaves = random_leaves<sha256_hasher>(r, 16, n);
        merkle_trie<sha256_hasher> t(16);
        for (const auto& [k, v] : leaves) t.put(k, v);
        CHECK(t.root() == refo::trie_root<sha256_hasher>(leaves, 16));
    }
}

TEST_CASE("updates keep matching the oracle")
{
    rng r(55);
    std::map<address, bytes> leaves;
    merkle_trie<sha256_hasher> t(12);
    for (int round = 0; round < 400; ++round) {
        address k = r.random_address(12);
        bytes v = val(r.next());
        leaves[k] = v;
        t.put(k, v);
        if (round % 37 == 0) CHECK(t.root() == refo::trie_root<sha256_hasher>(leaves, 12));
    }
    CHECK(t.root() == refo::trie_root<sha256_hasher>(leaves, 12));
    CHECK(t.size() == leaves.size());
}

TEST_CASE("membership proofs verify and bad ones do not")
{
    rng r(77);
    auto leaves = random_leaves<sha256_hasher>(r, 32, 128);
    merkle_trie<sha256_hasher> t(32);
    for (const auto& [k, v] : leaves) t.put(k, v);
    digest root = t.root();

    for (const auto& [k, v] : leaves) {
        auto p = t.prove(k);
        REQUIRE(verify_proof<sha256_hasher>(root, byte_view(v), p));
        // a flipped bit in the leaf bytes must be caught
        bytes tampered = v;
        tampered[0] ^= 1;
        CHECK_FALSE(verify_proof<sha256_hasher>(root, byte_view(tampered), p));
    }
}

TEST_CASE("absence proofs agree with a full scan")
{
    rng r(78);
    // 16-leaf trie; the oracle is the exhaustive membership scan
    auto leaves = random_leaves<sha256_hasher>(r, 10, 16);
    merkle_trie<sha256_hasher> t(10);
    for (const auto& [k, v] : leaves) t.put(k, v);
    digest root = t.root();

    int absent_checked = 0;
    for (std::uint64_t u = 0; u < 1024; ++u) {
        address k = address::from_u64(10, u);
        bool member = leaves.count(k) != 0;  // brute-force scan
        if (member) continue;
        auto p = t.prove(k);
        CHECK(verify_proof<sha256_hasher>(root, std::nullopt, p));
        ++absent_checked;
    }
    CHECK(absent_checked == 1024 - 16);
}

TEST_CASE("proof soundness under random tampering")
{
    rng r(1234);
    auto leaves = random_leaves<sha256_hasher>(r, 32, 64);
    merkle_trie<sha256_hasher> t(32);
    for (const auto& [k, v] : leaves) t.put(k, v);
    digest root = t.root();

    std::vector<std::pair<address, bytes>> flat(leaves.begin(), leaves.end());
    int failures = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        const auto& [k, v] = flat[r.bounded(flat.size())];
        auto p = t.prove(k);
        bytes leaf = v;
        switch (r.bounded(3)) {
        case 0:  // tamper leaf
            leaf[r.bounded(leaf.size())] ^= static_cast<std::uint8_t>(1 + r.bounded(255));
            if (verify_proof<sha256_hasher>(root, byte_view(leaf), p)) ++failures;
            break;
        case 1: {  // tamper a sibling
            auto& lvl = p.levels[r.bounded(p.levels.size())];
            lvl.sibling[r.bounded(32)] ^= static_cast<std::uint8_t>(1 + r.bounded(255));
            if (verify_proof<sha256_hasher>(root, byte_view(leaf), p)) ++failures;
            break;
        }
        default: {  // tamper the root
            digest bad = root;
            bad[r.bounded(32)] ^= static_cast<std::uint8_t>(1 + r.bounded(255));
            if (verify_proof<sha256_hasher>(bad, byte_view(leaf), p)) ++failures;
            break;
        }
        }
    }
    CHECK(failures == 0);
}

TEST_CASE("single-leaf proof has zero siblings")
{
    merkle_trie<sha256_hasher> t(32);
    address k = address::from_u64(32, 12345);
    t.put(k, val(9));
    auto p = t.prove(k);
    CHECK(p.sibling_count() == 0);
    CHECK(p.wire_size() == proof_framing_bytes(32));
    CHECK(verify_proof<sha256_hasher>(t.root(), byte_view(*t.get(k)), p));
}

TEST_CASE("balanced trie proof size is 32 bytes per populated level")
{
    // keys i << (32-10): the top 10 levels are full, everything below is a
    // single-leaf chain
    merkle_trie<sha256_hasher> t(32);
    const int depth = 10;
    for (std::uint64_t i = 0; i < (1u << depth); ++i)
        t.put(address::from_u64(32, i << (32 - depth)), val(i));
    auto p = t.prove(address::from_u64(32, 0));
    CHECK(p.sibling_count() == depth);
    CHECK(p.wire_size() == 32 * depth + proof_framing_bytes(32));
    CHECK(verify_proof<sha256_hasher>(t.root(), byte_view(*t.get(address::from_u64(32, 0))), p));
}

TEST_CASE("proof wire encoding golden bytes")
{
    // frozen by docs/formats.md; any change here is a wire format break
    merkle_trie<sha256_hasher> t(8);
    t.put(address::from_u64(8, 0x10), val(1));
    t.put(address::from_u64(8, 0x22), val(2));
    t.put(address::from_u64(8, 0x23), val(3));
    auto p = t.prove(address::from_u64(8, 0x22));
    bytes wire = p.encode();
    CHECK(to_hex(wire)
          == "000884"
             "feebf1863bd1fceedfeff2693829d50ffbcac100d0fbe745482e032f93f6bafb"
             "7d77c9f02914d359782226192d2a803303f060869bb15413e296832dad8ffaf6");
}

TEST_CASE("digest_at matches oracle at interior positions")
{
    rng r(404);
    auto leaves = random_leaves<sha256_hasher>(r, 12, 40);
    merkle_trie<sha256_hasher> t(12);
    for (const auto& [k, v] : leaves) t.put(k, v);
    t.root();

    for (int depth = 0; depth <= 12; ++depth) {
        for (int probe = 0; probe < 8; ++probe) {
            address pos = r.random_address(12).truncated(depth);
            std::map<address, bytes> under;
            for (const auto& [k, v] : leaves)
                if (prefix_match(pos, depth, k)) under.emplace(k, v);
            digest expect = refo::subtree_root<sha256_hasher>(under, under.begin(), under.end(),
                                                              12, depth);
            CHECK(t.digest_at(pos, depth) == expect);
        }
    }
}

TEST_CASE("subtree-based trie equals the matching slice of a global trie")
{
    rng r(2024);
    auto leaves = random_leaves<sha256_hasher>(r, 16, 200);
    merkle_trie<sha256_hasher> global(16);
    for (const auto& [k, v] : leaves) global.put(k, v);
    global.root();

    address base = address::from_bits("01").truncated(2);
    base = address::from_u64(16, 0x4000);  // prefix 01
    merkle_trie<sha256_hasher> sub(16, base, 2);
    for (const auto& [k, v] : leaves)
        if (prefix_match(base, 2, k)) sub.put(k, v);
    CHECK(sub.root() == global.digest_at(base, 2));
}

TEST_CASE("root overlay reproduces direct recomputation")
{
    rng r(31337);
    const int width = 16;
    auto leaves = random_leaves<sha256_hasher>(r, width, 150);
    merkle_trie<sha256_hasher> t(width);
    for (const auto& [k, v] : leaves) t.put(k, v);
    digest old_root = t.root();

    // pick touched keys: some existing, some fresh
    std::vector<std::pair<address, bytes>> touched;
    auto it = leaves.begin();
    for (int i = 0; i < 10; ++i, ++it) touched.emplace_back(it->first, val(r.next()));
    for (int i = 0; i < 5; ++i) {
        address k = r.random_address(width);
        if (!leaves.count(k)) touched.emplace_back(k, val(r.next()));
    }

    root_overlay<sha256_hasher> ov(width);
    for (const auto& [k, v] : touched) ov.add_proof(k, t.prove(k));
    for (const auto& [k, v] : touched) ov.set_leaf(k, trie_hash<sha256_hasher>::leaf(v));
    digest new_root = ov.compute_root();
    CHECK(new_root != old_root);

    for (const auto& [k, v] : touched) {
        leaves[k] = v;
        t.put(k, v);
    }
    CHECK(new_root == t.root());
    CHECK(new_root == refo::trie_root<sha256_hasher>(leaves, width));
}

TEST_CASE("root overlay rejects unproven branches")
{
    merkle_trie<sha256_hasher> t(8);
    for (std::uint64_t i = 0; i < 20; ++i) t.put(address::from_u64(8, i * 11 % 256), val(i));
    t.root();
    root_overlay<sha256_hasher> ov(8);
    // change a leaf without supplying its proof
    ov.set_leaf(address::from_u64(8, 7), trie_hash<sha256_hasher>::leaf(val(1)));
    CHECK_THROWS_AS(ov.compute_root(), cannot_update_error);
}
