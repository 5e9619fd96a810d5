#include <catch2/catch_amalgamated.hpp>

#include <statenet/address.hpp>
#include <statenet/rng.hpp>

using namespace statenet;

TEST_CASE("common prefix length")
{
    // 010 vs 011 agree on the first two bits
    CHECK(common_prefix_len(address::from_bits("010"), address::from_bits("011")) == 2);

    auto a = address::from_bits("10110100");
    CHECK(common_prefix_len(a, a) == 8);

    CHECK(common_prefix_len(address::from_bits("1000"), address::from_bits("0000")) == 0);

    CHECK_THROWS_AS(common_prefix_len(address::from_bits("10"), address::from_bits("100")),
                    width_error);
}

TEST_CASE("xor distance")
{
    auto a = address::from_bits("0011");
    CHECK(xor_distance(a, a).is_zero());
    CHECK(xor_distance(a, address::from_bits("0010")).to_u64() == 1);

    rng r(7);
    for (int i = 0; i < 200; ++i) {
        auto x = r.random_address(32);
        auto y = r.random_address(32);
        CHECK(xor_distance(x, y) == xor_distance(y, x));
    }
    CHECK_THROWS_AS(address::from_bits("10") ^ address::from_bits("100"), width_error);
}

TEST_CASE("xor distance is unidirectional")
{
    // for any a and d there is exactly one b with a ^ b == d, namely a ^ d
    rng r(11);
    for (int i = 0; i < 100; ++i) {
        auto a = r.random_address(64);
        auto d = r.random_address(64);
        auto b = a ^ d;
        CHECK(xor_distance(a, b) == d);
        auto b2 = r.random_address(64);
        if (b2 != b) CHECK(xor_distance(a, b2) != d);
    }
}

TEST_CASE("coverage rule")
{
    node_identity node{address::from_bits("0100"), 2, 0};
    CHECK(covers(node, address::from_bits("0101")));
    node.prefix_len = 3;
    CHECK_FALSE(covers(node, address::from_bits("0111")));

    // prefix length zero stores everything
    node_identity full{address::from_bits("1111"), 0, 0};
    rng r(3);
    for (int i = 0; i < 50; ++i) {
        address acct = r.random_address(4);
        CHECK(covers(full, acct));
    }
}

TEST_CASE("covers is monotone in prefix length")
{
    rng r(5);
    for (int i = 0; i < 200; ++i) {
        node_identity n{r.random_address(32), static_cast<int>(r.bounded(33)), 0};
        address acct = r.random_address(32);
        if (covers(n, acct)) {
            for (int p = n.prefix_len; p >= 0; --p)
                CHECK(covers({n.id, p, 0}, acct));
        }
    }
}

TEST_CASE("covered fraction converges to 2^-p")
{
    rng r(42);
    for (int p : {2, 4, 6}) {
        node_identity n{r.random_address(32), p, 0};
        const int trials = 200000;
        int hit = 0;
        for (int i = 0; i < trials; ++i)
            if (covers(n, r.random_address(32))) ++hit;
        double expect = std::pow(0.5, p) * trials;
        double sigma = std::sqrt(expect * (1.0 - std::pow(0.5, p)));
        CHECK(std::abs(hit - expect) <= 3.0 * sigma + 1.0);
    }
}

TEST_CASE("address codecs round-trip")
{
    auto a = address::from_u64(32, 0xdeadbeefu);
    CHECK(a.to_u64() == 0xdeadbeefu);
    CHECK(a.to_hex() == "deadbeef");
    CHECK(address::from_hex(32, "deadbeef") == a);
    CHECK(address::from_bits(a.to_bits()) == a);

    auto b = address::from_bits("10100");
    CHECK(b.to_u64() == 0b10100);
    CHECK(address::from_hex(5, b.to_hex()) == b);

    CHECK_THROWS_AS(address::from_u64(4, 16), schema_error);
    CHECK_THROWS_AS(address::from_hex(4, "ff"), schema_error);
}

TEST_CASE("truncated clears low bits")
{
    auto a = address::from_bits("11111111");
    CHECK(a.truncated(3) == address::from_bits("11100000"));
    CHECK(a.truncated(0).is_zero());
    CHECK(a.truncated(8) == a);
}
