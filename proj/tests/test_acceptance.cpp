// Acceptance suite: runs every criterion at its pinned tolerance and prints
// one PASS/FAIL line per criterion.  ctest gates on this binary.

#include <catch2/catch_amalgamated.hpp>

#include <statenet/acceptance.hpp>

#include <cstdio>

using namespace statenet;

TEST_CASE("acceptance criteria")
{
    auto results = run_all_acceptance([](const criterion_result& r) {
        std::printf("[%s] criterion %d: %s — %s\n", r.pass ? "PASS" : "FAIL", r.number,
                    r.name.c_str(), r.detail.c_str());
        std::fflush(stdout);
    });
    for (const auto& r : results) {
        INFO("criterion " << r.number << " (" << r.name << "): " << r.detail);
        CHECK(r.pass);
    }
}
