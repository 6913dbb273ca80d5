#include <cstdint>
#include <vector>

#include "doctest.h"
#include "onepix/rng.hpp"

using onepix::Rng;
using onepix::derive_seed;

// 0.99 chi-square quantile for 63 degrees of freedom.
static constexpr double kChi2_99_63 = 92.01002361413214;

TEST_CASE("splitmix64 matches the published reference outputs") {
    // Reference vectors for the splitmix64 finalizer, computed independently.
    Rng a(0);
    CHECK(a.next_u64() == 0xe220a8397b1dcdafULL);
    CHECK(a.next_u64() == 0x6e789e6aa1b965f4ULL);
    CHECK(a.next_u64() == 0x06c45d188009454fULL);

    Rng b(0x0123456789abcdefULL);
    CHECK(b.next_u64() == 0x157a3807a48faa9dULL);
    CHECK(b.next_u64() == 0xd573529b34a1d093ULL);
    CHECK(b.next_u64() == 0x2f90b72e996dccbeULL);

    Rng c(42);
    CHECK(c.next_u64() == 0xbdd732262feb6e95ULL);
    CHECK(c.next_u64() == 0x28efe333b266f103ULL);
    CHECK(c.next_u64() == 0x47526757130f9f52ULL);
    CHECK(c.next_u64() == 0x581ce1ff0e4ae394ULL);
}

TEST_CASE("derive_seed(seed, k) is the (k+1)-th raw output of the parent stream") {
    for (std::uint64_t seed : {std::uint64_t(0), std::uint64_t(42), std::uint64_t(0xdeadbeefULL)}) {
        Rng parent(seed);
        for (std::uint64_t k = 0; k < 8; ++k) CHECK(derive_seed(seed, k) == parent.next_u64());
    }
}

TEST_CASE("uniform stays in [0, 1) with a sane mean") {
    Rng rng(7);
    double sum = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("below is bounded and uniform under a chi-square test") {
    Rng rng(123);
    const int bins = 64;
    const int draws = 64 * 1000;
    std::vector<int> count(bins, 0);
    for (int i = 0; i < draws; ++i) {
        const std::uint64_t v = rng.below(bins);
        REQUIRE(v < static_cast<std::uint64_t>(bins));
        ++count[static_cast<int>(v)];
    }
    const double expected = static_cast<double>(draws) / bins;
    double chi2 = 0;
    for (int c : count) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < kChi2_99_63);
}

TEST_CASE("below handles degenerate and non-power-of-two bounds") {
    Rng rng(9);
    for (int i = 0; i < 100; ++i) CHECK(rng.below(1) == 0);
    for (int i = 0; i < 1000; ++i) CHECK(rng.below(3) < 3);
}

TEST_CASE("normal draws have standard moments and replay deterministically") {
    Rng rng(2024);
    const int n = 20000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.03);
    CHECK(var == doctest::Approx(1.0).epsilon(0.03));

    Rng x(5), y(5);
    for (int i = 0; i < 100; ++i) CHECK(x.normal() == y.normal());
}
