#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "aem/rng.hpp"

using namespace aem;

TEST_CASE("identical seeds give identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(42), d(43);
    bool all_equal = true;
    for (int i = 0; i < 16; ++i) {
        if (c.next_u64() != d.next_u64()) all_equal = false;
    }
    CHECK_FALSE(all_equal);
}

TEST_CASE("split streams are deterministic and distinct") {
    Rng root(7);
    Rng a = root.split(0);
    Rng b = root.split(0);
    Rng c = root.split(1);
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() == b.next_u64());
    Rng a2 = root.split(0);
    bool differs = false;
    for (int i = 0; i < 16; ++i) {
        if (a2.next_u64() != c.next_u64()) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("uniform lies in [0, 1) with the right mean") {
    Rng r(123);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    // 3 sigma of the mean of n uniforms: 3 / sqrt(12 n)
    CHECK(std::abs(sum / n - 0.5) < 3.0 / std::sqrt(12.0 * n));
}

TEST_CASE("normal draws have unit moments") {
    Rng r(321);
    const int n = 100000;
    std::vector<double> xs(n);
    double sum = 0.0;
    for (auto& x : xs) {
        x = r.normal();
        sum += x;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double var = ss / (n - 1);
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
    // sample variance of a normal has stddev ~ sqrt(2/n)
    CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("normal consumes exactly two uniform draws") {
    Rng a(99), b(99);
    (void)a.normal();
    (void)b.uniform();
    (void)b.uniform();
    CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("categorical respects degenerate and proportional weights") {
    Rng r(5);
    for (int i = 0; i < 50; ++i) {
        CHECK(r.categorical({1.0, 0.0, 0.0}) == 0);
        CHECK(r.categorical({0.0, 0.0, 2.0}) == 2);
    }
    const int n = 100000;
    std::vector<int> counts(3, 0);
    for (int i = 0; i < n; ++i) ++counts[r.categorical({1.0, 2.0, 1.0})];
    const double tol = 3.0 * std::sqrt(0.5 * 0.5 / n);
    CHECK(std::abs(counts[0] / double(n) - 0.25) < tol);
    CHECK(std::abs(counts[1] / double(n) - 0.50) < tol);
    CHECK(std::abs(counts[2] / double(n) - 0.25) < tol);
}

TEST_CASE("categorical rejects a zero-sum weight vector") {
    Rng r(5);
    CHECK_THROWS_AS(r.categorical({0.0, 0.0}), UsageError);
    CHECK_THROWS_AS(r.uniform_int(0), UsageError);
}

TEST_CASE("shuffle permutes and is seed-deterministic") {
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> w = v;
    Rng a(11), b(11);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
}

TEST_CASE("state round-trips through the textual form") {
    Rng r(2024);
    for (int i = 0; i < 37; ++i) (void)r.next_u64();
    Rng restored = Rng::from_state_string(r.state_string());
    for (int i = 0; i < 64; ++i) {
        CHECK(r.next_u64() == restored.next_u64());
    }
    CHECK_THROWS_AS(Rng::from_state_string(""), ParseError);
}
