#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "aem/numerics.hpp"

using namespace aem;

TEST_CASE("logaddexp matches direct computation on small inputs") {
    CHECK(logaddexp(std::log(2.0), std::log(3.0)) == Catch::Approx(std::log(5.0)).epsilon(1e-14));
    CHECK(logaddexp(0.0, 0.0) == Catch::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("logaddexp does not overflow for large inputs") {
    CHECK(logaddexp(1000.0, 1000.0) == Catch::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
    CHECK(logaddexp(1000.0, -1000.0) == 1000.0);
}

TEST_CASE("logaddexp handles -inf identity") {
    CHECK(logaddexp(kNegInf, 3.5) == 3.5);
    CHECK(logaddexp(3.5, kNegInf) == 3.5);
    CHECK(logaddexp(kNegInf, kNegInf) == kNegInf);
}

TEST_CASE("logsumexp matches direct sum and is shift invariant") {
    std::vector<double> v{0.1, -0.7, 2.3, 1.1};
    double direct = 0.0;
    for (double x : v) direct += std::exp(x);
    CHECK(logsumexp(v) == Catch::Approx(std::log(direct)).epsilon(1e-14));

    const double base = logsumexp(v);
    for (double shift : {300.0, -300.0, 700.0}) {
        std::vector<double> w = v;
        for (double& x : w) x += shift;
        CHECK(std::abs(logsumexp(w) - shift - base) < 1e-12);
    }
}

TEST_CASE("logsumexp edge cases") {
    CHECK(logsumexp(nullptr, 0) == kNegInf);
    std::vector<double> all_neg_inf{kNegInf, kNegInf};
    CHECK(logsumexp(all_neg_inf) == kNegInf);
    std::vector<double> one{4.2};
    CHECK(logsumexp(one) == 4.2);
}

TEST_CASE("softplus is accurate across regimes") {
    CHECK(softplus(0.0) == Catch::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(softplus(800.0) == 800.0);
    CHECK(softplus(-50.0) == Catch::Approx(std::exp(-50.0)).epsilon(1e-12));
    CHECK(softplus(1.0) == Catch::Approx(std::log1p(std::exp(1.0))).epsilon(1e-15));
}

TEST_CASE("sigmoid symmetry and midpoint") {
    CHECK(sigmoid(0.0) == 0.5);
    for (double x : {-30.0, -2.0, 0.3, 5.0, 40.0}) {
        CHECK(sigmoid(x) + sigmoid(-x) == Catch::Approx(1.0).epsilon(1e-14));
    }
    CHECK(sigmoid(-800.0) == 0.0);
    CHECK(sigmoid(800.0) == 1.0);
}

TEST_CASE("log_normal_pdf at the mode of the standard normal") {
    // log(1/sqrt(2*pi))
    CHECK(log_normal_pdf(0.0, 0.0, 1.0) == Catch::Approx(-0.9189385332046727).epsilon(1e-15));
    // General point: N(1.3; 0.5, 2.0)
    const double z = (1.3 - 0.5) / 2.0;
    const double expect = -0.5 * z * z - std::log(2.0) - 0.9189385332046727;
    CHECK(log_normal_pdf(1.3, 0.5, 2.0) == Catch::Approx(expect).epsilon(1e-14));
}

TEST_CASE("percentile interpolates linearly between order statistics") {
    std::vector<double> v{4.0, 1.0, 3.0, 2.0};
    CHECK(percentile(v, 0.0) == 1.0);
    CHECK(percentile(v, 100.0) == 4.0);
    CHECK(percentile(v, 50.0) == Catch::Approx(2.5).epsilon(1e-15));
    CHECK(percentile(v, 25.0) == Catch::Approx(1.75).epsilon(1e-15));
    CHECK(percentile({7.0}, 37.0) == 7.0);
}

TEST_CASE("percentile rejects bad input") {
    CHECK_THROWS_AS(percentile({}, 50.0), UsageError);
    CHECK_THROWS_AS(percentile({1.0}, -1.0), UsageError);
    CHECK_THROWS_AS(percentile({1.0}, 101.0), UsageError);
}

TEST_CASE("mean and unbiased variance") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(mean_of(v) == Catch::Approx(2.5).epsilon(1e-15));
    CHECK(variance_of(v) == Catch::Approx(5.0 / 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(mean_of({}), UsageError);
    CHECK_THROWS_AS(variance_of({1.0}), UsageError);
}
