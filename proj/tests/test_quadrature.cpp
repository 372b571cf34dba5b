#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "aem/quadrature.hpp"
#include "test_util.hpp"

using namespace aem;

namespace {

std::vector<double> grid(double lo, double hi, std::size_t n, std::vector<double>& xs) {
    xs.resize(n);
    const double dx = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) xs[i] = lo + static_cast<double>(i) * dx;
    return xs;
}

}  // namespace

TEST_CASE("log_trapezoid basics") {
    SECTION("constant unit integrand over [0,1]") {
        for (std::size_t n : {2u, 5u, 101u}) {
            std::vector<double> logf(n, 0.0);
            CHECK(log_trapezoid(logf, 1.0 / static_cast<double>(n - 1)) ==
                  Catch::Approx(0.0).margin(1e-14));
        }
    }
    SECTION("gaussian integrand recovers log sqrt(2 pi)") {
        std::vector<double> xs, logf;
        grid(-40.0, 40.0, 65537, xs);
        logf.resize(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) logf[i] = -0.5 * xs[i] * xs[i];
        CHECK(log_trapezoid(logf, xs[1] - xs[0]) ==
              Catch::Approx(0.5 * std::log(2.0 * M_PI)).margin(1e-7));
    }
    SECTION("deeply negative integrand does not underflow") {
        std::vector<double> logf(11, -2000.0);
        CHECK(log_trapezoid(logf, 0.1) == Catch::Approx(-2000.0).margin(1e-12));
    }
    SECTION("matches the linear-domain rule on moderate integrands") {
        Rng rng(31);
        std::vector<double> logf(64);
        for (auto& v : logf) v = rng.uniform(-3.0, 2.0);
        const double dx = 0.07;
        double linear = 0.0;
        for (std::size_t i = 0; i + 1 < logf.size(); ++i)
            linear += 0.5 * dx * (std::exp(logf[i]) + std::exp(logf[i + 1]));
        const double got = log_trapezoid(logf, dx);
        CHECK(std::abs(got - std::log(linear)) < 1e-12 * std::abs(std::log(linear)) + 1e-13);
    }
    SECTION("all negative infinity gives negative infinity") {
        std::vector<double> logf(5, kNegInf);
        CHECK(log_trapezoid(logf, 0.5) == kNegInf);
    }
    SECTION("misuse") {
        CHECK_THROWS_AS(log_trapezoid(std::vector<double>{0.0}, 0.1), UsageError);
        CHECK_THROWS_AS(log_trapezoid(std::vector<double>{0.0, 0.0}, 0.0), UsageError);
        CHECK_THROWS_AS(log_trapezoid(std::vector<double>{0.0, 0.0}, -1.0), UsageError);
    }
}

TEST_CASE("grid refinement") {
    auto gauss = [](const std::vector<double>& xs, std::vector<double>& logf) {
        for (std::size_t i = 0; i < xs.size(); ++i) logf[i] = -0.5 * xs[i] * xs[i];
    };
    SECTION("converges on the gaussian to 7 significant figures") {
        QuadratureResult res = refine_log_integral(gauss, -40.0, 40.0);
        CHECK(res.converged);
        CHECK(res.log_integral == Catch::Approx(0.5 * std::log(2.0 * M_PI)).margin(1e-7));
        // One more doubling moves the result by less than the stop tolerance.
        std::vector<double> xs, logf;
        const std::size_t n = static_cast<std::size_t>(res.grid_points) * 2 - 1;
        grid(-40.0, 40.0, n, xs);
        logf.resize(n);
        gauss(xs, logf);
        const double refined = log_trapezoid(logf, xs[1] - xs[0]);
        CHECK(std::abs(refined - res.log_integral) <= 1e-7 * std::max(1.0, std::abs(refined)));
    }
    SECTION("successive refinements shrink the update on smooth integrands") {
        // Coarse grids keep the rule in its algebraic-decay regime; the
        // gaussian converges past machine noise within a few doublings.
        std::vector<double> xs, logf;
        std::vector<double> estimates;
        for (std::size_t n : {5u, 9u, 17u, 33u}) {
            grid(-10.0, 10.0, n, xs);
            logf.resize(n);
            gauss(xs, logf);
            estimates.push_back(log_trapezoid(logf, xs[1] - xs[0]));
        }
        for (std::size_t i = 2; i < estimates.size(); ++i) {
            const double prev = std::abs(estimates[i - 1] - estimates[i - 2]);
            const double cur = std::abs(estimates[i] - estimates[i - 1]);
            CHECK(cur < prev);
        }
    }
    SECTION("point cap marks non-convergence") {
        // Kink off the dyadic grid: quadratic error decay needs thousands of
        // points to reach the stop tolerance, far past this budget.
        auto kink = [](const std::vector<double>& xs, std::vector<double>& logf) {
            for (std::size_t i = 0; i < xs.size(); ++i) logf[i] = -10.0 * std::abs(xs[i] - 1.0 / M_PI);
        };
        QuadratureResult res = refine_log_integral(kink, 0.0, 1.0, 1 << 6);
        CHECK_FALSE(res.converged);
        CHECK(res.grid_points <= (1 << 6));
    }
    SECTION("empty interval rejected") {
        CHECK_THROWS_AS(refine_log_integral(gauss, 1.0, 1.0), UsageError);
    }
}

TEST_CASE("integration intervals") {
    SECTION("mixture interval unions component windows") {
        MixtureParamsV p;
        p.log_coeffs = Mat::Zero(2, 1);
        p.locs = Mat(2, 1);
        p.locs << -1.0, 4.0;
        p.scales = Mat(2, 1);
        p.scales << 0.5, 0.1;
        auto [lo, hi] = mixture_interval(p);
        CHECK(lo == Catch::Approx(-1.0 - 10.0).margin(1e-15));
        CHECK(hi == Catch::Approx(-1.0 + 10.0).margin(1e-15));
    }
}

TEST_CASE("importance sampling dimension scaling demo") {
    Rng rng(17);  // default demo seed, shared with the CLI
    IsScalingResult res = is_scaling_demo({1, 4, 16, 64}, rng);
    REQUIRE(res.dims.size() == 4);
    for (const auto& trials : res.trial_log_z) REQUIRE(trials.size() == 50);

    SECTION("one-dimensional median sits near zero") {
        CHECK(std::abs(percentile(res.trial_log_z[0], 50.0)) < 0.05);
    }
    SECTION("median estimate degrades with dimension") {
        double prev = percentile(res.trial_log_z[0], 50.0);
        for (std::size_t i = 1; i < res.trial_log_z.size(); ++i) {
            const double cur = percentile(res.trial_log_z[i], 50.0);
            CHECK(cur <= prev);
            prev = cur;
        }
        CHECK(percentile(res.trial_log_z[3], 50.0) < percentile(res.trial_log_z[0], 50.0) - 0.5);
    }
    SECTION("per-dimension weight second moment matches the closed form") {
        // E[w^2] for N(0,1) target against N(0,1.25^2) proposal.
        const double sigma2 = 1.25 * 1.25;
        const double expected = sigma2 / std::sqrt(2.0 * sigma2 - 1.0);
        Rng wrng(42);
        const int n = 100000;
        std::vector<double> w2(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const double x = 1.25 * wrng.normal();
            const double lw = log_normal_pdf(x, 0.0, 1.0) - log_normal_pdf(x, 0.0, 1.25);
            w2[static_cast<std::size_t>(i)] = std::exp(2.0 * lw);
        }
        const double se = std::sqrt(variance_of(w2) / double(n));
        CHECK(std::abs(mean_of(w2) - expected) < 3.0 * se);
    }
    SECTION("misuse") {
        Rng r2(43);
        CHECK_THROWS_AS(is_scaling_demo({0}, r2), UsageError);
    }
}
