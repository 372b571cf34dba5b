#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "aem/proposal.hpp"
#include "aem/quadrature.hpp"
#include "test_util.hpp"

using namespace aem;
using aem::testutil::rand_mat;

namespace {

// Raw parameter column [logits | locations | raw scales] for one conditional.
Mat raw_column(const std::vector<double>& logits, const std::vector<double>& locs,
               const std::vector<double>& raw_scales) {
    const auto K = static_cast<Eigen::Index>(logits.size());
    Mat raw(3 * K, 1);
    for (Eigen::Index i = 0; i < K; ++i) {
        raw(i, 0) = logits[static_cast<std::size_t>(i)];
        raw(K + i, 0) = locs[static_cast<std::size_t>(i)];
        raw(2 * K + i, 0) = raw_scales[static_cast<std::size_t>(i)];
    }
    return raw;
}

double quadrature_of_density(const MixtureParamsV& p) {
    auto [lo, hi] = mixture_interval(p);
    auto res = refine_log_integral(
        [&](const std::vector<double>& xs, std::vector<double>& logf) {
            Mat x(1, static_cast<Eigen::Index>(xs.size()));
            for (std::size_t i = 0; i < xs.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = xs[i];
            MixtureParamsV rep;
            rep.log_coeffs = p.log_coeffs.replicate(1, x.cols());
            rep.locs = p.locs.replicate(1, x.cols());
            rep.scales = p.scales.replicate(1, x.cols());
            Mat lp = mixture_log_prob_value(rep, x);
            for (std::size_t i = 0; i < xs.size(); ++i) logf[i] = lp(0, static_cast<Eigen::Index>(i));
        },
        lo, hi);
    REQUIRE(res.converged);
    return res.log_integral;
}

}  // namespace

TEST_CASE("constraining raw parameters") {
    const int K = 4;
    Mat raw = raw_column({1.3, 1.3, 1.3, 1.3}, {0.0, 1.0, -1.0, 2.0}, {0.0, -40.0, 1.0, 2.0});
    MixtureParamsV p = constrain_value(raw, K, 1e-3);

    SECTION("equal logits give equal coefficients") {
        for (int i = 0; i < K; ++i) CHECK(std::exp(p.log_coeffs(i, 0)) == Catch::Approx(0.25).margin(1e-12));
    }
    SECTION("coefficients sum to 1") {
        double sum = 0.0;
        for (int i = 0; i < K; ++i) sum += std::exp(p.log_coeffs(i, 0));
        CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("locations pass through unchanged") {
        CHECK(p.locs(1, 0) == 1.0);
        CHECK(p.locs(3, 0) == 2.0);
    }
    SECTION("scale floor") {
        CHECK(p.scales(0, 0) == Catch::Approx(1e-3 + std::log(2.0)).margin(1e-15));
        // softplus(-40) underflows to 0; the floor keeps the scale positive.
        CHECK(p.scales(1, 0) >= 1e-3);
        CHECK(p.scales(1, 0) == Catch::Approx(1e-3).margin(1e-12));
    }
    SECTION("wrong row count rejected") {
        CHECK_THROWS_AS(constrain_value(Mat::Zero(3 * K + 1, 1), K, 1e-3), ConfigError);
    }
    SECTION("non-finite raw values name the offending batch position") {
        Mat bad = Mat::Zero(3 * K, 4);
        bad(2, 3) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_WITH(constrain_value(bad, K, 1e-3), Catch::Matchers::ContainsSubstring("column 3"));
        CHECK_THROWS_WITH(constrain_value(bad, K, 1e-3, 2),
                          Catch::Matchers::ContainsSubstring("row 1, dimension 2"));
    }
}

TEST_CASE("mixture log density") {
    SECTION("standard normal at zero") {
        Mat raw = raw_column({0.0}, {0.0}, {0.539742417236952});  // softplus^-1(1 - 1e-3)
        MixtureParamsV p = constrain_value(raw, 1, 1e-3);
        REQUIRE(p.scales(0, 0) == Catch::Approx(1.0).margin(1e-12));
        Mat x(1, 1);
        x(0, 0) = 0.0;
        Mat lp = mixture_log_prob_value(p, x);
        CHECK(lp(0, 0) == Catch::Approx(-0.5 * kLogTwoPi).margin(1e-10));
    }
    SECTION("two equal components are symmetric in x") {
        Mat raw = raw_column({0.7, 0.7}, {1.5, -1.5}, {0.3, 0.3});
        MixtureParamsV p = constrain_value(raw, 2, 1e-3);
        auto lp_at = [&](double v) {
            Mat x(1, 1);
            x(0, 0) = v;
            return mixture_log_prob_value(p, x)(0, 0);
        };
        const double s = p.scales(0, 0);
        const double direct =
            std::log(0.5 * (std::exp(log_normal_pdf(0.0, 1.5, s)) + std::exp(log_normal_pdf(0.0, -1.5, s))));
        CHECK(lp_at(0.0) == Catch::Approx(direct).margin(1e-12));
        CHECK(lp_at(0.8) == Catch::Approx(lp_at(-0.8)).margin(1e-12));
    }
    SECTION("finite for extreme x") {
        Mat raw = raw_column({0.0, 1.0}, {0.0, 3.0}, {0.0, 0.5});
        MixtureParamsV p = constrain_value(raw.replicate(1, 3), 2, 1e-3);
        Mat x(1, 3);
        x << -1e4, 0.0, 1e4;
        Mat lp = mixture_log_prob_value(p, x);
        CHECK(lp.allFinite());
    }
    SECTION("tape and value paths agree bitwise") {
        Rng rng(91);
        Mat raw = rand_mat(rng, 9, 7, -2.0, 2.0);
        Mat x = rand_mat(rng, 1, 7, -3.0, 3.0);
        MixtureParamsV pv = constrain_value(raw, 3, 1e-3);
        Tape t;
        MixtureParamsT pt = constrain(t, t.leaf(raw), 3, 1e-3);
        Var lp = mixture_log_prob(t, pt, t.constant(x));
        CHECK(t.val(lp) == mixture_log_prob_value(pv, x));
    }
}

TEST_CASE("mixture sampling") {
    SECTION("single standard component moments") {
        Mat raw = raw_column({0.0}, {0.0}, {0.539742417236952});
        MixtureParamsV p = constrain_value(raw, 1, 1e-3);
        Rng rng(17);
        const int n = 100000;
        Mat s = mixture_sample(p, n, rng);
        REQUIRE(s.rows() == 1);
        REQUIRE(s.cols() == n);
        std::vector<double> v(s.data(), s.data() + n);
        // SE of the mean is sigma/sqrt(n); SE of the variance is ~sigma^2*sqrt(2/n).
        CHECK(std::abs(mean_of(v)) < 3.0 / std::sqrt(double(n)));
        CHECK(std::abs(variance_of(v) - 1.0) < 3.0 * std::sqrt(2.0 / double(n)));
    }
    SECTION("degenerate coefficients select one component") {
        Mat raw = raw_column({200.0, 0.0}, {5.0, -5.0}, {-5.0, -5.0});
        MixtureParamsV p = constrain_value(raw, 2, 1e-3);
        Rng rng(18);
        Mat s = mixture_sample(p, 2000, rng);
        CHECK((s.array() > 0.0).all());
    }
    SECTION("count must be positive") {
        Mat raw = raw_column({0.0}, {0.0}, {0.0});
        MixtureParamsV p = constrain_value(raw, 1, 1e-3);
        Rng rng(19);
        CHECK_THROWS_AS(mixture_sample(p, 0, rng), UsageError);
    }
    SECTION("scoring own samples approximates negative entropy") {
        Mat raw = raw_column({0.3, -0.4, 1.1}, {0.0, 2.0, -1.0}, {0.2, -0.3, 0.6});
        MixtureParamsV p = constrain_value(raw, 3, 1e-3);
        Rng rng(20);
        const int n = 100000;
        Mat s = mixture_sample(p, n, rng);
        MixtureParamsV rep;
        rep.log_coeffs = p.log_coeffs.replicate(1, n);
        rep.locs = p.locs.replicate(1, n);
        rep.scales = p.scales.replicate(1, n);
        Mat lp = mixture_log_prob_value(rep, s);
        std::vector<double> v(lp.data(), lp.data() + n);
        // Reference negative entropy from a big independent sample.
        Rng ref_rng(21);
        Mat s2 = mixture_sample(p, n, ref_rng);
        Mat lp2 = mixture_log_prob_value(rep, s2);
        std::vector<double> v2(lp2.data(), lp2.data() + n);
        const double se = std::sqrt(variance_of(v) / double(n) + variance_of(v2) / double(n));
        CHECK(std::abs(mean_of(v) - mean_of(v2)) < 3.0 * se);
    }
}

TEST_CASE("constrained mixture densities integrate to one") {
    Rng rng(22);
    for (int rep = 0; rep < 20; ++rep) {
        Mat raw = rand_mat(rng, 3 * 5, 1, -3.0, 3.0);
        MixtureParamsV p = constrain_value(raw, 5, 1e-3);
        CHECK(std::abs(quadrature_of_density(p)) < 1e-7);
    }
}

TEST_CASE("uniform proposal") {
    ModelConfig cfg;
    cfg.dim = 2;
    cfg.proposal_kind = "uniform";
    cfg.uniform_bounds = {0.0, 1.0, -2.0, 2.0};
    UniformProposal u = UniformProposal::from_config(cfg);

    SECTION("log density inside and outside the interval") {
        CHECK(u.log_prob(0, 0.3) == 0.0);
        CHECK(u.log_prob(1, 0.3) == Catch::Approx(-std::log(4.0)).margin(1e-15));
        CHECK(u.log_prob(0, 1.5) == kNegInf);
        CHECK(u.log_prob(0, -0.1) == kNegInf);
    }
    SECTION("samples stay in support with the right mean") {
        Rng rng(23);
        const int n = 100000;
        std::vector<double> v(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            v[static_cast<std::size_t>(i)] = u.sample(0, rng);
            REQUIRE(v[static_cast<std::size_t>(i)] >= 0.0);
            REQUIRE(v[static_cast<std::size_t>(i)] <= 1.0);
        }
        // Uniform variance is 1/12; 3 sigma of the mean estimate.
        CHECK(std::abs(mean_of(v) - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / double(n)));
    }
}
