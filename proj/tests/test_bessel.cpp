#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dncb/bessel.hpp"
#include "dncb/special.hpp"
#include "support/oracles.hpp"
#include "support/stats.hpp"

using namespace dncb;

namespace {
std::vector<std::int64_t> draw_many(const BesselParams& p, SamplerMethod m, int n,
                                    std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<std::int64_t> out(n);
  for (int i = 0; i < n; ++i) out[i] = sample_bessel(p, m, rng);
  return out;
}
}  // namespace

TEST_CASE("bessel_log_pmf normalizes") {
  BesselParams p{0.5, 2.0};
  double sum = 0.0;
  for (std::int64_t y = 0;; ++y) {
    double m = std::exp(bessel_log_pmf(y, p));
    sum += m;
    if (y > 3 && m < 1e-14) break;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("bessel_log_pmf at zero matches the direct formula") {
  // pmf(0) = (a/2)^v / (Gamma(v+1) I_v(a)), with I from the series oracle
  BesselParams p{0.5, 1.0};
  double expect = std::pow(0.5, 0.5) /
                  (std::tgamma(1.5) * oracle::bessel_i_series_plain(0.5, 1.0));
  CHECK(std::exp(bessel_log_pmf(0, p)) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("bessel_log_pmf ratio recurrence") {
  BesselParams p{1.7, 6.0};
  for (std::int64_t y = 0; y < 30; ++y) {
    double ratio = std::exp(bessel_log_pmf(y + 1, p) - bessel_log_pmf(y, p));
    double expect = (0.25 * p.a * p.a) / ((y + 1.0) * (y + 1.0 + p.v));
    CHECK(ratio == doctest::Approx(expect).epsilon(1e-11));
  }
}

TEST_CASE("bessel_log_pmf domain") {
  CHECK_THROWS_AS(bessel_log_pmf(0, {0.5, 0.0}), std::domain_error);
  CHECK_THROWS_AS(bessel_log_pmf(0, {-1.5, 1.0}), std::domain_error);
}

TEST_CASE("bessel_mean") {
  CHECK(bessel_mean({1.0, 0.0}) == 0.0);
  double expect = 0.5 * (std::cosh(1.0) - std::sinh(1.0)) / std::sinh(1.0);
  CHECK(bessel_mean({0.5, 1.0}) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(bessel_mean({0.5, 1.0}) == doctest::Approx(0.156518).epsilon(1e-5));

  auto draws = draw_many({2.0, 10.0}, SamplerMethod::table, 1000000, 77);
  double acc = 0.0, acc2 = 0.0;
  for (auto d : draws) {
    acc += static_cast<double>(d);
    acc2 += static_cast<double>(d) * d;
  }
  double m = acc / draws.size();
  double se = std::sqrt((acc2 / draws.size() - m * m) / draws.size());
  CHECK(std::fabs(m - bessel_mean({2.0, 10.0})) < 4.0 * se);
}

TEST_CASE("bessel_variance") {
  CHECK(bessel_variance({1.0, 0.0}) == 0.0);
  for (double v : {-0.5, 0.0, 2.0, 10.0})
    for (double a : {0.1, 1.0, 10.0, 100.0}) {
      BesselParams p{v, a};
      CHECK(bessel_variance(p) >= 0.0);
      CHECK(bessel_variance(p) <= bessel_mean(p) * (1.0 + 1e-12));
    }
  auto draws = draw_many({1.0, 4.0}, SamplerMethod::table, 1000000, 31);
  double acc = 0.0, acc2 = 0.0;
  for (auto d : draws) {
    acc += static_cast<double>(d);
    acc2 += static_cast<double>(d) * d;
  }
  double m = acc / draws.size();
  double var = acc2 / draws.size() - m * m;
  // SE of a sample variance ~ var * sqrt(2/(n-1)) for light tails
  CHECK(std::fabs(var - bessel_variance({1.0, 4.0})) <
        6.0 * var * std::sqrt(2.0 / (draws.size() - 1.0)));
}

TEST_CASE("sample_bessel degenerate point mass") {
  RngStream rng(5);
  for (auto m : {SamplerMethod::table, SamplerMethod::devroye_rejection,
                 SamplerMethod::quotient_rejection, SamplerMethod::gaussian_approx,
                 SamplerMethod::auto_select})
    for (int i = 0; i < 50; ++i) CHECK(sample_bessel({1.0, 0.0}, m, rng) == 0);
}

TEST_CASE("sample_bessel matches the analytic mean in the conjugate case") {
  // the v = 0 case that arises when eps = 1, c = gamma = lambda = 1
  BesselParams p{0.0, 2.0};
  auto draws = draw_many(p, SamplerMethod::auto_select, 1000000, 2024);
  double acc = 0.0, acc2 = 0.0;
  for (auto d : draws) {
    acc += static_cast<double>(d);
    acc2 += static_cast<double>(d) * d;
  }
  double m = acc / draws.size();
  double se = std::sqrt((acc2 / draws.size() - m * m) / draws.size());
  CHECK(std::fabs(m - bessel_mean(p)) < 4.0 * se);
}

TEST_CASE("rejection samplers agree with the table sampler") {
  BesselParams p{0.5, 8.0};
  auto table = draw_many(p, SamplerMethod::table, 100000, 1);
  auto devroye = draw_many(p, SamplerMethod::devroye_rejection, 100000, 2);
  auto quotient = draw_many(p, SamplerMethod::quotient_rejection, 100000, 3);
  CHECK(teststat::chi2_two_sample_pvalue(table, devroye) > 0.001);
  CHECK(teststat::chi2_two_sample_pvalue(table, quotient) > 0.001);
}

TEST_CASE("exact samplers fit the normalized PMF on a small grid") {
  for (double v : {-0.5, 2.0})
    for (double a : {1.0, 10.0}) {
      BesselParams p{v, a};
      auto pmf = [&](std::int64_t y) { return std::exp(bessel_log_pmf(y, p)); };
      int which = 0;
      for (auto m : {SamplerMethod::table, SamplerMethod::devroye_rejection,
                     SamplerMethod::quotient_rejection}) {
        auto draws = draw_many(p, m, 40000, 400 + ++which);
        CHECK(teststat::chi2_gof_pvalue(draws, pmf) > 0.001);
      }
    }
}

TEST_CASE("gaussian approximation lands near the true mean") {
  BesselParams p{0.0, 200.0};  // mean ~ 99.5, where the approximation is sane
  auto draws = draw_many(p, SamplerMethod::gaussian_approx, 100000, 17);
  double acc = 0.0;
  for (auto d : draws) acc += static_cast<double>(d);
  double m = acc / draws.size();
  double se = std::sqrt(bessel_variance(p) / draws.size());
  CHECK(std::fabs(m - bessel_mean(p)) < 6.0 * se);
}

TEST_CASE("sampling is deterministic under a fixed seed") {
  for (auto m : {SamplerMethod::table, SamplerMethod::devroye_rejection,
                 SamplerMethod::quotient_rejection, SamplerMethod::auto_select}) {
    auto a = draw_many({0.7, 5.0}, m, 200, 42);
    auto b = draw_many({0.7, 5.0}, m, 200, 42);
    CHECK(a == b);
  }
}

TEST_CASE("mode bracketing") {
  for (double v : {-0.9, -0.5, 0.0, 0.5, 2.0, 10.0})
    for (double a : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
      BesselParams p{v, a};
      std::int64_t m = bessel_mode(p);
      double pm = bessel_log_pmf(m, p);
      CHECK(pm >= bessel_log_pmf(m + 1, p));
      if (m > 0) CHECK(pm >= bessel_log_pmf(m - 1, p));
    }
}

TEST_CASE("auto dispatch stays exact across regimes") {
  // spot check a large-mean point that routes to quotient rejection
  BesselParams p{0.5, 300.0};
  auto draws = draw_many(p, SamplerMethod::auto_select, 100000, 7);
  double acc = 0.0, acc2 = 0.0;
  for (auto d : draws) {
    acc += static_cast<double>(d);
    acc2 += static_cast<double>(d) * d;
  }
  double m = acc / draws.size();
  double se = std::sqrt((acc2 / draws.size() - m * m) / draws.size());
  CHECK(std::fabs(m - bessel_mean(p)) < 4.0 * se);
}

TEST_CASE("parameter validation") {
  RngStream rng(1);
  CHECK_THROWS_AS(sample_bessel({-1.0, 1.0}, SamplerMethod::table, rng), std::domain_error);
  CHECK_THROWS_AS(sample_bessel({0.5, -1.0}, SamplerMethod::table, rng), std::domain_error);
  CHECK_THROWS_AS(bessel_mean({-2.0, 1.0}), std::domain_error);
}

TEST_CASE("explicit table method is unavailable at huge means, auto is not") {
  RngStream rng(2);
  BesselParams huge{0.0, 6.0e6};  // mean ~ 3e6, beyond the table cap
  CHECK_THROWS_AS(sample_bessel(huge, SamplerMethod::table, rng), std::runtime_error);
  CHECK(sample_bessel(huge, SamplerMethod::auto_select, rng) >= 0);
}

TEST_CASE("auto policy can route large means to the gaussian approximation") {
  BesselParams p{0.0, 250.0};
  AutoPolicy policy;
  policy.table_mean_threshold = 10.0;
  policy.gaussian_mean_threshold = 100.0;  // mean ~ 124 exceeds it
  RngStream rng(3);
  const int n = 20000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += static_cast<double>(sample_bessel(p, SamplerMethod::auto_select, rng, policy));
  double se = std::sqrt(bessel_variance(p) / n);
  CHECK(std::fabs(acc / n - bessel_mean(p)) < 6.0 * se);
}
