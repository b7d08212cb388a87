#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dncb/model.hpp"
#include "dncb/special.hpp"
#include "support/stats.hpp"

using namespace dncb;

namespace {
Mat constant(std::size_t r, std::size_t c, double v) { return Mat(r, c, v); }

Mat random_positive(std::size_t r, std::size_t c, RngStream& rng) {
  Mat m(r, c);
  for (auto& x : m.data()) x = rng.gamma(2.0, 1.0);
  return m;
}
}  // namespace

TEST_CASE("compose_rates_mf rank-1 product") {
  MfFactors f{constant(3, 1, 2.0), constant(3, 1, 5.0), constant(1, 4, 3.0)};
  auto [l1, l2] = compose_rates_mf(f);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(l1(i, j) == 6.0);
      CHECK(l2(i, j) == 15.0);
    }
}

TEST_CASE("compose_rates_mf constant factors give a constant matrix") {
  MfFactors f{constant(2, 3, 1.5), constant(2, 3, 1.5), constant(3, 5, 0.7)};
  auto [l1, l2] = compose_rates_mf(f);
  for (auto v : l1.data()) CHECK(v == doctest::Approx(3.0 * 1.5 * 0.7));
  CHECK(l1.data() == l2.data());
}

TEST_CASE("compose_rates_mf equals the brute-force triple loop") {
  RngStream rng(11);
  MfFactors f{random_positive(3, 2, rng), random_positive(3, 2, rng),
              random_positive(2, 4, rng)};
  auto [l1, l2] = compose_rates_mf(f);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t k = 0; k < 2; ++k) {
        s1 += f.theta1(i, k) * f.phi(k, j);
        s2 += f.theta2(i, k) * f.phi(k, j);
      }
      CHECK(l1(i, j) == doctest::Approx(s1).epsilon(1e-14));
      CHECK(l2(i, j) == doctest::Approx(s2).epsilon(1e-14));
    }
}

TEST_CASE("compose_rates_mf rejects mismatched shapes") {
  MfFactors bad{constant(3, 2, 1.0), constant(3, 2, 1.0), constant(3, 4, 1.0)};
  CHECK_THROWS_AS(compose_rates_mf(bad), std::invalid_argument);
}

TEST_CASE("compose_rates_td trivial core reduces to rank-1") {
  TdFactors f{constant(3, 1, 2.0), constant(1, 4, 3.0), constant(1, 1, 1.0),
              constant(1, 1, 1.0)};
  auto [l1, l2] = compose_rates_td(f);
  for (auto v : l1.data()) CHECK(v == doctest::Approx(6.0));
  CHECK(l1.data() == l2.data());
}

TEST_CASE("compose_rates_td with identity core equals matrix factorization") {
  RngStream rng(7);
  const std::size_t I = 3, K = 3, J = 5;
  Mat theta = random_positive(I, K, rng);
  Mat phi = random_positive(K, J, rng);
  Mat eye(K, K, 0.0);
  for (std::size_t k = 0; k < K; ++k) eye(k, k) = 1.0;
  TdFactors td{theta, phi, eye, eye};
  MfFactors mf{theta, theta, phi};
  auto [t1, t2] = compose_rates_td(td);
  auto [m1, m2] = compose_rates_mf(mf);
  for (std::size_t t = 0; t < t1.size(); ++t) {
    CHECK(t1.data()[t] == doctest::Approx(m1.data()[t]).epsilon(1e-13));
    CHECK(t2.data()[t] == doctest::Approx(m2.data()[t]).epsilon(1e-13));
  }
}

TEST_CASE("compose_rates_td equals the brute-force quadruple loop") {
  RngStream rng(13);
  const std::size_t I = 3, C = 2, K = 4, J = 5;
  TdFactors f{random_positive(I, C, rng), random_positive(K, J, rng),
              random_positive(C, K, rng), random_positive(C, K, rng)};
  auto [l1, l2] = compose_rates_td(f);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < K; ++k) {
          s1 += f.theta(i, c) * f.pi1(c, k) * f.phi(k, j);
          s2 += f.theta(i, c) * f.pi2(c, k) * f.phi(k, j);
        }
      CHECK(l1(i, j) == doctest::Approx(s1).epsilon(1e-13));
      CHECK(l2(i, j) == doctest::Approx(s2).epsilon(1e-13));
    }
}

TEST_CASE("simulate_mf output lands strictly inside the unit interval") {
  RngStream rng(3);
  Hyperparams h;
  auto sim = simulate_mf(h, DncbParams::make(2.0, 2.0, 12), 8, 3, 12, rng);
  for (auto v : sim.data.values.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  // subcount sums reproduce the counts
  std::int64_t total_sub = 0, total_y = 0;
  for (const auto& e : sim.state.sub1.entries)
    for (auto c : e.counts) total_sub += c;
  for (auto y : sim.state.y1.data()) total_y += y;
  CHECK(total_sub == total_y);
}

TEST_CASE("zero-rate hook yields standard beta marginals") {
  RngStream rng(21);
  const std::size_t n = 100000;
  Mat zero(1, n, 0.0);
  AugmentedState st;
  BoundedMatrix out;
  simulate_given_rates(zero, zero, DncbParams::make(2.0, 3.0, n), st, out, rng);
  for (auto y : st.y1.data()) CHECK(y == 0);
  std::vector<double> xs(out.values.data().begin(), out.values.data().end());
  double d = teststat::ks_stat(xs, [](double x) { return teststat::beta_cdf(x, 2.0, 3.0); });
  CHECK(d < teststat::kKsCrit001);
}

TEST_CASE("simulate matches the closed-form expectation of beta") {
  // symmetric shapes b0, rates zeta*rho and zeta*(1-rho)
  const double b0 = 1.0, zeta = 6.0, rho = 0.7;
  RngStream rng(17);
  const std::size_t n = 400000;
  Mat l1(1, n, zeta * rho), l2(1, n, zeta * (1.0 - rho));
  AugmentedState st;
  BoundedMatrix out;
  simulate_given_rates(l1, l2, DncbParams::make(b0, b0, n), st, out, rng);
  double acc = 0.0, acc2 = 0.0;
  for (auto v : out.values.data()) {
    acc += v;
    acc2 += v * v;
  }
  double mean = acc / n;
  double se = std::sqrt((acc2 / n - mean * mean) / n);
  CHECK(std::fabs(mean - expected_beta({b0, zeta, rho})) < 3.0 * se);
}

TEST_CASE("simulate_td output and invariants") {
  RngStream rng(5);
  Hyperparams h;
  auto sim = simulate_td(h, DncbParams::make(1.5, 1.5, 9), 6, 2, 3, 9, rng);
  for (auto v : sim.data.values.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  for (const auto& e : sim.state.sub2.entries) {
    std::int64_t s = 0;
    for (auto c : e.counts) s += c;
    CHECK(s == sim.state.y2(e.i, e.j));
  }
}

TEST_CASE("simulate is deterministic under a fixed seed") {
  Hyperparams h;
  RngStream a(99), b(99);
  auto sa = simulate_td(h, DncbParams::make(2.0, 2.0, 7), 4, 2, 3, 7, a);
  auto sb = simulate_td(h, DncbParams::make(2.0, 2.0, 7), 4, 2, 3, 7, b);
  CHECK(sa.data.values == sb.data.values);
  CHECK(sa.factors.theta == sb.factors.theta);
}

TEST_CASE("gamma clamp keeps the open support") {
  CHECK(clamp_beta(0.0) == kBetaClamp);
  CHECK(clamp_beta(1.0) == 1.0 - kBetaClamp);
  CHECK(clamp_beta(0.5) == 0.5);
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(DncbParams::make(0.0, 1.0, 3), std::domain_error);
  CHECK_THROWS_AS(DncbParams::make(1.0, 1.0, 3, -1.0), std::domain_error);
  Hyperparams h;
  h.nu2 = 0.0;
  CHECK_THROWS_AS(h.validate(), std::domain_error);
}
