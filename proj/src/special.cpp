#include "dncb/special.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace dncb {

namespace {

constexpr double kLogTermCutoff = -45.0;  // exp(-45) ~ 3e-20 relative

// log sum of the series Sum_n exp(t(n)), where t peaks at n0 and decays on
// both sides. Terms are accumulated relative to t(n0); log-ratio increments
// are supplied by the caller.
template <typename LogRatioRight, typename LogRatioLeft>
double log_sum_peaked(std::int64_t n0, double t0, LogRatioRight lr_right,
                      LogRatioLeft lr_left, std::int64_t cap, const char* what) {
  // compensated summation keeps the accumulation error at ~1 ulp
  double sum = 1.0, comp = 0.0;
  auto add = [&](double x) {
    double y = x - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  };
  double lt = 0.0;
  for (std::int64_t n = n0;; ++n) {
    lt += lr_right(n);  // log t(n+1) - log t(n)
    if (lt < kLogTermCutoff) break;
    add(std::exp(lt));
    if (n - n0 > cap)
      throw ConvergenceError(std::string(what) + ": series did not converge within cap");
  }
  lt = 0.0;
  for (std::int64_t n = n0; n > 0; --n) {
    lt -= lr_left(n - 1);  // log t(n-1) - log t(n) = -(log t(n) - log t(n-1))
    if (lt < kLogTermCutoff) break;
    add(std::exp(lt));
  }
  return t0 + std::log(sum);
}

// Ascending series for log I_v(a), expanded around the largest term.
double log_bessel_i_series(double v, double a) {
  const double lq = std::log(0.5 * a);
  // largest n with term ratio >= 1: (n+1)(n+1+v) <= (a/2)^2
  double s = 0.5 * (-v + std::sqrt(v * v + a * a));
  std::int64_t n0 = static_cast<std::int64_t>(std::max(0.0, std::floor(s - 1.0)));
  double t0 = (2.0 * n0 + v) * lq - std::lgamma(n0 + 1.0) - std::lgamma(n0 + v + 1.0);
  auto right = [&](std::int64_t n) {
    return 2.0 * lq - std::log(n + 1.0) - std::log(n + 1.0 + v);
  };
  return log_sum_peaked(n0, t0, right, right, 4000000, "log_bessel_i");
}

// Hankel's large-argument expansion; requires a >> v^2.
double log_bessel_i_asymptotic(double v, double a) {
  const double mu = 4.0 * v * v;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 40; ++k) {
    double odd = 2.0 * k - 1.0;
    double next = term * -(mu - odd * odd) / (8.0 * a * k);
    if (std::fabs(next) >= std::fabs(term)) break;  // divergence onset
    term = next;
    sum += term;
    if (std::fabs(term) < 1e-17 * std::fabs(sum)) break;
  }
  return a - 0.5 * std::log(2.0 * M_PI * a) + std::log(sum);
}

// Positive-term Kummer series in log space: log M(alpha, beta, x) for
// alpha > 0, beta > 0, x >= 0.
double log_kummer_series(double alpha, double beta, double x, const char* what) {
  if (x == 0.0) return 0.0;
  const double lx = std::log(x);
  // peak of t(n): (alpha+n) x = (beta+n)(n+1)
  double bq = beta + 1.0 - x;
  double disc = bq * bq - 4.0 * (beta - x * alpha);
  double s = disc > 0.0 ? 0.5 * (-bq + std::sqrt(disc)) : 0.0;
  std::int64_t n0 = static_cast<std::int64_t>(std::max(0.0, std::floor(s)));
  double t0 = std::lgamma(alpha + n0) - std::lgamma(alpha) - std::lgamma(beta + n0) +
              std::lgamma(beta) + n0 * lx - std::lgamma(n0 + 1.0);
  auto right = [&](std::int64_t n) {
    return std::log(alpha + n) - std::log(beta + n) + lx - std::log(n + 1.0);
  };
  return log_sum_peaked(n0, t0, right, right, 100000, what);
}

// log(n!) with absolute error ~1e-15 even for large n (Stirling tail), used
// where the plain lgamma's ~ulp-of-value absolute error would dominate.
double stirling_tail(double n) {
  double n2 = n * n;
  return (1.0 / 12.0 - (1.0 / 360.0 - 1.0 / (1260.0 * n2)) / n2) / n;
}

// log( M(1, b, -z) ) for b > 1, z >= 0, through Kummer's transformation
// e^{-z} M(b-1, b, z). The Pochhammer ratio telescopes, (b-1)_n/(b)_n =
// (b-1)/(b-1+n), and the e^{-z} prefactor is fused into the series anchor so
// every intermediate stays O(1): n0 log z - z - log(n0!) is evaluated as
// n0 log1p((z-n0)/n0) + (n0-z) - 0.5 log(2 pi n0) - tail.
double log_kummer_m1_neg(double b, double z) {
  if (z == 0.0) return 0.0;
  const double alpha = b - 1.0;
  const double lz = std::log(z);
  std::int64_t n0 = static_cast<std::int64_t>(std::max(0.0, std::floor(z - 1.0)));
  double anchor;
  if (n0 == 0) {
    anchor = -z;
  } else if (n0 < 30) {
    anchor = n0 * lz - z - std::lgamma(n0 + 1.0);
  } else {
    double dn = static_cast<double>(n0);
    anchor = dn * std::log1p((z - dn) / dn) + (dn - z) - 0.5 * std::log(2.0 * M_PI * dn) -
             stirling_tail(dn);
  }
  double t0 = std::log(alpha / (alpha + n0)) + anchor;
  auto right = [&](std::int64_t n) {
    return lz + std::log(alpha + n) - std::log(alpha + n + 1.0) - std::log(n + 1.0);
  };
  return log_sum_peaked(n0, t0, right, right, 100000, "kummer_m");
}

// Direct summation, usable for any sign pattern; plain doubles.
double kummer_series_direct(double a, double b, double c) {
  double term = 1.0, sum = 1.0;
  for (int n = 0; n < 100000; ++n) {
    term *= (a + n) * c / ((b + n) * (n + 1.0));
    sum += term;
    if (std::fabs(term) < 1e-15 * std::fabs(sum) &&
        std::fabs((a + n + 1) * c / ((b + n + 1) * (n + 2.0))) < 1.0)
      return sum;
  }
  throw ConvergenceError("kummer_m: series did not converge within cap");
}

}  // namespace

double log_bessel_i(double v, double a) {
  if (!(v > -1.0)) throw std::domain_error("log_bessel_i: requires v > -1");
  if (!(a > 0.0)) throw std::domain_error("log_bessel_i: requires a > 0");
  if (a >= 700.0 && 4.0 * v * v < 0.1 * a) return log_bessel_i_asymptotic(v, a);
  return log_bessel_i_series(v, a);
}

double bessel_quotient(double v, double a) {
  if (!(v > -1.0)) throw std::domain_error("bessel_quotient: requires v > -1");
  if (!(a > 0.0)) throw std::domain_error("bessel_quotient: requires a > 0");
  // R = 1/(c1 + 1/(c2 + 1/(c3 + ...))), c_n = 2(v+n)/a; modified Lentz.
  const double tiny = 1e-300;
  double f = tiny, C = tiny, D = 0.0;
  const std::int64_t cap = 10000000;
  for (std::int64_t n = 1; n <= cap; ++n) {
    double bn = 2.0 * (v + n) / a;
    D = bn + D;
    if (D == 0.0) D = tiny;
    C = bn + 1.0 / C;
    if (C == 0.0) C = tiny;
    D = 1.0 / D;
    double delta = C * D;
    f *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) {
      // clamp fp wobble at the open endpoints
      if (f <= 0.0) return std::numeric_limits<double>::min();
      return f < 1.0 ? f : std::nextafter(1.0, 0.0);
    }
  }
  throw ConvergenceError("bessel_quotient: continued fraction did not converge");
}

double kummer_m(double a, double b, double c) {
  if (!(b > 0.0)) throw std::domain_error("kummer_m: requires b > 0");
  if (!std::isfinite(a) || !std::isfinite(c))
    throw std::domain_error("kummer_m: arguments must be finite");
  if (c == 0.0 || a == 0.0) return 1.0;  // only the n = 0 term survives
  if (c < 0.0) {
    // M(a,b,c) = e^c M(b-a, b, -c); the transformed series has positive terms
    // whenever b > a, which keeps large |c| stable in log space.
    if (a == 1.0 && b > 1.0) return std::exp(log_kummer_m1_neg(b, -c));
    if (b - a > 0.0) return std::exp(c + log_kummer_series(b - a, b, -c, "kummer_m"));
    return kummer_series_direct(a, b, c);
  }
  if (a > 0.0) return std::exp(log_kummer_series(a, b, c, "kummer_m"));
  return kummer_series_direct(a, b, c);
}

double q_factor(double b0, double zeta) {
  if (!(b0 > 0.0)) throw std::domain_error("q_factor: requires b0 > 0");
  if (!(zeta >= 0.0)) throw std::domain_error("q_factor: requires zeta >= 0");
  if (zeta == 0.0) return 1.0;
  double q = std::exp(log_kummer_m1_neg(2.0 * b0 + 1.0, zeta));
  return std::min(q, 1.0);
}

MomentScenario::MomentScenario(double b0_, double zeta_, double rho_)
    : b0(b0_), zeta(zeta_), rho(rho_), q(q_factor(b0_, zeta_)) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::domain_error("MomentScenario: requires rho in (0,1)");
}

double expected_beta(const MomentScenario& s) {
  double first = 0.5 * kummer_m(1.0, 2.0 * s.b0 + 1.0, -s.zeta);
  double second =
      s.rho * s.zeta / (2.0 * s.b0 + 1.0) * kummer_m(1.0, 2.0 * s.b0 + 2.0, -s.zeta);
  return first + second;
}

double dncb_log_pdf(double beta, double eps1, double eps2, double lam1, double lam2) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::domain_error("dncb_log_pdf: requires beta in (0,1)");
  if (!(eps1 > 0.0) || !(eps2 > 0.0))
    throw std::domain_error("dncb_log_pdf: requires eps1, eps2 > 0");
  if (!(lam1 >= 0.0) || !(lam2 >= 0.0))
    throw std::domain_error("dncb_log_pdf: requires lam1, lam2 >= 0");

  // truncation point: Poisson tail mass below 5e-13 on each axis, so the
  // discarded joint mass is below 1e-12
  auto poisson_cut = [](double lam) -> std::int64_t {
    if (lam == 0.0) return 0;
    if (lam > 30.0) {
      // P(Y > lam + k sqrt(lam)) < exp(-k^2/2) for k well below sqrt(lam);
      // k = 10 leaves ~1e-22, far under the budget, with no exp underflow
      return static_cast<std::int64_t>(std::ceil(lam + 10.0 * std::sqrt(lam) + 20.0));
    }
    double p = std::exp(-lam), cum = p;
    std::int64_t n = 0;
    while (cum < 1.0 - 5e-13) {
      ++n;
      p *= lam / n;
      cum += p;
      if (n > 2000) throw ConvergenceError("dncb_log_pdf: Poisson truncation cap exceeded");
    }
    return n;
  };
  const std::int64_t n1 = poisson_cut(lam1);
  const std::int64_t n2 = poisson_cut(lam2);
  if ((n1 + 1) * (n2 + 1) > 1000000)
    throw ConvergenceError("dncb_log_pdf: mixture term cap exceeded");

  const double lb = std::log(beta);
  const double l1mb = std::log1p(-beta);
  const double llam1 = lam1 > 0.0 ? std::log(lam1) : 0.0;
  const double llam2 = lam2 > 0.0 ? std::log(lam2) : 0.0;

  // running log-sum-exp
  double m = -std::numeric_limits<double>::infinity(), acc = 0.0;
  auto add = [&](double t) {
    if (t == -std::numeric_limits<double>::infinity()) return;
    if (t <= m) {
      acc += std::exp(t - m);
    } else {
      acc = acc * std::exp(m - t) + 1.0;
      m = t;
    }
  };

  // log Beta(beta; e1, e2) corner, then ratio recurrences along each axis
  double corner_logB = std::lgamma(eps1) + std::lgamma(eps2) - std::lgamma(eps1 + eps2);
  double lp1 = -lam1;  // log Poisson(y1; lam1)
  double row_logB = corner_logB;
  for (std::int64_t y1 = 0; y1 <= n1; ++y1) {
    double p1 = eps1 + y1, p2 = eps2;
    double logB = row_logB;
    double lp2 = -lam2;
    for (std::int64_t y2 = 0; y2 <= n2; ++y2) {
      add(lp1 + lp2 + (p1 - 1.0) * lb + (p2 + y2 - 1.0) * l1mb - logB);
      // advance along y2: B(p1, p2+1) = B(p1, p2) * p2 / (p1 + p2)
      logB += std::log(p2 + y2) - std::log(p1 + p2 + y2);
      lp2 += llam2 - std::log(y2 + 1.0);
    }
    // advance along y1: B(p1+1, p2) = B(p1, p2) * p1 / (p1 + p2)
    row_logB += std::log(p1) - std::log(p1 + p2);
    lp1 += llam1 - std::log(y1 + 1.0);
  }
  return m + std::log(acc);
}

}  // namespace dncb
