#include "dncb/bessel.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dncb/special.hpp"

namespace dncb {

namespace {

void check_params(const BesselParams& p) {
  if (!(p.v > -1.0)) throw std::domain_error("bessel: requires v > -1");
  if (!(p.a >= 0.0)) throw std::domain_error("bessel: requires a >= 0");
}

// ratio p_{n+1} / p_n = (a/2)^2 / ((n+1)(n+1+v))
inline double pmf_ratio_up(std::int64_t n, double v, double q2) {
  return q2 / ((n + 1.0) * (n + 1.0 + v));
}

// log p_{m+x} - log p_m, x of either sign, by accumulating log ratios.
double log_pmf_ratio_from_mode(std::int64_t m, std::int64_t x, double v, double lq2) {
  double s = 0.0;
  if (x > 0) {
    for (std::int64_t i = 1; i <= x; ++i)
      s += lq2 - std::log(m + static_cast<double>(i)) - std::log(m + i + v);
  } else {
    for (std::int64_t i = 1; i <= -x; ++i)
      s += std::log(m - i + 1.0) + std::log(m - i + 1.0 + v) - lq2;
  }
  return s;
}

std::int64_t sample_table(const BesselParams& p, RngStream& rng) {
  const double q2 = 0.25 * p.a * p.a;
  const std::int64_t m = bessel_mode(p);
  if (m > 2000000)
    throw std::runtime_error("bessel table sampler: mean too large for table method");

  // unnormalized weights from the mode outward; w(mode) = 1
  std::vector<double> right, left;  // right[0] = w(m), left[k] = w(m-1-k)
  right.push_back(1.0);
  double tot = 1.0;
  double w = 1.0;
  for (std::int64_t n = m;; ++n) {
    double r = pmf_ratio_up(n, p.v, q2);
    w *= r;
    if (w < tot * 1e-17) break;
    right.push_back(w);
    tot += w;
    if (static_cast<std::int64_t>(right.size()) > 4000000)
      throw std::runtime_error("bessel table sampler: table cap exceeded");
  }
  w = 1.0;
  for (std::int64_t n = m; n > 0; --n) {
    w /= pmf_ratio_up(n - 1, p.v, q2);
    if (w < tot * 1e-17) break;
    left.push_back(w);
    tot += w;
  }

  double u = rng.u01() * tot;
  // scan outward from the mode, alternating sides (highest mass first)
  for (std::size_t k = 0;; ++k) {
    bool any = false;
    if (k < right.size()) {
      if (u < right[k]) return m + static_cast<std::int64_t>(k);
      u -= right[k];
      any = true;
    }
    if (k < left.size()) {
      if (u < left[k]) return m - 1 - static_cast<std::int64_t>(k);
      u -= left[k];
      any = true;
    }
    if (!any) return m;  // fp leftover lands on the mode
  }
}

// Devroye-style universal rejection for a log-concave PMF anchored at its
// mode, with dominating-curve decay rate `rho` and acceptance threshold
// log W + min(0, head - rho*Y) <= log p_{m+X} - log p_m.
std::int64_t sample_logconcave(const BesselParams& p, double rho, double head,
                               double mix_cut, double uniform_span, RngStream& rng) {
  const std::int64_t m = bessel_mode(p);
  const double lq2 = 2.0 * std::log(0.5 * p.a);
  for (;;) {
    double u = rng.u01();
    double w = rng.u01_pos();
    double sgn = rng.u01() < 0.5 ? -1.0 : 1.0;
    double y;
    if (u <= mix_cut)
      y = rng.u01() * uniform_span;
    else
      y = uniform_span + rng.exponential() / rho;
    std::int64_t x = static_cast<std::int64_t>(sgn * std::llround(y));
    if (m + x < 0) continue;
    double log_accept = std::min(0.0, head - rho * y);
    if (std::log(w) + log_accept <= log_pmf_ratio_from_mode(m, x, p.v, lq2))
      return m + x;
  }
}

}  // namespace

std::int64_t bessel_mode(const BesselParams& p) {
  check_params(p);
  if (p.a == 0.0) return 0;
  const double q2 = 0.25 * p.a * p.a;
  double s = 0.5 * (-p.v + std::sqrt(p.v * p.v + p.a * p.a));
  std::int64_t m = static_cast<std::int64_t>(std::max(0.0, std::floor(s)));
  // settle fp rounding of the sqrt so the bracketing is exact
  while (pmf_ratio_up(m, p.v, q2) > 1.0) ++m;
  while (m > 0 && pmf_ratio_up(m - 1, p.v, q2) < 1.0) --m;
  return m;
}

double bessel_log_pmf(std::int64_t y, const BesselParams& p) {
  check_params(p);
  if (!(p.a > 0.0)) throw std::domain_error("bessel_log_pmf: requires a > 0");
  if (y < 0) return -std::numeric_limits<double>::infinity();
  return (2.0 * y + p.v) * std::log(0.5 * p.a) - std::lgamma(y + 1.0) -
         std::lgamma(y + p.v + 1.0) - log_bessel_i(p.v, p.a);
}

double bessel_mean(const BesselParams& p) {
  check_params(p);
  if (p.a == 0.0) return 0.0;
  return 0.5 * p.a * bessel_quotient(p.v, p.a);
}

double bessel_variance(const BesselParams& p) {
  check_params(p);
  if (p.a == 0.0) return 0.0;
  // from the factorial moment E[Y(Y-1)] = (a/2)^2 I_{v+2}/I_v:
  // Var = mu (1 + (a/2)(R(v+1,a) - R(v,a))), nonpositive correction since R
  // is decreasing in v, hence the underdispersion
  double mu = bessel_mean(p);
  double var = mu * (1.0 + 0.5 * p.a *
                               (bessel_quotient(p.v + 1.0, p.a) - bessel_quotient(p.v, p.a)));
  return var > 0.0 ? var : 0.0;
}

std::int64_t sample_bessel(const BesselParams& p, SamplerMethod method, RngStream& rng,
                           const AutoPolicy& policy) {
  check_params(p);
  if (p.a == 0.0) return 0;

  if (method == SamplerMethod::auto_select) {
    double mu = bessel_mean(p);
    if (mu < policy.table_mean_threshold)
      method = SamplerMethod::table;
    else if (mu > policy.gaussian_mean_threshold)
      method = SamplerMethod::gaussian_approx;
    else
      method = SamplerMethod::quotient_rejection;
  }

  switch (method) {
    case SamplerMethod::table:
      return sample_table(p, rng);
    case SamplerMethod::devroye_rejection: {
      // anchored at the normalized mode probability (Devroye 2002, first scheme)
      double pm = std::exp(bessel_log_pmf(bessel_mode(p), p));
      double wspan = 1.0 + pm / 2.0;
      return sample_logconcave(p, pm, wspan, wspan / (1.0 + wspan), wspan / pm, rng);
    }
    case SamplerMethod::quotient_rejection: {
      // spread bound from quotient-only moments: E[(Y-m)^2] = Var + (mu-m)^2
      double mu = bessel_mean(p);
      double var = bessel_variance(p);
      std::int64_t m = bessel_mode(p);
      double sig = std::sqrt(var + (mu - m) * (mu - m));
      double q = std::min(1.0 / (sig * std::sqrt(648.0)), 1.0 / 3.0);
      double span = 0.5 + 1.0 / q;
      return sample_logconcave(p, q, 1.0 + q / 2.0, (1.0 + 2.0 / q) / (1.0 + 4.0 / q), span,
                               rng);
    }
    case SamplerMethod::gaussian_approx: {
      double mu = bessel_mean(p);
      double sd = std::sqrt(bessel_variance(p));
      double x;
      do {
        x = mu + sd * rng.normal();
      } while (x <= -0.5);
      return std::llround(x);
    }
    default:
      throw std::runtime_error("sample_bessel: unknown method");
  }
}

}  // namespace dncb
