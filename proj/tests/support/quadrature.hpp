#pragma once

// Tanh-sinh quadrature over the unit interval for log-scale integrands,
// used as the independent normalization oracle. Handles integrable endpoint
// singularities (beta-type b^(e-1) factors). Test-only code.

#include <cmath>
#include <functional>
#include <limits>

namespace testquad {

// Integral over (0, 1/2] of exp(log_f(y)) dy. The substitution
// y = 0.5*sigma(pi*sinh t) packs nodes double-exponentially into the
// singular endpoint at 0.
inline double integrate_half_logf(const std::function<double(double)>& log_f,
                                  int max_level = 10, double tol = 1e-10) {
  const double t_max = 4.0;
  auto node = [&](double t, double& y, double& log_w) {
    double u = M_PI * std::sinh(t);
    // y = 0.5 * sigmoid(u), log-stable on both sides
    double log_sig, log_one_minus_sig;
    if (u >= 0) {
      log_sig = -std::log1p(std::exp(-u));
      log_one_minus_sig = -u + log_sig;
    } else {
      log_one_minus_sig = -std::log1p(std::exp(u));
      log_sig = u + log_one_minus_sig;
    }
    y = 0.5 * std::exp(log_sig);
    log_w = std::log(0.5 * M_PI * std::cosh(t)) + log_sig + log_one_minus_sig;
  };
  auto eval = [&](double t) {
    double y, log_w;
    node(t, y, log_w);
    if (!(y > 0.0) || !(y < 0.5 + 1e-12)) return 0.0;
    if (y >= 0.5) y = 0.5;
    double lf = log_f(y);
    double v = lf + log_w;
    return v < -700.0 ? 0.0 : std::exp(v);
  };

  double h = 1.0;
  double sum = eval(0.0);
  for (int k = 1; k * h <= t_max; ++k) sum += eval(k * h) + eval(-k * h);
  double integral = h * sum;
  for (int level = 1; level <= max_level; ++level) {
    h *= 0.5;
    double add = 0.0;
    for (double t = h; t <= t_max; t += 2.0 * h) add += eval(t) + eval(-t);
    double next = 0.5 * integral + h * add;
    if (level >= 4 && std::fabs(next - integral) < tol * std::fabs(next) + 1e-14) {
      return next;
    }
    integral = next;
  }
  return integral;
}

// Integral over (0,1) of exp(log_f(y)) dy, split at 1/2 so both halves have
// the singular endpoint at 0 (the caller supplies the reflected integrand).
inline double integrate_unit_logf(const std::function<double(double)>& log_f_lower,
                                  const std::function<double(double)>& log_f_upper_reflected) {
  return integrate_half_logf(log_f_lower) + integrate_half_logf(log_f_upper_reflected);
}

}  // namespace testquad
