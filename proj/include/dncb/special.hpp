#pragma once

#include <stdexcept>

namespace dncb {

// Thrown when a series or continued fraction fails to meet tolerance within
// its iteration cap.
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// log I_v(a), the modified Bessel function of the first kind, evaluated in
// log space. Valid for v > -1, a > 0.
double log_bessel_i(double v, double a);

// Bessel quotient R(v, a) = I_{v+1}(a) / I_v(a), in (0, 1). Computed by the
// backward continued fraction of Amos (1974); never evaluates I itself.
double bessel_quotient(double v, double a);

struct KummerArgs {
  double a;
  double b;  // must be > 0
  double c;  // any finite value; negative arguments go through Kummer's transformation
};

// Kummer's confluent hypergeometric function M(a, b, c).
double kummer_m(double a, double b, double c);
inline double kummer_m(const KummerArgs& k) { return kummer_m(k.a, k.b, k.c); }

// q = M(1, 2*b0 + 1, -zeta), in (0, 1]. The weight the symmetric-shape model
// puts on the prior mean 0.5 versus the rate proportion rho.
double q_factor(double b0, double zeta);

// Symmetric-shape moment scenario: shapes eps1 = eps2 = b0, total Poisson
// rate zeta split as (zeta*rho, zeta*(1-rho)).
struct MomentScenario {
  MomentScenario(double b0_, double zeta_, double rho_);
  double b0;
  double zeta;
  double rho;
  double q;  // q_factor(b0, zeta)
};

// Closed-form E[beta] for a MomentScenario:
//   0.5*M(1, 2b0+1, -zeta) + rho*zeta/(2b0+1)*M(1, 2b0+2, -zeta),
// equivalently 0.5*q + rho*(1-q).
double expected_beta(const MomentScenario& s);

// Log density of the doubly non-central beta distribution, evaluated as a
// log-sum-exp over the Poisson(lam1) x Poisson(lam2) mixture of
// Beta(eps1 + y1, eps2 + y2) densities. The mixture is truncated once the
// remaining joint Poisson tail mass is below 1e-12.
double dncb_log_pdf(double beta, double eps1, double eps2, double lam1, double lam2);

}  // namespace dncb
