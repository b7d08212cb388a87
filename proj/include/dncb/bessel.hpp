#pragma once

#include <cstdint>
#include <limits>

#include "dncb/rng.hpp"

namespace dncb {

// Parameters of the Bessel distribution Bes(v, a):
//   P(Y = y) = (a/2)^(2y+v) / (I_v(a) y! Gamma(y+v+1)),  y = 0, 1, 2, ...
// a = 0 is the degenerate point mass at 0 (the zero-rate limit of the
// Poisson-gamma posterior this distribution arises from).
struct BesselParams {
  double v;  // > -1
  double a;  // >= 0
};

enum class SamplerMethod {
  devroye_rejection,   // log-concave rejection anchored at the normalized mode probability
  quotient_rejection,  // log-concave rejection sized by moments from the Bessel quotient only
  gaussian_approx,     // rounded normal; approximate, excluded from exactness guarantees
  table,               // PMF recurrence from the mode, inversion on the accumulated table
  auto_select,
};

// auto_select dispatch thresholds. The defaults use the table sampler for
// small means and quotient rejection otherwise; the Gaussian approximation
// participates only when a finite threshold is set explicitly.
struct AutoPolicy {
  double table_mean_threshold = 50.0;
  double gaussian_mean_threshold = std::numeric_limits<double>::infinity();
};

// log P(Y = y); requires a > 0 (the a = 0 point mass has no finite log PMF
// support beyond y = 0 and is handled by callers).
double bessel_log_pmf(std::int64_t y, const BesselParams& p);

// Mode of the PMF (pmf(mode) >= pmf(mode +- 1)).
std::int64_t bessel_mode(const BesselParams& p);

// E[Y] = a R(v, a) / 2; 0 when a = 0.
double bessel_mean(const BesselParams& p);

// Var[Y] = mu (1 + mu (R(v+1,a) - R(v,a))); always <= mean (underdispersion).
double bessel_variance(const BesselParams& p);

// One draw from Bes(v, a). All methods except gaussian_approx are exact.
// Throws std::runtime_error if an explicitly requested method is unavailable
// for the given parameters (auto_select never throws).
std::int64_t sample_bessel(const BesselParams& p, SamplerMethod method, RngStream& rng,
                           const AutoPolicy& policy = AutoPolicy{});

}  // namespace dncb
