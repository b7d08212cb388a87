#include "dncb/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dncb {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), eng_(splitmix64(seed)) {}

double RngStream::u01() { return static_cast<double>(eng_() >> 11) * 0x1p-53; }

double RngStream::u01_pos() {
  return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1p-53;
}

double RngStream::normal() {
  for (;;) {
    double u = 2.0 * u01() - 1.0;
    double v = 2.0 * u01() - 1.0;
    double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double RngStream::exponential() { return -std::log(u01_pos()); }

double RngStream::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw std::domain_error("RngStream::gamma: shape and rate must be positive");
  double boost = 1.0;
  if (shape < 1.0) {
    boost = std::pow(u01_pos(), 1.0 / shape);
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = u01_pos();
    if (u < 1.0 - 0.0331 * x * x * x * x) {
      double g = boost * d * v / rate;
      return g > 1e-300 ? g : 1e-300;
    }
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      double g = boost * d * v / rate;
      return g > 1e-300 ? g : 1e-300;
    }
  }
}

double RngStream::beta(double a, double b) {
  double x = gamma(a, 1.0);
  double y = gamma(b, 1.0);
  return x / (x + y);
}

std::int64_t RngStream::poisson(double mean) {
  if (!(mean >= 0.0)) throw std::domain_error("RngStream::poisson: mean must be >= 0");
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    // Knuth: count exponential interarrivals via a product of uniforms.
    const double limit = std::exp(-mean);
    double prod = 1.0;
    std::int64_t n = 0;
    for (;;) {
      prod *= u01_pos();
      if (prod <= limit) return n;
      ++n;
    }
  }
  // Hormann's transformed rejection (PTRS).
  const double log_rate = std::log(mean);
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    double u = u01_pos() - 0.5;  // keeps u_shifted strictly positive
    double v = u01_pos();
    double u_shifted = 0.5 - std::fabs(u);
    double k = std::floor((2.0 * a / u_shifted + b) * u + mean + 0.43);
    if (u_shifted >= 0.07 && v <= v_r) return static_cast<std::int64_t>(k);
    if (k < 0.0 || (u_shifted < 0.013 && v > u_shifted)) continue;
    double s = std::log(v * inv_alpha / (a / (u_shifted * u_shifted) + b));
    double t = -mean + k * log_rate - std::lgamma(k + 1.0);
    if (s <= t) return static_cast<std::int64_t>(k);
  }
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
  if (n == 0) throw std::domain_error("RngStream::uniform_below: n must be > 0");
  const std::uint64_t threshold = -n % n;  // 2^64 mod n
  for (;;) {
    std::uint64_t r = eng_();
    if (r >= threshold) return r % n;
  }
}

RngStream RngStream::child(std::uint64_t tag) const {
  return RngStream(splitmix64(seed_ ^ splitmix64(tag + 0x51ed2701ULL)));
}

std::string RngStream::save_state() const {
  std::ostringstream os;
  os << seed_ << ' ' << eng_;
  return os.str();
}

void RngStream::load_state(const std::string& s) {
  std::istringstream is(s);
  is >> seed_ >> eng_;
  if (!is) throw std::runtime_error("RngStream::load_state: malformed state string");
}

}  // namespace dncb
