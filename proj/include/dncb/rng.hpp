#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace dncb {

// Counter-mixing function used to derive independent substream seeds.
std::uint64_t splitmix64(std::uint64_t x);

// Random stream with the distribution kit the samplers need. All draws are
// pure functions of the engine state, so a stream serializes exactly and a
// restored stream continues the identical sequence. Distributions are
// hand-rolled rather than taken from <random> so that sequences do not depend
// on the standard library implementation.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  // Uniform on [0,1) and on (0,1).
  double u01();
  double u01_pos();

  // Standard normal via the Marsaglia polar method.
  double normal();

  // Exponential(1).
  double exponential();

  // Gamma(shape, rate) via Marsaglia & Tsang (2000); the shape < 1 case uses
  // the boost Gamma(shape+1) * U^(1/shape). Result floored at 1e-300.
  double gamma(double shape, double rate);

  // Beta(a, b) as a ratio of gammas.
  double beta(double a, double b);

  // Poisson(mean): Knuth product-of-uniforms below 10, else the transformed
  // rejection of Hormann (1993).
  std::int64_t poisson(double mean);

  // Uniform integer in [0, n), rejection sampled (no modulo bias).
  std::uint64_t uniform_below(std::uint64_t n);

  // Independent stream derived from this stream's original seed and a tag.
  RngStream child(std::uint64_t tag) const;

  std::uint64_t seed() const { return seed_; }

  // Exact textual state round trip.
  std::string save_state() const;
  void load_state(const std::string& s);

  std::uint64_t raw() { return eng_(); }

 private:
  std::uint64_t seed_ = 0;
  std::mt19937_64 eng_;
};

}  // namespace dncb
