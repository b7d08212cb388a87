#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dncb/grid.hpp"
#include "dncb/rng.hpp"

namespace dncb {

// Observed values are clamped into [kBetaClamp, 1 - kBetaClamp] on ingestion;
// the likelihood has strictly open support.
constexpr double kBetaClamp = 1e-6;

// Observed I x J matrix of values in (0,1) with an observation mask
// (true = observed, false = held out).
struct BoundedMatrix {
  Mat values;
  MaskMat mask;
  std::vector<std::string> row_labels;  // optional; empty when absent
  std::vector<std::string> col_labels;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
  bool observed(std::size_t i, std::size_t j) const { return mask(i, j) != 0; }

  static BoundedMatrix from_values(Mat v);
};

double clamp_beta(double x);

// Global shape parameters and per-column rates of the augmented likelihood.
struct DncbParams {
  double eps1 = 1.0;
  double eps2 = 1.0;
  std::vector<double> col_rates;  // c_j, all positive

  static DncbParams make(double e1, double e2, std::size_t j_cols, double c = 1.0);
  void validate(std::size_t j_cols) const;
};

// Gamma prior hyperparameters (shape, rate) for theta, phi, and the core.
struct Hyperparams {
  double eta1 = 1.0, eta2 = 1.0;    // theta
  double nu1 = 1.0, nu2 = 1.0;      // phi
  double zeta1 = 1.0, zeta2 = 1.0;  // core (tri-factorization only)
  void validate() const;
};

// Matrix factorization factors: lambda^(t) = Theta^(t) Phi.
struct MfFactors {
  Mat theta1;  // I x K
  Mat theta2;  // I x K
  Mat phi;     // K x J
  std::size_t I() const { return theta1.rows(); }
  std::size_t K() const { return theta1.cols(); }
  std::size_t J() const { return phi.cols(); }
};

// Tri-factorization factors: lambda^(t) = Theta Pi^(t) Phi.
struct TdFactors {
  Mat theta;  // I x C
  Mat phi;    // K x J
  Mat pi1;    // C x K
  Mat pi2;    // C x K
  std::size_t I() const { return theta.rows(); }
  std::size_t C() const { return theta.cols(); }
  std::size_t K() const { return phi.rows(); }
  std::size_t J() const { return phi.cols(); }
};

// Sparse per-entry multinomial allocations for one t-branch. Entries exist
// only for (i,j) with y > 0; counts is a flattened block of size
// cells_c * cells_k (cells_c = 1 for matrix factorization).
struct SubcountTable {
  struct Entry {
    std::uint32_t i = 0, j = 0;
    std::vector<std::int64_t> counts;
  };
  std::size_t cells_c = 1, cells_k = 1;
  std::vector<Entry> entries;

  void reset(std::size_t c, std::size_t k) {
    cells_c = c;
    cells_k = k;
    entries.clear();
  }
};

// Latent Poisson counts, gamma pair, and subcount allocations.
struct AugmentedState {
  CountMat y1, y2;
  Mat gamma1, gamma2;
  SubcountTable sub1, sub2;

  static AugmentedState zeros(std::size_t I, std::size_t J);
};

// lambda^(t)_ij = sum_k theta^(t)_ik phi_kj
std::pair<Mat, Mat> compose_rates_mf(const MfFactors& f);

// lambda^(t)_ij = sum_c theta_ic sum_k pi^(t)_ck phi_kj
std::pair<Mat, Mat> compose_rates_td(const TdFactors& f);

// Prior draws of the factor matrices.
MfFactors draw_mf_prior(const Hyperparams& h, std::size_t I, std::size_t K, std::size_t J,
                        RngStream& rng);
TdFactors draw_td_prior(const Hyperparams& h, std::size_t I, std::size_t C, std::size_t K,
                        std::size_t J, RngStream& rng);

struct SimulatedMf {
  MfFactors factors;
  AugmentedState state;
  BoundedMatrix data;
};
struct SimulatedTd {
  TdFactors factors;
  AugmentedState state;
  BoundedMatrix data;
};

// Forward draws of the full generative process. simulate_given_rates is the
// shared tail (counts, gammas, beta) given fixed rate matrices; tests use it
// directly to force degenerate rates.
void simulate_given_rates(const Mat& lam1, const Mat& lam2, const DncbParams& d,
                          AugmentedState& st, BoundedMatrix& out, RngStream& rng);
SimulatedMf simulate_mf(const Hyperparams& h, const DncbParams& d, std::size_t I,
                        std::size_t K, std::size_t J, RngStream& rng);
SimulatedTd simulate_td(const Hyperparams& h, const DncbParams& d, std::size_t I,
                        std::size_t C, std::size_t K, std::size_t J, RngStream& rng);

}  // namespace dncb
