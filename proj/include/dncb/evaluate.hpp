#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dncb/gibbs.hpp"
#include "dncb/model.hpp"

namespace dncb {

// Random held-out mask; held(i,j) = 1 marks a censored cell.
struct HeldoutMask {
  MaskMat held;
  double fraction = 0.0;
  std::uint64_t seed = 0;

  std::size_t count() const;
};

// Uniform mask without replacement, exactly round(fraction * I * J) cells.
HeldoutMask make_mask(std::size_t I, std::size_t J, double fraction, std::uint64_t seed);

// Apply a held-out mask to data: held cells become unobserved.
BoundedMatrix apply_mask(const BoundedMatrix& data, const HeldoutMask& mask);

// Posterior factor snapshots from one chain (either model family).
struct PosteriorSamples {
  ModelKind kind = ModelKind::td;
  std::vector<MfFactors> mf;
  std::vector<TdFactors> td;
  std::size_t size() const { return kind == ModelKind::mf ? mf.size() : td.size(); }
};

// Collects snapshots during Chain::run according to burn-in and thinning.
PosteriorSamples collect_samples(Chain& chain, std::size_t iterations, std::size_t burnin,
                                 std::size_t thin);

// log of the rescaled pointwise predictive density: the geometric mean over
// held-out cells of the posterior-averaged DNCB density. rescaled_ppd
// exponentiates it.
double log_rescaled_ppd(const BoundedMatrix& data, const HeldoutMask& mask,
                        const PosteriorSamples& samples, const DncbParams& params);
double rescaled_ppd(const BoundedMatrix& data, const HeldoutMask& mask,
                    const PosteriorSamples& samples, const DncbParams& params);

// Mean squared error between two matrices over the observed cells of `data`.
double masked_mse(const BoundedMatrix& data, const Mat& predicted);

// Simulation settings for the prior predictive check.
struct PriorPredictiveConfig {
  ModelKind kind = ModelKind::td;
  std::size_t C = 1, K = 1;
  Hyperparams hyper;
  double eps1 = 1.0, eps2 = 1.0;
  double col_rate = 1.0;
};

// Draw n_reps datasets from the prior and report mean +- sd of the MSE
// against the observed data.
std::pair<double, double> prior_predictive_mse(const BoundedMatrix& data,
                                               const PriorPredictiveConfig& cfg,
                                               std::size_t n_reps, RngStream& rng);

// Hard-assignment labels: samples by argmax over theta rows, features by
// argmax over phi columns. Ties break toward the lower index.
std::vector<std::size_t> sample_labels(const Mat& theta);
std::vector<std::size_t> feature_labels(const Mat& phi);

// Binary same-cluster co-occurrence matrix of a label vector.
MaskMat cooccurrence(const std::vector<std::size_t>& labels);
MaskMat cooccurrence_samples(const Mat& theta);
MaskMat cooccurrence_features(const Mat& phi);

// KL(reference || induced) after normalizing both matrices to probability
// distributions with additive smoothing alpha = 1e-6.
double stability_kl(const MaskMat& reference, const MaskMat& induced);

struct StabilityCell {
  std::size_t C = 0, K = 0;
  double kl_samples = 0.0;
  double kl_features = 0.0;
  bool ok = false;
  std::string error;
};

struct StabilityReport {
  std::vector<StabilityCell> cells;
};

struct StabilityConfig {
  ModelKind kind = ModelKind::td;
  std::vector<std::size_t> c_values;  // ignored for mf
  std::vector<std::size_t> k_values;
  Hyperparams hyper;
  double eps1 = 1.0, eps2 = 1.0;
  double col_rate = 1.0;
  std::size_t iterations = 200;
  std::uint64_t seed = 1;
  InitStrategy init = InitStrategy::moment;
  std::size_t jobs = 1;  // parallel workers over grid cells
  // External reference labels; when absent the reference is the co-occurrence
  // induced at the smallest grid cardinality.
  std::optional<std::vector<std::size_t>> reference_sample_labels;
  std::optional<std::vector<std::size_t>> reference_feature_labels;
};

// Fit one chain per (C, K) grid point and report co-occurrence KL divergence
// against the reference on both sides. Per-cell fit errors are recorded in
// the report, not thrown. Cells are independent jobs with seeds derived from
// cfg.seed, so the report does not depend on the worker count.
StabilityReport stability_sweep(const BoundedMatrix& data, const StabilityConfig& cfg);

}  // namespace dncb
