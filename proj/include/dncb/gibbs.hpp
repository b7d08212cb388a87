#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>

#include "dncb/model.hpp"
#include "dncb/rng.hpp"

namespace dncb {

enum class ModelKind { mf, td };
enum class InitStrategy { prior, moment };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

namespace detail {
// Split total G into (g1, g2) with g1/(g1+g2) == b bit-exactly. The total may
// be perturbed by a handful of ulps (invisible next to sampling noise). Falls
// back to the naive split for b pathologically close to a power of two;
// returns false in that case.
bool exact_split(double b, double G, double& g1, double& g2);
}  // namespace detail

// One Gibbs update of the gamma pair. Observed entries: draw the total from
// Gam(eps1+eps2+y1+y2, c_j) (independent of beta) and split it by beta.
// Masked entries: draw the split proportion from Beta(eps1+y1, eps2+y2), the
// generative conditional given the counts, so held-out values are never read.
void gibbs_sample_gammas(AugmentedState& st, const BoundedMatrix& data,
                         const DncbParams& d, RngStream& rng);

// One Gibbs update of the latent counts:
// y^(t) ~ Bes(eps_t - 1, 2 sqrt(c_j gamma^(t) lambda^(t))).
void gibbs_sample_counts(AugmentedState& st, const Mat& lam1, const Mat& lam2,
                         const DncbParams& d, RngStream& rng);

// Multinomial allocation of each nonzero count across components. The
// tri-factorization case draws the cluster index first from the marginal
// theta_ic (Pi Phi)_cj, then the pathway given the cluster, the chain-rule
// decomposition of the Tucker cell probabilities.
void gibbs_allocate_subcounts(AugmentedState& st, const MfFactors& f, RngStream& rng);
void gibbs_allocate_subcounts(AugmentedState& st, const TdFactors& f, RngStream& rng);

// Conditional Gamma(shape, rate) parameters of each factor block, exposed so
// the sufficient-statistic sums can be checked against brute force.
struct GammaPost {
  Mat shape;
  Mat rate;
};
GammaPost mf_theta_posterior(int t, const AugmentedState& st, const MfFactors& f,
                             const Hyperparams& h);
GammaPost mf_phi_posterior(const AugmentedState& st, const MfFactors& f,
                           const Hyperparams& h);
GammaPost td_theta_posterior(const AugmentedState& st, const TdFactors& f,
                             const Hyperparams& h);
GammaPost td_phi_posterior(const AugmentedState& st, const TdFactors& f,
                           const Hyperparams& h);
GammaPost td_pi_posterior(int t, const AugmentedState& st, const TdFactors& f,
                          const Hyperparams& h);

// Gamma-Poisson conjugate factor redraws, in the fixed order theta, phi(, pi).
void gibbs_update_factors(const AugmentedState& st, const Hyperparams& h, MfFactors& f,
                          RngStream& rng);
void gibbs_update_factors(const AugmentedState& st, const Hyperparams& h, TdFactors& f,
                          RngStream& rng);

// One full sweep in fixed order: gammas, counts, subcounts, factors.
void gibbs_iteration(AugmentedState& st, const BoundedMatrix& data, const DncbParams& d,
                     const Hyperparams& h, MfFactors& f, RngStream& rng);
void gibbs_iteration(AugmentedState& st, const BoundedMatrix& data, const DncbParams& d,
                     const Hyperparams& h, TdFactors& f, RngStream& rng);

// Factor + state initialization.
//   prior:  factors drawn from their priors.
//   moment: counts seeded from the scaled nonnegative parts of logit(beta),
//           pushed through one conjugate factor update.
// Both finish with a gamma/count/subcount pass so the state is consistent.
std::pair<MfFactors, AugmentedState> initialize_state_mf(const BoundedMatrix& data,
                                                         const Hyperparams& h,
                                                         const DncbParams& d, std::size_t K,
                                                         InitStrategy strategy,
                                                         RngStream& rng);
std::pair<TdFactors, AugmentedState> initialize_state_td(const BoundedMatrix& data,
                                                         const Hyperparams& h,
                                                         const DncbParams& d, std::size_t C,
                                                         std::size_t K, InitStrategy strategy,
                                                         RngStream& rng);

// A single MCMC chain: data, params, factors, augmented state, RNG, and the
// iteration counter. Checkpointing serializes exactly this.
class Chain {
 public:
  Chain(BoundedMatrix data, ModelKind kind, std::size_t C, std::size_t K, DncbParams params,
        Hyperparams hyper, std::uint64_t seed, InitStrategy init);

  void sweep();
  void run(std::size_t sweeps);

  ModelKind kind() const { return kind_; }
  std::uint64_t iteration() const { return iteration_; }
  const BoundedMatrix& data() const { return data_; }
  const DncbParams& params() const { return params_; }
  const Hyperparams& hyper() const { return hyper_; }
  const AugmentedState& state() const { return state_; }
  AugmentedState& state() { return state_; }
  const MfFactors& mf() const { return std::get<MfFactors>(factors_); }
  const TdFactors& td() const { return std::get<TdFactors>(factors_); }
  RngStream& rng() { return rng_; }
  const RngStream& rng() const { return rng_; }

  // Current rate matrices (recomposed on demand).
  std::pair<Mat, Mat> rates() const;

  // Checkpoint restore: replaces factors, state, rng, and the counter.
  void restore(std::variant<MfFactors, TdFactors> factors, AugmentedState st,
               const std::string& rng_state, std::uint64_t iteration);

 private:
  BoundedMatrix data_;
  ModelKind kind_;
  DncbParams params_;
  Hyperparams hyper_;
  std::variant<MfFactors, TdFactors> factors_;
  AugmentedState state_;
  RngStream rng_;
  std::uint64_t iteration_ = 0;
};

}  // namespace dncb
