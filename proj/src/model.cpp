#include "dncb/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dncb {

double clamp_beta(double x) {
  if (!(x > kBetaClamp)) return kBetaClamp;
  if (!(x < 1.0 - kBetaClamp)) return 1.0 - kBetaClamp;
  return x;
}

BoundedMatrix BoundedMatrix::from_values(Mat v) {
  BoundedMatrix m;
  m.mask = MaskMat(v.rows(), v.cols(), 1);
  for (auto& x : v.data()) x = clamp_beta(x);
  m.values = std::move(v);
  return m;
}

DncbParams DncbParams::make(double e1, double e2, std::size_t j_cols, double c) {
  DncbParams d;
  d.eps1 = e1;
  d.eps2 = e2;
  d.col_rates.assign(j_cols, c);
  d.validate(j_cols);
  return d;
}

void DncbParams::validate(std::size_t j_cols) const {
  if (!(eps1 > 0.0) || !(eps2 > 0.0))
    throw std::domain_error("DncbParams: eps1 and eps2 must be positive");
  if (col_rates.size() != j_cols)
    throw std::invalid_argument("DncbParams: col_rates length must equal J");
  for (double c : col_rates)
    if (!(c > 0.0)) throw std::domain_error("DncbParams: col_rates must be positive");
}

void Hyperparams::validate() const {
  for (double x : {eta1, eta2, nu1, nu2, zeta1, zeta2})
    if (!(x > 0.0)) throw std::domain_error("Hyperparams: all entries must be positive");
}

AugmentedState AugmentedState::zeros(std::size_t I, std::size_t J) {
  AugmentedState st;
  st.y1 = CountMat(I, J, 0);
  st.y2 = CountMat(I, J, 0);
  st.gamma1 = Mat(I, J, 1.0);
  st.gamma2 = Mat(I, J, 1.0);
  return st;
}

std::pair<Mat, Mat> compose_rates_mf(const MfFactors& f) {
  if (f.theta1.rows() != f.theta2.rows() || f.theta1.cols() != f.theta2.cols() ||
      f.theta1.cols() != f.phi.rows())
    throw std::invalid_argument("compose_rates_mf: factor dimension mismatch");
  const std::size_t I = f.I(), K = f.K(), J = f.J();
  Mat l1(I, J, 0.0), l2(I, J, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t k = 0; k < K; ++k) {
      const double t1 = f.theta1(i, k), t2 = f.theta2(i, k);
      for (std::size_t j = 0; j < J; ++j) {
        l1(i, j) += t1 * f.phi(k, j);
        l2(i, j) += t2 * f.phi(k, j);
      }
    }
  return {std::move(l1), std::move(l2)};
}

std::pair<Mat, Mat> compose_rates_td(const TdFactors& f) {
  if (f.pi1.rows() != f.theta.cols() || f.pi1.cols() != f.phi.rows() ||
      !f.pi1.same_shape(f.pi2))
    throw std::invalid_argument("compose_rates_td: factor dimension mismatch");
  const std::size_t I = f.I(), C = f.C(), K = f.K(), J = f.J();
  // W^(t) = Pi^(t) Phi, then lambda^(t) = Theta W^(t)
  Mat w1(C, J, 0.0), w2(C, J, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < K; ++k) {
      const double p1 = f.pi1(c, k), p2 = f.pi2(c, k);
      for (std::size_t j = 0; j < J; ++j) {
        w1(c, j) += p1 * f.phi(k, j);
        w2(c, j) += p2 * f.phi(k, j);
      }
    }
  Mat l1(I, J, 0.0), l2(I, J, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t c = 0; c < C; ++c) {
      const double th = f.theta(i, c);
      for (std::size_t j = 0; j < J; ++j) {
        l1(i, j) += th * w1(c, j);
        l2(i, j) += th * w2(c, j);
      }
    }
  return {std::move(l1), std::move(l2)};
}

namespace {
Mat draw_gamma_matrix(std::size_t r, std::size_t c, double shape, double rate,
                      RngStream& rng) {
  Mat m(r, c);
  for (auto& x : m.data()) x = rng.gamma(shape, rate);
  return m;
}
}  // namespace

MfFactors draw_mf_prior(const Hyperparams& h, std::size_t I, std::size_t K, std::size_t J,
                        RngStream& rng) {
  h.validate();
  MfFactors f;
  f.phi = draw_gamma_matrix(K, J, h.nu1, h.nu2, rng);
  f.theta1 = draw_gamma_matrix(I, K, h.eta1, h.eta2, rng);
  f.theta2 = draw_gamma_matrix(I, K, h.eta1, h.eta2, rng);
  return f;
}

TdFactors draw_td_prior(const Hyperparams& h, std::size_t I, std::size_t C, std::size_t K,
                        std::size_t J, RngStream& rng) {
  h.validate();
  TdFactors f;
  f.pi1 = draw_gamma_matrix(C, K, h.zeta1, h.zeta2, rng);
  f.pi2 = draw_gamma_matrix(C, K, h.zeta1, h.zeta2, rng);
  f.phi = draw_gamma_matrix(K, J, h.nu1, h.nu2, rng);
  f.theta = draw_gamma_matrix(I, C, h.eta1, h.eta2, rng);
  return f;
}

void simulate_given_rates(const Mat& lam1, const Mat& lam2, const DncbParams& d,
                          AugmentedState& st, BoundedMatrix& out, RngStream& rng) {
  require_same_shape(lam1, lam2, "simulate_given_rates");
  const std::size_t I = lam1.rows(), J = lam1.cols();
  d.validate(J);
  st = AugmentedState::zeros(I, J);
  out.values = Mat(I, J);
  out.mask = MaskMat(I, J, 1);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      st.y1(i, j) = rng.poisson(lam1(i, j));
      st.y2(i, j) = rng.poisson(lam2(i, j));
      const double cj = d.col_rates[j];
      double g1 = rng.gamma(d.eps1 + st.y1(i, j), cj);
      double g2 = rng.gamma(d.eps2 + st.y2(i, j), cj);
      st.gamma1(i, j) = g1;
      st.gamma2(i, j) = g2;
      out.values(i, j) = clamp_beta(g1 / (g1 + g2));
    }
}

namespace {

// Tail of the generative process shared by both models once per-component
// subcounts have been drawn: gammas, then the beta ratio.
void finish_gammas_beta(const DncbParams& d, AugmentedState& st, BoundedMatrix& out,
                        RngStream& rng) {
  const std::size_t I = st.y1.rows(), J = st.y1.cols();
  out.values = Mat(I, J);
  out.mask = MaskMat(I, J, 1);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      const double cj = d.col_rates[j];
      double g1 = rng.gamma(d.eps1 + st.y1(i, j), cj);
      double g2 = rng.gamma(d.eps2 + st.y2(i, j), cj);
      st.gamma1(i, j) = g1;
      st.gamma2(i, j) = g2;
      out.values(i, j) = clamp_beta(g1 / (g1 + g2));
    }
}

}  // namespace

SimulatedMf simulate_mf(const Hyperparams& h, const DncbParams& d, std::size_t I,
                        std::size_t K, std::size_t J, RngStream& rng) {
  if (I == 0 || K == 0 || J == 0)
    throw std::invalid_argument("simulate_mf: dimensions must be positive");
  d.validate(J);
  SimulatedMf sim;
  sim.factors = draw_mf_prior(h, I, K, J, rng);
  sim.state = AugmentedState::zeros(I, J);
  sim.state.sub1.reset(1, K);
  sim.state.sub2.reset(1, K);
  // per-component Poisson subcounts; their sums are the y draws
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      SubcountTable::Entry e1, e2;
      e1.i = e2.i = static_cast<std::uint32_t>(i);
      e1.j = e2.j = static_cast<std::uint32_t>(j);
      e1.counts.assign(K, 0);
      e2.counts.assign(K, 0);
      std::int64_t s1 = 0, s2 = 0;
      for (std::size_t k = 0; k < K; ++k) {
        e1.counts[k] = rng.poisson(sim.factors.theta1(i, k) * sim.factors.phi(k, j));
        e2.counts[k] = rng.poisson(sim.factors.theta2(i, k) * sim.factors.phi(k, j));
        s1 += e1.counts[k];
        s2 += e2.counts[k];
      }
      sim.state.y1(i, j) = s1;
      sim.state.y2(i, j) = s2;
      if (s1 > 0) sim.state.sub1.entries.push_back(std::move(e1));
      if (s2 > 0) sim.state.sub2.entries.push_back(std::move(e2));
    }
  finish_gammas_beta(d, sim.state, sim.data, rng);
  return sim;
}

SimulatedTd simulate_td(const Hyperparams& h, const DncbParams& d, std::size_t I,
                        std::size_t C, std::size_t K, std::size_t J, RngStream& rng) {
  if (I == 0 || C == 0 || K == 0 || J == 0)
    throw std::invalid_argument("simulate_td: dimensions must be positive");
  d.validate(J);
  SimulatedTd sim;
  sim.factors = draw_td_prior(h, I, C, K, J, rng);
  sim.state = AugmentedState::zeros(I, J);
  sim.state.sub1.reset(C, K);
  sim.state.sub2.reset(C, K);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      SubcountTable::Entry e1, e2;
      e1.i = e2.i = static_cast<std::uint32_t>(i);
      e1.j = e2.j = static_cast<std::uint32_t>(j);
      e1.counts.assign(C * K, 0);
      e2.counts.assign(C * K, 0);
      std::int64_t s1 = 0, s2 = 0;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < K; ++k) {
          const double base = sim.factors.theta(i, c) * sim.factors.phi(k, j);
          std::int64_t v1 = rng.poisson(base * sim.factors.pi1(c, k));
          std::int64_t v2 = rng.poisson(base * sim.factors.pi2(c, k));
          e1.counts[c * K + k] = v1;
          e2.counts[c * K + k] = v2;
          s1 += v1;
          s2 += v2;
        }
      sim.state.y1(i, j) = s1;
      sim.state.y2(i, j) = s2;
      if (s1 > 0) sim.state.sub1.entries.push_back(std::move(e1));
      if (s2 > 0) sim.state.sub2.entries.push_back(std::move(e2));
    }
  finish_gammas_beta(d, sim.state, sim.data, rng);
  return sim;
}

}  // namespace dncb
