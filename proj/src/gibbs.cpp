#include "dncb/gibbs.hpp"

#include <cmath>
#include <stdexcept>

#include "dncb/bessel.hpp"

namespace dncb {

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "mf") return ModelKind::mf;
  if (s == "td") return ModelKind::td;
  throw std::invalid_argument("unknown model kind: " + s + " (expected mf or td)");
}

std::string to_string(ModelKind k) { return k == ModelKind::mf ? "mf" : "td"; }

namespace detail {

namespace {
bool exact_split_try(double b, double s, double& g1_out, double& g2_out) {
  if (!(s > 0.0) || !std::isfinite(s)) return false;
  double g10 = b * s;
  for (int i = -2; i <= 2; ++i) {
    double g1 = g10;
    for (int q = 0; q < (i < 0 ? -i : i); ++q)
      g1 = std::nextafter(g1, i < 0 ? 0.0 : 1e308);
    if (!(g1 > 0.0) || !(g1 < s)) continue;
    if (g1 / s != b) continue;
    if (b >= 0.5) {
      double g2 = s - g1;  // exact by Sterbenz, so g1 + g2 == s
      if (!(g2 > 0.0)) continue;
      g1_out = g1;
      g2_out = g2;
      return true;
    }
    double y0 = s - g1;
    for (int j = -3; j <= 3; ++j) {
      double g2 = y0;
      for (int q = 0; q < (j < 0 ? -j : j); ++q)
        g2 = std::nextafter(g2, j < 0 ? 0.0 : 1e308);
      if (!(g2 > 0.0)) continue;
      if (g1 / (g1 + g2) == b) {
        g1_out = g1;
        g2_out = g2;
        return true;
      }
    }
  }
  return false;
}
}  // namespace

bool exact_split(double b, double G, double& g1, double& g2) {
  if (exact_split_try(b, G, g1, g2)) return true;
  for (int k = 1; k <= 32; ++k) {
    double up = G, dn = G;
    for (int q = 0; q < k; ++q) {
      up = std::nextafter(up, 1e308);
      dn = std::nextafter(dn, 0.0);
    }
    if (exact_split_try(b, up, g1, g2) || exact_split_try(b, dn, g1, g2)) return true;
  }
  // the rounding phase of b*s can creep slowly when b sits near a power of
  // two; geometric strides in s cover those cases
  for (int t = 6; t <= 34; ++t) {
    double stride = std::ldexp(G, t - 53);
    if (exact_split_try(b, G + stride, g1, g2) || exact_split_try(b, G - stride, g1, g2) ||
        exact_split_try(b, G + 1.37 * stride, g1, g2) ||
        exact_split_try(b, G - 0.61 * stride, g1, g2))
      return true;
  }
  g1 = b * G;
  g2 = (1.0 - b) * G;
  return false;
}

}  // namespace detail

void gibbs_sample_gammas(AugmentedState& st, const BoundedMatrix& data,
                         const DncbParams& d, RngStream& rng) {
  const std::size_t I = data.rows(), J = data.cols();
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      const double shape = d.eps1 + d.eps2 + st.y1(i, j) + st.y2(i, j);
      const double total = rng.gamma(shape, d.col_rates[j]);
      double b;
      if (data.observed(i, j)) {
        b = data.values(i, j);
        double g1, g2;
        detail::exact_split(b, total, g1, g2);
        st.gamma1(i, j) = g1;
        st.gamma2(i, j) = g2;
      } else {
        b = rng.beta(d.eps1 + st.y1(i, j), d.eps2 + st.y2(i, j));
        st.gamma1(i, j) = std::max(b * total, 1e-300);
        st.gamma2(i, j) = std::max((1.0 - b) * total, 1e-300);
      }
    }
}

void gibbs_sample_counts(AugmentedState& st, const Mat& lam1, const Mat& lam2,
                         const DncbParams& d, RngStream& rng) {
  const std::size_t I = st.y1.rows(), J = st.y1.cols();
  require_same_shape(lam1, lam2, "gibbs_sample_counts");
  if (lam1.rows() != I || lam1.cols() != J)
    throw std::invalid_argument("gibbs_sample_counts: rate shape mismatch");
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      const double cj = d.col_rates[j];
      st.y1(i, j) = sample_bessel(
          {d.eps1 - 1.0, 2.0 * std::sqrt(cj * st.gamma1(i, j) * lam1(i, j))},
          SamplerMethod::auto_select, rng);
      st.y2(i, j) = sample_bessel(
          {d.eps2 - 1.0, 2.0 * std::sqrt(cj * st.gamma2(i, j) * lam2(i, j))},
          SamplerMethod::auto_select, rng);
    }
}

namespace {

inline std::size_t pick_category(const double* w, std::size_t n, double total,
                                 RngStream& rng) {
  double u = rng.u01() * total;
  for (std::size_t c = 0; c + 1 < n; ++c) {
    if (u < w[c]) return c;
    u -= w[c];
  }
  return n - 1;
}

void allocate_mf_branch(SubcountTable& sub, const CountMat& y, const Mat& theta,
                        const Mat& phi, RngStream& rng) {
  const std::size_t I = y.rows(), J = y.cols(), K = phi.rows();
  sub.reset(1, K);
  std::vector<double> w(K);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      const std::int64_t n = y(i, j);
      if (n == 0) continue;
      double tot = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        w[k] = theta(i, k) * phi(k, j);
        tot += w[k];
      }
      SubcountTable::Entry e;
      e.i = static_cast<std::uint32_t>(i);
      e.j = static_cast<std::uint32_t>(j);
      e.counts.assign(K, 0);
      for (std::int64_t r = 0; r < n; ++r) ++e.counts[pick_category(w.data(), K, tot, rng)];
      sub.entries.push_back(std::move(e));
    }
}

void allocate_td_branch(SubcountTable& sub, const CountMat& y, const TdFactors& f,
                        const Mat& pi, RngStream& rng) {
  const std::size_t I = y.rows(), J = y.cols(), C = f.C(), K = f.K();
  sub.reset(C, K);
  // W = Pi Phi, the per-column cluster marginals
  Mat W(C, J, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < K; ++k) {
      const double p = pi(c, k);
      for (std::size_t j = 0; j < J; ++j) W(c, j) += p * f.phi(k, j);
    }
  std::vector<double> wc(C), wk(K);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      const std::int64_t n = y(i, j);
      if (n == 0) continue;
      double tot_c = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        wc[c] = f.theta(i, c) * W(c, j);
        tot_c += wc[c];
      }
      SubcountTable::Entry e;
      e.i = static_cast<std::uint32_t>(i);
      e.j = static_cast<std::uint32_t>(j);
      e.counts.assign(C * K, 0);
      for (std::int64_t r = 0; r < n; ++r) {
        const std::size_t c = pick_category(wc.data(), C, tot_c, rng);
        double tot_k = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          wk[k] = pi(c, k) * f.phi(k, j);
          tot_k += wk[k];
        }
        ++e.counts[c * K + pick_category(wk.data(), K, tot_k, rng)];
      }
      sub.entries.push_back(std::move(e));
    }
}

}  // namespace

void gibbs_allocate_subcounts(AugmentedState& st, const MfFactors& f, RngStream& rng) {
  allocate_mf_branch(st.sub1, st.y1, f.theta1, f.phi, rng);
  allocate_mf_branch(st.sub2, st.y2, f.theta2, f.phi, rng);
}

void gibbs_allocate_subcounts(AugmentedState& st, const TdFactors& f, RngStream& rng) {
  allocate_td_branch(st.sub1, st.y1, f, f.pi1, rng);
  allocate_td_branch(st.sub2, st.y2, f, f.pi2, rng);
}

GammaPost mf_theta_posterior(int t, const AugmentedState& st, const MfFactors& f,
                             const Hyperparams& h) {
  const std::size_t I = f.I(), K = f.K(), J = f.J();
  const SubcountTable& sub = t == 1 ? st.sub1 : st.sub2;
  GammaPost post{Mat(I, K, h.eta1), Mat(I, K, 0.0)};
  for (const auto& e : sub.entries)
    for (std::size_t k = 0; k < K; ++k) post.shape(e.i, k) += e.counts[k];
  std::vector<double> phi_rowsum(K, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < J; ++j) phi_rowsum[k] += f.phi(k, j);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t k = 0; k < K; ++k) post.rate(i, k) = h.eta2 + phi_rowsum[k];
  return post;
}

GammaPost mf_phi_posterior(const AugmentedState& st, const MfFactors& f,
                           const Hyperparams& h) {
  const std::size_t I = f.I(), K = f.K(), J = f.J();
  GammaPost post{Mat(K, J, h.nu1), Mat(K, J, 0.0)};
  for (const SubcountTable* sub : {&st.sub1, &st.sub2})
    for (const auto& e : sub->entries)
      for (std::size_t k = 0; k < K; ++k) post.shape(k, e.j) += e.counts[k];
  std::vector<double> theta_colsum(K, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t k = 0; k < K; ++k)
      theta_colsum[k] += f.theta1(i, k) + f.theta2(i, k);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < J; ++j) post.rate(k, j) = h.nu2 + theta_colsum[k];
  return post;
}

GammaPost td_theta_posterior(const AugmentedState& st, const TdFactors& f,
                             const Hyperparams& h) {
  const std::size_t I = f.I(), C = f.C(), K = f.K(), J = f.J();
  GammaPost post{Mat(I, C, h.eta1), Mat(I, C, 0.0)};
  for (const SubcountTable* sub : {&st.sub1, &st.sub2})
    for (const auto& e : sub->entries)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < K; ++k) post.shape(e.i, c) += e.counts[c * K + k];
  std::vector<double> phi_rowsum(K, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < J; ++j) phi_rowsum[k] += f.phi(k, j);
  std::vector<double> rate_c(C, h.eta2);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < K; ++k)
      rate_c[c] += (f.pi1(c, k) + f.pi2(c, k)) * phi_rowsum[k];
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t c = 0; c < C; ++c) post.rate(i, c) = rate_c[c];
  return post;
}

GammaPost td_phi_posterior(const AugmentedState& st, const TdFactors& f,
                           const Hyperparams& h) {
  const std::size_t I = f.I(), C = f.C(), K = f.K(), J = f.J();
  GammaPost post{Mat(K, J, h.nu1), Mat(K, J, 0.0)};
  for (const SubcountTable* sub : {&st.sub1, &st.sub2})
    for (const auto& e : sub->entries)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < K; ++k) post.shape(k, e.j) += e.counts[c * K + k];
  std::vector<double> theta_colsum(C, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t c = 0; c < C; ++c) theta_colsum[c] += f.theta(i, c);
  std::vector<double> rate_k(K, h.nu2);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < C; ++c)
      rate_k[k] += theta_colsum[c] * (f.pi1(c, k) + f.pi2(c, k));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < J; ++j) post.rate(k, j) = rate_k[k];
  return post;
}

GammaPost td_pi_posterior(int t, const AugmentedState& st, const TdFactors& f,
                          const Hyperparams& h) {
  const std::size_t I = f.I(), C = f.C(), K = f.K(), J = f.J();
  const SubcountTable& sub = t == 1 ? st.sub1 : st.sub2;
  GammaPost post{Mat(C, K, h.zeta1), Mat(C, K, 0.0)};
  for (const auto& e : sub.entries)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < K; ++k) post.shape(c, k) += e.counts[c * K + k];
  std::vector<double> theta_colsum(C, 0.0), phi_rowsum(K, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t c = 0; c < C; ++c) theta_colsum[c] += f.theta(i, c);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < J; ++j) phi_rowsum[k] += f.phi(k, j);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < K; ++k)
      post.rate(c, k) = h.zeta2 + theta_colsum[c] * phi_rowsum[k];
  return post;
}

namespace {
void draw_from_post(const GammaPost& post, Mat& out, RngStream& rng) {
  out = Mat(post.shape.rows(), post.shape.cols());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      out(i, j) = rng.gamma(post.shape(i, j), post.rate(i, j));
}
}  // namespace

void gibbs_update_factors(const AugmentedState& st, const Hyperparams& h, MfFactors& f,
                          RngStream& rng) {
  draw_from_post(mf_theta_posterior(1, st, f, h), f.theta1, rng);
  draw_from_post(mf_theta_posterior(2, st, f, h), f.theta2, rng);
  draw_from_post(mf_phi_posterior(st, f, h), f.phi, rng);
}

void gibbs_update_factors(const AugmentedState& st, const Hyperparams& h, TdFactors& f,
                          RngStream& rng) {
  draw_from_post(td_theta_posterior(st, f, h), f.theta, rng);
  draw_from_post(td_phi_posterior(st, f, h), f.phi, rng);
  draw_from_post(td_pi_posterior(1, st, f, h), f.pi1, rng);
  draw_from_post(td_pi_posterior(2, st, f, h), f.pi2, rng);
}

void gibbs_iteration(AugmentedState& st, const BoundedMatrix& data, const DncbParams& d,
                     const Hyperparams& h, MfFactors& f, RngStream& rng) {
  auto [lam1, lam2] = compose_rates_mf(f);
  gibbs_sample_gammas(st, data, d, rng);
  gibbs_sample_counts(st, lam1, lam2, d, rng);
  gibbs_allocate_subcounts(st, f, rng);
  gibbs_update_factors(st, h, f, rng);
}

void gibbs_iteration(AugmentedState& st, const BoundedMatrix& data, const DncbParams& d,
                     const Hyperparams& h, TdFactors& f, RngStream& rng) {
  auto [lam1, lam2] = compose_rates_td(f);
  gibbs_sample_gammas(st, data, d, rng);
  gibbs_sample_counts(st, lam1, lam2, d, rng);
  gibbs_allocate_subcounts(st, f, rng);
  gibbs_update_factors(st, h, f, rng);
}

namespace {

// Seed counts from the scaled nonnegative parts of logit(beta): hyper- and
// hypomethylated mass land in the t=1 / t=2 branches respectively.
void moment_counts(const BoundedMatrix& data, AugmentedState& st) {
  const double target_mean = 10.0;
  double total = 0.0;
  std::size_t n_obs = 0;
  const std::size_t I = data.rows(), J = data.cols();
  Mat pos(I, J, 0.0), neg(I, J, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      if (!data.observed(i, j)) continue;
      double logit = std::log(data.values(i, j) / (1.0 - data.values(i, j)));
      pos(i, j) = logit > 0.0 ? logit : 0.0;
      neg(i, j) = logit < 0.0 ? -logit : 0.0;
      total += pos(i, j) + neg(i, j);
      ++n_obs;
    }
  if (total <= 0.0 || n_obs == 0) return;  // perfectly centered data: keep zero counts
  const double scale = target_mean * static_cast<double>(n_obs) / total;
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      if (!data.observed(i, j)) continue;
      st.y1(i, j) = std::llround(scale * pos(i, j));
      st.y2(i, j) = std::llround(scale * neg(i, j));
    }
}

}  // namespace

std::pair<MfFactors, AugmentedState> initialize_state_mf(const BoundedMatrix& data,
                                                         const Hyperparams& h,
                                                         const DncbParams& d, std::size_t K,
                                                         InitStrategy strategy,
                                                         RngStream& rng) {
  const std::size_t I = data.rows(), J = data.cols();
  d.validate(J);
  MfFactors f = draw_mf_prior(h, I, K, J, rng);
  AugmentedState st = AugmentedState::zeros(I, J);
  if (strategy == InitStrategy::moment) {
    moment_counts(data, st);
    for (int round = 0; round < 3; ++round) {
      gibbs_allocate_subcounts(st, f, rng);
      gibbs_update_factors(st, h, f, rng);
    }
  }
  auto [lam1, lam2] = compose_rates_mf(f);
  gibbs_sample_gammas(st, data, d, rng);
  gibbs_sample_counts(st, lam1, lam2, d, rng);
  gibbs_allocate_subcounts(st, f, rng);
  return {std::move(f), std::move(st)};
}

std::pair<TdFactors, AugmentedState> initialize_state_td(const BoundedMatrix& data,
                                                         const Hyperparams& h,
                                                         const DncbParams& d, std::size_t C,
                                                         std::size_t K, InitStrategy strategy,
                                                         RngStream& rng) {
  const std::size_t I = data.rows(), J = data.cols();
  d.validate(J);
  TdFactors f = draw_td_prior(h, I, C, K, J, rng);
  AugmentedState st = AugmentedState::zeros(I, J);
  if (strategy == InitStrategy::moment) {
    moment_counts(data, st);
    for (int round = 0; round < 3; ++round) {
      gibbs_allocate_subcounts(st, f, rng);
      gibbs_update_factors(st, h, f, rng);
    }
  }
  auto [lam1, lam2] = compose_rates_td(f);
  gibbs_sample_gammas(st, data, d, rng);
  gibbs_sample_counts(st, lam1, lam2, d, rng);
  gibbs_allocate_subcounts(st, f, rng);
  return {std::move(f), std::move(st)};
}

Chain::Chain(BoundedMatrix data, ModelKind kind, std::size_t C, std::size_t K,
             DncbParams params, Hyperparams hyper, std::uint64_t seed, InitStrategy init)
    : data_(std::move(data)),
      kind_(kind),
      params_(std::move(params)),
      hyper_(hyper),
      rng_(seed) {
  hyper_.validate();
  if (data_.rows() == 0 || data_.cols() == 0)
    throw std::invalid_argument("Chain: data matrix must be at least 1x1");
  params_.validate(data_.cols());
  if (K == 0 || (kind_ == ModelKind::td && C == 0))
    throw std::invalid_argument("Chain: factor cardinalities must be >= 1");
  if (kind_ == ModelKind::mf) {
    auto [f, st] = initialize_state_mf(data_, hyper_, params_, K, init, rng_);
    factors_ = std::move(f);
    state_ = std::move(st);
  } else {
    auto [f, st] = initialize_state_td(data_, hyper_, params_, C, K, init, rng_);
    factors_ = std::move(f);
    state_ = std::move(st);
  }
}

void Chain::sweep() {
  if (kind_ == ModelKind::mf)
    gibbs_iteration(state_, data_, params_, hyper_, std::get<MfFactors>(factors_), rng_);
  else
    gibbs_iteration(state_, data_, params_, hyper_, std::get<TdFactors>(factors_), rng_);
  ++iteration_;
}

void Chain::run(std::size_t sweeps) {
  for (std::size_t s = 0; s < sweeps; ++s) sweep();
}

std::pair<Mat, Mat> Chain::rates() const {
  return kind_ == ModelKind::mf ? compose_rates_mf(std::get<MfFactors>(factors_))
                                : compose_rates_td(std::get<TdFactors>(factors_));
}

void Chain::restore(std::variant<MfFactors, TdFactors> factors, AugmentedState st,
                    const std::string& rng_state, std::uint64_t iteration) {
  factors_ = std::move(factors);
  state_ = std::move(st);
  rng_.load_state(rng_state);
  iteration_ = iteration;
}

}  // namespace dncb
