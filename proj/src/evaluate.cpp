#include "dncb/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "dncb/special.hpp"

namespace dncb {

std::size_t HeldoutMask::count() const {
  std::size_t n = 0;
  for (auto v : held.data()) n += v != 0;
  return n;
}

HeldoutMask make_mask(std::size_t I, std::size_t J, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("make_mask: fraction must be in (0,1)");
  HeldoutMask m;
  m.fraction = fraction;
  m.seed = seed;
  m.held = MaskMat(I, J, 0);
  const std::size_t total = I * J;
  const std::size_t n_hold = static_cast<std::size_t>(std::llround(fraction * total));
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  RngStream rng(seed);
  for (std::size_t t = 0; t < n_hold; ++t) {
    std::size_t pick = t + rng.uniform_below(total - t);
    std::swap(idx[t], idx[pick]);
    m.held.data()[idx[t]] = 1;
  }
  return m;
}

BoundedMatrix apply_mask(const BoundedMatrix& data, const HeldoutMask& mask) {
  if (mask.held.rows() != data.rows() || mask.held.cols() != data.cols())
    throw std::invalid_argument("apply_mask: mask shape mismatch");
  BoundedMatrix out = data;
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < data.cols(); ++j)
      if (mask.held(i, j)) out.mask(i, j) = 0;
  return out;
}

PosteriorSamples collect_samples(Chain& chain, std::size_t iterations, std::size_t burnin,
                                 std::size_t thin) {
  if (!(iterations > burnin)) throw std::invalid_argument("collect_samples: iterations must exceed burn-in");
  if (thin == 0) throw std::invalid_argument("collect_samples: thinning must be >= 1");
  PosteriorSamples out;
  out.kind = chain.kind();
  for (std::size_t s = 1; s <= iterations; ++s) {
    chain.sweep();
    if (s > burnin && (s - burnin) % thin == 0) {
      if (out.kind == ModelKind::mf)
        out.mf.push_back(chain.mf());
      else
        out.td.push_back(chain.td());
    }
  }
  return out;
}

double log_rescaled_ppd(const BoundedMatrix& data, const HeldoutMask& mask,
                        const PosteriorSamples& samples, const DncbParams& params) {
  const std::size_t S = samples.size();
  if (S == 0) throw std::invalid_argument("log_rescaled_ppd: no posterior samples");
  const std::size_t n_held = mask.count();
  if (n_held == 0) throw std::invalid_argument("log_rescaled_ppd: empty held-out set");

  // per-sample rate matrices
  std::vector<Mat> l1(S), l2(S);
  for (std::size_t s = 0; s < S; ++s) {
    auto lam = samples.kind == ModelKind::mf ? compose_rates_mf(samples.mf[s])
                                             : compose_rates_td(samples.td[s]);
    l1[s] = std::move(lam.first);
    l2[s] = std::move(lam.second);
  }

  const double logS = std::log(static_cast<double>(S));
  double acc = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < data.cols(); ++j) {
      if (!mask.held(i, j)) continue;
      double m = -std::numeric_limits<double>::infinity(), sum = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        double lp = dncb_log_pdf(data.values(i, j), params.eps1, params.eps2, l1[s](i, j),
                                 l2[s](i, j));
        if (lp <= m) {
          sum += std::exp(lp - m);
        } else {
          sum = sum * std::exp(m - lp) + 1.0;
          m = lp;
        }
      }
      if (!std::isfinite(m))
        throw std::runtime_error("log_rescaled_ppd: predictive density underflow at cell (" +
                                 std::to_string(i) + "," + std::to_string(j) + ")");
      acc += m + std::log(sum) - logS;
    }
  return acc / static_cast<double>(n_held);
}

double rescaled_ppd(const BoundedMatrix& data, const HeldoutMask& mask,
                    const PosteriorSamples& samples, const DncbParams& params) {
  return std::exp(log_rescaled_ppd(data, mask, samples, params));
}

double masked_mse(const BoundedMatrix& data, const Mat& predicted) {
  require_same_shape(data.values, predicted, "masked_mse");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.rows(); ++i)
    for (std::size_t j = 0; j < data.cols(); ++j) {
      if (!data.observed(i, j)) continue;
      double d = data.values(i, j) - predicted(i, j);
      acc += d * d;
      ++n;
    }
  if (n == 0) throw std::invalid_argument("masked_mse: no observed cells");
  return acc / static_cast<double>(n);
}

std::pair<double, double> prior_predictive_mse(const BoundedMatrix& data,
                                               const PriorPredictiveConfig& cfg,
                                               std::size_t n_reps, RngStream& rng) {
  if (n_reps == 0) throw std::invalid_argument("prior_predictive_mse: n_reps must be >= 1");
  const std::size_t I = data.rows(), J = data.cols();
  DncbParams params = DncbParams::make(cfg.eps1, cfg.eps2, J, cfg.col_rate);
  std::vector<double> mses;
  mses.reserve(n_reps);
  for (std::size_t r = 0; r < n_reps; ++r) {
    Mat sim = cfg.kind == ModelKind::mf
                  ? simulate_mf(cfg.hyper, params, I, cfg.K, J, rng).data.values
                  : simulate_td(cfg.hyper, params, I, cfg.C, cfg.K, J, rng).data.values;
    mses.push_back(masked_mse(data, sim));
  }
  double mean = std::accumulate(mses.begin(), mses.end(), 0.0) / mses.size();
  double var = 0.0;
  for (double v : mses) var += (v - mean) * (v - mean);
  double sd = mses.size() > 1 ? std::sqrt(var / (mses.size() - 1)) : 0.0;
  return {mean, sd};
}

std::vector<std::size_t> sample_labels(const Mat& theta) {
  std::vector<std::size_t> labels(theta.rows(), 0);
  for (std::size_t i = 0; i < theta.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < theta.cols(); ++c)
      if (theta(i, c) > theta(i, best)) best = c;
    labels[i] = best;
  }
  return labels;
}

std::vector<std::size_t> feature_labels(const Mat& phi) {
  std::vector<std::size_t> labels(phi.cols(), 0);
  for (std::size_t j = 0; j < phi.cols(); ++j) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < phi.rows(); ++k)
      if (phi(k, j) > phi(best, j)) best = k;
    labels[j] = best;
  }
  return labels;
}

MaskMat cooccurrence(const std::vector<std::size_t>& labels) {
  const std::size_t n = labels.size();
  MaskMat co(n, n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) co(i, j) = labels[i] == labels[j] ? 1 : 0;
  return co;
}

MaskMat cooccurrence_samples(const Mat& theta) { return cooccurrence(sample_labels(theta)); }
MaskMat cooccurrence_features(const Mat& phi) { return cooccurrence(feature_labels(phi)); }

double stability_kl(const MaskMat& reference, const MaskMat& induced) {
  if (reference.rows() != induced.rows() || reference.cols() != induced.cols())
    throw std::invalid_argument("stability_kl: shape mismatch");
  constexpr double alpha = 1e-6;
  const std::size_t n = reference.size();
  double sum_p = 0.0, sum_q = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    sum_p += reference.data()[t] + alpha;
    sum_q += induced.data()[t] + alpha;
  }
  double kl = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double p = (reference.data()[t] + alpha) / sum_p;
    double q = (induced.data()[t] + alpha) / sum_q;
    kl += p * std::log(p / q);
  }
  return kl > 0.0 ? kl : 0.0;
}

StabilityReport stability_sweep(const BoundedMatrix& data, const StabilityConfig& cfg) {
  if (cfg.k_values.empty()) throw std::invalid_argument("stability_sweep: empty K range");
  std::vector<std::size_t> c_values = cfg.c_values;
  if (cfg.kind == ModelKind::mf || c_values.empty()) c_values = {1};

  StabilityReport report;
  DncbParams params = DncbParams::make(cfg.eps1, cfg.eps2, data.cols(), cfg.col_rate);

  struct FitOut {
    MaskMat co_s, co_f;
  };
  for (std::size_t C : c_values)
    for (std::size_t K : cfg.k_values) {
      StabilityCell cell;
      cell.C = C;
      cell.K = K;
      report.cells.push_back(cell);
    }
  std::vector<FitOut> fits(report.cells.size());

  auto run_cell = [&](std::size_t t) {
    StabilityCell& cell = report.cells[t];
    try {
      std::uint64_t cell_seed =
          splitmix64(cfg.seed ^ splitmix64(cell.C * 1000003ULL + cell.K * 977ULL));
      Chain chain(data, cfg.kind, cell.C, cell.K, params, cfg.hyper, cell_seed, cfg.init);
      chain.run(cfg.iterations);
      if (cfg.kind == ModelKind::mf) {
        // sample side uses the hypermethylation loading theta1
        fits[t].co_s = cooccurrence_samples(chain.mf().theta1);
        fits[t].co_f = cooccurrence_features(chain.mf().phi);
      } else {
        fits[t].co_s = cooccurrence_samples(chain.td().theta);
        fits[t].co_f = cooccurrence_features(chain.td().phi);
      }
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);
  if (jobs == 1) {
    for (std::size_t t = 0; t < report.cells.size(); ++t) run_cell(t);
  } else {
    // each cell owns its chain and seed, so scheduling cannot change results
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < std::min(jobs, report.cells.size()); ++w)
      workers.emplace_back([&] {
        for (;;) {
          std::size_t t = next.fetch_add(1);
          if (t >= report.cells.size()) return;
          run_cell(t);
        }
      });
    for (auto& th : workers) th.join();
  }

  // reference: external labels if given, else the first successful cell
  // (the smallest cardinality in the grid order)
  const MaskMat* ref_s = nullptr;
  const MaskMat* ref_f = nullptr;
  MaskMat ext_s, ext_f;
  if (cfg.reference_sample_labels) {
    ext_s = cooccurrence(*cfg.reference_sample_labels);
    ref_s = &ext_s;
  }
  if (cfg.reference_feature_labels) {
    ext_f = cooccurrence(*cfg.reference_feature_labels);
    ref_f = &ext_f;
  }
  for (std::size_t t = 0; t < report.cells.size() && (!ref_s || !ref_f); ++t) {
    if (!report.cells[t].ok) continue;
    if (!ref_s) ref_s = &fits[t].co_s;
    if (!ref_f) ref_f = &fits[t].co_f;
    break;
  }
  for (std::size_t t = 0; t < report.cells.size(); ++t) {
    if (!report.cells[t].ok) continue;
    if (ref_s) report.cells[t].kl_samples = stability_kl(*ref_s, fits[t].co_s);
    if (ref_f) report.cells[t].kl_features = stability_kl(*ref_f, fits[t].co_f);
  }
  return report;
}

}  // namespace dncb
