#include "dncb/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dncb/evaluate.hpp"
#include "dncb/gibbs.hpp"
#include "dncb/io.hpp"
#include "dncb/model.hpp"

namespace dncb {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonOpts {
  std::string out;
  std::uint64_t seed = 1;
};

struct DataOpts {
  std::string path;
  bool header = false;
  bool rownames = false;
  bool tsv = false;
  LoadOptions load_options() const {
    return {tsv ? TableFormat::tsv : TableFormat::csv, header, rownames};
  }
};

struct ModelOpts {
  std::string model = "td";
  std::size_t C = 2, K = 4;
  double eps1 = 1.0, eps2 = 1.0, cj = 1.0;
  Hyperparams hyper;
  ModelKind kind() const { return model_kind_from_string(model); }
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  const char* env_out = std::getenv("DNCB_OUT_DIR");
  o.out = env_out ? env_out : ".";
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "RNG seed");
}

void add_data(CLI::App* cmd, DataOpts& o, const char* name = "--data") {
  cmd->add_option(name, o.path, "Input matrix (CSV/TSV)")->required();
  cmd->add_flag("--header", o.header, "First row holds column labels");
  cmd->add_flag("--rownames", o.rownames, "First column holds row labels");
  cmd->add_flag("--tsv", o.tsv, "Tab-separated input");
}

void add_model(CLI::App* cmd, ModelOpts& o, bool with_dims = true) {
  cmd->add_option("--model", o.model, "Model kind: mf or td")
      ->check(CLI::IsMember({"mf", "td"}));
  if (with_dims) {
    cmd->add_option("--C", o.C, "Sample-cluster cardinality (td)");
    cmd->add_option("--K", o.K, "Feature-pathway cardinality");
  }
  cmd->add_option("--eps1", o.eps1, "Shape parameter eps1");
  cmd->add_option("--eps2", o.eps2, "Shape parameter eps2");
  cmd->add_option("--cj", o.cj, "Column rate c_j (shared scalar)");
  cmd->add_option("--eta1", o.hyper.eta1, "Theta prior shape");
  cmd->add_option("--eta2", o.hyper.eta2, "Theta prior rate");
  cmd->add_option("--nu1", o.hyper.nu1, "Phi prior shape");
  cmd->add_option("--nu2", o.hyper.nu2, "Phi prior rate");
  cmd->add_option("--zeta1", o.hyper.zeta1, "Core prior shape (td)");
  cmd->add_option("--zeta2", o.hyper.zeta2, "Core prior rate (td)");
}

fs::path ensure_out(const std::string& out) {
  fs::path p(out);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

Mat transpose(const Mat& m) {
  Mat t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

// Fitted factors in the heatmap orientations: theta as samples x clusters,
// phi transposed to features x pathways, cores as clusters x pathways.
void write_fitted_factors(const fs::path& dir, const Chain& chain) {
  const auto& data = chain.data();
  if (chain.kind() == ModelKind::mf) {
    save_matrix((dir / "theta1_hat.csv").string(), chain.mf().theta1, data.row_labels);
    save_matrix((dir / "theta2_hat.csv").string(), chain.mf().theta2, data.row_labels);
    save_matrix((dir / "phi_hat.csv").string(), transpose(chain.mf().phi), data.col_labels);
  } else {
    save_matrix((dir / "theta_hat.csv").string(), chain.td().theta, data.row_labels);
    save_matrix((dir / "phi_hat.csv").string(), transpose(chain.td().phi), data.col_labels);
    save_matrix((dir / "pi1_hat.csv").string(), chain.td().pi1);
    save_matrix((dir / "pi2_hat.csv").string(), chain.td().pi2);
  }
}

int run_simulate(const CommonOpts& common, const ModelOpts& model, std::size_t I,
                 std::size_t J) {
  fs::path out = ensure_out(common.out);
  RngStream rng(common.seed);
  DncbParams params = DncbParams::make(model.eps1, model.eps2, J, model.cj);
  json summary = {{"command", "simulate"}, {"model", model.model}, {"I", I},
                  {"J", J},                {"K", model.K},         {"seed", common.seed}};
  if (model.kind() == ModelKind::mf) {
    SimulatedMf sim = simulate_mf(model.hyper, params, I, model.K, J, rng);
    save_matrix((out / "beta.csv").string(), sim.data.values);
    save_matrix((out / "theta1.csv").string(), sim.factors.theta1);
    save_matrix((out / "theta2.csv").string(), sim.factors.theta2);
    save_matrix((out / "phi.csv").string(), sim.factors.phi);
  } else {
    SimulatedTd sim = simulate_td(model.hyper, params, I, model.C, model.K, J, rng);
    save_matrix((out / "beta.csv").string(), sim.data.values);
    save_matrix((out / "theta.csv").string(), sim.factors.theta);
    save_matrix((out / "phi.csv").string(), sim.factors.phi);
    save_matrix((out / "pi1.csv").string(), sim.factors.pi1);
    save_matrix((out / "pi2.csv").string(), sim.factors.pi2);
    summary["C"] = model.C;
  }
  write_json(out / "summary.json", summary);
  std::cout << "simulate: wrote " << (out / "beta.csv").string() << "\n";
  return 0;
}

struct FitOpts {
  std::size_t iterations = 1000, burnin = 200, thin = 5, chains = 1, jobs = 1;
  double holdout = 0.0;
  std::uint64_t mask_seed = 1;
  std::string mask_file;
  std::string init = "moment";
  std::string resume;
};

int run_fit(const CommonOpts& common, const DataOpts& data_opts, const ModelOpts& model,
            const FitOpts& fit) {
  if (!(fit.iterations > fit.burnin))
    throw std::runtime_error("fit: --iters must exceed --burnin");
  if (fit.thin == 0) throw std::runtime_error("fit: --thin must be >= 1");
  if (!fit.resume.empty() && fit.chains != 1)
    throw std::runtime_error("fit: --resume requires --chains 1");
  fs::path out = ensure_out(common.out);

  LoadedMatrix loaded = load_matrix(data_opts.path, data_opts.load_options());
  if (loaded.clamped > 0)
    std::cerr << "warning: clamped " << loaded.clamped
              << " out-of-range values into the open unit interval\n";
  BoundedMatrix data = std::move(loaded.matrix);

  std::optional<ChainCheckpoint> resume_ck;
  if (!fit.resume.empty()) resume_ck = load_checkpoint(fit.resume);

  std::optional<HeldoutMask> mask;
  if (resume_ck) {
    // the mask travels with the checkpoint so a resumed run continues the
    // exact original problem
    if (resume_ck->mask.rows() != data.rows() || resume_ck->mask.cols() != data.cols())
      throw std::runtime_error("fit: checkpoint mask shape does not match the data");
    HeldoutMask m;
    m.held = MaskMat(data.rows(), data.cols(), 0);
    for (std::size_t t = 0; t < m.held.size(); ++t)
      m.held.data()[t] = resume_ck->mask.data()[t] ? 0 : 1;  // stored mask: 1 = observed
    if (m.count() > 0) mask = std::move(m);
  } else if (!fit.mask_file.empty()) {
    HeldoutMask m;
    m.held = load_mask(fit.mask_file);
    m.seed = 0;
    m.fraction = static_cast<double>(m.count()) / static_cast<double>(m.held.size());
    mask = std::move(m);
  } else if (fit.holdout > 0.0) {
    mask = make_mask(data.rows(), data.cols(), fit.holdout, fit.mask_seed);
  }
  if (mask) {
    data = apply_mask(data, *mask);
    save_mask((out / "mask.csv").string(), mask->held);
  }

  DncbParams params = DncbParams::make(model.eps1, model.eps2, data.cols(), model.cj);
  InitStrategy init = fit.init == "prior" ? InitStrategy::prior : InitStrategy::moment;

  json chains_json = json::array();
  std::vector<std::uint64_t> chain_seeds(fit.chains);
  std::vector<std::string> chain_errors(fit.chains);

  auto run_one_chain = [&](std::size_t c) {
    try {
      fs::path cdir = out / ("chain_" + std::to_string(c));
      fs::create_directories(cdir);
      Chain chain(data, model.kind(), model.C, model.K, params, model.hyper, chain_seeds[c],
                  init);

      std::size_t already = 0;
      if (resume_ck) {
        const ChainCheckpoint& ck = *resume_ck;
        if (ck.kind != model.kind())
          throw std::runtime_error("fit: checkpoint model kind mismatch");
        AugmentedState st = chain.state();
        st.y1 = ck.y1;
        st.y2 = ck.y2;
        st.gamma1 = ck.gamma1;
        st.gamma2 = ck.gamma2;
        chain.restore(ck.factors, std::move(st), ck.rng_state, ck.iteration);
        already = ck.iteration;
        if (already >= fit.iterations)
          throw std::runtime_error("fit: checkpoint already at or past --iters");
      }

      PosteriorSamples samples;
      samples.kind = chain.kind();
      for (std::size_t s = already + 1; s <= fit.iterations; ++s) {
        chain.sweep();
        if (s > fit.burnin && (s - fit.burnin) % fit.thin == 0) {
          if (samples.kind == ModelKind::mf)
            samples.mf.push_back(chain.mf());
          else
            samples.td.push_back(chain.td());
        }
      }

      save_checkpoint((cdir / "checkpoint.bin").string(), make_checkpoint(chain));
      save_samples((cdir / "samples.bin").string(), SavedSamples{std::move(samples), params});
      write_fitted_factors(cdir, chain);
    } catch (const std::exception& e) {
      chain_errors[c] = e.what();
    }
  };

  for (std::size_t c = 0; c < fit.chains; ++c)
    chain_seeds[c] = RngStream(common.seed).child(c).seed();
  // chains are fully independent; each owns its seed and output directory
  if (fit.jobs <= 1 || fit.chains == 1) {
    for (std::size_t c = 0; c < fit.chains; ++c) run_one_chain(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < std::min(fit.jobs, fit.chains); ++w)
      workers.emplace_back([&] {
        for (;;) {
          std::size_t c = next.fetch_add(1);
          if (c >= fit.chains) return;
          run_one_chain(c);
        }
      });
    for (auto& th : workers) th.join();
  }
  for (std::size_t c = 0; c < fit.chains; ++c) {
    if (!chain_errors[c].empty())
      throw std::runtime_error("fit: chain " + std::to_string(c) + ": " + chain_errors[c]);
    chains_json.push_back({{"chain", c},
                           {"seed", chain_seeds[c]},
                           {"dir", (out / ("chain_" + std::to_string(c))).string()}});
  }

  json summary = {{"command", "fit"},
                  {"model", model.model},
                  {"data", data_opts.path},
                  {"I", data.rows()},
                  {"J", data.cols()},
                  {"C", model.C},
                  {"K", model.K},
                  {"iterations", fit.iterations},
                  {"burnin", fit.burnin},
                  {"thin", fit.thin},
                  {"seed", common.seed},
                  {"init", fit.init},
                  {"holdout", fit.holdout},
                  {"chains", chains_json}};
  write_json(out / "summary.json", summary);
  std::cout << "fit: wrote " << fit.chains << " chain(s) under " << out.string() << "\n";
  return 0;
}

int run_ppd(const CommonOpts& common, const DataOpts& data_opts,
            const std::string& samples_path, const std::string& mask_path) {
  fs::path out = ensure_out(common.out);
  BoundedMatrix data = load_matrix(data_opts.path, data_opts.load_options()).matrix;
  SavedSamples saved = load_samples(samples_path);
  HeldoutMask mask;
  mask.held = load_mask(mask_path);
  mask.fraction = static_cast<double>(mask.count()) / static_cast<double>(mask.held.size());
  double log_ppd = log_rescaled_ppd(data, mask, saved.samples, saved.params);
  double ppd = std::exp(log_ppd);
  json j = {{"command", "ppd"},
            {"data", data_opts.path},
            {"samples", samples_path},
            {"held_out_cells", mask.count()},
            {"S", saved.samples.size()},
            {"log_rescaled_ppd", log_ppd},
            {"rescaled_ppd", ppd}};
  write_json(out / "ppd.json", j);
  std::cout << "rescaled PPD = " << ppd << " (log " << log_ppd << ", "
            << mask.count() << " held-out cells, S=" << saved.samples.size() << ")\n";
  return 0;
}

int run_ppc(const CommonOpts& common, const DataOpts& data_opts, const ModelOpts& model,
            std::size_t reps) {
  fs::path out = ensure_out(common.out);
  BoundedMatrix data = load_matrix(data_opts.path, data_opts.load_options()).matrix;
  PriorPredictiveConfig cfg;
  cfg.kind = model.kind();
  cfg.C = model.C;
  cfg.K = model.K;
  cfg.hyper = model.hyper;
  cfg.eps1 = model.eps1;
  cfg.eps2 = model.eps2;
  cfg.col_rate = model.cj;
  RngStream rng(common.seed);
  auto [mean, sd] = prior_predictive_mse(data, cfg, reps, rng);
  json j = {{"command", "ppc"}, {"data", data_opts.path}, {"reps", reps},
            {"mse_mean", mean}, {"mse_sd", sd},           {"seed", common.seed}};
  write_json(out / "ppc.json", j);
  std::cout << "prior predictive MSE = " << mean << " +- " << sd << " (" << reps
            << " reps)\n";
  return 0;
}

std::vector<std::size_t> parse_range(const std::string& spec) {
  auto colon = spec.find(':');
  std::vector<std::size_t> vals;
  if (colon == std::string::npos) {
    vals.push_back(std::stoull(spec));
    return vals;
  }
  std::size_t lo = std::stoull(spec.substr(0, colon));
  std::size_t hi = std::stoull(spec.substr(colon + 1));
  if (hi < lo) throw std::runtime_error("bad range: " + spec);
  for (std::size_t v = lo; v <= hi; ++v) vals.push_back(v);
  return vals;
}

std::vector<std::size_t> load_labels(const std::string& path) {
  Mat raw = load_table(path);
  std::vector<std::size_t> labels;
  labels.reserve(raw.size());
  for (double v : raw.data()) labels.push_back(static_cast<std::size_t>(std::llround(v)));
  return labels;
}

int run_stability(const CommonOpts& common, const DataOpts& data_opts,
                  const ModelOpts& model, const std::string& c_range,
                  const std::string& k_range, std::size_t iterations, std::size_t jobs,
                  const std::string& ref_samples, const std::string& ref_features) {
  fs::path out = ensure_out(common.out);
  BoundedMatrix data = load_matrix(data_opts.path, data_opts.load_options()).matrix;
  StabilityConfig cfg;
  cfg.kind = model.kind();
  cfg.c_values = parse_range(c_range);
  cfg.k_values = parse_range(k_range);
  cfg.hyper = model.hyper;
  cfg.eps1 = model.eps1;
  cfg.eps2 = model.eps2;
  cfg.col_rate = model.cj;
  cfg.iterations = iterations;
  cfg.seed = common.seed;
  cfg.jobs = jobs;
  if (!ref_samples.empty()) cfg.reference_sample_labels = load_labels(ref_samples);
  if (!ref_features.empty()) cfg.reference_feature_labels = load_labels(ref_features);

  StabilityReport report = stability_sweep(data, cfg);

  std::ofstream csv(out / "stability.csv");
  csv << "C,K,kl_samples,kl_features,ok\n";
  json cells = json::array();
  for (const auto& cell : report.cells) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%d\n", cell.C, cell.K,
                  cell.kl_samples, cell.kl_features, cell.ok ? 1 : 0);
    csv << buf;
    cells.push_back({{"C", cell.C},
                     {"K", cell.K},
                     {"kl_samples", cell.kl_samples},
                     {"kl_features", cell.kl_features},
                     {"ok", cell.ok},
                     {"error", cell.error}});
  }
  write_json(out / "stability.json",
             json{{"command", "stability"}, {"seed", common.seed}, {"cells", cells}});
  std::cout << "stability: " << report.cells.size() << " grid cells written to "
            << (out / "stability.csv").string() << "\n";
  return 0;
}

int run_preprocess(const CommonOpts& common, const std::string& biseq_path,
                   const std::string& beta_path, const DataOpts& flags, double s0,
                   std::size_t top_n) {
  fs::path out = ensure_out(common.out);
  BoundedMatrix m;
  std::size_t clamped = 0;
  if (!biseq_path.empty()) {
    Mat counts = load_table(biseq_path, flags.load_options());
    m = biseq_table_to_beta(counts, s0);
  } else if (!beta_path.empty()) {
    LoadedMatrix loaded = load_matrix(beta_path, flags.load_options());
    clamped = loaded.clamped;
    m = std::move(loaded.matrix);
  } else {
    throw std::runtime_error("preprocess: provide --biseq or --beta");
  }
  if (clamped > 0) std::cerr << "warning: clamped " << clamped << " values\n";
  if (top_n > 0) m = variance_filter(m, top_n);
  save_matrix((out / "beta.csv").string(), m.values, m.row_labels, m.col_labels);
  json j = {{"command", "preprocess"},
            {"rows", m.rows()},
            {"cols", m.cols()},
            {"clamped", clamped},
            {"s0", s0},
            {"top", top_n}};
  write_json(out / "preprocess.json", j);
  std::cout << "preprocess: wrote " << m.rows() << "x" << m.cols() << " matrix to "
            << (out / "beta.csv").string() << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Doubly non-central beta matrix factorization"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config/--seed appear after the subcommand
  app.set_config("--config", "", "Config file (key=value; command-line flags win)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Draw a synthetic dataset with ground truth");
  CommonOpts sim_common;
  ModelOpts sim_model;
  std::size_t sim_I = 20, sim_J = 30;
  add_common(sim, sim_common);
  add_model(sim, sim_model);
  sim->add_option("--I", sim_I, "Rows (samples)");
  sim->add_option("--J", sim_J, "Columns (features)");

  // fit
  auto* fit = app.add_subcommand("fit", "Run Gibbs chains and write checkpoints + factors");
  CommonOpts fit_common;
  DataOpts fit_data;
  ModelOpts fit_model;
  FitOpts fit_opts;
  add_common(fit, fit_common);
  add_data(fit, fit_data);
  add_model(fit, fit_model);
  fit->add_option("--iters", fit_opts.iterations, "Total Gibbs sweeps");
  fit->add_option("--burnin", fit_opts.burnin, "Burn-in sweeps");
  fit->add_option("--thin", fit_opts.thin, "Thinning interval");
  fit->add_option("--chains", fit_opts.chains, "Independent chains");
  fit->add_option("--jobs", fit_opts.jobs, "Worker threads for multi-chain runs");
  auto* holdout_opt =
      fit->add_option("--holdout", fit_opts.holdout, "Held-out fraction in (0,1)");
  fit->add_option("--mask-seed", fit_opts.mask_seed, "Seed for the held-out mask");
  fit->add_option("--mask", fit_opts.mask_file, "Existing 0/1 mask CSV (1 = held out)")
      ->excludes(holdout_opt);
  fit->add_option("--init", fit_opts.init, "Initialization: prior or moment")
      ->check(CLI::IsMember({"prior", "moment"}));
  fit->add_option("--resume", fit_opts.resume, "Continue from a checkpoint file");

  // ppd
  auto* ppd = app.add_subcommand("ppd", "Rescaled held-out pointwise predictive density");
  CommonOpts ppd_common;
  DataOpts ppd_data;
  std::string ppd_samples, ppd_mask;
  add_common(ppd, ppd_common);
  add_data(ppd, ppd_data);
  ppd->add_option("--samples", ppd_samples, "samples.bin from fit")->required();
  ppd->add_option("--mask", ppd_mask, "Held-out mask CSV")->required();

  // ppc
  auto* ppc = app.add_subcommand("ppc", "Prior predictive MSE check");
  CommonOpts ppc_common;
  DataOpts ppc_data;
  ModelOpts ppc_model;
  std::size_t ppc_reps = 1000;
  add_common(ppc, ppc_common);
  add_data(ppc, ppc_data);
  add_model(ppc, ppc_model);
  ppc->add_option("--reps", ppc_reps, "Prior predictive repetitions");

  // stability
  auto* stab = app.add_subcommand("stability", "Co-clustering stability sweep over (C, K)");
  CommonOpts stab_common;
  DataOpts stab_data;
  ModelOpts stab_model;
  std::string stab_c = "2:8", stab_k = "4", stab_ref_s, stab_ref_f;
  std::size_t stab_iters = 200, stab_jobs = 1;
  add_common(stab, stab_common);
  add_data(stab, stab_data);
  add_model(stab, stab_model, false);
  stab->add_option("--c-range", stab_c, "C range, lo:hi or single value");
  stab->add_option("--k-range", stab_k, "K range, lo:hi or single value");
  stab->add_option("--iters", stab_iters, "Sweeps per grid cell");
  stab->add_option("--jobs", stab_jobs, "Worker threads over grid cells");
  stab->add_option("--ref-samples", stab_ref_s, "External sample labels CSV (reference)");
  stab->add_option("--ref-features", stab_ref_f, "External feature labels CSV (reference)");

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "Beta-value conversion and variance filter");
  CommonOpts prep_common;
  DataOpts prep_flags;
  std::string prep_biseq, prep_beta;
  double prep_s0 = 0.1;
  std::size_t prep_top = 0;
  add_common(prep, prep_common);
  prep->add_option("--biseq", prep_biseq,
                   "Read-count table with paired columns d_1,u_1,d_2,u_2,...");
  prep->add_option("--beta", prep_beta, "Beta-value table (clamp + filter only)");
  prep->add_flag("--header", prep_flags.header, "First row holds column labels");
  prep->add_flag("--rownames", prep_flags.rownames, "First column holds row labels");
  prep->add_flag("--tsv", prep_flags.tsv, "Tab-separated input");
  prep->add_option("--s0", prep_s0, "Smoothing term for read counts");
  prep->add_option("--top", prep_top, "Keep top-N columns by variance (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim->parsed()) return run_simulate(sim_common, sim_model, sim_I, sim_J);
    if (fit->parsed()) return run_fit(fit_common, fit_data, fit_model, fit_opts);
    if (ppd->parsed()) return run_ppd(ppd_common, ppd_data, ppd_samples, ppd_mask);
    if (ppc->parsed()) return run_ppc(ppc_common, ppc_data, ppc_model, ppc_reps);
    if (stab->parsed())
      return run_stability(stab_common, stab_data, stab_model, stab_c, stab_k, stab_iters,
                           stab_jobs, stab_ref_s, stab_ref_f);
    if (prep->parsed())
      return run_preprocess(prep_common, prep_biseq, prep_beta, prep_flags, prep_s0,
                            prep_top);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace dncb
