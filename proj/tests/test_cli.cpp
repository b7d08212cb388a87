#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dncb/io.hpp"

using namespace dncb;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dncb_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
  std::string cmd = std::string(DNCB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

}  // namespace

TEST_CASE("simulate is bit-reproducible across invocations") {
  TempDir tmp;
  std::string base = "simulate --model td --I 20 --J 30 --C 2 --K 3 --seed 1 --out ";
  REQUIRE(run_cli(base + tmp.sub("a")) == 0);
  REQUIRE(run_cli(base + tmp.sub("b")) == 0);
  for (const char* f : {"beta.csv", "theta.csv", "phi.csv", "pi1.csv", "pi2.csv",
                        "summary.json"}) {
    CHECK(slurp(tmp.sub("a") + "/" + f) == slurp(tmp.sub("b") + "/" + f));
    CHECK(!slurp(tmp.sub("a") + "/" + f).empty());
  }
  // a different seed changes the data
  REQUIRE(run_cli("simulate --model td --I 20 --J 30 --C 2 --K 3 --seed 2 --out " +
                  tmp.sub("c")) == 0);
  CHECK(slurp(tmp.sub("a") + "/beta.csv") != slurp(tmp.sub("c") + "/beta.csv"));
}

TEST_CASE("fit then ppd yields a finite positive predictive density") {
  TempDir tmp;
  REQUIRE(run_cli("simulate --model td --I 15 --J 20 --C 2 --K 2 --seed 3 --out " +
                  tmp.sub("sim")) == 0);
  REQUIRE(run_cli("fit --data " + tmp.sub("sim") + "/beta.csv --model td --C 2 --K 2 "
                  "--iters 60 --burnin 20 --thin 4 --holdout 0.1 --mask-seed 5 --seed 7 "
                  "--out " + tmp.sub("fit")) == 0);
  REQUIRE(run_cli("ppd --data " + tmp.sub("sim") + "/beta.csv --samples " + tmp.sub("fit") +
                  "/chain_0/samples.bin --mask " + tmp.sub("fit") + "/mask.csv --out " +
                  tmp.sub("ppd")) == 0);
  std::string j = slurp(tmp.sub("ppd") + "/ppd.json");
  CHECK(j.find("rescaled_ppd") != std::string::npos);
  // crude check that the value is a positive number
  auto pos = j.find("\"rescaled_ppd\":");
  REQUIRE(pos != std::string::npos);
  double v = std::stod(j.substr(pos + 16));
  CHECK(v > 0.0);
  CHECK(std::isfinite(v));
}

TEST_CASE("fit ignores perturbations of held-out cells end to end") {
  TempDir tmp;
  REQUIRE(run_cli("simulate --model td --I 10 --J 12 --C 2 --K 2 --seed 11 --out " +
                  tmp.sub("sim")) == 0);
  // craft a fixed mask and two datasets differing only inside it
  MaskMat mask(10, 12, 0);
  mask(2, 3) = mask(7, 8) = mask(0, 0) = 1;
  save_mask(tmp.sub("mask.csv"), mask);
  Mat data = load_table(tmp.sub("sim") + "/beta.csv");
  save_matrix(tmp.sub("a.csv"), data);
  data(2, 3) = 0.111111;
  data(7, 8) = 0.99;
  data(0, 0) = 0.42;
  save_matrix(tmp.sub("b.csv"), data);

  std::string common = " --model td --C 2 --K 2 --iters 25 --burnin 5 --thin 2 --seed 13 "
                       "--mask " + tmp.sub("mask.csv") + " --out ";
  REQUIRE(run_cli("fit --data " + tmp.sub("a.csv") + common + tmp.sub("fa")) == 0);
  REQUIRE(run_cli("fit --data " + tmp.sub("b.csv") + common + tmp.sub("fb")) == 0);
  for (const char* f : {"chain_0/theta_hat.csv", "chain_0/phi_hat.csv",
                        "chain_0/pi1_hat.csv"}) {
    CHECK(slurp(tmp.sub("fa") + "/" + f) == slurp(tmp.sub("fb") + "/" + f));
  }
}

TEST_CASE("preprocess converts read counts and filters by variance") {
  TempDir tmp;
  // 3 loci as paired columns; locus 2 is constant, loci 1 and 3 vary
  write_text(tmp.sub("counts.csv"),
             "10,0,5,5,0,10\n"
             "0,10,5,5,10,0\n"
             "10,0,5,5,0,10\n"
             "0,10,5,5,9,1\n");
  REQUIRE(run_cli("preprocess --biseq " + tmp.sub("counts.csv") +
                  " --s0 0.1 --top 2 --out " + tmp.sub("prep")) == 0);
  Mat beta = load_table(tmp.sub("prep") + "/beta.csv");
  CHECK(beta.rows() == 4);
  CHECK(beta.cols() == 2);
  for (auto v : beta.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  // the constant middle locus (always d=u) must have been dropped
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(beta(i, j) != 0.5);
}

TEST_CASE("ppc reports a prior predictive mse") {
  TempDir tmp;
  REQUIRE(run_cli("simulate --model td --I 8 --J 10 --C 2 --K 2 --seed 17 --out " +
                  tmp.sub("sim")) == 0);
  REQUIRE(run_cli("ppc --data " + tmp.sub("sim") + "/beta.csv --model td --C 2 --K 2 "
                  "--reps 50 --seed 19 --out " + tmp.sub("ppc")) == 0);
  std::string j = slurp(tmp.sub("ppc") + "/ppc.json");
  CHECK(j.find("mse_mean") != std::string::npos);
}

TEST_CASE("stability writes a grid report") {
  TempDir tmp;
  REQUIRE(run_cli("simulate --model td --I 10 --J 14 --C 2 --K 2 --seed 23 --out " +
                  tmp.sub("sim")) == 0);
  REQUIRE(run_cli("stability --data " + tmp.sub("sim") + "/beta.csv --model td "
                  "--c-range 2:3 --k-range 2 --iters 20 --seed 29 --out " +
                  tmp.sub("stab")) == 0);
  std::string csv = slurp(tmp.sub("stab") + "/stability.csv");
  CHECK(csv.find("C,K,kl_samples,kl_features,ok") != std::string::npos);
  // header + 2 grid cells
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("config file supplies defaults and flags win") {
  TempDir tmp;
  write_text(tmp.sub("cfg.ini"),
             "[simulate]\nmodel=td\nI=6\nJ=8\nC=2\nK=2\nseed=31\n");
  REQUIRE(run_cli("simulate --config " + tmp.sub("cfg.ini") + " --out " + tmp.sub("a")) ==
          0);
  Mat a = load_table(tmp.sub("a") + "/beta.csv");
  CHECK(a.rows() == 6);
  CHECK(a.cols() == 8);
  // --I on the command line overrides the config value
  REQUIRE(run_cli("simulate --config " + tmp.sub("cfg.ini") + " --I 9 --out " +
                  tmp.sub("b")) == 0);
  Mat b = load_table(tmp.sub("b") + "/beta.csv");
  CHECK(b.rows() == 9);
}

TEST_CASE("worker count never changes results") {
  TempDir tmp;
  REQUIRE(run_cli("simulate --model td --I 12 --J 16 --C 2 --K 2 --seed 59 --out " +
                  tmp.sub("sim")) == 0);
  std::string stab = "stability --data " + tmp.sub("sim") + "/beta.csv --model td "
                     "--c-range 2:4 --k-range 2 --iters 15 --seed 61 --out ";
  REQUIRE(run_cli(stab + tmp.sub("s1") + " --jobs 1") == 0);
  REQUIRE(run_cli(stab + tmp.sub("s2") + " --jobs 2") == 0);
  CHECK(slurp(tmp.sub("s1") + "/stability.csv") == slurp(tmp.sub("s2") + "/stability.csv"));

  std::string fit = "fit --data " + tmp.sub("sim") + "/beta.csv --model td --C 2 --K 2 "
                    "--iters 20 --burnin 5 --thin 3 --seed 67 --chains 2 --out ";
  REQUIRE(run_cli(fit + tmp.sub("f1") + " --jobs 1") == 0);
  REQUIRE(run_cli(fit + tmp.sub("f2") + " --jobs 2") == 0);
  for (const char* f : {"chain_0/theta_hat.csv", "chain_1/theta_hat.csv",
                        "chain_1/phi_hat.csv"}) {
    CHECK(slurp(tmp.sub("f1") + "/" + f) == slurp(tmp.sub("f2") + "/" + f));
  }
}

TEST_CASE("bad usage exits nonzero") {
  CHECK(run_cli("") != 0);
  CHECK(run_cli("fit") != 0);                       // missing --data
  CHECK(run_cli("nonsense --flag") != 0);           // unknown subcommand
  CHECK(run_cli("ppd --data missing.csv --samples x --mask y") != 0);
}

TEST_CASE("DNCB_OUT_DIR provides the default output directory") {
  TempDir tmp;
  std::string cmd = std::string("DNCB_OUT_DIR=") + tmp.sub("envout") + " " + DNCB_CLI_PATH +
                    " simulate --model mf --I 4 --J 5 --K 2 --seed 43 >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(rc));
  REQUIRE(WEXITSTATUS(rc) == 0);
  CHECK(fs::exists(tmp.sub("envout") + "/beta.csv"));
}

TEST_CASE("resume restores the held-out mask from the checkpoint") {
  TempDir tmp;
  REQUIRE(run_cli("simulate --model td --I 10 --J 12 --C 2 --K 2 --seed 47 --out " +
                  tmp.sub("sim")) == 0);
  std::string common = " --model td --C 2 --K 2 --seed 53 --init prior --burnin 2 --thin 2 ";
  REQUIRE(run_cli("fit --data " + tmp.sub("sim") + "/beta.csv" + common +
                  "--iters 20 --holdout 0.1 --mask-seed 3 --out " + tmp.sub("straight")) == 0);
  REQUIRE(run_cli("fit --data " + tmp.sub("sim") + "/beta.csv" + common +
                  "--iters 8 --holdout 0.1 --mask-seed 3 --out " + tmp.sub("part")) == 0);
  // the resumed run does not repeat the holdout flags; the mask comes from
  // the checkpoint
  REQUIRE(run_cli("fit --data " + tmp.sub("sim") + "/beta.csv" + common +
                  "--iters 20 --resume " + tmp.sub("part") + "/chain_0/checkpoint.bin" +
                  " --out " + tmp.sub("resumed")) == 0);
  CHECK(slurp(tmp.sub("straight") + "/chain_0/theta_hat.csv") ==
        slurp(tmp.sub("resumed") + "/chain_0/theta_hat.csv"));
  CHECK(slurp(tmp.sub("straight") + "/mask.csv") == slurp(tmp.sub("resumed") + "/mask.csv"));
}

TEST_CASE("resume continues a fit to the same final state") {
  TempDir tmp;
  REQUIRE(run_cli("simulate --model mf --I 8 --J 9 --K 2 --seed 37 --out " +
                  tmp.sub("sim")) == 0);
  std::string common = " --model mf --K 2 --seed 41 --init prior --burnin 4 --thin 3 ";
  REQUIRE(run_cli("fit --data " + tmp.sub("sim") + "/beta.csv" + common +
                  "--iters 30 --out " + tmp.sub("straight")) == 0);
  REQUIRE(run_cli("fit --data " + tmp.sub("sim") + "/beta.csv" + common +
                  "--iters 12 --out " + tmp.sub("part")) == 0);
  REQUIRE(run_cli("fit --data " + tmp.sub("sim") + "/beta.csv" + common +
                  "--iters 30 --resume " + tmp.sub("part") + "/chain_0/checkpoint.bin" +
                  " --out " + tmp.sub("resumed")) == 0);
  CHECK(slurp(tmp.sub("straight") + "/chain_0/theta1_hat.csv") ==
        slurp(tmp.sub("resumed") + "/chain_0/theta1_hat.csv"));
  CHECK(slurp(tmp.sub("straight") + "/chain_0/phi_hat.csv") ==
        slurp(tmp.sub("resumed") + "/chain_0/phi_hat.csv"));
}
