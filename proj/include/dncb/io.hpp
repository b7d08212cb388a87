#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dncb/evaluate.hpp"
#include "dncb/gibbs.hpp"
#include "dncb/model.hpp"

namespace dncb {

enum class TableFormat { csv, tsv };

struct LoadOptions {
  TableFormat format = TableFormat::csv;
  bool header = false;    // first row holds column labels
  bool rownames = false;  // first column holds row labels
};

struct LoadedMatrix {
  BoundedMatrix matrix;
  std::size_t clamped = 0;  // number of values clamped into the open support
};

// Parse a numeric table into a BoundedMatrix, clamping values into
// [1e-6, 1-1e-6]. Parse errors carry 1-based row/column locations.
LoadedMatrix load_matrix(const std::string& path, const LoadOptions& opt = {});

// Raw numeric table without clamping (masks, counts, labels).
Mat load_table(const std::string& path, const LoadOptions& opt = {});

// Write a matrix at 17 significant digits (bit-stable round trip).
void save_matrix(const std::string& path, const Mat& m,
                 const std::vector<std::string>& row_labels = {},
                 const std::vector<std::string>& col_labels = {},
                 TableFormat format = TableFormat::csv);
void save_mask(const std::string& path, const MaskMat& m);
MaskMat load_mask(const std::string& path);

// Methylated/unmethylated read counts with additive smoothing.
struct ReadCountPair {
  std::int64_t d = 0;  // methylated reads
  std::int64_t u = 0;  // unmethylated reads
  double s0 = 0.1;     // smoothing, > 0
};

// (s0 + d) / (2 s0 + d + u), strictly inside (0,1).
double biseq_to_beta(const ReadCountPair& r);

// Convert a paired-column count table (d_1,u_1,d_2,u_2,...) to beta values.
BoundedMatrix biseq_table_to_beta(const Mat& counts, double s0);

// Keep the top_n columns by sample variance; original order preserved among
// the kept columns, ties broken toward the lower column index.
BoundedMatrix variance_filter(const BoundedMatrix& m, std::size_t top_n);

// Serializable snapshot of a chain.
struct ChainCheckpoint {
  ModelKind kind = ModelKind::td;
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
  DncbParams params;
  Hyperparams hyper;
  std::variant<MfFactors, TdFactors> factors;
  CountMat y1, y2;
  Mat gamma1, gamma2;
  MaskMat mask;
  std::string rng_state;
};

ChainCheckpoint make_checkpoint(const Chain& chain);

// Binary container layout (little-endian):
//   bytes 0..7   magic "DNCBFAC\0"
//   bytes 8..11  u32 format version (currently 1; mismatches are refused)
//   bytes 12..15 u32 payload kind (1 = checkpoint, 2 = samples)
//   bytes 16..23 u64 payload length
//   payload bytes
//   u32 CRC32 of the payload (corruption is detected on load)
// Checkpoint payload, in order: kind u8 (0 = mf, 1 = td), iteration u64,
// seed u64, eps1/eps2 f64, col_rates (u64 length + f64s), the six
// hyperparameters f64, factor matrices (each as u64 rows, u64 cols, raw
// values; mf: theta1, theta2, phi; td: theta, phi, pi1, pi2), y1, y2 (i64
// grids), gamma1, gamma2 (f64 grids), observation mask (u8 grid,
// 1 = observed), and the RNG state as a length-prefixed string.
void save_checkpoint(const std::string& path, const ChainCheckpoint& ck);
ChainCheckpoint load_checkpoint(const std::string& path);

// Posterior factor snapshots with the params needed to evaluate them.
struct SavedSamples {
  PosteriorSamples samples;
  DncbParams params;
};

void save_samples(const std::string& path, const SavedSamples& s);
SavedSamples load_samples(const std::string& path);

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0);

}  // namespace dncb
