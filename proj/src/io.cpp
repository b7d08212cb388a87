#include "dncb/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dncb {

namespace {

char delim_of(TableFormat f) { return f == TableFormat::csv ? ',' : '\t'; }

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& tok, std::size_t row, std::size_t col) {
  const char* b = tok.data();
  const char* e = b + tok.size();
  while (b < e && (*b == ' ' || *b == '\r')) ++b;
  while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\r')) --e;
  double v = 0.0;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw std::runtime_error("parse error at row " + std::to_string(row) + ", column " +
                             std::to_string(col) + ": '" + tok + "'");
  return v;
}

struct RawTable {
  std::vector<std::vector<double>> rows;
  std::vector<std::string> row_labels, col_labels;
};

RawTable read_table(const std::string& path, const LoadOptions& opt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const char delim = delim_of(opt.format);
  RawTable t;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto toks = split_line(line, delim);
    if (lineno == 1 && opt.header) {
      t.col_labels.assign(toks.begin() + (opt.rownames ? 1 : 0), toks.end());
      continue;
    }
    std::size_t c0 = 0;
    if (opt.rownames) {
      t.row_labels.push_back(toks.empty() ? "" : toks[0]);
      c0 = 1;
    }
    std::vector<double> row;
    row.reserve(toks.size() - c0);
    for (std::size_t c = c0; c < toks.size(); ++c)
      row.push_back(parse_double(toks[c], lineno, c + 1));
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw std::runtime_error("ragged table at row " + std::to_string(lineno) + " in " +
                               path);
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw std::runtime_error("empty table: " + path);
  return t;
}

Mat table_to_mat(const RawTable& t) {
  Mat m(t.rows.size(), t.rows[0].size());
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.rows[i].size(); ++j) m(i, j) = t.rows[i][j];
  return m;
}

void write_doubles_17g(std::ofstream& out, const Mat& m, char delim,
                       const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels) {
  char buf[40];
  if (!col_labels.empty()) {
    if (!row_labels.empty()) out << "id" << delim;
    for (std::size_t j = 0; j < col_labels.size(); ++j) {
      if (j) out << delim;
      out << col_labels[j];
    }
    out << '\n';
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (!row_labels.empty()) out << row_labels[i] << delim;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << delim;
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace

LoadedMatrix load_matrix(const std::string& path, const LoadOptions& opt) {
  RawTable t = read_table(path, opt);
  LoadedMatrix out;
  Mat m = table_to_mat(t);
  for (auto& x : m.data()) {
    double c = clamp_beta(x);
    if (c != x) ++out.clamped;
    x = c;
  }
  out.matrix.values = std::move(m);
  out.matrix.mask = MaskMat(out.matrix.values.rows(), out.matrix.values.cols(), 1);
  out.matrix.row_labels = std::move(t.row_labels);
  out.matrix.col_labels = std::move(t.col_labels);
  return out;
}

Mat load_table(const std::string& path, const LoadOptions& opt) {
  return table_to_mat(read_table(path, opt));
}

void save_matrix(const std::string& path, const Mat& m,
                 const std::vector<std::string>& row_labels,
                 const std::vector<std::string>& col_labels, TableFormat format) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_doubles_17g(out, m, delim_of(format), row_labels, col_labels);
  if (!out) throw std::runtime_error("write failed: " + path);
}

void save_mask(const std::string& path, const MaskMat& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << static_cast<int>(m(i, j));
    }
    out << '\n';
  }
}

MaskMat load_mask(const std::string& path) {
  Mat raw = load_table(path, {TableFormat::csv, false, false});
  MaskMat m(raw.rows(), raw.cols(), 0);
  for (std::size_t t = 0; t < raw.size(); ++t)
    m.data()[t] = raw.data()[t] != 0.0 ? 1 : 0;
  return m;
}

double biseq_to_beta(const ReadCountPair& r) {
  if (!(r.s0 > 0.0)) throw std::domain_error("biseq_to_beta: s0 must be positive");
  if (r.d < 0 || r.u < 0) throw std::domain_error("biseq_to_beta: counts must be >= 0");
  return (r.s0 + static_cast<double>(r.d)) /
         (2.0 * r.s0 + static_cast<double>(r.d) + static_cast<double>(r.u));
}

BoundedMatrix biseq_table_to_beta(const Mat& counts, double s0) {
  if (counts.cols() % 2 != 0)
    throw std::invalid_argument(
        "biseq_table_to_beta: expected paired columns d_1,u_1,d_2,u_2,...");
  const std::size_t I = counts.rows(), J = counts.cols() / 2;
  Mat beta(I, J);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      ReadCountPair r;
      r.d = static_cast<std::int64_t>(std::llround(counts(i, 2 * j)));
      r.u = static_cast<std::int64_t>(std::llround(counts(i, 2 * j + 1)));
      r.s0 = s0;
      beta(i, j) = clamp_beta(biseq_to_beta(r));
    }
  return BoundedMatrix::from_values(std::move(beta));
}

BoundedMatrix variance_filter(const BoundedMatrix& m, std::size_t top_n) {
  const std::size_t I = m.rows(), J = m.cols();
  if (top_n > J) throw std::invalid_argument("variance_filter: top_n exceeds column count");
  std::vector<double> var(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < I; ++i) mean += m.values(i, j);
    mean /= static_cast<double>(I);
    double acc = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
      double d = m.values(i, j) - mean;
      acc += d * d;
    }
    var[j] = I > 1 ? acc / static_cast<double>(I - 1) : 0.0;
  }
  std::vector<std::size_t> order(J);
  for (std::size_t j = 0; j < J; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return var[a] > var[b];  // stable: ties keep the lower index first
  });
  std::vector<std::uint8_t> keep(J, 0);
  for (std::size_t t = 0; t < top_n; ++t) keep[order[t]] = 1;

  BoundedMatrix out;
  out.values = Mat(I, top_n);
  out.mask = MaskMat(I, top_n);
  if (!m.col_labels.empty()) out.col_labels.reserve(top_n);
  out.row_labels = m.row_labels;
  std::size_t jj = 0;
  for (std::size_t j = 0; j < J; ++j) {
    if (!keep[j]) continue;
    for (std::size_t i = 0; i < I; ++i) {
      out.values(i, jj) = m.values(i, j);
      out.mask(i, jj) = m.mask(i, j);
    }
    if (!m.col_labels.empty()) out.col_labels.push_back(m.col_labels[j]);
    ++jj;
  }
  return out;
}

// ---------------------------------------------------------------------------
// binary container: magic, version, payload length, payload, crc32(payload)

std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int b = 0; b < 8; ++b) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = ~seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
  return ~c;
}

namespace {

constexpr char kMagic[8] = {'D', 'N', 'C', 'B', 'F', 'A', 'C', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kPayloadCheckpoint = 1;
constexpr std::uint32_t kPayloadSamples = 2;

struct Writer {
  std::string buf;
  void bytes(const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  template <typename T>
  void grid(const Grid<T>& g) {
    pod<std::uint64_t>(g.rows());
    pod<std::uint64_t>(g.cols());
    bytes(g.data().data(), g.data().size() * sizeof(T));
  }
  void vec(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    bytes(v.data(), v.size() * sizeof(double));
  }
};

struct Reader {
  const char* p;
  const char* end;
  void bytes(void* out, std::size_t n) {
    if (static_cast<std::size_t>(end - p) < n)
      throw std::runtime_error("checkpoint: truncated payload");
    std::memcpy(out, p, n);
    p += n;
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    auto n = pod<std::uint64_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  template <typename T>
  Grid<T> grid() {
    auto r = pod<std::uint64_t>();
    auto c = pod<std::uint64_t>();
    Grid<T> g(r, c);
    bytes(g.data().data(), g.data().size() * sizeof(T));
    return g;
  }
  std::vector<double> vec() {
    auto n = pod<std::uint64_t>();
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return v;
  }
};

void write_container(const std::string& path, std::uint32_t payload_kind,
                     const std::string& payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, 8);
  std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&payload_kind), 4);
  std::uint64_t len = payload.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::uint32_t crc = crc32(payload.data(), payload.size());
  out.write(reinterpret_cast<const char*>(&crc), 4);
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_container(const std::string& path, std::uint32_t expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path + ": not a dncb binary file");
  std::uint32_t version = 0, kind = 0;
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&kind), 4);
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in) throw std::runtime_error(path + ": truncated header");
  if (version != kVersion)
    throw std::runtime_error(path + ": incompatible file version " + std::to_string(version) +
                             " (expected " + std::to_string(kVersion) + ")");
  if (kind != expected_kind) throw std::runtime_error(path + ": unexpected payload kind");
  std::string payload(len, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(len));
  std::uint32_t crc = 0;
  in.read(reinterpret_cast<char*>(&crc), 4);
  if (!in) throw std::runtime_error(path + ": truncated file");
  if (crc != crc32(payload.data(), payload.size()))
    throw std::runtime_error(path + ": checksum mismatch (corrupt file)");
  return payload;
}

void write_mf(Writer& w, const MfFactors& f) {
  w.grid(f.theta1);
  w.grid(f.theta2);
  w.grid(f.phi);
}
MfFactors read_mf(Reader& r) {
  MfFactors f;
  f.theta1 = r.grid<double>();
  f.theta2 = r.grid<double>();
  f.phi = r.grid<double>();
  return f;
}
void write_td(Writer& w, const TdFactors& f) {
  w.grid(f.theta);
  w.grid(f.phi);
  w.grid(f.pi1);
  w.grid(f.pi2);
}
TdFactors read_td(Reader& r) {
  TdFactors f;
  f.theta = r.grid<double>();
  f.phi = r.grid<double>();
  f.pi1 = r.grid<double>();
  f.pi2 = r.grid<double>();
  return f;
}

}  // namespace

ChainCheckpoint make_checkpoint(const Chain& chain) {
  ChainCheckpoint ck;
  ck.kind = chain.kind();
  ck.iteration = chain.iteration();
  ck.seed = chain.rng().seed();
  ck.params = chain.params();
  ck.hyper = chain.hyper();
  if (ck.kind == ModelKind::mf)
    ck.factors = chain.mf();
  else
    ck.factors = chain.td();
  ck.y1 = chain.state().y1;
  ck.y2 = chain.state().y2;
  ck.gamma1 = chain.state().gamma1;
  ck.gamma2 = chain.state().gamma2;
  ck.mask = chain.data().mask;
  ck.rng_state = chain.rng().save_state();
  return ck;
}

void save_checkpoint(const std::string& path, const ChainCheckpoint& ck) {
  Writer w;
  w.pod<std::uint8_t>(ck.kind == ModelKind::mf ? 0 : 1);
  w.pod<std::uint64_t>(ck.iteration);
  w.pod<std::uint64_t>(ck.seed);
  w.pod<double>(ck.params.eps1);
  w.pod<double>(ck.params.eps2);
  w.vec(ck.params.col_rates);
  for (double h : {ck.hyper.eta1, ck.hyper.eta2, ck.hyper.nu1, ck.hyper.nu2, ck.hyper.zeta1,
                   ck.hyper.zeta2})
    w.pod<double>(h);
  if (ck.kind == ModelKind::mf)
    write_mf(w, std::get<MfFactors>(ck.factors));
  else
    write_td(w, std::get<TdFactors>(ck.factors));
  w.grid(ck.y1);
  w.grid(ck.y2);
  w.grid(ck.gamma1);
  w.grid(ck.gamma2);
  w.grid(ck.mask);
  w.str(ck.rng_state);
  write_container(path, kPayloadCheckpoint, w.buf);
}

ChainCheckpoint load_checkpoint(const std::string& path) {
  std::string payload = read_container(path, kPayloadCheckpoint);
  Reader r{payload.data(), payload.data() + payload.size()};
  ChainCheckpoint ck;
  ck.kind = r.pod<std::uint8_t>() == 0 ? ModelKind::mf : ModelKind::td;
  ck.iteration = r.pod<std::uint64_t>();
  ck.seed = r.pod<std::uint64_t>();
  ck.params.eps1 = r.pod<double>();
  ck.params.eps2 = r.pod<double>();
  ck.params.col_rates = r.vec();
  ck.hyper.eta1 = r.pod<double>();
  ck.hyper.eta2 = r.pod<double>();
  ck.hyper.nu1 = r.pod<double>();
  ck.hyper.nu2 = r.pod<double>();
  ck.hyper.zeta1 = r.pod<double>();
  ck.hyper.zeta2 = r.pod<double>();
  if (ck.kind == ModelKind::mf)
    ck.factors = read_mf(r);
  else
    ck.factors = read_td(r);
  ck.y1 = r.grid<std::int64_t>();
  ck.y2 = r.grid<std::int64_t>();
  ck.gamma1 = r.grid<double>();
  ck.gamma2 = r.grid<double>();
  ck.mask = r.grid<std::uint8_t>();
  ck.rng_state = r.str();
  return ck;
}

void save_samples(const std::string& path, const SavedSamples& s) {
  Writer w;
  w.pod<std::uint8_t>(s.samples.kind == ModelKind::mf ? 0 : 1);
  w.pod<double>(s.params.eps1);
  w.pod<double>(s.params.eps2);
  w.vec(s.params.col_rates);
  w.pod<std::uint64_t>(s.samples.size());
  if (s.samples.kind == ModelKind::mf)
    for (const auto& f : s.samples.mf) write_mf(w, f);
  else
    for (const auto& f : s.samples.td) write_td(w, f);
  write_container(path, kPayloadSamples, w.buf);
}

SavedSamples load_samples(const std::string& path) {
  std::string payload = read_container(path, kPayloadSamples);
  Reader r{payload.data(), payload.data() + payload.size()};
  SavedSamples s;
  s.samples.kind = r.pod<std::uint8_t>() == 0 ? ModelKind::mf : ModelKind::td;
  s.params.eps1 = r.pod<double>();
  s.params.eps2 = r.pod<double>();
  s.params.col_rates = r.vec();
  auto n = r.pod<std::uint64_t>();
  for (std::uint64_t t = 0; t < n; ++t) {
    if (s.samples.kind == ModelKind::mf)
      s.samples.mf.push_back(read_mf(r));
    else
      s.samples.td.push_back(read_td(r));
  }
  return s;
}

}  // namespace dncb
