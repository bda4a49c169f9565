// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#include "corda/serialize.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace corda {

static_assert(std::endian::native == std::endian::little,
              "artifact files are little-endian; port the readers before use");

namespace {

constexpr std::uint32_t kVersion = 1;
// Refuse payload sizes that cannot come from a desk-scale run.
constexpr std::uint64_t kMaxElements = 1ull << 28;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
    path_ = path;
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed on '" + path_.string() + "'");
  }
  void magic(const char tag[9]) { bytes(tag, 8); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void doubles(const std::vector<double>& v) { bytes(v.data(), v.size() * sizeof(double)); }
  void matrix(const Matrix& m) { doubles(m.storage()); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path.string() + "' for reading");
    path_ = path;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw IoError("truncated file '" + path_.string() + "'");
    }
  }
  void magic(const char tag[9]) {
    char got[8];
    bytes(got, 8);
    if (std::memcmp(got, tag, 8) != 0) {
      throw IoError("bad magic in '" + path_.string() + "', expected " + tag);
    }
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  std::vector<double> doubles(std::uint64_t n) {
    if (n > kMaxElements) throw IoError("implausible payload size in '" + path_.string() + "'");
    std::vector<double> v(n);
    bytes(v.data(), n * sizeof(double));
    return v;
  }
  Matrix matrix(int rows, int cols) {
    return Matrix(rows, cols,
                  doubles(static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols)));
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) throw IoError("implausible string size in '" + path_.string() + "'");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void version() {
    const std::uint32_t v = u32();
    if (v != kVersion) {
      throw IoError("unsupported version " + std::to_string(v) + " in '" + path_.string() + "'");
    }
  }
  void expect_end() {
    char extra;
    in_.read(&extra, 1);
    if (in_.gcount() != 0) throw IoError("trailing bytes in '" + path_.string() + "'");
  }
  int dim() {
    const std::uint32_t v = u32();
    if (v < 1 || v > (1u << 20)) {
      throw IoError("implausible dimension in '" + path_.string() + "'");
    }
    return static_cast<int>(v);
  }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

void require_finite(const Matrix& m, const std::filesystem::path& path) {
  if (!m.all_finite()) throw IoError("non-finite payload in '" + path.string() + "'");
}

}  // namespace

void save_covariance(const CovarianceStat& stat, const std::filesystem::path& path) {
  Writer w(path);
  w.magic("CORDACOV");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(stat.c.rows()));
  w.u64(stat.columns_seen);
  w.f64(stat.damping_coeff);
  w.matrix(stat.c);
}

CovarianceStat load_covariance(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("CORDACOV");
  r.version();
  const int d = r.dim();
  CovarianceStat stat;
  stat.columns_seen = r.u64();
  stat.damping_coeff = r.f64();
  stat.c = r.matrix(d, d);
  r.expect_end();
  require_finite(stat.c, path);
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (std::abs(stat.c(i, j) - stat.c(j, i)) > 1e-12) {
        throw IoError("asymmetric covariance in '" + path.string() + "'");
      }
    }
  }
  return stat;
}

void save_factors(const ContextFactors& f, const std::filesystem::path& path) {
  Writer w(path);
  w.magic("CORDAFAC");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(f.method));
  w.u32(static_cast<std::uint32_t>(f.u.rows()));
  w.u32(static_cast<std::uint32_t>(f.vhat_t.cols()));
  w.u32(static_cast<std::uint32_t>(f.sigma.size()));
  w.str(f.source_context);
  w.matrix(f.u);
  w.doubles(f.sigma);
  w.matrix(f.vhat_t);
}

ContextFactors load_factors(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("CORDAFAC");
  r.version();
  const std::uint32_t method = r.u32();
  if (method > 2) throw IoError("bad method tag in '" + path.string() + "'");
  const int d_out = r.dim();
  const int d_in = r.dim();
  const int rank = r.dim();
  if (rank > std::min(d_out, d_in)) {
    throw IoError("rank exceeds min dimension in '" + path.string() + "'");
  }
  ContextFactors f;
  f.method = static_cast<DecomposeMethod>(method);
  f.source_context = r.str();
  f.u = r.matrix(d_out, rank);
  f.sigma = r.doubles(rank);
  f.vhat_t = r.matrix(rank, d_in);
  r.expect_end();
  require_finite(f.u, path);
  require_finite(f.vhat_t, path);
  for (std::size_t i = 0; i < f.sigma.size(); ++i) {
    if (!std::isfinite(f.sigma[i]) || f.sigma[i] < 0.0 ||
        (i > 0 && f.sigma[i] > f.sigma[i - 1])) {
      throw IoError("sigma not non-negative descending in '" + path.string() + "'");
    }
  }
  return f;
}

void save_adapter(const DecomposedLayer& layer, const std::filesystem::path& path) {
  Writer w(path);
  w.magic("CORDAADP");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(layer.mode));
  w.u32(static_cast<std::uint32_t>(layer.r));
  w.u32(static_cast<std::uint32_t>(layer.w_residual.rows()));
  w.u32(static_cast<std::uint32_t>(layer.w_residual.cols()));
  w.str(layer.layer_id);
  w.matrix(layer.w_residual);
  w.matrix(layer.b);
  w.matrix(layer.a);
}

DecomposedLayer load_adapter(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("CORDAADP");
  r.version();
  const std::uint32_t mode = r.u32();
  if (mode > 3) throw IoError("bad mode tag in '" + path.string() + "'");
  const int rank = r.dim();
  const int d_out = r.dim();
  const int d_in = r.dim();
  if (rank > std::min(d_out, d_in)) {
    throw IoError("rank exceeds min dimension in '" + path.string() + "'");
  }
  DecomposedLayer layer;
  layer.mode = static_cast<AdapterMode>(mode);
  layer.r = rank;
  layer.layer_id = r.str();
  layer.w_residual = r.matrix(d_out, d_in);
  layer.b = r.matrix(d_out, rank);
  layer.a = r.matrix(rank, d_in);
  r.expect_end();
  require_finite(layer.w_residual, path);
  require_finite(layer.b, path);
  require_finite(layer.a, path);
  return layer;
}

void save_network(const Network& net, const std::filesystem::path& path) {
  Writer w(path);
  w.magic("CORDANET");
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(net.nonlinearity()));
  w.u64(net.init_seed());
  w.u32(static_cast<std::uint32_t>(net.layer_dims().size()));
  for (int d : net.layer_dims()) w.u32(static_cast<std::uint32_t>(d));
  for (int i = 0; i < net.layer_count(); ++i) {
    const Layer& l = net.layer(i);
    w.u32(l.is_adapter ? 1u : 0u);
    if (l.is_adapter) {
      w.u32(static_cast<std::uint32_t>(l.adapter.mode));
      w.u32(static_cast<std::uint32_t>(l.adapter.r));
      w.str(l.adapter.layer_id);
      w.matrix(l.adapter.w_residual);
      w.matrix(l.adapter.b);
      w.matrix(l.adapter.a);
    } else {
      w.matrix(l.weight);
    }
    w.doubles(l.bias);
  }
}

Network load_network(const std::filesystem::path& path) {
  Reader r(path);
  r.magic("CORDANET");
  r.version();
  const std::uint32_t nonlin = r.u32();
  if (nonlin > 2) throw IoError("bad nonlinearity tag in '" + path.string() + "'");
  const std::uint64_t seed = r.u64();
  const std::uint32_t n_dims = r.u32();
  if (n_dims < 2 || n_dims > 64) throw IoError("implausible layer count in '" + path.string() + "'");
  std::vector<int> dims(n_dims);
  for (std::uint32_t i = 0; i < n_dims; ++i) dims[i] = r.dim();
  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i + 1 < n_dims; ++i) {
    const int d_in = dims[i];
    const int d_out = dims[i + 1];
    Layer layer;
    const std::uint32_t kind = r.u32();
    if (kind > 1) throw IoError("bad layer kind in '" + path.string() + "'");
    layer.is_adapter = kind == 1;
    if (layer.is_adapter) {
      const std::uint32_t mode = r.u32();
      if (mode > 3) throw IoError("bad mode tag in '" + path.string() + "'");
      const int rank = r.dim();
      if (rank > std::min(d_out, d_in)) {
        throw IoError("rank exceeds min dimension in '" + path.string() + "'");
      }
      layer.adapter.mode = static_cast<AdapterMode>(mode);
      layer.adapter.r = rank;
      layer.adapter.layer_id = r.str();
      layer.adapter.w_residual = r.matrix(d_out, d_in);
      layer.adapter.b = r.matrix(d_out, rank);
      layer.adapter.a = r.matrix(rank, d_in);
      require_finite(layer.adapter.w_residual, path);
      require_finite(layer.adapter.b, path);
      require_finite(layer.adapter.a, path);
    } else {
      layer.weight = r.matrix(d_out, d_in);
      require_finite(layer.weight, path);
    }
    layer.bias = r.doubles(d_out);
    for (double v : layer.bias) {
      if (!std::isfinite(v)) throw IoError("non-finite payload in '" + path.string() + "'");
    }
    layers.push_back(std::move(layer));
  }
  r.expect_end();
  return Network::from_parts(std::move(dims), static_cast<Nonlinearity>(nonlin), seed,
                             std::move(layers));
}

}  // namespace corda
