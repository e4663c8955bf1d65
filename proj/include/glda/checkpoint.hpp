#pragma once

// Text checkpoint of ModelConfig + GlobalState.  Floating-point values are
// written as C99 hexadecimal literals so a save/load round trip is bit-exact.
//
//   glda-checkpoint 1
//   K <int>  F <int>  D <int>
//   alpha <hex>  s <hex>  v <hex>
//   m <F hex>
//   omega <F*F hex, row-major>
//   t <int>
//   component <k> qs <hex> qv <hex> qm <F hex> qomega <F*F hex>   (K times)
//   end

#include "common.hpp"
#include "inference.hpp"
#include "niw.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace glda {

struct Checkpoint {
  ModelConfig config;
  GlobalState state;
};

namespace detail {

inline std::string hex(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

inline void write_values(std::ostream& os, const double* p, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) os << ' ' << hex(p[i]);
}

class TokenReader {
public:
  explicit TokenReader(std::istream& is) : is_(is) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) throw IoError("checkpoint truncated");
    return w;
  }
  void expect(const std::string& key) {
    const std::string w = word();
    if (w != key) throw IoError("checkpoint: expected '" + key + "', found '" + w + "'");
  }
  double real() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') throw IoError("checkpoint: bad number '" + w + "'");
    return v;
  }
  long integer() {
    const std::string w = word();
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') throw IoError("checkpoint: bad integer '" + w + "'");
    return v;
  }
  void fill(double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] = real();
  }

private:
  std::istream& is_;
};

// Row-major flattening of a column-major Eigen matrix.
inline void write_matrix(std::ostream& os, const Matrix& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  write_values(os, rm.data(), rm.size());
}

inline Matrix read_matrix(TokenReader& in, int F) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(F, F);
  in.fill(rm.data(), rm.size());
  return rm;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const ModelConfig& c, const GlobalState& s) {
  using detail::hex;
  os << "glda-checkpoint 1\n";
  os << "K " << c.K << " F " << c.F << " D " << c.corpus_size_D << '\n';
  os << "alpha " << hex(c.alpha) << " s " << hex(c.prior_s) << " v " << hex(c.prior_v) << '\n';
  os << 'm';
  detail::write_values(os, c.prior_m.data(), c.prior_m.size());
  os << "\nomega";
  detail::write_matrix(os, c.prior_omega);
  os << "\nt " << s.t << '\n';
  for (int k = 0; k < s.K(); ++k) {
    const auto& p = s.components[k];
    os << "component " << k << " qs " << hex(p.qs) << " qv " << hex(p.qv) << " qm";
    detail::write_values(os, p.qm.data(), p.qm.size());
    os << " qomega";
    detail::write_matrix(os, p.qomega);
    os << '\n';
  }
  os << "end\n";
}

inline Checkpoint read_checkpoint(std::istream& is) {
  detail::TokenReader in(is);
  in.expect("glda-checkpoint");
  if (const long version = in.integer(); version != 1)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint cp;
  ModelConfig& c = cp.config;
  in.expect("K");
  c.K = static_cast<int>(in.integer());
  in.expect("F");
  c.F = static_cast<int>(in.integer());
  in.expect("D");
  c.corpus_size_D = in.integer();
  if (c.K < 1 || c.F < 1) throw IoError("checkpoint: invalid K or F");
  in.expect("alpha");
  c.alpha = in.real();
  in.expect("s");
  c.prior_s = in.real();
  in.expect("v");
  c.prior_v = in.real();
  in.expect("m");
  c.prior_m.resize(c.F);
  in.fill(c.prior_m.data(), c.F);
  in.expect("omega");
  c.prior_omega = detail::read_matrix(in, c.F);
  in.expect("t");
  cp.state.t = in.integer();
  for (int k = 0; k < c.K; ++k) {
    in.expect("component");
    if (in.integer() != k) throw IoError("checkpoint: components out of order");
    NiwPosterior p;
    in.expect("qs");
    p.qs = in.real();
    in.expect("qv");
    p.qv = in.real();
    in.expect("qm");
    p.qm.resize(c.F);
    in.fill(p.qm.data(), c.F);
    in.expect("qomega");
    p.qomega = detail::read_matrix(in, c.F);
    cp.state.components.push_back(std::move(p));
  }
  in.expect("end");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint holds an invalid config: ") + e.what());
  }
  return cp;
}

inline void save_checkpoint(const std::string& path, const ModelConfig& c, const GlobalState& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_checkpoint(os, c, s);
  if (!os) throw IoError("failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace glda
