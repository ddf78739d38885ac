// SPDX-License-Identifier: Apache-2.0
#include "tfenn/data.hpp"

#include <Eigen/Dense>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace tfenn {

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > n) throw std::out_of_range("dataset slice out of range");
  Dataset out = *this;
  out.n = count;
  const auto len = static_cast<std::ptrdiff_t>(sample_len());
  const auto b = static_cast<std::ptrdiff_t>(begin);
  const auto c = static_cast<std::ptrdiff_t>(count);
  out.inputs.assign(inputs.begin() + b * len, inputs.begin() + (b + c) * len);
  out.outputs.assign(outputs.begin() + b * len, outputs.begin() + (b + c) * len);
  return out;
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
  Dataset out = *this;
  out.n = indices.size();
  out.inputs.clear();
  out.outputs.clear();
  for (std::size_t i : indices) {
    if (i >= n) throw std::out_of_range("dataset index out of range");
    const auto in = input(i), o = output(i);
    out.inputs.insert(out.inputs.end(), in.begin(), in.end());
    out.outputs.insert(out.outputs.end(), o.begin(), o.end());
  }
  return out;
}

void Dataset::validate() const {
  check_dim(dim);
  if (steps < 1) throw IoError("dataset steps must be positive");
  if (!sequence && steps != 1) throw IoError("pair datasets have exactly one step");
  if (inputs.size() != n * sample_len() || outputs.size() != n * sample_len())
    throw IoError("dataset arrays do not match the header shape");
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  const auto b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

double parse_value(const std::string& tok, std::size_t line) {
  const std::string t = trim(tok);
  if (t.empty()) throw IoError("empty value on line " + std::to_string(line));
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) throw IoError("malformed number '" + t + "' on line " + std::to_string(line));
  if (!std::isfinite(v)) throw IoError("non-finite value on line " + std::to_string(line));
  return v;
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& ds) {
  ds.validate();
  if (ds.generator.find_first_of(" \t\n") != std::string::npos)
    throw IoError("generator string must not contain whitespace");
  for (double v : ds.inputs)
    if (!std::isfinite(v)) throw IoError("refusing to write non-finite input");
  for (double v : ds.outputs)
    if (!std::isfinite(v)) throw IoError("refusing to write non-finite output");
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) throw IoError("cannot open '" + path + "' for writing");
  std::fprintf(f, "tfenn-dataset dim=%d kind=%s steps=%d n=%zu seed=%llu generator=%s\n", ds.dim,
               ds.sequence ? "sequence" : "pair", ds.steps, ds.n, static_cast<unsigned long long>(ds.seed),
               ds.generator.empty() ? "unknown" : ds.generator.c_str());
  const std::size_t len = ds.sample_len();
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t k = 0; k < len; ++k) std::fprintf(f, "%s%.17g", k ? "," : "", ds.inputs[i * len + k]);
    for (std::size_t k = 0; k < len; ++k) std::fprintf(f, ",%.17g", ds.outputs[i * len + k]);
    std::fputc('\n', f);
  }
  const bool bad = std::ferror(f) != 0;
  if (std::fclose(f) != 0 || bad) throw IoError("failed writing '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw IoError("dataset '" + path + "' is empty");
  std::istringstream hs(line);
  std::string magic;
  hs >> magic;
  if (magic != "tfenn-dataset") throw IoError("'" + path + "' is not a dataset file");
  std::map<std::string, std::string> kv;
  for (std::string tok; hs >> tok;) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw IoError("malformed header entry '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  for (const char* key : {"dim", "kind", "steps", "n", "seed", "generator"})
    if (!kv.count(key)) throw IoError(std::string("dataset header is missing '") + key + "'");

  Dataset ds;
  try {
    ds.dim = std::stoi(kv["dim"]);
    ds.steps = std::stoi(kv["steps"]);
    const long long n = std::stoll(kv["n"]);
    if (n < 0) throw IoError("negative sample count");
    ds.n = static_cast<std::size_t>(n);
    ds.seed = std::stoull(kv["seed"]);
  } catch (const std::logic_error&) {
    throw IoError("malformed numeric field in dataset header");
  }
  if (kv["kind"] != "pair" && kv["kind"] != "sequence") throw IoError("dataset kind must be pair or sequence");
  ds.sequence = kv["kind"] == "sequence";
  ds.generator = kv["generator"];
  if (ds.dim != 2 && ds.dim != 3) throw IoError("dataset dim must be 2 or 3");
  if (ds.steps < 1 || (!ds.sequence && ds.steps != 1)) throw IoError("invalid step count in dataset header");

  const std::size_t len = ds.sample_len();
  ds.inputs.reserve(ds.n * len);
  ds.outputs.reserve(ds.n * len);
  std::size_t lineno = 1;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (rows == ds.n) throw IoError("dataset has more rows than its header declares");
    std::vector<double> vals;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      vals.push_back(parse_value(line.substr(start, comma - start), lineno));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (vals.size() != 2 * len)
      throw IoError("row " + std::to_string(lineno) + " has " + std::to_string(vals.size()) + " values, expected " +
                    std::to_string(2 * len));
    ds.inputs.insert(ds.inputs.end(), vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(len));
    ds.outputs.insert(ds.outputs.end(), vals.begin() + static_cast<std::ptrdiff_t>(len), vals.end());
    ++rows;
  }
  if (rows != ds.n)
    throw IoError("dataset is truncated: expected " + std::to_string(ds.n) + " rows, found " + std::to_string(rows));
  return ds;
}

SymTensor neo_hookean_stress(const NeoHookeanParams& p, const SymTensor& c) {
  const SmallMat cm = c.matrix();
  const Eigen::LLT<SmallMat> llt(cm);
  if (llt.info() != Eigen::Success) throw std::domain_error("C must be symmetric positive definite");
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const SmallMat c_inv = llt.solve(SmallMat::Identity(c.dim(), c.dim()));
  SymTensor s = SymTensor::from_matrix(c_inv) * (0.5 * p.lambda * log_det - p.mu);
  s += SymTensor::identity(c.dim()) * p.mu;
  return s;
}

Dataset gen_neo_hookean(const NeoHookeanParams& p, std::size_t n, double eig_low, double eig_high,
                        std::uint64_t seed, int dim) {
  check_dim(dim);
  if (n < 1) throw std::invalid_argument("need at least one sample");
  if (!(p.lambda > 0 && p.mu > 0)) throw std::invalid_argument("neo-Hookean parameters must be positive");
  Dataset ds;
  ds.dim = dim;
  ds.n = n;
  ds.seed = seed;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "neo-hookean(lambda=%.17g,mu=%.17g,eig=%.17g:%.17g)", p.lambda, p.mu, eig_low,
                eig_high);
  ds.generator = buf;
  const int m = ds.io();
  ds.inputs.resize(n * m);
  ds.outputs.resize(n * m);
  const Rng base(seed);
  const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) {
    Rng rng = base.split(static_cast<std::uint64_t>(i));
    const SmallMat f = random_deformation(dim, eig_low, eig_high, rng);
    const SymTensor c = SymTensor::from_matrix(SmallMat(f.transpose() * f));
    const SymTensor s = neo_hookean_stress(p, c);
    for (int k = 0; k < m; ++k) {
      ds.inputs[i * m + k] = c.mandel()[k];
      ds.outputs[i * m + k] = s.mandel()[k];
    }
  }
  return ds;
}

J2Params J2Params::from_young(double young, double poisson, double yield_stress, double hardening) {
  J2Params p;
  p.lambda = young * poisson / ((1 + poisson) * (1 - 2 * poisson));
  p.mu = young / (2 * (1 + poisson));
  p.yield_stress = yield_stress;
  p.hardening = hardening;
  p.validate();
  return p;
}

void J2Params::validate() const {
  if (!(lambda > 0 && mu > 0 && yield_stress > 0 && hardening >= 0))
    throw std::invalid_argument("J2 parameters: lambda, mu, yield stress must be positive and H >= 0");
}

J2Material::J2Material(J2Params p) : p_(p) { p_.validate(); }

SymTensor J2Material::step(const SymTensor& strain, StepInfo* info) {
  if (strain.dim() != 2) throw DimensionError("J2 material takes in-plane strains");
  Eigen::Matrix3d eps = Eigen::Matrix3d::Zero();
  eps.topLeftCorner<2, 2>() = strain.matrix();
  const Eigen::Matrix3d ee = eps - plastic_;
  Eigen::Matrix3d sigma = p_.lambda * ee.trace() * Eigen::Matrix3d::Identity() + 2 * p_.mu * ee;
  const Eigen::Matrix3d dev = sigma - sigma.trace() / 3.0 * Eigen::Matrix3d::Identity();
  const double norm = dev.norm();
  const double radius = std::sqrt(2.0 / 3.0) * (p_.yield_stress + p_.hardening * alpha_);
  const double f = norm - radius;
  StepInfo local;
  if (f > 0) {
    const double dg = f / (2 * p_.mu + 2.0 / 3.0 * p_.hardening);
    const Eigen::Matrix3d nrm = dev / norm;
    plastic_ += dg * nrm;
    alpha_ += std::sqrt(2.0 / 3.0) * dg;
    sigma -= 2 * p_.mu * dg * nrm;
    const Eigen::Matrix3d dev_new = sigma - sigma.trace() / 3.0 * Eigen::Matrix3d::Identity();
    local.plastic = true;
    local.delta_gamma = dg;
    local.dissipation = (sigma.array() * (dg * nrm).array()).sum();
    local.yield_residual =
        std::abs(dev_new.norm() - std::sqrt(2.0 / 3.0) * (p_.yield_stress + p_.hardening * alpha_));
  }
  if (info != nullptr) *info = local;
  return SymTensor::from_matrix(SmallMat(sigma.topLeftCorner<2, 2>()));
}

std::vector<double> random_strain_path(int steps, double amplitude, Rng& rng) {
  if (steps < 2) throw std::invalid_argument("sequences need at least two steps");
  constexpr int kTerms = 3;
  std::vector<double> path(static_cast<std::size_t>(steps) * 3, 0.0);
  for (int c = 0; c < 3; ++c) {
    std::array<double, kTerms> a{}, w{};
    double sum = 0;
    for (int k = 0; k < kTerms; ++k) {
      a[k] = rng.uniform(-1.0, 1.0);
      w[k] = rng.uniform(0.5, 3.0);
      sum += std::abs(a[k]);
    }
    for (int k = 0; k < kTerms; ++k) a[k] /= sum;
    for (int t = 0; t < steps; ++t) {
      double v = 0;
      for (int k = 0; k < kTerms; ++k) v += a[k] * std::sin(w[k] * std::numbers::pi * (t + 1) / steps);
      path[static_cast<std::size_t>(t) * 3 + c] = amplitude * v;
    }
  }
  return path;
}

Dataset gen_j2_sequences(const J2Params& p, std::size_t n, int steps, double amplitude, std::uint64_t seed) {
  p.validate();
  if (n < 1) throw std::invalid_argument("need at least one sample");
  if (steps < 2) throw std::invalid_argument("sequences need at least two steps");
  if (!(amplitude > 0)) throw std::invalid_argument("strain amplitude must be positive");
  Dataset ds;
  ds.dim = 2;
  ds.steps = steps;
  ds.sequence = true;
  ds.n = n;
  ds.seed = seed;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "j2-plane-strain(lambda=%.17g,mu=%.17g,sy=%.17g,H=%.17g,amp=%.17g)", p.lambda, p.mu,
                p.yield_stress, p.hardening, amplitude);
  ds.generator = buf;
  const std::size_t len = ds.sample_len();
  ds.inputs.resize(n * len);
  ds.outputs.resize(n * len);
  const Rng base(seed);
  const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < count; ++i) {
    Rng rng = base.split(static_cast<std::uint64_t>(i));
    const auto path = random_strain_path(steps, amplitude, rng);
    J2Material mat(p);
    for (int t = 0; t < steps; ++t) {
      const std::size_t o = static_cast<std::size_t>(i) * len + static_cast<std::size_t>(t) * 3;
      const SymTensor s = mat.step(SymTensor::from_mandel(2, {path.data() + t * 3, 3}));
      for (int k = 0; k < 3; ++k) {
        ds.inputs[o + k] = path[static_cast<std::size_t>(t) * 3 + k];
        ds.outputs[o + k] = s.mandel()[k];
      }
    }
  }
  return ds;
}

}  // namespace tfenn
