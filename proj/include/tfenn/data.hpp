// SPDX-License-Identifier: Apache-2.0
//
// Datasets and analytic generators: neo-Hookean pairs, the elastoplastic
// sequence generator, and dataset file I/O. The tensegrity generator lives
// in tensegrity.hpp.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tfenn/errors.hpp"
#include "tfenn/tensor_core.hpp"

namespace tfenn {

/// Input/output Mandel vectors, stored sample-major as n x steps x m.
struct Dataset {
  int dim = 2;
  int steps = 1;
  bool sequence = false;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string generator;
  std::vector<double> inputs, outputs;

  int io() const { return mandel_size(dim); }
  std::size_t sample_len() const { return static_cast<std::size_t>(steps) * io(); }
  std::span<const double> input(std::size_t i) const { return {inputs.data() + i * sample_len(), sample_len()}; }
  std::span<const double> output(std::size_t i) const { return {outputs.data() + i * sample_len(), sample_len()}; }

  Dataset slice(std::size_t begin, std::size_t count) const;
  Dataset select(std::span<const std::size_t> indices) const;
  /// Throws if array sizes disagree with the header fields.
  void validate() const;
};

/// Text header line of key=value pairs, then one CSV row per sample (inputs
/// then outputs, steps concatenated), 17 significant digits.
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

struct NeoHookeanParams {
  double lambda = 0.5769;
  double mu = 0.3846;
};

/// S = (lambda/2 log det C - mu) C^-1 + mu I. Throws for non-SPD C.
SymTensor neo_hookean_stress(const NeoHookeanParams& p, const SymTensor& c);

/// Pairs (C = F^T F, S) with F from random_deformation; sample i uses
/// stream split(i) of the seed.
Dataset gen_neo_hookean(const NeoHookeanParams& p, std::size_t n, double eig_low, double eig_high,
                        std::uint64_t seed, int dim = 3);

struct J2Params {
  double lambda = 0.5769;
  double mu = 0.3846;
  double yield_stress = 0.01;
  double hardening = 0.1;

  static J2Params from_young(double young, double poisson, double yield_stress, double hardening);
  void validate() const;
};

/// Plane-strain J2 point material with linear isotropic hardening,
/// integrated by radial return. Strain and stress are in-plane Mandel
/// vectors (3 components); the out-of-plane state is carried internally.
class J2Material {
 public:
  explicit J2Material(J2Params p);

  struct StepInfo {
    bool plastic = false;
    double delta_gamma = 0.0;
    double dissipation = 0.0;         // sigma : delta plastic strain
    double yield_residual = 0.0;      // | |dev sigma| - sqrt(2/3)(sy + H a) | after a plastic step
  };

  /// Advance to total in-plane strain `strain`; returns in-plane stress.
  SymTensor step(const SymTensor& strain, StepInfo* info = nullptr);
  double equivalent_plastic_strain() const { return alpha_; }
  const Eigen::Matrix3d& plastic_strain() const { return plastic_; }
  const J2Params& params() const { return p_; }

 private:
  J2Params p_;
  Eigen::Matrix3d plastic_ = Eigen::Matrix3d::Zero();
  double alpha_ = 0.0;
};

/// Random smooth strain paths: each Mandel component is
/// amplitude * sum_k a_k sin(omega_k pi t / steps), three terms with
/// sum |a_k| = 1 and omega_k in [0.5, 3]. Outputs are J2 stresses.
std::vector<double> random_strain_path(int steps, double amplitude, Rng& rng);
Dataset gen_j2_sequences(const J2Params& p, std::size_t n, int steps, double amplitude, std::uint64_t seed);

}  // namespace tfenn
