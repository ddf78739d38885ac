// SPDX-License-Identifier: Apache-2.0
//
// Serial per-sample implementation of the model equations, written directly
// against the tensor primitives. Used as an oracle for the batched kernels
// and as the baseline in the benchmark.
#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "tfenn/kernels.hpp"
#include "tfenn/network.hpp"

namespace tfenn::reference {

/// One feature vector per neuron (length m: Mandel size, or 1 for scalar).
using Features = std::vector<Eigen::VectorXd>;

Features dense_forward(const Network& net, std::span<const double> params, std::size_t layer, const Features& x);

struct GruStep {
  Features h;
  std::vector<double> r, z;
};

GruStep gru_cell_forward(const Network& net, std::span<const double> params, std::size_t layer, const Features& x,
                         const Features& h_prev);

/// Outputs of one sample (steps x io values, step-major).
std::vector<double> forward(const Network& net, std::span<const double> params, std::span<const double> x,
                            int steps);

/// Same contract as tfenn::loss_and_gradient.
double loss_and_gradient(const Network& net, std::span<const double> params, const BatchView& batch,
                         std::span<const double> weights, std::span<double> grad);

}  // namespace tfenn::reference
