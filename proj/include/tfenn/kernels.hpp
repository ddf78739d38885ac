// SPDX-License-Identifier: Apache-2.0
//
// Batched forward and reverse passes.
//
// Parameters are materialized into block matrices once per call, then the
// batch is cut into fixed chunks of samples that are run as small GEMMs.
// Chunks are assigned to a fixed set of accumulation slots and the slots are
// summed in index order, so results are bit-identical with or without
// OpenMP and for any thread count.
#pragma once

#include <cstddef>
#include <span>

#include "tfenn/network.hpp"

namespace tfenn {

enum class Exec { kSerial, kParallel };

/// Samples are stored sample-major: value (s, t, c) lives at
/// data[(s * steps + t) * io + c]. When `index` is set, batch sample b reads
/// stored sample index[b].
struct BatchView {
  const double* x = nullptr;
  const double* y = nullptr;
  std::size_t n = 0;
  int steps = 1;
  int io = 3;
  const std::size_t* index = nullptr;
};

/// Weighted squared error averaged over samples,
///   L = (1/n) sum_s sum_t sum_c w_c (f(x)_stc - y_stc)^2,
/// and its gradient written into `grad` (overwritten). Empty weights mean
/// all ones. The rotation penalty is not included.
double loss_and_gradient(const Network& net, std::span<const double> params, const BatchView& batch,
                         std::span<const double> weights, std::span<double> grad, Exec exec = Exec::kParallel);

/// Model outputs for every sample of the batch (batch.y is ignored), in the
/// same sample-major layout.
void predict(const Network& net, std::span<const double> params, const BatchView& batch, double* out,
             Exec exec = Exec::kParallel);

int max_threads();

}  // namespace tfenn
