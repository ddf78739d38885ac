// SPDX-License-Identifier: Apache-2.0
//
// Tensorial activations: a scalar function applied to the eigenvalues of a
// symmetric tensor, Phi(sigma)(U diag(l) U^T) = U diag(sigma(l)) U^T.
//
// The reverse-mode rule uses the first divided differences of sigma
// (Daleckii-Krein), which stay finite when eigenvalues coincide.
#pragma once

#include <array>
#include <string>
#include <string_view>

#include "tfenn/tensor_core.hpp"

namespace tfenn {

enum class ActivationKind { kTanh, kLogistic, kSoftplus, kIdentity };

ActivationKind parse_activation(std::string_view name);
std::string_view to_string(ActivationKind kind);

struct ScalarActivation {
  ActivationKind kind = ActivationKind::kTanh;

  double value(double t) const;
  double derivative(double t) const;
};

/// Relative gap below which two eigenvalues are treated as equal in the
/// divided-difference matrix.
inline constexpr double kDegeneracyTol = 1e-7;

SymTensor apply_tensorial(ScalarActivation sigma, const SymTensor& s);
SymTensor vjp_tensorial(ScalarActivation sigma, const SymTensor& s, const SymTensor& cotangent);

/// Eigen-data kept from the forward pass: d eigenvalues followed by the
/// column-major d x d eigenvector matrix.
struct Spectrum {
  std::array<double, 12> data{};
};

/// Kernel entry points on raw Mandel arrays of length mandel_size(dim).
void apply_tensorial_mandel(ScalarActivation sigma, int dim, const double* in, double* out, Spectrum* spectrum);
void vjp_tensorial_mandel(ScalarActivation sigma, int dim, const Spectrum& spectrum, const double* cotangent,
                          double* out);

}  // namespace tfenn
