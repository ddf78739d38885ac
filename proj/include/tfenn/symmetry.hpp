// SPDX-License-Identifier: Apache-2.0
//
// Material symmetry classes and the parameter subspaces they induce.
//
// A weight tensor W commutes with the group action, W:(Q^T x Q) = Q^T (W:x) Q,
// exactly when its Mandel matrix commutes with the Mandel matrix of the
// action for every group element. A bias b (or a gate weight) must be fixed
// by the action, b = Q^T b Q. The bases below are written down directly in
// the natural frame of each class and are orthonormal under the Frobenius
// inner product of Mandel matrices / vectors.
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tfenn/tensor_core.hpp"

namespace tfenn {

enum class SymmetryKind { kNone, kTriclinic, kOrthotropic, kCubic, kIsotropic };

SymmetryKind parse_symmetry(std::string_view name);
std::string_view to_string(SymmetryKind kind);

struct SymmetryClass {
  SymmetryKind kind = SymmetryKind::kNone;
  int dim = 2;

  friend bool operator==(const SymmetryClass&, const SymmetryClass&) = default;
};

struct WeightBasis {
  SymmetryClass cls;
  std::vector<MandelMatrix> elements;
};

struct BiasBasis {
  SymmetryClass cls;
  std::vector<SymTensor> elements;
};

/// Cached, read-only.
const WeightBasis& weight_basis(SymmetryClass cls);
const BiasBasis& bias_basis(SymmetryClass cls);

/// Finite generator set used to check the equivariance conditions. For
/// isotropy this is a fixed sample of 16 rotations plus a reflection.
/// Throws for kNone.
std::vector<Rotation> group_generators(SymmetryClass cls);

/// Random element of the class's group. Finite groups draw uniformly over
/// all proper and improper elements; isotropy draws a random proper
/// rotation; triclinic and none return the identity.
Rotation sample_group_element(SymmetryClass cls, Rng& rng);

/// All elements of the finite symmetry group (identity only for
/// triclinic/none). Throws for isotropic.
std::vector<Rotation> finite_group_elements(SymmetryClass cls);

/// Orthogonal projection onto span(weight_basis(cls)).
MandelMatrix project_weight(const MandelMatrix& k, SymmetryClass cls);

/// Raw isotropic generators: I (x) I and twice the symmetric identity, so that
/// (a I(x)I + b Isym2) : x = a tr(x) I + 2 b x.
MandelMatrix isotropic_lambda_term(int dim);
MandelMatrix isotropic_mu_term(int dim);

}  // namespace tfenn
