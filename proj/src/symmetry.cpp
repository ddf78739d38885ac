// SPDX-License-Identifier: Apache-2.0
#include "tfenn/symmetry.hpp"

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace tfenn {

namespace {

MandelMatrix unit(int m, int r, int c) {
  MandelMatrix k = MandelMatrix::Zero(m, m);
  k(r, c) = 1.0;
  return k;
}

MandelMatrix sym_unit(int m, int r, int c) {
  if (r == c) return unit(m, r, c);
  MandelMatrix k = MandelMatrix::Zero(m, m);
  k(r, c) = k(c, r) = 1.0 / kSqrt2;
  return k;
}

MandelMatrix normalized(MandelMatrix k) { return k / k.norm(); }

std::vector<MandelMatrix> build_weight_basis(SymmetryClass cls) {
  const int d = cls.dim;
  const int m = mandel_size(d);
  std::vector<MandelMatrix> out;
  switch (cls.kind) {
    case SymmetryKind::kNone:
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) out.push_back(unit(m, r, c));
      break;
    case SymmetryKind::kTriclinic:
      for (int r = 0; r < m; ++r)
        for (int c = r; c < m; ++c) out.push_back(sym_unit(m, r, c));
      break;
    case SymmetryKind::kOrthotropic:
      // Normal-normal block is a free symmetric d x d block; shear terms are
      // decoupled and diagonal.
      for (int r = 0; r < d; ++r)
        for (int c = r; c < d; ++c) out.push_back(sym_unit(m, r, c));
      for (int r = d; r < m; ++r) out.push_back(unit(m, r, r));
      break;
    case SymmetryKind::kCubic: {
      MandelMatrix diag = MandelMatrix::Zero(m, m), cross = MandelMatrix::Zero(m, m),
                   shear = MandelMatrix::Zero(m, m);
      for (int r = 0; r < d; ++r) {
        diag(r, r) = 1.0;
        for (int c = 0; c < d; ++c)
          if (c != r) cross(r, c) = 1.0;
      }
      for (int r = d; r < m; ++r) shear(r, r) = 1.0;
      out = {normalized(diag), normalized(cross), normalized(shear)};
      break;
    }
    case SymmetryKind::kIsotropic: {
      const MandelMatrix vol = isotropic_lambda_term(d) / static_cast<double>(d);
      const MandelMatrix dev = MandelMatrix::Identity(m, m) - vol;
      out = {vol, normalized(dev)};
      break;
    }
  }
  return out;
}

std::vector<SymTensor> build_bias_basis(SymmetryClass cls) {
  const int d = cls.dim;
  std::vector<SymTensor> out;
  switch (cls.kind) {
    case SymmetryKind::kNone:
    case SymmetryKind::kTriclinic:
      for (int k = 0; k < mandel_size(d); ++k) {
        SymTensor e(d);
        e.mandel()[k] = 1.0;
        out.push_back(e);
      }
      break;
    case SymmetryKind::kOrthotropic:
      for (int k = 0; k < d; ++k) {
        SymTensor e(d);
        e.mandel()[k] = 1.0;
        out.push_back(e);
      }
      break;
    case SymmetryKind::kCubic:
    case SymmetryKind::kIsotropic:
      out.push_back(SymTensor::identity(d) * (1.0 / std::sqrt(static_cast<double>(d))));
      break;
  }
  return out;
}

SmallMat diag_matrix(std::initializer_list<double> v) {
  SmallMat q = SmallMat::Zero(static_cast<int>(v.size()), static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) q(i, i) = x, ++i;
  return q;
}

// Signed permutation matrices with the given dimension.
std::vector<Rotation> signed_permutations(int d) {
  std::vector<Rotation> out;
  std::array<int, 3> perm{0, 1, 2};
  do {
    if (d == 2 && perm[2] != 2) continue;
    for (int signs = 0; signs < (1 << d); ++signs) {
      SmallMat q = SmallMat::Zero(d, d);
      for (int i = 0; i < d; ++i) q(i, perm[i]) = (signs >> i) & 1 ? -1.0 : 1.0;
      out.emplace_back(q);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

}  // namespace

SymmetryKind parse_symmetry(std::string_view name) {
  if (name == "none") return SymmetryKind::kNone;
  if (name == "triclinic") return SymmetryKind::kTriclinic;
  if (name == "orthotropic") return SymmetryKind::kOrthotropic;
  if (name == "cubic") return SymmetryKind::kCubic;
  if (name == "isotropic") return SymmetryKind::kIsotropic;
  throw std::invalid_argument("unknown symmetry class '" + std::string(name) + "'");
}

std::string_view to_string(SymmetryKind kind) {
  switch (kind) {
    case SymmetryKind::kNone: return "none";
    case SymmetryKind::kTriclinic: return "triclinic";
    case SymmetryKind::kOrthotropic: return "orthotropic";
    case SymmetryKind::kCubic: return "cubic";
    case SymmetryKind::kIsotropic: return "isotropic";
  }
  return "none";
}

const WeightBasis& weight_basis(SymmetryClass cls) {
  check_dim(cls.dim);
  static std::mutex mu;
  static std::map<std::pair<int, int>, WeightBasis> cache;
  std::lock_guard lock(mu);
  auto key = std::make_pair(static_cast<int>(cls.kind), cls.dim);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, WeightBasis{cls, build_weight_basis(cls)}).first;
  return it->second;
}

const BiasBasis& bias_basis(SymmetryClass cls) {
  check_dim(cls.dim);
  static std::mutex mu;
  static std::map<std::pair<int, int>, BiasBasis> cache;
  std::lock_guard lock(mu);
  auto key = std::make_pair(static_cast<int>(cls.kind), cls.dim);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, BiasBasis{cls, build_bias_basis(cls)}).first;
  return it->second;
}

std::vector<Rotation> group_generators(SymmetryClass cls) {
  check_dim(cls.dim);
  const int d = cls.dim;
  switch (cls.kind) {
    case SymmetryKind::kNone:
      throw std::invalid_argument("symmetry class 'none' has no group generators");
    case SymmetryKind::kTriclinic:
      return {Rotation(SmallMat(-SmallMat::Identity(d, d)))};
    case SymmetryKind::kOrthotropic:
      if (d == 2) return {Rotation(diag_matrix({-1, 1})), Rotation(diag_matrix({1, -1}))};
      return {Rotation(diag_matrix({-1, 1, 1})), Rotation(diag_matrix({1, -1, 1}))};
    case SymmetryKind::kCubic:
      if (d == 2) return {Rotation::from_angle(std::numbers::pi / 2), Rotation(diag_matrix({1, -1}))};
      return {Rotation::from_axis_angle(Eigen::Vector3d::UnitZ(), std::numbers::pi / 2),
              Rotation::from_axis_angle(Eigen::Vector3d::UnitX(), std::numbers::pi / 2),
              Rotation(diag_matrix({-1, 1, 1}))};
    case SymmetryKind::kIsotropic: {
      std::vector<Rotation> out;
      Rng rng(0x15070b1cULL);
      for (int i = 0; i < 16; ++i) out.push_back(random_rotation(d, rng));
      out.emplace_back(d == 2 ? diag_matrix({1, -1}) : diag_matrix({1, 1, -1}));
      return out;
    }
  }
  return {};
}

std::vector<Rotation> finite_group_elements(SymmetryClass cls) {
  check_dim(cls.dim);
  const int d = cls.dim;
  switch (cls.kind) {
    case SymmetryKind::kNone:
    case SymmetryKind::kTriclinic:
      return {Rotation::identity(d)};
    case SymmetryKind::kOrthotropic: {
      std::vector<Rotation> out;
      for (int signs = 0; signs < (1 << d); ++signs) {
        SmallMat q = SmallMat::Zero(d, d);
        for (int i = 0; i < d; ++i) q(i, i) = (signs >> i) & 1 ? -1.0 : 1.0;
        out.emplace_back(q);
      }
      return out;
    }
    case SymmetryKind::kCubic:
      return signed_permutations(d);
    case SymmetryKind::kIsotropic:
      throw std::invalid_argument("isotropic symmetry group is not finite");
  }
  return {};
}

Rotation sample_group_element(SymmetryClass cls, Rng& rng) {
  if (cls.kind == SymmetryKind::kIsotropic) return random_rotation(cls.dim, rng);
  if (cls.kind == SymmetryKind::kNone || cls.kind == SymmetryKind::kTriclinic) return Rotation::identity(cls.dim);
  const auto elements = finite_group_elements(cls);
  return elements[rng.below(elements.size())];
}

MandelMatrix project_weight(const MandelMatrix& k, SymmetryClass cls) {
  const auto& basis = weight_basis(cls);
  MandelMatrix out = MandelMatrix::Zero(k.rows(), k.cols());
  for (const auto& b : basis.elements) out += (b.cwiseProduct(k)).sum() * b;
  return out;
}

MandelMatrix isotropic_lambda_term(int dim) {
  const int m = mandel_size(dim);
  MandelMatrix k = MandelMatrix::Zero(m, m);
  k.topLeftCorner(dim, dim).setOnes();
  return k;
}

MandelMatrix isotropic_mu_term(int dim) {
  const int m = mandel_size(dim);
  return 2.0 * MandelMatrix::Identity(m, m);
}

}  // namespace tfenn
