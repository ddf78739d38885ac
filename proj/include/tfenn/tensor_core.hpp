// SPDX-License-Identifier: Apache-2.0
//
// Fixed-dimension symmetric tensor algebra in Mandel (orthonormal) notation.
//
// A symmetric d x d tensor (d = 2 or 3) is stored as its Mandel vector
//   d = 2: (s11, s22, sqrt2 s12)
//   d = 3: (s11, s22, s33, sqrt2 s23, sqrt2 s13, sqrt2 s12)
// so that the Euclidean norm of the vector is the Frobenius norm of the
// tensor, and a minor-symmetric fourth-order tensor acting by double
// contraction is an ordinary m x m matrix (m = 3 or 6).
#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <stdexcept>
#include <string>

#include "tfenn/rng.hpp"

namespace tfenn {

inline constexpr double kSqrt2 = 1.41421356237309504880168872420969808;

/// d x d matrix without heap storage (d <= 3).
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;
/// Vector of length <= 6, used for Mandel vectors and eigenvalues.
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 6, 1>;
/// Mandel representation of a minor-symmetric fourth-order tensor.
using MandelMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 6, 6>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Number of independent components of a symmetric d x d tensor.
constexpr int mandel_size(int dim) { return dim * (dim + 1) / 2; }

/// Mandel slot of component (i, j).
int mandel_index(int dim, int i, int j);

void check_dim(int dim);

class SymTensor {
 public:
  SymTensor() : SymTensor(2) {}
  explicit SymTensor(int dim);

  static SymTensor from_mandel(int dim, std::span<const double> v);
  static SymTensor from_mandel(const SmallVec& v);
  /// Symmetric part of a square matrix.
  static SymTensor from_matrix(const SmallMat& a);
  static SymTensor identity(int dim);
  static SymTensor diagonal(std::span<const double> entries);

  int dim() const { return dim_; }
  int size() const { return mandel_size(dim_); }

  double operator()(int i, int j) const;
  void set(int i, int j, double value);

  std::span<const double> mandel() const { return {v_.data(), static_cast<std::size_t>(size())}; }
  std::span<double> mandel() { return {v_.data(), static_cast<std::size_t>(size())}; }
  SmallVec mandel_vec() const;
  SmallMat matrix() const;

  double trace() const;
  double norm() const;

  SymTensor& operator+=(const SymTensor& o);
  SymTensor& operator-=(const SymTensor& o);
  SymTensor& operator*=(double s);
  friend SymTensor operator+(SymTensor a, const SymTensor& b) { return a += b; }
  friend SymTensor operator-(SymTensor a, const SymTensor& b) { return a -= b; }
  friend SymTensor operator*(SymTensor a, double s) { return a *= s; }
  friend SymTensor operator*(double s, SymTensor a) { return a *= s; }
  friend bool operator==(const SymTensor& a, const SymTensor& b);

 private:
  int dim_;
  std::array<double, 6> v_{};
};

SmallVec to_mandel(const SymTensor& s);
SymTensor from_mandel(int dim, std::span<const double> v);

/// S : T, the double contraction of two symmetric tensors.
double double_contraction(const SymTensor& a, const SymTensor& b);

/// Proper or improper orthogonal d x d matrix.
class Rotation {
 public:
  explicit Rotation(const SmallMat& q);

  static Rotation identity(int dim);
  /// Counter-clockwise in-plane rotation.
  static Rotation from_angle(double theta);
  static Rotation from_axis_angle(const Eigen::Vector3d& axis, double theta);
  /// Rotation of the normalized quaternion (w, x, y, z).
  static Rotation from_quaternion(const Eigen::Vector4d& q);

  int dim() const { return static_cast<int>(q_.rows()); }
  const SmallMat& matrix() const { return q_; }
  double det() const { return q_.determinant(); }
  Rotation operator*(const Rotation& o) const { return Rotation(SmallMat(q_ * o.q_)); }

 private:
  SmallMat q_;
};

struct EigenPair {
  SmallVec values;   // ascending
  SmallMat vectors;  // columns, orthonormal
};

/// Symmetric eigendecomposition. Closed form for d = 2, cyclic Jacobi for
/// d = 3. Eigenvalues ascending; each eigenvector's first non-negligible
/// component is positive.
EigenPair eig_sym(const SymTensor& s);

/// Q^T S Q.
SymTensor rotate_sym(const SymTensor& s, const Rotation& q);

/// Mandel matrix of the linear map S -> Q^T S Q.
MandelMatrix mandel_action(const SmallMat& q);

/// d = 2: angle uniform on [0, 2pi). d = 3: axis uniform on the sphere,
/// angle uniform on [0, 2pi).
Rotation random_rotation(int dim, Rng& rng);

/// Random deformation gradient F = R_a D R_b^T with D diagonal, entries
/// i.i.d. uniform on [eig_low, eig_high], and R_a, R_b independent random
/// rotations. The principal stretches of F are the entries of D.
SmallMat random_deformation(int dim, double eig_low, double eig_high, Rng& rng);

/// W : x as a Mandel matrix-vector product.
SymTensor contract_weight(const MandelMatrix& w, const SymTensor& x);

/// tr(w x).
double trace_pair(const SymTensor& w, const SymTensor& x);

}  // namespace tfenn
