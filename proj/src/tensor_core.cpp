// SPDX-License-Identifier: Apache-2.0
#include "tfenn/tensor_core.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace tfenn {

namespace {

// Mandel slot -> (row, col) of the upper triangle.
constexpr std::array<std::array<int, 2>, 3> kPairs2{{{0, 0}, {1, 1}, {0, 1}}};
constexpr std::array<std::array<int, 2>, 6> kPairs3{{{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}}};

std::array<int, 2> mandel_pair(int dim, int k) { return dim == 2 ? kPairs2[k] : kPairs3[k]; }

void fix_sign(SmallMat& u) {
  for (int c = 0; c < u.cols(); ++c) {
    for (int r = 0; r < u.rows(); ++r) {
      if (std::abs(u(r, c)) > 1e-12) {
        if (u(r, c) < 0) u.col(c) *= -1.0;
        break;
      }
    }
  }
}

EigenPair eig2(const SymTensor& s) {
  const double a = s(0, 0), b = s(0, 1), c = s(1, 1);
  EigenPair out{SmallVec(2), SmallMat(2, 2)};
  if (b == 0.0) {
    if (a <= c) {
      out.values << a, c;
      out.vectors.setIdentity();
    } else {
      out.values << c, a;
      out.vectors << 0, 1, 1, 0;
    }
    return out;
  }
  const double mean = 0.5 * (a + c);
  const double radius = std::hypot(0.5 * (a - c), b);
  out.values << mean - radius, mean + radius;
  // Larger eigenvalue has direction angle phi = atan2(2b, a - c) / 2.
  const double phi = 0.5 * std::atan2(2.0 * b, a - c);
  const double cp = std::cos(phi), sp = std::sin(phi);
  out.vectors << -sp, cp, cp, sp;
  fix_sign(out.vectors);
  return out;
}

EigenPair eig3(const SymTensor& s) {
  Eigen::Matrix3d a = s.matrix();
  Eigen::Matrix3d v = Eigen::Matrix3d::Identity();
  const double scale = s.norm();
  constexpr int kMaxSweeps = 30;
  constexpr std::array<std::array<int, 2>, 3> kOrder{{{0, 1}, {0, 2}, {1, 2}}};
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    const double off = std::sqrt(2.0 * (a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2)));
    if (off <= 1e-14 * scale || off == 0.0) break;
    for (const auto& [p, q] : kOrder) {
      const double apq = a(p, q);
      if (apq == 0.0) continue;
      // Golub & Van Loan sym.schur2.
      const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
      const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double sn = t * c;
      for (int k = 0; k < 3; ++k) {
        const double akp = a(k, p), akq = a(k, q);
        a(k, p) = c * akp - sn * akq;
        a(k, q) = sn * akp + c * akq;
      }
      for (int k = 0; k < 3; ++k) {
        const double apk = a(p, k), aqk = a(q, k);
        a(p, k) = c * apk - sn * aqk;
        a(q, k) = sn * apk + c * aqk;
      }
      a(p, q) = a(q, p) = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double vkp = v(k, p), vkq = v(k, q);
        v(k, p) = c * vkp - sn * vkq;
        v(k, q) = sn * vkp + c * vkq;
      }
    }
  }
  std::array<int, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(), [&](int i, int j) { return a(i, i) < a(j, j); });
  EigenPair out{SmallVec(3), SmallMat(3, 3)};
  for (int k = 0; k < 3; ++k) {
    out.values(k) = a(idx[k], idx[k]);
    out.vectors.col(k) = v.col(idx[k]);
  }
  fix_sign(out.vectors);
  return out;
}

}  // namespace

void check_dim(int dim) {
  if (dim != 2 && dim != 3) throw DimensionError("tensor dimension must be 2 or 3, got " + std::to_string(dim));
}

int mandel_index(int dim, int i, int j) {
  if (i > j) std::swap(i, j);
  if (i == j) return i;
  if (dim == 2) return 2;
  return 6 - i - j;  // (1,2)->3, (0,2)->4, (0,1)->5
}

SymTensor::SymTensor(int dim) : dim_(dim) { check_dim(dim); }

SymTensor SymTensor::from_mandel(int dim, std::span<const double> v) {
  SymTensor s(dim);
  if (static_cast<int>(v.size()) != s.size()) throw DimensionError("Mandel vector has wrong length");
  std::copy(v.begin(), v.end(), s.v_.begin());
  return s;
}

SymTensor SymTensor::from_mandel(const SmallVec& v) {
  const int dim = v.size() == 3 ? 2 : v.size() == 6 ? 3 : 0;
  check_dim(dim);
  return from_mandel(dim, std::span<const double>(v.data(), v.size()));
}

SymTensor SymTensor::from_matrix(const SmallMat& a) {
  if (a.rows() != a.cols()) throw DimensionError("matrix must be square");
  SymTensor s(static_cast<int>(a.rows()));
  for (int k = 0; k < s.size(); ++k) {
    const auto [i, j] = mandel_pair(s.dim_, k);
    s.v_[k] = i == j ? a(i, i) : kSqrt2 * 0.5 * (a(i, j) + a(j, i));
  }
  return s;
}

SymTensor SymTensor::identity(int dim) {
  SymTensor s(dim);
  for (int i = 0; i < dim; ++i) s.v_[i] = 1.0;
  return s;
}

SymTensor SymTensor::diagonal(std::span<const double> entries) {
  SymTensor s(static_cast<int>(entries.size()));
  for (int i = 0; i < s.dim_; ++i) s.v_[i] = entries[i];
  return s;
}

double SymTensor::operator()(int i, int j) const {
  const int k = mandel_index(dim_, i, j);
  return i == j ? v_[k] : v_[k] / kSqrt2;
}

void SymTensor::set(int i, int j, double value) {
  const int k = mandel_index(dim_, i, j);
  v_[k] = i == j ? value : value * kSqrt2;
}

SmallVec SymTensor::mandel_vec() const { return Eigen::Map<const SmallVec>(v_.data(), size()); }

SmallMat SymTensor::matrix() const {
  SmallMat a(dim_, dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) a(i, j) = (*this)(i, j);
  return a;
}

double SymTensor::trace() const {
  double t = 0;
  for (int i = 0; i < dim_; ++i) t += v_[i];
  return t;
}

double SymTensor::norm() const {
  double s = 0;
  for (int k = 0; k < size(); ++k) s += v_[k] * v_[k];
  return std::sqrt(s);
}

SymTensor& SymTensor::operator+=(const SymTensor& o) {
  if (o.dim_ != dim_) throw DimensionError("dimension mismatch");
  for (int k = 0; k < size(); ++k) v_[k] += o.v_[k];
  return *this;
}

SymTensor& SymTensor::operator-=(const SymTensor& o) {
  if (o.dim_ != dim_) throw DimensionError("dimension mismatch");
  for (int k = 0; k < size(); ++k) v_[k] -= o.v_[k];
  return *this;
}

SymTensor& SymTensor::operator*=(double s) {
  for (int k = 0; k < size(); ++k) v_[k] *= s;
  return *this;
}

bool operator==(const SymTensor& a, const SymTensor& b) {
  if (a.dim_ != b.dim_) return false;
  for (int k = 0; k < a.size(); ++k)
    if (a.v_[k] != b.v_[k]) return false;
  return true;
}

SmallVec to_mandel(const SymTensor& s) { return s.mandel_vec(); }

SymTensor from_mandel(int dim, std::span<const double> v) { return SymTensor::from_mandel(dim, v); }

double double_contraction(const SymTensor& a, const SymTensor& b) {
  if (a.dim() != b.dim()) throw DimensionError("dimension mismatch");
  double s = 0;
  for (int k = 0; k < a.size(); ++k) s += a.mandel()[k] * b.mandel()[k];
  return s;
}

Rotation::Rotation(const SmallMat& q) : q_(q) {
  if (q.rows() != q.cols()) throw DimensionError("rotation must be square");
  check_dim(static_cast<int>(q.rows()));
}

Rotation Rotation::identity(int dim) {
  check_dim(dim);
  return Rotation(SmallMat::Identity(dim, dim));
}

Rotation Rotation::from_angle(double theta) {
  SmallMat q(2, 2);
  const double c = std::cos(theta), s = std::sin(theta);
  q << c, -s, s, c;
  return Rotation(q);
}

Rotation Rotation::from_axis_angle(const Eigen::Vector3d& axis, double theta) {
  const Eigen::Vector3d n = axis.normalized();
  Eigen::Matrix3d k;
  k << 0, -n.z(), n.y(), n.z(), 0, -n.x(), -n.y(), n.x(), 0;
  const Eigen::Matrix3d r = Eigen::Matrix3d::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
  return Rotation(SmallMat(r));
}

Rotation Rotation::from_quaternion(const Eigen::Vector4d& q) {
  const Eigen::Vector4d u = q.normalized();
  const double w = u(0), x = u(1), y = u(2), z = u(3);
  SmallMat r(3, 3);
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return Rotation(r);
}

EigenPair eig_sym(const SymTensor& s) { return s.dim() == 2 ? eig2(s) : eig3(s); }

SymTensor rotate_sym(const SymTensor& s, const Rotation& q) {
  if (s.dim() != q.dim()) throw DimensionError("dimension mismatch");
  const SmallMat& m = q.matrix();
  return SymTensor::from_matrix(SmallMat(m.transpose() * s.matrix() * m));
}

MandelMatrix mandel_action(const SmallMat& q) {
  const int dim = static_cast<int>(q.rows());
  const int m = mandel_size(dim);
  MandelMatrix out(m, m);
  for (int k = 0; k < m; ++k) {
    SymTensor e(dim);
    e.mandel()[k] = 1.0;
    const SymTensor r = SymTensor::from_matrix(SmallMat(q.transpose() * e.matrix() * q));
    for (int l = 0; l < m; ++l) out(l, k) = r.mandel()[l];
  }
  return out;
}

Rotation random_rotation(int dim, Rng& rng) {
  check_dim(dim);
  if (dim == 2) return Rotation::from_angle(rng.uniform(0.0, 2.0 * std::numbers::pi));
  Eigen::Vector3d axis;
  double n2 = 0.0;
  do {
    axis << rng.normal(), rng.normal(), rng.normal();
    n2 = axis.squaredNorm();
  } while (n2 < 1e-20);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return Rotation::from_axis_angle(axis, theta);
}

SmallMat random_deformation(int dim, double eig_low, double eig_high, Rng& rng) {
  check_dim(dim);
  if (!(eig_low > 0.0) || !(eig_high >= eig_low))
    throw std::invalid_argument("deformation eigenvalue range must satisfy 0 < low <= high");
  SmallMat d = SmallMat::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) d(i, i) = rng.uniform(eig_low, eig_high);
  const Rotation ra = random_rotation(dim, rng);
  const Rotation rb = random_rotation(dim, rng);
  return ra.matrix() * d * rb.matrix().transpose();
}

SymTensor contract_weight(const MandelMatrix& w, const SymTensor& x) {
  if (w.rows() != x.size() || w.cols() != x.size()) throw DimensionError("weight/tensor dimension mismatch");
  const SmallVec y = w * x.mandel_vec();
  return SymTensor::from_mandel(y);
}

double trace_pair(const SymTensor& w, const SymTensor& x) { return double_contraction(w, x); }

}  // namespace tfenn
