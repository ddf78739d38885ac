// SPDX-License-Identifier: Apache-2.0
#include "tfenn/activation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tfenn {

ActivationKind parse_activation(std::string_view name) {
  if (name == "tanh") return ActivationKind::kTanh;
  if (name == "logistic") return ActivationKind::kLogistic;
  if (name == "softplus") return ActivationKind::kSoftplus;
  if (name == "identity") return ActivationKind::kIdentity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kTanh: return "tanh";
    case ActivationKind::kLogistic: return "logistic";
    case ActivationKind::kSoftplus: return "softplus";
    case ActivationKind::kIdentity: return "identity";
  }
  return "identity";
}

double ScalarActivation::value(double t) const {
  switch (kind) {
    case ActivationKind::kTanh: return std::tanh(t);
    case ActivationKind::kLogistic: return 1.0 / (1.0 + std::exp(-t));
    case ActivationKind::kSoftplus: return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    case ActivationKind::kIdentity: return t;
  }
  return t;
}

double ScalarActivation::derivative(double t) const {
  switch (kind) {
    case ActivationKind::kTanh: {
      const double th = std::tanh(t);
      return 1.0 - th * th;
    }
    case ActivationKind::kLogistic: {
      const double s = 1.0 / (1.0 + std::exp(-t));
      return s * (1.0 - s);
    }
    case ActivationKind::kSoftplus: return 1.0 / (1.0 + std::exp(-t));
    case ActivationKind::kIdentity: return 1.0;
  }
  return 1.0;
}

namespace {

SmallMat mandel_to_matrix(int dim, const double* v) {
  SmallMat a(dim, dim);
  if (dim == 2) {
    a << v[0], v[2] / kSqrt2, v[2] / kSqrt2, v[1];
  } else {
    const double s23 = v[3] / kSqrt2, s13 = v[4] / kSqrt2, s12 = v[5] / kSqrt2;
    a << v[0], s12, s13, s12, v[1], s23, s13, s23, v[2];
  }
  return a;
}

void matrix_to_mandel(const SmallMat& a, double* v) {
  if (a.rows() == 2) {
    v[0] = a(0, 0);
    v[1] = a(1, 1);
    v[2] = kSqrt2 * 0.5 * (a(0, 1) + a(1, 0));
  } else {
    v[0] = a(0, 0);
    v[1] = a(1, 1);
    v[2] = a(2, 2);
    v[3] = kSqrt2 * 0.5 * (a(1, 2) + a(2, 1));
    v[4] = kSqrt2 * 0.5 * (a(0, 2) + a(2, 0));
    v[5] = kSqrt2 * 0.5 * (a(0, 1) + a(1, 0));
  }
}

}  // namespace

void apply_tensorial_mandel(ScalarActivation sigma, int dim, const double* in, double* out, Spectrum* spectrum) {
  if (sigma.kind == ActivationKind::kIdentity && spectrum == nullptr) {
    std::copy(in, in + mandel_size(dim), out);
    return;
  }
  const EigenPair e = eig_sym(SymTensor::from_mandel(dim, {in, static_cast<std::size_t>(mandel_size(dim))}));
  SmallVec f(dim);
  for (int i = 0; i < dim; ++i) f(i) = sigma.value(e.values(i));
  const SmallMat y = e.vectors * f.asDiagonal() * e.vectors.transpose();
  matrix_to_mandel(y, out);
  if (spectrum != nullptr) {
    for (int i = 0; i < dim; ++i) spectrum->data[i] = e.values(i);
    for (int c = 0; c < dim; ++c)
      for (int r = 0; r < dim; ++r) spectrum->data[3 + c * dim + r] = e.vectors(r, c);
  }
}

void vjp_tensorial_mandel(ScalarActivation sigma, int dim, const Spectrum& spectrum, const double* cotangent,
                          double* out) {
  const double* lam = spectrum.data.data();
  SmallMat u(dim, dim);
  for (int c = 0; c < dim; ++c)
    for (int r = 0; r < dim; ++r) u(r, c) = spectrum.data[3 + c * dim + r];

  SmallMat g(dim, dim);
  for (int i = 0; i < dim; ++i) {
    g(i, i) = sigma.derivative(lam[i]);
    for (int j = i + 1; j < dim; ++j) {
      const double gap = lam[i] - lam[j];
      const double scale = std::max({1.0, std::abs(lam[i]), std::abs(lam[j])});
      g(i, j) = std::abs(gap) <= kDegeneracyTol * scale ? sigma.derivative(0.5 * (lam[i] + lam[j]))
                                                         : (sigma.value(lam[i]) - sigma.value(lam[j])) / gap;
      g(j, i) = g(i, j);
    }
  }
  const SmallMat cot = mandel_to_matrix(dim, cotangent);
  const SmallMat inner = (u.transpose() * cot * u).cwiseProduct(g);
  matrix_to_mandel(SmallMat(u * inner * u.transpose()), out);
}

SymTensor apply_tensorial(ScalarActivation sigma, const SymTensor& s) {
  SymTensor out(s.dim());
  apply_tensorial_mandel(sigma, s.dim(), s.mandel().data(), out.mandel().data(), nullptr);
  if (sigma.kind == ActivationKind::kIdentity) return s;
  return out;
}

SymTensor vjp_tensorial(ScalarActivation sigma, const SymTensor& s, const SymTensor& cotangent) {
  if (s.dim() != cotangent.dim()) throw DimensionError("dimension mismatch");
  Spectrum spectrum;
  SymTensor scratch(s.dim());
  apply_tensorial_mandel(sigma, s.dim(), s.mandel().data(), scratch.mandel().data(), &spectrum);
  SymTensor out(s.dim());
  vjp_tensorial_mandel(sigma, s.dim(), spectrum, cotangent.mandel().data(), out.mandel().data());
  return out;
}

}  // namespace tfenn
