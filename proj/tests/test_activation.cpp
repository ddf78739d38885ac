// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "test_util.hpp"
#include "tfenn/activation.hpp"

using namespace tfenn;
using tfenn::testing::random_sym;

namespace {

const ActivationKind kKinds[] = {ActivationKind::kTanh, ActivationKind::kLogistic, ActivationKind::kSoftplus,
                                 ActivationKind::kIdentity};

SymTensor from_spectrum(const SmallMat& u, std::initializer_list<double> l) {
  SmallVec v(static_cast<int>(l.size()));
  int i = 0;
  for (double x : l) v[i++] = x;
  return SymTensor::from_matrix(SmallMat(u * v.asDiagonal() * u.transpose()));
}

// Central-difference directional derivative of Phi at s along e.
SymTensor fd_direction(ScalarActivation f, const SymTensor& s, const SymTensor& e, double h) {
  return (apply_tensorial(f, s + e * h) - apply_tensorial(f, s - e * h)) * (0.5 / h);
}

}  // namespace

TEST(Scalar, DerivativeMatchesFiniteDifference) {
  for (ActivationKind k : kKinds) {
    const ScalarActivation f{k};
    for (double t = -5.0; t <= 5.0; t += 0.125) {
      const double h = 1e-5;
      const double fd = (f.value(t + h) - f.value(t - h)) / (2 * h);
      EXPECT_NEAR(f.derivative(t), fd, 1e-8 * std::max(1.0, std::abs(fd))) << to_string(k) << " t=" << t;
    }
  }
}

TEST(Scalar, NamesRoundTrip) {
  for (ActivationKind k : kKinds) EXPECT_EQ(parse_activation(to_string(k)), k);
  EXPECT_THROW(parse_activation("relu"), std::invalid_argument);
}

TEST(Tensorial, IdentityActivation) {
  Rng rng(1);
  for (int dim : {2, 3}) {
    const SymTensor s = random_sym(dim, rng);
    EXPECT_LE((apply_tensorial({ActivationKind::kIdentity}, s) - s).norm(), 1e-13);
  }
}

TEST(Tensorial, DiagonalTanh) {
  const double d[] = {0.0, 1.0};
  const SymTensor r = apply_tensorial({ActivationKind::kTanh}, SymTensor::diagonal(d));
  EXPECT_NEAR(r(0, 0), 0.0, 1e-16);
  EXPECT_NEAR(r(1, 1), std::tanh(1.0), 1e-15);
  EXPECT_NEAR(r(0, 1), 0.0, 1e-16);
}

TEST(Tensorial, ScaledIdentity) {
  for (ActivationKind k : kKinds)
    for (int dim : {2, 3}) {
      const ScalarActivation f{k};
      const double c = 0.37;
      const SymTensor r = apply_tensorial(f, SymTensor::identity(dim) * c);
      EXPECT_LE((r - SymTensor::identity(dim) * f.value(c)).norm(), 1e-15);
    }
}

TEST(Tensorial, MatchesMatrixFunctionSeries) {
  // exp-free oracle for tanh: tanh(S) = (e^{2S} - I)(e^{2S} + I)^{-1}, with e^{2S}
  // by scaling and squaring of the Taylor series.
  Rng rng(2);
  for (int k = 0; k < 50; ++k) {
    const SymTensor s = random_sym(3, rng);
    Eigen::Matrix3d a = 2.0 * Eigen::Matrix3d(s.matrix()) / 64.0;
    Eigen::Matrix3d e = Eigen::Matrix3d::Identity(), term = Eigen::Matrix3d::Identity();
    for (int n = 1; n < 30; ++n) {
      term = term * a / n;
      e += term;
    }
    for (int i = 0; i < 6; ++i) e = e * e;
    const Eigen::Matrix3d ref = (e - Eigen::Matrix3d::Identity()) * (e + Eigen::Matrix3d::Identity()).inverse();
    const SymTensor out = apply_tensorial({ActivationKind::kTanh}, s);
    EXPECT_LE((Eigen::Matrix3d(out.matrix()) - ref).norm(), 1e-12);
  }
}

TEST(Tensorial, Equivariance) {
  Rng rng(3);
  for (ActivationKind k : kKinds)
    for (int dim : {2, 3})
      for (int t = 0; t < 1000; ++t) {
        const ScalarActivation f{k};
        const SymTensor s = random_sym(dim, rng, 3.0);
        SmallMat q = random_rotation(dim, rng).matrix();
        if (t % 2) q.col(0) *= -1.0;  // improper elements of O(d)
        const Rotation rq(q);
        const SymTensor a = apply_tensorial(f, rotate_sym(s, rq));
        const SymTensor fs = apply_tensorial(f, s);
        EXPECT_LE((a - rotate_sym(fs, rq)).norm(), 1e-12 * std::max(1.0, fs.norm()));
      }
}

TEST(Tensorial, RepeatedEigenvalueCompletionIndependent) {
  Rng rng(4);
  for (ActivationKind k : kKinds)
    for (int t = 0; t < 200; ++t) {
      const SmallMat u1 = random_rotation(3, rng).matrix();
      // Second completion: rotate the first two columns within their plane.
      const double phi = rng.uniform(0.1, 3.0);
      SmallMat u2 = u1;
      u2.col(0) = std::cos(phi) * u1.col(0) + std::sin(phi) * u1.col(1);
      u2.col(1) = -std::sin(phi) * u1.col(0) + std::cos(phi) * u1.col(1);
      const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
      const ScalarActivation f{k};
      const SymTensor r1 = apply_tensorial(f, from_spectrum(u1, {a, a, b}));
      const SymTensor r2 = apply_tensorial(f, from_spectrum(u2, {a, a, b}));
      EXPECT_LE((r1 - r2).norm(), 1e-12);
    }
}

TEST(Tensorial, MonotoneActivationPreservesOrdering) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const SymTensor s = random_sym(3, rng, 2.0);
    const EigenPair in = eig_sym(s);
    const EigenPair out = eig_sym(apply_tensorial({ActivationKind::kTanh}, s));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(out.values[i], std::tanh(in.values[i]), 1e-12);
  }
}

TEST(Vjp, IdentityActivationIsIdentityMap) {
  Rng rng(6);
  for (int dim : {2, 3}) {
    const SymTensor s = random_sym(dim, rng), c = random_sym(dim, rng);
    EXPECT_LE((vjp_tensorial({ActivationKind::kIdentity}, s, c) - c).norm(), 1e-13);
  }
}

TEST(Vjp, ScaledIdentityPoint) {
  Rng rng(7);
  for (ActivationKind k : kKinds)
    for (int dim : {2, 3}) {
      const ScalarActivation f{k};
      const double c0 = -0.4;
      const SymTensor cot = random_sym(dim, rng);
      const SymTensor g = vjp_tensorial(f, SymTensor::identity(dim) * c0, cot);
      EXPECT_LE((g - cot * f.derivative(c0)).norm(), 1e-14);
    }
}

TEST(Vjp, MatchesFiniteDifferences) {
  // <vjp(cot), e> = <cot, dPhi[e]>, checked for each Mandel basis direction.
  Rng rng(8);
  for (ActivationKind k : kKinds)
    for (int dim : {2, 3})
      for (int t = 0; t < 50; ++t) {
        const ScalarActivation f{k};
        const SymTensor s = random_sym(dim, rng, 2.0);
        const SymTensor cot = random_sym(dim, rng);
        const SymTensor g = vjp_tensorial(f, s, cot);
        for (int c = 0; c < mandel_size(dim); ++c) {
          SmallVec e = SmallVec::Zero(mandel_size(dim));
          e[c] = 1.0;
          const SymTensor dir = SymTensor::from_mandel(e);
          const double fd = double_contraction(cot, fd_direction(f, s, dir, 1e-5));
          const double an = double_contraction(g, dir);
          EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(fd)));
        }
      }
}

TEST(Vjp, ContinuousAcrossDegeneracy) {
  Rng rng(9);
  for (ActivationKind k : kKinds)
    for (int t = 0; t < 50; ++t) {
      const ScalarActivation f{k};
      const SmallMat u = random_rotation(3, rng).matrix();
      const double a = rng.uniform(-1.5, 1.5), b = rng.uniform(-1.5, 1.5);
      const SymTensor cot = random_sym(3, rng);
      const SymTensor g0 = vjp_tensorial(f, from_spectrum(u, {a, a, b}), cot);
      for (double eps : {1e-10, 1e-9, 1e-8}) {
        const SymTensor g1 = vjp_tensorial(f, from_spectrum(u, {a, a + eps, b}), cot);
        EXPECT_LE((g1 - g0).norm(), 1e-6 * std::max(1.0, g0.norm()));
      }
    }
}

TEST(Vjp, MandelEntryPointsAgree) {
  Rng rng(10);
  for (int dim : {2, 3}) {
    const ScalarActivation f{ActivationKind::kSoftplus};
    const SymTensor s = random_sym(dim, rng), cot = random_sym(dim, rng);
    double out[6], grad[6];
    Spectrum sp;
    apply_tensorial_mandel(f, dim, s.mandel().data(), out, &sp);
    vjp_tensorial_mandel(f, dim, sp, cot.mandel().data(), grad);
    const SymTensor a = apply_tensorial(f, s), g = vjp_tensorial(f, s, cot);
    for (int c = 0; c < mandel_size(dim); ++c) {
      EXPECT_NEAR(out[c], a.mandel()[c], 1e-15);
      EXPECT_NEAR(grad[c], g.mandel()[c], 1e-15);
    }
  }
}
