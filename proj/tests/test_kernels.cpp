// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>

#include "test_util.hpp"
#include "tfenn/kernels.hpp"
#include "tfenn/network.hpp"
#include "tfenn/reference.hpp"

using namespace tfenn;
using tfenn::testing::random_spd;

namespace {

ModelSpec make_spec(ModelKind kind, int dim, SymmetryKind sym, std::vector<int> hidden, bool wrapper = false,
                    ActivationKind act = ActivationKind::kTanh) {
  ModelSpec s;
  s.kind = kind;
  s.dim = dim;
  s.symmetry = sym;
  s.hidden = std::move(hidden);
  s.rotation_wrapper = wrapper;
  s.activation = act;
  return s;
}

struct Batch {
  std::vector<double> x, y;
  std::size_t n;
  int steps, io;
  BatchView view() const { return {x.data(), y.data(), n, steps, io, nullptr}; }
};

Batch make_batch(int dim, std::size_t n, int steps, Rng& rng) {
  Batch b{{}, {}, n, steps, mandel_size(dim)};
  for (std::size_t s = 0; s < n * steps; ++s) {
    const SymTensor c = random_spd(dim, rng);
    b.x.insert(b.x.end(), c.mandel().begin(), c.mandel().end());
    for (int k = 0; k < b.io; ++k) b.y.push_back(rng.uniform(-1, 1));
  }
  return b;
}

std::vector<double> random_weights(int io, Rng& rng) {
  std::vector<double> w(io);
  for (double& v : w) v = rng.uniform(0.5, 2.0);
  return w;
}

double total_loss(const Network& net, std::span<const double> p, const Batch& b, std::span<const double> w) {
  std::vector<double> g(p.size());
  return loss_and_gradient(net, p, b.view(), w, g, Exec::kSerial) + net.rotation_penalty(p, g);
}

// Central differences (h = 1e-6) on `count` distinct random coordinates.
// Returns |g - fd| / max(|g|, |fd|) over the sampled sub-vector: single
// coordinates with gradients near the difference quotient's roundoff floor
// (about 1e-16 |L| / h) would otherwise dominate.
double fd_check(const Network& net, std::vector<double> p, const Batch& b, std::span<const double> w, int count,
                Rng& rng) {
  std::vector<double> g(p.size());
  loss_and_gradient(net, p, b.view(), w, g, Exec::kSerial);
  net.rotation_penalty(p, g);
  std::vector<std::size_t> idx(p.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  idx.resize(std::min<std::size_t>(count, idx.size()));
  double diff = 0.0, na = 0.0, nf = 0.0;
  const double h = 1e-6;
  for (std::size_t i : idx) {
    const double v = p[i];
    p[i] = v + h;
    const double lp = total_loss(net, p, b, w);
    p[i] = v - h;
    const double lm = total_loss(net, p, b, w);
    p[i] = v;
    const double fd = (lp - lm) / (2 * h);
    diff += (fd - g[i]) * (fd - g[i]);
    na += g[i] * g[i];
    nf += fd * fd;
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-300});
}

const SymmetryKind kAll[] = {SymmetryKind::kNone, SymmetryKind::kTriclinic, SymmetryKind::kOrthotropic,
                             SymmetryKind::kCubic, SymmetryKind::kIsotropic};

}  // namespace

TEST(Gradient, DenseEveryClass) {
  Rng rng(1);
  for (int dim : {2, 3})
    for (SymmetryKind k : kAll) {
      const Network net(make_spec(ModelKind::kTfennFF, dim, k, {4, 3}));
      const Batch b = make_batch(dim, 9, 1, rng);
      const auto w = random_weights(b.io, rng);
      EXPECT_LE(fd_check(net, net.init_params(rng).values, b, w, 50, rng), 1e-5) << dim << " " << to_string(k);
    }
}

TEST(Gradient, EveryActivation) {
  Rng rng(2);
  for (ActivationKind a : {ActivationKind::kTanh, ActivationKind::kLogistic, ActivationKind::kSoftplus,
                           ActivationKind::kIdentity}) {
    const Network net(make_spec(ModelKind::kTfennFF, 3, SymmetryKind::kCubic, {3, 3}, false, a));
    const Batch b = make_batch(3, 7, 1, rng);
    EXPECT_LE(fd_check(net, net.init_params(rng).values, b, {}, 50, rng), 1e-5) << to_string(a);
  }
}

TEST(Gradient, GruCell) {
  Rng rng(3);
  for (int dim : {2, 3})
    for (SymmetryKind k : {SymmetryKind::kIsotropic, SymmetryKind::kOrthotropic, SymmetryKind::kNone}) {
      const Network net(make_spec(ModelKind::kTfennGRU, dim, k, {3, 2}));
      const Batch b = make_batch(dim, 5, 4, rng);
      const auto w = random_weights(b.io, rng);
      EXPECT_LE(fd_check(net, net.init_params(rng).values, b, w, 50, rng), 1e-5);
    }
}

TEST(Gradient, RotationWrapper) {
  Rng rng(4);
  for (int dim : {2, 3})
    for (ModelKind kind : {ModelKind::kTfennFF, ModelKind::kTfennGRU}) {
      ModelSpec spec = make_spec(kind, dim, SymmetryKind::kCubic, {3}, true);
      spec.penalty_weight = 0.3;
      const Network net(spec);
      const int steps = kind == ModelKind::kTfennGRU ? 3 : 1;
      const Batch b = make_batch(dim, 6, steps, rng);
      std::vector<double> p = net.init_params(rng).values;
      if (dim == 3)
        for (int r = 0; r < 4; ++r) p[net.rotation_offset() + r] *= 1.3;  // off the unit sphere
      EXPECT_LE(fd_check(net, p, b, {}, 50, rng), 1e-5);
      // The rotation coordinates themselves.
      std::vector<double> g(p.size());
      loss_and_gradient(net, p, b.view(), {}, g, Exec::kSerial);
      net.rotation_penalty(p, g);
      for (int r = 0; r < net.rotation_size(); ++r) {
        const std::size_t i = net.rotation_offset() + r;
        const double v = p[i], h = 1e-6;
        p[i] = v + h;
        const double lp = total_loss(net, p, b, {});
        p[i] = v - h;
        const double lm = total_loss(net, p, b, {});
        p[i] = v;
        const double fd = (lp - lm) / (2 * h);
        EXPECT_LE(std::abs(fd - g[i]), 1e-5 * std::max({std::abs(fd), std::abs(g[i]), 1e-7}));
      }
    }
}

TEST(Gradient, ScalarBaselines) {
  Rng rng(5);
  for (int dim : {2, 3}) {
    const Network mlp(make_spec(ModelKind::kScalarMLP, dim, SymmetryKind::kNone, {6, 5}));
    const Batch b1 = make_batch(dim, 8, 1, rng);
    EXPECT_LE(fd_check(mlp, mlp.init_params(rng).values, b1, {}, 50, rng), 1e-5);
    const Network gru(make_spec(ModelKind::kScalarGRU, dim, SymmetryKind::kNone, {5, 4}));
    const Batch b2 = make_batch(dim, 4, 5, rng);
    EXPECT_LE(fd_check(gru, gru.init_params(rng).values, b2, {}, 50, rng), 1e-5);
  }
}

TEST(Gradient, LinearModelClosedForm) {
  // Depth-0 identity model: f(x) = W x + b, so the gradient is a plain
  // least-squares expression.
  Rng rng(6);
  for (int dim : {2, 3})
    for (SymmetryKind k : kAll) {
      const SymmetryClass cls{k, dim};
      const Network net(make_spec(ModelKind::kTfennFF, dim, k, {}));
      const std::vector<double> p = net.init_params(rng).values;
      const Batch b = make_batch(dim, 13, 1, rng);
      const auto w = random_weights(b.io, rng);
      std::vector<double> g(p.size());
      const double loss = loss_and_gradient(net, p, b.view(), w, g, Exec::kSerial);
      const auto& wb = weight_basis(cls).elements;
      const auto& bb = bias_basis(cls).elements;
      const int m = b.io, kw = static_cast<int>(wb.size());
      Eigen::MatrixXd wm = Eigen::MatrixXd::Zero(m, m);
      for (int c = 0; c < kw; ++c) wm += p[c] * wb[c];
      Eigen::VectorXd bias = Eigen::VectorXd::Zero(m);
      for (std::size_t c = 0; c < bb.size(); ++c) bias += p[kw + c] * to_mandel(bb[c]);
      std::vector<double> expect(p.size(), 0.0);
      double expect_loss = 0.0;
      for (std::size_t s = 0; s < b.n; ++s) {
        const Eigen::Map<const Eigen::VectorXd> x(b.x.data() + s * m, m), y(b.y.data() + s * m, m);
        const Eigen::VectorXd r = wm * x + bias - y;
        Eigen::VectorXd wr(m);
        for (int c = 0; c < m; ++c) {
          wr[c] = w[c] * r[c];
          expect_loss += w[c] * r[c] * r[c];
        }
        for (int c = 0; c < kw; ++c) expect[c] += 2.0 * wr.dot(wb[c] * x);
        for (std::size_t c = 0; c < bb.size(); ++c) expect[kw + c] += 2.0 * wr.dot(to_mandel(bb[c]));
      }
      EXPECT_NEAR(loss, expect_loss / b.n, 1e-12);
      for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(g[i], expect[i] / b.n, 1e-10);
    }
}

TEST(Kernels, GradientMatchesReference) {
  Rng rng(7);
  for (ModelKind kind : {ModelKind::kTfennFF, ModelKind::kTfennGRU, ModelKind::kScalarMLP, ModelKind::kScalarGRU})
    for (int dim : {2, 3}) {
      const bool tensor = kind == ModelKind::kTfennFF || kind == ModelKind::kTfennGRU;
      const bool rec = kind == ModelKind::kTfennGRU || kind == ModelKind::kScalarGRU;
      const Network net(make_spec(kind, dim, SymmetryKind::kCubic, {4, 3}, tensor));
      const Batch b = make_batch(dim, 41, rec ? 3 : 1, rng);
      const auto w = random_weights(b.io, rng);
      const auto p = net.init_params(rng).values;
      std::vector<double> g1(p.size()), g2(p.size());
      const double l1 = loss_and_gradient(net, p, b.view(), w, g1, Exec::kSerial);
      const double l2 = reference::loss_and_gradient(net, p, b.view(), w, g2);
      EXPECT_NEAR(l1, l2, 1e-12 * std::max(1.0, l2));
      for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(g1[i], g2[i], 1e-11 * std::max(1.0, std::abs(g2[i])));
    }
}

TEST(Kernels, SerialAndParallelBitIdentical) {
  Rng rng(8);
  const int saved = omp_get_max_threads();
  for (ModelKind kind : {ModelKind::kTfennFF, ModelKind::kTfennGRU, ModelKind::kScalarMLP}) {
    const bool rec = kind == ModelKind::kTfennGRU;
    const Network net(make_spec(kind, 2, SymmetryKind::kOrthotropic, {6, 6}, kind != ModelKind::kScalarMLP));
    const Batch b = make_batch(2, 1000, rec ? 3 : 1, rng);
    const auto p = net.init_params(rng).values;
    std::vector<double> gs(p.size()), ys(b.x.size());
    const double ls = loss_and_gradient(net, p, b.view(), {}, gs, Exec::kSerial);
    predict(net, p, b.view(), ys.data(), Exec::kSerial);
    for (int threads : {1, 2, 3, 4, 7}) {
      omp_set_num_threads(threads);
      std::vector<double> gp(p.size()), yp(b.x.size());
      const double lp = loss_and_gradient(net, p, b.view(), {}, gp, Exec::kParallel);
      predict(net, p, b.view(), yp.data(), Exec::kParallel);
      EXPECT_EQ(ls, lp) << threads;
      EXPECT_EQ(gs, gp) << threads;
      EXPECT_EQ(ys, yp) << threads;
    }
  }
  omp_set_num_threads(saved);
}

TEST(Kernels, IndexedBatchEqualsGathered) {
  Rng rng(9);
  const Network net(make_spec(ModelKind::kTfennFF, 3, SymmetryKind::kIsotropic, {4}));
  const Batch b = make_batch(3, 50, 1, rng);
  const auto p = net.init_params(rng).values;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < 20; ++i) idx.push_back((7 * i + 3) % 50);
  Batch gathered{{}, {}, idx.size(), 1, b.io};
  for (std::size_t i : idx) {
    gathered.x.insert(gathered.x.end(), b.x.begin() + i * b.io, b.x.begin() + (i + 1) * b.io);
    gathered.y.insert(gathered.y.end(), b.y.begin() + i * b.io, b.y.begin() + (i + 1) * b.io);
  }
  std::vector<double> g1(p.size()), g2(p.size());
  const BatchView v{b.x.data(), b.y.data(), idx.size(), 1, b.io, idx.data()};
  const double l1 = loss_and_gradient(net, p, v, {}, g1);
  const double l2 = loss_and_gradient(net, p, gathered.view(), {}, g2);
  EXPECT_EQ(l1, l2);
  EXPECT_EQ(g1, g2);
}

TEST(Kernels, StepKeepsEquivariance) {
  // A gradient step moves only basis coefficients, so the model stays in
  // the equivariant family.
  Rng rng(10);
  const SymmetryClass cls{SymmetryKind::kCubic, 2};
  const Network net(make_spec(ModelKind::kTfennFF, 2, cls.kind, {5, 5}));
  const Batch b = make_batch(2, 64, 1, rng);
  auto p = net.init_params(rng).values;
  std::vector<double> g(p.size());
  for (int it = 0; it < 20; ++it) {
    loss_and_gradient(net, p, b.view(), {}, g);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= 0.5 * g[i];
  }
  for (int t = 0; t < 50; ++t) {
    const SymTensor c = random_spd(2, rng);
    const Rotation q = sample_group_element(cls, rng);
    const SymTensor cr = rotate_sym(c, q);
    std::vector<double> y(3), yr(3);
    predict(net, p, BatchView{c.mandel().data(), nullptr, 1, 1, 3, nullptr}, y.data());
    predict(net, p, BatchView{cr.mandel().data(), nullptr, 1, 1, 3, nullptr}, yr.data());
    const SymTensor a = rotate_sym(SymTensor::from_mandel(2, y), q), bb = SymTensor::from_mandel(2, yr);
    EXPECT_LE((a - bb).norm(), 1e-12 * std::max(1.0, bb.norm()));
  }
}
