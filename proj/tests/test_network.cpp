// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "test_util.hpp"
#include "tfenn/activation.hpp"
#include "tfenn/kernels.hpp"
#include "tfenn/network.hpp"
#include "tfenn/reference.hpp"

using namespace tfenn;
using tfenn::testing::random_spd;
using tfenn::testing::random_sym;

namespace {

ModelSpec make_spec(ModelKind kind, int dim, SymmetryKind sym, std::vector<int> hidden,
                    ActivationKind act = ActivationKind::kTanh, bool wrapper = false) {
  ModelSpec s;
  s.kind = kind;
  s.dim = dim;
  s.symmetry = sym;
  s.hidden = std::move(hidden);
  s.activation = act;
  s.rotation_wrapper = wrapper;
  return s;
}

std::vector<double> run(const Network& net, std::span<const double> p, std::span<const double> x, int steps) {
  const int io = net.io_size();
  const std::size_t n = x.size() / (static_cast<std::size_t>(steps) * io);
  std::vector<double> out(x.size());
  predict(net, p, BatchView{x.data(), nullptr, n, steps, io, nullptr}, out.data(), Exec::kSerial);
  return out;
}

SymTensor one(const Network& net, std::span<const double> p, const SymTensor& x) {
  const auto y = run(net, p, x.mandel(), 1);
  return SymTensor::from_mandel(x.dim(), y);
}

std::size_t block_index(const ModelParams& p, const std::string& name) {
  for (std::size_t i = 0; i < p.blocks.size(); ++i)
    if (p.blocks[i].name == name) return i;
  ADD_FAILURE() << "no block " << name;
  return 0;
}

// Coefficients of the Mandel identity in the class's orthonormal basis.
std::vector<double> identity_coeffs(SymmetryClass cls) {
  const auto& e = weight_basis(cls).elements;
  const MandelMatrix id = MandelMatrix::Identity(mandel_size(cls.dim), mandel_size(cls.dim));
  std::vector<double> c;
  for (const auto& k : e) c.push_back(k.cwiseProduct(id).sum());
  return c;
}

MandelMatrix weight_from(SymmetryClass cls, const double* coeffs) {
  const auto& e = weight_basis(cls).elements;
  MandelMatrix w = MandelMatrix::Zero(mandel_size(cls.dim), mandel_size(cls.dim));
  for (std::size_t k = 0; k < e.size(); ++k) w += coeffs[k] * e[k];
  return w;
}

SymTensor bias_from(SymmetryClass cls, const double* coeffs) {
  const auto& e = bias_basis(cls).elements;
  SymTensor b(cls.dim);
  for (std::size_t k = 0; k < e.size(); ++k) b += e[k] * coeffs[k];
  return b;
}

const SymmetryKind kAll[] = {SymmetryKind::kNone, SymmetryKind::kTriclinic, SymmetryKind::kOrthotropic,
                             SymmetryKind::kCubic, SymmetryKind::kIsotropic};

}  // namespace

TEST(Spec, JsonRoundTrip) {
  ModelSpec s = make_spec(ModelKind::kTfennGRU, 3, SymmetryKind::kCubic, {5, 4}, ActivationKind::kSoftplus, true);
  s.penalty_weight = 0.25;
  const ModelSpec t = ModelSpec::from_json(s.to_json());
  EXPECT_EQ(t.to_json(), s.to_json());
}

TEST(Spec, Widths) {
  EXPECT_EQ(parse_widths("2x23"), (std::vector<int>{23, 23}));
  EXPECT_TRUE(parse_widths("0x0").empty());
  EXPECT_EQ(format_widths({23, 23}), "2x23");
  EXPECT_THROW(parse_widths("2y3"), std::invalid_argument);
  EXPECT_THROW(parse_widths("2x"), std::invalid_argument);
  EXPECT_THROW(parse_widths("2x0"), std::invalid_argument);
}

TEST(Spec, WrapperNeedsTensorModel) {
  EXPECT_THROW(Network(make_spec(ModelKind::kScalarMLP, 2, SymmetryKind::kNone, {4}, ActivationKind::kTanh, true)),
               std::invalid_argument);
}

TEST(Dense, ZeroWeightsGiveBias) {
  const SymmetryClass cls{SymmetryKind::kOrthotropic, 2};
  const Network net(make_spec(ModelKind::kTfennFF, 2, cls.kind, {3}, ActivationKind::kIdentity));
  Rng rng(1);
  ModelParams p = net.init_params(rng);
  std::fill(p.block(block_index(p, "dense0.W")).begin(), p.block(block_index(p, "dense0.W")).end(), 0.0);
  const auto b = p.block(block_index(p, "dense0.b"));
  const reference::Features x{to_mandel(random_sym(2, rng))};
  const reference::Features h = reference::dense_forward(net, p.values, 0, x);
  ASSERT_EQ(h.size(), 3u);
  const int kb = net.space().kb();
  for (int i = 0; i < 3; ++i) {
    const SymTensor expect = bias_from(cls, b.data() + i * kb);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(h[i][c], expect.mandel()[c]);
  }
}

TEST(Dense, DepthZeroIdentity) {
  for (SymmetryKind k : kAll)
    for (int dim : {2, 3}) {
      const Network net(make_spec(ModelKind::kTfennFF, dim, k, {}));
      ModelParams p{std::vector<double>(net.num_params(), 0.0), net.blocks()};
      const auto c = identity_coeffs({k, dim});
      std::copy(c.begin(), c.end(), p.values.begin());
      Rng rng(2);
      const SymTensor x = random_sym(dim, rng);
      EXPECT_LE((one(net, p.values, x) - x).norm(), 1e-15);
    }
}

TEST(Dense, MatchesHandAssembledLayer) {
  Rng rng(3);
  for (int dim : {2, 3})
    for (SymmetryKind k : kAll) {
      const SymmetryClass cls{k, dim};
      const Network net(make_spec(ModelKind::kTfennFF, dim, k, {3, 2}, ActivationKind::kLogistic));
      const ModelParams p = net.init_params(rng);
      reference::Features x;
      std::vector<SymTensor> xs;
      for (int j = 0; j < 3; ++j) {
        xs.push_back(random_sym(dim, rng));
        x.push_back(to_mandel(xs.back()));
      }
      const reference::Features h = reference::dense_forward(net, p.values, 1, x);
      const DenseLayout& d = net.dense_layout()[1];
      const int kw = net.space().kw(), kb = net.space().kb();
      for (int i = 0; i < d.n_out; ++i) {
        SymTensor pre = bias_from(cls, p.values.data() + d.b + i * kb);
        for (int j = 0; j < d.n_in; ++j)
          pre += contract_weight(weight_from(cls, p.values.data() + d.w + (i * d.n_in + j) * kw), xs[j]);
        const SymTensor expect = apply_tensorial({ActivationKind::kLogistic}, pre);
        for (int c = 0; c < mandel_size(dim); ++c) EXPECT_NEAR(h[i][c], expect.mandel()[c], 1e-14);
      }
    }
}

TEST(Equivariance, InitialisedModelsAllClasses) {
  Rng rng(4);
  for (int dim : {2, 3})
    for (SymmetryKind k : kAll)
      for (ModelKind kind : {ModelKind::kTfennFF, ModelKind::kTfennGRU}) {
        const SymmetryClass cls{k, dim};
        const Network net(make_spec(kind, dim, k, {4, 3}));
        const ModelParams p = net.init_params(rng);
        const int steps = kind == ModelKind::kTfennGRU ? 5 : 1;
        for (int t = 0; t < 20; ++t) {
          const Rotation q = sample_group_element(cls, rng);
          std::vector<double> x, xr;
          for (int s = 0; s < steps; ++s) {
            const SymTensor c = random_spd(dim, rng);
            const SymTensor cr = rotate_sym(c, q);
            x.insert(x.end(), c.mandel().begin(), c.mandel().end());
            xr.insert(xr.end(), cr.mandel().begin(), cr.mandel().end());
          }
          const auto y = run(net, p.values, x, steps), yr = run(net, p.values, xr, steps);
          const int m = mandel_size(dim);
          for (int s = 0; s < steps; ++s) {
            const SymTensor a = SymTensor::from_mandel(dim, std::span(y).subspan(s * m, m));
            const SymTensor b = SymTensor::from_mandel(dim, std::span(yr).subspan(s * m, m));
            EXPECT_LE((rotate_sym(a, q) - b).norm(), 1e-12 * std::max(1.0, a.norm()));
          }
        }
      }
}

TEST(Gru, SaturatedUpdateGateKeepsState) {
  const SymmetryClass cls{SymmetryKind::kIsotropic, 2};
  const Network net(make_spec(ModelKind::kTfennGRU, 2, cls.kind, {3}));
  Rng rng(5);
  ModelParams p = net.init_params(rng);
  for (double& v : p.block(block_index(p, "gru0.b_z"))) v = 1e3;
  const reference::Features x{to_mandel(random_sym(2, rng))};
  reference::Features h0;
  for (int i = 0; i < 3; ++i) h0.push_back(to_mandel(random_sym(2, rng)));
  const reference::GruStep st = reference::gru_cell_forward(net, p.values, 0, x, h0);
  for (int i = 0; i < 3; ++i) EXPECT_LE((st.h[i] - h0[i]).norm(), 1e-15);
}

TEST(Gru, OpenGatesReduceToDenseLayer) {
  const SymmetryClass cls{SymmetryKind::kCubic, 2};
  const Network net(make_spec(ModelKind::kTfennGRU, 2, cls.kind, {2}));
  Rng rng(6);
  ModelParams p = net.init_params(rng);
  for (double& v : p.block(block_index(p, "gru0.b_z"))) v = -1e3;
  for (double& v : p.block(block_index(p, "gru0.b_r"))) v = 1e3;
  const SymTensor x = random_sym(2, rng);
  const std::vector<SymTensor> h0{random_sym(2, rng), random_sym(2, rng)};
  const reference::GruStep st =
      reference::gru_cell_forward(net, p.values, 0, {to_mandel(x)}, {to_mandel(h0[0]), to_mandel(h0[1])});
  const GruLayout& g = net.gru_layout()[0];
  const int kw = net.space().kw(), kb = net.space().kb();
  for (int i = 0; i < 2; ++i) {
    SymTensor pre = contract_weight(weight_from(cls, p.values.data() + g.w_ih + i * kw), x) +
                    bias_from(cls, p.values.data() + g.b_ih + i * kb) + bias_from(cls, p.values.data() + g.b_hh + i * kb);
    for (int j = 0; j < 2; ++j)
      pre += contract_weight(weight_from(cls, p.values.data() + g.w_hh + (i * 2 + j) * kw), h0[j]);
    const SymTensor expect = apply_tensorial({ActivationKind::kTanh}, pre);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(st.h[i][c], expect.mandel()[c], 1e-14);
  }
}

TEST(Gru, GatesInvariantStateEquivariant) {
  Rng rng(7);
  for (int dim : {2, 3})
    for (SymmetryKind k : {SymmetryKind::kIsotropic, SymmetryKind::kCubic, SymmetryKind::kOrthotropic}) {
      const SymmetryClass cls{k, dim};
      const Network net(make_spec(ModelKind::kTfennGRU, dim, k, {3, 2}));
      const ModelParams p = net.init_params(rng);
      for (int t = 0; t < 50; ++t) {
        const Rotation q = sample_group_element(cls, rng);
        const SymTensor x = random_sym(dim, rng);
        std::vector<SymTensor> h;
        reference::Features hf, hr;
        for (int i = 0; i < 2; ++i) {
          h.push_back(random_sym(dim, rng));
          hf.push_back(to_mandel(h.back()));
          hr.push_back(to_mandel(rotate_sym(h.back(), q)));
        }
        // Second layer: inputs are the 3 features of the first layer.
        reference::Features xf, xr;
        for (int j = 0; j < 3; ++j) {
          const SymTensor xj = x * (1.0 + j);
          xf.push_back(to_mandel(xj));
          xr.push_back(to_mandel(rotate_sym(xj, q)));
        }
        const auto a = reference::gru_cell_forward(net, p.values, 1, xf, hf);
        const auto b = reference::gru_cell_forward(net, p.values, 1, xr, hr);
        for (int i = 0; i < 2; ++i) {
          EXPECT_LE(std::abs(a.r[i] - b.r[i]), 1e-12);
          EXPECT_LE(std::abs(a.z[i] - b.z[i]), 1e-12);
          const SymTensor ha = SymTensor::from_mandel(a.h[i]), hb = SymTensor::from_mandel(b.h[i]);
          EXPECT_LE((rotate_sym(ha, q) - hb).norm(), 1e-12);
        }
      }
    }
}

TEST(Gru, ZeroInputZeroBiasGivesZero) {
  const Network net(make_spec(ModelKind::kTfennGRU, 2, SymmetryKind::kIsotropic, {3, 3}));
  Rng rng(8);
  ModelParams p = net.init_params(rng);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string& n = p.blocks[i].name;
    if (n.find(".b") != std::string::npos)
      for (double& v : p.block(i)) v = 0.0;
  }
  const std::vector<double> x(6 * 3, 0.0);
  for (double v : run(net, p.values, x, 6)) EXPECT_EQ(v, 0.0);
}

TEST(Gru, Causal) {
  const Network net(make_spec(ModelKind::kTfennGRU, 3, SymmetryKind::kCubic, {4}));
  Rng rng(9);
  const ModelParams p = net.init_params(rng);
  const int steps = 7, m = 6;
  std::vector<double> x;
  for (int s = 0; s < steps; ++s) {
    const SymTensor c = random_spd(3, rng);
    x.insert(x.end(), c.mandel().begin(), c.mandel().end());
  }
  const auto y = run(net, p.values, x, steps);
  for (int t = 0; t + 1 < steps; ++t) {
    std::vector<double> xp = x;
    for (int c = 0; c < m; ++c) xp[(t + 1) * m + c] += 0.3;
    const auto yp = run(net, p.values, xp, steps);
    for (int i = 0; i < (t + 1) * m; ++i) EXPECT_EQ(yp[i], y[i]);
    double diff = 0.0;
    for (int i = (t + 1) * m; i < (t + 2) * m; ++i) diff += std::abs(yp[i] - y[i]);
    EXPECT_GT(diff, 0.0);
  }
}

TEST(Kernels, MatchReferenceForward) {
  Rng rng(10);
  for (ModelKind kind : {ModelKind::kTfennFF, ModelKind::kTfennGRU, ModelKind::kScalarMLP, ModelKind::kScalarGRU})
    for (int dim : {2, 3}) {
      const bool rec = kind == ModelKind::kTfennGRU || kind == ModelKind::kScalarGRU;
      const bool tensor = kind == ModelKind::kTfennFF || kind == ModelKind::kTfennGRU;
      const Network net(make_spec(kind, dim, SymmetryKind::kOrthotropic, {5, 3}, ActivationKind::kSoftplus, tensor));
      const ModelParams p = net.init_params(rng);
      const int steps = rec ? 4 : 1;
      const int n = 37;
      std::vector<double> x;
      for (int s = 0; s < n * steps; ++s) {
        const SymTensor c = random_spd(dim, rng);
        x.insert(x.end(), c.mandel().begin(), c.mandel().end());
      }
      const auto y = run(net, p.values, x, steps);
      const std::size_t len = static_cast<std::size_t>(steps) * mandel_size(dim);
      for (int s = 0; s < n; ++s) {
        const auto ref = reference::forward(net, p.values, std::span(x).subspan(s * len, len), steps);
        for (std::size_t i = 0; i < len; ++i) EXPECT_NEAR(y[s * len + i], ref[i], 1e-13 * std::max(1.0, std::abs(ref[i])));
      }
    }
}

TEST(Wrapper, ZeroAngleMatchesInnerModel) {
  Rng rng(11);
  const ModelSpec inner = make_spec(ModelKind::kTfennFF, 2, SymmetryKind::kCubic, {4, 4});
  ModelSpec wrapped = inner;
  wrapped.rotation_wrapper = true;
  const Network a(inner), b(wrapped);
  ModelParams p = b.init_params(rng);
  p.values[b.rotation_offset()] = 0.0;
  const std::vector<double> pa(p.values.begin(), p.values.begin() + static_cast<std::ptrdiff_t>(a.num_params()));
  for (int t = 0; t < 20; ++t) {
    const SymTensor c = random_spd(2, rng);
    EXPECT_LE((one(a, pa, c) - one(b, p.values, c)).norm(), 1e-15);
  }
}

TEST(Wrapper, IsotropicInnerIgnoresAngle) {
  Rng rng(12);
  for (int dim : {2, 3}) {
    const Network net(make_spec(ModelKind::kTfennFF, dim, SymmetryKind::kIsotropic, {4}, ActivationKind::kTanh, true));
    ModelParams p = net.init_params(rng);
    const SymTensor c = random_spd(dim, rng);
    const SymTensor y0 = one(net, p.values, c);
    for (int t = 0; t < 10; ++t) {
      for (int r = 0; r < net.rotation_size(); ++r) p.values[net.rotation_offset() + r] = rng.uniform(-3, 3);
      EXPECT_LE((one(net, p.values, c) - y0).norm(), 1e-12 * std::max(1.0, y0.norm()));
    }
  }
}

TEST(Wrapper, ReproducesRotatedTargets) {
  Rng rng(13);
  const double theta = 20.0 * std::numbers::pi / 180.0;
  const Rotation q = Rotation::from_angle(theta);
  const Rotation qt(SmallMat(q.matrix().transpose()));
  const ModelSpec inner = make_spec(ModelKind::kTfennFF, 2, SymmetryKind::kCubic, {5});
  ModelSpec wrapped = inner;
  wrapped.rotation_wrapper = true;
  const Network a(inner), b(wrapped);
  ModelParams p = b.init_params(rng);
  p.values[b.rotation_offset()] = theta;
  const std::vector<double> pa(p.values.begin(), p.values.begin() + static_cast<std::ptrdiff_t>(a.num_params()));
  for (int t = 0; t < 20; ++t) {
    const SymTensor c = random_spd(2, rng);
    const SymTensor target = rotate_sym(one(a, pa, c), qt);  // Q y Q^T
    EXPECT_LE((one(b, p.values, rotate_sym(c, qt)) - target).norm(), 1e-13);
  }
}

TEST(Wrapper, QuaternionGivesProperRotation) {
  Rng rng(14);
  const Network net(make_spec(ModelKind::kTfennFF, 3, SymmetryKind::kCubic, {3}, ActivationKind::kTanh, true));
  ModelParams p = net.init_params(rng);
  for (int t = 0; t < 100; ++t) {
    for (int r = 0; r < 4; ++r) p.values[net.rotation_offset() + r] = rng.uniform(-2, 2);
    const SmallMat r = net.wrapper_rotation(p.values).matrix();
    EXPECT_LE((r.transpose() * r - SmallMat::Identity(3, 3)).norm(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(Wrapper, PenaltyValueAndGradient) {
  const Network net(make_spec(ModelKind::kTfennFF, 3, SymmetryKind::kCubic, {2}, ActivationKind::kTanh, true));
  Rng rng(15);
  ModelParams p = net.init_params(rng);
  const double q[4] = {0.3, -1.1, 0.4, 0.9};
  std::copy(q, q + 4, p.values.begin() + static_cast<std::ptrdiff_t>(net.rotation_offset()));
  std::vector<double> g(net.num_params(), 0.0);
  const double n2 = 0.09 + 1.21 + 0.16 + 0.81;
  EXPECT_NEAR(net.rotation_penalty(p.values, g), net.spec().penalty_weight * (n2 - 1) * (n2 - 1), 1e-15);
  for (int r = 0; r < 4; ++r)
    EXPECT_NEAR(g[net.rotation_offset() + r], 4 * net.spec().penalty_weight * (n2 - 1) * q[r], 1e-15);
}

TEST(Init, NoZeroParameters) {
  Rng rng(16);
  for (ModelKind kind : {ModelKind::kTfennFF, ModelKind::kTfennGRU, ModelKind::kScalarMLP, ModelKind::kScalarGRU}) {
    const Network net(make_spec(kind, 2, SymmetryKind::kCubic, {6, 6}));
    const ModelParams p = net.init_params(rng);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
      const std::string& n = p.blocks[i].name;
      const bool gate_bias = n.ends_with(".b_r") || n.ends_with(".b_z");
      for (double v : p.block(i)) {
        if (gate_bias)
          EXPECT_TRUE(v == 0.0 || v == 1.0) << n;
        else
          EXPECT_NE(v, 0.0) << n;
      }
      if (n.ends_with(".b_z"))
        for (double v : p.block(i)) EXPECT_EQ(v, 1.0);
    }
  }
}

TEST(Init, WeightScaleBound) {
  Rng rng(17);
  const Network net(make_spec(ModelKind::kTfennFF, 2, SymmetryKind::kOrthotropic, {8, 5}));
  const ModelParams p = net.init_params(rng);
  const int kw = net.space().kw();
  for (const DenseLayout& d : net.dense_layout()) {
    const double a = std::sqrt(6.0 / (static_cast<double>(d.n_in) * kw + static_cast<double>(d.n_out) * kw));
    for (std::size_t i = 0; i < static_cast<std::size_t>(d.n_out * d.n_in * kw); ++i) {
      const double v = p.values[d.w + i];
      EXPECT_LE(std::abs(v), a);
      EXPECT_GE(std::abs(v), 1e-3 * a);
    }
    for (int i = 0; i < d.n_out * net.space().kb(); ++i) EXPECT_LE(std::abs(p.values[d.b + i]), 0.1);
  }
}

TEST(Init, Deterministic) {
  const Network net(make_spec(ModelKind::kTfennGRU, 3, SymmetryKind::kIsotropic, {4}, ActivationKind::kTanh, true));
  Rng a(18), b(18);
  EXPECT_EQ(net.init_params(a).values, net.init_params(b).values);
}

TEST(Params, FlattenRoundTrip) {
  const Network net(make_spec(ModelKind::kTfennGRU, 2, SymmetryKind::kOrthotropic, {3, 2}, ActivationKind::kTanh, true));
  Rng rng(19);
  const ModelParams p = net.init_params(rng);
  const ModelParams q = ModelParams::flatten(p.unflatten(), p.blocks);
  EXPECT_EQ(p.values, q.values);
  std::size_t total = 0;
  for (const auto& b : p.blocks) total += b.size;
  EXPECT_EQ(total, p.size());
}

TEST(Params, MaterializedWeightsInSubspace) {
  Rng rng(20);
  for (SymmetryKind k : kAll) {
    const SymmetryClass cls{k, 3};
    const Network net(make_spec(ModelKind::kTfennFF, 3, k, {2}));
    const Materialized m = net.materialize(net.init_params(rng).values);
    const int mm = 6;
    const auto& w = m.dense[0].w;
    for (int i = 0; i < w.rows() / mm; ++i)
      for (int j = 0; j < w.cols() / mm; ++j) {
        const MandelMatrix blk = w.block(i * mm, j * mm, mm, mm);
        EXPECT_LE((project_weight(blk, cls) - blk).norm(), 1e-14);
      }
  }
}

TEST(ModelFileIo, RoundTripAndErrors) {
  const Network net(make_spec(ModelKind::kTfennFF, 2, SymmetryKind::kCubic, {4}, ActivationKind::kTanh, true));
  Rng rng(21);
  const ModelFile f{net.spec(), R"({"note":"x"})", net.init_params(rng).values};
  const auto dir = std::filesystem::temp_directory_path() / "tfenn_test_network";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "m.bin").string();
  save_model(path, f);
  const ModelFile g = load_model(path);
  EXPECT_EQ(g.params, f.params);
  EXPECT_EQ(g.spec.to_json(), f.spec.to_json());
  EXPECT_NE(g.metadata_json.find("note"), std::string::npos);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 5);
  EXPECT_THROW(load_model(path), IoError);
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTAMODELFILE";
  }
  EXPECT_THROW(load_model(path), IoError);
  EXPECT_THROW(load_model((dir / "missing.bin").string()), IoError);
  std::filesystem::remove_all(dir);
}
