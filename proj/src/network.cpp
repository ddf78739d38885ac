// SPDX-License-Identifier: Apache-2.0
#include "tfenn/network.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace tfenn {

ModelKind parse_model_kind(std::string_view name) {
  if (name == "tfenn-ff") return ModelKind::kTfennFF;
  if (name == "tfenn-gru") return ModelKind::kTfennGRU;
  if (name == "scalar-mlp") return ModelKind::kScalarMLP;
  if (name == "scalar-gru") return ModelKind::kScalarGRU;
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kTfennFF: return "tfenn-ff";
    case ModelKind::kTfennGRU: return "tfenn-gru";
    case ModelKind::kScalarMLP: return "scalar-mlp";
    case ModelKind::kScalarGRU: return "scalar-gru";
  }
  return "tfenn-ff";
}

std::vector<int> parse_widths(std::string_view text) {
  const auto x = text.find('x');
  int depth = -1, width = -1;
  if (x != std::string_view::npos) {
    const auto a = std::from_chars(text.data(), text.data() + x, depth);
    const auto b = std::from_chars(text.data() + x + 1, text.data() + text.size(), width);
    if (a.ptr != text.data() + x || a.ec != std::errc{} || b.ptr != text.data() + text.size() || b.ec != std::errc{})
      depth = -1;
  }
  if (depth < 0) throw std::invalid_argument("layer widths must look like '2x23', got '" + std::string(text) + "'");
  if (depth == 0) return {};
  if (width < 1) throw std::invalid_argument("layer widths must be positive");
  return std::vector<int>(depth, width);
}

std::string format_widths(const std::vector<int>& widths) {
  if (widths.empty()) return "0x0";
  return std::to_string(widths.size()) + "x" + std::to_string(widths.front());
}

std::string ModelSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  j["dim"] = dim;
  j["symmetry"] = to_string(symmetry);
  j["hidden"] = hidden;
  j["activation"] = to_string(activation);
  j["rotation_wrapper"] = rotation_wrapper;
  j["penalty_weight"] = penalty_weight;
  return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelSpec s;
  s.kind = parse_model_kind(j.at("kind").get<std::string>());
  s.dim = j.at("dim").get<int>();
  check_dim(s.dim);
  s.symmetry = parse_symmetry(j.at("symmetry").get<std::string>());
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.activation = parse_activation(j.at("activation").get<std::string>());
  s.rotation_wrapper = j.value("rotation_wrapper", false);
  s.penalty_weight = j.value("penalty_weight", 1e-2);
  return s;
}

FeatureSpace FeatureSpace::scalar() {
  FeatureSpace f;
  f.dim = 0;
  f.m = 1;
  f.weight_basis = {MandelMatrix::Ones(1, 1)};
  f.bias_basis = {SmallVec::Ones(1)};
  return f;
}

FeatureSpace FeatureSpace::tensor(SymmetryClass cls) {
  FeatureSpace f;
  f.dim = cls.dim;
  f.m = mandel_size(cls.dim);
  f.weight_basis = tfenn::weight_basis(cls).elements;
  for (const auto& b : tfenn::bias_basis(cls).elements) f.bias_basis.push_back(b.mandel_vec());
  return f;
}

std::vector<std::vector<double>> ModelParams::unflatten() const {
  std::vector<std::vector<double>> parts;
  for (const auto& b : blocks)
    parts.emplace_back(values.begin() + static_cast<std::ptrdiff_t>(b.offset),
                       values.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size));
  return parts;
}

ModelParams ModelParams::flatten(const std::vector<std::vector<double>>& parts, std::vector<ParamBlock> blocks) {
  if (parts.size() != blocks.size()) throw std::invalid_argument("block count mismatch");
  ModelParams p;
  std::size_t total = 0;
  for (const auto& b : blocks) total = std::max(total, b.offset + b.size);
  p.values.assign(total, 0.0);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].size() != blocks[i].size) throw std::invalid_argument("block size mismatch");
    std::copy(parts[i].begin(), parts[i].end(), p.values.begin() + static_cast<std::ptrdiff_t>(blocks[i].offset));
  }
  p.blocks = std::move(blocks);
  return p;
}

void Materialized::set_zero_like(const Materialized& shape) {
  dense.resize(shape.dense.size());
  for (std::size_t l = 0; l < dense.size(); ++l) {
    dense[l].w.setZero(shape.dense[l].w.rows(), shape.dense[l].w.cols());
    dense[l].b.setZero(shape.dense[l].b.size());
  }
  gru.resize(shape.gru.size());
  for (std::size_t l = 0; l < gru.size(); ++l) {
    auto& g = gru[l];
    const auto& s = shape.gru[l];
    g.wr_x.setZero(s.wr_x.rows(), s.wr_x.cols());
    g.wr_h.setZero(s.wr_h.rows(), s.wr_h.cols());
    g.wz_x.setZero(s.wz_x.rows(), s.wz_x.cols());
    g.wz_h.setZero(s.wz_h.rows(), s.wz_h.cols());
    g.b_r.setZero(s.b_r.size());
    g.b_z.setZero(s.b_z.size());
    g.w_ih.setZero(s.w_ih.rows(), s.w_ih.cols());
    g.w_hh.setZero(s.w_hh.rows(), s.w_hh.cols());
    g.b_ih.setZero(s.b_ih.size());
    g.b_hh.setZero(s.b_hh.size());
  }
  has_rotation = shape.has_rotation;
  if (has_rotation) {
    // Gradient w.r.t. the action matrix; derivatives are not accumulated.
    action.setZero(shape.action.rows(), shape.action.cols());
    d_action.clear();
  }
}

void Materialized::add(const Materialized& o) {
  for (std::size_t l = 0; l < dense.size(); ++l) {
    dense[l].w += o.dense[l].w;
    dense[l].b += o.dense[l].b;
  }
  for (std::size_t l = 0; l < gru.size(); ++l) {
    auto& g = gru[l];
    const auto& s = o.gru[l];
    g.wr_x += s.wr_x;
    g.wr_h += s.wr_h;
    g.wz_x += s.wz_x;
    g.wz_h += s.wz_h;
    g.b_r += s.b_r;
    g.b_z += s.b_z;
    g.w_ih += s.w_ih;
    g.w_hh += s.w_hh;
    g.b_ih += s.b_ih;
    g.b_hh += s.b_hh;
  }
  if (has_rotation) action += o.action;
}

Network::Network(ModelSpec spec) : spec_(std::move(spec)) {
  check_dim(spec_.dim);
  if (spec_.hidden.empty() && spec_.is_recurrent()) throw std::invalid_argument("recurrent models need at least one layer");
  for (int w : spec_.hidden)
    if (w < 1) throw std::invalid_argument("layer widths must be positive");
  if (spec_.rotation_wrapper && !spec_.is_tensor())
    throw std::invalid_argument("rotation wrapper requires a tensor-feature model");

  space_ = spec_.is_tensor() ? FeatureSpace::tensor({spec_.symmetry, spec_.dim}) : FeatureSpace::scalar();
  const int io_features = spec_.is_tensor() ? 1 : mandel_size(spec_.dim);
  const std::size_t kw = space_.kw(), kb = space_.kb();
  std::size_t off = 0;
  auto add_dense = [&](int n_in, int n_out, bool activated) {
    DenseLayout d{n_in, n_out, activated, 0, 0};
    d.w = off;
    off += static_cast<std::size_t>(n_out) * n_in * kw;
    d.b = off;
    off += static_cast<std::size_t>(n_out) * kb;
    dense_.push_back(d);
  };

  if (!spec_.is_recurrent()) {
    int n_in = io_features;
    for (int w : spec_.hidden) {
      add_dense(n_in, w, true);
      n_in = w;
    }
    add_dense(n_in, io_features, false);
  } else {
    int n_in = io_features;
    for (int w : spec_.hidden) {
      GruLayout g;
      g.n_in = n_in;
      g.n_out = w;
      const std::size_t n = w;
      auto take = [&](std::size_t count) {
        const std::size_t o = off;
        off += count;
        return o;
      };
      g.wr_x = take(n * n_in * kb);
      g.wr_h = take(n * n * kb);
      g.wz_x = take(n * n_in * kb);
      g.wz_h = take(n * n * kb);
      g.w_ih = take(n * n_in * kw);
      g.w_hh = take(n * n * kw);
      g.b_r = take(n);
      g.b_z = take(n);
      g.b_ih = take(n * kb);
      g.b_hh = take(n * kb);
      gru_.push_back(g);
      n_in = w;
    }
    add_dense(n_in, io_features, false);
  }
  if (spec_.rotation_wrapper) {
    rot_offset_ = off;
    rot_size_ = spec_.dim == 2 ? 1 : 4;
    off += rot_size_;
  }
  num_params_ = off;
}

std::vector<ParamBlock> Network::blocks() const {
  std::vector<ParamBlock> out;
  const std::size_t kw = space_.kw(), kb = space_.kb();
  if (spec_.is_recurrent()) {
    for (std::size_t l = 0; l < gru_.size(); ++l) {
      const auto& g = gru_[l];
      const std::size_t n = g.n_out;
      const std::string p = "gru" + std::to_string(l) + ".";
      out.push_back({p + "w_ir", g.wr_x, n * g.n_in * kb});
      out.push_back({p + "w_hr", g.wr_h, n * n * kb});
      out.push_back({p + "w_iz", g.wz_x, n * g.n_in * kb});
      out.push_back({p + "w_hz", g.wz_h, n * n * kb});
      out.push_back({p + "W_ih", g.w_ih, n * g.n_in * kw});
      out.push_back({p + "W_hh", g.w_hh, n * n * kw});
      out.push_back({p + "b_r", g.b_r, n});
      out.push_back({p + "b_z", g.b_z, n});
      out.push_back({p + "b_ih", g.b_ih, n * kb});
      out.push_back({p + "b_hh", g.b_hh, n * kb});
    }
  }
  for (std::size_t l = 0; l < dense_.size(); ++l) {
    const auto& d = dense_[l];
    const std::string p = "dense" + std::to_string(l) + ".";
    out.push_back({p + "W", d.w, static_cast<std::size_t>(d.n_out) * d.n_in * kw});
    out.push_back({p + "b", d.b, static_cast<std::size_t>(d.n_out) * kb});
  }
  if (rot_size_ > 0) out.push_back({spec_.dim == 2 ? "rotation.theta" : "rotation.q", rot_offset_, static_cast<std::size_t>(rot_size_)});
  return out;
}

ModelParams Network::init_params(Rng& rng) const {
  ModelParams p;
  p.values.assign(num_params_, 0.0);
  p.blocks = blocks();
  const int kw = space_.kw(), kb = space_.kb();
  auto fill_weights = [&](std::size_t offset, std::size_t count, int fan_in, int fan_out, int k) {
    const double a = std::sqrt(6.0 / (static_cast<double>(fan_in) * k + static_cast<double>(fan_out) * k));
    for (std::size_t i = 0; i < count; ++i) {
      double v;
      do {
        v = rng.uniform(-a, a);
      } while (std::abs(v) < 1e-3 * a);
      p.values[offset + i] = v;
    }
  };
  auto fill_bias = [&](std::size_t offset, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      double v;
      do {
        v = rng.uniform(-0.1, 0.1);
      } while (v == 0.0);
      p.values[offset + i] = v;
    }
  };
  for (const auto& g : gru_) {
    const std::size_t n = g.n_out;
    fill_weights(g.wr_x, n * g.n_in * kb, g.n_in, g.n_out, kb);
    fill_weights(g.wr_h, n * n * kb, g.n_out, g.n_out, kb);
    fill_weights(g.wz_x, n * g.n_in * kb, g.n_in, g.n_out, kb);
    fill_weights(g.wz_h, n * n * kb, g.n_out, g.n_out, kb);
    fill_weights(g.w_ih, n * g.n_in * kw, g.n_in, g.n_out, kw);
    fill_weights(g.w_hh, n * n * kw, g.n_out, g.n_out, kw);
    for (std::size_t i = 0; i < n; ++i) {
      p.values[g.b_r + i] = 0.0;
      p.values[g.b_z + i] = 1.0;
    }
    fill_bias(g.b_ih, n * kb);
    fill_bias(g.b_hh, n * kb);
  }
  for (const auto& d : dense_) {
    fill_weights(d.w, static_cast<std::size_t>(d.n_out) * d.n_in * kw, d.n_in, d.n_out, kw);
    fill_bias(d.b, static_cast<std::size_t>(d.n_out) * kb);
  }
  if (rot_size_ == 1) {
    p.values[rot_offset_] = rng.uniform(-std::numbers::pi, std::numbers::pi);
  } else if (rot_size_ == 4) {
    Eigen::Vector4d q;
    do {
      q << rng.normal(), rng.normal(), rng.normal(), rng.normal();
    } while (q.norm() < 1e-6);
    q.normalize();
    for (int i = 0; i < 4; ++i) p.values[rot_offset_ + i] = q(i);
  }
  return p;
}

namespace {

void expand_weight(const FeatureSpace& fs, const double* coeff, int n_out, int n_src, Eigen::MatrixXd& w) {
  const int m = fs.m, kw = fs.kw();
  w.setZero(static_cast<Eigen::Index>(n_out) * m, static_cast<Eigen::Index>(n_src) * m);
  for (int i = 0; i < n_out; ++i)
    for (int j = 0; j < n_src; ++j) {
      const double* c = coeff + (static_cast<std::size_t>(i) * n_src + j) * kw;
      auto block = w.block(i * m, j * m, m, m);
      for (int k = 0; k < kw; ++k) block += c[k] * fs.weight_basis[k];
    }
}

void expand_gate(const FeatureSpace& fs, const double* coeff, int n_out, int n_src, Eigen::MatrixXd& w) {
  const int m = fs.m, kb = fs.kb();
  w.setZero(n_out, static_cast<Eigen::Index>(n_src) * m);
  for (int i = 0; i < n_out; ++i)
    for (int j = 0; j < n_src; ++j) {
      const double* c = coeff + (static_cast<std::size_t>(i) * n_src + j) * kb;
      for (int k = 0; k < kb; ++k) w.block(i, j * m, 1, m) += c[k] * fs.bias_basis[k].transpose();
    }
}

void expand_bias(const FeatureSpace& fs, const double* coeff, int n_out, Eigen::VectorXd& b) {
  const int m = fs.m, kb = fs.kb();
  b.setZero(static_cast<Eigen::Index>(n_out) * m);
  for (int i = 0; i < n_out; ++i)
    for (int k = 0; k < kb; ++k) b.segment(i * m, m) += coeff[i * kb + k] * fs.bias_basis[k];
}

void reduce_weight(const FeatureSpace& fs, const Eigen::MatrixXd& g, int n_out, int n_src, double* out) {
  const int m = fs.m, kw = fs.kw();
  for (int i = 0; i < n_out; ++i)
    for (int j = 0; j < n_src; ++j) {
      double* c = out + (static_cast<std::size_t>(i) * n_src + j) * kw;
      const auto block = g.block(i * m, j * m, m, m);
      for (int k = 0; k < kw; ++k) c[k] += block.cwiseProduct(fs.weight_basis[k]).sum();
    }
}

void reduce_gate(const FeatureSpace& fs, const Eigen::MatrixXd& g, int n_out, int n_src, double* out) {
  const int m = fs.m, kb = fs.kb();
  for (int i = 0; i < n_out; ++i)
    for (int j = 0; j < n_src; ++j) {
      double* c = out + (static_cast<std::size_t>(i) * n_src + j) * kb;
      for (int k = 0; k < kb; ++k) c[k] += g.row(i).segment(j * m, m).dot(fs.bias_basis[k].transpose());
    }
}

void reduce_bias(const FeatureSpace& fs, const Eigen::VectorXd& g, int n_out, double* out) {
  const int m = fs.m, kb = fs.kb();
  for (int i = 0; i < n_out; ++i)
    for (int k = 0; k < kb; ++k) out[i * kb + k] += g.segment(i * m, m).dot(fs.bias_basis[k]);
}

SmallMat rotation_matrix_derivative_quat(const Eigen::Vector4d& u, int b) {
  const double w = u(0), x = u(1), y = u(2), z = u(3);
  SmallMat d(3, 3);
  switch (b) {
    case 0: d << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0; break;
    case 1: d << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x; break;
    case 2: d << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y; break;
    default: d << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0; break;
  }
  return d;
}

// Mandel matrix of x -> dR^T x R + R^T x dR.
Eigen::MatrixXd action_derivative(const SmallMat& r, const SmallMat& dr) {
  const int dim = static_cast<int>(r.rows());
  const int m = mandel_size(dim);
  Eigen::MatrixXd out(m, m);
  for (int k = 0; k < m; ++k) {
    SymTensor e(dim);
    e.mandel()[k] = 1.0;
    const SmallMat em = e.matrix();
    const SymTensor t = SymTensor::from_matrix(SmallMat(dr.transpose() * em * r + r.transpose() * em * dr));
    for (int l = 0; l < m; ++l) out(l, k) = t.mandel()[l];
  }
  return out;
}

}  // namespace

void rotation_action(int dim, std::span<const double> rot_params, Eigen::MatrixXd& action,
                     std::vector<Eigen::MatrixXd>& d_action) {
  d_action.clear();
  if (dim == 2) {
    const double th = rot_params[0];
    const Rotation r = Rotation::from_angle(th);
    SmallMat dr(2, 2);
    dr << -std::sin(th), -std::cos(th), std::cos(th), -std::sin(th);
    action = mandel_action(r.matrix());
    d_action.push_back(action_derivative(r.matrix(), dr));
    return;
  }
  Eigen::Vector4d q(rot_params[0], rot_params[1], rot_params[2], rot_params[3]);
  const double nq = q.norm();
  if (!(nq > 0)) throw std::domain_error("rotation quaternion has zero norm");
  const Eigen::Vector4d u = q / nq;
  const Rotation r = Rotation::from_quaternion(u);
  action = mandel_action(r.matrix());
  std::array<SmallMat, 4> du;
  for (int b = 0; b < 4; ++b) du[b] = rotation_matrix_derivative_quat(u, b);
  for (int a = 0; a < 4; ++a) {
    SmallMat dr = SmallMat::Zero(3, 3);
    for (int b = 0; b < 4; ++b) dr += du[b] * (((a == b ? 1.0 : 0.0) - u(a) * u(b)) / nq);
    d_action.push_back(action_derivative(r.matrix(), dr));
  }
}

Rotation Network::wrapper_rotation(std::span<const double> params) const {
  if (rot_size_ == 0) return Rotation::identity(spec_.dim);
  if (rot_size_ == 1) return Rotation::from_angle(params[rot_offset_]);
  return Rotation::from_quaternion(Eigen::Vector4d(params[rot_offset_], params[rot_offset_ + 1],
                                                   params[rot_offset_ + 2], params[rot_offset_ + 3]));
}

double Network::rotation_penalty(std::span<const double> params, std::span<double> grad) const {
  if (rot_size_ != 4 || spec_.penalty_weight == 0.0) return 0.0;
  double n2 = 0;
  for (int i = 0; i < 4; ++i) n2 += params[rot_offset_ + i] * params[rot_offset_ + i];
  const double dev = n2 - 1.0;
  if (!grad.empty())
    for (int i = 0; i < 4; ++i) grad[rot_offset_ + i] += 4.0 * spec_.penalty_weight * dev * params[rot_offset_ + i];
  return spec_.penalty_weight * dev * dev;
}

Materialized Network::materialize(std::span<const double> params) const {
  if (params.size() != num_params_) throw std::invalid_argument("parameter vector has wrong length");
  Materialized mat;
  const double* p = params.data();
  for (const auto& d : dense_) {
    DenseWeights dw;
    expand_weight(space_, p + d.w, d.n_out, d.n_in, dw.w);
    expand_bias(space_, p + d.b, d.n_out, dw.b);
    mat.dense.push_back(std::move(dw));
  }
  for (const auto& g : gru_) {
    GruWeights gw;
    expand_gate(space_, p + g.wr_x, g.n_out, g.n_in, gw.wr_x);
    expand_gate(space_, p + g.wr_h, g.n_out, g.n_out, gw.wr_h);
    expand_gate(space_, p + g.wz_x, g.n_out, g.n_in, gw.wz_x);
    expand_gate(space_, p + g.wz_h, g.n_out, g.n_out, gw.wz_h);
    gw.b_r = Eigen::Map<const Eigen::VectorXd>(p + g.b_r, g.n_out);
    gw.b_z = Eigen::Map<const Eigen::VectorXd>(p + g.b_z, g.n_out);
    expand_weight(space_, p + g.w_ih, g.n_out, g.n_in, gw.w_ih);
    expand_weight(space_, p + g.w_hh, g.n_out, g.n_out, gw.w_hh);
    expand_bias(space_, p + g.b_ih, g.n_out, gw.b_ih);
    expand_bias(space_, p + g.b_hh, g.n_out, gw.b_hh);
    mat.gru.push_back(std::move(gw));
  }
  if (rot_size_ > 0) {
    mat.has_rotation = true;
    rotation_action(spec_.dim, params.subspan(rot_offset_, rot_size_), mat.action, mat.d_action);
  }
  return mat;
}

void Network::project_gradient(const Materialized& g, std::span<double> out) const {
  if (out.size() != num_params_) throw std::invalid_argument("gradient vector has wrong length");
  double* o = out.data();
  for (std::size_t l = 0; l < dense_.size(); ++l) {
    const auto& d = dense_[l];
    reduce_weight(space_, g.dense[l].w, d.n_out, d.n_in, o + d.w);
    reduce_bias(space_, g.dense[l].b, d.n_out, o + d.b);
  }
  for (std::size_t l = 0; l < gru_.size(); ++l) {
    const auto& lay = gru_[l];
    const auto& gw = g.gru[l];
    reduce_gate(space_, gw.wr_x, lay.n_out, lay.n_in, o + lay.wr_x);
    reduce_gate(space_, gw.wr_h, lay.n_out, lay.n_out, o + lay.wr_h);
    reduce_gate(space_, gw.wz_x, lay.n_out, lay.n_in, o + lay.wz_x);
    reduce_gate(space_, gw.wz_h, lay.n_out, lay.n_out, o + lay.wz_h);
    for (int i = 0; i < lay.n_out; ++i) {
      o[lay.b_r + i] += gw.b_r(i);
      o[lay.b_z + i] += gw.b_z(i);
    }
    reduce_weight(space_, gw.w_ih, lay.n_out, lay.n_in, o + lay.w_ih);
    reduce_weight(space_, gw.w_hh, lay.n_out, lay.n_out, o + lay.w_hh);
    reduce_bias(space_, gw.b_ih, lay.n_out, o + lay.b_ih);
    reduce_bias(space_, gw.b_hh, lay.n_out, o + lay.b_hh);
  }
}

std::size_t count_parameters(const ModelSpec& spec) { return Network(spec).num_params(); }

namespace {

constexpr char kMagic[8] = {'T', 'F', 'E', 'N', 'N', 'M', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T swap_if_big(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    T out = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) out = (out << 8) | ((value >> (8 * i)) & 0xff);
    return out;
  }
  return value;
}

template <typename T>
void write_le(std::ostream& os, T value) {
  value = swap_if_big(value);
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw IoError("model file is truncated");
  return swap_if_big(value);
}

}  // namespace

void save_model(const std::string& path, const ModelFile& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  nlohmann::json header;
  header["model"] = nlohmann::json::parse(model.spec.to_json());
  header["metadata"] = nlohmann::json::parse(model.metadata_json);
  const std::string text = header.dump();
  os.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_le<std::uint64_t>(os, model.params.size());
  for (double v : model.params) write_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw IoError("failed writing '" + path + "'");
}

ModelFile load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model file '" + path + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a model file: " + path);
  const auto version = read_le<std::uint32_t>(is);
  if (version != kVersion) throw IoError("unsupported model file version");
  const auto len = read_le<std::uint32_t>(is);
  std::string text(len, '\0');
  is.read(text.data(), len);
  if (!is) throw IoError("model file is truncated");
  ModelFile out;
  try {
    const auto header = nlohmann::json::parse(text);
    out.spec = ModelSpec::from_json(header.at("model").dump());
    out.metadata_json = header.value("metadata", nlohmann::json::object()).dump();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("model file header is malformed: " + std::string(e.what()));
  }
  const auto count = read_le<std::uint64_t>(is);
  if (count != count_parameters(out.spec)) throw IoError("model file parameter count does not match spec");
  out.params.resize(count);
  for (auto& v : out.params) v = std::bit_cast<double>(read_le<std::uint64_t>(is));
  return out;
}

}  // namespace tfenn
