// SPDX-License-Identifier: Apache-2.0
#include "tfenn/reference.hpp"

#include <stdexcept>

namespace tfenn::reference {

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Model {
  const Network& net;
  std::span<const double> p;
  const FeatureSpace& fs;
  ScalarActivation act;
};

Model make_model(const Network& net, std::span<const double> params) {
  if (params.size() != net.num_params()) throw std::invalid_argument("parameter vector has wrong length");
  return Model{net, params, net.space(), ScalarActivation{net.spec().activation}};
}

Mat weight(const Model& md, std::size_t off, int i, int j, int n_src) {
  const int kw = md.fs.kw();
  const double* c = md.p.data() + off + (static_cast<std::size_t>(i) * n_src + j) * kw;
  Mat w = Mat::Zero(md.fs.m, md.fs.m);
  for (int k = 0; k < kw; ++k) w += c[k] * md.fs.weight_basis[k];
  return w;
}

Vec bias(const Model& md, std::size_t off, int i) {
  const int kb = md.fs.kb();
  Vec b = Vec::Zero(md.fs.m);
  for (int k = 0; k < kb; ++k) b += md.p[off + static_cast<std::size_t>(i) * kb + k] * md.fs.bias_basis[k];
  return b;
}

// Gate weights share the bias subspace.
Vec gate(const Model& md, std::size_t off, int i, int j, int n_src) {
  const int kb = md.fs.kb();
  const double* c = md.p.data() + off + (static_cast<std::size_t>(i) * n_src + j) * kb;
  Vec w = Vec::Zero(md.fs.m);
  for (int k = 0; k < kb; ++k) w += c[k] * md.fs.bias_basis[k];
  return w;
}

void weight_grad(const Model& md, std::size_t off, int i, int j, int n_src, const Mat& g, double* grad) {
  const int kw = md.fs.kw();
  double* c = grad + off + (static_cast<std::size_t>(i) * n_src + j) * kw;
  for (int k = 0; k < kw; ++k) c[k] += (md.fs.weight_basis[k].array() * g.array()).sum();
}

void bias_grad(const Model& md, std::size_t off, int i, const Vec& g, double* grad) {
  const int kb = md.fs.kb();
  for (int k = 0; k < kb; ++k) grad[off + static_cast<std::size_t>(i) * kb + k] += md.fs.bias_basis[k].dot(g);
}

void gate_grad(const Model& md, std::size_t off, int i, int j, int n_src, const Vec& g, double* grad) {
  const int kb = md.fs.kb();
  double* c = grad + off + (static_cast<std::size_t>(i) * n_src + j) * kb;
  for (int k = 0; k < kb; ++k) c[k] += md.fs.bias_basis[k].dot(g);
}

Vec act_apply(const Model& md, ScalarActivation s, const Vec& z) {
  if (md.fs.dim == 0) return Vec::Constant(1, s.value(z(0)));
  const SymTensor t = apply_tensorial(s, SymTensor::from_mandel(md.fs.dim, {z.data(), static_cast<std::size_t>(z.size())}));
  return Eigen::Map<const Vec>(t.mandel().data(), z.size());
}

Vec act_vjp(const Model& md, ScalarActivation s, const Vec& z, const Vec& dh) {
  if (md.fs.dim == 0) return Vec::Constant(1, s.derivative(z(0)) * dh(0));
  const int d = md.fs.dim;
  const SymTensor t = vjp_tensorial(s, SymTensor::from_mandel(d, {z.data(), static_cast<std::size_t>(z.size())}),
                                    SymTensor::from_mandel(d, {dh.data(), static_cast<std::size_t>(dh.size())}));
  return Eigen::Map<const Vec>(t.mandel().data(), z.size());
}

double logistic(double t) { return ScalarActivation{ActivationKind::kLogistic}.value(t); }

Features to_features(const Model& md, const Vec& v) {
  if (md.fs.dim != 0) return {v};
  Features f;
  for (Eigen::Index k = 0; k < v.size(); ++k) f.push_back(Vec::Constant(1, v(k)));
  return f;
}

Vec from_features(const Features& f) {
  Eigen::Index size = 0;
  for (const auto& v : f) size += v.size();
  Vec out(size);
  Eigen::Index o = 0;
  for (const auto& v : f) {
    out.segment(o, v.size()) = v;
    o += v.size();
  }
  return out;
}

Features zeros(const Model& md, int n) { return Features(n, Vec::Zero(md.fs.m)); }

struct DenseTape {
  Features x, z;
};

struct GruTape {
  Features x, hp, q, n, hhat;
  std::vector<double> r, z;
};

Features dense_eval(const Model& md, std::size_t layer, const Features& x, DenseTape* tape) {
  const DenseLayout& lay = md.net.dense_layout().at(layer);
  if (static_cast<int>(x.size()) != lay.n_in) throw std::invalid_argument("feature count mismatch");
  Features h(lay.n_out), z(lay.n_out);
  for (int i = 0; i < lay.n_out; ++i) {
    z[i] = bias(md, lay.b, i);
    for (int j = 0; j < lay.n_in; ++j) z[i] += weight(md, lay.w, i, j, lay.n_in) * x[j];
    h[i] = lay.activated ? act_apply(md, md.act, z[i]) : z[i];
  }
  if (tape != nullptr) *tape = DenseTape{x, z};
  return h;
}

GruStep gru_eval(const Model& md, std::size_t layer, const Features& x, const Features& hp, GruTape* tape) {
  const GruLayout& g = md.net.gru_layout().at(layer);
  if (static_cast<int>(x.size()) != g.n_in || static_cast<int>(hp.size()) != g.n_out)
    throw std::invalid_argument("feature count mismatch");
  GruStep out;
  GruTape tp{x, hp, {}, {}, {}, {}, {}};
  for (int i = 0; i < g.n_out; ++i) {
    double ar = md.p[g.b_r + i], az = md.p[g.b_z + i];
    for (int j = 0; j < g.n_in; ++j) {
      ar += gate(md, g.wr_x, i, j, g.n_in).dot(x[j]);
      az += gate(md, g.wz_x, i, j, g.n_in).dot(x[j]);
    }
    for (int j = 0; j < g.n_out; ++j) {
      ar += gate(md, g.wr_h, i, j, g.n_out).dot(hp[j]);
      az += gate(md, g.wz_h, i, j, g.n_out).dot(hp[j]);
    }
    const double r = logistic(ar), z = logistic(az);
    Vec p = bias(md, g.b_ih, i);
    Vec q = bias(md, g.b_hh, i);
    for (int j = 0; j < g.n_in; ++j) p += weight(md, g.w_ih, i, j, g.n_in) * x[j];
    for (int j = 0; j < g.n_out; ++j) q += weight(md, g.w_hh, i, j, g.n_out) * hp[j];
    const Vec n = p + r * q;
    const Vec hhat = act_apply(md, md.act, n);
    out.h.push_back((1.0 - z) * hhat + z * hp[i]);
    out.r.push_back(r);
    out.z.push_back(z);
    tp.q.push_back(q);
    tp.n.push_back(n);
    tp.hhat.push_back(hhat);
  }
  tp.r = out.r;
  tp.z = out.z;
  if (tape != nullptr) *tape = std::move(tp);
  return out;
}

struct SampleTape {
  std::vector<Vec> raw, y;
  std::vector<std::vector<DenseTape>> dense;
  std::vector<std::vector<GruTape>> gru;
};

// x0 = R^T x R in Mandel form, y_out = R y R^T.
Vec pull(const Rotation& r, int dim, const Vec& v) {
  return to_mandel(rotate_sym(SymTensor::from_mandel(dim, {v.data(), static_cast<std::size_t>(v.size())}), r));
}

Vec push(const Rotation& r, int dim, const Vec& v) {
  const Rotation rt(SmallMat(r.matrix().transpose()));
  return to_mandel(rotate_sym(SymTensor::from_mandel(dim, {v.data(), static_cast<std::size_t>(v.size())}), rt));
}

std::vector<Vec> run_sample(const Model& md, std::span<const double> x, int steps, SampleTape* tape) {
  const Network& net = md.net;
  const int io = net.io_size();
  const int dim = net.spec().dim;
  const bool rot = net.rotation_size() > 0;
  const Rotation r = net.wrapper_rotation(md.p);
  const auto& gl = net.gru_layout();
  const auto& dl = net.dense_layout();
  std::vector<Features> state;
  for (const auto& g : gl) state.push_back(zeros(md, g.n_out));
  if (tape != nullptr) {
    tape->dense.assign(steps, std::vector<DenseTape>(dl.size()));
    tape->gru.assign(steps, std::vector<GruTape>(gl.size()));
  }
  std::vector<Vec> outputs;
  for (int t = 0; t < steps; ++t) {
    const Vec raw = Eigen::Map<const Vec>(x.data() + static_cast<std::size_t>(t) * io, io);
    Features f = to_features(md, rot ? pull(r, dim, raw) : raw);
    for (std::size_t l = 0; l < gl.size(); ++l) {
      GruStep s = gru_eval(md, l, f, state[l], tape ? &tape->gru[t][l] : nullptr);
      state[l] = s.h;
      f = std::move(s.h);
    }
    for (std::size_t l = 0; l < dl.size(); ++l) f = dense_eval(md, l, f, tape ? &tape->dense[t][l] : nullptr);
    const Vec y = from_features(f);
    if (tape != nullptr) {
      tape->raw.push_back(raw);
      tape->y.push_back(y);
    }
    outputs.push_back(rot ? push(r, dim, y) : y);
  }
  return outputs;
}

Features dense_back(const Model& md, std::size_t layer, const DenseTape& tp, const Features& dh, double* grad) {
  const DenseLayout& lay = md.net.dense_layout()[layer];
  Features dx = zeros(md, lay.n_in);
  for (int i = 0; i < lay.n_out; ++i) {
    const Vec dz = lay.activated ? act_vjp(md, md.act, tp.z[i], dh[i]) : dh[i];
    bias_grad(md, lay.b, i, dz, grad);
    for (int j = 0; j < lay.n_in; ++j) {
      weight_grad(md, lay.w, i, j, lay.n_in, dz * tp.x[j].transpose(), grad);
      dx[j] += weight(md, lay.w, i, j, lay.n_in).transpose() * dz;
    }
  }
  return dx;
}

Features gru_back(const Model& md, std::size_t layer, const GruTape& tp, const Features& dh, Features& dhp,
                  double* grad) {
  const GruLayout& g = md.net.gru_layout()[layer];
  Features dx = zeros(md, g.n_in);
  dhp = zeros(md, g.n_out);
  for (int i = 0; i < g.n_out; ++i) {
    const double r = tp.r[i], z = tp.z[i];
    const double dz = dh[i].dot(tp.hp[i] - tp.hhat[i]);
    dhp[i] += z * dh[i];
    const Vec dn = act_vjp(md, md.act, tp.n[i], (1.0 - z) * dh[i]);
    const double dr = dn.dot(tp.q[i]);
    const Vec dq = r * dn;
    const double dar = dr * r * (1.0 - r);
    const double daz = dz * z * (1.0 - z);
    grad[g.b_r + i] += dar;
    grad[g.b_z + i] += daz;
    bias_grad(md, g.b_ih, i, dn, grad);
    bias_grad(md, g.b_hh, i, dq, grad);
    for (int j = 0; j < g.n_in; ++j) {
      weight_grad(md, g.w_ih, i, j, g.n_in, dn * tp.x[j].transpose(), grad);
      gate_grad(md, g.wr_x, i, j, g.n_in, dar * tp.x[j], grad);
      gate_grad(md, g.wz_x, i, j, g.n_in, daz * tp.x[j], grad);
      dx[j] += weight(md, g.w_ih, i, j, g.n_in).transpose() * dn + dar * gate(md, g.wr_x, i, j, g.n_in) +
               daz * gate(md, g.wz_x, i, j, g.n_in);
    }
    for (int j = 0; j < g.n_out; ++j) {
      weight_grad(md, g.w_hh, i, j, g.n_out, dq * tp.hp[j].transpose(), grad);
      gate_grad(md, g.wr_h, i, j, g.n_out, dar * tp.hp[j], grad);
      gate_grad(md, g.wz_h, i, j, g.n_out, daz * tp.hp[j], grad);
      dhp[j] += weight(md, g.w_hh, i, j, g.n_out).transpose() * dq + dar * gate(md, g.wr_h, i, j, g.n_out) +
                daz * gate(md, g.wz_h, i, j, g.n_out);
    }
  }
  return dx;
}

}  // namespace

Features dense_forward(const Network& net, std::span<const double> params, std::size_t layer, const Features& x) {
  return dense_eval(make_model(net, params), layer, x, nullptr);
}

GruStep gru_cell_forward(const Network& net, std::span<const double> params, std::size_t layer, const Features& x,
                         const Features& h_prev) {
  return gru_eval(make_model(net, params), layer, x, h_prev, nullptr);
}

std::vector<double> forward(const Network& net, std::span<const double> params, std::span<const double> x,
                            int steps) {
  const Model md = make_model(net, params);
  if (x.size() != static_cast<std::size_t>(steps) * net.io_size()) throw std::invalid_argument("input length mismatch");
  std::vector<double> out;
  for (const Vec& y : run_sample(md, x, steps, nullptr)) out.insert(out.end(), y.data(), y.data() + y.size());
  return out;
}

double loss_and_gradient(const Network& net, std::span<const double> params, const BatchView& batch,
                         std::span<const double> weights, std::span<double> grad) {
  const Model md = make_model(net, params);
  if (grad.size() != net.num_params()) throw std::invalid_argument("gradient vector has wrong length");
  std::fill(grad.begin(), grad.end(), 0.0);
  const int io = batch.io, steps = batch.steps;
  const bool rot = net.rotation_size() > 0;
  Mat action;
  std::vector<Mat> d_action;
  if (rot) rotation_action(net.spec().dim, params.subspan(net.rotation_offset(), net.rotation_size()), action, d_action);
  const Rotation r = net.wrapper_rotation(params);
  Mat g_action = rot ? Mat::Zero(io, io) : Mat();
  const auto& gl = net.gru_layout();
  const auto& dl = net.dense_layout();
  double loss = 0.0;

  for (std::size_t b = 0; b < batch.n; ++b) {
    const std::size_t s = batch.index ? batch.index[b] : b;
    const std::size_t len = static_cast<std::size_t>(steps) * io;
    SampleTape tape;
    const auto pred = run_sample(md, {batch.x + s * len, len}, steps, &tape);
    std::vector<Features> carry;
    for (const auto& g : gl) carry.push_back(zeros(md, g.n_out));
    for (int t = steps - 1; t >= 0; --t) {
      Vec g(io);
      for (int c = 0; c < io; ++c) {
        const double diff = pred[t](c) - batch.y[s * len + static_cast<std::size_t>(t) * io + c];
        const double w = weights.empty() ? 1.0 : weights[c];
        loss += w * diff * diff;
        g(c) = 2.0 * w * diff / static_cast<double>(batch.n);
      }
      Vec dy = g;
      if (rot) {
        g_action += tape.y[t] * g.transpose();
        dy = pull(r, net.spec().dim, g);
      }
      Features dh = to_features(md, dy);
      for (std::size_t l = dl.size(); l-- > 0;) dh = dense_back(md, l, tape.dense[t][l], dh, grad.data());
      for (std::size_t l = gl.size(); l-- > 0;) {
        Features total = dh;
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += carry[l][i];
        Features dhp;
        dh = gru_back(md, l, tape.gru[t][l], total, dhp, grad.data());
        carry[l] = std::move(dhp);
      }
      if (rot) g_action += from_features(dh) * tape.raw[t].transpose();
    }
  }
  for (std::size_t p = 0; p < d_action.size(); ++p)
    grad[net.rotation_offset() + p] = (g_action.array() * d_action[p].array()).sum();
  return loss / static_cast<double>(batch.n);
}

}  // namespace tfenn::reference
