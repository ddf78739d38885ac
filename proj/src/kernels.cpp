// SPDX-License-Identifier: Apache-2.0
#include "tfenn/kernels.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tfenn {

namespace {

constexpr std::size_t kChunk = 16;
constexpr std::size_t kMaxSlots = 32;

using Mat = Eigen::MatrixXd;

struct Ctx {
  const Network& net;
  const Materialized& mat;
  ScalarActivation act;
  int dim, m;
  bool scalar;
};

// Feature-blockwise activation. Scalar features use sigma elementwise;
// tensor features use the eigenvalue map on each m-row block of a column.
void activate(const Ctx& c, ScalarActivation s, const Mat& z, Mat& h, std::vector<Spectrum>& spec) {
  if (c.scalar) {
    h = z.unaryExpr([s](double t) { return s.value(t); });
    return;
  }
  if (s.kind == ActivationKind::kIdentity) {
    h = z;
    return;
  }
  const Eigen::Index features = z.rows() / c.m;
  h.resize(z.rows(), z.cols());
  spec.resize(static_cast<std::size_t>(features * z.cols()));
  for (Eigen::Index b = 0; b < z.cols(); ++b)
    for (Eigen::Index i = 0; i < features; ++i)
      apply_tensorial_mandel(s, c.dim, &z(i * c.m, b), &h(i * c.m, b), &spec[b * features + i]);
}

void activate_vjp(const Ctx& c, ScalarActivation s, const Mat& z, const std::vector<Spectrum>& spec, const Mat& dh,
                  Mat& dz) {
  if (c.scalar) {
    dz = dh.cwiseProduct(z.unaryExpr([s](double t) { return s.derivative(t); }));
    return;
  }
  if (s.kind == ActivationKind::kIdentity) {
    dz = dh;
    return;
  }
  const Eigen::Index features = z.rows() / c.m;
  dz.resize(dh.rows(), dh.cols());
  for (Eigen::Index b = 0; b < dh.cols(); ++b)
    for (Eigen::Index i = 0; i < features; ++i)
      vjp_tensorial_mandel(s, c.dim, spec[b * features + i], &dh(i * c.m, b), &dz(i * c.m, b));
}

void load_step(const BatchView& batch, const double* src, std::size_t c0, std::size_t count, int t, Mat& out) {
  out.resize(batch.io, static_cast<Eigen::Index>(count));
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t s = batch.index ? batch.index[c0 + b] : c0 + b;
    const double* p = src + (s * batch.steps + t) * batch.io;
    for (int k = 0; k < batch.io; ++k) out(k, static_cast<Eigen::Index>(b)) = p[k];
  }
}

struct DenseCache {
  Mat x, z;
  std::vector<Spectrum> spec;
};

struct GruCache {
  Mat x, hp, r, z, q, n, hhat;
  std::vector<Spectrum> spec;
};

struct ChunkCache {
  std::vector<Mat> raw;                   // per step, data frame input
  std::vector<Mat> y;                     // per step, model frame output
  std::vector<std::vector<DenseCache>> dense;  // per step, per dense layer
  std::vector<std::vector<GruCache>> gru;      // per step, per gru layer
};

void dense_forward(const Ctx& c, const DenseWeights& w, const DenseLayout& lay, const Mat& x, DenseCache& cache,
                   Mat& h) {
  cache.x = x;
  cache.z = w.w * x;
  cache.z.colwise() += w.b;
  if (lay.activated)
    activate(c, c.act, cache.z, h, cache.spec);
  else
    h = cache.z;
}

// Multiplies each m-row block i of `a` column-wise by s(i, b).
Mat block_scale(const Mat& a, const Mat& s, int m) {
  Mat out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    out.middleRows(i * m, m) = a.middleRows(i * m, m) * s.row(i).asDiagonal();
  return out;
}

// Per-block column dot products: out(i, b) = <a_i(b), c_i(b)>.
Mat block_dot(const Mat& a, const Mat& b, int m) {
  const Eigen::Index features = a.rows() / m;
  Mat out(features, a.cols());
  for (Eigen::Index i = 0; i < features; ++i)
    out.row(i) = a.middleRows(i * m, m).cwiseProduct(b.middleRows(i * m, m)).colwise().sum();
  return out;
}

Mat logistic(const Mat& a) {
  const ScalarActivation s{ActivationKind::kLogistic};
  return a.unaryExpr([s](double t) { return s.value(t); });
}

void gru_forward(const Ctx& c, const GruWeights& w, const Mat& x, const Mat& hp, GruCache& cache, Mat& h) {
  cache.x = x;
  cache.hp = hp;
  Mat ar = w.wr_x * x + w.wr_h * hp;
  ar.colwise() += w.b_r;
  Mat az = w.wz_x * x + w.wz_h * hp;
  az.colwise() += w.b_z;
  cache.r = logistic(ar);
  cache.z = logistic(az);
  Mat p = w.w_ih * x;
  p.colwise() += w.b_ih;
  cache.q = w.w_hh * hp;
  cache.q.colwise() += w.b_hh;
  cache.n = p + block_scale(cache.q, cache.r, c.m);
  activate(c, c.act, cache.n, cache.hhat, cache.spec);
  const Mat one_minus_z = (1.0 - cache.z.array()).matrix();
  h = block_scale(cache.hhat, one_minus_z, c.m) + block_scale(hp, cache.z, c.m);
}

void forward_chunk(const Ctx& c, const BatchView& batch, std::size_t c0, std::size_t count, ChunkCache& cache,
                   double* out) {
  const Network& net = c.net;
  const int steps = batch.steps;
  const auto& dl = net.dense_layout();
  const auto& gl = net.gru_layout();
  const bool rot = c.mat.has_rotation;
  cache.raw.resize(steps);
  cache.y.resize(steps);
  cache.dense.assign(steps, std::vector<DenseCache>(dl.size()));
  cache.gru.assign(steps, std::vector<GruCache>(gl.size()));
  std::vector<Mat> state(gl.size());
  for (std::size_t l = 0; l < gl.size(); ++l)
    state[l] = Mat::Zero(static_cast<Eigen::Index>(gl[l].n_out) * c.m, static_cast<Eigen::Index>(count));

  for (int t = 0; t < steps; ++t) {
    load_step(batch, batch.x, c0, count, t, cache.raw[t]);
    Mat x = rot ? Mat(c.mat.action * cache.raw[t]) : cache.raw[t];
    for (std::size_t l = 0; l < gl.size(); ++l) {
      Mat h;
      gru_forward(c, c.mat.gru[l], x, state[l], cache.gru[t][l], h);
      state[l] = h;
      x = std::move(h);
    }
    for (std::size_t l = 0; l < dl.size(); ++l) {
      Mat h;
      dense_forward(c, c.mat.dense[l], dl[l], x, cache.dense[t][l], h);
      x = std::move(h);
    }
    cache.y[t] = std::move(x);
    if (out != nullptr) {
      const Mat yo = rot ? Mat(c.mat.action.transpose() * cache.y[t]) : cache.y[t];
      for (std::size_t b = 0; b < count; ++b) {
        double* p = out + ((c0 + b) * steps + t) * batch.io;
        for (int k = 0; k < batch.io; ++k) p[k] = yo(k, static_cast<Eigen::Index>(b));
      }
    }
  }
}

void gru_backward(const Ctx& c, const GruWeights& w, const GruCache& cache, const Mat& dh, GruWeights& acc, Mat& dx,
                  Mat& dhp) {
  const int m = c.m;
  const Mat one_minus_z = (1.0 - cache.z.array()).matrix();
  const Mat dhhat = block_scale(dh, one_minus_z, m);
  const Mat dz = block_dot(dh, cache.hp - cache.hhat, m);
  dhp = block_scale(dh, cache.z, m);
  Mat dn;
  activate_vjp(c, c.act, cache.n, cache.spec, dhhat, dn);
  const Mat dr = block_dot(dn, cache.q, m);
  const Mat dq = block_scale(dn, cache.r, m);
  const Mat dar = dr.cwiseProduct(cache.r.cwiseProduct(Mat((1.0 - cache.r.array()).matrix())));
  const Mat daz = dz.cwiseProduct(cache.z.cwiseProduct(one_minus_z));

  acc.w_ih.noalias() += dn * cache.x.transpose();
  acc.b_ih += dn.rowwise().sum();
  acc.w_hh.noalias() += dq * cache.hp.transpose();
  acc.b_hh += dq.rowwise().sum();
  acc.wr_x.noalias() += dar * cache.x.transpose();
  acc.wr_h.noalias() += dar * cache.hp.transpose();
  acc.b_r += dar.rowwise().sum();
  acc.wz_x.noalias() += daz * cache.x.transpose();
  acc.wz_h.noalias() += daz * cache.hp.transpose();
  acc.b_z += daz.rowwise().sum();

  dx.noalias() = w.w_ih.transpose() * dn;
  dx.noalias() += w.wr_x.transpose() * dar;
  dx.noalias() += w.wz_x.transpose() * daz;
  dhp.noalias() += w.w_hh.transpose() * dq;
  dhp.noalias() += w.wr_h.transpose() * dar;
  dhp.noalias() += w.wz_h.transpose() * daz;
}

double backward_chunk(const Ctx& c, const BatchView& batch, std::size_t c0, std::size_t count,
                      const ChunkCache& cache, std::span<const double> weights, Materialized& acc) {
  const Network& net = c.net;
  const int steps = batch.steps;
  const auto& dl = net.dense_layout();
  const auto& gl = net.gru_layout();
  const bool rot = c.mat.has_rotation;
  const double inv_n = 1.0 / static_cast<double>(batch.n);
  double loss = 0.0;

  std::vector<Mat> carry(gl.size());
  for (std::size_t l = 0; l < gl.size(); ++l)
    carry[l] = Mat::Zero(static_cast<Eigen::Index>(gl[l].n_out) * c.m, static_cast<Eigen::Index>(count));

  Mat target;
  for (int t = steps - 1; t >= 0; --t) {
    load_step(batch, batch.y, c0, count, t, target);
    const Mat& y = cache.y[t];
    const Mat pred = rot ? Mat(c.mat.action.transpose() * y) : y;
    Mat g = pred - target;
    for (int k = 0; k < batch.io; ++k) {
      const double wk = weights.empty() ? 1.0 : weights[k];
      loss += wk * g.row(k).squaredNorm();
      g.row(k) *= 2.0 * wk * inv_n;
    }
    Mat dh;
    if (rot) {
      acc.action.noalias() += y * g.transpose();
      dh = c.mat.action * g;
    } else {
      dh = std::move(g);
    }
    for (std::size_t li = dl.size(); li-- > 0;) {
      const DenseCache& dc = cache.dense[t][li];
      Mat dz;
      if (dl[li].activated)
        activate_vjp(c, c.act, dc.z, dc.spec, dh, dz);
      else
        dz = std::move(dh);
      acc.dense[li].w.noalias() += dz * dc.x.transpose();
      acc.dense[li].b += dz.rowwise().sum();
      dh.noalias() = c.mat.dense[li].w.transpose() * dz;
    }
    for (std::size_t li = gl.size(); li-- > 0;) {
      const Mat dtot = dh + carry[li];
      Mat dx, dhp;
      gru_backward(c, c.mat.gru[li], cache.gru[t][li], dtot, acc.gru[li], dx, dhp);
      carry[li] = std::move(dhp);
      dh = std::move(dx);
    }
    if (rot) acc.action.noalias() += dh * cache.raw[t].transpose();
  }
  return loss * inv_n;
}

void check_batch(const Network& net, const BatchView& batch) {
  if (batch.io != net.io_size()) throw std::invalid_argument("batch component count does not match the model");
  if (batch.steps < 1) throw std::invalid_argument("batch needs at least one step");
  if (!net.spec().is_recurrent() && batch.steps != 1)
    throw std::invalid_argument("feedforward models take single-step samples");
}

Ctx make_ctx(const Network& net, const Materialized& mat) {
  const auto& fs = net.space();
  return Ctx{net, mat, ScalarActivation{net.spec().activation}, net.spec().dim, fs.m, fs.dim == 0};
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

double loss_and_gradient(const Network& net, std::span<const double> params, const BatchView& batch,
                         std::span<const double> weights, std::span<double> grad, Exec exec) {
  check_batch(net, batch);
  if (!weights.empty() && static_cast<int>(weights.size()) != batch.io)
    throw std::invalid_argument("loss weight count does not match the model");
  if (grad.size() != net.num_params()) throw std::invalid_argument("gradient vector has wrong length");
  if (batch.n == 0) throw std::invalid_argument("empty batch");

  const Materialized mat = net.materialize(params);
  const Ctx c = make_ctx(net, mat);
  const std::size_t chunks = (batch.n + kChunk - 1) / kChunk;
  const std::size_t slots = std::min(chunks, kMaxSlots);
  std::vector<Materialized> acc(slots);
  std::vector<double> slot_loss(slots, 0.0);
  for (auto& a : acc) a.set_zero_like(mat);

  const auto run_slot = [&](std::size_t s) {
    ChunkCache cache;
    for (std::size_t k = s; k < chunks; k += slots) {
      const std::size_t c0 = k * kChunk;
      const std::size_t count = std::min(kChunk, batch.n - c0);
      forward_chunk(c, batch, c0, count, cache, nullptr);
      slot_loss[s] += backward_chunk(c, batch, c0, count, cache, weights, acc[s]);
    }
  };
  const long long nslots = static_cast<long long>(slots);
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (long long s = 0; s < nslots; ++s) run_slot(static_cast<std::size_t>(s));
  } else {
    for (long long s = 0; s < nslots; ++s) run_slot(static_cast<std::size_t>(s));
  }

  double loss = slot_loss[0];
  for (std::size_t s = 1; s < slots; ++s) {
    acc[0].add(acc[s]);
    loss += slot_loss[s];
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  net.project_gradient(acc[0], grad);
  if (mat.has_rotation)
    for (std::size_t p = 0; p < mat.d_action.size(); ++p)
      grad[net.rotation_offset() + p] = acc[0].action.cwiseProduct(mat.d_action[p]).sum();
  return loss;
}

void predict(const Network& net, std::span<const double> params, const BatchView& batch, double* out, Exec exec) {
  check_batch(net, batch);
  const Materialized mat = net.materialize(params);
  const Ctx c = make_ctx(net, mat);
  const std::size_t chunks = (batch.n + kChunk - 1) / kChunk;
  const auto run = [&](std::size_t k) {
    ChunkCache cache;
    const std::size_t c0 = k * kChunk;
    forward_chunk(c, batch, c0, std::min(kChunk, batch.n - c0), cache, out);
  };
  const long long n = static_cast<long long>(chunks);
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (long long k = 0; k < n; ++k) run(static_cast<std::size_t>(k));
  } else {
    for (long long k = 0; k < n; ++k) run(static_cast<std::size_t>(k));
  }
}

}  // namespace tfenn
