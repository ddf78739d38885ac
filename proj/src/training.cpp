// SPDX-License-Identifier: Apache-2.0
#include "tfenn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"

namespace tfenn {

ScalerKind parse_scaler_kind(std::string_view name) {
  if (name == "component-wise") return ScalerKind::kComponentWise;
  if (name == "tensor") return ScalerKind::kTensorSymmetry;
  if (name == "global") return ScalerKind::kGlobal;
  throw ConfigError("unknown scaler '" + std::string(name) + "' (component-wise, tensor, global)");
}

std::string_view to_string(ScalerKind kind) {
  switch (kind) {
    case ScalerKind::kComponentWise: return "component-wise";
    case ScalerKind::kTensorSymmetry: return "tensor";
    case ScalerKind::kGlobal: return "global";
  }
  return "component-wise";
}

Scaler Scaler::fit(ScalerKind kind, int dim, std::span<const double> data) {
  check_dim(dim);
  const int m = mandel_size(dim);
  if (data.empty() || data.size() % m != 0) throw std::invalid_argument("scaler data must hold whole Mandel vectors");
  const std::size_t count = data.size() / m;
  Scaler s;
  s.kind = kind;
  s.dim = dim;
  s.shift.assign(m, 0.0);
  s.scale.assign(m, 1.0);
  double max_abs = 0.0;
  for (double v : data) max_abs = std::max(max_abs, std::abs(v));
  auto check = [&](double sd) {
    if (!(sd > 1e-14 * max_abs) || !std::isfinite(sd))
      throw ConfigError("degenerate dataset: zero standard deviation in scaler fit");
    return sd;
  };

  bool identical = true;
  for (std::size_t k = m; k < data.size() && identical; ++k) identical = data[k] == data[k % m];
  if (identical) throw ConfigError("degenerate dataset: all tensors identical");

  std::vector<double> mean(m, 0.0);
  for (std::size_t i = 0; i < count; ++i)
    for (int c = 0; c < m; ++c) mean[c] += data[i * m + c];
  for (double& v : mean) v /= static_cast<double>(count);

  switch (kind) {
    case ScalerKind::kComponentWise:
      for (int c = 0; c < m; ++c) {
        double var = 0.0;
        for (std::size_t i = 0; i < count; ++i) var += std::pow(data[i * m + c] - mean[c], 2);
        s.shift[c] = mean[c];
        s.scale[c] = check(std::sqrt(var / static_cast<double>(count)));
      }
      break;
    case ScalerKind::kTensorSymmetry: {
      double mu = 0.0;
      for (int c = 0; c < dim; ++c) mu += mean[c];
      mu /= dim;
      double var = 0.0;
      for (std::size_t i = 0; i < count; ++i)
        for (int c = 0; c < dim; ++c) var += std::pow(data[i * m + c] - mu, 2);
      const double sd = check(std::sqrt(var / static_cast<double>(count * dim)));
      for (int c = 0; c < m; ++c) {
        s.shift[c] = c < dim ? mu : 0.0;
        s.scale[c] = sd;
      }
      break;
    }
    case ScalerKind::kGlobal: {
      // One deviation over all d^2 tensor entries: |x - mean|_F^2 / d^2.
      double var = 0.0;
      for (std::size_t i = 0; i < count; ++i)
        for (int c = 0; c < m; ++c) var += std::pow(data[i * m + c] - mean[c], 2);
      const double sd = check(std::sqrt(var / static_cast<double>(count * dim * dim)));
      for (int c = 0; c < m; ++c) {
        s.shift[c] = mean[c];
        s.scale[c] = sd;
      }
      break;
    }
  }
  return s;
}

void Scaler::apply(std::span<double> values) const {
  const std::size_t m = shift.size();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = (values[i] - shift[i % m]) / scale[i % m];
}

void Scaler::invert(std::span<double> values) const {
  const std::size_t m = shift.size();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = values[i] * scale[i % m] + shift[i % m];
}

SymTensor Scaler::apply(const SymTensor& s) const {
  SymTensor out = s;
  apply(out.mandel());
  return out;
}

SymTensor Scaler::invert(const SymTensor& s) const {
  SymTensor out = s;
  invert(out.mandel());
  return out;
}

std::string Scaler::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  j["dim"] = dim;
  j["shift"] = shift;
  j["scale"] = scale;
  return j.dump();
}

Scaler Scaler::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Scaler s;
  s.kind = parse_scaler_kind(j.at("kind").get<std::string>());
  s.dim = j.at("dim").get<int>();
  s.shift = j.at("shift").get<std::vector<double>>();
  s.scale = j.at("scale").get<std::vector<double>>();
  if (s.shift.size() != static_cast<std::size_t>(mandel_size(s.dim)) || s.scale.size() != s.shift.size())
    throw IoError("scaler statistics have the wrong length");
  return s;
}

double mse_loss(std::span<const double> predictions, std::span<const double> targets, std::size_t n) {
  if (predictions.size() != targets.size()) throw std::invalid_argument("prediction/target count mismatch");
  if (n == 0) throw std::invalid_argument("mse of an empty set");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) sum += (predictions[i] - targets[i]) * (predictions[i] - targets[i]);
  return sum / static_cast<double>(n);
}

ScalerKind default_scaler(const ModelSpec& spec) {
  return spec.is_tensor() ? ScalerKind::kTensorSymmetry : ScalerKind::kComponentWise;
}

std::vector<double> TrainedModel::predict(std::span<const double> inputs, std::size_t n, int steps, Exec exec) const {
  const Network net(spec);
  std::vector<double> x(inputs.begin(), inputs.end());
  if (x.size() != n * static_cast<std::size_t>(steps) * net.io_size())
    throw std::invalid_argument("input array does not match n x steps");
  input.apply(x);
  std::vector<double> y(x.size());
  BatchView batch{x.data(), nullptr, n, steps, net.io_size(), nullptr};
  tfenn::predict(net, params, batch, y.data(), exec);
  output.invert(y);
  return y;
}

ModelFile TrainedModel::to_file(const std::string& extra_metadata) const {
  nlohmann::json meta = nlohmann::json::parse(extra_metadata);
  meta["scalers"] = {{"input", nlohmann::json::parse(input.to_json())},
                     {"output", nlohmann::json::parse(output.to_json())},
                     {"global", nlohmann::json::parse(global.to_json())}};
  return ModelFile{spec, meta.dump(), params};
}

TrainedModel TrainedModel::from_file(const ModelFile& file) {
  TrainedModel m;
  m.spec = file.spec;
  m.params = file.params;
  try {
    const auto meta = nlohmann::json::parse(file.metadata_json);
    const auto& sc = meta.at("scalers");
    m.input = Scaler::from_json(sc.at("input").dump());
    m.output = Scaler::from_json(sc.at("output").dump());
    m.global = Scaler::from_json(sc.at("global").dump());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("model file carries no scaler statistics: " + std::string(e.what()));
  }
  return m;
}

double validation_loss(const TrainedModel& model, const Dataset& val, Exec exec) {
  if (val.n == 0) throw std::invalid_argument("empty validation split");
  std::vector<double> pred = model.predict(val.inputs, val.n, val.steps, exec);
  std::vector<double> target = val.outputs;
  model.global.apply(pred);
  model.global.apply(target);
  return mse_loss(pred, target, val.n);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st, const AdamConfig& cfg) {
  if (params.size() != grads.size() || st.m.size() != params.size() || st.v.size() != params.size())
    throw std::invalid_argument("adam: misaligned parameter, gradient and moment vectors");
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grads[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    params[i] -= cfg.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.eps);
  }
}

TrainResult train(const ModelSpec& spec, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
  train_set.validate();
  val_set.validate();
  if (train_set.n == 0 || val_set.n == 0) throw ConfigError("training and validation splits must be nonempty");
  if (train_set.dim != spec.dim || val_set.dim != spec.dim) throw ConfigError("dataset dimension does not match model");
  if (train_set.steps != val_set.steps) throw ConfigError("train/validation step counts differ");
  if (spec.is_recurrent() != train_set.sequence)
    throw ConfigError(spec.is_recurrent() ? "recurrent models need a sequence dataset"
                                          : "feedforward models need a pair dataset");
  if (cfg.batch_size == 0 || cfg.epochs < 1 || !(cfg.adam.lr > 0)) throw ConfigError("invalid training configuration");

  const Network net(spec);
  const int io = net.io_size();
  TrainResult res;
  TrainedModel& model = res.model;
  model.spec = spec;
  model.input = Scaler::fit(cfg.input_scaler.value_or(default_scaler(spec)), spec.dim, train_set.inputs);
  model.output = Scaler::fit(cfg.output_scaler.value_or(default_scaler(spec)), spec.dim, train_set.outputs);
  model.global = Scaler::fit(ScalerKind::kGlobal, spec.dim, train_set.outputs);

  std::vector<double> xs = train_set.inputs, ys = train_set.outputs;
  model.input.apply(xs);
  model.output.apply(ys);
  // Squared errors in the model's output space, reweighted to the global space.
  std::vector<double> weights(io);
  for (int c = 0; c < io; ++c) weights[c] = std::pow(model.output.scale[c] / model.global.scale[c], 2);

  const Rng root(cfg.seed);
  Rng init_rng = root.split(1);
  ModelParams params = net.init_params(init_rng);
  if (cfg.initial_rotation) {
    if (static_cast<int>(cfg.initial_rotation->size()) != net.rotation_size())
      throw ConfigError("initial rotation has the wrong number of parameters");
    std::copy(cfg.initial_rotation->begin(), cfg.initial_rotation->end(),
              params.values.begin() + static_cast<std::ptrdiff_t>(net.rotation_offset()));
  }
  res.initial_params = params.values;
  model.params = params.values;

  AdamState adam(net.num_params());
  std::vector<double> grad(net.num_params());
  std::vector<std::size_t> order(train_set.n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = root.split(2);
  std::vector<double> best = params.values;
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - b0);
      const BatchView batch{xs.data(), ys.data(), count, train_set.steps, io, order.data() + b0};
      const double loss = loss_and_gradient(net, params.values, batch, weights, grad);
      const double penalty = net.rotation_penalty(params.values, grad);
      if (!std::isfinite(loss) || !std::isfinite(penalty))
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
      for (double g : grad)
        if (!std::isfinite(g)) throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(count);
      adam_step(params.values, grad, adam, cfg.adam);
    }
    epoch_loss /= static_cast<double>(train_set.n);
    model.params = params.values;
    const double val = validation_loss(model, val_set);
    if (!std::isfinite(val)) throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    if (val < best_val) {
      best_val = val;
      best = params.values;
      res.best_epoch = epoch;
    }
    res.history.push_back({epoch, epoch_loss, val, best_val});
    if (cfg.on_epoch) cfg.on_epoch(epoch, epoch_loss, val);
  }
  model.params = best;
  res.best_val_loss = best_val;
  return res;
}

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::string out = "epoch,train_loss,val_loss,min_val_loss\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_loss, r.min_val_loss);
    out += buf;
  }
  return out;
}

double symmetry_error(const ModelFn& f, int dim, SymmetryClass cls, int n, Rng& rng,
                      const SymmetryErrorOptions& opts) {
  if (n < 1) throw ConfigError("symmetry error needs N >= 1");
  if (cls.dim != dim) throw DimensionError("symmetry class dimension does not match the model");
  const int m = mandel_size(dim);
  const int steps = opts.inputs ? opts.inputs->steps : opts.steps;
  if (steps < 1) throw ConfigError("sequence length must be positive");
  if (opts.inputs && (opts.inputs->dim != dim || opts.inputs->n == 0))
    throw ConfigError("symmetry-error inputs do not match the model");
  const std::size_t len = static_cast<std::size_t>(steps) * m;
  std::vector<double> x(2 * n * len);
  std::vector<Rotation> rots;
  for (int i = 0; i < n; ++i) {
    double* a = x.data() + static_cast<std::size_t>(i) * len;
    double* b = x.data() + static_cast<std::size_t>(n + i) * len;
    if (opts.inputs) {
      const auto src = opts.inputs->input(rng.below(opts.inputs->n));
      std::copy(src.begin(), src.end(), a);
    } else {
      for (int t = 0; t < steps; ++t) {
        const SmallMat fm = random_deformation(dim, opts.eig_low, opts.eig_high, rng);
        const SymTensor c = SymTensor::from_matrix(SmallMat(fm.transpose() * fm));
        std::copy(c.mandel().begin(), c.mandel().end(), a + static_cast<std::size_t>(t) * m);
      }
    }
    const Rotation r = sample_group_element(cls, rng);
    for (int t = 0; t < steps; ++t) {
      const SymTensor c = SymTensor::from_mandel(dim, {a + static_cast<std::size_t>(t) * m, static_cast<std::size_t>(m)});
      const SymTensor rc = rotate_sym(c, r);
      std::copy(rc.mandel().begin(), rc.mandel().end(), b + static_cast<std::size_t>(t) * m);
    }
    rots.push_back(r);
  }
  const std::vector<double> y = f(x, 2 * static_cast<std::size_t>(n), steps);
  if (y.size() != x.size()) throw DimensionError("model output does not match its input shape");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Rotation rt(SmallMat(rots[i].matrix().transpose()));
    double num = 0.0, na = 0.0, nb = 0.0;
    for (int t = 0; t < steps; ++t) {
      const std::size_t off = static_cast<std::size_t>(t) * m;
      const SymTensor ya = SymTensor::from_mandel(dim, {y.data() + i * len + off, static_cast<std::size_t>(m)});
      const SymTensor yb =
          SymTensor::from_mandel(dim, {y.data() + (static_cast<std::size_t>(n) + i) * len + off, static_cast<std::size_t>(m)});
      const SymTensor back = rotate_sym(yb, rt);
      num += (ya - back).norm() * (ya - back).norm();
      na += ya.norm() * ya.norm();
      nb += yb.norm() * yb.norm();
    }
    const double den = std::sqrt(na) + std::sqrt(nb);
    if (den < 1e-30) continue;
    sum += std::sqrt(num) / den;
  }
  return 2.0 * sum / n;
}

double symmetry_error(const TrainedModel& model, SymmetryClass cls, int n, Rng& rng, const SymmetryErrorOptions& opts) {
  SymmetryErrorOptions o = opts;
  if (!model.spec.is_recurrent()) o.steps = 1;
  if (!model.spec.is_recurrent() && o.inputs && o.inputs->steps != 1)
    throw ConfigError("feedforward models take pair datasets");
  const ModelFn f = [&model](std::span<const double> in, std::size_t count, int steps) {
    return model.predict(in, count, steps);
  };
  return symmetry_error(f, model.spec.dim, cls, n, rng, o);
}

}  // namespace tfenn
