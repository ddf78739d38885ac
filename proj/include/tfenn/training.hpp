// SPDX-License-Identifier: Apache-2.0
//
// Scaling schemes, losses, Adam, the training loop, and the symmetry-error
// audit.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tfenn/data.hpp"
#include "tfenn/errors.hpp"
#include "tfenn/kernels.hpp"
#include "tfenn/network.hpp"

namespace tfenn {

enum class ScalerKind { kComponentWise, kTensorSymmetry, kGlobal };

ScalerKind parse_scaler_kind(std::string_view name);
std::string_view to_string(ScalerKind kind);

/// Affine map v -> (v - shift) / scale on Mandel vectors. The tensor scheme
/// shifts by a multiple of I and divides by one scalar, so it commutes with
/// every orthogonal change of frame.
struct Scaler {
  ScalerKind kind = ScalerKind::kComponentWise;
  int dim = 2;
  std::vector<double> shift;  // Mandel vector
  std::vector<double> scale;  // per Mandel component

  /// Statistics over `count` Mandel vectors (population standard
  /// deviations). Throws ConfigError on zero spread.
  static Scaler fit(ScalerKind kind, int dim, std::span<const double> data);

  void apply(std::span<double> values) const;   // any whole number of vectors
  void invert(std::span<double> values) const;
  SymTensor apply(const SymTensor& s) const;
  SymTensor invert(const SymTensor& s) const;

  std::string to_json() const;
  static Scaler from_json(const std::string& text);
};

/// (1/n) sum over samples of the squared Frobenius norm of the difference,
/// summed over steps.
double mse_loss(std::span<const double> predictions, std::span<const double> targets, std::size_t n);

/// A network together with the scalers that map physical tensors into its
/// input/output spaces, and the global scaler used for reported losses.
struct TrainedModel {
  ModelSpec spec;
  std::vector<double> params;
  Scaler input, output, global;

  /// Physical-unit outputs for physical-unit inputs (n x steps x m).
  std::vector<double> predict(std::span<const double> inputs, std::size_t n, int steps,
                              Exec exec = Exec::kParallel) const;

  ModelFile to_file(const std::string& extra_metadata = "{}") const;
  static TrainedModel from_file(const ModelFile& file);
};

/// Scheme 1 for scalar baselines, scheme 2 for tensor models.
ScalerKind default_scaler(const ModelSpec& spec);

/// Model -> invert -> global scale on both sides -> mse.
double validation_loss(const TrainedModel& model, const Dataset& val, Exec exec = Exec::kParallel);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;
  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 128;
  int epochs = 2000;
  std::uint64_t seed = 0;
  std::optional<ScalerKind> input_scaler, output_scaler;
  /// Starting wrapper rotation (angle, or quaternion); random when unset.
  std::optional<std::vector<double>> initial_rotation;
  std::function<void(int epoch, double train_loss, double val_loss)> on_epoch;
};

struct HistoryRow {
  int epoch = 0;
  double train_loss = 0.0, val_loss = 0.0, min_val_loss = 0.0;
};

struct TrainResult {
  TrainedModel model;  // parameters at the minimum validation loss
  std::vector<double> initial_params;
  std::vector<HistoryRow> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

TrainResult train(const ModelSpec& spec, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg);

std::string history_csv(const std::vector<HistoryRow>& history);

/// Physical-units model map used by the symmetry audit.
using ModelFn = std::function<std::vector<double>(std::span<const double> inputs, std::size_t n, int steps)>;

struct SymmetryErrorOptions {
  double eig_low = 0.7, eig_high = 1.3;
  int steps = 10;  // sequence length for recurrent models
  /// When set, inputs are drawn from these samples instead of random C.
  const Dataset* inputs = nullptr;
};

/// (2/N) sum_i |f(C_i) - R_i f(R_i^T C_i R_i) R_i^T| / (|f(C_i)| + |f(R_i^T C_i R_i)|)
/// with Frobenius norms over all steps; terms with denominator < 1e-30 are
/// skipped.
double symmetry_error(const ModelFn& f, int dim, SymmetryClass cls, int n, Rng& rng,
                      const SymmetryErrorOptions& opts = {});
double symmetry_error(const TrainedModel& model, SymmetryClass cls, int n, Rng& rng,
                      const SymmetryErrorOptions& opts = {});

}  // namespace tfenn
