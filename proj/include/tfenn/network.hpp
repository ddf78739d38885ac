// SPDX-License-Identifier: Apache-2.0
//
// Model definitions: equivariant dense and GRU layers over tensor features,
// scalar-feature baselines, and the learnable-rotation wrapper.
//
// Every model kind is expressed over a FeatureSpace. Tensor models use
// features of Mandel length m = 3 or 6 whose weights and biases live in the
// symmetry subspaces; scalar baselines use m = 1 with d(d+1)/2 features at
// the input and output. Both therefore consume and emit one Mandel vector per
// step, which lets the scalers, loss, and kernels treat them uniformly.
#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tfenn/activation.hpp"
#include "tfenn/errors.hpp"
#include "tfenn/rng.hpp"
#include "tfenn/symmetry.hpp"
#include "tfenn/tensor_core.hpp"

namespace tfenn {

enum class ModelKind { kTfennFF, kTfennGRU, kScalarMLP, kScalarGRU };

ModelKind parse_model_kind(std::string_view name);
std::string_view to_string(ModelKind kind);

struct ModelSpec {
  ModelKind kind = ModelKind::kTfennFF;
  int dim = 2;
  SymmetryKind symmetry = SymmetryKind::kIsotropic;
  std::vector<int> hidden{8, 8};
  ActivationKind activation = ActivationKind::kTanh;
  bool rotation_wrapper = false;
  double penalty_weight = 1e-2;

  bool is_tensor() const { return kind == ModelKind::kTfennFF || kind == ModelKind::kTfennGRU; }
  bool is_recurrent() const { return kind == ModelKind::kTfennGRU || kind == ModelKind::kScalarGRU; }

  std::string to_json() const;
  static ModelSpec from_json(const std::string& text);
};

/// "2x23" -> {23, 23}.
std::vector<int> parse_widths(std::string_view text);
std::string format_widths(const std::vector<int>& widths);

/// Per-feature vector space and the admissible parameter subspaces.
struct FeatureSpace {
  int dim = 0;  // 0 for scalar features
  int m = 1;    // feature vector length
  std::vector<MandelMatrix> weight_basis;
  std::vector<SmallVec> bias_basis;

  int kw() const { return static_cast<int>(weight_basis.size()); }
  int kb() const { return static_cast<int>(bias_basis.size()); }

  static FeatureSpace scalar();
  static FeatureSpace tensor(SymmetryClass cls);
};

struct DenseLayout {
  int n_in = 0, n_out = 0;
  bool activated = true;
  std::size_t w = 0, b = 0;  // offsets into the flat parameter vector
};

struct GruLayout {
  int n_in = 0, n_out = 0;
  std::size_t wr_x = 0, wr_h = 0, wz_x = 0, wz_h = 0, w_ih = 0, w_hh = 0;
  std::size_t b_r = 0, b_z = 0, b_ih = 0, b_hh = 0;
};

struct ParamBlock {
  std::string name;
  std::size_t offset = 0, size = 0;
};

/// Flat parameter vector plus a description of its blocks.
struct ModelParams {
  std::vector<double> values;
  std::vector<ParamBlock> blocks;

  std::size_t size() const { return values.size(); }
  std::span<double> block(std::size_t i) { return {values.data() + blocks[i].offset, blocks[i].size}; }
  std::span<const double> block(std::size_t i) const {
    return {values.data() + blocks[i].offset, blocks[i].size};
  }
  /// Split into per-block vectors and rebuild; lossless.
  std::vector<std::vector<double>> unflatten() const;
  static ModelParams flatten(const std::vector<std::vector<double>>& parts, std::vector<ParamBlock> blocks);
};

struct DenseWeights {
  Eigen::MatrixXd w;  // (n_out m) x (n_in m)
  Eigen::VectorXd b;  // n_out m
};

struct GruWeights {
  Eigen::MatrixXd wr_x, wr_h, wz_x, wz_h;  // n_out x (n_src m)
  Eigen::VectorXd b_r, b_z;                // n_out
  Eigen::MatrixXd w_ih, w_hh;              // (n_out m) x (n_src m)
  Eigen::VectorXd b_ih, b_hh;              // n_out m
};

/// Parameters expanded into dense matrices for evaluation. Also used as the
/// gradient accumulator shape inside the kernels.
struct Materialized {
  std::vector<DenseWeights> dense;  // feedforward layers, or the GRU output layer
  std::vector<GruWeights> gru;
  bool has_rotation = false;
  Eigen::MatrixXd action;                 // Mandel action x -> R^T x R
  std::vector<Eigen::MatrixXd> d_action;  // derivative per rotation parameter

  void set_zero_like(const Materialized& shape);
  void add(const Materialized& o);
};

class Network {
 public:
  explicit Network(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const FeatureSpace& space() const { return space_; }
  std::size_t num_params() const { return num_params_; }
  /// Mandel length of the data tensors.
  int io_size() const { return mandel_size(spec_.dim); }
  const std::vector<DenseLayout>& dense_layout() const { return dense_; }
  const std::vector<GruLayout>& gru_layout() const { return gru_; }
  std::size_t rotation_offset() const { return rot_offset_; }
  int rotation_size() const { return rot_size_; }

  ModelParams init_params(Rng& rng) const;
  std::vector<ParamBlock> blocks() const;

  Materialized materialize(std::span<const double> params) const;
  /// Coefficient-space gradient from a materialized-shape gradient.
  void project_gradient(const Materialized& g, std::span<double> out) const;

  /// Rotation of the wrapper (identity when there is none).
  Rotation wrapper_rotation(std::span<const double> params) const;
  /// Quaternion penalty value and its gradient contribution.
  double rotation_penalty(std::span<const double> params, std::span<double> grad) const;

 private:
  ModelSpec spec_;
  FeatureSpace space_;
  std::vector<DenseLayout> dense_;
  std::vector<GruLayout> gru_;
  std::size_t rot_offset_ = 0;
  int rot_size_ = 0;
  std::size_t num_params_ = 0;
};

/// Mandel action matrix of x -> R^T x R and its derivatives with respect to
/// the wrapper parameters (angle for d = 2, raw quaternion for d = 3).
void rotation_action(int dim, std::span<const double> rot_params, Eigen::MatrixXd& action,
                     std::vector<Eigen::MatrixXd>& d_action);

/// Parameter count from the layer accounting alone.
std::size_t count_parameters(const ModelSpec& spec);

/// Binary model file: "TFENNMDL", u32 version, u32 header length, header
/// JSON text (model spec plus caller metadata), u64 count, little-endian
/// doubles in flatten order.
struct ModelFile {
  ModelSpec spec;
  std::string metadata_json = "{}";
  std::vector<double> params;
};

void save_model(const std::string& path, const ModelFile& model);
ModelFile load_model(const std::string& path);

}  // namespace tfenn
