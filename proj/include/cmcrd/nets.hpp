#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cmcrd/matrix.hpp"

namespace cmcrd {

enum class Family { Dnn, Dgcnn };

const char* to_string(Family f);
Family parse_family(const std::string& s);

/// Feature extractor h followed by a linear classifier g.
///
/// DNN: input -> hidden[0] -> ... -> hidden[m-1] -> feature_dim, ReLU after
/// every extractor layer.
///
/// DGCNN: the input row is read as `channels` nodes with `bands` features
/// each (channel-major). A learnable adjacency is rectified and normalised
/// to L = -D^{-1/2} relu(A) D^{-1/2} (the scaled Laplacian with
/// lambda_max = 2), then `cheb_order` Chebyshev terms T_0..T_{K-1} filter
/// the node features into hidden[0] maps per node. Remaining hidden widths
/// and the feature layer are dense.
struct NetworkSpec {
  Family family = Family::Dnn;
  std::size_t input_dim = 310;
  std::size_t channels = 62;
  std::size_t bands = 5;
  std::vector<std::size_t> hidden = {256, 128, 64, 64, 32};
  std::size_t feature_dim = 32;
  std::size_t num_classes = 3;
  std::size_t cheb_order = 2;
  double l2_coefficient = 1e-4;

  static NetworkSpec dnn(std::size_t input_dim, std::size_t num_classes);
  static NetworkSpec dgcnn(std::size_t channels, std::size_t bands, std::size_t num_classes);

  /// Number of extractor layers whose outputs are exposed as hint layers.
  std::size_t extractor_layers() const;
  /// Width of extractor layer `i`'s output.
  std::size_t layer_width(std::size_t i) const;
};

void validate(const NetworkSpec& spec);

struct NamedTensor {
  std::string name;
  Matrix value;
};

/// Ordered collection of named parameter tensors. Gradients use the same
/// type with identical names and shapes.
class ParamSet {
 public:
  void add(std::string name, Matrix value);
  std::size_t size() const noexcept { return tensors_.size(); }
  NamedTensor& operator[](std::size_t i) { return tensors_[i]; }
  const NamedTensor& operator[](std::size_t i) const { return tensors_[i]; }
  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t scalar_count() const;
  ParamSet zeros_like() const;
  bool all_finite() const;
  /// this += scale * other (shapes must match).
  void axpy(double scale, const ParamSet& other);
  /// Appends every tensor of `other` with `prefix` prepended to its name.
  void append(const ParamSet& other, std::string_view prefix);
  /// Inverse of append: tensors whose names start with `prefix`.
  ParamSet extract(std::string_view prefix) const;

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<NamedTensor> tensors_;
};

/// Deterministic in (spec, seed). Weights are fan-in scaled uniform, biases
/// zero, the DGCNN adjacency small positive and symmetric.
ParamSet init_params(const NetworkSpec& spec, std::uint64_t seed);

struct DgcnnCache {
  Matrix relu_adjacency;
  std::vector<double> inv_sqrt_degree;
  Matrix laplacian;
  std::vector<Matrix> cheb;       // T_k X in (channels x batch*bands) layout
  std::vector<Matrix> cheb_rows;  // same terms as (batch*channels x bands)
};

struct ForwardResult {
  Matrix input;
  std::vector<Matrix> layer_outputs;  // post-activation, one per extractor layer
  Matrix logits;
  Matrix probs;
  DgcnnCache graph;

  const Matrix& features() const { return layer_outputs.back(); }
  std::size_t batch_size() const { return input.rows(); }
};

ForwardResult forward(const NetworkSpec& spec, const ParamSet& params, const Matrix& batch);

/// Upstream gradients at the network outputs. Empty matrices mean "no
/// gradient". `layers[i]` is added at extractor layer i's output.
struct OutputGrads {
  Matrix logits;
  std::vector<Matrix> layers;

  static OutputGrads for_result(const ForwardResult& r);
  Matrix& features() { return layers.back(); }
};

ParamSet backward(const NetworkSpec& spec, const ParamSet& params, const ForwardResult& cache,
                  const OutputGrads& upstream);

// ---------------------------------------------------------------------------
// Linear maps used by critics and regressors: y = x W + b, weight (in x out).

ParamSet init_linear(std::size_t in, std::size_t out, std::uint64_t seed, std::string_view prefix);
Matrix linear_forward(const ParamSet& p, std::string_view prefix, const Matrix& x);
/// Accumulates dW, db into `grads` and returns dX (empty when `need_input_grad`
/// is false).
Matrix linear_backward(const ParamSet& p, std::string_view prefix, const Matrix& x,
                       const Matrix& dy, ParamSet& grads, bool need_input_grad = true);

// ---------------------------------------------------------------------------

enum class OptRule { Sgd, SgdMomentum, Adam };

const char* to_string(OptRule r);
OptRule parse_opt_rule(const std::string& s);

struct OptimizerConfig {
  OptRule rule = OptRule::Sgd;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
};

struct OptimizerState {
  OptimizerConfig config;
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::size_t step = 0;
};

OptimizerState make_optimizer(const OptimizerConfig& config, const ParamSet& params);

/// One update. Weight decay adds weight_decay * theta to each gradient.
/// Throws TrainingError (with `provenance` in the message) on a non-finite
/// gradient, leaving params untouched.
void opt_step(OptimizerState& state, ParamSet& params, const ParamSet& grads,
              std::string_view provenance = {});

// ---------------------------------------------------------------------------
// Checkpoints: JSON {"format": "cmcrd-params", "version": 1,
// "params": [{"name", "shape": [rows, cols], "values": [...row-major...]}]}

void save_params(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_params(const std::filesystem::path& path);

}  // namespace cmcrd
