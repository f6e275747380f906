#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dustbin/array.hpp"
#include "dustbin/labeled_set.hpp"
#include "dustbin/tape.hpp"

namespace dustbin {

/// `linear` is a single affine layer, used for closed-form attack checks.
enum class Architecture : std::uint8_t { Linear = 0, Mlp3 = 1, LenetSmall = 2 };

std::string to_string(Architecture a);
Architecture parse_architecture(std::string_view name);

struct ModelConfig {
  Architecture architecture = Architecture::Mlp3;
  Shape input_shape{2};
  std::size_t k_classes = 2;
  /// Adds the dustbin output at index K.
  bool augmented = false;
  /// mlp3: the two hidden widths. lenet-small: filter count per conv layer.
  std::vector<std::size_t> widths{32, 32};
  std::size_t kernel_size = 5;
  /// lenet-small: 2x2 max-pool after each conv layer.
  bool pool = true;
  /// Inverted dropout on the classifier head's input, training only.
  double dropout_p = 0.0;

  std::size_t output_dim() const { return k_classes + (augmented ? 1 : 0); }
  std::size_t input_size() const { return shape_size(input_shape); }
  void validate() const;

  static ModelConfig mlp3(std::size_t input_dim, std::size_t k, bool augmented, std::size_t width = 32);
  /// Three 5x5 conv layers of 32, 32 and 64 filters, then one FC softmax head.
  static ModelConfig lenet_small(Shape input_shape, std::size_t k, bool augmented);
  static ModelConfig linear(std::size_t input_dim, std::size_t k, bool augmented = false);

  bool operator==(const ModelConfig&) const = default;
};

/// Weights and biases, layer by layer in forward order.
struct Params {
  std::vector<Array> tensors;

  bool operator==(const Params&) const = default;
};

std::vector<Shape> param_shapes(const ModelConfig& config);

/// Immutable once built or trained; safe for concurrent inference.
class Model {
 public:
  Model(ModelConfig config, Params params);

  const ModelConfig& config() const { return config_; }
  const Params& params() const { return params_; }
  std::size_t output_dim() const { return config_.output_dim(); }
  std::size_t k_classes() const { return config_.k_classes; }
  bool augmented() const { return config_.augmented; }
  /// Index of the dustbin output (== K). Meaningful for augmented models only.
  std::size_t dustbin() const { return config_.k_classes; }

 private:
  ModelConfig config_;
  Params params_;
};

/// Scaled uniform fan-in initialisation, zero biases. Deterministic in `seed`.
Model build(const ModelConfig& config, std::uint64_t seed);

/// All-zero parameters.
Model build_zero(const ModelConfig& config);

/// Pre-softmax scores Z(x) for one sample. Dropout is inactive.
Array logits(const Model& model, const Array& x);
std::vector<Array> logits(const Model& model, std::span<const Array> xs);
Array probs(const Model& model, const Array& x);
std::vector<Array> probs(const Model& model, std::span<const Array> xs);
/// Last hidden layer (mlp3) or the flattened last conv block (lenet-small).
Array features(const Model& model, const Array& x);
std::vector<Array> features(const Model& model, std::span<const Array> xs);

/// Argmax over all outputs, lowest index on ties.
std::size_t predict(const Model& model, const Array& x);
std::vector<std::size_t> predict(const Model& model, std::span<const Array> xs);

/// Argmax over K+1 scores; K means "dustbin". Threshold-free.
std::size_t decide_with_reject(const Array& scores, std::size_t k_classes);
std::size_t predict_with_reject(const Model& model, const Array& x);

struct InputGradient {
  Array logits;
  double value = 0.0;
  Array gradient;
};

/// Cross-entropy J(F(x), label) and dJ/dx.
InputGradient loss_gradient(const Model& model, const Array& x, std::size_t label);
/// w . Z(x) and its gradient with respect to x.
InputGradient logit_gradient(const Model& model, const Array& x, const Array& logit_weights);

/// Records the model on `tape` with parameters as variables. Used by
/// training and by gradient checks.
struct TapedModel {
  std::vector<Var> params;
  Var input;
  Var logits;
  Var features;
};
TapedModel record(Tape& tape, const Model& model, const Array& x, bool input_is_variable);

enum class Optimizer { Sgd, SgdMomentum };

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::SgdMomentum;
  double momentum = 0.9;
};

struct TrainResult {
  Model model;
  std::vector<double> loss_history;
};

/// Minibatch descent on mean softmax cross-entropy. Deterministic in cfg.seed.
TrainResult train(Model model, const LabeledSet& data, const TrainConfig& cfg);

/// Versioned binary checkpoint ("DBLM").
std::string checkpoint_bytes(const Model& model);
Model model_from_checkpoint_bytes(std::string_view bytes);
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace dustbin
