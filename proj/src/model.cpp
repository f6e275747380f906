#include "dustbin/model.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <utility>

#include "dustbin/rng.hpp"

namespace dustbin {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::Linear: return "linear";
    case Architecture::Mlp3: return "mlp3";
    case Architecture::LenetSmall: return "lenet-small";
  }
  return "?";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "linear") return Architecture::Linear;
  if (name == "mlp3") return Architecture::Mlp3;
  if (name == "lenet-small") return Architecture::LenetSmall;
  throw ConfigError("unsupported architecture '" + std::string(name) + "' (expected linear, mlp3, lenet-small)");
}

ModelConfig ModelConfig::mlp3(std::size_t input_dim, std::size_t k, bool augmented, std::size_t width) {
  ModelConfig c;
  c.architecture = Architecture::Mlp3;
  c.input_shape = {input_dim};
  c.k_classes = k;
  c.augmented = augmented;
  c.widths = {width, width};
  return c;
}

ModelConfig ModelConfig::lenet_small(Shape input_shape, std::size_t k, bool augmented) {
  ModelConfig c;
  c.architecture = Architecture::LenetSmall;
  c.input_shape = std::move(input_shape);
  c.k_classes = k;
  c.augmented = augmented;
  c.widths = {32, 32, 64};
  c.kernel_size = 5;
  c.pool = true;
  c.dropout_p = 0.5;
  return c;
}

ModelConfig ModelConfig::linear(std::size_t input_dim, std::size_t k, bool augmented) {
  ModelConfig c;
  c.architecture = Architecture::Linear;
  c.input_shape = {input_dim};
  c.k_classes = k;
  c.augmented = augmented;
  c.widths.clear();
  return c;
}

namespace {

/// Flattened length of the last conv block's output.
std::size_t lenet_feature_size(const ModelConfig& c) {
  std::size_t h = c.input_shape[1], w = c.input_shape[2];
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    if (c.pool) {
      if (h < 2 || w < 2) throw ConfigError("lenet-small input " + shape_string(c.input_shape) + " too small to pool");
      h /= 2;
      w /= 2;
    }
  }
  return c.widths.back() * h * w;
}

}  // namespace

void ModelConfig::validate() const {
  if (k_classes < 1) throw ConfigError("k_classes must be at least 1");
  if (output_dim() < 2) throw ConfigError("model needs at least two outputs");
  if (input_shape.empty()) throw ConfigError("input_shape must not be empty");
  for (auto e : input_shape) {
    if (e == 0) throw ConfigError("input extents must be positive");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must lie in [0, 1)");
  switch (architecture) {
    case Architecture::Linear:
      break;
    case Architecture::Mlp3:
      if (widths.size() != 2) throw ConfigError("mlp3 needs exactly two hidden widths");
      break;
    case Architecture::LenetSmall:
      if (input_shape.size() != 3) throw ConfigError("lenet-small needs a C x H x W input shape");
      if (widths.empty()) throw ConfigError("lenet-small needs at least one conv layer");
      if (kernel_size == 0) throw ConfigError("kernel_size must be positive");
      lenet_feature_size(*this);
      break;
  }
  for (auto w : widths) {
    if (w == 0) throw ConfigError("layer widths must be positive");
  }
}

std::vector<Shape> param_shapes(const ModelConfig& c) {
  c.validate();
  std::vector<Shape> shapes;
  const std::size_t out = c.output_dim();
  switch (c.architecture) {
    case Architecture::Linear:
      shapes = {{c.input_size(), out}, {out}};
      break;
    case Architecture::Mlp3:
      shapes = {{c.input_size(), c.widths[0]}, {c.widths[0]}, {c.widths[0], c.widths[1]},
                {c.widths[1]},                 {c.widths[1], out}, {out}};
      break;
    case Architecture::LenetSmall: {
      std::size_t channels = c.input_shape[0];
      for (auto f : c.widths) {
        shapes.push_back({f, channels, c.kernel_size, c.kernel_size});
        shapes.push_back({f});
        channels = f;
      }
      shapes.push_back({lenet_feature_size(c), out});
      shapes.push_back({out});
      break;
    }
  }
  return shapes;
}

Model::Model(ModelConfig config, Params params) : config_(std::move(config)), params_(std::move(params)) {
  const auto shapes = param_shapes(config_);
  if (shapes.size() != params_.tensors.size()) {
    throw DimensionError("model expects " + std::to_string(shapes.size()) + " parameter arrays, got " +
                         std::to_string(params_.tensors.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i] != params_.tensors[i].shape()) {
      throw DimensionError("parameter " + std::to_string(i) + " has shape " +
                           shape_string(params_.tensors[i].shape()) + ", expected " + shape_string(shapes[i]));
    }
  }
}

Model build(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  Params p;
  for (const auto& s : param_shapes(config)) {
    Array a(s);
    if (s.size() > 1) {
      const std::size_t fan_in = s.size() == 4 ? s[1] * s[2] * s[3] : s[0];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-bound, bound);
    }
    p.tensors.push_back(std::move(a));
  }
  return Model(config, std::move(p));
}

Model build_zero(const ModelConfig& config) {
  Params p;
  for (const auto& s : param_shapes(config)) p.tensors.emplace_back(s);
  return Model(config, std::move(p));
}

namespace {

template <typename V>
struct ForwardResult {
  V logits;
  V features;
};

/// One forward pass written once for both plain arrays and taped variables.
/// Dense architectures take [B x d] and return [B x out]; lenet-small takes
/// one C x H x W sample and returns [1 x out].
template <typename V, typename Dropout>
ForwardResult<V> forward(const ModelConfig& c, const std::vector<V>& p, V x, Dropout&& dropout) {
  switch (c.architecture) {
    case Architecture::Linear:
      return {add_bias(matmul(x, p[0]), p[1]), x};
    case Architecture::Mlp3: {
      V h1 = relu(add_bias(matmul(x, p[0]), p[1]));
      V h2 = relu(add_bias(matmul(h1, p[2]), p[3]));
      return {add_bias(matmul(dropout(h2), p[4]), p[5]), h2};
    }
    case Architecture::LenetSmall: {
      V h = x;
      for (std::size_t layer = 0; layer < c.widths.size(); ++layer) {
        h = relu(add_channel_bias(conv2d(h, p[2 * layer], 1, Padding::Same), p[2 * layer + 1]));
        if (c.pool) h = maxpool2d(h);
      }
      const std::size_t n = c.widths.size();
      V flat = reshape(h, Shape{1, h.shape()[0] * h.shape()[1] * h.shape()[2]});
      return {add_bias(matmul(dropout(flat), p[2 * n]), p[2 * n + 1]), flat};
    }
  }
  throw ContractError("unknown architecture");
}

void check_input(const Model& m, const Array& x) {
  const auto& c = m.config();
  const bool ok = c.architecture == Architecture::LenetSmall ? x.shape() == c.input_shape
                                                             : x.size() == c.input_size();
  if (!ok) {
    throw DimensionError("model input " + shape_string(x.shape()) + " does not match " +
                         shape_string(c.input_shape));
  }
}

bool is_dense(const Model& m) { return m.config().architecture != Architecture::LenetSmall; }

Array as_model_input(const Model& m, const Array& x) {
  check_input(m, x);
  return is_dense(m) ? x.reshaped({1, x.size()}) : x;
}

auto no_dropout = [](auto v) { return v; };

ForwardResult<Array> forward_plain(const Model& m, const Array& input) {
  return forward<Array>(m.config(), m.params().tensors, input, no_dropout);
}

std::vector<Array> split_rows(const Array& rows) {
  std::vector<Array> out;
  out.reserve(rows.extent(0));
  const std::size_t d = rows.extent(1);
  for (std::size_t r = 0; r < rows.extent(0); ++r) {
    out.emplace_back(Shape{d}, rows.values().segment(static_cast<Eigen::Index>(r * d), static_cast<Eigen::Index>(d)));
  }
  return out;
}

template <typename Pick>
std::vector<Array> batched(const Model& m, std::span<const Array> xs, Pick pick) {
  if (xs.empty()) return {};
  if (is_dense(m)) {
    for (const auto& x : xs) check_input(m, x);
    return split_rows(pick(forward_plain(m, stack_rows(xs))));
  }
  std::vector<Array> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    Array r = pick(forward_plain(m, as_model_input(m, x)));
    out.push_back(r.reshaped({r.size()}));
  }
  return out;
}

}  // namespace

Array logits(const Model& model, const Array& x) {
  Array z = forward_plain(model, as_model_input(model, x)).logits;
  return z.reshaped({z.size()});
}

std::vector<Array> logits(const Model& model, std::span<const Array> xs) {
  return batched(model, xs, [](ForwardResult<Array> r) { return std::move(r.logits); });
}

Array probs(const Model& model, const Array& x) { return softmax(logits(model, x)); }

std::vector<Array> probs(const Model& model, std::span<const Array> xs) {
  auto z = logits(model, xs);
  for (auto& v : z) v = softmax(v);
  return z;
}

Array features(const Model& model, const Array& x) {
  Array f = forward_plain(model, as_model_input(model, x)).features;
  return f.reshaped({f.size()});
}

std::vector<Array> features(const Model& model, std::span<const Array> xs) {
  return batched(model, xs, [](ForwardResult<Array> r) { return std::move(r.features); });
}

std::size_t predict(const Model& model, const Array& x) { return argmax(logits(model, x)); }

std::vector<std::size_t> predict(const Model& model, std::span<const Array> xs) {
  std::vector<std::size_t> out;
  out.reserve(xs.size());
  for (const auto& z : logits(model, xs)) out.push_back(argmax(z));
  return out;
}

std::size_t decide_with_reject(const Array& scores, std::size_t k_classes) {
  if (scores.size() != k_classes + 1) {
    throw ContractError("reject decision needs K+1 = " + std::to_string(k_classes + 1) + " scores, got " +
                        std::to_string(scores.size()));
  }
  return argmax(scores);
}

std::size_t predict_with_reject(const Model& model, const Array& x) {
  if (!model.augmented()) throw ContractError("predict_with_reject needs an augmented model");
  return decide_with_reject(logits(model, x), model.k_classes());
}

TapedModel record(Tape& tape, const Model& model, const Array& x, bool input_is_variable) {
  TapedModel t;
  for (const auto& p : model.params().tensors) t.params.push_back(tape.variable(p));
  const Array in = as_model_input(model, x);
  t.input = input_is_variable ? tape.variable(in) : tape.constant(in);
  auto r = forward<Var>(model.config(), t.params, t.input, no_dropout);
  t.logits = r.logits;
  t.features = r.features;
  return t;
}

namespace {

InputGradient input_gradient(const Model& model, const Array& x,
                             const std::function<Var(Var)>& objective) {
  Tape tape;
  const Array in = as_model_input(model, x);
  std::vector<Var> params;
  for (const auto& p : model.params().tensors) params.push_back(tape.constant(p));
  Var input = tape.variable(in);
  Var z = forward<Var>(model.config(), params, input, no_dropout).logits;
  Var flat = reshape(z, Shape{z.value().size()});
  Var obj = objective(flat);
  InputGradient out;
  out.logits = flat.value();
  out.value = obj.value().item();
  out.gradient = tape.grad(obj)[input].reshaped(x.shape());
  return out;
}

}  // namespace

InputGradient loss_gradient(const Model& model, const Array& x, std::size_t label) {
  if (label >= model.output_dim()) {
    throw LabelError("label " + std::to_string(label) + " outside model outputs [0, " +
                     std::to_string(model.output_dim()) + ")");
  }
  return input_gradient(model, x, [label](Var z) { return softmax_cross_entropy(z, label); });
}

InputGradient logit_gradient(const Model& model, const Array& x, const Array& logit_weights) {
  if (logit_weights.size() != model.output_dim()) {
    throw DimensionError("logit weights of length " + std::to_string(logit_weights.size()) + " for " +
                         std::to_string(model.output_dim()) + " outputs");
  }
  return input_gradient(model, x, [&](Var z) {
    Var w = z.tape().constant(logit_weights.reshaped({logit_weights.size()}));
    return sum(mul(z, w));
  });
}

TrainResult train(Model model, const LabeledSet& data, const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (data.samples.size() != data.labels.size()) throw DataError("training set sizes disagree");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] >= model.output_dim()) {
      throw LabelError("training label " + std::to_string(data.labels[i]) + " at sample " + std::to_string(i) +
                       " outside model outputs [0, " + std::to_string(model.output_dim()) + ")");
    }
  }
  const ModelConfig config = model.config();
  Params params = model.params();
  std::vector<Array> velocity;
  for (const auto& p : params.tensors) velocity.emplace_back(p.shape());

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> history;
  const bool dense = config.architecture != Architecture::LenetSmall;
  const double keep = 1.0 - config.dropout_p;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      std::vector<Var> pv;
      for (const auto& p : params.tensors) pv.push_back(tape.variable(p));
      auto dropout = [&](Var v) {
        if (config.dropout_p <= 0.0) return v;
        Array mask(v.shape());
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() >= config.dropout_p ? 1.0 / keep : 0.0;
        return mul(v, tape.constant(std::move(mask)));
      };

      Var loss;
      if (dense) {
        std::vector<Array> xs;
        std::vector<std::size_t> ys;
        for (std::size_t i = start; i < stop; ++i) {
          xs.push_back(data.samples[order[i]]);
          ys.push_back(data.labels[order[i]]);
        }
        Var x = tape.constant(stack_rows(xs));
        loss = softmax_cross_entropy(forward<Var>(config, pv, x, dropout).logits, std::move(ys));
      } else {
        for (std::size_t i = start; i < stop; ++i) {
          Var x = tape.constant(data.samples[order[i]]);
          Var z = forward<Var>(config, pv, x, dropout).logits;
          Var li = softmax_cross_entropy(z, std::vector<std::size_t>{data.labels[order[i]]});
          loss = i == start ? li : add(loss, li);
        }
        loss = scale(loss, 1.0 / static_cast<double>(stop - start));
      }
      epoch_loss += loss.value().item() * static_cast<double>(stop - start);

      const GradientMap grads = tape.grad(loss);
      for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        const Array& g = grads[pv[k]];
        if (cfg.optimizer == Optimizer::SgdMomentum) {
          velocity[k].values() = cfg.momentum * velocity[k].values() + g.values();
          params.tensors[k].values() -= cfg.learning_rate * velocity[k].values();
        } else {
          params.tensors[k].values() -= cfg.learning_rate * g.values();
        }
      }
    }
    history.push_back(data.empty() ? 0.0 : epoch_loss / static_cast<double>(data.size()));
  }
  return {Model(config, std::move(params)), std::move(history)};
}

}  // namespace dustbin
