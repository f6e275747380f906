#include <doctest.h>

#include <filesystem>

#include "dustbin/datasets.hpp"
#include "dustbin/eval.hpp"
#include "dustbin/io.hpp"
#include "dustbin/model.hpp"

using namespace dustbin;

namespace {

Model linear_golden_model() {
  Params p;
  p.tensors.push_back(Array({2, 2}, {0.5, -1.25, 2.0, 0.125}));
  p.tensors.push_back(Array({2}, {-0.75, 1.5}));
  return Model(ModelConfig::linear(2, 2), p);
}

}  // namespace

TEST_CASE("build is deterministic in the seed and validates shapes") {
  const auto cfg = ModelConfig::mlp3(2, 2, true, 8);
  CHECK(build(cfg, 3).params() == build(cfg, 3).params());
  CHECK_FALSE(build(cfg, 3).params() == build(cfg, 4).params());
  Params wrong = build(cfg, 3).params();
  wrong.tensors.pop_back();
  CHECK_THROWS_AS(Model(cfg, wrong), DimensionError);
}

TEST_CASE("augmented models have K+1 outputs; dustbin index is K") {
  const Model m = build(ModelConfig::mlp3(2, 3, true), 1);
  CHECK(m.output_dim() == 4);
  CHECK(m.dustbin() == 3);
  CHECK(logits(m, Array({2}, {0.1, 0.2})).size() == 4);
}

TEST_CASE("lenet-small uses 32/32/64 5x5 filters with dropout 0.5") {
  const auto c = ModelConfig::lenet_small({1, 28, 28}, 10, false);
  CHECK(c.widths == std::vector<std::size_t>{32, 32, 64});
  CHECK(c.kernel_size == 5);
  CHECK(c.dropout_p == 0.5);
  const Model m = build(c, 1);
  CHECK(logits(m, Array({1, 28, 28})).size() == 10);
  CHECK_THROWS_AS(logits(m, Array({1, 27, 28})), DimensionError);
}

TEST_CASE("batched and single-sample inference agree") {
  const Model m = build(ModelConfig::mlp3(2, 2, false, 16), 5);
  const auto set = two_moons(10, 0.1, 2);
  const auto batch = logits(m, set.samples);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK((batch[i].values() - logits(m, set.samples[i]).values()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("predict_with_reject needs an augmented model and K+1 scores") {
  const Model naive = build(ModelConfig::mlp3(2, 2, false), 1);
  CHECK_THROWS_AS(predict_with_reject(naive, Array({2})), ContractError);
  CHECK(decide_with_reject(Array({3}, {0.1, 0.2, 0.7}), 2) == 2);
  CHECK(decide_with_reject(Array({3}, {0.5, 0.2, 0.3}), 2) == 0);
  CHECK_THROWS_AS(decide_with_reject(Array({2}, {0.5, 0.5}), 2), ContractError);
}

TEST_CASE("naive mlp3 fits two-moons") {
  const auto data = two_moons(200, 0.05, 11);
  TrainConfig tc;
  tc.epochs = 200;
  tc.seed = 1;
  const auto r = train(build(ModelConfig::mlp3(2, 2, false), 1), data, tc);
  CHECK(r.loss_history.size() == 200);
  CHECK(r.loss_history.back() < r.loss_history.front());
  CHECK(evaluate(r.model, data).acc >= 0.99);
  // Same seed, same model.
  CHECK(train(build(ModelConfig::mlp3(2, 2, false), 1), data, tc).model.params() == r.model.params());
}

TEST_CASE("training rejects labels beyond the outputs") {
  auto data = two_moons(5, 0.0, 1);
  data.labels[0] = 2;
  CHECK_THROWS_AS(train(build(ModelConfig::mlp3(2, 2, false), 1), data, {}), LabelError);
  CHECK_NOTHROW(train(build(ModelConfig::mlp3(2, 2, true), 1), data, TrainConfig{0.01, 4, 1}));
}

TEST_CASE("input gradients") {
  const Model m = linear_golden_model();
  // Z = x W + b, so d(w . Z)/dx = W w.
  const auto g = logit_gradient(m, Array({2}, {0.3, -0.2}), Array({2}, {1.0, -1.0}));
  CHECK(g.gradient[0] == doctest::Approx(0.5 + 1.25));
  CHECK(g.gradient[1] == doctest::Approx(2.0 - 0.125));
  CHECK_THROWS_AS(loss_gradient(m, Array({2}), 2), LabelError);
}

TEST_CASE("checkpoint matches the golden bytes and round-trips") {
  const auto golden = read_file(std::string(DUSTBIN_GOLDEN_DIR) + "/linear_2x2.dblm");
  const Model m = linear_golden_model();
  CHECK(checkpoint_bytes(m) == golden);
  const Model back = model_from_checkpoint_bytes(golden);
  CHECK(back.config() == m.config());
  CHECK(back.params() == m.params());

  const Model big = build(ModelConfig::lenet_small({1, 12, 12}, 3, true), 9);
  const auto path = (std::filesystem::temp_directory_path() / "dustbin_ckpt_test.dblm").string();
  save_checkpoint(big, path);
  const Model loaded = load_checkpoint(path);
  CHECK(loaded.params() == big.params());
  CHECK(checkpoint_bytes(loaded) == checkpoint_bytes(big));
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are parse errors") {
  const auto golden = read_file(std::string(DUSTBIN_GOLDEN_DIR) + "/linear_2x2.dblm");
  CHECK_THROWS_AS(model_from_checkpoint_bytes(golden.substr(0, golden.size() - 3)), ParseError);
  CHECK_THROWS_AS(model_from_checkpoint_bytes("XXXX" + golden.substr(4)), ParseError);
  CHECK_THROWS_AS(model_from_checkpoint_bytes(golden + "x"), ParseError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/model.dblm"), IoError);
}
