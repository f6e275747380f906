#include <doctest.h>

#include <cmath>

#include "dustbin/datasets.hpp"
#include "dustbin/outdist.hpp"
#include "dustbin/rng.hpp"

using namespace dustbin;

namespace {

MisclassHistogram hist(std::vector<std::size_t> counts) {
  MisclassHistogram h;
  h.counts = std::move(counts);
  return h;
}

}  // namespace

TEST_CASE("uniformity score boundary values") {
  CHECK(uniformity_score(hist({5, 0, 0})) == 0.0);
  CHECK(uniformity_score(hist({3, 3, 3, 3})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(uniformity_score(hist({2, 2, 0, 0})) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(uniformity_score(hist({0, 0})), DataError);
  CHECK_THROWS(uniformity_score(hist({})));
}

TEST_CASE("uniformity score is permutation and scale invariant") {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> c(2 + rng.index(9));
    for (auto& v : c) v = rng.index(50);
    const double s = uniformity_score(hist(c));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0 + 1e-15);
    auto scaled = c;
    for (auto& v : scaled) v *= 7;
    CHECK(uniformity_score(hist(scaled)) == doctest::Approx(s).epsilon(1e-12));
    std::reverse(c.begin(), c.end());
    CHECK(uniformity_score(hist(c)) == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("misclass histogram counts confident argmax classes only") {
  Params p;
  p.tensors.push_back(Array({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  p.tensors.push_back(Array({2}, {0.0, 0.0}));
  const Model m(ModelConfig::linear(2, 2), p);
  LabeledSet out;
  out.k_classes = 2;
  out.samples = {Array({2}, {0.9, 0.0}), Array({2}, {0.0, 0.9}), Array({2}, {0.8, 0.1}), Array({2}, {0.5, 0.5})};
  out.labels.assign(4, 2);
  const auto h = misclass_histogram(m, out, 0.6);
  CHECK(h.counts == std::vector<std::size_t>{2, 1});
  CHECK(h.total_evaluated == 4);
  CHECK(h.counted() == 3);

  const Model aug = build(ModelConfig::mlp3(2, 2, true), 1);
  CHECK_THROWS_AS(misclass_histogram(aug, out), ContractError);
}

TEST_CASE("ranking is by score, then by name") {
  Params p;
  p.tensors.push_back(Array({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  p.tensors.push_back(Array({2}, {0.0, 0.0}));
  const Model m(ModelConfig::linear(2, 2), p);
  auto make = [](std::vector<Array> xs) {
    LabeledSet s;
    s.k_classes = 2;
    s.labels.assign(xs.size(), 2);
    s.samples = std::move(xs);
    return s;
  };
  const auto one_sided = make({Array({2}, {2.0, 0.0}), Array({2}, {3.0, 0.0})});
  const auto balanced = make({Array({2}, {2.0, 0.0}), Array({2}, {0.0, 2.0})});
  const auto ranked = rank_candidates(m, {{"b", one_sided}, {"a", balanced}, {"c", balanced}});
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].set_name == "a");
  CHECK(ranked[1].set_name == "c");
  CHECK(ranked[2].set_name == "b");
  CHECK(ranked[0].score == doctest::Approx(1.0));
  CHECK(histogram_csv(ranked[0]) == "class,count\n0,1\n1,1\nscore,1\n");
}
