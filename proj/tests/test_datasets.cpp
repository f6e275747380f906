#include <doctest.h>

#include <cmath>

#include "dustbin/datasets.hpp"
#include "dustbin/io.hpp"

using namespace dustbin;

namespace {

std::string golden(const char* name) { return read_file(std::string(DUSTBIN_GOLDEN_DIR) + "/" + name); }

}  // namespace

TEST_CASE("two-moons without noise lies on the two half-circles") {
  const auto s = two_moons(4, 0.0, 1);
  REQUIRE(s.size() == 8);
  CHECK(s.k_classes == 2);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double x = s.samples[i][0], y = s.samples[i][1];
    if (s.labels[i] == 0) {
      CHECK(std::hypot(x, y) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(y >= -1e-12);
    } else {
      CHECK(std::hypot(x - 1.0, y - 0.5) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(y <= 0.5 + 1e-12);
    }
  }
}

TEST_CASE("two-moons is deterministic per seed") {
  CHECK(two_moons(20, 0.1, 3).samples == two_moons(20, 0.1, 3).samples);
  CHECK_FALSE(two_moons(20, 0.1, 3).samples == two_moons(20, 0.1, 4).samples);
}

TEST_CASE("IDX fixture loads and re-serialises byte for byte") {
  const auto images = golden("fixture-images.idx"), labels = golden("fixture-labels.idx");
  const auto set = parse_idx(images, labels);
  REQUIRE(set.size() == 2);
  CHECK(set.samples[0].shape() == Shape{1, 2, 2});
  CHECK(set.labels == std::vector<std::size_t>{3, 7});
  CHECK(set.k_classes == 8);
  CHECK(set.samples[0][1] == 1.0);
  CHECK(set.samples[0][2] == 128.0 / 255.0);
  CHECK(set.samples[1][3] == 250.0 / 255.0);
  const auto [img2, lab2] = idx_bytes(set);
  CHECK(img2 == images);
  CHECK(lab2 == labels);

  const std::size_t excl[] = {3};
  const auto filtered = parse_idx(images, labels, excl, 10);
  CHECK(filtered.size() == 1);
  CHECK(filtered.labels[0] == 7);
  CHECK(filtered.k_classes == 10);
}

TEST_CASE("IDX errors are distinguishable") {
  const auto images = golden("fixture-images.idx"), labels = golden("fixture-labels.idx");
  auto kind_of = [](auto f) {
    try {
      f();
    } catch (const IdxError& e) {
      return e.kind();
    }
    FAIL("no IdxError");
    return IdxError::Kind::Io;
  };
  std::string bad = images;
  bad[3] = 0x01;
  CHECK(kind_of([&] { parse_idx(bad, labels); }) == IdxError::Kind::BadMagic);
  CHECK(kind_of([&] { parse_idx(images.substr(0, images.size() - 1), labels); }) == IdxError::Kind::Truncated);
  std::string more = labels;
  more[7] = 3;
  more.push_back(1);
  CHECK(kind_of([&] { parse_idx(images, more); }) == IdxError::Kind::CountMismatch);
  CHECK(kind_of([&] { load_idx("/nonexistent/images", "/nonexistent/labels"); }) == IdxError::Kind::Io);
}

TEST_CASE("synthetic out-distribution sets stay in the domain and carry the dustbin label") {
  for (auto kind : {OutDistKind::UniformBox, OutDistKind::Ring, OutDistKind::ShiftedBlobs}) {
    OutDistSpec spec;
    spec.kind = kind;
    const auto s = synthetic_outdist(spec, 200, 5);
    CHECK(s.size() == 200);
    CHECK(s.all_dustbin());
    for (const auto& x : s.samples) CHECK(spec.domain.contains(x));
  }
  OutDistSpec img;
  img.kind = OutDistKind::LettersNoise;
  img.sample_shape = {1, 28, 28};
  img.domain = Box{};
  img.k_classes = 10;
  const auto letters = synthetic_outdist(img, 5, 1);
  CHECK(letters.labels[0] == 10);
  for (const auto& x : letters.samples) CHECK(Box{}.contains(x));

  OutDistSpec far;
  far.kind = OutDistKind::Ring;
  far.radius = 10.0;
  CHECK_THROWS_AS(synthetic_outdist(far, 10, 1), ConfigError);
  CHECK_THROWS_AS(parse_outdist_kind("noise"), ConfigError);
}

TEST_CASE("nearest cross-class neighbour") {
  const std::vector<Array> f{Array({1}, {0.0}), Array({1}, {0.1}), Array({1}, {0.5}), Array({1}, {-0.4})};
  const std::vector<std::size_t> l{0, 0, 1, 1};
  CHECK(nearest_cross_class_neighbor(f, l, 0) == 3);
  CHECK(nearest_cross_class_neighbor(f, l, 1) == 2);
  const std::vector<std::size_t> same{0, 0, 0, 0};
  CHECK_THROWS_AS(nearest_cross_class_neighbor(f, same, 0), DataError);
}

TEST_CASE("interpolated samples are convex blends labeled dustbin") {
  const auto data = two_moons(50, 0.0, 2);
  TrainConfig tc;
  tc.epochs = 50;
  const Model m = train(build(ModelConfig::mlp3(2, 2, false), 1), data, tc).model;
  const auto interp = interpolate(data, m, {0.5, 20, 3});
  CHECK(interp.size() == 20);
  CHECK(interp.all_dustbin());
  CHECK_THROWS_AS(interpolate(data, m, {0.0, 5, 3}), ConfigError);
  CHECK_THROWS_AS(interpolate(data, m, {0.5, 10000, 3}), DataError);
}

TEST_CASE("build_mix takes the requested counts and relabels dustbin sources") {
  const auto in = two_moons(50, 0.1, 1);
  OutDistSpec spec;
  const auto out = synthetic_outdist(spec, 30, 2);
  const auto mix = build_mix(in, out, {}, {}, {60, 30, 0, 0}, 4);
  CHECK(mix.size() == 90);
  std::size_t dust = 0;
  for (auto l : mix.labels) dust += l == 2;
  CHECK(dust == 30);
  CHECK(build_mix(in, out, {}, {}, {60, 30, 0, 0}, 4).samples == mix.samples);
  CHECK_THROWS_AS(build_mix(in, out, {}, {}, {60, 0, 0, 0}, 4), ConfigError);
  CHECK_THROWS_AS(build_mix(in, out, {}, {}, {60, 31, 0, 0}, 4), DataError);
}
