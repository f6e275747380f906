#include "dustbin/datasets.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dustbin/rng.hpp"

namespace dustbin {

LabeledSet two_moons(std::size_t n_per_class, double noise_sigma, std::uint64_t seed) {
  if (n_per_class < 1) throw ConfigError("two_moons needs n >= 1");
  if (!(noise_sigma >= 0.0)) throw ConfigError("two_moons noise_sigma must be >= 0");
  Rng rng(seed);
  LabeledSet set;
  set.k_classes = 2;
  set.domain = kTwoMoonsDomain;
  for (std::size_t label = 0; label < 2; ++label) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const double t = std::numbers::pi * rng.uniform();
      double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
      if (noise_sigma > 0.0) {
        x += noise_sigma * rng.normal();
        y += noise_sigma * rng.normal();
      }
      set.samples.push_back(Array::vector({set.domain.clamp(x), set.domain.clamp(y)}));
      set.labels.push_back(label);
    }
  }
  return set;
}

// ---- IDX ----------------------------------------------------------------

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::uint32_t read_be32(std::string_view bytes, std::size_t offset, const char* what) {
  if (offset + 4 > bytes.size()) {
    throw IdxError(IdxError::Kind::Truncated, std::string(what) + ": truncated header");
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

LabeledSet parse_idx(std::string_view image_bytes, std::string_view label_bytes,
                     std::span<const std::size_t> exclude_classes, std::size_t k_classes) {
  if (read_be32(image_bytes, 0, "images") != kIdxImages) {
    throw IdxError(IdxError::Kind::BadMagic, "images: bad magic (expected 0x00000803)");
  }
  if (read_be32(label_bytes, 0, "labels") != kIdxLabels) {
    throw IdxError(IdxError::Kind::BadMagic, "labels: bad magic (expected 0x00000801)");
  }
  const std::size_t n_images = read_be32(image_bytes, 4, "images");
  const std::size_t rows = read_be32(image_bytes, 8, "images");
  const std::size_t cols = read_be32(image_bytes, 12, "images");
  const std::size_t n_labels = read_be32(label_bytes, 4, "labels");
  if (n_images != n_labels) {
    throw IdxError(IdxError::Kind::CountMismatch, "image count " + std::to_string(n_images) +
                                                      " does not match label count " + std::to_string(n_labels));
  }
  if (rows == 0 || cols == 0) throw IdxError(IdxError::Kind::Truncated, "images: zero extent");
  const std::size_t pixels = rows * cols;
  if (image_bytes.size() < 16 + n_images * pixels) {
    throw IdxError(IdxError::Kind::Truncated, "images: expected " + std::to_string(n_images * pixels) +
                                                  " pixel bytes, file has " + std::to_string(image_bytes.size() - 16));
  }
  if (label_bytes.size() < 8 + n_labels) {
    throw IdxError(IdxError::Kind::Truncated, "labels: expected " + std::to_string(n_labels) + " label bytes");
  }

  LabeledSet set;
  set.domain = Box{0.0, 1.0};
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n_images; ++i) {
    const std::size_t label = static_cast<unsigned char>(label_bytes[8 + i]);
    if (std::find(exclude_classes.begin(), exclude_classes.end(), label) != exclude_classes.end()) continue;
    Array img(Shape{1, rows, cols});
    for (std::size_t p = 0; p < pixels; ++p) {
      img[p] = static_cast<unsigned char>(image_bytes[16 + i * pixels + p]) / 255.0;
    }
    set.samples.push_back(std::move(img));
    set.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  set.k_classes = k_classes != 0 ? k_classes : max_label + 1;
  for (auto l : set.labels) {
    if (l >= set.k_classes) throw LabelError("IDX label " + std::to_string(l) + " >= k_classes");
  }
  return set;
}

LabeledSet load_idx(const std::string& images_path, const std::string& labels_path,
                    std::span<const std::size_t> exclude_classes, std::size_t k_classes) {
  const std::string images = slurp(images_path);
  const std::string labels = slurp(labels_path);
  return parse_idx(images, labels, exclude_classes, k_classes);
}

std::pair<std::string, std::string> idx_bytes(const LabeledSet& set) {
  if (set.empty()) throw DataError("cannot serialise an empty set to IDX");
  const Shape& s = set.samples[0].shape();
  if (s.size() != 3 || s[0] != 1) throw DimensionError("IDX needs 1 x rows x cols samples, got " + shape_string(s));
  std::string images, labels;
  put_be32(images, kIdxImages);
  put_be32(images, static_cast<std::uint32_t>(set.size()));
  put_be32(images, static_cast<std::uint32_t>(s[1]));
  put_be32(images, static_cast<std::uint32_t>(s[2]));
  put_be32(labels, kIdxLabels);
  put_be32(labels, static_cast<std::uint32_t>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Array& a = set.samples[i];
    if (a.shape() != s) throw DimensionError("IDX samples must share one shape");
    for (std::size_t p = 0; p < a.size(); ++p) {
      images.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(a[p], 0.0, 1.0) * 255.0))));
    }
    if (set.labels[i] > 255) throw LabelError("IDX labels must fit in one byte");
    labels.push_back(static_cast<char>(set.labels[i]));
  }
  return {images, labels};
}

void save_idx(const LabeledSet& set, const std::string& images_path, const std::string& labels_path) {
  const auto [images, labels] = idx_bytes(set);
  for (const auto& [path, bytes] : {std::pair{images_path, images}, std::pair{labels_path, labels}}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path);
  }
}

// ---- synthetic out-distribution sets ------------------------------------

namespace {

const std::vector<std::string>& outdist_names() {
  static const std::vector<std::string> names{"uniform-box", "ring", "shifted-blobs", "letters-noise"};
  return names;
}

void require_2d(const OutDistSpec& spec) {
  if (spec.sample_shape != Shape{2} || spec.center.size() != 2) {
    throw ConfigError(to_string(spec.kind) + " out-distribution needs 2-D samples and a 2-D center");
  }
}

/// Truncated at four standard deviations.
double truncated_normal(Rng& rng) {
  double z = rng.normal();
  while (std::abs(z) > 4.0) z = rng.normal();
  return z;
}

Array letters_noise_image(const Shape& shape, Rng& rng) {
  const std::size_t c_n = shape[0], h = shape[1], w = shape[2];
  Array img(shape);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = 0.15 * rng.uniform();
  const std::size_t strokes = 2 + rng.index(3);
  const double thickness = std::max(1.0, 0.06 * static_cast<double>(std::min(h, w)));
  for (std::size_t s = 0; s < strokes; ++s) {
    const double x0 = rng.uniform(0.15, 0.85) * static_cast<double>(w), y0 = rng.uniform(0.15, 0.85) * static_cast<double>(h);
    const double x1 = rng.uniform(0.15, 0.85) * static_cast<double>(w), y1 = rng.uniform(0.15, 0.85) * static_cast<double>(h);
    const double ink = rng.uniform(0.7, 1.0);
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = std::max(dx * dx + dy * dy, 1e-12);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        const double t = std::clamp(((px - x0) * dx + (py - y0) * dy) / len2, 0.0, 1.0);
        const double ex = px - (x0 + t * dx), ey = py - (y0 + t * dy);
        if (ex * ex + ey * ey <= thickness * thickness) {
          for (std::size_t c = 0; c < c_n; ++c) {
            auto& v = img[(c * h + y) * w + x];
            v = std::max(v, ink);
          }
        }
      }
    }
  }
  return img;
}

}  // namespace

std::string to_string(OutDistKind kind) { return outdist_names().at(static_cast<std::size_t>(kind)); }

OutDistKind parse_outdist_kind(std::string_view name) {
  const auto& names = outdist_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<OutDistKind>(i);
  }
  throw ConfigError("unknown out-distribution kind '" + std::string(name) +
                    "' (valid: uniform-box, ring, shifted-blobs, letters-noise)");
}

LabeledSet synthetic_outdist(const OutDistSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("synthetic_outdist needs n >= 1");
  if (!(spec.domain.lo < spec.domain.hi)) throw ConfigError("out-distribution domain must satisfy lo < hi");
  Rng rng(seed);
  LabeledSet set;
  set.k_classes = spec.k_classes;
  set.domain = spec.domain;
  const Box& box = spec.domain;

  std::vector<std::array<double, 2>> blob_centers;
  if (spec.kind == OutDistKind::ShiftedBlobs) {
    require_2d(spec);
    if (spec.blobs == 0) throw ConfigError("shifted-blobs needs at least one blob");
    for (std::size_t b = 0; b < spec.blobs; ++b) {
      const double a = 2.0 * std::numbers::pi * (static_cast<double>(b) + 0.5) / static_cast<double>(spec.blobs);
      blob_centers.push_back({spec.center[0] + spec.radius * std::cos(a), spec.center[1] + spec.radius * std::sin(a)});
    }
  }
  if (spec.kind == OutDistKind::Ring) require_2d(spec);
  if (spec.kind == OutDistKind::LettersNoise && spec.sample_shape.size() != 3) {
    throw ConfigError("letters-noise needs C x H x W samples");
  }

  std::size_t attempts = 0;
  while (set.size() < n) {
    if (++attempts > 1000 * n) throw ConfigError(to_string(spec.kind) + ": geometry falls outside the domain box");
    Array s(spec.sample_shape);
    switch (spec.kind) {
      case OutDistKind::UniformBox:
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng.uniform(box.lo, box.hi);
        break;
      case OutDistKind::Ring: {
        const double angle = 2.0 * std::numbers::pi * rng.uniform();
        const double r = spec.radius + spec.sigma * truncated_normal(rng);
        s[0] = spec.center[0] + r * std::cos(angle);
        s[1] = spec.center[1] + r * std::sin(angle);
        break;
      }
      case OutDistKind::ShiftedBlobs: {
        const auto& c = blob_centers[rng.index(blob_centers.size())];
        s[0] = c[0] + spec.sigma * truncated_normal(rng);
        s[1] = c[1] + spec.sigma * truncated_normal(rng);
        break;
      }
      case OutDistKind::LettersNoise:
        s = letters_noise_image(spec.sample_shape, rng);
        break;
    }
    if (!box.contains(s)) continue;
    set.samples.push_back(std::move(s));
    set.labels.push_back(spec.k_classes);
  }
  return set;
}

// ---- dustbin construction -----------------------------------------------

std::size_t nearest_cross_class_neighbor(std::span<const Array> features, std::span<const std::size_t> labels,
                                         std::size_t i) {
  if (features.size() != labels.size()) throw DataError("features and labels differ in length");
  if (i >= features.size()) throw IndexError("query index " + std::to_string(i) + " out of range");
  std::size_t best = features.size();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (labels[j] == labels[i]) continue;
    const double d = (features[j].values() - features[i].values()).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  if (best == features.size()) throw DataError("no sample of another class to pair with sample " + std::to_string(i));
  return best;
}

std::size_t nearest_cross_class_neighbor(const LabeledSet& set, const Model& model, std::size_t i) {
  const auto feats = features(model, set.samples);
  return nearest_cross_class_neighbor(feats, set.labels, i);
}

std::vector<std::size_t> correctly_classified(const Model& model, const LabeledSet& set) {
  const auto pred = predict(model, set.samples);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (pred[i] == set.labels[i]) out.push_back(i);
  }
  return out;
}

LabeledSet interpolate(const LabeledSet& set, const Model& model, const InterpolationConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("interpolation alpha must lie in (0, 1)");
  const auto correct = correctly_classified(model, set);
  if (correct.size() < cfg.count) {
    throw DataError("interpolate: requested " + std::to_string(cfg.count) + " pairs but only " +
                    std::to_string(correct.size()) + " correctly classified samples are available");
  }
  const LabeledSet pool = set.subset(correct);
  const auto feats = features(model, pool.samples);

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);
  rng.shuffle(order.begin(), order.end());

  LabeledSet out;
  out.k_classes = set.k_classes;
  out.domain = set.domain;
  for (std::size_t n = 0; n < cfg.count; ++n) {
    const std::size_t i = order[n];
    const std::size_t j = nearest_cross_class_neighbor(feats, pool.labels, i);
    Array blend(pool.samples[i].shape(),
                cfg.alpha * pool.samples[i].values() + (1.0 - cfg.alpha) * pool.samples[j].values());
    out.samples.push_back(clamp(blend, set.domain));
    out.labels.push_back(set.k_classes);
  }
  return out;
}

LabeledSet adversarial_dustbin(const LabeledSet& set, const Model& model, const AttackConfig& ifgs_config,
                               std::size_t n, std::uint64_t seed) {
  ifgs_config.validate();
  auto correct = correctly_classified(model, set);
  if (correct.size() < n) {
    throw DataError("adversarial_dustbin: requested " + std::to_string(n) + " adversaries but only " +
                    std::to_string(correct.size()) + " correctly classified samples are available");
  }
  Rng rng(seed);
  rng.shuffle(correct.begin(), correct.end());
  LabeledSet out;
  out.k_classes = set.k_classes;
  out.domain = set.domain;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = correct[k];
    auto r = ifgs(model, set.samples[i], set.labels[i], ifgs_config.epsilon, ifgs_config.clip_radius,
                  ifgs_config.iterations, ifgs_config.domain, ifgs_config.early_exit);
    out.samples.push_back(std::move(r.x_adv));
    out.labels.push_back(set.k_classes);
  }
  return out;
}

LabeledSet build_mix(const LabeledSet& in_dist, const LabeledSet& out_dist, const LabeledSet& interpolated,
                     const LabeledSet& adversarial, const MixSpec& spec, std::uint64_t seed, bool augmented) {
  if (augmented && spec.dustbin_count() == 0) {
    throw ConfigError("augmented mix needs at least one dustbin source with a positive count");
  }
  if (!augmented && spec.dustbin_count() != 0) throw ConfigError("naive mix cannot contain dustbin samples");
  Rng rng(seed);
  LabeledSet mix;
  mix.k_classes = in_dist.k_classes;
  mix.domain = in_dist.domain;
  auto take = [&](const LabeledSet& src, std::size_t count, const char* name, bool relabel) {
    if (count > src.size()) {
      throw DataError(std::string("build_mix: requested ") + std::to_string(count) + " " + name + " samples, only " +
                      std::to_string(src.size()) + " available");
    }
    std::vector<std::size_t> idx(src.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t k = 0; k < count; ++k) {
      mix.samples.push_back(src.samples[idx[k]]);
      mix.labels.push_back(relabel ? mix.k_classes : src.labels[idx[k]]);
    }
  };
  take(in_dist, spec.in_dist_count, "in-distribution", false);
  take(out_dist, spec.out_dist_count, "out-distribution", true);
  take(interpolated, spec.interpolated_count, "interpolated", true);
  take(adversarial, spec.adversarial_count, "adversarial", true);

  std::vector<std::size_t> order(mix.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  return mix.subset(order);
}

std::string set_csv(const LabeledSet& set) {
  std::ostringstream os;
  os << std::setprecision(17);
  const std::size_t d = set.empty() ? 0 : set.samples[0].size();
  for (std::size_t k = 0; k < d; ++k) os << 'x' << k << ',';
  os << "label\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) os << set.samples[i][k] << ',';
    os << set.labels[i] << '\n';
  }
  return os.str();
}

void write_set_csv(const LabeledSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << set_csv(set);
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace dustbin
