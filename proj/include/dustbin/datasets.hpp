#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dustbin/attacks.hpp"
#include "dustbin/labeled_set.hpp"
#include "dustbin/model.hpp"

namespace dustbin {

/// Two interleaving unit half-circles: class 0 on the upper arc around the
/// origin, class 1 on the lower arc around (1, 0.5). Domain box [-3, 3].
LabeledSet two_moons(std::size_t n_per_class, double noise_sigma, std::uint64_t seed);

inline constexpr Box kTwoMoonsDomain{-3.0, 3.0};

// ---- IDX ----------------------------------------------------------------

class IdxError : public ParseError {
 public:
  enum class Kind { BadMagic, Truncated, CountMismatch, Io };
  IdxError(Kind kind, const std::string& what) : ParseError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801),
/// scaling pixels by 1/255 into 1 x rows x cols arrays. Samples whose label is
/// in `exclude_classes` are dropped. `k_classes == 0` means max label + 1.
LabeledSet load_idx(const std::string& images_path, const std::string& labels_path,
                    std::span<const std::size_t> exclude_classes = {}, std::size_t k_classes = 0);
LabeledSet parse_idx(std::string_view image_bytes, std::string_view label_bytes,
                     std::span<const std::size_t> exclude_classes = {}, std::size_t k_classes = 0);
/// Inverse of parse_idx for [0,1] single-channel images (pixel = round(255 v)).
std::pair<std::string, std::string> idx_bytes(const LabeledSet& set);
void save_idx(const LabeledSet& set, const std::string& images_path, const std::string& labels_path);

// ---- synthetic out-distribution sets ------------------------------------

enum class OutDistKind { UniformBox, Ring, ShiftedBlobs, LettersNoise };

std::string to_string(OutDistKind kind);
OutDistKind parse_outdist_kind(std::string_view name);

struct OutDistSpec {
  OutDistKind kind = OutDistKind::UniformBox;
  Shape sample_shape{2};
  Box domain = kTwoMoonsDomain;
  /// Label given to every sample (the dustbin index of the target task).
  std::size_t k_classes = 2;
  // ring / shifted-blobs geometry (2-D)
  std::vector<double> center{0.5, 0.25};
  double radius = 2.5;
  double sigma = 0.1;
  std::size_t blobs = 4;
};

LabeledSet synthetic_outdist(const OutDistSpec& spec, std::size_t n, std::uint64_t seed);

// ---- dustbin construction -----------------------------------------------

/// Index j != i minimising the Euclidean distance between feature vectors
/// among samples of a different label; lowest index on ties.
std::size_t nearest_cross_class_neighbor(std::span<const Array> features, std::span<const std::size_t> labels,
                                         std::size_t i);
std::size_t nearest_cross_class_neighbor(const LabeledSet& set, const Model& model, std::size_t i);

struct InterpolationConfig {
  double alpha = 0.5;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

/// alpha * x_i + (1 - alpha) * x_j for randomly drawn correctly-classified
/// x_i and their feature-space nearest correctly-classified neighbour of
/// another class. Labeled dustbin.
LabeledSet interpolate(const LabeledSet& set, const Model& model, const InterpolationConfig& cfg);

/// I-FGS adversaries of n randomly drawn correctly-classified samples, labeled dustbin.
LabeledSet adversarial_dustbin(const LabeledSet& set, const Model& model, const AttackConfig& ifgs_config,
                               std::size_t n, std::uint64_t seed);

struct MixSpec {
  std::size_t in_dist_count = 0;
  std::size_t out_dist_count = 0;
  std::size_t interpolated_count = 0;
  std::size_t adversarial_count = 0;

  std::size_t dustbin_count() const { return out_dist_count + interpolated_count + adversarial_count; }
};

/// Random subsets of each source, dustbin sources relabeled K, shuffled.
LabeledSet build_mix(const LabeledSet& in_dist, const LabeledSet& out_dist, const LabeledSet& interpolated,
                     const LabeledSet& adversarial, const MixSpec& spec, std::uint64_t seed, bool augmented = true);

/// Header "x0,...,xN,label", one row per sample.
std::string set_csv(const LabeledSet& set);
void write_set_csv(const LabeledSet& set, const std::string& path);

/// Samples the model labels with their own label.
std::vector<std::size_t> correctly_classified(const Model& model, const LabeledSet& set);

}  // namespace dustbin
