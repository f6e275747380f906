#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dustbin/array.hpp"

namespace dustbin {

/// Samples with labels over K in-distribution classes; label K is the dustbin.
struct LabeledSet {
  std::vector<Array> samples;
  std::vector<std::size_t> labels;
  std::size_t k_classes = 0;
  Box domain;

  std::size_t size() const { return samples.size(); }
  std::size_t dustbin_label() const { return k_classes; }
  bool empty() const { return samples.empty(); }

  /// True when every label is the dustbin label (an out-distribution set).
  bool all_dustbin() const;
  bool any_dustbin() const;

  /// Checks sizes, label ranges and domain containment. Dustbin labels are
  /// accepted only with `allow_dustbin`.
  void validate(bool allow_dustbin) const;

  LabeledSet subset(std::span<const std::size_t> indices) const;
  void append(const LabeledSet& other);
};

/// Flattens samples into the rows of an [n x d] array.
Array stack_rows(std::span<const Array> samples);

}  // namespace dustbin
