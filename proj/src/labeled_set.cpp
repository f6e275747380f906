#include "dustbin/labeled_set.hpp"

#include <algorithm>

namespace dustbin {

bool LabeledSet::all_dustbin() const {
  return !labels.empty() && std::all_of(labels.begin(), labels.end(), [&](auto l) { return l == k_classes; });
}

bool LabeledSet::any_dustbin() const {
  return std::any_of(labels.begin(), labels.end(), [&](auto l) { return l == k_classes; });
}

void LabeledSet::validate(bool allow_dustbin) const {
  if (samples.size() != labels.size()) {
    throw DataError("labeled set has " + std::to_string(samples.size()) + " samples but " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    const std::size_t limit = allow_dustbin ? k_classes : k_classes - 1;
    if (labels[i] > limit || (k_classes == 0 && !allow_dustbin)) {
      throw LabelError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                       " outside [0, " + std::to_string(limit) + "]");
    }
    if (!domain.contains(samples[i])) {
      throw DataError("sample " + std::to_string(i) + " leaves the domain box");
    }
    if (i > 0 && samples[i].shape() != samples[0].shape()) {
      throw DimensionError("sample " + std::to_string(i) + " has shape " + shape_string(samples[i].shape()) +
                           ", expected " + shape_string(samples[0].shape()));
    }
  }
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> indices) const {
  LabeledSet out;
  out.k_classes = k_classes;
  out.domain = domain;
  out.samples.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    out.samples.push_back(samples.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

void LabeledSet::append(const LabeledSet& other) {
  samples.insert(samples.end(), other.samples.begin(), other.samples.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

Array stack_rows(std::span<const Array> samples) {
  if (samples.empty()) throw DataError("stack_rows: no samples");
  const std::size_t d = samples[0].size();
  Array out({samples.size(), d});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != d) {
      throw DimensionError("stack_rows: sample " + std::to_string(i) + " has " + std::to_string(samples[i].size()) +
                           " values, expected " + std::to_string(d));
    }
    out.values().segment(static_cast<Eigen::Index>(i * d), static_cast<Eigen::Index>(d)) = samples[i].values();
  }
  return out;
}

}  // namespace dustbin
