#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dustbin/labeled_set.hpp"
#include "dustbin/model.hpp"

namespace dustbin {

/// Out-distribution samples a naive model assigns confidently to each class.
struct MisclassHistogram {
  std::vector<std::size_t> counts;
  std::size_t total_evaluated = 0;
  double confidence_threshold = 0.5;

  std::size_t counted() const;
};

struct UniformityReport {
  MisclassHistogram histogram;
  double score = 0.0;
  std::string set_name;
};

/// Counts argmax classes of samples whose top probability reaches the threshold.
MisclassHistogram misclass_histogram(const Model& naive_model, const LabeledSet& outdist,
                                     double confidence_threshold = 0.5);

/// Normalised Shannon entropy H(p) / ln K of counts / sum(counts).
/// 0 when all mass sits on one class, 1 when counts are exactly uniform.
double uniformity_score(const MisclassHistogram& h);

struct NamedSet {
  std::string name;
  LabeledSet set;
};

/// Descending by score; equal scores ordered by name.
std::vector<UniformityReport> rank_candidates(const Model& naive_model, const std::vector<NamedSet>& candidates,
                                              double confidence_threshold = 0.5);

/// "class,count" rows followed by "score,<value>".
std::string histogram_csv(const UniformityReport& report);

}  // namespace dustbin
