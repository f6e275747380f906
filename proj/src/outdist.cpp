#include "dustbin/outdist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <iomanip>

namespace dustbin {

std::size_t MisclassHistogram::counted() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

MisclassHistogram misclass_histogram(const Model& naive_model, const LabeledSet& outdist,
                                     double confidence_threshold) {
  if (naive_model.augmented()) throw ContractError("misclass_histogram expects a naive (K-output) model");
  MisclassHistogram h;
  h.counts.assign(naive_model.k_classes(), 0);
  h.confidence_threshold = confidence_threshold;
  h.total_evaluated = outdist.size();
  for (const auto& p : probs(naive_model, outdist.samples)) {
    const std::size_t k = argmax(p);
    if (p[k] >= confidence_threshold) ++h.counts[k];
  }
  return h;
}

double uniformity_score(const MisclassHistogram& h) {
  if (h.counts.size() < 2) throw ContractError("uniformity_score needs at least two classes");
  const double total = static_cast<double>(h.counted());
  if (total < 1.0) throw DataError("uniformity_score: histogram is empty");
  // Summing in sorted order makes the score exactly permutation-invariant.
  std::vector<std::size_t> sorted = h.counts;
  std::sort(sorted.begin(), sorted.end());
  double entropy = 0.0;
  std::size_t nonzero = 0;
  for (auto c : sorted) {
    if (c == 0) continue;
    ++nonzero;
    const double p = static_cast<double>(c) / total;
    entropy -= p * std::log(p);
  }
  if (nonzero == 1) return 0.0;
  // Exactly uniform counts map to exactly 1.
  if (nonzero == h.counts.size() &&
      std::all_of(h.counts.begin(), h.counts.end(), [&](auto c) { return c == h.counts[0]; })) {
    return 1.0;
  }
  return std::clamp(entropy / std::log(static_cast<double>(h.counts.size())), 0.0, 1.0);
}

std::vector<UniformityReport> rank_candidates(const Model& naive_model, const std::vector<NamedSet>& candidates,
                                              double confidence_threshold) {
  if (candidates.empty()) throw ContractError("rank_candidates needs at least one candidate");
  std::vector<UniformityReport> out;
  for (const auto& c : candidates) {
    UniformityReport r;
    r.set_name = c.name;
    r.histogram = misclass_histogram(naive_model, c.set, confidence_threshold);
    r.score = uniformity_score(r.histogram);
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.set_name < b.set_name;
  });
  return out;
}

std::string histogram_csv(const UniformityReport& report) {
  std::ostringstream os;
  os << "class,count\n";
  for (std::size_t k = 0; k < report.histogram.counts.size(); ++k) os << k << ',' << report.histogram.counts[k] << '\n';
  os << std::setprecision(17) << "score," << report.score << '\n';
  return os.str();
}

}  // namespace dustbin
