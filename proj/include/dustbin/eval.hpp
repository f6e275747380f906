#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dustbin/attacks.hpp"
#include "dustbin/labeled_set.hpp"
#include "dustbin/model.hpp"

namespace dustbin {

/// Fractions of a set that were classified correctly, rejected (sent to the
/// dustbin), or neither. `below_threshold` is only non-zero for naive models
/// on out-distribution sets, where samples under the confidence threshold
/// count as neither accepted nor erroneous.
struct EvalCell {
  double acc = 0.0;
  double rej = 0.0;
  double err = 0.0;
  double below_threshold = 0.0;
  std::size_t samples = 0;

  bool operator==(const EvalCell&) const = default;
};

/// Tally predictions against labels. Labels are either all in-distribution
/// or all dustbin; anything else is a ContractError.
EvalCell tally(std::span<const std::size_t> predictions, std::span<const std::size_t> labels, std::size_t k_classes);

/// Acc/Rej/Err for `model` on `set`. For naive models on out-distribution
/// sets, err counts samples whose top probability reaches the threshold.
EvalCell evaluate(const Model& model, const LabeledSet& set, double confidence_threshold_for_naive = 0.5,
                  std::size_t threads = 1);

/// Adversaries crafted on `source` from the clean samples it classifies
/// correctly, evaluated on `target`. With `only_successful`, adversaries that
/// did not fool the source are dropped first.
EvalCell blackbox_transfer(const Model& source, const Model& target, AttackKind kind, const AttackConfig& cfg,
                           const LabeledSet& clean_set, bool only_successful = false, std::size_t threads = 1);

struct ProbeRow {
  std::string direction;
  double epsilon = 0.0;
  double fooling_visit_pct = 0.0;
  double dustbin_visit_pct = 0.0;
  double true_class_stay_pct = 0.0;
  std::size_t samples = 0;
};

struct ProbeReport {
  std::vector<ProbeRow> rows;
};

/// Marches from each correctly-classified clean sample toward its white-box
/// adversary in `steps` uniform steps and records the first label other than
/// the true class: a fooling class, the dustbin, or none.
ProbeReport whitebox_probe(const Model& model, AttackKind kind, const AttackConfig& cfg, const LabeledSet& clean_set,
                           std::size_t steps = 20, std::size_t threads = 1);

/// Same-class nearest-neighbour walks (1 - eps) x + eps x' for each eps.
ProbeReport legit_probe(const Model& model, const LabeledSet& in_dist_set, std::span<const double> epsilons);

struct DetectionRates {
  double tpr = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

/// tpr = in.acc + in.err, fpr = 1 - out.rej, fnr = in.rej.
DetectionRates detection_rates(const EvalCell& in_dist, const EvalCell& out_dist);

struct EvalRow {
  std::string model;
  std::string dataset;
  EvalCell cell;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::map<std::string, std::string> metadata;

  void add(std::string model, std::string dataset, EvalCell cell);
  const EvalCell& at(std::string_view model, std::string_view dataset) const;
};

/// Metadata as "# key,value" lines, then "model,dataset,acc,rej,err" rows,
/// then "# below_threshold,model,dataset,value" lines where non-zero.
std::string report_csv(const EvalReport& report);
EvalReport parse_report_csv(std::string_view text);
/// Aligned Acc./Rej./Err. table, one column per model.
std::string report_table(const EvalReport& report);

std::string probe_csv(const ProbeReport& report);

}  // namespace dustbin
