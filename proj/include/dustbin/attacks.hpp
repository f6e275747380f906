#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dustbin/array.hpp"
#include "dustbin/labeled_set.hpp"
#include "dustbin/model.hpp"

namespace dustbin {

enum class AttackKind { Fgs, Tfgs, Ifgs, DeepFool, CwL2 };

std::string to_string(AttackKind kind);
/// Throws ConfigError naming the valid attacks.
AttackKind parse_attack(std::string_view name);
const std::vector<std::string>& attack_names();

struct AttackConfig {
  /// FGS/T-FGS step, or the per-iteration I-FGS step.
  double epsilon = 0.2;
  /// Radius of the l_inf ball I-FGS iterates are projected onto.
  double clip_radius = 0.2;
  std::size_t iterations = 20;
  /// Number of FGS/T-FGS steps. The only source value (CIFAR-100, 6) comes
  /// without a definition; repeat > 1 re-applies the signed step from the
  /// current point, so the l_inf bound becomes repeat * epsilon.
  std::size_t repeat = 1;
  bool early_exit = false;
  double overshoot = 0.02;
  std::size_t max_iterations = 50;
  double kappa = 0.0;
  double cw_c = 1.0;
  double cw_lr = 0.01;
  std::size_t cw_steps = 100;
  Box domain;

  void validate() const;

  // Hyper-parameters reported for the image benchmarks; `epsilon` is the
  // FGS/T-FGS step or, for I-FGS, the per-iteration step.
  static AttackConfig mnist(AttackKind kind = AttackKind::Fgs);
  static AttackConfig cifar10(AttackKind kind = AttackKind::Fgs);
  static AttackConfig cifar100(AttackKind kind = AttackKind::Fgs);
};

struct AttackResult {
  Array x_adv;
  /// Untargeted: prediction differs from the source label. Targeted: target reached.
  bool success = false;
  std::size_t iterations_used = 0;
  double l2_norm = 0.0;
  double linf_norm = 0.0;
  std::size_t adv_label = 0;
};

/// x + eps * sign(dJ/dx), clipped to the domain.
AttackResult fgs(const Model& model, const Array& x, std::size_t y_true, double epsilon, Box domain = {},
                 std::size_t repeat = 1);
/// x - eps * sign(dJ(x, target)/dx), clipped to the domain.
AttackResult tfgs(const Model& model, const Array& x, std::size_t y_true, std::size_t y_target, double epsilon,
                  Box domain = {}, std::size_t repeat = 1);
/// Iterated FGS; each iterate is projected onto the clip_radius l_inf ball
/// around x intersected with the domain.
AttackResult ifgs(const Model& model, const Array& x, std::size_t y_true, double epsilon, double clip_radius,
                  std::size_t iterations, Box domain = {}, bool early_exit = false);
/// Multiclass DeepFool, linearising every margin z_k - z_c around the current iterate.
AttackResult deepfool(const Model& model, const Array& x, double overshoot, std::size_t max_iterations,
                      Box domain = {});
/// Targeted Carlini-Wagner L2 with a fixed trade-off constant and tanh box
/// reparameterisation. Returns x unchanged (success=false) if no iterate
/// reaches a logit margin of kappa.
AttackResult cw_l2(const Model& model, const Array& x, std::size_t y_target, double kappa, double c, double lr,
                   std::size_t steps, Box domain = {});
/// (1 - eps) x + eps * neighbour.
Array legitimate_walk(const Array& x, const Array& neighbour, double epsilon);

/// Targets the harness uses for targeted attacks on x: T-FGS takes the least
/// likely class, C&W the least likely and the second most likely. Only
/// in-distribution classes other than y_true are candidates.
std::vector<std::size_t> attack_targets(const Model& model, const Array& x, std::size_t y_true, AttackKind kind);

AttackResult run_attack(AttackKind kind, const Model& model, const Array& x, std::size_t y_true,
                        std::optional<std::size_t> target, const AttackConfig& cfg);

struct AttackRecord {
  std::size_t sample_id = 0;
  AttackKind kind = AttackKind::Fgs;
  std::size_t source_label = 0;
  std::optional<std::size_t> target;
  AttackResult result;
};

/// One record per sample (per target for targeted attacks), in sample order.
std::vector<AttackRecord> attack_batch(const Model& model, const LabeledSet& set, AttackKind kind,
                                       const AttackConfig& cfg, std::size_t threads = 1);

/// CSV: sample_id,attack,success,linf,l2,iterations,source_label,adv_label
std::string attack_csv(const std::vector<AttackRecord>& records);
void write_attack_csv(const std::vector<AttackRecord>& records, const std::string& path);

/// Adversaries as a set labeled with their source labels.
LabeledSet adversary_set(const std::vector<AttackRecord>& records, std::size_t k_classes, Box domain);

}  // namespace dustbin
