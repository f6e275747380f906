#include "dustbin/attacks.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "dustbin/kernels.hpp"
#include "dustbin/parallel.hpp"

namespace dustbin {

const std::vector<std::string>& attack_names() {
  static const std::vector<std::string> names{"fgs", "tfgs", "ifgs", "deepfool", "cw"};
  return names;
}

std::string to_string(AttackKind kind) {
  return attack_names().at(static_cast<std::size_t>(kind));
}

AttackKind parse_attack(std::string_view name) {
  const auto& names = attack_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<AttackKind>(i);
  }
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown attack '" + std::string(name) + "' (valid: " + valid + ")");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("attack epsilon must be >= 0");
  if (!(clip_radius >= 0.0)) throw ConfigError("attack clip_radius must be >= 0");
  if (iterations < 1) throw ConfigError("attack iterations must be >= 1");
  if (repeat < 1) throw ConfigError("attack repeat must be >= 1");
  if (!(kappa >= 0.0)) throw ConfigError("attack kappa must be >= 0");
  if (!(overshoot >= 0.0)) throw ConfigError("attack overshoot must be >= 0");
  if (cw_steps < 1) throw ConfigError("cw_steps must be >= 1");
  if (!(domain.lo < domain.hi)) throw ConfigError("attack domain must satisfy lo < hi");
}

AttackConfig AttackConfig::mnist(AttackKind kind) {
  AttackConfig c;
  c.epsilon = kind == AttackKind::Ifgs ? 0.02 : 0.2;
  c.clip_radius = 0.2;
  c.iterations = 20;
  c.kappa = 20.0;
  return c;
}

AttackConfig AttackConfig::cifar10(AttackKind kind) {
  AttackConfig c;
  c.epsilon = kind == AttackKind::Ifgs ? 0.003 : 0.03;
  c.clip_radius = 0.03;
  c.iterations = 20;
  c.kappa = 10.0;
  return c;
}

AttackConfig AttackConfig::cifar100(AttackKind kind) {
  AttackConfig c = cifar10(kind);
  if (kind != AttackKind::Ifgs) {
    c.epsilon = 0.01;
    c.repeat = 6;
  }
  c.kappa = 20.0;
  return c;
}

namespace {

/// Clamps v into the domain and the l_inf ball of `radius` around `center`,
/// then walks any coordinate whose rounded distance still exceeds the radius
/// one ulp at a time toward the center.
Array project(const Array& v, const Array& center, double radius, Box domain) {
  Array out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double c = center[i];
    double p = std::clamp(v[i], std::max(domain.lo, c - radius), std::min(domain.hi, c + radius));
    p = domain.clamp(p);
    while (std::abs(p - c) > radius) p = std::nextafter(p, c);
    out[i] = p;
  }
  return out;
}

AttackResult finish(const Model& model, const Array& x, Array x_adv, std::size_t iterations) {
  AttackResult r;
  r.adv_label = predict(model, x_adv);
  r.l2_norm = l2_distance(x_adv, x);
  r.linf_norm = linf_distance(x_adv, x);
  r.iterations_used = iterations;
  r.x_adv = std::move(x_adv);
  return r;
}

void check_label(const Model& model, std::size_t label, const char* what) {
  if (label >= model.output_dim()) {
    throw LabelError(std::string(what) + " " + std::to_string(label) + " outside model outputs [0, " +
                     std::to_string(model.output_dim()) + ")");
  }
}

void check_domain(const Array& x, Box domain) {
  if (!domain.contains(x)) throw ContractError("attack input lies outside the domain box");
}

AttackResult signed_steps(const Model& model, const Array& x, std::size_t label, double direction, double epsilon,
                          Box domain, std::size_t repeat) {
  Array cur = x;
  for (std::size_t r = 0; r < repeat; ++r) {
    if (epsilon == 0.0) break;
    const Array s = sign(loss_gradient(model, cur, label).gradient);
    Array next(cur.shape(), cur.values() + (direction * epsilon) * s.values());
    cur = project(next, cur, epsilon, domain);
  }
  return finish(model, x, std::move(cur), repeat);
}

double margin_to_target(const Array& z, std::size_t target) {
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (j != target) best_other = std::max(best_other, z[j]);
  }
  return z[target] - best_other;
}

}  // namespace

AttackResult fgs(const Model& model, const Array& x, std::size_t y_true, double epsilon, Box domain,
                 std::size_t repeat) {
  check_label(model, y_true, "fgs label");
  check_domain(x, domain);
  if (!(epsilon >= 0.0)) throw ConfigError("fgs epsilon must be >= 0");
  AttackResult r = signed_steps(model, x, y_true, +1.0, epsilon, domain, repeat);
  r.success = r.adv_label != y_true;
  return r;
}

AttackResult tfgs(const Model& model, const Array& x, std::size_t y_true, std::size_t y_target, double epsilon,
                  Box domain, std::size_t repeat) {
  check_label(model, y_true, "tfgs label");
  check_label(model, y_target, "tfgs target");
  check_domain(x, domain);
  if (y_target == y_true) throw ContractError("tfgs target equals the true label");
  if (!(epsilon >= 0.0)) throw ConfigError("tfgs epsilon must be >= 0");
  AttackResult r = signed_steps(model, x, y_target, -1.0, epsilon, domain, repeat);
  r.success = r.adv_label == y_target;
  return r;
}

AttackResult ifgs(const Model& model, const Array& x, std::size_t y_true, double epsilon, double clip_radius,
                  std::size_t iterations, Box domain, bool early_exit) {
  check_label(model, y_true, "ifgs label");
  check_domain(x, domain);
  if (iterations < 1) throw ConfigError("ifgs iterations must be >= 1");
  if (!(epsilon >= 0.0) || !(clip_radius >= 0.0)) throw ConfigError("ifgs epsilon and clip_radius must be >= 0");
  Array cur = x;
  std::size_t used = 0;
  for (std::size_t k = 0; k < iterations; ++k) {
    const Array s = sign(loss_gradient(model, cur, y_true).gradient);
    Array next(cur.shape(), cur.values() + epsilon * s.values());
    cur = project(next, x, clip_radius, domain);
    used = k + 1;
    if (early_exit && predict(model, cur) != y_true) break;
  }
  AttackResult r = finish(model, x, std::move(cur), used);
  r.success = r.adv_label != y_true;
  return r;
}

AttackResult deepfool(const Model& model, const Array& x, double overshoot, std::size_t max_iterations,
                      Box domain) {
  check_domain(x, domain);
  if (!(overshoot >= 0.0)) throw ConfigError("deepfool overshoot must be >= 0");
  const std::size_t out = model.output_dim();
  const std::size_t source = predict(model, x);
  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x.size()));
  Array cur = x;
  std::size_t used = 0;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    // Gradients of every logit at the current iterate.
    std::vector<InputGradient> grads;
    grads.reserve(out);
    for (std::size_t k = 0; k < out; ++k) {
      Array w(Shape{out});
      w[k] = 1.0;
      grads.push_back(logit_gradient(model, cur, w));
    }
    const Array& z = grads[source].logits;
    if (argmax(z) != source) break;

    double best_ratio = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_step;
    for (std::size_t k = 0; k < out; ++k) {
      if (k == source) continue;
      const double f = z[k] - z[source];
      const Eigen::VectorXd w = grads[k].gradient.values() - grads[source].gradient.values();
      const double norm = w.norm();
      if (norm == 0.0) continue;
      const double ratio = std::abs(f) / norm;
      if (ratio < best_ratio) {
        best_ratio = ratio;
        best_step = (std::abs(f) / (norm * norm)) * w;
      }
    }
    if (best_step.size() == 0) throw NumericError("deepfool: every margin gradient vanishes");
    total += best_step;
    Array next(x.shape(), x.values() + (1.0 + overshoot) * total);
    cur = clamp(next, domain);
    used = it + 1;
  }
  AttackResult r = finish(model, x, std::move(cur), used);
  r.success = r.adv_label != source;
  return r;
}

AttackResult cw_l2(const Model& model, const Array& x, std::size_t y_target, double kappa, double c, double lr,
                   std::size_t steps, Box domain) {
  check_label(model, y_target, "cw target");
  check_domain(x, domain);
  if (steps < 1) throw ConfigError("cw_l2 needs steps >= 1");
  if (!(kappa >= 0.0)) throw ConfigError("cw_l2 kappa must be >= 0");
  const double half_span = 0.5 * (domain.hi - domain.lo);
  const auto n = static_cast<Eigen::Index>(x.size());

  // tanh-space variable; the first candidate is x itself.
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (x[static_cast<std::size_t>(i)] - domain.lo) / half_span - 1.0;
    w(i) = std::atanh(std::clamp(u, -1.0 + 1e-12, 1.0 - 1e-12));
  }
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n), v = Eigen::VectorXd::Zero(n);
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  std::optional<Array> best;
  double best_l2 = std::numeric_limits<double>::infinity();
  std::size_t best_step = 0;
  Array cur = x;
  for (std::size_t step = 0; step <= steps; ++step) {
    Array wz(Shape{model.output_dim()});
    const Array z = logits(model, cur);
    const double margin = margin_to_target(z, y_target);
    const double l2 = l2_distance(cur, x);
    if (margin >= kappa && l2 < best_l2) {
      best = cur;
      best_l2 = l2;
      best_step = step;
    }
    if (step == steps) break;

    // Gradient of ||x' - x||^2 + c * max(max_{j!=t} z_j - z_t, -kappa).
    Eigen::VectorXd gx = 2.0 * (cur.values() - x.values());
    if (-margin > -kappa) {
      std::size_t other = y_target == 0 ? 1 : 0;
      for (std::size_t j = 0; j < z.size(); ++j) {
        if (j != y_target && z[j] > z[other]) other = j;
      }
      wz[other] = 1.0;
      wz[y_target] = -1.0;
      gx += c * logit_gradient(model, cur, wz).gradient.values();
    }
    const Eigen::VectorXd t = w.array().tanh().matrix();
    const Eigen::VectorXd gw = gx.cwiseProduct((half_span * (1.0 - t.array().square())).matrix());
    m = beta1 * m + (1.0 - beta1) * gw;
    v = beta2 * v + (1.0 - beta2) * gw.cwiseProduct(gw);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step + 1));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step + 1));
    if (lr != 0.0) {
      w -= lr * ((m / bc1).array() / ((v / bc2).array().sqrt() + adam_eps)).matrix();
      Array next(x.shape());
      for (Eigen::Index i = 0; i < n; ++i) {
        next[static_cast<std::size_t>(i)] = domain.clamp(domain.lo + half_span * (std::tanh(w(i)) + 1.0));
      }
      cur = std::move(next);
    }
  }
  if (!best) {
    AttackResult r = finish(model, x, x, steps);
    r.success = false;
    return r;
  }
  AttackResult r = finish(model, x, *best, best_step);
  r.success = true;
  return r;
}

Array legitimate_walk(const Array& x, const Array& neighbour, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("legitimate_walk epsilon must lie in [0, 1]");
  if (x.shape() != neighbour.shape()) {
    throw DimensionError("legitimate_walk: " + shape_string(x.shape()) + " vs " + shape_string(neighbour.shape()));
  }
  return Array(x.shape(), (1.0 - epsilon) * x.values() + epsilon * neighbour.values());
}

std::vector<std::size_t> attack_targets(const Model& model, const Array& x, std::size_t y_true, AttackKind kind) {
  if (kind != AttackKind::Tfgs && kind != AttackKind::CwL2) return {};
  const Array p = probs(model, x);
  std::optional<std::size_t> least, second;
  for (std::size_t k = 0; k < model.k_classes(); ++k) {
    if (k == y_true) continue;
    if (!least || p[k] < p[*least]) least = k;
    if (!second || p[k] > p[*second]) second = k;
  }
  if (!least) throw ContractError("targeted attack needs at least two in-distribution classes");
  if (kind == AttackKind::Tfgs || *least == *second) return {*least};
  return {*least, *second};
}

AttackResult run_attack(AttackKind kind, const Model& model, const Array& x, std::size_t y_true,
                        std::optional<std::size_t> target, const AttackConfig& cfg) {
  switch (kind) {
    case AttackKind::Fgs:
      return fgs(model, x, y_true, cfg.epsilon, cfg.domain, cfg.repeat);
    case AttackKind::Tfgs:
      if (!target) throw ContractError("tfgs needs a target class");
      return tfgs(model, x, y_true, *target, cfg.epsilon, cfg.domain, cfg.repeat);
    case AttackKind::Ifgs:
      return ifgs(model, x, y_true, cfg.epsilon, cfg.clip_radius, cfg.iterations, cfg.domain, cfg.early_exit);
    case AttackKind::DeepFool:
      return deepfool(model, x, cfg.overshoot, cfg.max_iterations, cfg.domain);
    case AttackKind::CwL2:
      if (!target) throw ContractError("cw needs a target class");
      return cw_l2(model, x, *target, cfg.kappa, cfg.cw_c, cfg.cw_lr, cfg.cw_steps, cfg.domain);
  }
  throw ContractError("unknown attack kind");
}

std::vector<AttackRecord> attack_batch(const Model& model, const LabeledSet& set, AttackKind kind,
                                       const AttackConfig& cfg, std::size_t threads) {
  cfg.validate();
  std::vector<std::vector<AttackRecord>> per_sample(set.size());
  parallel_for(set.size(), threads, [&](std::size_t i) {
    const auto& x = set.samples[i];
    const std::size_t y = set.labels[i];
    const auto targets = attack_targets(model, x, y, kind);
    auto make = [&](std::optional<std::size_t> t) {
      AttackRecord rec;
      rec.sample_id = i;
      rec.kind = kind;
      rec.source_label = y;
      rec.target = t;
      rec.result = run_attack(kind, model, x, y, t, cfg);
      per_sample[i].push_back(std::move(rec));
    };
    if (targets.empty()) {
      make(std::nullopt);
    } else {
      for (auto t : targets) make(t);
    }
  });
  std::vector<AttackRecord> out;
  for (auto& v : per_sample) {
    for (auto& r : v) out.push_back(std::move(r));
  }
  return out;
}

std::string attack_csv(const std::vector<AttackRecord>& records) {
  std::ostringstream os;
  os << "sample_id,attack,success,linf,l2,iterations,source_label,adv_label\n";
  os << std::setprecision(17);
  for (const auto& r : records) {
    os << r.sample_id << ',' << to_string(r.kind) << ',' << (r.result.success ? 1 : 0) << ',' << r.result.linf_norm
       << ',' << r.result.l2_norm << ',' << r.result.iterations_used << ',' << r.source_label << ','
       << r.result.adv_label << '\n';
  }
  return os.str();
}

void write_attack_csv(const std::vector<AttackRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << attack_csv(records);
  if (!out) throw IoError("failed writing " + path);
}

LabeledSet adversary_set(const std::vector<AttackRecord>& records, std::size_t k_classes, Box domain) {
  LabeledSet s;
  s.k_classes = k_classes;
  s.domain = domain;
  for (const auto& r : records) {
    s.samples.push_back(r.result.x_adv);
    s.labels.push_back(r.source_label);
  }
  return s;
}

}  // namespace dustbin
