// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include "dustbin/attacks.hpp"
#include "dustbin/datasets.hpp"
#include "dustbin/eval.hpp"
#include "dustbin/io.hpp"
#include "dustbin/outdist.hpp"
#include "dustbin/pipeline.hpp"
#include "dustbin/viz.hpp"
#include "support.hpp"

using namespace dustbin;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

Array uniform_array(const Shape& s, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Array a(s);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

// Small random mlp3 or lenet-small with non-zero biases.
Model random_model(Rng& rng, bool lenet, Shape* input_shape) {
  ModelConfig mc;
  if (lenet) {
    *input_shape = {1 + rng.index(2), 8 + rng.index(5), 8 + rng.index(5)};
    mc = ModelConfig::lenet_small(*input_shape, 2 + rng.index(3), rng.index(2) == 1);
    mc.widths = {2 + rng.index(3), 2 + rng.index(3), 4 + rng.index(5)};
    mc.kernel_size = 3;
    mc.dropout_p = 0.0;
  } else {
    *input_shape = {2 + rng.index(7)};
    mc = ModelConfig::mlp3((*input_shape)[0], 2 + rng.index(4), rng.index(2) == 1, 4 + rng.index(13));
  }
  Model m = build(mc, rng.next());
  Params p = m.params();
  for (auto& t : p.tensors) {
    if (t.shape().size() == 1) {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.1, 0.1);
    }
  }
  return Model(mc, p);
}

// ---- 1 ------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  Rng rng(20240101);
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0, lenets = 0;
  for (int pair = 0; pair < 100; ++pair) {
    const bool lenet = pair % 2 == 1;
    lenets += lenet;
    Shape shape;
    const Model m = random_model(rng, lenet, &shape);
    const Array x = uniform_array(shape, rng, -1.0, 1.0);
    const auto r = testing::grad_check(m, x, rng.index(m.output_dim()), rng, 8, 1e-5);
    worst = std::max(worst, r.max_rel_err);
    checked += r.checked;
    skipped += r.skipped;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0 && checked > 0,
          "100 pairs (" + std::to_string(100 - lenets) + " mlp3, " + std::to_string(lenets) +
              " lenet-small), max rel err " + fmt(worst) + " over " + std::to_string(checked) + " coords (" +
              std::to_string(skipped) + " kink-crossing skipped), " + fmt(secs, 3) + " s"};
}

// ---- 2 ------------------------------------------------------------------

Outcome attack_invariants() {
  Rng rng(77);
  std::size_t runs = 0, violations = 0, cw_successes = 0, degenerate = 0;
  std::string first;
  auto violate = [&](const std::string& what) {
    if (violations++ == 0) first = what;
  };
  const Box unit{0.0, 1.0};
  for (int trial = 0; trial < 120; ++trial) {
    Shape shape;
    const Model m = random_model(rng, trial % 3 == 0, &shape);
    const Array x = uniform_array(shape, rng);
    const std::size_t y = rng.index(m.k_classes());
    const std::size_t target = (y + 1 + rng.index(m.k_classes() - 1)) % m.k_classes();
    const double eps = rng.uniform(0.01, 0.5), clip = rng.uniform(0.01, 0.5);

    const auto check_box = [&](const AttackResult& r, const char* name) {
      ++runs;
      if (!unit.contains(r.x_adv)) violate(std::string(name) + " left [0,1]^d");
    };
    const auto f = fgs(m, x, y, eps, unit);
    check_box(f, "fgs");
    if (linf_distance(f.x_adv, x) > eps) violate("fgs |d|_inf > eps");
    const auto t = tfgs(m, x, y, target, eps, unit);
    check_box(t, "tfgs");
    if (linf_distance(t.x_adv, x) > eps) violate("tfgs |d|_inf > eps");
    const auto i = ifgs(m, x, y, eps / 4, clip, 10, unit);
    check_box(i, "ifgs");
    if (linf_distance(i.x_adv, x) > clip) violate("ifgs |d|_inf > clip_radius");
    try {
      check_box(deepfool(m, x, 0.02, 20, unit), "deepfool");
    } catch (const NumericError&) {
      ++degenerate;  // all margin gradients vanish (dead ReLUs); a documented refusal
    }
    const double kappa = trial % 2 == 0 ? 0.0 : rng.uniform(0.0, 2.0);
    const auto c = cw_l2(m, x, target, kappa, 10.0, 0.05, 60, unit);
    check_box(c, "cw");
    if (c.success) {
      ++cw_successes;
      const Array z = logits(m, c.x_adv);
      double other = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < z.size(); ++k) {
        if (k != target) other = std::max(other, z[k]);
      }
      if (z[target] - other < kappa) violate("cw success with margin < kappa");
    }
  }
  return {violations == 0 && runs >= 500,
          std::to_string(runs) + " attack runs (" + std::to_string(cw_successes) + " successful cw, " +
              std::to_string(degenerate) + " deepfool refusals at zero-gradient points not counted), " +
              std::to_string(violations) + " violations" + (first.empty() ? "" : " (first: " + first + ")")};
}

// ---- 3 ------------------------------------------------------------------

// Binary linear classifier f(x) = w.x + b as a two-logit model with logit 0 == 0.
Model binary_linear(const Eigen::VectorXd& w, double b) {
  const std::size_t d = static_cast<std::size_t>(w.size());
  Array W({d, 2});
  for (std::size_t i = 0; i < d; ++i) W[i * 2 + 1] = w(static_cast<Eigen::Index>(i));
  Params p;
  p.tensors.push_back(W);
  p.tensors.push_back(Array({2}, {0.0, b}));
  return Model(ModelConfig::linear(d, 2), p);
}

Outcome linear_oracles() {
  Rng rng(31);
  constexpr double overshoot = 0.02;
  const Box wide{-1e6, 1e6};
  double df_worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto d = static_cast<Eigen::Index>(2 + rng.index(15));
    Eigen::VectorXd w(d);
    for (Eigen::Index i = 0; i < d; ++i) w(i) = rng.normal();
    const double b = rng.normal();
    const Model m = binary_linear(w, b);
    const Array x = uniform_array({static_cast<std::size_t>(d)}, rng);
    const double f = w.dot(x.values()) + b;
    if (f == 0.0) continue;
    const auto r = deepfool(m, x, overshoot, 1, wide);
    const Eigen::VectorXd expected = -(f / w.squaredNorm()) * w * (1.0 + overshoot);
    df_worst = std::max(df_worst, (r.x_adv.values() - x.values() - expected).cwiseAbs().maxCoeff());
  }

  std::size_t within = 0, instances = 0;
  double worst_ratio = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto d = static_cast<Eigen::Index>(2 + rng.index(15));
    Eigen::VectorXd w(d);
    for (Eigen::Index i = 0; i < d; ++i) w(i) = rng.normal();
    const Array x = uniform_array({static_cast<std::size_t>(d)}, rng, 0.25, 0.75);
    // Boundary at distance dist on a random side, so the minimiser stays inside [0,1]^d.
    const double dist = rng.uniform(0.02, 0.2);
    const double side = rng.index(2) == 0 ? 1.0 : -1.0;
    const double b = side * dist * w.norm() - w.dot(x.values());
    const Model m = binary_linear(w, b);
    const double f = w.dot(x.values()) + b;
    const std::size_t target = f > 0 ? 0 : 1;
    const auto r = cw_l2(m, x, target, 0.0, 10.0, 0.01, 1000, Box{0.0, 1.0});
    ++instances;
    const double ratio = r.success ? r.l2_norm / (std::abs(f) / w.norm()) : std::numeric_limits<double>::infinity();
    worst_ratio = std::max(worst_ratio, ratio);
    within += ratio <= 1.5;
  }
  const double frac = static_cast<double>(within) / static_cast<double>(instances);
  return {df_worst <= 1e-6 && frac >= 0.9,
          "deepfool max |delta - closed form| " + fmt(df_worst) + "; cw within 1.5x on " + std::to_string(within) + "/" +
              std::to_string(instances) + " (worst ratio " + fmt(worst_ratio) + ")"};
}

// ---- shared two-moons run ----------------------------------------------

struct TwoMoonsRun {
  RunConfig cfg = RunConfig::defaults(DataSource::TwoMoons);
  Datasets data;
  std::map<std::string, Model> models;
  double train_seconds = 0.0;

  TwoMoonsRun() {
    const auto t0 = Clock::now();
    data = load_data(cfg);
    for (auto& tm : train_models(cfg, data)) models.emplace(tm.name, tm.model);
    train_seconds = seconds_since(t0);
  }

  const Model& naive() const { return models.at("naive"); }
  const Model& surrogate() const { return models.at("surrogate"); }
  const Model& augmented() const { return models.at("augmented"); }
  const Model& adversarial() const { return models.at("adversarial"); }

  LabeledSet blackbox(AttackKind kind) const {
    const LabeledSet clean = data.test.subset(correctly_classified(surrogate(), data.test));
    return adversary_set(attack_batch(surrogate(), clean, kind, cfg.attack_config(kind)), clean.k_classes,
                         clean.domain);
  }
};

bool partitions(const EvalCell& c) {
  const double n = static_cast<double>(c.samples);
  const double a = std::round(c.acc * n), r = std::round(c.rej * n), e = std::round(c.err * n),
               b = std::round(c.below_threshold * n);
  return c.samples > 0 && a + r + e + b == n && std::abs(c.acc + c.rej + c.err + c.below_threshold - 1.0) <= 1e-12;
}

// ---- 4 ------------------------------------------------------------------

Outcome two_moons_regions(const TwoMoonsRun& run) {
  const auto t0 = Clock::now();
  const Bounds2D bounds{-3.0, 3.0, -3.0, 3.0};
  const auto naive = decision_regions(run.naive(), bounds, 200, 200);
  const auto aug = decision_regions(run.augmented(), bounds, 200, 200);
  bool naive_two = true;
  for (int c : naive.class_ids) naive_two = naive_two && (c == 0 || c == 1);

  const auto centres = grid_centers(bounds, 200, 200);
  std::size_t far = 0, far_dustbin = 0;
  for (std::size_t i = 0; i < centres.size(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& s : run.data.train.samples) {
      nearest = std::min(nearest, std::hypot(centres[i][0] - s[0], centres[i][1] - s[1]));
    }
    if (nearest > 1.0) {
      ++far;
      far_dustbin += aug.class_ids[i] == 2;
    }
  }
  const double frac = far == 0 ? 0.0 : static_cast<double>(far_dustbin) / static_cast<double>(far);
  const double acc = evaluate(run.augmented(), run.data.test).acc;
  const double secs = run.train_seconds + seconds_since(t0);
  return {naive_two && frac >= 0.85 && acc >= 0.95 && secs < 120.0,
          std::string("naive grid ") + (naive_two ? "all in {0,1}" : "has other labels") + ", " +
              std::to_string(naive.distinct_classes()) + " classes; augmented dustbin on " + fmt(100 * frac) +
              "% of " + std::to_string(far) + " far grid points, test acc " + fmt(acc) + ", " + fmt(secs, 3) + " s"};
}

// ---- 5 ------------------------------------------------------------------

Outcome blackbox_drop(const TwoMoonsRun& run, std::vector<EvalCell>* cells) {
  const auto t0 = Clock::now();
  const auto adv = run.blackbox(AttackKind::Fgs);
  const auto naive = evaluate(run.naive(), adv), aug = evaluate(run.augmented(), adv);
  cells->push_back(naive);
  cells->push_back(aug);
  cells->push_back(evaluate(run.naive(), run.data.test));
  cells->push_back(evaluate(run.augmented(), run.data.test));
  bool all_partition = true;
  for (const auto& c : *cells) all_partition = all_partition && partitions(c);
  const double drop = 100.0 * (naive.err - aug.err);
  bool pass = drop >= 20.0 && all_partition;
  std::string detail = "two-moons FGS eps " + fmt(run.cfg.attack_config(AttackKind::Fgs).epsilon) + ": naive err " +
                       fmt(100 * naive.err) + "%, augmented err " + fmt(100 * aug.err) + "% (drop " + fmt(drop) +
                       " pts)";

  // Image benchmark, only when the IDX files are available.
  RunConfig mc = RunConfig::defaults(DataSource::Idx);
  const bool have_idx = std::filesystem::exists(resolve_data_path(mc.data.train_images)) &&
                        std::filesystem::exists(resolve_data_path(mc.data.train_labels)) &&
                        std::filesystem::exists(resolve_data_path(mc.data.test_images)) &&
                        std::filesystem::exists(resolve_data_path(mc.data.test_labels));
  if (have_idx) {
    mc.mix.adversarial_model = false;
    // Two epochs keep three lenet-small fits inside the time budget on one core.
    mc.train.epochs = 2;
    const auto data = load_data(mc);
    std::map<std::string, Model> trained;
    for (auto& tm : train_models(mc, data)) trained.emplace(tm.name, tm.model);
    const Model &mn = trained.at("naive"), &ms = trained.at("surrogate"), &ma = trained.at("augmented");
    const LabeledSet clean = data.test.subset(correctly_classified(ms, data.test));
    const auto set = adversary_set(attack_batch(ms, clean, AttackKind::Fgs, mc.attack_config(AttackKind::Fgs)),
                                   clean.k_classes, clean.domain);
    const auto n = evaluate(mn, set), a = evaluate(ma, set);
    cells->push_back(n);
    cells->push_back(a);
    const double mdrop = 100.0 * (n.err - a.err);
    pass = pass && mdrop >= 20.0 && partitions(n) && partitions(a);
    detail += "; mnist (" + std::to_string(set.size()) + " adversaries, 2 epochs) naive err " + fmt(100 * n.err) + "%, augmented err " + fmt(100 * a.err) + "% (drop " +
              fmt(mdrop) + " pts)";
  } else {
    detail += "; mnist part skipped (no IDX files under DUSTBIN_LAB_DATA)";
  }
  const double secs = run.train_seconds + seconds_since(t0);
  pass = pass && secs < 300.0;
  detail += std::string(", cells partition ") + (all_partition ? "exactly" : "NOT exactly") + ", " + fmt(secs, 3) + " s";
  return {pass, detail};
}

// ---- 6 ------------------------------------------------------------------

Outcome ablation(const TwoMoonsRun& run, std::vector<EvalCell>* cells) {
  const auto ifgs_set = run.blackbox(AttackKind::Ifgs);
  const auto heldout = heldout_outdist(run.cfg, run.data.train);
  const auto adv_ifgs = evaluate(run.adversarial(), ifgs_set);
  const auto adv_held = evaluate(run.adversarial(), heldout);
  const auto aug_held = evaluate(run.augmented(), heldout);
  cells->insert(cells->end(), {adv_ifgs, adv_held, aug_held});
  return {adv_ifgs.rej >= 0.9 && adv_held.rej < 0.5 && aug_held.rej >= 0.85,
          "adversarial-dustbin model rejects " + fmt(100 * adv_ifgs.rej) + "% of I-FGS adversaries and " +
              fmt(100 * adv_held.rej) + "% of held-out " + to_string(run.cfg.outdist.heldout_kind) +
              "; out-dist+interp model rejects " + fmt(100 * aug_held.rej) + "% of it"};
}

// ---- 7 ------------------------------------------------------------------

Outcome uniformity() {
  const auto t0 = Clock::now();
  auto score = [](std::vector<std::size_t> c) {
    MisclassHistogram h;
    h.counts = std::move(c);
    return uniformity_score(h);
  };
  bool ok = score({7, 0, 0, 0}) == 0.0 && score({0, 9, 0}) == 0.0;
  ok = ok && std::abs(score({5, 5, 5, 5}) - 1.0) <= 1e-15 && std::abs(score({3, 3}) - 1.0) <= 1e-15;
  ok = ok && std::abs(score({2, 2, 0, 0}) - 0.5) <= 1e-15;
  Rng rng(9);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<std::size_t> c(2 + rng.index(19));
    for (auto& v : c) v = rng.index(100);
    c[rng.index(c.size())] += 1;
    const double s = score(c);
    auto perm = c;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    auto scaled = c;
    const std::size_t factor = 2 + rng.index(50);
    for (auto& v : scaled) v *= factor;
    worst = std::max({worst, std::abs(score(perm) - s), std::abs(score(scaled) - s)});
    ok = ok && s >= 0.0 && s <= 1.0 + 1e-15;
  }
  const double secs = seconds_since(t0);
  ok = ok && worst <= 1e-12 && secs < 5.0;
  return {ok, "boundary values exact; 1000 random histograms, max permutation/scaling deviation " + fmt(worst) +
                  ", " + fmt(secs, 3) + " s"};
}

// ---- 8 ------------------------------------------------------------------

Outcome detection_identities(const std::vector<EvalCell>& generated) {
  Rng rng(4);
  std::size_t checked = 0, broken = 0;
  auto check = [&](const EvalCell& in, const EvalCell& out) {
    const auto r = detection_rates(in, out);
    ++checked;
    if (r.tpr != in.acc + in.err || r.fpr != 1.0 - out.rej || r.fnr != in.rej) ++broken;
  };
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 1 + rng.index(1000);
    const std::size_t a = rng.index(n + 1), r = rng.index(n - a + 1);
    const double dn = static_cast<double>(n);
    const EvalCell in{a / dn, r / dn, (n - a - r) / dn, 0.0, n};
    const std::size_t orj = rng.index(n + 1);
    const EvalCell out{0.0, orj / dn, (n - orj) / dn, 0.0, n};
    check(in, out);
  }
  for (const auto& in : generated) {
    for (const auto& out : generated) check(in, out);
  }
  return {broken == 0, std::to_string(checked) + " (in, out) cell pairs incl. " + std::to_string(generated.size()) +
                           " generated cells, " + std::to_string(broken) + " identity failures"};
}

// ---- 9 ------------------------------------------------------------------

Outcome whitebox_direction(const TwoMoonsRun& run) {
  const auto& cfg = run.cfg.attack_config(AttackKind::Fgs);
  const auto aug = whitebox_probe(run.augmented(), AttackKind::Fgs, cfg, run.data.test, run.cfg.eval.probe_steps);
  const auto naive = whitebox_probe(run.naive(), AttackKind::Fgs, cfg, run.data.test, run.cfg.eval.probe_steps);
  const auto& a = aug.rows.at(0);
  const auto& n = naive.rows.at(0);
  return {a.dustbin_visit_pct > a.fooling_visit_pct && n.dustbin_visit_pct == 0.0,
          "augmented FGS probe: dustbin " + fmt(a.dustbin_visit_pct) + "% vs fooling " + fmt(a.fooling_visit_pct) +
              "% of " + std::to_string(a.samples) + "; naive dustbin " + fmt(n.dustbin_visit_pct) + "%"};
}

// ---- 10 -----------------------------------------------------------------

Outcome golden_formats() {
  const std::string dir = DUSTBIN_GOLDEN_DIR;
  const auto images = read_file(dir + "/fixture-images.idx"), labels = read_file(dir + "/fixture-labels.idx");
  const auto set = load_idx(dir + "/fixture-images.idx", dir + "/fixture-labels.idx");
  const auto [img_out, lab_out] = idx_bytes(set);
  const bool idx_ok = set.size() == 2 && set.labels == std::vector<std::size_t>{3, 7} && set.samples[0][1] == 1.0 &&
                      img_out == images && lab_out == labels;

  const bool ppm_ok = ppm_bytes(Image{1, 1, {Rgb{255, 0, 0}}}) == read_file(dir + "/red_1x1.ppm");

  const auto ckpt = read_file(dir + "/linear_2x2.dblm");
  Params p;
  p.tensors.push_back(Array({2, 2}, {0.5, -1.25, 2.0, 0.125}));
  p.tensors.push_back(Array({2}, {-0.75, 1.5}));
  const Model m(ModelConfig::linear(2, 2), p);
  const auto tmp = (std::filesystem::temp_directory_path() / "dustbin_acceptance.dblm").string();
  save_checkpoint(load_checkpoint(dir + "/linear_2x2.dblm"), tmp);
  const bool ckpt_ok = checkpoint_bytes(m) == ckpt && read_file(tmp) == ckpt &&
                       model_from_checkpoint_bytes(ckpt).params() == p;
  std::filesystem::remove(tmp);
  auto word = [](bool b) { return b ? "byte-exact" : "MISMATCH"; };
  return {idx_ok && ppm_ok && ckpt_ok, std::string("idx ") + word(idx_ok) + ", ppm " + word(ppm_ok) +
                                           ", checkpoint " + word(ckpt_ok)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << std::endl;
  };

  report(1, "gradient correctness", gradient_correctness);
  report(2, "attack invariants", attack_invariants);
  report(3, "linear-model oracles", linear_oracles);

  std::unique_ptr<TwoMoonsRun> run;
  std::string run_error;
  try {
    run = std::make_unique<TwoMoonsRun>();
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto with_run = [&](auto f) {
    return [&, f]() -> Outcome {
      if (!run) return {false, "two-moons run failed: " + run_error};
      return f(*run);
    };
  };
  std::vector<EvalCell> cells;
  report(4, "two-moons decision regions", with_run([](const TwoMoonsRun& r) { return two_moons_regions(r); }));
  report(5, "black-box FGS error drop", with_run([&](const TwoMoonsRun& r) { return blackbox_drop(r, &cells); }));
  report(6, "ablation ordering", with_run([&](const TwoMoonsRun& r) { return ablation(r, &cells); }));
  report(7, "uniformity metric", uniformity);
  report(8, "detection-rate identities", [&] { return detection_identities(cells); });
  report(9, "white-box probing direction", with_run([](const TwoMoonsRun& r) { return whitebox_direction(r); }));
  report(10, "format golden files", golden_formats);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
