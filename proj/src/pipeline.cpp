#include "dustbin/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <json.hpp>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dustbin/eval.hpp"
#include "dustbin/io.hpp"
#include "dustbin/outdist.hpp"
#include "dustbin/rng.hpp"
#include "dustbin/viz.hpp"

namespace dustbin {

namespace fs = std::filesystem;

namespace {

void log(const RunOptions& opts, const std::string& msg) {
  if (opts.log) *opts.log << msg << '\n' << std::flush;
}

std::string out_file(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.experiment.out) / name).string();
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.experiment.out, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.experiment.out + "': " + ec.message());
}

LabeledSet random_subset(const LabeledSet& set, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n >= set.size()) return set;
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return set.subset(idx);
}

std::uint64_t seed_of(const RunConfig& cfg, std::uint64_t offset) { return cfg.experiment.seed + offset; }

Model load_model(const RunConfig& cfg, const std::string& name) {
  const auto path = checkpoint_path(cfg, name);
  if (!fs::exists(path)) throw IoError("checkpoint '" + path + "' not found; run train first");
  return load_checkpoint(path);
}

const LabeledSet& pick_set(const RunConfig& cfg, const Datasets& ds) {
  return cfg.attack.set == "train" ? ds.train : ds.test;
}

std::string loss_csv(const std::vector<double>& history) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) os << e + 1 << ',' << history[e] << '\n';
  return os.str();
}

/// First correctly classified test sample whose attack moves it, with its direction.
std::pair<std::size_t, Array> attack_direction(const Model& model, const LabeledSet& set, AttackKind kind,
                                               const AttackConfig& acfg) {
  for (auto i : correctly_classified(model, set)) {
    const auto& x = set.samples[i];
    const auto targets = attack_targets(model, x, set.labels[i], kind);
    const auto r = run_attack(kind, model, x, set.labels[i],
                              targets.empty() ? std::nullopt : std::optional<std::size_t>(targets.front()), acfg);
    Array dir(x.shape(), r.x_adv.values() - x.values());
    if (dir.values().norm() >= 1e-12) return {i, dir};
  }
  throw DataError("no test sample yields a non-zero " + to_string(kind) + " direction");
}

}  // namespace

std::string resolve_data_path(const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return path;
  if (const char* dir = std::getenv("DUSTBIN_LAB_DATA"); dir && *dir) return (fs::path(dir) / p).string();
  return path;
}

Datasets load_data(const RunConfig& cfg) {
  Datasets ds;
  if (cfg.data.source == DataSource::TwoMoons) {
    ds.train = two_moons(cfg.data.n_per_class, cfg.data.noise, seed_of(cfg, seed_offset::kTrainData));
    ds.test = two_moons(cfg.data.test_per_class, cfg.data.noise, seed_of(cfg, seed_offset::kTestData));
    return ds;
  }
  auto train = load_idx(resolve_data_path(cfg.data.train_images), resolve_data_path(cfg.data.train_labels),
                        cfg.data.exclude);
  auto test = load_idx(resolve_data_path(cfg.data.test_images), resolve_data_path(cfg.data.test_labels),
                       cfg.data.exclude, train.k_classes);
  ds.train = random_subset(train, cfg.data.subset, seed_of(cfg, seed_offset::kTrainData));
  ds.test = random_subset(test, cfg.data.test_subset, seed_of(cfg, seed_offset::kTestData));
  return ds;
}

ModelConfig model_config(const RunConfig& cfg, const LabeledSet& data, bool augmented) {
  if (data.empty()) throw DataError("cannot size a model from an empty data set");
  const Shape& shape = data.samples.front().shape();
  ModelConfig m;
  switch (cfg.model.architecture) {
    case Architecture::Mlp3:
      m = ModelConfig::mlp3(shape_size(shape), data.k_classes, augmented, cfg.model.width);
      break;
    case Architecture::LenetSmall:
      m = ModelConfig::lenet_small(shape, data.k_classes, augmented);
      m.pool = cfg.model.pool;
      break;
    case Architecture::Linear:
      m = ModelConfig::linear(shape_size(shape), data.k_classes, augmented);
      break;
  }
  m.dropout_p = cfg.model.dropout;
  m.validate();
  return m;
}

OutDistSpec outdist_spec(const RunConfig& cfg, const LabeledSet& data, OutDistKind kind) {
  if (data.empty()) throw DataError("cannot shape an out-distribution set from an empty data set");
  OutDistSpec s;
  s.kind = kind;
  s.sample_shape = data.samples.front().shape();
  s.domain = cfg.domain();
  s.k_classes = data.k_classes;
  s.radius = cfg.outdist.radius;
  s.sigma = cfg.outdist.sigma;
  s.blobs = cfg.outdist.blobs;
  return s;
}

LabeledSet eval_outdist(const RunConfig& cfg, const LabeledSet& like) {
  return synthetic_outdist(outdist_spec(cfg, like, cfg.outdist.kind), cfg.outdist.heldout_count,
                           seed_of(cfg, seed_offset::kEvalOutDist));
}

LabeledSet heldout_outdist(const RunConfig& cfg, const LabeledSet& like) {
  return synthetic_outdist(outdist_spec(cfg, like, cfg.outdist.heldout_kind), cfg.outdist.heldout_count,
                           seed_of(cfg, seed_offset::kHeldOut));
}

std::string checkpoint_path(const RunConfig& cfg, const std::string& model_name) {
  return out_file(cfg, model_name + ".dblm");
}

std::vector<TrainedModel> train_models(const RunConfig& cfg, const Datasets& data, const RunOptions& opts) {
  const auto& train_set = data.train;
  auto fit = [&](const std::string& name, const LabeledSet& set, bool augmented, std::uint64_t offset) {
    TrainConfig tc = cfg.train;
    tc.seed = seed_of(cfg, offset);
    log(opts, "training " + name + " on " + std::to_string(set.size()) + " samples");
    auto r = train(build(model_config(cfg, train_set, augmented), tc.seed), set, tc);
    return TrainedModel{name, std::move(r.model), std::move(r.loss_history), set.size()};
  };

  std::vector<TrainedModel> out;
  out.push_back(fit("naive", train_set, false, seed_offset::kNaive));
  out.push_back(fit("surrogate", train_set, false, seed_offset::kSurrogate));
  const Model naive = out.front().model;
  const std::size_t in_count = cfg.mix.in == 0 ? train_set.size() : cfg.mix.in;

  LabeledSet outdist;
  if (cfg.mix.out > 0) {
    outdist = synthetic_outdist(outdist_spec(cfg, train_set, cfg.outdist.kind), cfg.mix.out,
                                seed_of(cfg, seed_offset::kOutDist));
  }
  LabeledSet interp;
  if (cfg.mix.interp > 0) {
    interp = interpolate(train_set, naive, {cfg.mix.alpha, cfg.mix.interp, seed_of(cfg, seed_offset::kInterp)});
  }
  const auto mix = build_mix(train_set, outdist, interp, LabeledSet{}, {in_count, cfg.mix.out, cfg.mix.interp, 0},
                             seed_of(cfg, seed_offset::kMix));
  out.push_back(fit("augmented", mix, true, seed_offset::kAugmented));

  if (cfg.mix.adversarial_model) {
    log(opts, "crafting " + std::to_string(cfg.mix.adv) + " I-FGS dustbin samples");
    const auto adv = adversarial_dustbin(train_set, naive, cfg.attack_config(AttackKind::Ifgs), cfg.mix.adv,
                                         seed_of(cfg, seed_offset::kAdvDustbin));
    const auto adv_mix = build_mix(train_set, LabeledSet{}, LabeledSet{}, adv, {in_count, 0, 0, cfg.mix.adv},
                                   seed_of(cfg, seed_offset::kAdvMix));
    out.push_back(fit("adversarial", adv_mix, true, seed_offset::kAdversarial));
  }
  return out;
}

void cmd_train(const RunConfig& cfg, const RunOptions& opts) {
  const auto data = load_data(cfg);
  const auto models = train_models(cfg, data, opts);
  ensure_out_dir(cfg);

  nlohmann::json meta;
  meta["experiment"] = cfg.experiment.name;
  meta["seed"] = cfg.experiment.seed;
  meta["config_hash"] = config_hash(cfg);
  meta["train_samples"] = data.train.size();
  meta["test_samples"] = data.test.size();
  meta["k_classes"] = data.train.k_classes;
  for (const auto& m : models) {
    save_checkpoint(m.model, checkpoint_path(cfg, m.name));
    write_file(out_file(cfg, "loss_" + m.name + ".csv"), loss_csv(m.loss_history));
    const auto& mc = m.model.config();
    meta["models"][m.name] = {
        {"architecture", to_string(mc.architecture)},
        {"augmented", mc.augmented},
        {"checkpoint", m.name + ".dblm"},
        {"epochs", m.loss_history.size()},
        {"final_loss", m.loss_history.empty() ? 0.0 : m.loss_history.back()},
        {"train_samples", m.train_samples},
        {"test_accuracy", evaluate(m.model, data.test, 0.5, opts.threads).acc},
    };
  }
  write_file(out_file(cfg, "metadata.json"), meta.dump(2) + "\n");
  write_file(out_file(cfg, "config.ini"), to_ini(cfg));
  log(opts, "wrote checkpoints to " + cfg.experiment.out);
}

void cmd_attack(const RunConfig& cfg, const RunOptions& opts) {
  const auto data = load_data(cfg);
  const Model model = load_model(cfg, cfg.attack.model);
  const auto& set = pick_set(cfg, data);
  const auto& acfg = cfg.attack_config(cfg.attack.kind);
  const std::string name = to_string(cfg.attack.kind);
  log(opts, "running " + name + " on " + std::to_string(set.size()) + " " + cfg.attack.set + " samples");
  const auto records = attack_batch(model, set, cfg.attack.kind, acfg, opts.threads);
  ensure_out_dir(cfg);
  write_attack_csv(records, out_file(cfg, "attack_" + name + ".csv"));
  write_set_csv(adversary_set(records, set.k_classes, set.domain), out_file(cfg, "adversaries_" + name + ".csv"));
}

void cmd_eval(const RunConfig& cfg, const RunOptions& opts) {
  const auto data = load_data(cfg);
  const Model surrogate = load_model(cfg, "surrogate");
  std::vector<std::pair<std::string, Model>> models;
  for (const auto& name : cfg.eval.models) models.emplace_back(name, load_model(cfg, name));

  std::vector<std::pair<std::string, LabeledSet>> sets;
  sets.emplace_back("test", data.test);
  sets.emplace_back("outdist:" + to_string(cfg.outdist.kind), eval_outdist(cfg, data.train));
  sets.emplace_back("heldout:" + to_string(cfg.outdist.heldout_kind), heldout_outdist(cfg, data.train));
  // Black-box adversaries: crafted once on the surrogate from the test
  // samples it classifies correctly, then shown to every evaluated model.
  const LabeledSet clean = data.test.subset(correctly_classified(surrogate, data.test));
  for (auto kind : cfg.eval.attacks) {
    log(opts, "crafting black-box " + to_string(kind) + " adversaries");
    const auto records = attack_batch(surrogate, clean, kind, cfg.attack_config(kind), opts.threads);
    sets.emplace_back("blackbox:" + to_string(kind), adversary_set(records, clean.k_classes, clean.domain));
  }

  EvalReport report;
  report.metadata["config_hash"] = config_hash(cfg);
  report.metadata["experiment"] = cfg.experiment.name;
  report.metadata["seed"] = std::to_string(cfg.experiment.seed);
  report.metadata["threshold"] = std::to_string(cfg.eval.threshold);
  for (const auto& [mname, model] : models) {
    for (const auto& [sname, set] : sets) report.add(mname, sname, evaluate(model, set, cfg.eval.threshold, opts.threads));
  }

  std::ostringstream det;
  det << std::setprecision(17) << "model,outdist_set,tpr,fpr,fnr\n";
  for (const auto& [mname, model] : models) {
    const auto& in = report.at(mname, "test");
    for (std::size_t s = 1; s <= 2; ++s) {
      const auto r = detection_rates(in, report.at(mname, sets[s].first));
      det << mname << ',' << sets[s].first << ',' << r.tpr << ',' << r.fpr << ',' << r.fnr << '\n';
    }
  }

  std::string probes = "model," + probe_csv({});
  for (const auto& [mname, model] : models) {
    log(opts, "probing " + mname);
    ProbeReport pr = whitebox_probe(model, cfg.eval.probe_attack, cfg.attack_config(cfg.eval.probe_attack), data.test,
                                    cfg.eval.probe_steps, opts.threads);
    const auto legit = legit_probe(model, data.test, cfg.eval.legit_epsilons);
    pr.rows.insert(pr.rows.end(), legit.rows.begin(), legit.rows.end());
    const auto body = probe_csv(pr);
    std::istringstream lines(body.substr(body.find('\n') + 1));
    for (std::string line; std::getline(lines, line);) probes += mname + "," + line + "\n";
  }

  ensure_out_dir(cfg);
  write_file(out_file(cfg, "eval.csv"), report_csv(report));
  write_file(out_file(cfg, "eval.txt"), report_table(report));
  write_file(out_file(cfg, "detection.csv"), det.str());
  write_file(out_file(cfg, "probes.csv"), probes);
  if (opts.log) *opts.log << report_table(report);
}

void cmd_select_outdist(const RunConfig& cfg, const RunOptions& opts) {
  if (cfg.select.candidates.empty()) throw ConfigError("[select] candidates is empty");
  const auto data = load_data(cfg);
  const Model naive = load_model(cfg, "naive");
  std::vector<NamedSet> candidates;
  for (std::size_t i = 0; i < cfg.select.candidates.size(); ++i) {
    const auto kind = cfg.select.candidates[i];
    candidates.push_back({to_string(kind), synthetic_outdist(outdist_spec(cfg, data.train, kind), cfg.select.count,
                                                             seed_of(cfg, seed_offset::kSelect + i))});
  }
  const auto ranked = rank_candidates(naive, candidates, cfg.select.threshold);
  ensure_out_dir(cfg);
  std::ostringstream os;
  os << std::setprecision(17) << "rank,name,score,counted,evaluated\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& rep = ranked[r];
    os << r + 1 << ',' << rep.set_name << ',' << rep.score << ',' << rep.histogram.counted() << ','
       << rep.histogram.total_evaluated << '\n';
    write_file(out_file(cfg, "histogram_" + rep.set_name + ".csv"), histogram_csv(rep));
    write_ppm(histogram_image(rep.histogram), out_file(cfg, "histogram_" + rep.set_name + ".ppm"));
    log(opts, std::to_string(r + 1) + ". " + rep.set_name + " score " + std::to_string(rep.score));
  }
  write_file(out_file(cfg, "selection.csv"), os.str());
}

void cmd_plot(const RunConfig& cfg, const RunOptions& opts) {
  const auto data = load_data(cfg);
  ensure_out_dir(cfg);
  const Box dom = cfg.domain();
  for (const auto& kind : cfg.plot.kinds) {
    if (kind == "regions") {
      for (const auto& name : cfg.plot.models) {
        const Model model = load_model(cfg, name);
        const auto grid = decision_regions(model, {dom.lo, dom.hi, dom.lo, dom.hi}, cfg.plot.resolution,
                                           cfg.plot.resolution, opts.threads);
        write_ppm(grid, out_file(cfg, "regions_" + name + ".ppm"));
      }
    } else if (kind == "church-window") {
      const auto& name = cfg.plot.church_model;
      const Model model = load_model(cfg, name);
      const auto attack = cfg.plot.church_attack;
      const auto [sample, dir] = attack_direction(model, data.test, attack, cfg.attack_config(attack));
      const double extent = cfg.plot.extent > 0 ? cfg.plot.extent : 2.0 * dir.values().norm();
      const auto windows = church_window(model, data.test.samples[sample], dir, cfg.plot.n_orthogonal, extent,
                                         cfg.plot.church_resolution, seed_of(cfg, seed_offset::kPlot), opts.threads);
      for (std::size_t i = 0; i < windows.grids.size(); ++i) {
        write_ppm(windows.grids[i], out_file(cfg, "church_" + name + "_" + std::to_string(i) + ".ppm"));
      }
      std::ostringstream os;
      os << std::setprecision(17) << "sample_id,attack,extent,adv_l2\n"
         << sample << ',' << to_string(attack) << ',' << extent << ',' << dir.values().norm() << '\n';
      write_file(out_file(cfg, "church_" + name + ".csv"), os.str());
    } else if (kind == "pca") {
      const auto& name = cfg.plot.pca_model;
      const Model model = load_model(cfg, name);
      const std::size_t n = std::min(cfg.plot.pca_samples, data.test.size());
      std::vector<Array> xs;
      std::vector<std::string> groups;
      for (std::size_t i = 0; i < n; ++i) {
        xs.push_back(data.test.samples[i]);
        groups.push_back("class" + std::to_string(data.test.labels[i]));
      }
      const auto out = eval_outdist(cfg, data.train);
      for (std::size_t i = 0; i < std::min(n, out.size()); ++i) {
        xs.push_back(out.samples[i]);
        groups.push_back("out-dist");
      }
      const auto& acfg = cfg.attack_config(AttackKind::Fgs);
      for (std::size_t i = 0; i < n; ++i) {
        xs.push_back(fgs(model, data.test.samples[i], data.test.labels[i], acfg.epsilon, acfg.domain).x_adv);
        groups.push_back("adversary");
      }
      const auto feats = features(model, xs);
      const auto proj = pca_project(stack_rows(feats), 3, groups);
      write_file(out_file(cfg, "pca_" + name + ".csv"), projection_csv(proj));
    } else if (kind == "histogram") {
      const Model naive = load_model(cfg, "naive");
      const auto out = eval_outdist(cfg, data.train);
      const UniformityReport rep{misclass_histogram(naive, out, cfg.select.threshold), 0.0, to_string(cfg.outdist.kind)};
      UniformityReport scored = rep;
      scored.score = uniformity_score(rep.histogram);
      write_ppm(histogram_image(rep.histogram), out_file(cfg, "histogram.ppm"));
      write_file(out_file(cfg, "histogram.csv"), histogram_csv(scored));
    } else {
      throw ConfigError("unknown plot kind '" + kind + "'");
    }
    log(opts, "plotted " + kind);
  }
}

}  // namespace dustbin
