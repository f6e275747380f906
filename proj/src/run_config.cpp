#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dustbin/pipeline.hpp"

namespace dustbin {

namespace pt = boost::property_tree;

namespace {

std::string source_name(DataSource s) { return s == DataSource::TwoMoons ? "two-moons" : "idx"; }

DataSource parse_source(std::string_view v) {
  if (v == "two-moons") return DataSource::TwoMoons;
  if (v == "idx") return DataSource::Idx;
  throw ConfigError("unknown data source '" + std::string(v) + "' (valid: two-moons, idx)");
}

std::string optimizer_name(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "momentum"; }

Optimizer parse_optimizer(std::string_view v) {
  if (v == "sgd") return Optimizer::Sgd;
  if (v == "momentum") return Optimizer::SgdMomentum;
  throw ConfigError("unknown optimizer '" + std::string(v) + "' (valid: sgd, momentum)");
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto pos = v.find(',', start);
    auto item = trim(v.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F f) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : ",") + f(i);
  return out;
}

double parse_double(const std::string& v) {
  double d = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), d);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return d;
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t u = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), u);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return u;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

/// Reads typed fields from the tree, attaching "origin:line: [section] key"
/// to every conversion error and tracking which keys were consumed.
class Reader {
 public:
  Reader(std::string_view text, std::string origin) : origin_(std::move(origin)) {
    std::istringstream in{std::string(text)};
    try {
      pt::read_ini(in, tree_);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError(origin_ + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    std::istringstream lines{std::string(text)};
    std::string line;
    while (std::getline(lines, line)) lines_.push_back(line);
  }

  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    const auto sec = tree_.get_child_optional(pt::ptree::path_type(section, '\0'));
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    used_.insert({section, key});
    return trim(*v);
  }

  template <class T, class F>
  void get(const std::string& section, const std::string& key, T& field, F convert) {
    const auto v = raw(section, key);
    if (!v) return;
    try {
      field = convert(*v);
    } catch (const Error& e) {
      throw ConfigError(where(section, key) + e.what());
    }
  }

  void get(const std::string& section, const std::string& key, std::size_t& field) {
    get(section, key, field, [](const std::string& v) { return static_cast<std::size_t>(parse_u64(v)); });
  }
  void get(const std::string& section, const std::string& key, double& field) { get(section, key, field, parse_double); }
  void get(const std::string& section, const std::string& key, bool& field) { get(section, key, field, parse_bool); }
  void get(const std::string& section, const std::string& key, std::string& field) {
    get(section, key, field, [](const std::string& v) { return v; });
  }

  /// Wraps a post-parse check with the location of the key it concerns.
  template <class F>
  void check(const std::string& section, const std::string& key, F f) {
    try {
      f();
    } catch (const Error& e) {
      throw ConfigError(where(section, key) + e.what());
    }
  }

  void reject_unknown() const {
    for (const auto& [section, keys] : tree_) {
      if (keys.empty() && !keys.data().empty()) {
        throw ConfigError(origin_ + ": key '" + section + "' outside any section");
      }
      if (!known_section(section)) throw ConfigError(origin_ + ": unknown section [" + section + "]");
      for (const auto& [key, value] : keys) {
        if (!used_.contains({section, key})) throw ConfigError(where(section, key) + "unknown key");
      }
    }
  }

  std::string where(const std::string& section, const std::string& key) const {
    return origin_ + ":" + std::to_string(line_of(section, key)) + ": [" + section + "] " + key + ": ";
  }

 private:
  static bool known_section(const std::string& s) {
    static const std::set<std::string> names{"experiment", "data",  "outdist", "model", "train", "mix",
                                             "attack",     "eval",  "plot",    "select"};
    if (names.contains(s)) return true;
    if (s.rfind("attack.", 0) != 0) return false;
    const auto& attacks = attack_names();
    return std::find(attacks.begin(), attacks.end(), s.substr(7)) != attacks.end();
  }

  std::size_t line_of(const std::string& section, const std::string& key) const {
    std::string current;
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      const auto t = trim(lines_[i]);
      if (t.size() >= 2 && t.front() == '[' && t.back() == ']') {
        current = trim(std::string_view(t).substr(1, t.size() - 2));
      } else if (current == section) {
        const auto eq = t.find('=');
        if (eq != std::string::npos && trim(std::string_view(t).substr(0, eq)) == key) return i + 1;
      }
    }
    return 0;
  }

  pt::ptree tree_;
  std::string origin_;
  std::vector<std::string> lines_;
  std::set<std::pair<std::string, std::string>> used_;
};

constexpr AttackKind kAllAttacks[] = {AttackKind::Fgs, AttackKind::Tfgs, AttackKind::Ifgs, AttackKind::DeepFool,
                                      AttackKind::CwL2};

}  // namespace

RunConfig RunConfig::defaults(DataSource source) {
  RunConfig c;
  c.data.source = source;
  if (source == DataSource::TwoMoons) {
    for (auto k : kAllAttacks) {
      AttackConfig a;
      a.domain = kTwoMoonsDomain;
      a.epsilon = k == AttackKind::Ifgs ? 0.03 : 0.3;
      a.clip_radius = 0.3;
      a.iterations = 20;
      c.attacks[k] = a;
    }
    c.plot.n_orthogonal = 1;  // the plane has one direction orthogonal to the adversary
    return c;
  }
  c.experiment.name = "mnist";
  c.experiment.out = "runs/mnist";
  c.data.subset = 4000;
  c.data.test_subset = 1000;
  c.outdist.kind = OutDistKind::LettersNoise;
  c.outdist.heldout_kind = OutDistKind::UniformBox;
  c.model.architecture = Architecture::LenetSmall;
  c.model.dropout = 0.5;
  c.train = TrainConfig{0.01, 32, 5, 0, Optimizer::SgdMomentum, 0.9};
  c.mix.interp = 1000;
  c.plot.kinds = {"church-window", "pca", "histogram"};
  c.select.candidates = {OutDistKind::LettersNoise, OutDistKind::UniformBox};
  for (auto k : kAllAttacks) c.attacks[k] = AttackConfig::mnist(k);
  return c;
}

const AttackConfig& RunConfig::attack_config(AttackKind kind) const {
  const auto it = attacks.find(kind);
  if (it == attacks.end()) throw ConfigError("no hyper-parameters for attack '" + to_string(kind) + "'");
  return it->second;
}

Box RunConfig::domain() const { return data.source == DataSource::TwoMoons ? kTwoMoonsDomain : Box{}; }

RunConfig parse_run_config(std::string_view text, std::string_view origin) {
  Reader r(text, std::string(origin));
  DataSource source = DataSource::TwoMoons;
  r.get("data", "source", source, parse_source);
  RunConfig c = RunConfig::defaults(source);

  r.get("experiment", "name", c.experiment.name);
  r.get("experiment", "seed", c.experiment.seed);
  r.get("experiment", "out", c.experiment.out);

  auto& d = c.data;
  r.get("data", "n_per_class", d.n_per_class);
  r.get("data", "noise", d.noise);
  r.get("data", "test_per_class", d.test_per_class);
  r.get("data", "train_images", d.train_images);
  r.get("data", "train_labels", d.train_labels);
  r.get("data", "test_images", d.test_images);
  r.get("data", "test_labels", d.test_labels);
  r.get("data", "exclude", d.exclude, [](const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& s : split_list(v)) out.push_back(static_cast<std::size_t>(parse_u64(s)));
    return out;
  });
  r.get("data", "subset", d.subset);
  r.get("data", "test_subset", d.test_subset);

  auto& o = c.outdist;
  r.get("outdist", "kind", o.kind, parse_outdist_kind);
  r.get("outdist", "count", o.count);
  r.get("outdist", "heldout_kind", o.heldout_kind, parse_outdist_kind);
  r.get("outdist", "heldout_count", o.heldout_count);
  r.get("outdist", "radius", o.radius);
  r.get("outdist", "sigma", o.sigma);
  r.get("outdist", "blobs", o.blobs);

  r.get("model", "architecture", c.model.architecture, parse_architecture);
  r.get("model", "width", c.model.width);
  r.get("model", "dropout", c.model.dropout);
  r.get("model", "pool", c.model.pool);

  r.get("train", "optimizer", c.train.optimizer, parse_optimizer);
  r.get("train", "lr", c.train.learning_rate);
  r.get("train", "batch", c.train.batch_size);
  r.get("train", "epochs", c.train.epochs);
  r.get("train", "momentum", c.train.momentum);

  r.get("mix", "in", c.mix.in);
  r.get("mix", "out", c.mix.out);
  r.get("mix", "interp", c.mix.interp);
  r.get("mix", "alpha", c.mix.alpha);
  r.get("mix", "adversarial_model", c.mix.adversarial_model);
  r.get("mix", "adv", c.mix.adv);

  r.get("attack", "name", c.attack.kind, parse_attack);
  r.get("attack", "model", c.attack.model);
  r.get("attack", "set", c.attack.set);
  for (auto k : kAllAttacks) {
    const std::string s = "attack." + to_string(k);
    auto& a = c.attacks[k];
    r.get(s, "epsilon", a.epsilon);
    r.get(s, "clip_radius", a.clip_radius);
    r.get(s, "iterations", a.iterations);
    r.get(s, "repeat", a.repeat);
    r.get(s, "early_exit", a.early_exit);
    r.get(s, "overshoot", a.overshoot);
    r.get(s, "max_iterations", a.max_iterations);
    r.get(s, "kappa", a.kappa);
    r.get(s, "cw_c", a.cw_c);
    r.get(s, "cw_lr", a.cw_lr);
    r.get(s, "cw_steps", a.cw_steps);
    r.check(s, "epsilon", [&] { a.validate(); });
  }

  auto attack_list = [](const std::string& v) {
    std::vector<AttackKind> out;
    for (const auto& s : split_list(v)) out.push_back(parse_attack(s));
    return out;
  };
  auto string_list = [](const std::string& v) { return split_list(v); };
  r.get("eval", "attacks", c.eval.attacks, attack_list);
  r.get("eval", "models", c.eval.models, string_list);
  r.get("eval", "threshold", c.eval.threshold);
  r.get("eval", "probe_attack", c.eval.probe_attack, parse_attack);
  r.get("eval", "probe_steps", c.eval.probe_steps);
  r.get("eval", "legit_epsilons", c.eval.legit_epsilons, [](const std::string& v) {
    std::vector<double> out;
    for (const auto& s : split_list(v)) out.push_back(parse_double(s));
    return out;
  });

  auto& p = c.plot;
  r.get("plot", "kinds", p.kinds, [](const std::string& v) {
    auto kinds = split_list(v);
    for (const auto& k : kinds) {
      if (k != "regions" && k != "church-window" && k != "pca" && k != "histogram") {
        throw ConfigError("unknown plot kind '" + k + "' (valid: regions, church-window, pca, histogram)");
      }
    }
    return kinds;
  });
  r.get("plot", "resolution", p.resolution);
  r.get("plot", "models", p.models, string_list);
  r.get("plot", "church_model", p.church_model);
  r.get("plot", "church_attack", p.church_attack, parse_attack);
  r.get("plot", "n_orthogonal", p.n_orthogonal);
  r.get("plot", "church_resolution", p.church_resolution);
  r.get("plot", "extent", p.extent);
  r.get("plot", "pca_model", p.pca_model);
  r.get("plot", "pca_samples", p.pca_samples);

  r.get("select", "candidates", c.select.candidates, [](const std::string& v) {
    std::vector<OutDistKind> out;
    for (const auto& s : split_list(v)) out.push_back(parse_outdist_kind(s));
    return out;
  });
  r.get("select", "count", c.select.count);
  r.get("select", "threshold", c.select.threshold);

  r.reject_unknown();

  const auto model_names = std::set<std::string>{"naive", "surrogate", "augmented", "adversarial"};
  auto check_model = [&](const std::string& section, const std::string& key, const std::string& name) {
    r.check(section, key, [&] {
      if (!model_names.contains(name)) {
        throw ConfigError("unknown model '" + name + "' (valid: naive, surrogate, augmented, adversarial)");
      }
    });
  };
  check_model("attack", "model", c.attack.model);
  for (const auto& m : c.eval.models) check_model("eval", "models", m);
  for (const auto& m : c.plot.models) check_model("plot", "models", m);
  check_model("plot", "church_model", p.church_model);
  check_model("plot", "pca_model", p.pca_model);
  r.check("attack", "set", [&] {
    if (c.attack.set != "test" && c.attack.set != "train") throw ConfigError("set must be test or train");
  });
  r.check("train", "epochs", [&] {
    if (c.train.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.train.batch_size < 1) throw ConfigError("batch must be >= 1");
    if (!(c.train.learning_rate > 0)) throw ConfigError("lr must be positive");
  });
  r.check("data", "n_per_class", [&] {
    if (source == DataSource::TwoMoons && (d.n_per_class < 2 || d.test_per_class < 1)) {
      throw ConfigError("two-moons needs n_per_class >= 2 and test_per_class >= 1");
    }
    if (!(d.noise >= 0)) throw ConfigError("noise must be >= 0");
  });
  r.check("mix", "alpha", [&] {
    if (!(c.mix.alpha > 0 && c.mix.alpha < 1)) throw ConfigError("alpha must lie in (0, 1)");
  });
  r.check("model", "dropout", [&] {
    if (!(c.model.dropout >= 0 && c.model.dropout < 1)) throw ConfigError("dropout must lie in [0, 1)");
  });
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path);
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream os;
  auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
  auto num = [](auto v) { return std::to_string(v); };
  auto str = [](const std::string& s) { return s; };

  os << "[experiment]\n";
  kv("name", c.experiment.name);
  kv("seed", num(c.experiment.seed));
  kv("out", c.experiment.out);

  os << "\n[data]\n";
  kv("source", source_name(c.data.source));
  kv("n_per_class", num(c.data.n_per_class));
  kv("noise", fmt(c.data.noise));
  kv("test_per_class", num(c.data.test_per_class));
  kv("train_images", c.data.train_images);
  kv("train_labels", c.data.train_labels);
  kv("test_images", c.data.test_images);
  kv("test_labels", c.data.test_labels);
  kv("exclude", join(c.data.exclude, [](std::size_t v) { return std::to_string(v); }));
  kv("subset", num(c.data.subset));
  kv("test_subset", num(c.data.test_subset));

  os << "\n[outdist]\n";
  kv("kind", to_string(c.outdist.kind));
  kv("count", num(c.outdist.count));
  kv("heldout_kind", to_string(c.outdist.heldout_kind));
  kv("heldout_count", num(c.outdist.heldout_count));
  kv("radius", fmt(c.outdist.radius));
  kv("sigma", fmt(c.outdist.sigma));
  kv("blobs", num(c.outdist.blobs));

  os << "\n[model]\n";
  kv("architecture", to_string(c.model.architecture));
  kv("width", num(c.model.width));
  kv("dropout", fmt(c.model.dropout));
  kv("pool", c.model.pool ? "true" : "false");

  os << "\n[train]\n";
  kv("optimizer", optimizer_name(c.train.optimizer));
  kv("lr", fmt(c.train.learning_rate));
  kv("batch", num(c.train.batch_size));
  kv("epochs", num(c.train.epochs));
  kv("momentum", fmt(c.train.momentum));

  os << "\n[mix]\n";
  kv("in", num(c.mix.in));
  kv("out", num(c.mix.out));
  kv("interp", num(c.mix.interp));
  kv("alpha", fmt(c.mix.alpha));
  kv("adversarial_model", c.mix.adversarial_model ? "true" : "false");
  kv("adv", num(c.mix.adv));

  os << "\n[attack]\n";
  kv("name", to_string(c.attack.kind));
  kv("model", c.attack.model);
  kv("set", c.attack.set);
  for (const auto& [kind, a] : c.attacks) {
    os << "\n[attack." << to_string(kind) << "]\n";
    kv("epsilon", fmt(a.epsilon));
    kv("clip_radius", fmt(a.clip_radius));
    kv("iterations", num(a.iterations));
    kv("repeat", num(a.repeat));
    kv("early_exit", a.early_exit ? "true" : "false");
    kv("overshoot", fmt(a.overshoot));
    kv("max_iterations", num(a.max_iterations));
    kv("kappa", fmt(a.kappa));
    kv("cw_c", fmt(a.cw_c));
    kv("cw_lr", fmt(a.cw_lr));
    kv("cw_steps", num(a.cw_steps));
  }

  os << "\n[eval]\n";
  kv("attacks", join(c.eval.attacks, [](AttackKind k) { return to_string(k); }));
  kv("models", join(c.eval.models, str));
  kv("threshold", fmt(c.eval.threshold));
  kv("probe_attack", to_string(c.eval.probe_attack));
  kv("probe_steps", num(c.eval.probe_steps));
  kv("legit_epsilons", join(c.eval.legit_epsilons, fmt));

  os << "\n[plot]\n";
  kv("kinds", join(c.plot.kinds, str));
  kv("resolution", num(c.plot.resolution));
  kv("models", join(c.plot.models, str));
  kv("church_model", c.plot.church_model);
  kv("church_attack", to_string(c.plot.church_attack));
  kv("n_orthogonal", num(c.plot.n_orthogonal));
  kv("church_resolution", num(c.plot.church_resolution));
  kv("extent", fmt(c.plot.extent));
  kv("pca_model", c.plot.pca_model);
  kv("pca_samples", num(c.plot.pca_samples));

  os << "\n[select]\n";
  kv("candidates", join(c.select.candidates, [](OutDistKind k) { return to_string(k); }));
  kv("count", num(c.select.count));
  kv("threshold", fmt(c.select.threshold));
  return os.str();
}

std::string config_hash(const RunConfig& cfg) {
  // The output directory does not affect results.
  RunConfig c = cfg;
  c.experiment.out.clear();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_ini(c)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dustbin
