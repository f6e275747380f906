#include "dustbin/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <sstream>

#include "dustbin/datasets.hpp"
#include "dustbin/parallel.hpp"

namespace dustbin {

namespace {

enum class Role { InDist, OutDist };

Role role_of(std::span<const std::size_t> labels, std::size_t k_classes) {
  const bool any_in = std::any_of(labels.begin(), labels.end(), [&](auto l) { return l < k_classes; });
  const bool any_out = std::any_of(labels.begin(), labels.end(), [&](auto l) { return l >= k_classes; });
  if (any_in && any_out) throw ContractError("evaluation set mixes in-distribution and dustbin labels");
  for (auto l : labels) {
    if (l > k_classes) throw LabelError("evaluation label " + std::to_string(l) + " exceeds the dustbin index");
  }
  return any_out ? Role::OutDist : Role::InDist;
}

}  // namespace

EvalCell tally(std::span<const std::size_t> predictions, std::span<const std::size_t> labels, std::size_t k_classes) {
  if (predictions.size() != labels.size()) throw DataError("tally: predictions and labels differ in length");
  EvalCell cell;
  cell.samples = labels.size();
  if (labels.empty()) return cell;
  const Role role = role_of(labels, k_classes);
  std::size_t acc = 0, rej = 0, err = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == k_classes) {
      ++rej;
    } else if (role == Role::InDist && predictions[i] == labels[i]) {
      ++acc;
    } else {
      ++err;
    }
  }
  const double n = static_cast<double>(labels.size());
  cell.acc = static_cast<double>(acc) / n;
  cell.rej = static_cast<double>(rej) / n;
  cell.err = static_cast<double>(err) / n;
  return cell;
}

EvalCell evaluate(const Model& model, const LabeledSet& set, double confidence_threshold_for_naive,
                  std::size_t threads) {
  if (set.samples.size() != set.labels.size()) throw DataError("evaluate: set sizes disagree");
  if (set.k_classes != model.k_classes()) {
    throw ContractError("evaluate: set has K=" + std::to_string(set.k_classes) + " but model has K=" +
                        std::to_string(model.k_classes()));
  }
  const Role role = role_of(set.labels, set.k_classes);
  std::vector<Array> p(set.size());
  parallel_for(set.size(), threads, [&](std::size_t i) { p[i] = probs(model, set.samples[i]); });

  if (!model.augmented() && role == Role::OutDist) {
    EvalCell cell;
    cell.samples = set.size();
    if (set.empty()) return cell;
    std::size_t confident = 0;
    for (const auto& v : p) {
      if (v[argmax(v)] >= confidence_threshold_for_naive) ++confident;
    }
    const double n = static_cast<double>(set.size());
    cell.err = static_cast<double>(confident) / n;
    cell.below_threshold = static_cast<double>(set.size() - confident) / n;
    return cell;
  }
  std::vector<std::size_t> pred(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) pred[i] = argmax(p[i]);
  return tally(pred, set.labels, set.k_classes);
}

EvalCell blackbox_transfer(const Model& source, const Model& target, AttackKind kind, const AttackConfig& cfg,
                           const LabeledSet& clean_set, bool only_successful, std::size_t threads) {
  if (source.config().input_shape != target.config().input_shape || source.k_classes() != target.k_classes()) {
    throw ContractError("blackbox_transfer: source and target differ in input shape or K");
  }
  const LabeledSet clean = clean_set.subset(correctly_classified(source, clean_set));
  auto records = attack_batch(source, clean, kind, cfg, threads);
  if (only_successful) {
    std::erase_if(records, [](const AttackRecord& r) { return !r.result.success; });
  }
  return evaluate(target, adversary_set(records, clean.k_classes, clean.domain), 0.5, threads);
}

namespace {

struct Visit {
  enum Kind { Stay, Fooling, Dustbin } kind = Stay;
};

Visit::Kind classify_visit(const Model& model, std::size_t label, std::size_t true_label) {
  if (label == true_label) return Visit::Stay;
  if (model.augmented() && label == model.dustbin()) return Visit::Dustbin;
  return Visit::Fooling;
}

ProbeRow summarise(std::string direction, double epsilon, const std::vector<Visit::Kind>& visits) {
  ProbeRow row;
  row.direction = std::move(direction);
  row.epsilon = epsilon;
  row.samples = visits.size();
  if (visits.empty()) return row;
  std::size_t fool = 0, dust = 0, stay = 0;
  for (auto v : visits) {
    if (v == Visit::Fooling) ++fool;
    else if (v == Visit::Dustbin) ++dust;
    else ++stay;
  }
  const double n = static_cast<double>(visits.size());
  row.fooling_visit_pct = 100.0 * static_cast<double>(fool) / n;
  row.dustbin_visit_pct = 100.0 * static_cast<double>(dust) / n;
  row.true_class_stay_pct = 100.0 * static_cast<double>(stay) / n;
  return row;
}

}  // namespace

ProbeReport whitebox_probe(const Model& model, AttackKind kind, const AttackConfig& cfg, const LabeledSet& clean_set,
                           std::size_t steps, std::size_t threads) {
  if (steps < 1) throw ConfigError("whitebox_probe needs at least one step");
  cfg.validate();
  const auto correct = correctly_classified(model, clean_set);
  std::vector<Visit::Kind> visits(correct.size(), Visit::Stay);
  parallel_for(correct.size(), threads, [&](std::size_t n) {
    const std::size_t i = correct[n];
    const Array& x = clean_set.samples[i];
    const std::size_t y = clean_set.labels[i];
    const auto targets = attack_targets(model, x, y, kind);
    const auto adv = run_attack(kind, model, x, y,
                                targets.empty() ? std::nullopt : std::optional<std::size_t>(targets.front()), cfg);
    const Eigen::VectorXd direction = adv.x_adv.values() - x.values();
    for (std::size_t s = 1; s <= steps; ++s) {
      const double t = static_cast<double>(s) / static_cast<double>(steps);
      const Array point(x.shape(), x.values() + t * direction);
      const auto v = classify_visit(model, predict(model, point), y);
      if (v != Visit::Stay) {
        visits[n] = v;
        break;
      }
    }
  });
  ProbeReport report;
  report.rows.push_back(summarise(to_string(kind), cfg.epsilon, visits));
  return report;
}

ProbeReport legit_probe(const Model& model, const LabeledSet& in_dist_set, std::span<const double> epsilons) {
  for (double e : epsilons) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("legit_probe epsilons must lie in [0, 1]");
  }
  const auto correct = correctly_classified(model, in_dist_set);
  std::vector<std::size_t> neighbour(correct.size());
  for (std::size_t a = 0; a < correct.size(); ++a) {
    const auto& xa = in_dist_set.samples[correct[a]];
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_b = correct.size();
    for (std::size_t b = 0; b < correct.size(); ++b) {
      if (b == a || in_dist_set.labels[correct[b]] != in_dist_set.labels[correct[a]]) continue;
      const double d = (in_dist_set.samples[correct[b]].values() - xa.values()).squaredNorm();
      if (d < best) {
        best = d;
        best_b = b;
      }
    }
    if (best_b == correct.size()) {
      throw DataError("legit_probe: sample " + std::to_string(correct[a]) + " has no same-class neighbour");
    }
    neighbour[a] = correct[best_b];
  }
  ProbeReport report;
  for (double e : epsilons) {
    std::vector<Visit::Kind> visits;
    visits.reserve(correct.size());
    for (std::size_t a = 0; a < correct.size(); ++a) {
      const std::size_t i = correct[a];
      const Array p = legitimate_walk(in_dist_set.samples[i], in_dist_set.samples[neighbour[a]], e);
      visits.push_back(classify_visit(model, predict(model, p), in_dist_set.labels[i]));
    }
    report.rows.push_back(summarise("legitimate", e, visits));
  }
  return report;
}

DetectionRates detection_rates(const EvalCell& in_dist, const EvalCell& out_dist) {
  return {in_dist.acc + in_dist.err, 1.0 - out_dist.rej, in_dist.rej};
}

void EvalReport::add(std::string model, std::string dataset, EvalCell cell) {
  rows.push_back({std::move(model), std::move(dataset), cell});
}

const EvalCell& EvalReport::at(std::string_view model, std::string_view dataset) const {
  for (const auto& r : rows) {
    if (r.model == model && r.dataset == dataset) return r.cell;
  }
  throw IndexError("no report row for (" + std::string(model) + ", " + std::string(dataset) + ")");
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& [k, v] : report.metadata) os << "# " << k << ',' << v << '\n';
  os << "model,dataset,acc,rej,err\n";
  for (const auto& r : report.rows) {
    os << r.model << ',' << r.dataset << ',' << r.cell.acc << ',' << r.cell.rej << ',' << r.cell.err << '\n';
  }
  for (const auto& r : report.rows) {
    os << "# samples," << r.model << ',' << r.dataset << ',' << r.cell.samples << '\n';
    if (r.cell.below_threshold != 0.0) {
      os << "# below_threshold," << r.model << ',' << r.dataset << ',' << r.cell.below_threshold << '\n';
    }
  }
  return os.str();
}

namespace {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("report line " + std::to_string(line_no) + ": not a number: '" + s + "'");
  }
}

}  // namespace

EvalReport parse_report_csv(std::string_view text) {
  EvalReport report;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<std::pair<std::vector<std::string>, std::size_t>> annotations;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const std::string body = line.substr(2);
      if (body.rfind("below_threshold,", 0) == 0 || body.rfind("samples,", 0) == 0) {
        annotations.emplace_back(split(body, ','), line_no);
      } else {
        const auto comma = body.find(',');
        if (comma == std::string::npos) throw ParseError("report line " + std::to_string(line_no) + ": bad metadata");
        report.metadata[body.substr(0, comma)] = body.substr(comma + 1);
      }
      continue;
    }
    if (!header_seen) {
      if (line != "model,dataset,acc,rej,err") {
        throw ParseError("report line " + std::to_string(line_no) + ": expected header model,dataset,acc,rej,err");
      }
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 5) throw ParseError("report line " + std::to_string(line_no) + ": expected 5 fields");
    EvalCell cell;
    cell.acc = to_double(f[2], line_no);
    cell.rej = to_double(f[3], line_no);
    cell.err = to_double(f[4], line_no);
    report.add(f[0], f[1], cell);
  }
  for (const auto& [f, no] : annotations) {
    if (f.size() != 4) throw ParseError("report line " + std::to_string(no) + ": bad annotation");
    auto& cell = const_cast<EvalCell&>(report.at(f[1], f[2]));
    if (f[0] == "samples") {
      cell.samples = static_cast<std::size_t>(to_double(f[3], no));
    } else {
      cell.below_threshold = to_double(f[3], no);
    }
  }
  return report;
}

std::string report_table(const EvalReport& report) {
  std::vector<std::string> models, datasets;
  for (const auto& r : report.rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
  }
  std::size_t name_w = 8;
  for (const auto& d : datasets) name_w = std::max(name_w, d.size());
  std::size_t col_w = 8;
  for (const auto& m : models) col_w = std::max(col_w, m.size());

  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "" << "  " << std::setw(5) << "";
  for (const auto& m : models) os << "  " << std::right << std::setw(static_cast<int>(col_w)) << m;
  os << '\n';
  for (const auto& d : datasets) {
    const char* labels[] = {"Acc.", "Rej.", "Err."};
    for (int k = 0; k < 3; ++k) {
      os << std::left << std::setw(static_cast<int>(name_w)) << (k == 0 ? d : "") << "  " << std::setw(5)
         << labels[k];
      for (const auto& m : models) {
        std::string cell = "--";
        for (const auto& r : report.rows) {
          if (r.model == m && r.dataset == d) {
            const double v = k == 0 ? r.cell.acc : (k == 1 ? r.cell.rej : r.cell.err);
            std::ostringstream c;
            c << std::fixed << std::setprecision(2) << 100.0 * v;
            cell = c.str();
          }
        }
        os << "  " << std::right << std::setw(static_cast<int>(col_w)) << cell;
      }
      os << '\n';
    }
  }
  return os.str();
}

std::string probe_csv(const ProbeReport& report) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "direction,epsilon,fooling_visit_pct,dustbin_visit_pct,true_class_stay_pct,samples\n";
  for (const auto& r : report.rows) {
    os << r.direction << ',' << r.epsilon << ',' << r.fooling_visit_pct << ',' << r.dustbin_visit_pct << ','
       << r.true_class_stay_pct << ',' << r.samples << '\n';
  }
  return os.str();
}

}  // namespace dustbin
