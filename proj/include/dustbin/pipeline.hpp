#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dustbin/attacks.hpp"
#include "dustbin/datasets.hpp"
#include "dustbin/model.hpp"

namespace dustbin {

enum class DataSource { TwoMoons, Idx };

/// Everything a run depends on. Serialises to a canonical INI file that
/// lists every field, so a saved config reproduces the run.
struct RunConfig {
  struct Experiment {
    std::string name = "twomoons";
    std::uint64_t seed = 1;
    std::string out = "runs/twomoons";
  } experiment;

  struct Data {
    DataSource source = DataSource::TwoMoons;
    std::size_t n_per_class = 500;
    double noise = 0.05;
    std::size_t test_per_class = 250;
    std::string train_images = "train-images-idx3-ubyte";
    std::string train_labels = "train-labels-idx1-ubyte";
    std::string test_images = "t10k-images-idx3-ubyte";
    std::string test_labels = "t10k-labels-idx1-ubyte";
    std::vector<std::size_t> exclude;
    /// Random subset sizes; 0 keeps everything.
    std::size_t subset = 0;
    std::size_t test_subset = 0;
  } data;

  struct OutDist {
    OutDistKind kind = OutDistKind::UniformBox;
    std::size_t count = 1000;
    OutDistKind heldout_kind = OutDistKind::Ring;
    std::size_t heldout_count = 500;
    double radius = 2.5;
    double sigma = 0.1;
    std::size_t blobs = 4;
  } outdist;

  struct ModelSection {
    Architecture architecture = Architecture::Mlp3;
    std::size_t width = 32;
    double dropout = 0.0;
    bool pool = true;
  } model;

  TrainConfig train{0.05, 32, 200, 0, Optimizer::SgdMomentum, 0.9};

  struct Mix {
    /// In-distribution samples in the augmented mixes; 0 means all.
    std::size_t in = 0;
    std::size_t out = 1000;
    std::size_t interp = 300;
    double alpha = 0.5;
    bool adversarial_model = true;
    std::size_t adv = 1000;
  } mix;

  struct AttackRun {
    AttackKind kind = AttackKind::Fgs;
    std::string model = "naive";
    std::string set = "test";
  } attack;

  /// Per-attack hyper-parameters, keyed by attack kind.
  std::map<AttackKind, AttackConfig> attacks;

  struct Eval {
    std::vector<AttackKind> attacks{AttackKind::Fgs, AttackKind::Ifgs};
    std::vector<std::string> models{"naive", "augmented", "adversarial"};
    double threshold = 0.5;
    AttackKind probe_attack = AttackKind::Fgs;
    std::size_t probe_steps = 20;
    std::vector<double> legit_epsilons{0.1, 0.2, 0.3, 0.4, 0.5};
  } eval;

  struct Plot {
    std::vector<std::string> kinds{"regions", "church-window", "pca", "histogram"};
    std::size_t resolution = 200;
    std::vector<std::string> models{"naive", "augmented"};
    std::string church_model = "augmented";
    AttackKind church_attack = AttackKind::Fgs;
    std::size_t n_orthogonal = 4;
    std::size_t church_resolution = 101;
    /// 0 picks twice the adversary's l2 norm.
    double extent = 0.0;
    std::string pca_model = "augmented";
    std::size_t pca_samples = 200;
  } plot;

  struct Select {
    std::vector<OutDistKind> candidates{OutDistKind::UniformBox, OutDistKind::Ring, OutDistKind::ShiftedBlobs};
    std::size_t count = 500;
    double threshold = 0.0;
  } select;

  /// Defaults for the data source (attack presets, architecture, domain).
  static RunConfig defaults(DataSource source);
  const AttackConfig& attack_config(AttackKind kind) const;
  Box domain() const;
};

/// Parses INI text; `origin` names the source in error messages.
RunConfig parse_run_config(std::string_view text, std::string_view origin = "config");
/// ConfigError naming the path if it cannot be read.
RunConfig load_run_config(const std::string& path);
std::string to_ini(const RunConfig& cfg);
/// FNV-1a 64 of the canonical INI text without the output directory, as 16
/// hex digits.
std::string config_hash(const RunConfig& cfg);

/// Per-stage seeds derived from the master seed by fixed offsets.
namespace seed_offset {
inline constexpr std::uint64_t kTrainData = 0;
inline constexpr std::uint64_t kTestData = 1000;
inline constexpr std::uint64_t kNaive = 101;
inline constexpr std::uint64_t kSurrogate = 202;
inline constexpr std::uint64_t kOutDist = 303;
inline constexpr std::uint64_t kInterp = 404;
inline constexpr std::uint64_t kAugmented = 505;
inline constexpr std::uint64_t kMix = 606;
inline constexpr std::uint64_t kAdvDustbin = 707;
inline constexpr std::uint64_t kAdversarial = 808;
inline constexpr std::uint64_t kAdvMix = 909;
inline constexpr std::uint64_t kHeldOut = 1111;
inline constexpr std::uint64_t kEvalOutDist = 1212;
inline constexpr std::uint64_t kSelect = 1313;
inline constexpr std::uint64_t kPlot = 1414;
}  // namespace seed_offset

struct Datasets {
  LabeledSet train;
  LabeledSet test;
};

/// IDX paths are resolved against $DUSTBIN_LAB_DATA when set.
Datasets load_data(const RunConfig& cfg);
std::string resolve_data_path(const std::string& path);

ModelConfig model_config(const RunConfig& cfg, const LabeledSet& data, bool augmented);
OutDistSpec outdist_spec(const RunConfig& cfg, const LabeledSet& data, OutDistKind kind);

struct RunOptions {
  std::size_t threads = 1;
  std::ostream* log = nullptr;
};

struct TrainedModel {
  std::string name;
  Model model;
  std::vector<double> loss_history;
  std::size_t train_samples = 0;
};

/// naive, surrogate (same architecture, different initial weights),
/// augmented (out-dist + interpolated dustbin) and, if configured,
/// adversarial (I-FGS adversaries of the naive model as the dustbin).
std::vector<TrainedModel> train_models(const RunConfig& cfg, const Datasets& data, const RunOptions& opts = {});

/// Out-distribution evaluation sets, disjoint in seed from the training draw.
LabeledSet eval_outdist(const RunConfig& cfg, const LabeledSet& like);
LabeledSet heldout_outdist(const RunConfig& cfg, const LabeledSet& like);

std::string checkpoint_path(const RunConfig& cfg, const std::string& model_name);

/// Writes naive/surrogate/augmented[/adversarial] checkpoints, per-model loss
/// logs, metadata.json and the canonical config into cfg.experiment.out.
void cmd_train(const RunConfig& cfg, const RunOptions& opts = {});
/// attacks.csv and adversaries.csv for [attack] against a trained model.
void cmd_attack(const RunConfig& cfg, const RunOptions& opts = {});
/// eval.csv, eval.txt, detection.csv, probes.csv.
void cmd_eval(const RunConfig& cfg, const RunOptions& opts = {});
/// selection.csv plus a histogram CSV and PPM per candidate.
void cmd_select_outdist(const RunConfig& cfg, const RunOptions& opts = {});
/// The [plot] kinds as PPM/CSV files.
void cmd_plot(const RunConfig& cfg, const RunOptions& opts = {});

}  // namespace dustbin
