#include <doctest.h>

#include <string>

#include "dustbin/io.hpp"
#include "dustbin/pipeline.hpp"

using namespace dustbin;

namespace {

std::string config_error(std::string_view text) {
  try {
    parse_run_config(text, "test.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty config gives the two-moons defaults") {
  const auto cfg = parse_run_config("");
  CHECK(cfg.data.source == DataSource::TwoMoons);
  CHECK(cfg.attack_config(AttackKind::Fgs).epsilon == 0.3);
  CHECK(cfg.attack_config(AttackKind::Ifgs).epsilon == 0.03);
  CHECK(cfg.domain().lo == -3.0);
  CHECK(to_ini(cfg) == to_ini(RunConfig::defaults(DataSource::TwoMoons)));
}

TEST_CASE("idx source switches to image defaults") {
  const auto cfg = parse_run_config("[data]\nsource = idx\n");
  CHECK(cfg.model.architecture == Architecture::LenetSmall);
  CHECK(cfg.attack_config(AttackKind::Fgs).epsilon == 0.2);
  CHECK(cfg.domain().lo == 0.0);
  CHECK(cfg.domain().hi == 1.0);
}

TEST_CASE("values override defaults") {
  const auto cfg = parse_run_config(
      "[experiment]\nseed = 9\n[train]\nepochs = 3\n[attack.ifgs]\nclip_radius = 0.5\n[eval]\nattacks = fgs,deepfool\n");
  CHECK(cfg.experiment.seed == 9);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.attack_config(AttackKind::Ifgs).clip_radius == 0.5);
  CHECK(cfg.eval.attacks == std::vector<AttackKind>{AttackKind::Fgs, AttackKind::DeepFool});
}

TEST_CASE("to_ini round-trips") {
  auto cfg = RunConfig::defaults(DataSource::TwoMoons);
  cfg.mix.alpha = 0.3;
  cfg.experiment.name = "x";
  cfg.eval.legit_epsilons = {0.1, 0.7};
  const auto text = to_ini(cfg);
  CHECK(to_ini(parse_run_config(text)) == text);
  CHECK(config_hash(parse_run_config(text)) == config_hash(cfg));
  CHECK(config_hash(cfg).size() == 16);
  cfg.experiment.out = "elsewhere";
  CHECK(config_hash(cfg) == config_hash(parse_run_config(text)));
  cfg.experiment.seed = 2;
  CHECK(config_hash(cfg) != config_hash(parse_run_config(text)));
}

TEST_CASE("errors name the origin, line, section and key") {
  const auto msg = config_error("[train]\nepochs = 3\nlr = fast\n");
  CHECK(msg.find("test.ini:3") != std::string::npos);
  CHECK(msg.find("[train] lr") != std::string::npos);
  CHECK(config_error("[train]\nspeed = 1\n").find("speed") != std::string::npos);
  CHECK(config_error("[training]\nepochs = 1\n").find("training") != std::string::npos);
  CHECK(config_error("[attack]\nname = pgd\n").find("pgd") != std::string::npos);
  CHECK_FALSE(config_error("[mix]\nalpha = 1.0\n").empty());
  CHECK_FALSE(config_error("[attack]\nmodel = teacher\n").empty());
  CHECK_FALSE(config_error("[attack.pgd]\nepsilon = 0.1\n").empty());
  CHECK_FALSE(config_error("[data]\nsource = csv\n").empty());
  CHECK_FALSE(config_error("[train\n").empty());
}

TEST_CASE("missing config file names the path") {
  try {
    load_run_config("/nonexistent/run.ini");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/run.ini") != std::string::npos);
  }
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"twomoons.ini", "mnist.ini"}) {
    CHECK_NOTHROW(load_run_config(std::string(DUSTBIN_CONFIG_DIR) + "/" + name));
  }
}

TEST_CASE("data paths resolve against DUSTBIN_LAB_DATA") {
  CHECK(resolve_data_path("/abs/file") == "/abs/file");
  ::setenv("DUSTBIN_LAB_DATA", "/data/mnist", 1);
  CHECK(resolve_data_path("train-images") == "/data/mnist/train-images");
  ::unsetenv("DUSTBIN_LAB_DATA");
  CHECK(resolve_data_path("train-images") == "train-images");
}
