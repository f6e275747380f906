#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "dustbin/io.hpp"

namespace fs = std::filesystem;
using dustbin::read_file;
using dustbin::write_file;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run lab(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "dustbin_cli_test.log";
  const std::string cmd = std::string(DUSTBIN_LAB_EXE) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_file(log.string());
  return r;
}

// A fast two-moons run in its own directory.
struct Workspace {
  fs::path dir;
  std::string config;

  explicit Workspace(const std::string& name, const std::string& extra = "") {
    dir = fs::temp_directory_path() / ("dustbin_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    config = (dir / "run.ini").string();
    write_file(config,
               "[data]\nn_per_class = 60\ntest_per_class = 30\n"
               "[outdist]\ncount = 100\nheldout_count = 50\n"
               "[train]\nepochs = 5\n"
               "[mix]\nout = 100\ninterp = 30\nadv = 50\n"
               "[plot]\nresolution = 20\nchurch_resolution = 11\npca_samples = 20\n"
               "[select]\ncount = 50\n" +
                   extra);
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string args(const std::string& cmd, const std::string& out = "out") const {
    return cmd + " --config " + config + " --out " + (dir / out).string();
  }
};

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(lab("").code == 2);
  CHECK(lab("frobnicate --config x.ini").code == 2);
  CHECK(lab("train").code == 2);
  CHECK(lab("train --config x.ini --threads 0").code == 2);
  CHECK(lab("--help").code == 0);
}

TEST_CASE("config errors exit 2 and name the problem") {
  const auto missing = lab("train --config /nonexistent/run.ini");
  CHECK(missing.code == 2);
  CHECK(missing.output.find("/nonexistent/run.ini") != std::string::npos);
  Workspace w("badattack", "[attack]\nname = pgd\n");
  CHECK(lab(w.args("train")).code == 2);
  const auto bad = lab(w.args("attack"));
  CHECK(bad.code == 2);
  CHECK(bad.output.find("pgd") != std::string::npos);
}

TEST_CASE("runtime failures exit 1") {
  Workspace w("nockpt");
  CHECK(lab(w.args("eval")).code == 1);
  CHECK(lab(w.args("attack")).code == 1);
  CHECK(lab(w.args("plot")).code == 1);
  Workspace idx("noidx");
  write_file(idx.config, "[data]\nsource = idx\ntrain_images = /nonexistent/images\n");
  CHECK(lab(idx.args("train")).code == 1);
}

TEST_CASE("every subcommand succeeds and reruns are byte-identical") {
  Workspace w("full");
  for (const char* cmd : {"train", "attack", "eval", "select-outdist", "plot"}) {
    const auto r = lab(w.args(cmd));
    INFO(cmd << ": " << r.output);
    CHECK(r.code == 0);
  }
  const fs::path out = w.dir / "out";
  for (const char* f : {"naive.dblm", "augmented.dblm", "adversarial.dblm", "metadata.json", "config.ini",
                        "attack_fgs.csv", "eval.csv", "eval.txt", "detection.csv", "probes.csv", "selection.csv",
                        "regions_naive.ppm", "regions_augmented.ppm", "histogram.ppm"}) {
    CHECK_MESSAGE(fs::exists(out / f), f);
  }

  CHECK(lab(w.args("train", "again")).code == 0);
  CHECK(lab(w.args("eval", "again")).code == 0);
  for (const char* f : {"naive.dblm", "augmented.dblm", "metadata.json", "eval.csv"}) {
    CHECK_MESSAGE(read_file((out / f).string()) == read_file((w.dir / "again" / f).string()), f);
  }

  // A different seed changes the models.
  CHECK(lab(w.args("train", "seed2") + " --seed 2").code == 0);
  CHECK(read_file((out / "naive.dblm").string()) != read_file((w.dir / "seed2" / "naive.dblm").string()));

  // Thread count does not change results.
  CHECK(lab(w.args("eval", "again") + " --threads 3").code == 0);
  CHECK(read_file((out / "eval.csv").string()) == read_file((w.dir / "again" / "eval.csv").string()));
}
