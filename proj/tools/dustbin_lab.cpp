#include <CLI11.hpp>
#include <iostream>

#include "dustbin/pipeline.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dustbin-lab: train, attack and evaluate classifiers with a dustbin class"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::size_t threads = 1;

  using Command = void (*)(const dustbin::RunConfig&, const dustbin::RunOptions&);
  const std::pair<const char*, Command> commands[] = {
      {"train", dustbin::cmd_train},
      {"attack", dustbin::cmd_attack},
      {"eval", dustbin::cmd_eval},
      {"select-outdist", dustbin::cmd_select_outdist},
      {"plot", dustbin::cmd_plot},
  };
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "Run config (INI)")->required();
    sub->add_option("--seed", seed, "Override [experiment] seed");
    sub->add_option("--out", out_dir, "Override [experiment] out");
    sub->add_option("--threads", threads, "Worker threads (1 keeps runs bit-reproducible)")
        ->check(CLI::PositiveNumber);
    subs.emplace_back(sub, fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    auto cfg = dustbin::load_run_config(config_path);
    if (seed) cfg.experiment.seed = *seed;
    if (out_dir) cfg.experiment.out = *out_dir;
    dustbin::RunOptions opts;
    opts.threads = threads;
    opts.log = &std::cout;
    for (const auto& [sub, fn] : subs) {
      if (sub->parsed()) fn(cfg, opts);
    }
  } catch (const dustbin::ConfigError& e) {
    std::cerr << "dustbin-lab: config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "dustbin-lab: error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
