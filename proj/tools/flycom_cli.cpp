#include "flycom/experiment.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

namespace fs = std::filesystem;

namespace {

int write_or_print(const std::string& path,
                   const std::function<void(std::ostream&)>& emit) {
  if (path.empty() || path == "-") {
    emit(std::cout);
    return 0;
  }
  std::ofstream out(path);
  if (!out) {
    std::cerr << "error: cannot open output path '" << path << "'\n";
    return 2;
  }
  emit(out);
  return 0;
}

int cmd_run(const std::string& config_path, uint64_t seed,
            const std::string& out_path) {
  const auto cfg = flycom::ExperimentConfig::from_json_file(config_path);
  const flycom::RunRecord rec = flycom::run_experiment(cfg, seed);
  const std::string path = out_path.empty() ? cfg.output_path : out_path;
  return write_or_print(
      path, [&](std::ostream& os) { flycom::write_trace_csv(os, cfg, rec); });
}

int cmd_sweep(const std::string& config_dir, const std::string& out_path) {
  std::vector<std::string> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(config_dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path().string());
  if (ec) throw flycom::ConfigError("sweep: cannot read '" + config_dir + "'");
  if (files.empty())
    throw flycom::ConfigError("sweep: no .json configs in '" + config_dir + "'");
  std::sort(files.begin(), files.end());
  std::vector<flycom::ExperimentConfig> cfgs;
  for (const std::string& f : files)
    cfgs.push_back(flycom::ExperimentConfig::from_json_file(f));
  return write_or_print(out_path,
                        [&](std::ostream& os) { flycom::sweep(cfgs, os); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flycom: progressive point-cloud fusion over the air"};
  app.require_subcommand(1);

  std::string config_path, configs_dir, out_path;
  uint64_t seed = 1;

  CLI::App* run = app.add_subcommand("run", "single experiment run");
  run->add_option("--config", config_path, "JSON experiment config")
      ->required();
  run->add_option("--seed", seed, "run seed");
  run->add_option("--out", out_path, "trace CSV path ('-' for stdout)");

  CLI::App* sw = app.add_subcommand("sweep", "run every config in a directory");
  sw->add_option("--configs", configs_dir, "directory of JSON configs")
      ->required();
  sw->add_option("--out", out_path, "merged CSV path ('-' for stdout)");

  CLI::App* st = app.add_subcommand("selftest", "randomized property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, seed, out_path);
    if (sw->parsed()) return cmd_sweep(configs_dir, out_path);
    if (st->parsed())
      return flycom::run_selftest(std::cout) == 0 ? 0 : 3;
  } catch (const flycom::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const flycom::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
