#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stdpavg/cli.hpp"

int main(int argc, char** argv) {
  using namespace stdpavg;
  CLI::App app{"Event-driven simulator and averaging harness for plasticity models"};
  app.require_subcommand(0, 1);

  std::string config_path, preset_name;
  std::string out_dir = std::getenv("STDPAVG_OUT") ? std::getenv("STDPAVG_OUT") : "stdpavg-out";
  unsigned threads = default_threads();
  Overrides ov;
  std::uint64_t seed = 0;
  std::size_t replicas = 0, stride = 0;
  double horizon = 0.0, epsilon = 0.0;
  std::string kind;
  bool list_presets = false;
  std::string show_preset;

  app.add_flag("--list-presets", list_presets, "Print the bundled preset names and exit");
  app.add_option("--show-preset", show_preset, "Print a bundled preset as a JSON config and exit");
  for (const auto& name : subcommands()) {
    CLI::App* sub = app.add_subcommand(name);
    auto* src = sub->add_option_group("source");
    src->add_option("-c,--config", config_path, "JSON config file");
    src->add_option("-p,--preset", preset_name, "Bundled preset");
    src->require_option(1);
    sub->add_option("--seed", seed, "Base seed");
    sub->add_option("--replicas", replicas, "Replica count");
    sub->add_option("--horizon", horizon, "Time horizon");
    sub->add_option("--epsilon", epsilon, "Timescale separation");
    sub->add_option("--stride", stride, "Write every n-th event to trajectory CSVs");
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("-o,--out", out_dir, "Output directory (default $STDPAVG_OUT or ./stdpavg-out)");
    if (name == "simulate")
      sub->add_option("--kind", kind, "full | scaled | dominating | truncated | discrete");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (list_presets) {
    for (const auto& p : preset_names()) std::cout << p << "\n";
    return 0;
  }
  if (!show_preset.empty()) {
    try {
      std::cout << preset(show_preset).dump(2) << "\n";
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kUsage;
    }
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string cmd = sub->get_name();
  if (sub->count("--seed")) ov.seed = seed;
  if (sub->count("--replicas")) ov.replicas = replicas;
  if (sub->count("--horizon")) ov.horizon = horizon;
  if (sub->count("--epsilon")) ov.epsilon = epsilon;
  if (sub->count("--stride")) ov.stride = stride;
  if (!kind.empty()) ov.kind = kind;

  json tree;
  try {
    tree = config_path.empty() ? preset(preset_name) : load_json_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  tree = apply_overrides(std::move(tree), cmd, ov);

  const RunResult res = run_command(cmd, tree, out_dir, threads);
  for (const auto& f : res.files) std::cout << out_dir << "/" << f << "\n";
  std::cout << out_dir << "/manifest.json\n";
  if (res.exit_code != kOk) {
    std::cerr << "error (exit " << res.exit_code << "): " << res.message << "\n";
  } else if (!res.message.empty()) {
    std::cout << res.message << "\n";
  }
  return res.exit_code;
}
