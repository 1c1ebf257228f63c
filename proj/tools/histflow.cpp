#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "histflow/histflow.hpp"

namespace {

int report(const histflow::Error& e) {
  std::cerr << histflow::error_record(e).dump() << '\n';
  return histflow::exit_code(e.kind());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"historical particle system experiments"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t replicates = 0;
  std::string out_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides $HISTFLOW_OUT_DIR and the config)");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--replicates", replicates, "replicate count");
  };
  for (auto name : histflow::kExperimentNames) {
    auto* sub = app.add_subcommand(std::string(name), "run the " + std::string(name) + " experiment");
    add_common(sub);
  }
  auto* verify = app.add_subcommand("verify", "check that a run directory matches a config");
  add_common(verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Bad arguments are a configuration error.
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  auto* sub = app.get_subcommands().front();
  try {
    histflow::ConfigOverrides over;
    if (sub->count("--seed")) over.seed = seed;
    if (sub->count("--replicates")) over.replicates = replicates;

    if (sub == verify) {
      const auto cfg = histflow::load_experiment(config_path, std::nullopt, over);
      const auto dir = histflow::resolve_output_dir(cfg, out_dir);
      const auto files = histflow::verify_outputs(cfg, dir);
      std::cout << "verified " << files.size() << " outputs in " << dir.string() << " (config hash "
                << histflow::config_hash(cfg) << ")\n";
      return 0;
    }

    const auto kind = histflow::parse_experiment_kind(sub->get_name());
    const auto cfg = histflow::load_experiment(config_path, kind, over);
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
    const auto dir = histflow::resolve_output_dir(cfg, out_dir);
    const auto res = histflow::run_experiment(cfg, dir);
    for (std::size_t i = cfg.warnings.size(); i < res.warnings.size(); ++i)
      std::cerr << "warning: " << res.warnings[i] << '\n';
    std::cout << sub->get_name() << ": wrote " << res.files.size() << " files to " << res.dir.string()
              << " (config hash " << res.config_hash << ", " << res.wall_seconds << " s)\n";
    return 0;
  } catch (const histflow::Error& e) {
    return report(e);
  } catch (const nlohmann::json::exception& e) {
    return report(histflow::Error(histflow::ErrorKind::invalid_config, e.what(), "config"));
  } catch (const std::bad_alloc&) {
    return report(histflow::Error(histflow::ErrorKind::capacity, "out of memory"));
  }
}
