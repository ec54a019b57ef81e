#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cascade_iv/experiments.hpp"

namespace fs = std::filesystem;
using namespace cascade_iv;

namespace {

void write_files(const CommandResult& res, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [name, body] : res.files) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << body;
  }
}

int report(const std::string& command, const CommandResult& res, const fs::path& dir) {
  for (const auto& note : res.notes) std::cerr << "note: " << note << '\n';
  int failed = 0;
  for (const auto& v : res.verdicts) {
    std::cout << (v.passed ? "PASS\t" : "FAIL\t") << v.name << '\t' << v.detail << '\n';
    failed += !v.passed;
  }
  std::cout << command << ": " << res.files.size() << " files in " << dir.string() << ", "
            << res.verdicts.size() - failed << "/" << res.verdicts.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Line-network information velocity experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed, trials;
  std::optional<std::string> out_dir, convention;
  app.add_option("--config", config_path, "Experiment config file (key = value with [sections])");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--trials", trials, "Monte Carlo trials");
  app.add_option("--convention", convention, "Hop convention")->check(CLI::IsMember({"inst", "delayed"}));

  const std::map<std::string, std::function<CommandResult(const ExperimentConfig&)>> commands{
      {"exponents", cmd_exponents},
      {"iv", cmd_iv},
      {"mse", cmd_mse},
      {"simulate", [](const ExperimentConfig& c) { return cmd_simulate(c); }},
      {"packet", cmd_packet},
      {"stream", cmd_stream},
      {"verify", cmd_verify},
  };
  const std::map<std::string, std::string> help{
      {"exponents", "E1 and E_S exponent curves for each configured rate"},
      {"iv", "normalized streaming IV bound against R/C"},
      {"mse", "MSE lattice and closed-form cross-check"},
      {"simulate", "Monte Carlo of the relaying scheme with theory checks"},
      {"packet", "single-packet error rates against the analytic bounds"},
      {"stream", "packet-streaming worst-bit error against the envelope"},
      {"verify", "all checks the config supports"},
  };
  for (const auto& [name, _] : commands) app.add_subcommand(name, help.at(name));

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (trials) cfg.trials = *trials;
    if (out_dir) cfg.out_dir = *out_dir;
    if (convention) cfg.convention = parse_hop_convention(*convention);
    validate_config(cfg);

    const std::string name = app.get_subcommands().front()->get_name();
    const CommandResult res = commands.at(name)(cfg);
    write_files(res, cfg.out_dir);
    return report(name, res, cfg.out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
