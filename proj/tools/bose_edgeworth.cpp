// Command-line driver: hartree, bogoliubov, clt-sweep, edgeworth, iid-demo, report.
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "bose_edgeworth/experiment.hpp"

namespace be = bose_edgeworth;

namespace {

bool is_config_kind(const std::string& k) {
  return k == "ConfigError" || k == "DimensionGuard" || k == "TruncationGuard" || k == "LengthGuard" ||
         k == "PermutationGuard" || k == "KernelNotPositive";
}

void print_report(const be::RunReport& rep) {
  std::cout << rep.command << " [" << rep.hash << "] " << rep.wall_time << " s\n";
  for (const auto& c : rep.checks)
    std::cout << "  " << (c.pass ? "PASS " : "FAIL ") << c.name << " = " << c.value << " (" << c.target << ")\n";
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edgeworth expansion for one-body observables in the mean-field Bose gas"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  int jobs = be::default_jobs();
  bool resume = false;
  app.add_option("--config", config_path, "experiment config (JSON)");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory (BOSE_EDGEWORTH_OUT overrides)");
  app.add_flag("--resume", resume, "reuse persisted per-N rows of an unfinished run");

  using Command = be::RunReport (*)(const be::ExperimentConfig&, const be::RunOptions&);
  const std::vector<std::pair<std::string, Command>> commands{
      {"hartree", be::cmd_hartree},     {"bogoliubov", be::cmd_bogoliubov}, {"clt-sweep", be::cmd_clt_sweep},
      {"edgeworth", be::cmd_edgeworth}, {"iid-demo", be::cmd_iid_demo},     {"report", be::cmd_report}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    be::ExperimentConfig cfg = config_path.empty() ? be::ExperimentConfig{} : be::load_config(config_path);
    be::validate(cfg);
    be::RunOptions opt;
    opt.out = cfg.output_dir;
    if (!out_dir.empty()) opt.out = out_dir;
    if (const char* env = std::getenv("BOSE_EDGEWORTH_OUT"); env && *env) opt.out = env;
    opt.jobs = jobs;
    opt.resume = resume;
    for (const auto& [name, fn] : commands) {
      if (!app.got_subcommand(name)) continue;
      const be::RunReport rep = fn(cfg, opt);
      print_report(rep);
      return rep.passed() ? 0 : 1;
    }
  } catch (const be::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_config_kind(e.kind()) ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
