// dhym_lab: runs the experiment suites from one INI config.
//
//   dhym_lab <angles|stability|solve|mollify|calibrate> [--config PATH] [--seed N] [--out DIR] [--jobs N]
//
// The JSON report goes to stdout and to DIR/<command>.json (DIR defaults to $DHYM_OUT, then
// ./dhym_out). Exit codes: 0 ok, 2 bad config or failed precondition, 3 cone escape,
// 4 Newton iteration limit.

#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "dhym/harness.hpp"

int main(int argc, char** argv)
{
  using namespace dhym::harness;

  CLI::App app{"Experiment harness for the twisted deformed Hermitian Yang-Mills toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;

  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " suite");
    sub->add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override general.seed");
    sub->add_option("--out", out, "output directory (overrides general.out and $DHYM_OUT)");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitPrecondition;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  Config cfg;
  try {
    cfg = config_path.empty() ? Config::parse("") : Config::load(config_path);
  } catch (const dhym::Error& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return kExitPrecondition;
  }
  if (seed) cfg.seed = *seed;
  if (out) cfg.out_dir = *out;
  if (jobs) cfg.jobs = *jobs;
  return execute(command, cfg, std::cout, std::cerr);
}
