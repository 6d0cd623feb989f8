#include "lanemden/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Radial ground states of the Lane-Emden system -Lap u = v^p u^r, -Lap v = u^q v^s"};
  app.require_subcommand(1, 1);

  std::string config;
  lanemden::CommandOptions options;
  std::string out;
  std::string format;

  for (const char* name : {"classify", "solve", "verify", "sweep", "potential"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON run configuration")->required();
    sub->add_option("--out", out, "Output directory (overrides output.directory)");
    sub->add_option("--jobs", options.jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);
    sub->add_option("--format", format, "Restrict outputs to one format")->check(CLI::IsMember({"csv", "json"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return lanemden::kExitInvalidInput;
  }

  if (!out.empty()) options.out = out;
  if (!format.empty()) options.format = format;
  const std::string command = app.get_subcommands().front()->get_name();
  return lanemden::run_cli(command, config, options, std::cout, std::cerr);
}
