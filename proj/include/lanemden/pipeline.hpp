#ifndef LANEMDEN_PIPELINE_HPP
#define LANEMDEN_PIPELINE_HPP

#include "lanemden/exponents.hpp"
#include "lanemden/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lanemden {

/// Malformed run configuration; `what()` names the offending key path.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum ExitCode : int { kExitOk = 0, kExitCheckFailure = 1, kExitInvalidInput = 2, kExitNonConvergence = 3 };

struct GridSpec {
  double rho_min = 1e-4;
  double rho_max = 1e6;
  Index points = 4096;
};

struct Th4Set {
  int n = 3;
  double q = 1.0;
  double s = 0.0;
};

/// One swept exponent: explicit values, in declaration order.
struct SweepAxis {
  std::string name;
  std::vector<double> values;
};

struct SweepSpec {
  std::vector<SweepAxis> axes;
  /// Replace p by the critical-hyperbola value for each (n, q, r, s).
  bool p_on_critical_hyperbola = false;
  std::size_t random_count = 0;
  std::uint64_t random_seed = 0;
};

struct RunConfig {
  std::optional<SystemParams> params;
  ShootingConfig shooting;
  /// shooting, picard or both.
  std::string method = "shooting";
  PicardOptions picard;
  GridSpec grid;
  /// Empty means every check that applies to the regime.
  std::vector<std::string> checks;
  std::filesystem::path output_dir = ".";
  std::vector<std::string> formats{"csv", "json"};
  std::optional<SweepSpec> sweep;
  std::optional<std::filesystem::path> state_u;
  std::optional<std::filesystem::path> state_v;
  std::vector<Th4Set> th4_sets;
  std::optional<std::filesystem::path> field;
};

/// Check names accepted in the `checks` list.
const std::vector<std::string>& known_checks();

/// Parses a JSON run configuration. Unknown keys are errors. Relative paths
/// are resolved against `base_dir`.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

struct CommandOptions {
  std::optional<std::filesystem::path> out;
  unsigned jobs = 1;
  /// Restricts outputs (and stdout) to one format when set.
  std::optional<std::string> format;
};

/// Runs classify, solve, verify, sweep or potential and returns the exit code.
/// Artifacts go to the output directory; a summary goes to `out`, diagnostics to `err`.
int run_command(const std::string& command, const RunConfig& config, const CommandOptions& options,
                std::ostream& out, std::ostream& err);

/// Parses the config file and runs the command, mapping every failure to an exit code.
int run_cli(const std::string& command, const std::filesystem::path& config_path, const CommandOptions& options,
            std::ostream& out, std::ostream& err);

}  // namespace lanemden

#endif  // LANEMDEN_PIPELINE_HPP
