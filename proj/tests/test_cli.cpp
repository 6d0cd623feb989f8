#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lanemden/field_io.hpp"
#include "lanemden/pipeline.hpp"
#include "lanemden/radial_greens.hpp"

#include <json.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lanemden;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(LANEMDEN_TEST_TMP) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path path = dir / "config.json";
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::string& command, const fs::path& dir, const std::string& config, CommandOptions options = {}) {
  const fs::path path = write_config(dir, config);
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(command, path, options, out, err);
  return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(LANEMDEN_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
      if (c == '"') {
        quoted = !quoted;
      } else if (c == ',' && !quoted) {
        cells.push_back(cell);
        cell.clear();
      } else {
        cell += c;
      }
    }
    cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  REQUIRE(it != header.end());
  return static_cast<std::size_t>(it - header.begin());
}

const char* kSubFixture = R"({"params": {"n": 3, "p": 20, "q": 2.5, "r": 0, "s": 0},
  "grid": {"rho_min": 1e-4, "rho_max": 1e8, "points": 5120}})";

}  // namespace

TEST_CASE("classify reports the scaling pair") {
  const fs::path dir = scratch("classify");
  const Run r = run("classify", dir, R"({"params": {"n": 3, "p": 11, "q": 3, "r": 0, "s": 0}})");
  CHECK(r.code == kExitOk);
  const Json j = Json::parse(slurp(dir / "classify.json"));
  CHECK(j["a"].get<double>() == 4.0);
  CHECK(j["b"].get<double>() == 12.0);
  CHECK(j["regime"] == "Critical");
  CHECK(j["critical_condition"]["holds"] == true);
  CHECK(fs::exists(dir / "classify.csv"));
}

TEST_CASE("classify rejects invalid tuples") {
  const fs::path dir = scratch("classify_bad");
  Run r = run("classify", dir, R"({"params": {"n": 3, "p": 1, "q": 2}})");
  CHECK(r.code == kExitInvalidInput);
  CHECK(r.err.find("p - s >= q - r") != std::string::npos);
  r = run("classify", dir, R"({"params": {"n": 4, "p": 1.5, "q": 1.5}})");
  CHECK(r.code == kExitInvalidInput);
  CHECK(r.err.find("inadmissible") != std::string::npos);
}

TEST_CASE("malformed configs name the offending key") {
  const fs::path dir = scratch("malformed");
  Run r = run("classify", dir, R"({"params": {"n": 3, "p": 5, "qq": 5}})");
  CHECK(r.code == kExitInvalidInput);
  CHECK(r.err.find("params.qq") != std::string::npos);
  r = run("classify", dir, R"({"params": {"n": 3, "p": "five", "q": 5}})");
  CHECK(r.code == kExitInvalidInput);
  CHECK(r.err.find("params.p") != std::string::npos);
  r = run("verify", dir, R"({"params": {"n": 3, "p": 5, "q": 5}, "checks": ["theorem5"]})");
  CHECK(r.code == kExitInvalidInput);
  CHECK(r.err.find("checks[0]") != std::string::npos);
  r = run("solve", dir, R"({"params": {"n": 3, "p": 5, "q": 5}, "grid": {"points": 8}})");
  CHECK(r.code == kExitInvalidInput);
  CHECK(r.err.find("grid.points") != std::string::npos);
  r = run("classify", dir, "{not json");
  CHECK(r.code == kExitInvalidInput);
  CHECK(run_cli("classify", dir / "missing.json", {}, std::cout, std::cout) == kExitInvalidInput);
}

TEST_CASE("solve the bubble") {
  const fs::path dir = scratch("solve_bubble");
  const Run r = run("solve", dir, R"({"params": {"n": 3, "p": 5, "q": 5}})");
  REQUIRE(r.code == kExitOk);
  const Json diag = Json::parse(slurp(dir / "diagnostics.json"));
  CHECK(diag["beta_star"].get<double>() == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(diag["history"].size() > 10);
  const RadialField u = load_field(dir / "u.csv");
  CHECK(u.value_at_zero == 1.0);
  CHECK(u(1.0) == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-6));
}

TEST_CASE("solve output is deterministic") {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  REQUIRE(run("solve", a, kSubFixture).code == kExitOk);
  REQUIRE(run("solve", b, kSubFixture).code == kExitOk);
  CHECK(slurp(a / "u.csv") == slurp(b / "u.csv"));
  CHECK(slurp(a / "v.csv") == slurp(b / "v.csv"));
  CHECK(slurp(a / "diagnostics.json") == slurp(b / "diagnostics.json"));
  const Json diag = Json::parse(slurp(a / "diagnostics.json"));
  CHECK(diag["residuals"]["green_u"].get<double>() <= 1e-3);
  CHECK(diag["residuals"]["green_v"].get<double>() <= 1e-3);
}

TEST_CASE("solve with both methods") {
  const fs::path dir = scratch("both");
  const Run r = run("solve", dir, R"({"params": {"n": 3, "p": 5, "q": 5}, "solver": {"method": "both"}})");
  REQUIRE(r.code == kExitOk);
  const Json diag = Json::parse(slurp(dir / "diagnostics.json"));
  CHECK(diag["picard"]["converged"] == true);
  CHECK(diag["cross_method_difference"].get<double>() <= 1e-3);
  CHECK(fs::exists(dir / "picard_u.csv"));
}

TEST_CASE("a bracket that misses the ground state exits 3") {
  const fs::path dir = scratch("bracket");
  const Run r = run("solve", dir, R"({"params": {"n": 3, "p": 5, "q": 5}, "solver": {"beta_bracket": [5, 6]}})");
  CHECK(r.code == kExitNonConvergence);
  CHECK(r.err.find("BracketFailure") != std::string::npos);
  const Json diag = Json::parse(slurp(dir / "diagnostics.json"));
  CHECK(diag["status"] == "BracketFailure");
}

TEST_CASE("verify the closed-form integrals") {
  const fs::path dir = scratch("th4");
  const Run r = run("verify", dir, R"({"th4_sets": [{"n": 5, "q": 1.2, "s": 0.3}, {"n": 3, "q": 2.5, "s": 0},
                                                     {"n": 4, "q": 1.5, "s": 0.25}]})");
  CHECK(r.code == kExitOk);
  const auto rows = read_csv(dir / "checks.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"check_name", "predicted", "measured", "rel_error", "tolerance", "pass"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::stod(rows[i][3]) <= 1e-6);
    CHECK(rows[i][5] == "true");
  }
}

TEST_CASE("verify the subcritical fixture, then a corrupted copy") {
  const fs::path dir = scratch("verify_sub");
  REQUIRE(run("solve", dir, kSubFixture).code == kExitOk);
  const Run full = run("verify", dir, kSubFixture);
  CHECK(full.code == kExitOk);
  const Json checks = Json::parse(slurp(dir / "checks.json"));
  CHECK(checks["all_pass"] == true);
  CHECK(checks["checks"].size() >= 10);

  // Double every sample of v (and its tail) in the saved state.
  RadialField v = load_field(dir / "v.csv");
  v.values *= 2.0;
  v.value_at_zero *= 2.0;
  v.tail.amplitude *= 2.0;
  save_field(dir / "v_bad.csv", v);
  const fs::path out = scratch("verify_bad");
  const std::string bad = R"({"params": {"n": 3, "p": 20, "q": 2.5}, "checks": ["theorem4"],
    "state": {"u": ")" + (dir / "u.csv").string() + R"(", "v": ")" + (dir / "v_bad.csv").string() + R"("}})";
  const Run r = run("verify", out, bad);
  CHECK(r.code == kExitCheckFailure);
  CHECK(r.err.find("theorem4_product") != std::string::npos);

  const std::string missing = R"({"params": {"n": 3, "p": 20, "q": 2.5}, "checks": ["theorem4"],
    "state": {"u": "nowhere/u.csv", "v": "nowhere/v.csv"}})";
  CHECK(run("verify", out, missing).code == kExitInvalidInput);
}

TEST_CASE("verify refuses an inapplicable check") {
  const fs::path dir = scratch("inapplicable");
  const Run r = run("verify", dir, R"({"params": {"n": 3, "p": 5, "q": 5}, "checks": ["theorem4"]})");
  CHECK(r.code == kExitInvalidInput);
}

TEST_CASE("sweep regime column") {
  const fs::path dir = scratch("sweep_regime");
  const Run r = run("sweep", dir, R"({"params": {"n": 3, "p": 20, "q": 2, "r": 0, "s": 0},
                                      "sweep": {"q": [2.0, 2.5, 3.0, 3.5]}})");
  REQUIRE(r.code == kExitOk);
  const auto rows = read_csv(dir / "sweep.csv");
  REQUIRE(rows.size() == 5);
  const std::size_t regime = column(rows[0], "regime");
  CHECK(rows[1][regime] == "Sub");
  CHECK(rows[2][regime] == "Sub");
  CHECK(rows[3][regime] == "Critical");
  CHECK(rows[4][regime] == "Super");
}

TEST_CASE("sweep along the critical hyperbola") {
  const fs::path dir = scratch("sweep_hyperbola");
  const Run r = run("sweep", dir, R"({"sweep": {"n": [3], "q": {"start": 2.5, "stop": 5.0, "step": 0.25},
                                                 "p": "critical_hyperbola"}})");
  REQUIRE(r.code == kExitOk);
  const auto rows = read_csv(dir / "sweep.csv");
  REQUIRE(rows.size() == 12);
  const std::size_t p = column(rows[0], "p");
  const std::size_t q = column(rows[0], "q");
  const std::size_t holds = column(rows[0], "critical_condition");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double pv = std::stod(rows[i][p]);
    const double qv = std::stod(rows[i][q]);
    CHECK(std::abs(pv * qv - (2 * pv + 2 * qv + 5)) <= 1e-10 * pv * qv);
    CHECK(rows[i][holds] == "true");
  }
}

TEST_CASE("random sweep is deterministic under concurrency") {
  const fs::path a = scratch("sweep_rand_a");
  const fs::path b = scratch("sweep_rand_b");
  const std::string cfg = R"({"sweep": {"random": {"count": 1000, "seed": 11}}})";
  CommandOptions serial;
  CommandOptions parallel;
  parallel.jobs = 8;
  REQUIRE(run("sweep", a, cfg, serial).code == kExitOk);
  REQUIRE(run("sweep", b, cfg, parallel).code == kExitOk);
  CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));
  const auto rows = read_csv(a / "sweep.csv");
  REQUIRE(rows.size() == 1001);
  const std::size_t r1 = column(rows[0], "identity_residual_1");
  const std::size_t r2 = column(rows[0], "identity_residual_2");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(std::stod(rows[i][r1]) <= 1e-12);
    REQUIRE(std::stod(rows[i][r2]) <= 1e-12);
  }
}

TEST_CASE("empty sweep ranges exit 2") {
  const fs::path dir = scratch("sweep_empty");
  CHECK(run("sweep", dir, R"({"params": {"n": 3, "p": 5, "q": 5}, "sweep": {"q": []}})").code == kExitInvalidInput);
  CHECK(run("sweep", dir, R"({"params": {"n": 3, "p": 5, "q": 5},
                             "sweep": {"q": {"start": 3, "stop": 2, "step": 0.5}}})")
            .code == kExitInvalidInput);
}

TEST_CASE("potential of a supplied field") {
  const fs::path dir = scratch("potential");
  const RadialGrid g = RadialGrid::log_uniform(1e-4, 1e6, 4096, 3);
  const RadialField f = sample_field(
      g, [](double r) { return std::pow(1.0 + r * r / 3.0, -2.5); }, 1.0, Tail{std::pow(3.0, 2.5), 5.0, 0.0}, true);
  save_field(dir / "source.csv", f);
  const Run r = run("potential", dir, R"({"field": "source.csv"})");
  REQUIRE(r.code == kExitOk);
  const RadialField w = load_field(dir / "potential.csv");
  CHECK(w.value_at_zero == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(w(1.0) == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-6));
}

TEST_CASE("format flag restricts outputs") {
  const fs::path dir = scratch("format");
  CommandOptions o;
  o.format = "json";
  const Run r = run("classify", dir, R"({"params": {"n": 3, "p": 5, "q": 5}})", o);
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(dir / "classify.json"));
  CHECK_FALSE(fs::exists(dir / "classify.csv"));
  CHECK(Json::parse(r.out)["regime"] == "Supercritical");
}

TEST_CASE("command-line front end") {
  const fs::path dir = scratch("binary");
  write_config(dir, R"({"params": {"n": 3, "p": 5, "q": 5}})");
  const std::string cfg = (dir / "config.json").string();
  const std::string out = (dir / "out").string();
  CHECK(run_binary("classify --config " + cfg + " --out " + out) == 0);
  CHECK(fs::exists(fs::path(out) / "classify.csv"));
  CHECK(run_binary("solve --config " + cfg + " --out " + out + " --format csv") == 0);
  CHECK(fs::exists(fs::path(out) / "u.csv"));
  CHECK(run_binary("") == 2);
  CHECK(run_binary("solve") == 2);
  CHECK(run_binary("solve --config " + cfg + " --format xml") == 2);
  CHECK(run_binary("frobnicate --config " + cfg) == 2);
  write_config(dir, R"({"params": {"n": 3, "p": 5, "q": 5}, "solver": {"beta_bracket": [5, 6]}})");
  CHECK(run_binary("solve --config " + cfg + " --out " + out) == 3);
}

TEST_CASE("shipped configs run") {
  struct Job {
    const char* config;
    const char* command;
  };
  const Job jobs[] = {
      {"bubble", "solve"},       {"bubble", "verify"},          {"subcritical", "classify"},
      {"subcritical", "verify"}, {"critical", "verify"},        {"th4_integrals", "verify"},
      {"hyperbola_sweep", "sweep"}, {"random_sweep", "sweep"},
  };
  for (const Job& j : jobs) {
    const fs::path out = scratch(std::string("shipped_") + j.config + "_" + j.command);
    CommandOptions o;
    o.out = out;
    std::ostringstream sink;
    const fs::path config = fs::path(LANEMDEN_CONFIGS) / (std::string(j.config) + ".json");
    INFO(j.config << " " << j.command);
    CHECK(run_cli(j.command, config, o, sink, sink) == kExitOk);
    CHECK_FALSE(fs::is_empty(out));
  }
}
