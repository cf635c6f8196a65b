#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "varislip/io.hpp"
#include "varislip/scenario.hpp"

using namespace varislip;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Trajectory toy_traj(const SimulationConfig& cfg) {
  auto setup = build_scenario(cfg);
  return run_simulation(setup.cfg, setup.models, setup.init);
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("minimal document expands to the full scenario defaults") {
    const auto cfg = SimulationConfig::parse("scenario = falling_disc\n");
    CHECK(cfg.get_double("step.tau") == 0.001);
    CHECK(cfg.get_int("solid.nx") == 32);
    CHECK(cfg.get_int("fluid.mx") == 96);
    CHECK(cfg.get_double("force.y") == -1.0);
    CHECK(cfg.scenario() == "falling_disc");
  }

  SUBCASE("integer-multiple invariants are re-validated") {
    CHECK_THROWS_WITH_AS(
        (void)SimulationConfig::parse("scenario = toy_step\nstep.h = 0.0017\n"),
        doctest::Contains("integer multiple"), ValidationError);
    CHECK_THROWS_AS(
        (void)SimulationConfig::parse("scenario = toy_step\nstep.t_end = 0.015\n"),
        ValidationError);
  }

  SUBCASE("round trip: serialize then parse gives an equal config") {
    auto cfg = SimulationConfig::parse("scenario = sheared_block\nfluid.slip = 7.5\n");
    const auto again = SimulationConfig::parse(cfg.serialize());
    CHECK(cfg == again);
  }

  SUBCASE("parse errors carry the line and key") {
    CHECK_THROWS_WITH_AS((void)SimulationConfig::parse("a = 1\nb = 2\nnonsense line\n"),
                         doctest::Contains("line 3"), ParseError);
    CHECK_THROWS_WITH_AS((void)SimulationConfig::parse("step.tau = 1e-3\nstep.tau = 2e-3\n"),
                         doctest::Contains("duplicate"), ParseError);
    CHECK_THROWS_WITH_AS((void)SimulationConfig::parse("scenario = no_such_thing\n"),
                         doctest::Contains("no_such_thing"), ValidationError);
    CHECK_THROWS_WITH_AS(
        (void)SimulationConfig::parse("scenario = toy_step\nstep.tau = abc\n"),
        doctest::Contains("step.tau"), ValidationError);
  }

  SUBCASE("scenario list names the built-ins") {
    const auto names = scenario_names();
    auto has = [&](const char* n) {
      return std::find(names.begin(), names.end(), n) != names.end();
    };
    CHECK(has("falling_disc"));
    CHECK(has("sheared_block"));
    CHECK(has("shrinking_disc_transport"));
  }
}

TEST_CASE("output writing") {
  SUBCASE("empty trajectory still produces metadata and a headered budget") {
    TempDir dir("varislip_empty_run");
    auto cfg = SimulationConfig::parse("scenario = toy_step\nstep.t_end = 0\n");
    const Trajectory traj = toy_traj(cfg);
    write_outputs(traj, run_verification(traj), cfg, dir.path.string());
    CHECK(fs::exists(dir.path / "metadata.txt"));
    CHECK(fs::exists(dir.path / "budget.csv"));
    const std::string budget = read_file(dir.path / "budget.csv");
    CHECK(std::count(budget.begin(), budget.end(), '\n') == 1);  // header only
    CHECK(fs::exists(dir.path / "snapshot_000000.txt"));
  }

  SUBCASE("budget rows, documented column order, snapshots") {
    TempDir dir("varislip_toy_run");
    auto cfg = SimulationConfig::parse("scenario = toy_step\noutput.snapshot_stride = 5\n");
    const Trajectory traj = toy_traj(cfg);
    const auto report = run_verification(traj);
    write_outputs(traj, report, cfg, dir.path.string());

    const std::string budget = read_file(dir.path / "budget.csv");
    std::stringstream ss(budget);
    std::string header;
    std::getline(ss, header);
    const auto cols = budget_columns();
    std::string expected;
    for (size_t i = 0; i < cols.size(); ++i) expected += (i ? "," : "") + cols[i];
    CHECK(header == expected);
    int rows = 0;
    std::string line;
    while (std::getline(ss, line))
      if (!line.empty()) ++rows;
    CHECK(rows == traj.steps_completed());
    CHECK(fs::exists(dir.path / "snapshot_000000.txt"));
    CHECK(fs::exists(dir.path / "snapshot_000005.txt"));
    CHECK(fs::exists(dir.path / "snapshot_000010.txt"));
    CHECK(fs::exists(dir.path / "report.txt"));
  }

  SUBCASE("byte-identical reruns") {
    TempDir a("varislip_rep_a"), b("varislip_rep_b");
    auto cfg = SimulationConfig::parse("scenario = toy_step\n");
    {
      const Trajectory traj = toy_traj(cfg);
      write_outputs(traj, run_verification(traj), cfg, a.path.string());
    }
    {
      const Trajectory traj = toy_traj(cfg);
      write_outputs(traj, run_verification(traj), cfg, b.path.string());
    }
    for (const auto& entry : fs::directory_iterator(a.path)) {
      const auto name = entry.path().filename();
      CHECK(read_file(entry.path()) == read_file(b.path / name));
    }
  }
}

TEST_CASE("directory verification") {
  TempDir dir("varislip_verify_run");
  auto cfg = SimulationConfig::parse("scenario = toy_step\n");
  const Trajectory traj = toy_traj(cfg);
  write_outputs(traj, run_verification(traj), cfg, dir.path.string());

  SUBCASE("a clean run passes every stored check") {
    const auto rep = verify_run_directory(dir.path.string());
    for (const auto& c : rep.checks) {
      INFO(c.name, " value=", c.value);
      CHECK(c.pass);
    }
  }

  SUBCASE("a tampered budget digit is caught and the check named") {
    // flip a significant digit of the j_value column in the first data row
    std::string budget = read_file(dir.path / "budget.csv");
    const size_t header_end = budget.find('\n');
    size_t col = 0;
    const auto cols = budget_columns();
    size_t jcol = 0;
    for (size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == "j_value") jcol = i;
    size_t pos = header_end + 1;
    while (col < jcol) {
      pos = budget.find(',', pos) + 1;
      ++col;
    }
    // first significant digit of the field
    while (!std::isdigit((unsigned char)budget[pos])) ++pos;
    budget[pos] = budget[pos] == '9' ? '1' : budget[pos] + 1;
    std::ofstream(dir.path / "budget.csv", std::ios::binary) << budget;

    const auto rep = verify_run_directory(dir.path.string());
    CHECK(!rep.all_pass());
    bool named = false;
    for (const auto& c : rep.checks)
      if (!c.pass &&
          (c.name == "budget-checksum" || c.name == "budget-row-identity" ||
           c.name == "comparison-inequality" || c.name == "energy-chain"))
        named = true;
    CHECK(named);
  }

  SUBCASE("zero extension holds in the stored snapshots") {
    const auto rep = verify_run_directory(dir.path.string(), {"geometry"});
    bool found = false;
    for (const auto& c : rep.checks)
      if (c.name == "zero-extension") {
        found = true;
        CHECK(c.pass);
      }
    CHECK(found);
  }
}

TEST_CASE("transport run directory round trip") {
  TempDir dir("varislip_transport_run");
  auto cfg = SimulationConfig::parse("scenario = shrinking_disc_transport\nfluid.mx = 48\nfluid.my = 48\n");
  const auto setup = build_scenario(cfg);
  REQUIRE(setup.is_transport);
  const auto tr = check_transport(setup.transport);
  write_transport_outputs(tr, cfg, dir.path.string());
  const auto rep = verify_run_directory(dir.path.string(), {"transport"});
  REQUIRE(!rep.checks.empty());
  for (const auto& c : rep.checks) CHECK(c.pass);
}
