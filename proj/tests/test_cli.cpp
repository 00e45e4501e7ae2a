#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfrc/io.hpp"

namespace fs = std::filesystem;
using namespace mfrc;

namespace {

const std::string kCli = MFRC_CLI_PATH;
const std::string kDir = MFRC_SCENARIO_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mfrc_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + kCli + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Json load_json(const fs::path& p) { return Json::parse(slurp(p)); }

}  // namespace

TEST_CASE("check exit codes") {
  const fs::path out = scratch("check");
  CHECK(run("check " + kDir + "/paper_example.json --out " + out.string()) == 0);
  const Json rep = load_json(out / "convexity.json");
  CHECK(rep["certified"] == true);
  CHECK(fs::exists(out / kManifestName));

  const fs::path bad = scratch("check_bad");
  CHECK(run("check " + kDir + "/blowup_case.json --out " + bad.string()) == 1);
  const Json fail = load_json(bad / "convexity.json");
  CHECK(fail["certified"] == false);
  CHECK(fail["reports"][0]["witness"]["time"].get<double>() > 0.0);

  const fs::path junk = scratch("junk.json");
  std::ofstream(junk) << "{ \"n\": 1, ";
  CHECK(run("check " + junk.string() + " --out " + scratch("check_junk").string()) == 2);
  CHECK(run("check /nonexistent/file.json") == 2);
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("synthesize writes the P path and the Z blow-up") {
  const fs::path out = scratch("synth");
  REQUIRE(run("synthesize " + kDir + "/paper_example.json --detect-z-blowup --out " + out.string()) == 0);
  for (const char* f : {"riccati_P.csv", "riccati_K.csv", "riccati_Ptilde.csv", "consistency.csv", "law.json",
                        "z_blowup.json", "manifest.json"})
    CHECK(fs::exists(out / f));
  const CsvTable P = read_csv(out / "riccati_P.csv");
  CHECK(P.header == std::vector<std::string>{"t", "P_0_0"});
  REQUIRE(P.rows.size() == 2001);
  double err = 0.0;
  for (const auto& row : P.rows) err = std::max(err, std::abs(row[1] - (-1.0 / (row[0] + 1.0) - 0.5)));
  CHECK(err <= 1e-8);
  const Json z = load_json(out / "z_blowup.json");
  CHECK(std::abs(z["time"].get<double>() - 0.758276) <= 5e-3);

  const CsvTable c = read_csv(out / "consistency.csv");
  CHECK(c.header == std::vector<std::string>{"t", "xbar_0", "l_0", "sbar_0", "phi_0", "v_0"});
}

TEST_CASE("synthesize refuses uncertified scenarios unless forced") {
  CHECK(run("synthesize " + kDir + "/blowup_case.json --out " + scratch("synth_bad").string()) == 1);
}

TEST_CASE("homogeneous scenario has an all-zero consistency profile") {
  const fs::path out = scratch("homog");
  REQUIRE(run("synthesize " + kDir + "/homogeneous.json --steps 200 --out " + out.string()) == 0);
  const CsvTable c = read_csv(out / "consistency.csv");
  for (const auto& row : c.rows)
    for (std::size_t j = 1; j < row.size(); ++j) CHECK(row[j] == 0.0);
}

TEST_CASE("horizon override") {
  const fs::path out = scratch("override");
  REQUIRE(run("synthesize " + kDir + "/paper_example.json --horizon-override finite:0.5 --steps 100 --out " +
              out.string()) == 0);
  const CsvTable P = read_csv(out / "riccati_P.csv");
  CHECK(P.rows.back()[0] == 0.5);
  CHECK(run("synthesize " + kDir + "/paper_example.json --horizon-override sideways:1") == 2);
}

TEST_CASE("simulate is byte-deterministic and honours MFG_SEED") {
  const fs::path a = scratch("sim_a"), b = scratch("sim_b"), c = scratch("sim_c");
  const std::string base = "simulate " + kDir + "/paper_example.json -N 16 --replications 8 ";
  REQUIRE(run(base + "--seed 11 --out " + a.string()) == 0);
  REQUIRE(run(base + "--seed 11 --out " + b.string()) == 0);
  CHECK(slurp(a / "costs.csv") == slurp(b / "costs.csv"));
  CHECK(slurp(a / "meanfield_error.csv") == slurp(b / "meanfield_error.csv"));
  const CsvTable costs = read_csv(a / "costs.csv");
  CHECK(costs.header == std::vector<std::string>{"replication", "agent", "cost"});
  CHECK(costs.rows.size() == 16 * 8);

  REQUIRE(run(base + "--out " + c.string(), "MFG_SEED=11") == 0);
  CHECK(slurp(a / "costs.csv") == slurp(c / "costs.csv"));
  CHECK(load_json(a / kManifestName)["seed"] == 11);
}

TEST_CASE("noise-free simulation reports zero mean-field error") {
  const fs::path quiet = scratch("quiet.json");
  Json j = Json::parse(slurp(kDir + "/paper_example.json"));
  j["sigma"] = {{0.0}};
  j["init_spread"] = 0.0;
  std::ofstream(quiet) << j.dump();
  const fs::path out = scratch("sim_quiet");
  REQUIRE(run("simulate " + quiet.string() + " -N 8 --replications 2 --out " + out.string()) == 0);
  const CsvTable e = read_csv(out / "meanfield_error.csv");
  REQUIRE(e.rows.size() == 1);
  CHECK(e.rows[0][1] <= 1e-8);
}

TEST_CASE("sweep needs three agent counts") {
  CHECK(run("sweep " + kDir + "/paper_example.json --Ns 8 --out " + scratch("sweep1").string()) == 2);
}

TEST_CASE("sweep writes the rate report and gap table") {
  const fs::path out = scratch("sweep");
  const int code = run("sweep " + kDir + "/paper_example.json --Ns 8,16,32,64 --replications 128 --steps 100 "
                       "--seed 3 --out " + out.string());
  CHECK((code == 0 || code == 1));
  const Json rep = load_json(out / "sweep_report.json");
  CHECK(rep["rows"].size() == 4);
  const CsvTable gap = read_csv(out / "gap_table.csv");
  CHECK(gap.header ==
        std::vector<std::string>{"N", "centralized_value", "decentralized_value", "gap", "gap_times_sqrtN"});
  REQUIRE(gap.rows.size() == 3);
  CHECK(gap.rows[1][3] <= gap.rows[0][3]);
  CHECK(gap.rows[2][3] <= gap.rows[1][3]);
}

TEST_CASE("CSV values round-trip exactly") {
  const fs::path p = scratch("roundtrip.csv");
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{0.1, 1.0 / 3.0}, {-1e-300, 123456789.123456789}, {std::nextafter(1.0, 2.0), 0.0}};
  write_csv(p, t);
  const CsvTable back = read_csv(p);
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
}
