#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfrc/convexity.hpp"
#include "mfrc/oracle.hpp"

namespace mfrc {

using Json = nlohmann::ordered_json;

// Shortest text that round-trips, at most 17 significant digits.
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

// Columns t, <name>_i_j (row-major), one row per grid node.
CsvTable path_table(const std::string& name, const Coefficient& c, const TimeGrid<double>& grid);
// Columns t, xbar_i, l_i, sbar_i, phi_i, v_i.
CsvTable consistency_table(const ConsistencyProfile& profile);
// replication, agent, cost
CsvTable costs_table(const SimResult& result);
// N, estimate, stderr
CsvTable meanfield_error_table(const SweepReport& report);
CsvTable gap_table(const std::vector<GapRow>& rows);

Json to_json(const ConvexityReport& r);
Json to_json(const ZBlowup& z);
Json to_json(const SweepReport& s);
Json law_json(const ControlLaw& law, const DriftLaw& drift);

void write_json(const std::filesystem::path& path, const Json& j);

std::uint64_t fnv1a64(const std::string& bytes);

struct RunManifest {
  std::string scenario;
  std::string command;
  std::uint64_t seed = 0;
  Index steps = 0;
  std::string out_dir;
  std::string tool_version;
  std::string input_hash;  // hex FNV-1a of the scenario bytes

  Json to_json() const;
};

constexpr const char* kToolVersion = "0.1.0";
constexpr const char* kManifestName = "manifest.json";

}  // namespace mfrc
