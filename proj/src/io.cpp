#include "mfrc/io.hpp"

#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mfrc {

std::string format_double(double x) {
  char buf[40];
  for (int digits = 15; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    if (digits == 17 || std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t j = 0; j < table.header.size(); ++j) out << (j ? "," : "") << table.header[j];
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_double(row[j]);
    out << '\n';
  }
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  CsvTable t;
  std::string line, cell;
  if (std::getline(in, line)) {
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable path_table(const std::string& name, const Coefficient& c, const TimeGrid<double>& grid) {
  CsvTable t;
  const MatrixXd& first = c.node(0);
  t.header.push_back("t");
  for (Index i = 0; i < first.rows(); ++i)
    for (Index j = 0; j < first.cols(); ++j)
      t.header.push_back(name + "_" + std::to_string(i) + "_" + std::to_string(j));
  for (Index k = 0; k < grid.size(); ++k) {
    const MatrixXd& v = c.node(k);
    std::vector<double> row{grid.node(k)};
    for (Index i = 0; i < v.rows(); ++i)
      for (Index j = 0; j < v.cols(); ++j) row.push_back(v(i, j));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable consistency_table(const ConsistencyProfile& profile) {
  CsvTable t;
  t.header.push_back("t");
  for (const char* name : {"xbar", "l", "sbar", "phi", "v"})
    for (Index i = 0; i < profile.n(); ++i) t.header.push_back(std::string(name) + "_" + std::to_string(i));
  const auto& grid = profile.grid();
  for (Index k = 0; k < grid.size(); ++k) {
    std::vector<double> row{grid.node(k)};
    const VectorXd z = profile.state(k);
    row.insert(row.end(), z.data(), z.data() + z.size());
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable costs_table(const SimResult& result) {
  CsvTable t;
  t.header = {"replication", "agent", "cost"};
  for (Index r = 0; r < result.agent_cost.rows(); ++r)
    for (Index i = 0; i < result.agent_cost.cols(); ++i)
      t.rows.push_back({double(r), double(i), result.agent_cost(r, i)});
  return t;
}

CsvTable meanfield_error_table(const SweepReport& report) {
  CsvTable t;
  t.header = {"N", "estimate", "stderr"};
  for (const auto& row : report.rows) t.rows.push_back({double(row.N), row.estimate, row.std_error});
  return t;
}

CsvTable gap_table(const std::vector<GapRow>& rows) {
  CsvTable t;
  t.header = {"N", "centralized_value", "decentralized_value", "gap", "gap_times_sqrtN"};
  for (const auto& r : rows) t.rows.push_back({double(r.N), r.centralized, r.decentralized, r.gap, r.gap_sqrtN});
  return t;
}

Json to_json(const ConvexityReport& r) {
  Json witness = nullptr;
  if (r.witness_time) {
    witness = Json{{"time", *r.witness_time}};
  } else if (r.witness_eigenvalue) {
    witness = Json{{"eigenvalue", {r.witness_eigenvalue->real(), r.witness_eigenvalue->imag()}}};
  } else if (r.witness_direction) {
    witness = Json{{"direction", *r.witness_direction}};
  }
  return Json{{"condition", to_string(r.condition)},
              {"holds", r.holds},
              {"witness", witness},
              {"detail", {{"margin", r.margin}, {"note", r.note}}}};
}

Json to_json(const ZBlowup& z) {
  Json j;
  j["convention"] = z.convention == BlockConvention::block_form ? "block_form" : "componentwise";
  j["t_end"] = z.t_end;
  j["blowup"] = z.time.has_value();
  j["time"] = z.time ? Json(*z.time) : Json(nullptr);
  j["estimates"] = z.estimates;
  return j;
}

Json to_json(const SweepReport& s) {
  Json rows = Json::array();
  for (const auto& r : s.rows) rows.push_back({{"N", r.N}, {"estimate", r.estimate}, {"stderr", r.std_error}});
  return Json{{"slope", s.slope}, {"intercept", s.intercept}, {"degenerate", s.degenerate}, {"rows", rows}};
}

namespace {

Json flat(const MatrixXd& m) {
  Json a = Json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
  return a;
}

}  // namespace

Json law_json(const ControlLaw& law, const DriftLaw& drift) {
  const auto& grid = law.grid();
  Json t = Json::array(), gain = Json::array(), offset = Json::array(), slope = Json::array(),
       doff = Json::array();
  for (Index k = 0; k < grid.size(); ++k) {
    t.push_back(grid.node(k));
    gain.push_back(flat(law.gain(k)));
    offset.push_back(flat(law.offset(k)));
    if (drift.grid().size() == grid.size()) {
      slope.push_back(flat(drift.slope(k)));
      doff.push_back(flat(drift.offset(k)));
    }
  }
  Json j{{"form", "u = -gain x + offset; f = slope x_avg + offset"},
         {"t", t},
         {"control", {{"gain", gain}, {"offset", offset}}}};
  if (!slope.empty()) j["drift"] = {{"slope", slope}, {"offset", doff}};
  return j;
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Json RunManifest::to_json() const {
  return Json{{"scenario", scenario},   {"command", command},           {"seed", seed},
              {"steps", steps},         {"out_dir", out_dir},           {"tool_version", tool_version},
              {"input_hash", input_hash}};
}

}  // namespace mfrc
