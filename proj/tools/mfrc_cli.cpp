#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mfrc/acceptance.hpp"
#include "mfrc/io.hpp"

namespace fs = std::filesystem;
using namespace mfrc;

namespace {

constexpr int kOk = 0, kFailed = 1, kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string scenario;
  std::string out = "out";
  Index steps = 0;
  std::optional<std::uint64_t> seed;
  std::string horizon_override;
};

std::uint64_t resolve_seed(const Common& c) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("MFG_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw UsageError("MFG_SEED is not an unsigned integer");
    return v;
  }
  return 0;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError(ModelErrorKind::parse_error, "", "cannot open scenario file " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// "finite:T" or "infinite:rho"
Horizon parse_horizon(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("--horizon-override expects finite:T or infinite:rho");
  const std::string kind = spec.substr(0, colon);
  char* end = nullptr;
  const std::string num = spec.substr(colon + 1);
  const double v = std::strtod(num.c_str(), &end);
  if (num.empty() || *end != '\0') throw UsageError("--horizon-override: bad number '" + num + "'");
  if (kind == "finite") return Horizon::finite(v);
  if (kind == "infinite") return Horizon::infinite(v);
  throw UsageError("--horizon-override kind must be finite or infinite");
}

struct Loaded {
  ValidatedModel m;
  std::string bytes;
};

Loaded load(const Common& c) {
  std::string bytes = read_bytes(c.scenario);
  ModelParams p = parse_scenario(bytes);
  if (!c.horizon_override.empty()) p.horizon = parse_horizon(c.horizon_override);
  return {validate_params(p), std::move(bytes)};
}

fs::path prepare_out(const Common& c, const std::string& command, std::uint64_t seed, Index steps,
                     const std::string& bytes) {
  const fs::path dir(c.out);
  fs::create_directories(dir);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  RunManifest man{c.scenario, command, seed, steps, c.out, kToolVersion, hash};
  write_json(dir / kManifestName, man.to_json());
  return dir;
}

TimeGrid<double> grid_for(const ValidatedModel& m, Index steps) { return TimeGrid<double>(0.0, m->horizon.T, steps); }

std::vector<ConvexityReport> certify(const ValidatedModel& m, Index steps, std::vector<bool>& required) {
  std::vector<ConvexityReport> out;
  required.clear();
  if (m->horizon.is_finite()) {
    out.push_back(check_A2prime_det(m));
    out.push_back(check_A2prime_riccati(m, grid_for(m, steps)));
    required = {true, true};
  } else {
    out.push_back(check_infinite_convexity(m));
    out.push_back(check_A6(m));
    required = {true, true};
  }
  return out;
}

bool all_required(const std::vector<ConvexityReport>& reps, const std::vector<bool>& required) {
  for (std::size_t i = 0; i < reps.size(); ++i)
    if (required[i] && !reps[i].holds) return false;
  return true;
}

struct Synthesis {
  RiccatiBundle bundle;
  ConsistencySolution cons;
};

Synthesis synthesize(const ValidatedModel& m, Index steps) {
  Synthesis s;
  if (m->horizon.is_finite()) {
    s.bundle = solve_riccati(m, grid_for(m, steps));
    s.cons = solve_consistency_finite(m, s.bundle);
  } else {
    s.bundle = solve_riccati(m);
    s.cons = solve_consistency_infinite(m, s.bundle);
  }
  return s;
}

int cmd_check(const Common& c) {
  const Index steps = c.steps ? c.steps : 2000;
  const Loaded l = load(c);
  const fs::path dir = prepare_out(c, "check", 0, steps, l.bytes);
  std::vector<bool> required;
  std::vector<ConvexityReport> reps = certify(l.m, steps, required);
  if (l.m->horizon.is_finite() && reps[1].holds) {
    reps.push_back(probe_P2_convexity(l.m, solve_riccati(l.m, grid_for(l.m, steps)), 8, 1));
    required.push_back(false);
  }
  Json arr = Json::array();
  for (std::size_t i = 0; i < reps.size(); ++i) {
    Json j = to_json(reps[i]);
    j["required"] = bool(required[i]);
    arr.push_back(j);
    std::cout << to_string(reps[i].condition) << ": " << (reps[i].holds ? "holds" : "fails");
    if (reps[i].witness_time) std::cout << " (witness t = " << format_double(*reps[i].witness_time) << ")";
    std::cout << '\n';
  }
  const bool ok = all_required(reps, required);
  write_json(dir / "convexity.json", Json{{"certified", ok}, {"reports", arr}});
  return ok ? kOk : kFailed;
}

int cmd_synthesize(const Common& c, bool force, bool detect_z) {
  const Index steps = c.steps ? c.steps : 2000;
  const Loaded l = load(c);
  const fs::path dir = prepare_out(c, std::string("synthesize") + (force ? " --force" : "") +
                                          (detect_z ? " --detect-z-blowup" : ""),
                                   0, steps, l.bytes);
  std::vector<bool> required;
  if (!all_required(certify(l.m, steps, required), required)) {
    if (!force) {
      std::cerr << "assumptions not certified; rerun with --force to proceed\n";
      return kFailed;
    }
    std::cerr << "warning: assumptions not certified, proceeding because of --force\n";
  }
  const Synthesis s = synthesize(l.m, steps);
  const TimeGrid<double>& grid = s.cons.profile.grid();
  write_csv(dir / "riccati_P.csv", path_table("P", s.bundle.P, grid));
  write_csv(dir / "riccati_K.csv", path_table("K", s.bundle.K, grid));
  if (s.bundle.Ptilde)
    write_csv(dir / "riccati_Ptilde.csv", path_table("Ptilde", *s.bundle.Ptilde, grid));
  else
    std::cerr << "warning: P-tilde unavailable (" << s.bundle.ptilde_failure << "); no drift law written\n";
  write_csv(dir / "consistency.csv", consistency_table(s.cons.profile));
  const ControlLaw law = build_decentralized_law(l.m, s.bundle, s.cons.profile);
  write_json(dir / "law.json", s.bundle.Ptilde ? law_json(law, build_worstcase_law(l.m, s.bundle, s.cons.profile))
                                               : law_json(law, DriftLaw()));
  if (detect_z) {
    if (!l.m->horizon.is_finite()) throw UsageError("--detect-z-blowup needs a finite horizon");
    write_json(dir / "z_blowup.json", to_json(detect_Z_blowup(l.m, s.bundle, l.m->horizon.T)));
  }
  return kOk;
}

struct SimOptions {
  Index N = 64;
  Index replications = 64;
  double dt = 0.0;
  std::vector<Index> Ns{8, 16, 32, 64, 128};
  std::vector<Index> gap_Ns{2, 4, 8};
};

int cmd_simulate(const Common& c, const SimOptions& o) {
  const Index steps = c.steps ? c.steps : 200;
  const std::uint64_t seed = resolve_seed(c);
  const Loaded l = load(c);
  const fs::path dir = prepare_out(c, "simulate N=" + std::to_string(o.N) + " replications=" +
                                          std::to_string(o.replications) + " dt=" + format_double(o.dt),
                                   seed, steps, l.bytes);
  const Synthesis s = synthesize(l.m, steps);
  SimConfig cfg;
  cfg.N = o.N;
  cfg.replications = o.replications;
  cfg.dt = o.dt;
  cfg.seed = seed;
  const SimResult r = simulate(l.m, build_decentralized_law(l.m, s.bundle, s.cons.profile),
                               build_worstcase_law(l.m, s.bundle, s.cons.profile), cfg);
  write_csv(dir / "costs.csv", costs_table(r));
  SweepReport one;
  one.rows.push_back({o.N, r.error_sup, r.error_sup_stderr});
  write_csv(dir / "meanfield_error.csv", meanfield_error_table(one));
  const CostStats cs = evaluate_social_cost(r);
  std::cout << "social cost per agent " << format_double(cs.mean) << " +- " << format_double(cs.std_error)
            << "; sup mean-field error " << format_double(r.error_sup) << '\n';
  return kOk;
}

std::string join(const std::vector<Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

int cmd_sweep(const Common& c, const SimOptions& o) {
  if (o.Ns.size() < 3) throw UsageError("sweep needs at least three values of N");
  const Index steps = c.steps ? c.steps : 200;
  const std::uint64_t seed = resolve_seed(c);
  const Loaded l = load(c);
  const fs::path dir = prepare_out(c, "sweep Ns=" + join(o.Ns) + " gap_Ns=" + join(o.gap_Ns) + " replications=" +
                                          std::to_string(o.replications) + " dt=" + format_double(o.dt),
                                   seed, steps, l.bytes);
  const Synthesis s = synthesize(l.m, steps);
  SimConfig cfg;
  cfg.replications = o.replications;
  cfg.dt = o.dt;
  cfg.seed = seed;
  const SweepReport rep = meanfield_error_sweep(l.m, build_decentralized_law(l.m, s.bundle, s.cons.profile),
                                                build_worstcase_law(l.m, s.bundle, s.cons.profile), o.Ns, cfg);
  write_json(dir / "sweep_report.json", to_json(rep));
  write_csv(dir / "meanfield_error.csv", meanfield_error_table(rep));
  bool ok = !rep.degenerate && rep.slope >= -1.3 && rep.slope <= -0.7;
  std::cout << "mean-field slope " << format_double(rep.slope) << '\n';

  if (l.m->horizon.is_finite() && !o.gap_Ns.empty()) {
    const std::vector<GapRow> rows = optimality_gap_sweep(l.m, s.bundle, s.cons.profile, o.gap_Ns);
    write_csv(dir / "gap_table.csv", gap_table(rows));
    double lo = INFINITY, hi = 0.0;
    for (const auto& r : rows) {
      lo = std::min(lo, r.gap_sqrtN);
      hi = std::max(hi, r.gap_sqrtN);
    }
    const double ratio = lo > 0 ? hi / lo : INFINITY;
    std::cout << "gap*sqrt(N) max/min " << format_double(ratio) << '\n';
    ok = ok && ratio <= 3.0;
  } else if (!l.m->horizon.is_finite()) {
    std::cerr << "note: optimality gap oracle needs a finite horizon; gap_table.csv not written\n";
  }
  return ok ? kOk : kFailed;
}

int cmd_verify(int only) {
  std::vector<CriterionResult> results;
  if (only > 0) {
    if (only > kCriteriaCount) throw UsageError("criterion must be in 1.." + std::to_string(kCriteriaCount));
    results.push_back(run_criterion(only));
  } else {
    results = run_acceptance();
  }
  bool ok = true;
  for (const auto& r : results) {
    std::cout << format_result(r) << '\n';
    ok = ok && r.passed;
  }
  return ok ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust mean-field LQ social control: certificates, synthesis, simulation"};
  app.require_subcommand(1);

  Common c;
  SimOptions so;
  bool force = false, detect_z = false;
  int only = 0;
  std::uint64_t seed_value = 0;

  auto add_common = [&](CLI::App* sub, bool seeded) {
    sub->add_option("scenario", c.scenario, "Scenario JSON file")->required();
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--steps", c.steps, "Time grid steps")->check(CLI::PositiveNumber);
    sub->add_option("--horizon-override", c.horizon_override, "finite:T or infinite:rho");
    if (seeded) sub->add_option("--seed", seed_value, "Random seed (default: MFG_SEED, then 0)");
  };

  auto* check = app.add_subcommand("check", "Certify the convexity assumptions");
  add_common(check, false);
  auto* synth = app.add_subcommand("synthesize", "Riccati paths, consistency profile and control law");
  add_common(synth, false);
  synth->add_flag("--force", force, "Proceed when assumptions are not certified");
  synth->add_flag("--detect-z-blowup", detect_z, "Also locate the blow-up of the forward Z equation");
  auto* sim = app.add_subcommand("simulate", "Monte Carlo run of the closed loop");
  add_common(sim, true);
  sim->add_option("-N,--agents", so.N, "Number of agents")->check(CLI::PositiveNumber);
  sim->add_option("--replications", so.replications)->check(CLI::PositiveNumber);
  sim->add_option("--dt", so.dt, "Simulation step, a multiple of the grid step");
  auto* sweep = app.add_subcommand("sweep", "Mean-field error and optimality gap against N");
  add_common(sweep, true);
  sweep->add_option("--Ns", so.Ns, "Agent counts for the mean-field sweep")->delimiter(',');
  sweep->add_option("--gap-Ns", so.gap_Ns, "Agent counts for the optimality gap")->delimiter(',');
  sweep->add_option("--replications", so.replications)->check(CLI::PositiveNumber);
  sweep->add_option("--dt", so.dt, "Simulation step, a multiple of the grid step");
  auto* verify = app.add_subcommand("verify-paper-example", "Run the acceptance criteria on the reference example");
  verify->add_option("--criterion", only, "Run a single criterion");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  for (auto* sub : {sim, sweep})
    if (sub->parsed() && sub->count("--seed")) c.seed = seed_value;

  try {
    if (check->parsed()) return cmd_check(c);
    if (synth->parsed()) return cmd_synthesize(c, force, detect_z);
    if (sim->parsed()) return cmd_simulate(c, so);
    if (sweep->parsed()) return cmd_sweep(c, so);
    if (verify->parsed()) return cmd_verify(only);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ModelError& e) {
    std::cerr << "scenario error" << (e.field().empty() ? "" : " in " + e.field()) << ": " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kUsage;
}
