// adaprice: run, integrate, verify and sweep price-update scenarios.
//
// Exit codes: 0 success (also when max_iterations is hit), 1 schema or usage
// error, 2 numerical failure, 3 a verify check failed.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "adaprice/analysis.hpp"
#include "adaprice/report_io.hpp"
#include "adaprice/scenario_io.hpp"

namespace fs = std::filesystem;
using namespace adaprice;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSchema = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitVerify = 3;

struct Options {
  std::string scenario_path;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> tolerance;
  std::optional<std::int64_t> max_iter;
  double step = 0.01;
  double t_end = 20.0;
  bool quiet = false;
  std::string parameter;
  std::vector<double> values;
  std::string command_line;
};

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::schema, path, "cannot open scenario file");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream s;
  for (unsigned int i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::invalid_argument, path.string(), "cannot write output file");
  out << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Scenario document with command-line overrides applied before parsing, so
/// seeded fields are redrawn from an overridden seed.
struct LoadedScenario {
  std::string raw;
  Json doc;
  Scenario scenario;
};

LoadedScenario load(const Options& opt) {
  std::string raw = read_bytes(opt.scenario_path);
  Json doc;
  try {
    doc = Json::parse(raw);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::schema, opt.scenario_path, e.what());
  }
  if (opt.seed) doc["seed"] = *opt.seed;
  if (opt.tolerance) doc["tolerance"] = *opt.tolerance;
  if (opt.max_iter) doc["max_iterations"] = *opt.max_iter;
  Scenario s = parse_scenario(doc);
  return {std::move(raw), std::move(doc), std::move(s)};
}

/// Writes the scenario copy and manifest.json next to the other outputs.
void write_manifest(const Options& opt, const LoadedScenario& ls, const std::string& started,
                    std::vector<std::string> outputs) {
  const fs::path dir(opt.out);
  write_text(dir / "scenario.json", ls.raw);
  outputs.push_back("scenario.json");
  json overrides = json::object();
  if (opt.seed) overrides["seed"] = *opt.seed;
  if (opt.tolerance) overrides["tolerance"] = *opt.tolerance;
  if (opt.max_iter) overrides["max_iterations"] = *opt.max_iter;
  json m;
  m["scenario_path"] = opt.scenario_path;
  m["scenario_hash"] = "sha256:" + sha256_hex(ls.raw);
  m["scenario_copy"] = "scenario.json";
  m["engine_version"] = ADAPRICE_VERSION;
  m["seed"] = ls.scenario.seed();
  m["overrides"] = overrides;
  m["started_utc"] = started;
  m["finished_utc"] = utc_now();
  m["command_line"] = opt.command_line;
  outputs.push_back("manifest.json");
  m["outputs"] = outputs;
  write_text(dir / "manifest.json", dump(m));
}

std::string format_price(const PriceVector& p) {
  std::string s = "[";
  for (Index t = 0; t < p.size(); ++t) s += (t ? ", " : "") + format_number(p[t]);
  return s + "]";
}

void write_run_outputs(const fs::path& dir, const Scenario& s, const RunResult& run) {
  fs::create_directories(dir);
  std::ostringstream trace;
  write_trace_csv(trace, run.records, s.horizon());
  write_text(dir / "trace.csv", trace.str());
  write_text(dir / "result.json", dump(equilibrium_report(s, run)));
}

int cmd_run(const Options& opt) {
  const std::string started = utc_now();
  const LoadedScenario ls = load(opt);
  const Scenario& s = ls.scenario;
  const RunResult run = run_discrete(s);
  write_run_outputs(opt.out, s, run);
  write_manifest(opt, ls, started, {"trace.csv", "result.json"});
  if (run.stop_reason == StopReason::numerical_error) {
    std::cerr << "numerical failure: " << run.error_message << "\n";
    return kExitNumerical;
  }
  if (!opt.quiet) {
    std::cout << (run.converged ? "converged" : "not converged") << " iterations=" << run.iterations_used
              << " residual=" << format_number(run.final_residual)
              << " welfare=" << format_number(social_welfare(s, run.final_profiles));
    if (s.horizon() <= 8) std::cout << " price=" << format_price(run.final_price);
    std::cout << "\n";
  }
  return kExitOk;
}

/// Lyapunov functions that apply to the scenario, keyed by column name.
std::vector<std::pair<std::string, LyapunovKind>> applicable_lyapunov(const Scenario& s) {
  std::vector<std::pair<std::string, LyapunovKind>> kinds;
  if (!s.all_users_quadratic()) return kinds;
  if (s.horizon() == 1) kinds.emplace_back("scalar", LyapunovKind::scalar_integral);
  if (s.system_cost().is_quadratic()) kinds.emplace_back("quadratic", LyapunovKind::quadratic);
  if (classify(s) == Regime::strictly_convex) kinds.emplace_back("bregman", LyapunovKind::bregman);
  return kinds;
}

int cmd_ode(const Options& opt) {
  const std::string started = utc_now();
  const LoadedScenario ls = load(opt);
  const Scenario& s = ls.scenario;
  const OdeTrajectory traj = integrate_ode(s, s.initial_price(), opt.step, opt.t_end);
  std::vector<std::pair<std::string, std::vector<double>>> columns;
  const auto kinds = applicable_lyapunov(s);
  if (!kinds.empty()) {
    const PriceVector p_star = reference_price(s).price;
    for (const auto& [name, kind] : kinds) columns.emplace_back(name, lyapunov_descent_check(s, traj, kind, p_star).values);
  }
  fs::create_directories(opt.out);
  std::ostringstream csv;
  write_ode_csv(csv, traj, columns);
  write_text(fs::path(opt.out) / "ode_trace.csv", csv.str());
  write_manifest(opt, ls, started, {"ode_trace.csv"});
  if (traj.aborted) {
    std::cerr << "numerical failure: " << traj.abort_reason << "\n";
    return kExitNumerical;
  }
  if (!opt.quiet)
    std::cout << "t_end=" << format_number(traj.times.back()) << " steps=" << traj.times.size() - 1
              << " residual=" << format_number(residual(s, traj.prices.back())) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// verify

struct CheckRow {
  std::string name;
  std::string status;  // PASS, FAIL or SKIP
  std::string detail;
  json data;
};

/// Price box around the run's trajectory, used to sample monotonicity pairs.
SamplerBox price_box(const Scenario& s, const RunResult& run) {
  Vec lo = s.initial_price().values();
  Vec hi = lo;
  for (const auto& r : run.records) {
    lo = lo.cwiseMin(r.price.values());
    hi = hi.cwiseMax(r.price.values());
  }
  const Vec pad = ((hi - lo).array() * 0.5 + 0.5).matrix();
  return {lo - pad, hi + pad, s.seed()};
}

/// Loads spanned by the initial and final aggregates, padded by one unit.
SamplerBox load_box(const Scenario& s, const RunResult& run) {
  const Vec& first = run.records.front().aggregate.values();
  const Vec last = aggregate(run.final_profiles).values();
  return {first.cwiseMin(last).array() - 1.0, first.cwiseMax(last).array() + 1.0, s.seed() + 1};
}

/// Central differences against the analytic gradient, as error relative to
/// max(1, |gradient|_inf).
CheckRow gradient_row(const Scenario& s, const SamplerBox& box) {
  constexpr int kPoints = 100;
  constexpr double kStep = 1e-5;
  constexpr double kTolerance = 1e-5;
  double worst = 0.0;
  for (int j = 0; j < kPoints; ++j) {
    std::mt19937_64 rng(mix_seed(box.seed + static_cast<std::uint64_t>(j)));
    Vec z(s.horizon());
    for (Index t = 0; t < z.size(); ++t) z[t] = box.lo[t] + (box.hi[t] - box.lo[t]) * unit_uniform(rng);
    const AggregateLoad load(z);
    const double scale = std::max(1.0, inf_norm(externality(s.system_cost(), load).values()));
    worst = std::max(worst, finite_diff_gradient_check(s.system_cost(), load, kStep) / scale);
  }
  return {"gradient_check", worst <= kTolerance ? "PASS" : "FAIL", "max relative error " + format_number(worst),
          {{"points", kPoints}, {"max_relative_error", worst}, {"tolerance", kTolerance}}};
}

CheckRow monotonicity_row(const Scenario& s, const SamplerBox& prices, const SamplerBox& loads) {
  constexpr std::int64_t kPairs = 500;
  json data = json::object();
  std::int64_t violations = 0;
  auto probe = [&](const std::string& name, const ProbeTarget& target, const SamplerBox& box) {
    const MonotonicityReport r = monotonicity_probe(target, s, box, kPairs);
    violations += r.violations;
    data[name] = to_json(r);
  };
  for (std::size_t i = 0; i < s.user_count(); ++i)
    probe("user:" + s.users()[i].id(), ProbeTarget::single_user(i), prices);
  probe("aggregate", ProbeTarget::aggregate(), prices);
  probe("externality", ProbeTarget::externality(), loads);
  return {"monotonicity", violations == 0 ? "PASS" : "FAIL", std::to_string(violations) + " violations", data};
}

CheckRow analytic_row(const Scenario& s, const RunResult& run) {
  constexpr double kTolerance = 1e-4;
  if (!s.is_linear_quadratic()) return {"analytic_vs_iterated", "SKIP", "no closed form", json()};
  const PriceVector p_star = analytic_fixed_point(s);
  const double err = inf_norm(run.final_price.values() - p_star.values());
  return {"analytic_vs_iterated", err <= kTolerance ? "PASS" : "FAIL", "max price error " + format_number(err),
          {{"analytic_price", to_json(p_star.values())}, {"max_abs_error", err}, {"tolerance", kTolerance}}};
}

CheckRow alignment_row(const Scenario& s, const RunResult& run) {
  if (!run.converged) return {"alignment", "FAIL", "run did not converge", json()};
  const AlignmentReport r = alignment_check(s, run);
  std::string detail = r.oracle + " gap " + format_number(r.gap) + " bound " + format_number(r.bound);
  bool pass = r.pass;
  if (r.oracle == "enumeration") {
    pass = pass && r.max_profile_distance == 0.0;
    detail += " profile distance " + format_number(r.max_profile_distance);
  }
  return {"alignment", pass ? "PASS" : "FAIL", detail, to_json(r)};
}

CheckRow welfare_row(const RunResult& run) {
  const double initial = run.records.front().social_welfare;
  const double last = run.records.back().social_welfare;
  const double drop = initial != 0.0 ? (initial - last) / std::abs(initial) : 0.0;
  return {"welfare_decrease", last < initial ? "PASS" : "FAIL",
          format_number(initial) + " -> " + format_number(last),
          {{"initial", initial}, {"final", last}, {"relative_drop", drop}}};
}

std::vector<CheckRow> descent_rows(const Scenario& s, const Options& opt, json& tables) {
  std::vector<CheckRow> rows;
  const auto kinds = applicable_lyapunov(s);
  if (kinds.empty()) {
    rows.push_back({"lyapunov_descent", "SKIP", "no Lyapunov function for this class", json()});
    return rows;
  }
  const PriceVector p_star = reference_price(s).price;
  const OdeTrajectory traj = integrate_ode(s, s.initial_price(), opt.step, opt.t_end);
  for (const auto& [name, kind] : kinds) {
    const DescentReport r = lyapunov_descent_check(s, traj, kind, p_star);
    rows.push_back({"lyapunov_descent:" + name, r.pass ? "PASS" : "FAIL",
                    "max increase " + format_number(r.max_increase) + " allowed " + format_number(r.tolerance),
                    to_json(r)});
    std::ostringstream table;
    write_descent_table(table, traj, r);
    tables[name] = table.str();
  }
  return rows;
}

int cmd_verify(const Options& opt, bool write_outputs) {
  const std::string started = utc_now();
  const LoadedScenario ls = load(opt);
  const Scenario& s = ls.scenario;
  const Regime regime = classify(s);
  const RunResult run = run_discrete(s);
  if (run.stop_reason == StopReason::numerical_error) {
    std::cerr << "numerical failure: " << run.error_message << "\n";
    return kExitNumerical;
  }

  std::vector<CheckRow> rows;
  rows.push_back(gradient_row(s, load_box(s, run)));
  rows.push_back(monotonicity_row(s, price_box(s, run), load_box(s, run)));
  rows.push_back(analytic_row(s, run));
  json tables = json::object();
  if (alignment_oracle_available(s)) {
    rows.push_back(alignment_row(s, run));
  } else {
    rows.push_back({"alignment", "SKIP", "no exhaustive oracle at this size", json()});
    if (s.has_water_heaters()) rows.push_back(welfare_row(run));
  }
  for (auto& r : descent_rows(s, opt, tables)) rows.push_back(std::move(r));

  std::vector<std::string> failed;
  for (const auto& r : rows)
    if (r.status == "FAIL") failed.push_back(r.name);

  if (!opt.quiet) {
    std::cout << "regime: " << to_string(regime) << "\n";
    if (regime == Regime::outside_proven)
      std::cout << "note: outside proven regime; convergence here is empirical\n";
    for (const auto& r : rows) std::cout << std::left << std::setw(28) << r.name << std::setw(6) << r.status << r.detail << "\n";
  }
  if (write_outputs) {
    fs::create_directories(opt.out);
    json report;
    report["regime"] = std::string(to_string(regime));
    report["checks"] = json::array();
    for (const auto& r : rows)
      report["checks"].push_back({{"name", r.name}, {"status", r.status}, {"detail", r.detail}, {"data", r.data}});
    std::vector<std::string> outputs{"verify.json"};
    write_text(fs::path(opt.out) / "verify.json", dump(report));
    for (const auto& [name, table] : tables.items()) {
      const std::string file = "descent_" + name + ".csv";
      write_text(fs::path(opt.out) / file, table.get<std::string>());
      outputs.push_back(file);
    }
    write_manifest(opt, ls, started, outputs);
  }
  if (!failed.empty()) {
    std::string names;
    for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
    std::cerr << "verify failed: " << names << "\n";
    return kExitVerify;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

int cmd_sweep(const Options& opt) {
  const std::string started = utc_now();
  if (opt.values.empty()) {
    std::cerr << "schema error: sweep needs at least one value for " << opt.parameter << "\n";
    return kExitSchema;
  }
  const LoadedScenario ls = load(opt);
  {
    Json probe = ls.doc;
    scalar_at(probe, opt.parameter);
  }
  const fs::path dir(opt.out);
  fs::create_directories(dir);
  std::ostringstream csv;
  const Index horizon = ls.scenario.horizon();
  csv << "index,value,converged,iterations,final_residual,social_welfare,peak";
  for (Index t = 1; t <= horizon; ++t) csv << ",p_" << t;
  csv << '\n';
  std::vector<std::string> outputs{"sweep.csv"};
  bool numerical_failure = false;
  for (std::size_t i = 0; i < opt.values.size(); ++i) {
    Json doc = ls.doc;
    scalar_at(doc, opt.parameter) = opt.values[i];
    const Scenario s = parse_scenario(doc);
    const RunResult run = run_discrete(s);
    const std::string sub = "value_" + std::to_string(i);
    write_run_outputs(dir / sub, s, run);
    outputs.push_back(sub + "/trace.csv");
    outputs.push_back(sub + "/result.json");
    if (run.stop_reason == StopReason::numerical_error) {
      numerical_failure = true;
      std::cerr << "numerical failure at " << opt.parameter << "=" << format_number(opt.values[i]) << ": "
                << run.error_message << "\n";
      continue;
    }
    const PriceEvaluation ev = evaluate_price(s, run.final_price);
    csv << i << ',' << format_number(opt.values[i]) << ',' << (run.converged ? 1 : 0) << ',' << run.iterations_used
        << ',' << format_number(run.final_residual) << ',' << format_number(ev.social_welfare()) << ','
        << format_number(peak_metrics(ev.aggregate).peak);
    for (Index t = 0; t < horizon; ++t) csv << ',' << format_number(run.final_price[t]);
    csv << '\n';
    if (!opt.quiet)
      std::cout << opt.parameter << "=" << format_number(opt.values[i]) << " "
                << (run.converged ? "converged" : "not converged") << " iterations=" << run.iterations_used
                << " residual=" << format_number(run.final_residual) << "\n";
  }
  write_text(dir / "sweep.csv", csv.str());
  write_manifest(opt, ls, started, outputs);
  return numerical_failure ? kExitNumerical : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 0; i < argc; ++i) opt.command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Adaptive pricing: run, integrate, verify and sweep scenarios"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", ADAPRICE_VERSION);

  std::string out_flag;
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  std::int64_t max_iter = 0;
  auto* out_opt = app.add_option("--out", out_flag, "Output directory (default: out)");
  auto* seed_opt = app.add_option("--seed-override", seed, "Replace the scenario seed");
  auto* tol_opt = app.add_option("--tolerance", tolerance, "Replace the convergence tolerance")->check(CLI::PositiveNumber);
  auto* iter_opt = app.add_option("--max-iter", max_iter, "Replace max_iterations")->check(CLI::PositiveNumber);
  app.add_option("--step", opt.step, "ODE step size")->check(CLI::PositiveNumber);
  app.add_option("--t-end", opt.t_end, "ODE horizon")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", opt.quiet, "Suppress the summary");

  auto* run = app.add_subcommand("run", "Iterate the discrete price update");
  auto* ode = app.add_subcommand("ode", "Integrate the continuous-time dynamics");
  auto* verify = app.add_subcommand("verify", "Run the correctness checks and print a table");
  auto* sweep = app.add_subcommand("sweep", "Run once per value of a scalar scenario field");
  for (auto* sub : {run, ode, verify, sweep})
    sub->add_option("scenario", opt.scenario_path, "Scenario JSON file")->required();
  sweep->add_option("parameter", opt.parameter, "Dotted path to a numeric field, e.g. schedule.c")->required();
  sweep->add_option("values", opt.values, "Values to assign");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitSchema;
  }
  if (*out_opt) opt.out = out_flag;
  if (*seed_opt) opt.seed = seed;
  if (*tol_opt) opt.tolerance = tolerance;
  if (*iter_opt) opt.max_iter = max_iter;

  try {
    if (*run) return cmd_run(opt);
    if (*ode) return cmd_ode(opt);
    if (*verify) return cmd_verify(opt, out_opt->count() > 0);
    return cmd_sweep(opt);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::schema:
      case ErrorKind::config:
      case ErrorKind::dimension: return kExitSchema;
      default: return kExitNumerical;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
