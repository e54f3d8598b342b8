#pragma once

#include <array>
#include <charconv>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaprice/analysis.hpp"
#include "adaprice/dynamics.hpp"

namespace adaprice {

/// Shortest decimal form that round-trips to the same double; identical
/// inputs always print identically.
inline std::string format_number(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline nlohmann::json to_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index t = 0; t < v.size(); ++t) a.push_back(v[t]);
  return a;
}

/// Columns: k, beta, residual, social_welfare, system_cost, user_cost_sum,
/// p_1..p_T, z_1..z_T.
inline void write_trace_csv(std::ostream& out, const std::vector<IterationRecord>& records, Index horizon) {
  out << "k,beta,residual,social_welfare,system_cost,user_cost_sum";
  for (Index t = 1; t <= horizon; ++t) out << ",p_" << t;
  for (Index t = 1; t <= horizon; ++t) out << ",z_" << t;
  out << '\n';
  for (const auto& r : records) {
    out << r.k << ',' << format_number(r.beta) << ',' << format_number(r.residual) << ','
        << format_number(r.social_welfare) << ',' << format_number(r.system_cost) << ','
        << format_number(r.user_cost_sum);
    for (Index t = 0; t < horizon; ++t) out << ',' << format_number(r.price[t]);
    for (Index t = 0; t < horizon; ++t) out << ',' << format_number(r.aggregate[t]);
    out << '\n';
  }
}

/// Columns: time, p_1..p_T, then one column per supplied Lyapunov series.
inline void write_ode_csv(std::ostream& out, const OdeTrajectory& traj,
                          const std::vector<std::pair<std::string, std::vector<double>>>& lyapunov) {
  out << "time";
  const Index horizon = traj.prices.empty() ? 0 : traj.prices.front().size();
  for (Index t = 1; t <= horizon; ++t) out << ",p_" << t;
  for (const auto& [name, _] : lyapunov) out << ",V_" << name;
  out << '\n';
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    out << format_number(traj.times[i]);
    for (Index t = 0; t < horizon; ++t) out << ',' << format_number(traj.prices[i][t]);
    for (const auto& [_, values] : lyapunov) out << ',' << format_number(values[i]);
    out << '\n';
  }
}

/// Two-column (time, V) table for plotting a descent check.
inline void write_descent_table(std::ostream& out, const OdeTrajectory& traj, const DescentReport& report) {
  out << "time,V\n";
  for (std::size_t i = 0; i < report.values.size(); ++i)
    out << format_number(traj.times[i]) << ',' << format_number(report.values[i]) << '\n';
}

/// Converged price, induced profiles and welfare, plus the same quantities
/// at the initial price for comparison.
inline nlohmann::json equilibrium_report(const Scenario& scenario, const RunResult& run) {
  nlohmann::json j;
  j["converged"] = run.converged;
  j["stop_reason"] = std::string(to_string(run.stop_reason));
  j["iterations"] = run.iterations_used;
  j["final_residual"] = run.final_residual;
  j["final_price_change"] = run.final_price_change;
  j["tolerance"] = scenario.tolerance();
  j["regime"] = std::string(to_string(classify(scenario)));
  if (!run.error_message.empty()) j["error"] = run.error_message;
  j["final_price"] = to_json(run.final_price.values());
  if (run.final_profiles.size() == scenario.user_count()) {
    nlohmann::json profiles = nlohmann::json::array();
    for (std::size_t i = 0; i < run.final_profiles.size(); ++i)
      profiles.push_back({{"id", scenario.users()[i].id()}, {"values", to_json(run.final_profiles[i].values())}});
    j["profiles"] = profiles;
    const PriceEvaluation ev = evaluate_price(scenario, run.final_price);
    j["aggregate"] = to_json(ev.aggregate.values());
    j["user_cost_sum"] = ev.user_cost_sum;
    j["system_cost"] = ev.system_cost;
    j["social_welfare"] = ev.social_welfare();
    const PeakMetrics pm = peak_metrics(ev.aggregate);
    j["peak"] = pm.peak;
    j["mean_load"] = pm.mean;
    j["peak_to_mean"] = pm.peak_to_mean ? nlohmann::json(*pm.peak_to_mean) : nlohmann::json(nullptr);
  }
  if (!run.records.empty()) {
    const IterationRecord& first = run.records.front();
    const PeakMetrics pm = peak_metrics(first.aggregate);
    j["initial"] = {{"price", to_json(first.price.values())},
                    {"user_cost_sum", first.user_cost_sum},
                    {"system_cost", first.system_cost},
                    {"social_welfare", first.social_welfare},
                    {"peak", pm.peak},
                    {"peak_to_mean", pm.peak_to_mean ? nlohmann::json(*pm.peak_to_mean) : nlohmann::json(nullptr)}};
  }
  return j;
}

inline nlohmann::json to_json(const MonotonicityReport& r) {
  return {{"hypothesis", r.hypothesis == Monotone::decreasing ? "decreasing" : "increasing"},
          {"samples", r.samples},
          {"min_inner_product", r.min_inner_product},
          {"max_inner_product", r.max_inner_product},
          {"violations", r.violations},
          {"strict", r.strict}};
}

inline nlohmann::json to_json(const AlignmentReport& r) {
  return {{"oracle", r.oracle},
          {"equilibrium_welfare", r.equilibrium_welfare},
          {"oracle_welfare", r.oracle_welfare},
          {"gap", r.gap},
          {"bound", r.bound},
          {"max_profile_distance", r.max_profile_distance},
          {"pass", r.pass}};
}

inline nlohmann::json to_json(const DescentReport& r) {
  return {{"lyapunov", std::string(to_string(r.kind))},
          {"initial", r.initial},
          {"final", r.final},
          {"max_increase", r.max_increase},
          {"tolerance", r.tolerance},
          {"pass", r.pass}};
}

}  // namespace adaprice
