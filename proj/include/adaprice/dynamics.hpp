#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adaprice/core.hpp"
#include "adaprice/scenario.hpp"

namespace adaprice {

/// p <- (1 - beta) p + beta e
inline PriceVector discrete_update(const PriceVector& p, const PriceVector& e, double beta) {
  if (p.size() != e.size()) throw Error(ErrorKind::dimension, "externality", "length differs from price");
  if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorKind::invalid_argument, "beta", "must lie in (0, 1]");
  return PriceVector(p.values() + beta * (e.values() - p.values()));
}

/// Everything the operator observes at one broadcast price.
struct PriceEvaluation {
  std::vector<ConsumptionProfile> profiles;
  AggregateLoad aggregate;
  PriceVector externality;
  double residual = 0.0;
  double user_cost_sum = 0.0;
  double system_cost = 0.0;
  double social_welfare() const { return user_cost_sum + system_cost; }
};

inline PriceEvaluation evaluate_price(const Scenario& scenario, const PriceVector& price) {
  PriceEvaluation ev;
  ev.profiles = best_responses(scenario, price);
  ev.aggregate = aggregate(ev.profiles);
  ev.externality = externality(scenario.system_cost(), ev.aggregate);
  ev.residual = inf_norm(ev.externality.values() - price.values());
  for (std::size_t i = 0; i < ev.profiles.size(); ++i) ev.user_cost_sum += user_cost(scenario.users()[i], ev.profiles[i]);
  ev.system_cost = cost(scenario.system_cost(), ev.aggregate);
  return ev;
}

/// e(x*(p)) - p, the right-hand side of the continuous price dynamics.
inline PriceVector ode_rhs(const Scenario& scenario, const PriceVector& price) {
  const auto profiles = best_responses(scenario, price);
  const auto e = externality(scenario.system_cost(), aggregate(profiles));
  return PriceVector(e.values() - price.values());
}

/// inf-norm fixed-point distance of price p.
inline double residual(const Scenario& scenario, const PriceVector& price) {
  return inf_norm(ode_rhs(scenario, price).values());
}

// ---------------------------------------------------------------------------
// Discrete iteration

enum class StopReason { tolerance_met, max_iterations, numerical_error };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::tolerance_met: return "tolerance_met";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::numerical_error: return "numerical_error";
  }
  return "unknown";
}

struct RunResult {
  std::vector<IterationRecord> records;
  bool converged = false;
  PriceVector final_price;
  std::vector<ConsumptionProfile> final_profiles;
  std::int64_t iterations_used = 0;
  StopReason stop_reason = StopReason::max_iterations;
  double final_residual = 0.0;      // recomputed at final_price
  double final_price_change = 0.0;  // relative size of the last applied update
  std::string error_message;
};

namespace detail {
inline IterationRecord make_record(std::int64_t k, double beta, const PriceVector& p, const PriceEvaluation& ev) {
  IterationRecord r;
  r.k = k;
  r.beta = beta;
  r.price = p;
  r.aggregate = ev.aggregate;
  r.externality = ev.externality;
  r.residual = ev.residual;
  r.user_cost_sum = ev.user_cost_sum;
  r.system_cost = ev.system_cost;
  r.social_welfare = ev.social_welfare();
  return r;
}
}  // namespace detail

/// Runs p_{k+1} = (1 - beta_k) p_k + beta_k e(x*(p_k)) from the scenario's
/// initial price. Stops once the fixed-point residual |e - p|_inf falls to
/// the tolerance; otherwise after max_iterations updates. The final residual
/// is always recomputed at the returned price.
inline RunResult run_discrete(const Scenario& scenario) {
  RunResult out;
  PriceVector p = scenario.initial_price();
  out.records.reserve(static_cast<std::size_t>(std::min<std::int64_t>(scenario.max_iterations(), 1 << 16)));

  try {
    for (std::int64_t k = 1; k <= scenario.max_iterations(); ++k) {
      const double beta = scenario.schedule()(k);
      PriceEvaluation ev = evaluate_price(scenario, p);
      out.records.push_back(detail::make_record(k, beta, p, ev));
      if (ev.residual <= scenario.tolerance()) {
        out.converged = true;
        out.stop_reason = StopReason::tolerance_met;
        out.final_price = p;
        out.final_profiles = std::move(ev.profiles);
        out.final_residual = ev.residual;
        break;
      }
      PriceVector next = discrete_update(p, ev.externality, beta);
      out.final_price_change = inf_norm(next.values() - p.values()) / std::max(1.0, inf_norm(p.values()));
      out.records.back().price_change = out.final_price_change;
      p = std::move(next);
    }
    if (!out.converged) {
      PriceEvaluation ev = evaluate_price(scenario, p);
      out.final_price = p;
      out.final_profiles = std::move(ev.profiles);
      out.final_residual = ev.residual;
      out.converged = ev.residual <= scenario.tolerance();
      out.stop_reason = out.converged ? StopReason::tolerance_met : StopReason::max_iterations;
    }
  } catch (const Error& e) {
    out.converged = false;
    out.stop_reason = StopReason::numerical_error;
    out.final_price = p;
    out.error_message = e.what();
  }
  out.iterations_used = static_cast<std::int64_t>(out.records.size());
  return out;
}

// ---------------------------------------------------------------------------
// Continuous dynamics

struct OdeTrajectory {
  std::vector<double> times;
  std::vector<PriceVector> prices;
  std::vector<double> lyapunov_values;  // empty unless a Lyapunov function was supplied
  bool aborted = false;
  std::string abort_reason;
  double step = 0.0;
};

/// One classical fourth-order Runge-Kutta step of y' = f(y).
template <class Rhs>
Vec rk4_step(Rhs&& f, const Vec& y, double h) {
  const Vec k1 = f(y);
  const Vec k2 = f(Vec(y + 0.5 * h * k1));
  const Vec k3 = f(Vec(y + 0.5 * h * k2));
  const Vec k4 = f(Vec(y + h * k3));
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

using LyapunovFn = std::function<double(const PriceVector&)>;

/// Fixed-step RK4 on p' = e(x*(p)) - p, sampled at every step. A final
/// shorter step lands exactly on t_end when t_end is not a multiple of h.
inline OdeTrajectory integrate_ode(const Scenario& scenario, const PriceVector& p0, double step_h, double t_end,
                                   const LyapunovFn& lyapunov = {}) {
  if (!(step_h > 0.0) || !(t_end > 0.0) || step_h > t_end)
    throw Error(ErrorKind::invalid_argument, "ode", "need 0 < h <= t_end");
  if (p0.size() != scenario.horizon()) throw Error(ErrorKind::dimension, "p0", "length differs from horizon");

  OdeTrajectory traj;
  traj.step = step_h;
  const auto full_steps = static_cast<std::int64_t>(std::floor(t_end / step_h + 1e-9));
  const double remainder = t_end - static_cast<double>(full_steps) * step_h;
  const bool tail = remainder > 1e-12 * t_end;

  auto rhs = [&](const Vec& y) -> Vec { return ode_rhs(scenario, PriceVector(y)).values(); };
  auto push = [&](double t, PriceVector p) {
    if (lyapunov) traj.lyapunov_values.push_back(lyapunov(p));
    traj.times.push_back(t);
    traj.prices.push_back(std::move(p));
  };

  try {
    push(0.0, p0);
    Vec y = p0.values();
    for (std::int64_t i = 1; i <= full_steps + (tail ? 1 : 0); ++i) {
      const bool last_partial = tail && i == full_steps + 1;
      const double h = last_partial ? remainder : step_h;
      y = rk4_step(rhs, y, h);
      if (!y.allFinite()) throw Error(ErrorKind::numerical, "ode", "state became non-finite");
      push(last_partial ? t_end : static_cast<double>(i) * step_h, PriceVector(y));
    }
  } catch (const Error& e) {
    traj.aborted = true;
    traj.abort_reason = e.what();
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Linear-quadratic equilibrium

/// Sum over users of A_i^{-1} as a dense T x T matrix.
inline Mat summed_inverse_weight(const Scenario& scenario) {
  const Index horizon = scenario.horizon();
  Mat sum = Mat::Zero(horizon, horizon);
  const Mat eye = Mat::Identity(horizon, horizon);
  for (const auto& u : scenario.users()) {
    const auto* q = u.quadratic();
    if (q == nullptr) throw Error(ErrorKind::unsupported, "user " + u.id(), "not a quadratic user");
    for (Index c = 0; c < horizon; ++c) sum.col(c) += q->solve_weight(eye.col(c));
  }
  return sum;
}

/// Unique equilibrium of the linear-quadratic class:
/// (I + B sum_i A_i^{-1}) p = B (sum_i setpoint_i + base_load), by a dense
/// LU solve.
/// The matrix is similar to I + B^{1/2} (sum A^{-1}) B^{1/2}, which is
/// positive definite, so the system is never singular.
inline PriceVector analytic_fixed_point(const Scenario& scenario) {
  if (!scenario.is_linear_quadratic())
    throw Error(ErrorKind::unsupported, "scenario",
                "closed-form equilibrium needs unbounded quadratic users and a quadratic system cost");
  const Index horizon = scenario.horizon();
  const Mat b = scenario.system_cost().quadratic_matrix();
  Vec setpoint_sum = Vec::Zero(horizon);
  for (const auto& u : scenario.users()) setpoint_sum += u.quadratic()->setpoint();
  const Mat m = Mat::Identity(horizon, horizon) + b * summed_inverse_weight(scenario);
  return PriceVector(m.partialPivLu().solve(b * setpoint_sum + scenario.system_cost().quadratic_offset()));
}

}  // namespace adaprice
