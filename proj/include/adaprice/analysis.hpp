#pragma once

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adaprice/core.hpp"
#include "adaprice/dynamics.hpp"
#include "adaprice/scenario.hpp"

namespace adaprice {

// ---------------------------------------------------------------------------
// Social welfare

/// sum_i f_i(x_i) + g(sum_i x_i)
inline double social_welfare(const Scenario& scenario, const std::vector<ConsumptionProfile>& profiles) {
  if (profiles.size() != scenario.user_count())
    throw Error(ErrorKind::dimension, "profiles",
                std::to_string(profiles.size()) + " profiles for " + std::to_string(scenario.user_count()) + " users");
  double total = 0.0;
  for (std::size_t i = 0; i < profiles.size(); ++i) total += user_cost(scenario.users()[i], profiles[i]);
  return total + cost(scenario.system_cost(), aggregate(profiles));
}

/// Largest eigenvalue bound of the Hessian of g; LSE uses
/// lambda * alpha * max eig(diag(s) - s s^T) <= lambda * alpha / 2.
inline double system_cost_curvature(const SystemCost& g) {
  if (const auto* lse = std::get_if<LSEPeakCost>(&g.model())) return 0.5 * lse->lambda() * lse->alpha();
  Eigen::SelfAdjointEigenSolver<Mat> eig(g.quadratic_matrix(), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

struct SocialOptimum {
  std::vector<ConsumptionProfile> profiles;
  double welfare = 0.0;
  double cell_bound = 0.0;  // grid optimum exceeds the true optimum by at most this
  std::int64_t evaluations = 0;
  std::optional<std::vector<ConsumptionProfile>> closed_form_profiles;
  std::optional<double> closed_form_welfare;
};

inline constexpr std::size_t kMaxGridCoordinates = 8;
inline constexpr double kMaxGridEvaluations = 2e7;

/// Closed-form social optimum of the linear-quadratic class:
/// x_i = setpoint_i - A_i^{-1} p* with p* the analytic equilibrium price.
inline std::vector<ConsumptionProfile> closed_form_social_opt(const Scenario& scenario) {
  const PriceVector p_star = analytic_fixed_point(scenario);
  return best_responses(scenario, p_star);
}

/// Exhaustive minimization of social welfare over a tensor grid. Quadratic
/// users take `points_per_axis` evenly spaced values per period in
/// [grid_lo_t, grid_hi_t] (plus their own bound values, and nothing outside
/// their box); water heaters take {0, heat_rate}. At most 8 continuous
/// coordinates, and at most kMaxGridEvaluations points overall.
inline SocialOptimum brute_force_social_opt(const Scenario& scenario, const Vec& grid_lo, const Vec& grid_hi,
                                            int points_per_axis) {
  const Index horizon = scenario.horizon();
  const std::size_t n_users = scenario.user_count();
  const std::size_t dims = n_users * static_cast<std::size_t>(horizon);
  std::size_t quadratic_users = 0;
  for (const auto& u : scenario.users()) quadratic_users += u.quadratic() != nullptr;
  if (quadratic_users * static_cast<std::size_t>(horizon) > kMaxGridCoordinates)
    throw Error(ErrorKind::unsupported, "brute_force_social_opt",
                "more than 8 continuous coordinates; use the linear-quadratic closed form instead");
  if (points_per_axis < 3) throw Error(ErrorKind::invalid_argument, "points_per_axis", "must be >= 3");
  if (grid_lo.size() != horizon || grid_hi.size() != horizon)
    throw Error(ErrorKind::dimension, "grid", "grid bounds must have length T");

  // Candidate values per coordinate (user-major).
  std::vector<std::vector<double>> axes(dims);
  double max_spacing = 0.0;
  std::size_t continuous_axes = 0;
  double max_user_curvature = 0.0;
  double total = 1.0;
  for (std::size_t i = 0; i < n_users; ++i) {
    const UserModel& user = scenario.users()[i];
    for (Index t = 0; t < horizon; ++t) {
      auto& axis = axes[i * static_cast<std::size_t>(horizon) + static_cast<std::size_t>(t)];
      if (const auto* wh = user.water_heater()) {
        axis = {0.0, wh->params().heat_rate};
      } else {
        const auto* q = user.quadratic();
        double lo = grid_lo[t];
        double hi = grid_hi[t];
        if (!(lo < hi)) throw Error(ErrorKind::invalid_argument, "grid", "need grid_lo < grid_hi");
        const double spacing = (hi - lo) / (points_per_axis - 1);
        max_spacing = std::max(max_spacing, spacing);
        ++continuous_axes;
        for (int j = 0; j < points_per_axis; ++j) axis.push_back(lo + spacing * j);
        if (q->bounds()) {
          const double blo = q->bounds()->lo[t];
          const double bhi = q->bounds()->hi[t];
          if (blo > lo && blo < hi) axis.push_back(blo);
          if (bhi > lo && bhi < hi) axis.push_back(bhi);
          std::erase_if(axis, [&](double v) { return v < blo || v > bhi; });
          std::sort(axis.begin(), axis.end());
        }
        if (axis.empty())
          throw Error(ErrorKind::invalid_argument, "grid", "grid misses the feasible box of user " + user.id());
        Eigen::SelfAdjointEigenSolver<Mat> eig(q->weight(), Eigen::EigenvaluesOnly);
        max_user_curvature = std::max(max_user_curvature, eig.eigenvalues().maxCoeff());
      }
      total *= static_cast<double>(axis.size());
    }
  }
  if (total > kMaxGridEvaluations)
    throw Error(ErrorKind::unsupported, "brute_force_social_opt",
                "grid has " + std::to_string(total) + " points; lower points_per_axis or use the closed form");

  std::vector<Vec> current(n_users, Vec::Zero(horizon));
  std::vector<std::size_t> odometer(dims, 0);
  for (std::size_t d = 0; d < dims; ++d) current[d / horizon][static_cast<Index>(d % horizon)] = axes[d][0];

  auto welfare_of = [&](const std::vector<Vec>& xs) {
    std::vector<ConsumptionProfile> ps;
    ps.reserve(n_users);
    for (const auto& x : xs) ps.emplace_back(x);
    return social_welfare(scenario, ps);
  };

  SocialOptimum best;
  best.welfare = std::numeric_limits<double>::infinity();
  std::vector<Vec> best_x = current;
  while (true) {
    const double w = welfare_of(current);
    ++best.evaluations;
    if (w < best.welfare) {
      best.welfare = w;
      best_x = current;
    }
    std::size_t d = 0;
    for (; d < dims; ++d) {
      if (++odometer[d] < axes[d].size()) {
        current[d / horizon][static_cast<Index>(d % horizon)] = axes[d][odometer[d]];
        break;
      }
      odometer[d] = 0;
      current[d / horizon][static_cast<Index>(d % horizon)] = axes[d][0];
    }
    if (d == dims) break;
  }
  for (auto& x : best_x) best.profiles.emplace_back(std::move(x));

  // Second-order bound: the nearest grid point sits within half a cell of
  // the continuous optimum in every free coordinate.
  const double curvature = max_user_curvature + static_cast<double>(n_users) * system_cost_curvature(scenario.system_cost());
  best.cell_bound = 0.5 * curvature * static_cast<double>(continuous_axes) * 0.25 * max_spacing * max_spacing;

  if (scenario.is_linear_quadratic()) {
    best.closed_form_profiles = closed_form_social_opt(scenario);
    best.closed_form_welfare = social_welfare(scenario, *best.closed_form_profiles);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Lyapunov functions

/// V(p) = -int_{p*}^{p} [e(x*(q)) - q] dq for T = 1, by adaptive Simpson
/// quadrature (absolute tolerance 1e-9, bisection depth at most 40).
inline double lyapunov_scalar(const Scenario& scenario, double p, double p_star, double abs_tol = 1e-9,
                              int max_depth = 40) {
  if (scenario.horizon() != 1) throw Error(ErrorKind::unsupported, "lyapunov_scalar", "needs T = 1");
  if (p == p_star) return 0.0;
  auto f = [&](double q) { return ode_rhs(scenario, PriceVector{q})[0]; };

  bool converged = true;
  std::function<double(double, double, double, double, double, double, double, int)> refine;
  refine = [&](double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) -> double {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    if (depth >= max_depth) {
      converged = false;
      return left + right + delta / 15.0;
    }
    return refine(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) + refine(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
  };

  const double a = p_star;
  const double b = p;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double integral = refine(a, b, fa, fm, fb, whole, abs_tol, 0);
  if (!converged) throw Error(ErrorKind::numerical, "lyapunov_scalar", "quadrature did not reach tolerance");
  return -integral;
}

/// V(p) = 1/2 (p - p*)^T B^{-1} (p - p*), via a Cholesky solve against B.
inline double lyapunov_quadratic(const PriceVector& p, const PriceVector& p_star, const Mat& b) {
  if (p.size() != p_star.size() || b.rows() != p.size() || b.cols() != p.size())
    throw Error(ErrorKind::dimension, "lyapunov_quadratic", "dimensions disagree");
  Eigen::LLT<Mat> llt(b);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::numerical, "lyapunov_quadratic", "B is not positive definite");
  const Vec d = p.values() - p_star.values();
  return 0.5 * d.dot(llt.solve(d));
}

/// Bregman-divergence Lyapunov function:
///   g(z(p)) - g(z*) - grad g(z*)^T (z(p) - z*) - sum_i (x_i(p) - x_i*)^T (p - p*)
/// with z(p) = sum_i x_i*(p) and z* = z(p*).
inline double lyapunov_bregman(const Scenario& scenario, const PriceVector& p, const PriceVector& p_star) {
  const auto xs = best_responses(scenario, p);
  const auto xs_star = best_responses(scenario, p_star);
  const AggregateLoad z = aggregate(xs);
  const AggregateLoad z_star = aggregate(xs_star);
  const SystemCost& g = scenario.system_cost();
  const Vec dz = z.values() - z_star.values();
  const Vec dp = p.values() - p_star.values();
  const double bregman = cost(g, z) - cost(g, z_star) - externality(g, z_star).values().dot(dz);
  double coupling = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) coupling += (xs[i].values() - xs_star[i].values()).dot(dp);
  return bregman - coupling;
}

enum class LyapunovKind { scalar_integral, quadratic, bregman };

inline std::string_view to_string(LyapunovKind k) {
  switch (k) {
    case LyapunovKind::scalar_integral: return "scalar_integral";
    case LyapunovKind::quadratic: return "quadratic";
    case LyapunovKind::bregman: return "bregman";
  }
  return "unknown";
}

inline LyapunovFn make_lyapunov(const Scenario& scenario, LyapunovKind kind, const PriceVector& p_star) {
  switch (kind) {
    case LyapunovKind::scalar_integral:
      return [&scenario, ps = p_star[0]](const PriceVector& p) { return lyapunov_scalar(scenario, p[0], ps); };
    case LyapunovKind::quadratic:
      return [b = scenario.system_cost().quadratic_matrix(), p_star](const PriceVector& p) {
        return lyapunov_quadratic(p, p_star, b);
      };
    case LyapunovKind::bregman:
      return [&scenario, p_star](const PriceVector& p) { return lyapunov_bregman(scenario, p, p_star); };
  }
  throw Error(ErrorKind::invalid_argument, "unknown Lyapunov kind");
}

struct DescentReport {
  LyapunovKind kind = LyapunovKind::quadratic;
  std::vector<double> values;  // one per trajectory sample
  double max_increase = 0.0;
  double tolerance = 0.0;      // 10 h^4 per step
  double initial = 0.0;
  double final = 0.0;
  bool pass = false;
};

/// Evaluates V along the trajectory and checks it never rises by more than
/// the integrator tolerance 10 h^4 between consecutive samples.
inline DescentReport lyapunov_descent_check(const Scenario& scenario, const OdeTrajectory& trajectory,
                                            LyapunovKind kind, const PriceVector& p_star) {
  if (trajectory.prices.size() < 2) throw Error(ErrorKind::invalid_argument, "trajectory", "needs >= 2 samples");
  DescentReport r;
  r.kind = kind;
  const LyapunovFn v = make_lyapunov(scenario, kind, p_star);
  r.values.reserve(trajectory.prices.size());
  for (const auto& p : trajectory.prices) r.values.push_back(v(p));
  r.tolerance = 10.0 * std::pow(trajectory.step, 4);
  for (std::size_t i = 1; i < r.values.size(); ++i) r.max_increase = std::max(r.max_increase, r.values[i] - r.values[i - 1]);
  r.initial = r.values.front();
  r.final = r.values.back();
  r.pass = !trajectory.aborted && r.max_increase <= r.tolerance;
  return r;
}

/// Fills each record's Lyapunov map with the functions that apply to the scenario.
inline void annotate_lyapunov(std::vector<IterationRecord>& records, const Scenario& scenario,
                              const PriceVector& p_star) {
  const bool quadratic = scenario.system_cost().is_quadratic();
  for (auto& r : records) {
    if (quadratic) r.lyapunov["quadratic"] = lyapunov_quadratic(r.price, p_star, scenario.system_cost().quadratic_matrix());
    r.lyapunov["bregman"] = lyapunov_bregman(scenario, r.price, p_star);
  }
}

// ---------------------------------------------------------------------------
// Reference equilibrium

struct ReferencePrice {
  PriceVector price;
  std::string source;  // "analytic" or "converged_run"
};

inline constexpr double kReferenceTolerance = 1e-10;

/// Upper bound on the Lipschitz constant of p -> e(x*(p)) for smooth
/// scenarios: curvature(g) * sum_i ||A_i^{-1}||.
inline double price_response_lipschitz(const Scenario& scenario) {
  double inverse_sum = 0.0;
  for (const auto& u : scenario.users()) {
    const auto* q = u.quadratic();
    if (q == nullptr) throw Error(ErrorKind::unsupported, "user " + u.id(), "best response is not Lipschitz");
    Eigen::SelfAdjointEigenSolver<Mat> eig(q->weight(), Eigen::EigenvaluesOnly);
    inverse_sum += 1.0 / eig.eigenvalues().minCoeff();
  }
  return system_cost_curvature(scenario.system_cost()) * inverse_sum;
}

/// p* from the closed form when the scenario admits one. Other smooth
/// scenarios iterate with the constant step 1 / (1 + L), which contracts
/// linearly, until the residual reaches 1e-10.
inline ReferencePrice reference_price(const Scenario& scenario, std::int64_t min_iterations = 200000) {
  if (scenario.is_linear_quadratic()) return {analytic_fixed_point(scenario), "analytic"};
  const double step = 1.0 / (1.0 + price_response_lipschitz(scenario));
  const Scenario tight = scenario.with_schedule(StepSchedule::constant(step))
                             .with_limits(std::max(scenario.max_iterations(), min_iterations), kReferenceTolerance);
  const RunResult run = run_discrete(tight);
  if (!run.converged) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "run did not reach 1e-10 (residual %.3g)", run.final_residual);
    throw Error(ErrorKind::numerical, "reference_price", buf);
  }
  return {run.final_price, "converged_run"};
}

// ---------------------------------------------------------------------------
// Alignment with the social optimum

struct AlignmentReport {
  std::string oracle;  // "closed_form", "grid" or "enumeration"
  double equilibrium_welfare = 0.0;
  double oracle_welfare = 0.0;
  double gap = 0.0;    // equilibrium_welfare - oracle_welfare
  double bound = 0.0;  // allowed gap
  std::vector<ConsumptionProfile> oracle_argmin;
  double max_profile_distance = 0.0;
  bool pass = false;
};

inline constexpr double kClosedFormAlignmentTolerance = 1e-8;

struct AlignmentOptions {
  int points_per_axis = 401;
  std::optional<Vec> grid_lo;  // default: hull of equilibrium profiles and setpoints, padded by 1
  std::optional<Vec> grid_hi;
};

/// True when alignment_check has an oracle: the closed form, or an
/// exhaustive search with at most 8 continuous coordinates and at most 2e7
/// binary combinations.
inline bool alignment_oracle_available(const Scenario& scenario) {
  if (scenario.is_linear_quadratic()) return true;
  const auto horizon = static_cast<std::size_t>(scenario.horizon());
  std::size_t continuous = 0;
  std::size_t binary = 0;
  for (const auto& u : scenario.users()) (u.quadratic() ? continuous : binary) += horizon;
  return continuous <= kMaxGridCoordinates && std::pow(2.0, double(binary)) <= kMaxGridEvaluations;
}

/// Compares welfare at the converged equilibrium against an independent
/// optimum: the closed form for linear-quadratic scenarios, otherwise an
/// exhaustive grid/enumeration when the search space is small enough.
inline AlignmentReport alignment_check(const Scenario& scenario, const RunResult& run,
                                       const AlignmentOptions& options = {}) {
  if (!run.converged) throw Error(ErrorKind::invalid_argument, "alignment_check", "run did not converge");
  AlignmentReport r;
  r.equilibrium_welfare = social_welfare(scenario, run.final_profiles);

  auto distance = [&](const std::vector<ConsumptionProfile>& other) {
    double d = 0.0;
    for (std::size_t i = 0; i < other.size(); ++i)
      d = std::max(d, inf_norm(other[i].values() - run.final_profiles[i].values()));
    return d;
  };

  if (scenario.is_linear_quadratic()) {
    r.oracle = "closed_form";
    r.oracle_argmin = closed_form_social_opt(scenario);
    r.oracle_welfare = social_welfare(scenario, r.oracle_argmin);
    r.bound = kClosedFormAlignmentTolerance;
  } else {
    const Index horizon = scenario.horizon();
    const std::size_t dims = scenario.user_count() * static_cast<std::size_t>(horizon);
    Vec lo = Vec::Constant(horizon, std::numeric_limits<double>::infinity());
    Vec hi = -lo;
    std::size_t continuous_axes = 0;
    for (std::size_t i = 0; i < scenario.user_count(); ++i) {
      if (const auto* q = scenario.users()[i].quadratic()) {
        lo = lo.cwiseMin(run.final_profiles[i].values()).cwiseMin(q->setpoint());
        hi = hi.cwiseMax(run.final_profiles[i].values()).cwiseMax(q->setpoint());
        continuous_axes += static_cast<std::size_t>(horizon);
      }
    }
    if (continuous_axes == 0) {
      lo = Vec::Zero(horizon);
      hi = Vec::Ones(horizon);
    } else {
      lo.array() -= 1.0;
      hi.array() += 1.0;
    }
    if (options.grid_lo) lo = *options.grid_lo;
    if (options.grid_hi) hi = *options.grid_hi;
    int points = options.points_per_axis;
    if (continuous_axes > 0) {
      const auto cap = static_cast<int>(std::floor(std::pow(kMaxGridEvaluations / std::pow(2.0, double(dims - continuous_axes)),
                                                            1.0 / static_cast<double>(continuous_axes))));
      points = std::max(3, std::min(points, cap));
    }
    if (!alignment_oracle_available(scenario))
      throw Error(ErrorKind::unsupported, "alignment_check", "search space too large for the exhaustive oracle");
    const SocialOptimum opt = brute_force_social_opt(scenario, lo, hi, points);
    r.oracle = continuous_axes == 0 ? "enumeration" : "grid";
    r.oracle_argmin = opt.profiles;
    r.oracle_welfare = opt.welfare;
    r.bound = opt.cell_bound;
  }
  r.gap = r.equilibrium_welfare - r.oracle_welfare;
  r.max_profile_distance = distance(r.oracle_argmin);
  const double roundoff = 1e-12 * std::max(1.0, std::abs(r.oracle_welfare));
  r.pass = r.gap <= r.bound + roundoff;
  return r;
}

// ---------------------------------------------------------------------------
// Monotonicity (vector sense): h is increasing when
// (h(x) - h(x'))^T (x - x') >= 0 for all pairs; decreasing is the negation.

enum class Monotone { increasing, decreasing };

struct SamplerBox {
  Vec lo;
  Vec hi;
  std::uint64_t seed = 0;
};

struct MonotonicityReport {
  Monotone hypothesis = Monotone::decreasing;
  std::int64_t samples = 0;
  double min_inner_product = std::numeric_limits<double>::infinity();
  double max_inner_product = -std::numeric_limits<double>::infinity();
  std::int64_t violations = 0;
  bool strict = false;
};

inline constexpr double kMonotonicityTolerance = 1e-10;

/// Samples n_pairs i.i.d. pairs from the box (pair j draws from its own
/// seed, so results do not depend on evaluation order) and tests the sign of
/// the inner product against the hypothesis.
inline MonotonicityReport monotonicity_probe(const std::function<Vec(const Vec&)>& map, Monotone hypothesis,
                                             const SamplerBox& box, std::int64_t n_pairs) {
  if (n_pairs < 1) throw Error(ErrorKind::invalid_argument, "n_pairs", "must be >= 1");
  if (box.lo.size() != box.hi.size() || ((box.hi - box.lo).array() < 0.0).any())
    throw Error(ErrorKind::invalid_argument, "sampler box", "need lo <= hi with equal lengths");
  MonotonicityReport r;
  r.hypothesis = hypothesis;
  const Index n = box.lo.size();
  bool all_strict = true;
  for (std::int64_t j = 0; j < n_pairs; ++j) {
    std::mt19937_64 rng(mix_seed(box.seed + static_cast<std::uint64_t>(j)));
    Vec a(n), b(n);
    for (Index t = 0; t < n; ++t) a[t] = box.lo[t] + (box.hi[t] - box.lo[t]) * unit_uniform(rng);
    for (Index t = 0; t < n; ++t) b[t] = box.lo[t] + (box.hi[t] - box.lo[t]) * unit_uniform(rng);
    const double ip = (map(a) - map(b)).dot(a - b);
    ++r.samples;
    r.min_inner_product = std::min(r.min_inner_product, ip);
    r.max_inner_product = std::max(r.max_inner_product, ip);
    const double signed_ip = hypothesis == Monotone::decreasing ? ip : -ip;
    if (signed_ip > kMonotonicityTolerance) ++r.violations;
    if (a != b && !(signed_ip < -kMonotonicityTolerance)) all_strict = false;
  }
  r.strict = all_strict;
  return r;
}

struct ProbeTarget {
  enum class Kind {
    single_user,              // p -> x_i*(p), decreasing
    aggregate_best_response,  // p -> sum_i x_i*(p), decreasing
    externality_map,          // z -> e(z), increasing (box is over loads)
    price_response,           // p -> e(x*(p)), decreasing when T = 1
  };
  Kind kind = Kind::aggregate_best_response;
  std::size_t user = 0;

  static ProbeTarget single_user(std::size_t i) { return {Kind::single_user, i}; }
  static ProbeTarget aggregate() { return {Kind::aggregate_best_response, 0}; }
  static ProbeTarget externality() { return {Kind::externality_map, 0}; }
  static ProbeTarget price_response() { return {Kind::price_response, 0}; }
};

inline MonotonicityReport monotonicity_probe(const ProbeTarget& target, const Scenario& scenario,
                                             const SamplerBox& box, std::int64_t n_pairs) {
  if (box.lo.size() != scenario.horizon())
    throw Error(ErrorKind::dimension, "sampler box", "length differs from horizon");
  switch (target.kind) {
    case ProbeTarget::Kind::single_user: {
      if (target.user >= scenario.user_count()) throw Error(ErrorKind::invalid_argument, "target", "user index out of range");
      const UserModel& u = scenario.users()[target.user];
      return monotonicity_probe([&u](const Vec& p) { return best_response(u, PriceVector(p)).values(); },
                                Monotone::decreasing, box, n_pairs);
    }
    case ProbeTarget::Kind::aggregate_best_response:
      return monotonicity_probe(
          [&scenario](const Vec& p) { return aggregate(best_responses(scenario, PriceVector(p))).values(); },
          Monotone::decreasing, box, n_pairs);
    case ProbeTarget::Kind::externality_map:
      return monotonicity_probe(
          [&scenario](const Vec& z) { return externality(scenario.system_cost(), AggregateLoad(z)).values(); },
          Monotone::increasing, box, n_pairs);
    case ProbeTarget::Kind::price_response:
      return monotonicity_probe(
          [&scenario](const Vec& p) {
            return externality(scenario.system_cost(), aggregate(best_responses(scenario, PriceVector(p)))).values();
          },
          Monotone::decreasing, box, n_pairs);
  }
  throw Error(ErrorKind::invalid_argument, "unknown probe target");
}

// ---------------------------------------------------------------------------
// Peak metrics

struct PeakMetrics {
  double peak = 0.0;
  double mean = 0.0;
  std::optional<double> peak_to_mean;  // undefined unless mean > 0
};

inline PeakMetrics peak_metrics(const AggregateLoad& z) {
  if (z.size() < 1) throw Error(ErrorKind::invalid_argument, "peak_metrics", "empty load");
  PeakMetrics m;
  m.peak = z.values().maxCoeff();
  m.mean = z.values().mean();
  if (m.mean > 0.0) m.peak_to_mean = m.peak / m.mean;
  return m;
}

// ---------------------------------------------------------------------------
// Theory coverage

enum class Regime {
  scalar,                 // T = 1 with decreasing users and convex differentiable g
  quadratic_system_cost,  // g = 1/2 z^T B z, decreasing users
  strictly_convex,        // strictly convex smooth users with a strictly convex g
  outside_proven,
};

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::scalar: return "scalar";
    case Regime::quadratic_system_cost: return "quadratic_system_cost";
    case Regime::strictly_convex: return "strictly_convex";
    case Regime::outside_proven: return "outside proven regime";
  }
  return "unknown";
}

/// Which stability result covers the scenario. Every supported user has a
/// decreasing best response; the water heater's non-convex discrete cost
/// satisfies neither multi-period condition.
inline Regime classify(const Scenario& scenario) {
  if (scenario.horizon() == 1) return Regime::scalar;
  if (scenario.has_water_heaters()) return Regime::outside_proven;
  if (scenario.system_cost().is_quadratic()) return Regime::quadratic_system_cost;
  for (const auto& u : scenario.users()) {
    const auto* q = u.quadratic();
    if (q == nullptr || q->bounds()) return Regime::outside_proven;
  }
  return Regime::strictly_convex;
}

}  // namespace adaprice
