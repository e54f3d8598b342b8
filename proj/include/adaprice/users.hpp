#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "adaprice/core.hpp"

namespace adaprice {

inline constexpr double kMaxWeightCondition = 1e12;

struct BoxBounds {
  Vec lo;
  Vec hi;
};

/// f(x) = 1/2 (x - setpoint)^T A (x - setpoint), optionally restricted to a
/// per-period box. Boxes are only accepted with diagonal A, where the
/// coordinatewise clamp is the exact constrained minimizer.
class QuadraticUser {
 public:
  static QuadraticUser diagonal(Vec setpoint, Vec weight_diag, std::optional<BoxBounds> bounds = std::nullopt) {
    if (weight_diag.size() != setpoint.size())
      throw Error(ErrorKind::dimension, "weight", "diagonal length differs from setpoint length");
    if (!weight_diag.allFinite() || !(weight_diag.array() > 0.0).all())
      throw Error(ErrorKind::invalid_argument, "weight", "diagonal entries must be positive and finite");
    QuadraticUser u;
    u.setpoint_ = std::move(setpoint);
    u.diag_ = std::move(weight_diag);
    u.weight_ = u.diag_.asDiagonal();
    u.condition_ = u.diag_.maxCoeff() / u.diag_.minCoeff();
    u.bounds_ = std::move(bounds);
    u.check_common();
    return u;
  }

  static QuadraticUser dense(Vec setpoint, Mat weight) {
    if (weight.rows() != setpoint.size() || weight.cols() != setpoint.size())
      throw Error(ErrorKind::dimension, "weight", "matrix shape differs from setpoint length");
    if (!weight.allFinite()) throw Error(ErrorKind::invalid_argument, "weight", "non-finite entry");
    const double scale = std::max(1.0, weight.cwiseAbs().maxCoeff());
    if ((weight - weight.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw Error(ErrorKind::invalid_argument, "weight", "matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> eig(weight, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) throw Error(ErrorKind::invalid_argument, "weight", "matrix is not positive definite");
    QuadraticUser u;
    u.setpoint_ = std::move(setpoint);
    u.weight_ = std::move(weight);
    u.condition_ = hi / lo;
    u.llt_.compute(u.weight_);
    u.check_common();
    return u;
  }

  Index horizon() const noexcept { return setpoint_.size(); }
  const Vec& setpoint() const noexcept { return setpoint_; }
  const Mat& weight() const noexcept { return weight_; }
  bool is_diagonal() const noexcept { return diag_.size() > 0; }
  const std::optional<BoxBounds>& bounds() const noexcept { return bounds_; }
  double condition() const noexcept { return condition_; }

  /// A^{-1} v
  Vec solve_weight(const Vec& v) const {
    if (condition_ > kMaxWeightCondition)
      throw Error(ErrorKind::numerical, "weight", "condition estimate " + std::to_string(condition_) + " exceeds 1e12");
    if (is_diagonal()) return v.cwiseQuotient(diag_);
    return llt_.solve(v);
  }

  ConsumptionProfile best_response(const PriceVector& price) const {
    Vec x = setpoint_ - solve_weight(price.values());
    if (bounds_) x = x.cwiseMax(bounds_->lo).cwiseMin(bounds_->hi);
    return ConsumptionProfile(std::move(x));
  }

  bool feasible(const Vec& x) const {
    if (x.size() != horizon() || !x.allFinite()) return false;
    if (!bounds_) return true;
    return ((x - bounds_->lo).array() >= 0.0).all() && ((bounds_->hi - x).array() >= 0.0).all();
  }

  double cost(const ConsumptionProfile& x) const {
    if (!feasible(x.values())) throw Error(ErrorKind::infeasible, "profile lies outside the user's feasible set");
    const Vec d = x.values() - setpoint_;
    return 0.5 * d.dot(weight_ * d);
  }

 private:
  QuadraticUser() = default;

  void check_common() const {
    if (setpoint_.size() < 1) throw Error(ErrorKind::invalid_argument, "setpoint", "horizon must be >= 1");
    if (!setpoint_.allFinite()) throw Error(ErrorKind::invalid_argument, "setpoint", "non-finite entry");
    if (!bounds_) return;
    if (!is_diagonal()) throw Error(ErrorKind::unsupported, "bounds", "box bounds require a diagonal weight");
    if (bounds_->lo.size() != horizon() || bounds_->hi.size() != horizon())
      throw Error(ErrorKind::dimension, "bounds", "bound length differs from setpoint length");
    if (!bounds_->lo.allFinite() || !bounds_->hi.allFinite())
      throw Error(ErrorKind::invalid_argument, "bounds", "bounds must be finite");
    if (((bounds_->hi - bounds_->lo).array() < 0.0).any())
      throw Error(ErrorKind::invalid_argument, "bounds", "lo exceeds hi");
  }

  Vec setpoint_;
  Vec diag_;  // non-empty for the diagonal form
  Mat weight_;
  Eigen::LLT<Mat> llt_;
  double condition_ = 1.0;
  std::optional<BoxBounds> bounds_;
};

// ---------------------------------------------------------------------------
// Water heater

struct WaterHeaterParams {
  double tank_capacity = 0.0;      // stored hot-water energy ceiling
  double heat_rate = 0.0;          // energy added in a heating slot
  double standing_loss = 0.0;      // fraction of stored energy lost per slot
  double draw_size = 0.0;          // energy withdrawn in a demanded slot
  double discomfort_weight = 0.0;  // penalty per unit of unmet draw
  int state_levels = 0;            // uniform grid over [0, tank_capacity]
  std::vector<int> demand;         // 1 = hot-water draw in that slot
};

/// Outcome of one slot of the tank recursion.
struct TankStep {
  int next_level = 0;
  double unmet = 0.0;
};

/// A storage water heater with a binary heat/no-heat action per slot.
///
/// The tank holds energy on a uniform grid of `state_levels` points in
/// [0, tank_capacity] and starts empty. One slot runs, in order: standing
/// loss, heating (excess above capacity is wasted), the draw (served from
/// storage, any shortfall is unmet), then rounding to the nearest level.
/// Discomfort is `discomfort_weight` times the total unmet draw. Both the DP
/// and the cost evaluation use this same discretized recursion.
class WaterHeaterUser {
 public:
  explicit WaterHeaterUser(WaterHeaterParams params) : p_(std::move(params)) {
    if (p_.demand.empty()) throw Error(ErrorKind::config, "demand", "horizon must be >= 1");
    for (std::size_t t = 0; t < p_.demand.size(); ++t)
      if (p_.demand[t] != 0 && p_.demand[t] != 1)
        throw Error(ErrorKind::config, "demand[" + std::to_string(t) + "]", "entries must be 0 or 1");
    if (!(p_.tank_capacity > 0.0) || !std::isfinite(p_.tank_capacity))
      throw Error(ErrorKind::config, "tank_capacity", "must be positive and finite");
    if (!(p_.heat_rate > 0.0) || !std::isfinite(p_.heat_rate))
      throw Error(ErrorKind::config, "heat_rate", "must be positive and finite");
    if (!(p_.standing_loss >= 0.0 && p_.standing_loss < 1.0))
      throw Error(ErrorKind::config, "standing_loss", "must lie in [0, 1)");
    if (!(p_.draw_size >= 0.0) || !std::isfinite(p_.draw_size))
      throw Error(ErrorKind::config, "draw_size", "must be non-negative and finite");
    if (!(p_.discomfort_weight >= 0.0) || !std::isfinite(p_.discomfort_weight))
      throw Error(ErrorKind::config, "discomfort_weight", "must be non-negative and finite");
    if (p_.state_levels < 2) throw Error(ErrorKind::config, "state_levels", "must be >= 2");
  }

  const WaterHeaterParams& params() const noexcept { return p_; }
  Index horizon() const noexcept { return static_cast<Index>(p_.demand.size()); }
  double level_energy(int level) const { return level * spacing(); }

  TankStep step(int level, bool heat, Index slot) const {
    double energy = level_energy(level) * (1.0 - p_.standing_loss);
    if (heat) energy = std::min(p_.tank_capacity, energy + p_.heat_rate);
    double unmet = 0.0;
    if (p_.demand[static_cast<std::size_t>(slot)]) {
      const double served = std::min(energy, p_.draw_size);
      unmet = p_.draw_size - served;
      energy -= served;
    }
    const auto next = static_cast<int>(std::lround(energy / spacing()));
    return {std::clamp(next, 0, p_.state_levels - 1), unmet};
  }

  bool feasible(const Vec& x) const {
    if (x.size() != horizon()) return false;
    for (Index t = 0; t < x.size(); ++t)
      if (x[t] != 0.0 && x[t] != p_.heat_rate) return false;
    return true;
  }

  /// Total unmet draw when the tank follows schedule x from empty.
  double unmet_draw(const ConsumptionProfile& x) const {
    if (!feasible(x.values()))
      throw Error(ErrorKind::infeasible, "schedule entries must be 0 or heat_rate over the full horizon");
    int level = 0;
    double unmet = 0.0;
    for (Index t = 0; t < horizon(); ++t) {
      const TankStep s = step(level, x[t] != 0.0, t);
      unmet += s.unmet;
      level = s.next_level;
    }
    return unmet;
  }

  double cost(const ConsumptionProfile& x) const { return p_.discomfort_weight * unmet_draw(x); }

  /// Exact minimizer of discomfort + price^T x over binary schedules, by
  /// backward induction over (slot, stored-energy level). Ties prefer not
  /// heating, so the forward trace returns the lexicographically smallest
  /// optimal schedule (heating as late as possible).
  ConsumptionProfile best_response(const PriceVector& price) const {
    const Index horizon_t = horizon();
    if (price.size() != horizon_t) throw Error(ErrorKind::dimension, "price", "length differs from horizon");
    const int levels = p_.state_levels;
    const auto cols = static_cast<std::size_t>(levels);
    std::vector<double> value((static_cast<std::size_t>(horizon_t) + 1) * cols, 0.0);
    std::vector<std::uint8_t> heat_policy(static_cast<std::size_t>(horizon_t) * cols, 0);

    for (Index t = horizon_t - 1; t >= 0; --t) {
      const auto row = static_cast<std::size_t>(t);
      for (int j = 0; j < levels; ++j) {
        const TankStep idle = step(j, false, t);
        const TankStep heat = step(j, true, t);
        const double idle_cost = p_.discomfort_weight * idle.unmet + value[(row + 1) * cols + idle.next_level];
        const double heat_cost = price[t] * p_.heat_rate + p_.discomfort_weight * heat.unmet +
                                 value[(row + 1) * cols + heat.next_level];
        const double eps = kTieTolerance * std::max({1.0, std::abs(idle_cost), std::abs(heat_cost)});
        const bool choose_heat = heat_cost < idle_cost - eps;
        heat_policy[row * cols + j] = choose_heat ? 1 : 0;
        value[row * cols + j] = choose_heat ? heat_cost : idle_cost;
      }
    }

    Vec schedule = Vec::Zero(horizon_t);
    int level = 0;
    for (Index t = 0; t < horizon_t; ++t) {
      const bool heat = heat_policy[static_cast<std::size_t>(t) * cols + level] != 0;
      if (heat) schedule[t] = p_.heat_rate;
      level = step(level, heat, t).next_level;
    }
    return ConsumptionProfile(std::move(schedule));
  }

  /// Relative cost gap below which two choices count as tied.
  static constexpr double kTieTolerance = 1e-12;

 private:
  double spacing() const { return p_.tank_capacity / (p_.state_levels - 1); }

  WaterHeaterParams p_;
};

inline ConsumptionProfile waterheater_dp_solve(const WaterHeaterUser& user, const PriceVector& price) {
  return user.best_response(price);
}

/// Independent Bernoulli draws with a per-slot probability; a fixed seed
/// gives a fixed vector.
inline std::vector<int> sample_demand(const std::vector<double>& probabilities, std::uint64_t seed) {
  for (double q : probabilities)
    if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorKind::invalid_argument, "bernoulli probability must lie in [0, 1]");
  std::mt19937_64 rng(mix_seed(seed));
  std::vector<int> out(probabilities.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = unit_uniform(rng) < probabilities[t] ? 1 : 0;
  return out;
}

inline std::vector<int> sample_demand(Index horizon, double probability, std::uint64_t seed) {
  if (horizon < 0) throw Error(ErrorKind::invalid_argument, "horizon must be non-negative");
  return sample_demand(std::vector<double>(static_cast<std::size_t>(horizon), probability), seed);
}

// ---------------------------------------------------------------------------

class UserModel {
 public:
  using Variant = std::variant<QuadraticUser, WaterHeaterUser>;

  UserModel(std::string id, Variant model) : id_(std::move(id)), model_(std::move(model)) {}

  const std::string& id() const noexcept { return id_; }
  const Variant& model() const noexcept { return model_; }

  const QuadraticUser* quadratic() const noexcept { return std::get_if<QuadraticUser>(&model_); }
  const WaterHeaterUser* water_heater() const noexcept { return std::get_if<WaterHeaterUser>(&model_); }

  Index horizon() const {
    return std::visit([](const auto& m) { return m.horizon(); }, model_);
  }

  bool feasible(const Vec& x) const {
    return std::visit([&](const auto& m) { return m.feasible(x); }, model_);
  }

 private:
  std::string id_;
  Variant model_;
};

inline ConsumptionProfile best_response(const UserModel& user, const PriceVector& price) {
  if (price.size() != user.horizon())
    throw Error(ErrorKind::dimension, "user " + user.id(),
                "price length " + std::to_string(price.size()) + " differs from horizon " +
                    std::to_string(user.horizon()));
  return std::visit([&](const auto& m) { return m.best_response(price); }, user.model());
}

inline double user_cost(const UserModel& user, const ConsumptionProfile& x) {
  if (x.size() != user.horizon()) throw Error(ErrorKind::dimension, "user " + user.id(), "profile length mismatch");
  try {
    return std::visit([&](const auto& m) { return m.cost(x); }, user.model());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::infeasible) throw Error(ErrorKind::infeasible, "user " + user.id(), e.what());
    throw;
  }
}

}  // namespace adaprice
