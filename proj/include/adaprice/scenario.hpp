#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "adaprice/core.hpp"
#include "adaprice/system_cost.hpp"
#include "adaprice/users.hpp"

namespace adaprice {

/// A complete experiment: users, system cost, step rule and stopping
/// parameters. Construction validates everything; a Scenario that exists is
/// consistent.
class Scenario {
 public:
  Scenario(Index horizon, std::vector<UserModel> users, SystemCost system_cost, StepSchedule schedule,
           PriceVector initial_price, std::int64_t max_iterations, double tolerance, std::uint64_t seed)
      : horizon_(horizon),
        users_(std::move(users)),
        system_cost_(std::move(system_cost)),
        schedule_(schedule),
        initial_price_(std::move(initial_price)),
        max_iterations_(max_iterations),
        tolerance_(tolerance),
        seed_(seed) {
    if (horizon_ < 1) throw Error(ErrorKind::config, "horizon", "must be >= 1");
    if (users_.empty()) throw Error(ErrorKind::config, "users", "at least one user is required");
    for (std::size_t i = 0; i < users_.size(); ++i)
      if (users_[i].horizon() != horizon_)
        throw Error(ErrorKind::dimension, "users[" + std::to_string(i) + "]",
                    "dimension " + std::to_string(users_[i].horizon()) + " differs from horizon " +
                        std::to_string(horizon_));
    if (system_cost_.horizon() != horizon_)
      throw Error(ErrorKind::dimension, "system_cost", "dimension differs from horizon");
    if (initial_price_.size() != horizon_)
      throw Error(ErrorKind::dimension, "initial_price", "length differs from horizon");
    if (max_iterations_ < 1) throw Error(ErrorKind::config, "max_iterations", "must be >= 1");
    if (!(tolerance_ > 0.0) || !std::isfinite(tolerance_))
      throw Error(ErrorKind::config, "tolerance", "must be positive and finite");
    schedule_.validate_budget(max_iterations_);
  }

  Index horizon() const noexcept { return horizon_; }
  std::size_t user_count() const noexcept { return users_.size(); }
  const std::vector<UserModel>& users() const noexcept { return users_; }
  const SystemCost& system_cost() const noexcept { return system_cost_; }
  const StepSchedule& schedule() const noexcept { return schedule_; }
  const PriceVector& initial_price() const noexcept { return initial_price_; }
  std::int64_t max_iterations() const noexcept { return max_iterations_; }
  double tolerance() const noexcept { return tolerance_; }
  std::uint64_t seed() const noexcept { return seed_; }

  Scenario with_initial_price(PriceVector p) const {
    Scenario s = *this;
    if (p.size() != horizon_) throw Error(ErrorKind::dimension, "initial_price", "length differs from horizon");
    s.initial_price_ = std::move(p);
    return s;
  }
  Scenario with_schedule(StepSchedule schedule) const {
    Scenario s = *this;
    schedule.validate_budget(max_iterations_);
    s.schedule_ = schedule;
    return s;
  }
  Scenario with_limits(std::int64_t max_iterations, double tolerance) const {
    return Scenario(horizon_, users_, system_cost_, schedule_, initial_price_, max_iterations, tolerance, seed_);
  }

  /// All users are unbounded quadratics and g is quadratic: the class with a
  /// closed-form equilibrium.
  bool is_linear_quadratic() const {
    if (!system_cost_.is_quadratic()) return false;
    for (const auto& u : users_) {
      const auto* q = u.quadratic();
      if (q == nullptr || q->bounds().has_value()) return false;
    }
    return true;
  }

  bool all_users_quadratic() const {
    for (const auto& u : users_)
      if (u.quadratic() == nullptr) return false;
    return true;
  }

  bool has_water_heaters() const { return !all_users_quadratic(); }

 private:
  Index horizon_;
  std::vector<UserModel> users_;
  SystemCost system_cost_;
  StepSchedule schedule_;
  PriceVector initial_price_;
  std::int64_t max_iterations_;
  double tolerance_;
  std::uint64_t seed_;
};

/// Best responses of every user at one price, in user order.
inline std::vector<ConsumptionProfile> best_responses(const Scenario& scenario, const PriceVector& price) {
  std::vector<ConsumptionProfile> out;
  out.reserve(scenario.user_count());
  for (const auto& user : scenario.users()) out.push_back(best_response(user, price));
  return out;
}

inline PriceVector uniform_random_price(Index horizon, double lo, double hi, std::uint64_t seed) {
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw Error(ErrorKind::config, "initial_price.uniform", "need finite lo <= hi");
  std::mt19937_64 rng(mix_seed(seed ^ 0x5052494345ULL));
  Vec p(horizon);
  for (Index t = 0; t < horizon; ++t) p[t] = lo + (hi - lo) * unit_uniform(rng);
  return PriceVector(std::move(p));
}

}  // namespace adaprice
