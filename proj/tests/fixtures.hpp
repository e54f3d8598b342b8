#pragma once

// Scenario builders shared by the unit suites.

#include <cstdint>
#include <vector>

#include "adaprice/scenario.hpp"

namespace adaprice::testing {

inline Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline UserModel scalar_user(double setpoint, double weight = 1.0) {
  return UserModel("u", QuadraticUser::diagonal(vec({setpoint}), vec({weight})));
}

/// N scalar users f_i = 1/2 (x - s_i)^2 with g(z) = z^2 (B = 2).
inline Scenario scalar_scenario(const std::vector<double>& setpoints, double p0 = 0.0,
                                StepSchedule schedule = StepSchedule::harmonic(1.0),
                                std::int64_t max_iterations = 100000, double tolerance = 1e-8) {
  std::vector<UserModel> users;
  for (std::size_t i = 0; i < setpoints.size(); ++i)
    users.emplace_back("u" + std::to_string(i), QuadraticUser::diagonal(vec({setpoints[i]}), vec({1.0})));
  return Scenario(1, std::move(users), SystemCost(ScaledNormSquaredCost(1, 1.0)), schedule, PriceVector{p0},
                  max_iterations, tolerance, 1);
}

/// The five-user single-period experiment: setpoints 1..5, p* = 30/11.
inline Scenario single_period(double p0 = 0.0) { return scalar_scenario({1, 2, 3, 4, 5}, p0); }

/// N = 2, T = 2: A_1 = I, A_2 = 2I, B = diag(1, 3), setpoints (1,0), (0,1).
inline Scenario two_by_two(PriceVector p0 = PriceVector{0.0, 0.0}) {
  std::vector<UserModel> users;
  users.emplace_back("a", QuadraticUser::diagonal(vec({1, 0}), vec({1, 1})));
  users.emplace_back("b", QuadraticUser::diagonal(vec({0, 1}), vec({2, 2})));
  return Scenario(2, std::move(users), SystemCost(QuadraticSystemCost::diagonal(vec({1, 3}))),
                  StepSchedule::harmonic(1.0), std::move(p0), 100000, 1e-10, 1);
}

/// Smooth daily setpoint with an evening bump; users differ in scale and phase.
inline Vec daily_setpoint(Index horizon, std::size_t user) {
  Vec s(horizon);
  const double scale = 1.0 + 0.1 * static_cast<double>(user % 5);
  const double shift = static_cast<double>(user % 3);
  for (Index t = 0; t < horizon; ++t) {
    const double hour = static_cast<double>(t) + shift;
    s[t] = scale * (1.0 + 0.8 * std::exp(-0.5 * std::pow((hour - 18.0) / 2.5, 2)) +
                    0.3 * std::exp(-0.5 * std::pow((hour - 8.0) / 2.0, 2)));
  }
  return s;
}

/// N unbounded unit-weight quadratic users under lambda * LSE_alpha.
inline Scenario lse_scenario(std::size_t n_users = 10, Index horizon = 24, double lambda = 1.0, double alpha = 10.0,
                             std::int64_t max_iterations = 500, double tolerance = 1e-4, std::uint64_t seed = 3) {
  std::vector<UserModel> users;
  for (std::size_t i = 0; i < n_users; ++i)
    users.emplace_back("u" + std::to_string(i),
                       QuadraticUser::diagonal(daily_setpoint(horizon, i), Vec::Ones(horizon)));
  return Scenario(horizon, std::move(users), SystemCost(LSEPeakCost(horizon, lambda, alpha)),
                  StepSchedule::harmonic(1.0), uniform_random_price(horizon, 0.0, 1.0, seed), max_iterations,
                  tolerance, seed);
}

inline WaterHeaterParams heater_params(std::vector<int> demand) {
  WaterHeaterParams p;
  p.tank_capacity = 3.0;
  p.heat_rate = 1.0;
  p.standing_loss = 0.05;
  p.draw_size = 1.0;
  p.discomfort_weight = 5.0;
  p.state_levels = 7;
  p.demand = std::move(demand);
  return p;
}

}  // namespace adaprice::testing
