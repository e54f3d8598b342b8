#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "adaprice/users.hpp"
#include "fixtures.hpp"

namespace adaprice {
namespace {

using testing::heater_params;
using testing::vec;

// Golden-section minimization of a unimodal scalar function on [a, b].
template <class F>
double golden_section(F&& f, double a, double b, double tol = 1e-12) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  while (b - a > tol) {
    if (f(c) < f(d)) b = d; else a = c;
    c = b - invphi * (b - a);
    d = a + invphi * (b - a);
  }
  return 0.5 * (a + b);
}

TEST(QuadraticUser, ZeroPriceReturnsSetpoint) {
  const UserModel u("u", QuadraticUser::diagonal(vec({3}), vec({1})));
  EXPECT_EQ(best_response(u, PriceVector{0.0})[0], 3.0);
}

TEST(QuadraticUser, ScalarClosedFormMatchesGoldenSection) {
  const UserModel u("u", QuadraticUser::diagonal(vec({3}), vec({1})));
  const double p = 30.0 / 11.0;
  const double x = best_response(u, PriceVector{p})[0];
  EXPECT_NEAR(x, 3.0 / 11.0, 1e-15);
  const double oracle = golden_section([&](double v) { return 0.5 * (v - 3.0) * (v - 3.0) + p * v; }, -10.0, 10.0);
  EXPECT_NEAR(x, oracle, 1e-7);
}

TEST(QuadraticUser, BoxClampMatchesGridSearch) {
  BoxBounds box{vec({0}), vec({1})};
  const UserModel u("u", QuadraticUser::diagonal(vec({3}), vec({2}), box));
  const double x = best_response(u, PriceVector{0.0})[0];
  EXPECT_EQ(x, 1.0);
  double best = 0.0, best_val = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 10000; ++i) {
    const double v = i * 1e-4;
    const double f = 0.5 * 2.0 * (v - 3.0) * (v - 3.0);
    if (f < best_val) best_val = f, best = v;
  }
  EXPECT_NEAR(x, best, 1e-4);
}

TEST(QuadraticUser, Determinism) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Mat m = Mat::NullaryExpr(4, 4, [&] { return n(rng); });
  const UserModel u("u", QuadraticUser::dense(Vec::NullaryExpr(4, [&] { return n(rng); }),
                                              m * m.transpose() + Mat::Identity(4, 4)));
  const PriceVector p(Vec::NullaryExpr(4, [&] { return n(rng); }));
  EXPECT_EQ(best_response(u, p), best_response(u, p));
}

TEST(QuadraticUser, UnboundedStationarityCertificate) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    const Index T = 1 + static_cast<Index>(trial % 6);
    Mat m = Mat::NullaryExpr(T, T, [&] { return n(rng); });
    const Mat a = m * m.transpose() + 0.5 * Mat::Identity(T, T);
    const Vec setpoint = Vec::NullaryExpr(T, [&] { return n(rng); });
    const QuadraticUser q = QuadraticUser::dense(setpoint, a);
    const PriceVector p(Vec::NullaryExpr(T, [&] { return 3.0 * n(rng); }));
    const Vec x = q.best_response(p).values();
    EXPECT_LT(inf_norm(a * (x - setpoint) + p.values()), 1e-10);
  }
}

TEST(QuadraticUser, BoundedKktCertificate) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index T = 6;
    const Vec setpoint = Vec::NullaryExpr(T, [&] { return u(rng); });
    const Vec a = Vec::NullaryExpr(T, [&] { return 0.1 + std::abs(u(rng)); });
    const Vec lo = Vec::NullaryExpr(T, [&] { return -std::abs(u(rng)); });
    const Vec hi = lo + Vec::NullaryExpr(T, [&] { return std::abs(u(rng)); });
    const QuadraticUser q = QuadraticUser::diagonal(setpoint, a, BoxBounds{lo, hi});
    const PriceVector p(Vec::NullaryExpr(T, [&] { return u(rng); }));
    const Vec x = q.best_response(p).values();
    const Vec grad = a.cwiseProduct(x - setpoint) + p.values();
    for (Index t = 0; t < T; ++t) {
      ASSERT_GE(x[t], lo[t]);
      ASSERT_LE(x[t], hi[t]);
      if (std::abs(grad[t]) <= 1e-12) continue;
      // Objective still decreasing outward: the bound is active.
      if (grad[t] > 0) EXPECT_EQ(x[t], lo[t]);
      else EXPECT_EQ(x[t], hi[t]);
    }
  }
}

TEST(QuadraticUser, CostExamples) {
  const UserModel a("a", QuadraticUser::diagonal(vec({1, 2}), vec({1, 1})));
  EXPECT_EQ(user_cost(a, ConsumptionProfile{1, 2}), 0.0);
  const UserModel b("b", QuadraticUser::diagonal(vec({0, 0}), vec({2, 2})));
  EXPECT_DOUBLE_EQ(user_cost(b, ConsumptionProfile{1, 1}), 2.0);
}

TEST(QuadraticUser, ValidationErrors) {
  EXPECT_THROW(QuadraticUser::diagonal(vec({1}), vec({-1})), Error);
  EXPECT_THROW(QuadraticUser::diagonal(vec({1}), vec({0})), Error);
  Mat nd(2, 2);
  nd << 1, 0, 0, -1;
  EXPECT_THROW(QuadraticUser::dense(vec({1, 1}), nd), Error);
  Mat asym(2, 2);
  asym << 1, 0.5, 0, 1;
  EXPECT_THROW(QuadraticUser::dense(vec({1, 1}), asym), Error);
  EXPECT_THROW(QuadraticUser::diagonal(vec({1}), vec({1}), BoxBounds{vec({1}), vec({0})}), Error);
  EXPECT_THROW(QuadraticUser::diagonal(vec({1}), vec({1}), BoxBounds{vec({-INFINITY}), vec({0})}), Error);
}

TEST(QuadraticUser, IllConditionedWeightIsNumericalError) {
  const UserModel u("u", QuadraticUser::diagonal(vec({1, 1}), vec({1.0, 1e-13})));
  try {
    best_response(u, PriceVector{0.0, 0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numerical);
  }
}

TEST(QuadraticUser, InfeasibleProfileRejected) {
  const UserModel u("u", QuadraticUser::diagonal(vec({0}), vec({1}), BoxBounds{vec({0}), vec({1})}));
  try {
    user_cost(u, ConsumptionProfile{2.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::infeasible);
  }
}

TEST(UserModel, PriceLengthMismatch) {
  const UserModel u("u", QuadraticUser::diagonal(vec({0, 0}), vec({1, 1})));
  EXPECT_THROW(best_response(u, PriceVector{1.0}), Error);
}

// ---------------------------------------------------------------------------
// Water heater

// Exhaustive oracle over all 2^T binary schedules, ranking by discomfort
// (forward tank simulation) plus spend. Masks ascend with slot 0 as the most
// significant bit, so the first optimum found is the lexicographically
// smallest one: the same tie rule as the DP.
struct Enumerated {
  Vec schedule;
  double objective;
};

Enumerated enumerate_best(const WaterHeaterUser& user, const PriceVector& price) {
  const Index T = user.horizon();
  const double rate = user.params().heat_rate;
  Enumerated best{Vec::Zero(T), std::numeric_limits<double>::infinity()};
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << T); ++mask) {
    Vec x(T);
    for (Index t = 0; t < T; ++t) x[t] = (mask >> (T - 1 - t)) & 1U ? rate : 0.0;
    const double obj = user.cost(ConsumptionProfile(x)) + price.values().dot(x);
    const double eps = 1e-12 * std::max(1.0, std::abs(obj));
    if (obj < best.objective - eps) best = {x, obj};
  }
  return best;
}

double objective(const WaterHeaterUser& user, const PriceVector& price, const ConsumptionProfile& x) {
  return user.cost(x) + price.values().dot(x.values());
}

TEST(WaterHeater, NoDemandZeroPriceStaysOff) {
  const WaterHeaterUser u(heater_params({0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(u.best_response(PriceVector::zeros(6)).values(), Vec::Zero(6));
}

TEST(WaterHeater, NoDiscomfortWeightNeverHeats) {
  auto p = heater_params({1, 0, 1, 1, 0, 1});
  p.discomfort_weight = 0.0;
  const WaterHeaterUser u(p);
  EXPECT_EQ(u.best_response(PriceVector::constant(6, 0.3)).values(), Vec::Zero(6));
}

TEST(WaterHeater, SingleDrawHeatsAsLateAsLossAllows) {
  auto p = heater_params({0, 0, 0, 0, 0, 0, 0, 1});
  p.heat_rate = 0.5;
  p.discomfort_weight = 50.0;
  const WaterHeaterUser u(p);
  const PriceVector flat = PriceVector::constant(8, 0.2);
  const Vec x = u.best_response(flat).values();
  EXPECT_EQ(x, enumerate_best(u, flat).schedule);
  // Two late half-heats leave 0.975 after loss; a third restores a full draw.
  EXPECT_EQ(x, (vec({0, 0, 0, 0, 0, 0.5, 0.5, 0.5})));
  EXPECT_EQ(u.unmet_draw(ConsumptionProfile(x)), 0.0);
}

TEST(WaterHeater, PriceSpikeShiftsHeatingEarlier) {
  const WaterHeaterUser u(heater_params({0, 0, 0, 0, 0, 0, 0, 1}));
  const PriceVector spike(vec({0.1, 0.1, 0.1, 0.1, 0.1, 4.0, 4.0, 4.0}));
  const Vec x = u.best_response(spike).values();
  EXPECT_EQ(x, enumerate_best(u, spike).schedule);
  EXPECT_EQ(x.tail(3), Vec::Zero(3));
  EXPECT_GT(x.head(5).sum(), 0.0);
  EXPECT_EQ(u.unmet_draw(ConsumptionProfile(x)), 0.0);
}

TEST(WaterHeater, DrawCostFollowsStandingLoss) {
  const WaterHeaterUser u(heater_params({0, 0, 1, 0}));
  EXPECT_EQ(u.cost(ConsumptionProfile{0, 0, 1, 0}), 0.0);
  EXPECT_NEAR(u.cost(ConsumptionProfile{1, 0, 0, 0}), 5.0 * 0.05, 1e-12);
  EXPECT_DOUBLE_EQ(u.cost(ConsumptionProfile{0, 0, 0, 0}), 5.0);
}

TEST(WaterHeater, DpMatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 150; ++trial) {
    const Index T = 1 + static_cast<Index>(trial % 12);
    WaterHeaterParams p;
    p.tank_capacity = 1.0 + 3.0 * u01(rng);
    p.heat_rate = 0.5 + 1.5 * u01(rng);
    p.standing_loss = 0.2 * u01(rng);
    p.draw_size = 0.3 + 1.2 * u01(rng);
    p.discomfort_weight = 10.0 * u01(rng);
    p.state_levels = 2 + static_cast<int>(trial % 7);
    for (Index t = 0; t < T; ++t) p.demand.push_back(u01(rng) < 0.3 ? 1 : 0);
    const WaterHeaterUser user(p);
    const PriceVector price(Vec::NullaryExpr(T, [&] { return 2.0 * u01(rng); }));
    const ConsumptionProfile dp = user.best_response(price);
    const Enumerated oracle = enumerate_best(user, price);
    ASSERT_NEAR(objective(user, price, dp), oracle.objective, 1e-9 * std::max(1.0, std::abs(oracle.objective)))
        << "trial " << trial;
    EXPECT_EQ(dp.values(), oracle.schedule) << "trial " << trial;
    EXPECT_EQ(dp, user.best_response(price));
  }
}

TEST(WaterHeater, ValidationErrors) {
  auto p = heater_params({0, 1});
  p.state_levels = 1;
  try {
    WaterHeaterUser u(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  auto q = heater_params({0, 2});
  EXPECT_THROW(WaterHeaterUser{q}, Error);
  auto r = heater_params({0, 1});
  r.standing_loss = 1.0;
  EXPECT_THROW(WaterHeaterUser{r}, Error);
  const WaterHeaterUser ok(heater_params({0, 1}));
  EXPECT_THROW(ok.cost(ConsumptionProfile{0.5, 0}), Error);
  EXPECT_THROW(ok.best_response(PriceVector{0.0}), Error);
}

TEST(SampleDemand, DegenerateProbabilities) {
  EXPECT_EQ(sample_demand(4, 0.0, 99), (std::vector<int>{0, 0, 0, 0}));
  EXPECT_EQ(sample_demand(4, 1.0, 99), (std::vector<int>{1, 1, 1, 1}));
  EXPECT_THROW(sample_demand(4, 1.5, 0), Error);
}

TEST(SampleDemand, DeterministicPerSeed) {
  EXPECT_EQ(sample_demand(96, 0.1, 7), sample_demand(96, 0.1, 7));
  EXPECT_NE(sample_demand(96, 0.5, 7), sample_demand(96, 0.5, 8));
}

TEST(SampleDemand, MeanMatchesProbabilityAcrossSeeds) {
  // Average of 100 per-seed means; its standard error is sqrt(pq/96)/10, so
  // the 3 * sqrt(pq/96) band is very loose for the pooled mean and each
  // per-seed mean must sit inside 5 single-vector standard errors.
  const double se = std::sqrt(0.1 * 0.9 / 96.0);
  double pooled = 0.0;
  for (std::uint64_t seed = 7; seed < 107; ++seed) {
    const auto d = sample_demand(96, 0.1, seed);
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / 96.0;
    EXPECT_LT(std::abs(mean - 0.1), 5.0 * se);
    pooled += mean / 100.0;
  }
  EXPECT_LT(std::abs(pooled - 0.1), 3.0 * se);
}

}  // namespace
}  // namespace adaprice
