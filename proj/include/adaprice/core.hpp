#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adaprice/error.hpp"

namespace adaprice {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// A length-T vector of finite per-period values. The tag keeps prices,
/// per-user profiles and aggregate loads from being mixed up.
template <class Tag>
class Series {
 public:
  Series() = default;

  explicit Series(Vec values) : values_(std::move(values)) {
    if (!values_.allFinite()) throw Error(ErrorKind::invalid_argument, "series contains a non-finite entry");
  }

  Series(std::initializer_list<double> values) : Series(from_list(values)) {}

  static Series zeros(Index horizon) { return Series(Vec::Zero(horizon)); }
  static Series constant(Index horizon, double value) { return Series(Vec::Constant(horizon, value)); }

  const Vec& values() const noexcept { return values_; }
  Index size() const noexcept { return values_.size(); }
  double operator[](Index t) const { return values_[t]; }

  friend bool operator==(const Series& a, const Series& b) {
    return a.values_.size() == b.values_.size() && a.values_ == b.values_;
  }

 private:
  static Vec from_list(std::initializer_list<double> values) {
    Vec v(static_cast<Index>(values.size()));
    Index t = 0;
    for (double x : values) v[t++] = x;
    return v;
  }

  Vec values_;
};

struct PriceTag {};
struct ProfileTag {};
struct LoadTag {};

/// Per-period prices broadcast by the operator.
using PriceVector = Series<PriceTag>;
/// One user's energy use over the horizon.
using ConsumptionProfile = Series<ProfileTag>;
/// Elementwise sum of all users' profiles.
using AggregateLoad = Series<LoadTag>;

// ---------------------------------------------------------------------------
// Step sizes

enum class StepKind { harmonic, constant, geometric };

inline std::string_view to_string(StepKind kind) {
  switch (kind) {
    case StepKind::harmonic: return "harmonic";
    case StepKind::constant: return "constant";
    case StepKind::geometric: return "geometric";
  }
  return "unknown";
}

/// Step-size rule beta_k for the price update. Values are clamped to (0, 1]
/// so each update is a convex combination of the old price and the
/// externality. Only the harmonic family has divergent sum and summable
/// squares; the others are provided for faster empirical convergence.
class StepSchedule {
 public:
  static StepSchedule harmonic(double c) { return StepSchedule(StepKind::harmonic, c, 1.0); }
  static StepSchedule constant(double c) { return StepSchedule(StepKind::constant, c, 1.0); }
  static StepSchedule geometric(double c, double ratio) { return StepSchedule(StepKind::geometric, c, ratio); }

  StepKind kind() const noexcept { return kind_; }
  double scale() const noexcept { return c_; }
  double ratio() const noexcept { return ratio_; }

  double operator()(std::int64_t k) const {
    if (k < 1) throw Error(ErrorKind::invalid_argument, "step index must be >= 1");
    double beta = 0.0;
    switch (kind_) {
      case StepKind::harmonic: beta = c_ / static_cast<double>(k); break;
      case StepKind::constant: beta = c_; break;
      case StepKind::geometric: beta = c_ * std::pow(ratio_, static_cast<double>(k - 1)); break;
    }
    return std::min(1.0, beta);
  }

  /// Checks every beta_k for k <= budget stays strictly positive.
  void validate_budget(std::int64_t budget) const {
    if (budget < 1) throw Error(ErrorKind::config, "iteration budget must be >= 1");
    // Both decaying families are monotone in k, so the last step is the smallest.
    if (!((*this)(budget) > 0.0))
      throw Error(ErrorKind::config, "step size underflows to zero within " + std::to_string(budget) + " iterations");
  }

 private:
  StepSchedule(StepKind kind, double c, double ratio) : kind_(kind), c_(c), ratio_(ratio) {
    if (!(c > 0.0) || !std::isfinite(c)) throw Error(ErrorKind::config, "step scale c must be positive and finite");
    if (kind == StepKind::geometric && !(ratio > 0.0 && ratio <= 1.0))
      throw Error(ErrorKind::config, "geometric ratio must lie in (0, 1]");
  }

  StepKind kind_;
  double c_;
  double ratio_;
};

inline double step_size(const StepSchedule& schedule, std::int64_t k) { return schedule(k); }

// ---------------------------------------------------------------------------
// Aggregation

inline AggregateLoad aggregate(std::span<const ConsumptionProfile> profiles) {
  if (profiles.empty()) throw Error(ErrorKind::invalid_argument, "cannot aggregate an empty profile list");
  const Index horizon = profiles.front().size();
  Vec sum = Vec::Zero(horizon);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].size() != horizon)
      throw Error(ErrorKind::dimension, "profiles[" + std::to_string(i) + "]",
                  "length " + std::to_string(profiles[i].size()) + " differs from " + std::to_string(horizon));
    sum += profiles[i].values();
  }
  return AggregateLoad(std::move(sum));
}

inline AggregateLoad aggregate(const std::vector<ConsumptionProfile>& profiles) {
  return aggregate(std::span<const ConsumptionProfile>(profiles));
}

// ---------------------------------------------------------------------------
// Trace records

struct IterationRecord {
  std::int64_t k = 0;
  double beta = 0.0;
  PriceVector price;
  AggregateLoad aggregate;
  PriceVector externality;
  double residual = 0.0;           // inf-norm of externality - price
  double price_change = 0.0;       // inf-norm of p_{k+1} - p_k relative to max(1, |p_k|)
  double user_cost_sum = 0.0;
  double system_cost = 0.0;
  double social_welfare = 0.0;     // user_cost_sum + system_cost
  std::map<std::string, double> lyapunov;
};

// ---------------------------------------------------------------------------
// Deterministic random numbers

/// splitmix64 finalizer; used to derive independent per-item seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit engine draw.
/// Avoids std::uniform_real_distribution, whose output is library-specific.
template <class Engine>
double unit_uniform(Engine& engine) {
  static_assert(Engine::min() == 0 && Engine::max() == std::numeric_limits<std::uint64_t>::max());
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

}  // namespace adaprice
