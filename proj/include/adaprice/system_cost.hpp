#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "adaprice/core.hpp"

namespace adaprice {

/// g(z) = 1/2 (z+b)^T B (z+b) - 1/2 b^T B b with B symmetric positive
/// definite and b an inflexible background load (zero by default).
class QuadraticSystemCost {
 public:
  explicit QuadraticSystemCost(Mat b, std::optional<Vec> base_load = std::nullopt) : b_(std::move(b)) {
    if (b_.rows() != b_.cols() || b_.rows() < 1) throw Error(ErrorKind::dimension, "B", "matrix must be square, T >= 1");
    if (!b_.allFinite()) throw Error(ErrorKind::invalid_argument, "B", "non-finite entry");
    const double scale = std::max(1.0, b_.cwiseAbs().maxCoeff());
    if ((b_ - b_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw Error(ErrorKind::invalid_argument, "B", "matrix is not symmetric");
    llt_.compute(b_);
    if (llt_.info() != Eigen::Success) throw Error(ErrorKind::invalid_argument, "B", "matrix is not positive definite");
    base_ = base_load ? std::move(*base_load) : Vec::Zero(b_.rows());
    if (base_.size() != b_.rows()) throw Error(ErrorKind::dimension, "base_load", "length differs from B");
    if (!base_.allFinite()) throw Error(ErrorKind::invalid_argument, "base_load", "non-finite entry");
    offset_ = b_ * base_;
  }

  static QuadraticSystemCost diagonal(const Vec& d) { return QuadraticSystemCost(Mat(d.asDiagonal())); }
  static QuadraticSystemCost scalar(Index horizon, double b) {
    return QuadraticSystemCost(Mat(Vec::Constant(horizon, b).asDiagonal()));
  }

  Index horizon() const noexcept { return b_.rows(); }
  const Mat& matrix() const noexcept { return b_; }
  const Vec& base_load() const noexcept { return base_; }
  /// B b, the constant part of the gradient.
  const Vec& offset() const noexcept { return offset_; }
  Vec solve(const Vec& v) const { return llt_.solve(v); }

  double cost(const Vec& z) const { return 0.5 * z.dot(b_ * z) + offset_.dot(z); }
  Vec gradient(const Vec& z) const { return b_ * z + offset_; }

 private:
  Mat b_;
  Vec base_;
  Vec offset_;
  Eigen::LLT<Mat> llt_;
};

/// g(z) = lambda * ||z||^2, i.e. the quadratic cost with B = 2 lambda I.
class ScaledNormSquaredCost {
 public:
  ScaledNormSquaredCost(Index horizon, double lambda) : horizon_(horizon), lambda_(lambda) {
    if (horizon < 1) throw Error(ErrorKind::dimension, "horizon must be >= 1");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw Error(ErrorKind::invalid_argument, "lambda", "must be positive and finite");
  }

  Index horizon() const noexcept { return horizon_; }
  double lambda() const noexcept { return lambda_; }
  Mat matrix() const { return Mat(Vec::Constant(horizon_, 2.0 * lambda_).asDiagonal()); }
  Vec solve(const Vec& v) const { return v / (2.0 * lambda_); }

  double cost(const Vec& z) const { return lambda_ * z.squaredNorm(); }
  Vec gradient(const Vec& z) const { return 2.0 * lambda_ * z; }

 private:
  Index horizon_;
  double lambda_;
};

/// Smoothed peak cost g(z) = lambda * (1/alpha) log sum_t exp(alpha z_t).
/// Evaluated in max-shifted form so large alpha * z never overflows.
class LSEPeakCost {
 public:
  LSEPeakCost(Index horizon, double lambda, double alpha) : horizon_(horizon), lambda_(lambda), alpha_(alpha) {
    if (horizon < 1) throw Error(ErrorKind::dimension, "horizon must be >= 1");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw Error(ErrorKind::invalid_argument, "lambda", "must be positive and finite");
    if (!(alpha > 0.0) || !std::isfinite(alpha))
      throw Error(ErrorKind::invalid_argument, "alpha", "must be positive and finite");
  }

  Index horizon() const noexcept { return horizon_; }
  double lambda() const noexcept { return lambda_; }
  double alpha() const noexcept { return alpha_; }

  double cost(const Vec& z) const {
    const double m = z.maxCoeff();
    const double s = (alpha_ * (z.array() - m)).exp().sum();
    return lambda_ * (m + std::log(s) / alpha_);
  }

  /// lambda * softmax(alpha z)
  Vec gradient(const Vec& z) const { return lambda_ * softmax(z); }

  Vec softmax(const Vec& z) const {
    const double m = z.maxCoeff();
    Vec w = (alpha_ * (z.array() - m)).exp().matrix();
    return w / w.sum();
  }

 private:
  Index horizon_;
  double lambda_;
  double alpha_;
};

/// The system-cost model g together with its externality map e = grad g.
class SystemCost {
 public:
  using Variant = std::variant<QuadraticSystemCost, ScaledNormSquaredCost, LSEPeakCost>;

  SystemCost(Variant model) : model_(std::move(model)) {}  // NOLINT(google-explicit-constructor)

  const Variant& model() const noexcept { return model_; }
  Index horizon() const {
    return std::visit([](const auto& m) { return m.horizon(); }, model_);
  }

  /// True for the quadratic forms (including the scaled-norm form).
  bool is_quadratic() const { return !std::holds_alternative<LSEPeakCost>(model_); }

  /// B for quadratic costs; throws for LSE.
  Mat quadratic_matrix() const {
    if (const auto* q = std::get_if<QuadraticSystemCost>(&model_)) return q->matrix();
    if (const auto* n = std::get_if<ScaledNormSquaredCost>(&model_)) return n->matrix();
    throw Error(ErrorKind::unsupported, "system cost is not quadratic");
  }

  /// Constant gradient term c in e(z) = B z + c for quadratic costs.
  Vec quadratic_offset() const {
    if (const auto* q = std::get_if<QuadraticSystemCost>(&model_)) return q->offset();
    if (const auto* n = std::get_if<ScaledNormSquaredCost>(&model_)) return Vec::Zero(n->horizon());
    throw Error(ErrorKind::unsupported, "system cost is not quadratic");
  }

 private:
  Variant model_;
};

namespace detail {
inline void check_load(const SystemCost& model, const Vec& z) {
  if (z.size() != model.horizon())
    throw Error(ErrorKind::dimension, "aggregate",
                "length " + std::to_string(z.size()) + " differs from system-cost dimension " +
                    std::to_string(model.horizon()));
  if (!z.allFinite()) throw Error(ErrorKind::invalid_argument, "aggregate", "non-finite entry");
}
}  // namespace detail

inline double cost(const SystemCost& model, const AggregateLoad& z) {
  detail::check_load(model, z.values());
  return std::visit([&](const auto& m) { return m.cost(z.values()); }, model.model());
}

inline PriceVector externality(const SystemCost& model, const AggregateLoad& z) {
  detail::check_load(model, z.values());
  return PriceVector(std::visit([&](const auto& m) { return Vec(m.gradient(z.values())); }, model.model()));
}

/// Exact peak cost c * max_t z_t; for reporting only, never a dynamics driver.
inline double peak_cost(double c, const AggregateLoad& z) { return c * z.values().maxCoeff(); }

/// Central-difference gradient of `cost` compared against `externality`;
/// returns the inf-norm discrepancy.
inline double finite_diff_gradient_check(const SystemCost& model, const AggregateLoad& z, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::invalid_argument, "h", "must be positive");
  const Vec grad = externality(model, z).values();
  Vec probe = z.values();
  double worst = 0.0;
  for (Index t = 0; t < probe.size(); ++t) {
    const double saved = probe[t];
    probe[t] = saved + h;
    const double up = cost(model, AggregateLoad(probe));
    probe[t] = saved - h;
    const double down = cost(model, AggregateLoad(probe));
    probe[t] = saved;
    worst = std::max(worst, std::abs((up - down) / (2.0 * h) - grad[t]));
  }
  return worst;
}

}  // namespace adaprice
