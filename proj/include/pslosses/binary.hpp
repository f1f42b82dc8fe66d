#pragma once

// Binary losses and their propensity-scored forms. A label that is truly
// positive is observed positive only with probability p; the PS operator
// reweights the base loss so that its expectation over that masking equals
// the clean loss. The upper-bound form trades unbiasedness for convexity.

#include <cmath>
#include <string>

#include "pslosses/common.hpp"
#include "pslosses/core.hpp"

namespace pslosses {

enum class BinaryLossKind { squared_error, bce, squared_hinge, zero_one };

enum class Variant { vanilla, unbiased, upper_bound };

inline const char* to_string(BinaryLossKind kind) {
  switch (kind) {
    case BinaryLossKind::squared_error: return "squared_error";
    case BinaryLossKind::bce: return "bce";
    case BinaryLossKind::squared_hinge: return "squared_hinge";
    case BinaryLossKind::zero_one: return "zero_one";
  }
  return "?";
}

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::unbiased: return "unbiased";
    case Variant::upper_bound: return "upper_bound";
  }
  return "?";
}

inline void check_propensity_scalar(double p) {
  if (!(p > 0.0) || !(p <= 1.0))
    throw ParameterError("propensity " + format_double(p) + " outside (0, 1]");
}

// Base loss f(y, yhat) for y in {0, 1}. bce consumes probability-type scores
// in the open interval (0, 1) and rejects anything else; squared_hinge uses
// margin semantics (positive scores mean positive); zero_one thresholds the
// margin at 0 and has no gradient.
struct BinaryLoss {
  BinaryLossKind kind = BinaryLossKind::squared_error;

  void check_domain(double yhat) const {
    if (kind == BinaryLossKind::bce) {
      if (!(yhat > 0.0) || !(yhat < 1.0))
        throw DomainError("bce needs scores in (0, 1), got " + format_double(yhat));
      return;
    }
    if (!std::isfinite(yhat))
      throw DomainError(std::string(to_string(kind)) + " got non-finite score");
  }

  bool differentiable() const { return kind != BinaryLossKind::zero_one; }

  double value_pos(double yhat) const {  // f(1, yhat)
    check_domain(yhat);
    switch (kind) {
      case BinaryLossKind::squared_error: return (1.0 - yhat) * (1.0 - yhat);
      case BinaryLossKind::bce: return -std::log(yhat);
      case BinaryLossKind::squared_hinge: {
        const double m = std::max(0.0, 1.0 - yhat);
        return m * m;
      }
      case BinaryLossKind::zero_one: return yhat <= 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
  }

  double value_neg(double yhat) const {  // f(0, yhat)
    check_domain(yhat);
    switch (kind) {
      case BinaryLossKind::squared_error: return yhat * yhat;
      case BinaryLossKind::bce: return -std::log1p(-yhat);
      case BinaryLossKind::squared_hinge: {
        const double m = std::max(0.0, 1.0 + yhat);
        return m * m;
      }
      case BinaryLossKind::zero_one: return yhat > 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
  }

  double value(int y, double yhat) const {
    return y != 0 ? value_pos(yhat) : value_neg(yhat);
  }

  double grad_pos(double yhat) const {  // d/dyhat f(1, yhat)
    check_domain(yhat);
    switch (kind) {
      case BinaryLossKind::squared_error: return -2.0 * (1.0 - yhat);
      case BinaryLossKind::bce: return -1.0 / yhat;
      case BinaryLossKind::squared_hinge: return -2.0 * std::max(0.0, 1.0 - yhat);
      case BinaryLossKind::zero_one: break;
    }
    throw ParameterError("zero_one loss has no gradient");
  }

  double grad_neg(double yhat) const {  // d/dyhat f(0, yhat)
    check_domain(yhat);
    switch (kind) {
      case BinaryLossKind::squared_error: return 2.0 * yhat;
      case BinaryLossKind::bce: return 1.0 / (1.0 - yhat);
      case BinaryLossKind::squared_hinge: return 2.0 * std::max(0.0, 1.0 + yhat);
      case BinaryLossKind::zero_one: break;
    }
    throw ParameterError("zero_one loss has no gradient");
  }

  double gradient(int y, double yhat) const {
    return y != 0 ? grad_pos(yhat) : grad_neg(yhat);
  }
};

inline void check_binary_label(int y) {
  if (y != 0 && y != 1)
    throw ParameterError("binary label must be 0 or 1, got " + std::to_string(y));
}

// Unbiased estimate of the clean loss from one observed label:
//   y = 1 -> (f(1,yhat) + (p-1) f(0,yhat)) / p,   y = 0 -> f(0,yhat).
// Taking the expectation over the mask (positive observed with prob. p)
// recovers the clean loss exactly. At p = 1 this collapses to the base loss,
// bit for bit.
inline double ps_loss(const BinaryLoss& base, double p, int y, double yhat) {
  check_propensity_scalar(p);
  check_binary_label(y);
  if (y == 1) return (base.value_pos(yhat) + (p - 1.0) * base.value_neg(yhat)) / p;
  return base.value_neg(yhat);
}

// d/dyhat of ps_loss; the reweighting does not depend on yhat, so it applies
// directly to the base gradients.
inline double ps_gradient(const BinaryLoss& base, double p, int y, double yhat) {
  check_propensity_scalar(p);
  check_binary_label(y);
  if (y == 1) return (base.grad_pos(yhat) + (p - 1.0) * base.grad_neg(yhat)) / p;
  return base.grad_neg(yhat);
}

// Convex upper bound on the expected clean loss (an additive constant that
// does not depend on yhat is dropped):
//   y = 1 -> (2/p - 1) f(1,yhat),   y = 0 -> f(0,yhat).
// Unlike ps_loss this keeps convexity of the base loss, at the cost of bias.
inline double binary_upper_bound(const BinaryLoss& base, double p, int y, double yhat) {
  check_propensity_scalar(p);
  check_binary_label(y);
  if (y == 1) return (2.0 / p - 1.0) * base.value_pos(yhat);
  return base.value_neg(yhat);
}

inline double binary_upper_bound_gradient(const BinaryLoss& base, double p, int y,
                                          double yhat) {
  check_propensity_scalar(p);
  check_binary_label(y);
  if (y == 1) return (2.0 / p - 1.0) * base.grad_pos(yhat);
  return base.grad_neg(yhat);
}

struct VarianceEstimate {
  double exact = 0.0;   // variance of the two-point PS loss under Y ~ Bernoulli(q)
  double approx = 0.0;  // quick 1/p^2 form: q(1-q) (f_pos - f_neg)^2 / p^2
};

// Variance of ps_loss at a fixed score when the observed label is
// Bernoulli(q), q being the *observed* positive rate (q = p times the clean
// rate). The loss takes two values a = ps_loss(..., 1, .), b = ps_loss(..., 0, .),
// so the exact variance is q(1-q)(a-b)^2. The quick form expands (a-b) to
// (f_pos - f_neg)/p; the two routes agree algebraically and serve as a
// mutual check. Variance grows like 1/p as p shrinks (with q = p q*).
inline VarianceEstimate variance_ratio_estimate(const BinaryLoss& base, double p,
                                                double q, double yhat) {
  check_propensity_scalar(p);
  if (!(q >= 0.0) || !(q <= 1.0))
    throw ParameterError("observed positive rate " + format_double(q) + " outside [0, 1]");
  const double a = ps_loss(base, p, 1, yhat);
  const double b = ps_loss(base, p, 0, yhat);
  const double bernoulli_var = q * (1.0 - q);
  VarianceEstimate out;
  out.exact = bernoulli_var * (a - b) * (a - b);
  const double raw_diff = base.value_pos(yhat) - base.value_neg(yhat);
  out.approx = bernoulli_var * (raw_diff / p) * (raw_diff / p);
  return out;
}

}  // namespace pslosses
