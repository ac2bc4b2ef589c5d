#pragma once

// Bivariate Weibull dependence model.  The joint survival function is
//
//   S(x, y) = exp(-[ (x/l1)^(g1/a) + (y/l2)^(g2/a) ]^a),   0 < a <= 1,
//
// with Weibull(l1, g1) and Weibull(l2, g2) marginals for every a, and exact
// independence at a = 1.  Smaller a means stronger positive association.
//
// Derivatives are closed-form (the optimizer calls them in a hot loop);
// finite differences live in the tests as the independent check.  Every
// probability-valued quantity has a log-space companion because the
// likelihood works in logs and exp(-big) underflows long before the
// parameters stop being worth evaluating.

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "biweibull/numerics.hpp"

namespace biweibull::model {

struct ModelParams {
  double alpha;    // association, (0, 1]; 1 is independence
  double lambda1;  // scale of X (days)
  double gamma1;   // shape of X
  double lambda2;  // scale of Y (days)
  double gamma2;   // shape of Y

  void validate() const {
    auto fail = [](const char* what, double v) {
      std::ostringstream msg;
      msg << "ModelParams: " << what << " (got " << v << ")";
      throw std::invalid_argument(msg.str());
    };
    if (!(alpha > 0.0 && alpha <= 1.0)) fail("alpha must be in (0, 1]", alpha);
    if (!(lambda1 > 0.0) || !std::isfinite(lambda1)) fail("lambda1 must be positive and finite", lambda1);
    if (!(gamma1 > 0.0) || !std::isfinite(gamma1)) fail("gamma1 must be positive and finite", gamma1);
    if (!(lambda2 > 0.0) || !std::isfinite(lambda2)) fail("lambda2 must be positive and finite", lambda2);
    if (!(gamma2 > 0.0) || !std::isfinite(gamma2)) fail("gamma2 must be positive and finite", gamma2);
  }
};

namespace detail {

inline void require_nonneg(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    std::ostringstream msg;
    msg << name << " must be finite and >= 0, got " << v;
    throw std::domain_error(msg.str());
  }
}

// Exact zeros are rejected wherever a sub-density is evaluated: for
// gamma/alpha < 1 these densities diverge at the axes, which is also why
// zero observation times are dropped during data cleaning.
inline void require_pos(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    std::ostringstream msg;
    msg << name << " must be finite and > 0 (sub-densities are singular at the origin), got " << v;
    throw std::domain_error(msg.str());
  }
}

// Inner terms carried as logs: u = (x/l1)^(g1/a), v = (y/l2)^(g2/a),
// w = u + v.  a1 = log u and a2 = log v may be -inf at x = 0 / y = 0.
struct Terms {
  double a1;
  double a2;
  double log_w;
  double w_alpha;  // exp(alpha * log_w); 0 when x = y = 0
};

inline Terms terms(const ModelParams& p, double x, double y) {
  Terms t;
  t.a1 = (p.gamma1 / p.alpha) * std::log(x / p.lambda1);
  t.a2 = (p.gamma2 / p.alpha) * std::log(y / p.lambda2);
  t.log_w = numerics::log_sum_exp(t.a1, t.a2);
  t.w_alpha = std::exp(p.alpha * t.log_w);
  return t;
}

// log(alpha * w^alpha + 1 - alpha), stable for both tiny and huge w.
inline double log_poly_term(double alpha, double log_w) {
  const double s = alpha * log_w;  // log(w^alpha)
  if (s >= 0.0) return s + std::log(alpha + (1.0 - alpha) * std::exp(-s));
  return std::log((1.0 - alpha) + alpha * std::exp(s));
}

}  // namespace detail

// log S(x, y); exact at the corner: log S(0, 0) = 0.
inline double log_joint_survival(double x, double y, const ModelParams& p) {
  p.validate();
  detail::require_nonneg(x, "x");
  detail::require_nonneg(y, "y");
  return -detail::terms(p, x, y).w_alpha;
}

// S(x, y) = Pr(X > x, Y > y).
inline double joint_survival(double x, double y, const ModelParams& p) {
  return std::exp(log_joint_survival(x, y, p));
}

// log of -dS/dx: the sub-density of "X observed at x while Y exceeds y".
inline double log_neg_dS_dx(double x, double y, const ModelParams& p) {
  p.validate();
  detail::require_pos(x, "x");
  detail::require_nonneg(y, "y");
  const auto t = detail::terms(p, x, y);
  return -t.w_alpha + std::log(p.gamma1) + t.a1 - std::log(x) +
         (p.alpha - 1.0) * t.log_w;
}

inline double neg_dS_dx(double x, double y, const ModelParams& p) {
  return std::exp(log_neg_dS_dx(x, y, p));
}

inline double log_neg_dS_dy(double x, double y, const ModelParams& p) {
  p.validate();
  detail::require_nonneg(x, "x");
  detail::require_pos(y, "y");
  const auto t = detail::terms(p, x, y);
  return -t.w_alpha + std::log(p.gamma2) + t.a2 - std::log(y) +
         (p.alpha - 1.0) * t.log_w;
}

inline double neg_dS_dy(double x, double y, const ModelParams& p) {
  return std::exp(log_neg_dS_dy(x, y, p));
}

// log joint density.  Differentiating S twice gives
//
//   f(x, y) = S * (g1 u / x)(g2 v / y) * w^(a-2) * (a w^a + 1 - a) / a,
//
// strictly positive on x, y > 0 for every valid parameter set.
inline double log_joint_density(double x, double y, const ModelParams& p) {
  p.validate();
  detail::require_pos(x, "x");
  detail::require_pos(y, "y");
  const auto t = detail::terms(p, x, y);
  return -t.w_alpha + std::log(p.gamma1) + t.a1 - std::log(x) +
         std::log(p.gamma2) + t.a2 - std::log(y) +
         (p.alpha - 2.0) * t.log_w - std::log(p.alpha) +
         detail::log_poly_term(p.alpha, t.log_w);
}

inline double joint_density(double x, double y, const ModelParams& p) {
  return std::exp(log_joint_density(x, y, p));
}

// Marginal survival functions: plain Weibulls, obtained by zeroing the
// other coordinate so they agree with joint_survival bit for bit.
inline double marginal_survival_x(double x, const ModelParams& p) {
  return joint_survival(x, 0.0, p);
}

inline double marginal_survival_y(double y, const ModelParams& p) {
  return joint_survival(0.0, y, p);
}

inline double log_marginal_density_x(double x, const ModelParams& p) {
  p.validate();
  detail::require_pos(x, "x");
  const double lr = std::log(x / p.lambda1);
  return std::log(p.gamma1) - std::log(x) + p.gamma1 * lr - std::exp(p.gamma1 * lr);
}

inline double marginal_density_x(double x, const ModelParams& p) {
  return std::exp(log_marginal_density_x(x, p));
}

inline double log_marginal_density_y(double y, const ModelParams& p) {
  p.validate();
  detail::require_pos(y, "y");
  const double lr = std::log(y / p.lambda2);
  return std::log(p.gamma2) - std::log(y) + p.gamma2 * lr - std::exp(p.gamma2 * lr);
}

inline double marginal_density_y(double y, const ModelParams& p) {
  return std::exp(log_marginal_density_y(y, p));
}

// Pr(t < X < Y): both events still ahead at time t with X arriving first.
// Evaluated through the boundary identity
//
//   Pr(t < X < Y) = S(t, t) - int_t^inf [-dS/dy](y, y) dy,
//
// the integral taken to infinity by the rational map in
// integrate_semi_infinite.  Values that stray past [0, 1] by at most 1e-9
// are quadrature dust and get clamped; anything further out is a bug and
// is reported, not hidden.
inline double tail_prob(double t, const ModelParams& p,
                        const numerics::QuadratureSpec& spec = {}) {
  p.validate();
  detail::require_nonneg(t, "t");
  const double diag = joint_survival(t, t, p);
  if (diag == 0.0) return 0.0;
  const double gone_second = numerics::integrate_semi_infinite(
      [&](double y) { return neg_dS_dy(y, y, p); }, t, spec);
  double r = diag - gone_second;
  constexpr double slack = 1e-9;
  if (r < 0.0 || r > 1.0) {
    if (r >= -slack && r <= 1.0 + slack) return std::min(std::max(r, 0.0), 1.0);
    std::ostringstream msg;
    msg << "tail_prob: result " << r << " outside [0, 1] beyond quadrature tolerance at t = " << t;
    throw std::runtime_error(msg.str());
  }
  return r;
}

// Same probability by the direct route: Pr(t < X < Y) as the double
// integral int_t^inf dy int_t^y dx f(x, y), nested adaptive quadrature in
// both variables.  Slower and entirely independent of the boundary
// identity above, which is exactly why it exists: it is the cross-check
// printed by the verify command and used in the tests.
inline double tail_prob_double_integral(double t, const ModelParams& p,
                                        const numerics::QuadratureSpec& spec = {1e-8, 1e-10, 400}) {
  p.validate();
  detail::require_nonneg(t, "t");
  numerics::QuadratureSpec inner = spec;
  inner.rel_tol = spec.rel_tol / 10.0;
  inner.abs_tol = spec.abs_tol / 10.0;
  return numerics::integrate_semi_infinite(
      [&](double y) {
        if (y <= t) return 0.0;
        return numerics::integrate_finite(
            [&](double x) { return joint_density(x, y, p); }, t, y, inner);
      },
      t, spec);
}

}  // namespace biweibull::model
