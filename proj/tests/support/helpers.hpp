#pragma once

// Shared fixtures and independent oracles for the test suites.  Oracles
// here deliberately avoid the library code paths they check: higher-order
// finite differences for derivatives, a profile-likelihood univariate
// Weibull fitter for estimation cross-checks, closed-form category
// probabilities for the observation scheme, and a Kolmogorov-Smirnov
// statistic for distributional tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "biweibull/model.hpp"
#include "biweibull/numerics.hpp"

namespace testsup {

using biweibull::model::ModelParams;

// Reference parameter set: the model fitted to the Stanford heart
// transplant data (time unit days).  Strong dependence, both shapes
// below 1; exercises every numerically awkward corner.
inline ModelParams stanford_fit() { return {0.5596, 35.5837, 0.5587, 385.6361, 0.48300}; }

// Exchangeable independent unit exponentials: closed forms exist for
// everything, e.g. Pr(t < X < Y) = exp(-2t)/2.
inline ModelParams unit_exponentials() { return {1.0, 1.0, 1.0, 1.0, 1.0}; }

// Fourth-order central difference, one coordinate of a vector function.
// Error O(h^4); used as the slower, sharper check on the second-order
// kernels in the library.
inline double fd4_partial(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> x, std::size_t i, double h) {
  const double xi = x[i];
  auto at = [&](double v) {
    x[i] = v;
    const double r = f(x);
    x[i] = xi;
    return r;
  };
  return (-at(xi + 2 * h) + 8 * at(xi + h) - 8 * at(xi - h) + at(xi - 2 * h)) / (12 * h);
}

// One-sample Kolmogorov-Smirnov statistic sqrt(n)-scaled with the usual
// small-sample correction; compare against 1.9495 for significance 0.001.
inline double ks_scaled_statistic(std::vector<double> draws,
                                  const std::function<double(double)>& cdf) {
  std::sort(draws.begin(), draws.end());
  const double n = static_cast<double>(draws.size());
  double d = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double u = cdf(draws[i]);
    d = std::max(d, std::max(u - static_cast<double>(i) / n,
                             static_cast<double>(i + 1) / n - u));
  }
  return d * (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n));
}

inline constexpr double kKs001 = 1.9495;  // sqrt(-ln(0.001/2)/2)

// --- univariate censored Weibull oracle -------------------------------
//
// Log-likelihood of right-censored Weibull observations, written from the
// textbook form rather than through the bivariate model:
//   observed:  log(g/l) + (g-1) log(t/l) - (t/l)^g
//   censored:  -(t/l)^g
inline double uniweibull_loglik(const std::vector<double>& t, const std::vector<bool>& observed,
                                double lambda, double gamma) {
  biweibull::numerics::KahanSum s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double z = std::pow(t[i] / lambda, gamma);
    if (observed[i]) {
      s.add(std::log(gamma / lambda) + (gamma - 1.0) * std::log(t[i] / lambda) - z);
    } else {
      s.add(-z);
    }
  }
  return s.value();
}

// MLE via the profile: for fixed gamma the scale maximizer is closed form,
//   lambda(gamma) = (sum t_i^gamma / n_events)^(1/gamma),
// leaving a one-dimensional concave profile maximized by golden-section.
inline std::pair<double, double> uniweibull_mle(const std::vector<double>& t,
                                                const std::vector<bool>& observed) {
  std::size_t d = 0;
  for (bool o : observed) d += o ? 1 : 0;
  if (d == 0) throw std::invalid_argument("uniweibull_mle: needs at least one observed event");

  auto lambda_hat = [&](double gamma) {
    double s = 0.0;
    for (double ti : t) s += std::pow(ti, gamma);
    return std::pow(s / static_cast<double>(d), 1.0 / gamma);
  };
  auto profile = [&](double gamma) {
    return uniweibull_loglik(t, observed, lambda_hat(gamma), gamma);
  };

  double lo = 0.02, hi = 50.0;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c1 = b - phi * (b - a), c2 = a + phi * (b - a);
  double f1 = profile(c1), f2 = profile(c2);
  for (int it = 0; it < 300; ++it) {
    if (f1 < f2) {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + phi * (b - a);
      f2 = profile(c2);
    } else {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - phi * (b - a);
      f1 = profile(c1);
    }
  }
  const double gamma = 0.5 * (a + b);
  return {lambda_hat(gamma), gamma};
}

// --- observation-scheme category probabilities ------------------------
//
// For a fixed censor time c the four category masses have single-integral
// forms.  The both-observed mass collapses by the fundamental theorem of
// calculus: the inner integral of the density over x in (0, y) equals
// [-dS/dy](0, y) - [-dS/dy](y, y), and [-dS/dy](0, y) is the marginal
// density of Y.  So with g(y) = f_Y(y) - [-dS/dy](y, y):
//   P(both observed)      = int_0^c g(y) dy
//   P(first obs, 2nd cens) = S_Y(c) - S(c, c)
//   P(fatal first)         = F_Y(c) - P(both observed)
//   P(neither)             = S(c, c)
// and the four sum to one identically.
struct CategoryProbs {
  double p;
  double q;
  double r;
  double censored;
};

inline CategoryProbs category_probs(const ModelParams& th, double c,
                                    const biweibull::numerics::QuadratureSpec& spec = {1e-9, 1e-12,
                                                                                       400}) {
  namespace bm = biweibull::model;
  auto g = [&](double y) {
    return bm::marginal_density_y(y, th) - bm::neg_dS_dy(y, y, th);
  };
  CategoryProbs out;
  out.p = biweibull::numerics::integrate_finite(g, 0.0, c, spec);
  const double sy = bm::marginal_survival_y(c, th);
  const double scc = bm::joint_survival(c, c, th);
  out.q = sy - scc;
  out.r = (1.0 - sy) - out.p;
  out.censored = scc;
  return out;
}

// Same masses when the censor time is uniform on [lo, hi] (hi <= study
// end): mix the fixed-c expressions over c, swapping integration order so
// the both-observed mass stays a single integral with the weight
// w(y) = Pr(c >= y).
inline CategoryProbs category_probs_uniform_censor(
    const ModelParams& th, double lo, double hi,
    const biweibull::numerics::QuadratureSpec& spec = {1e-9, 1e-12, 400}) {
  namespace bm = biweibull::model;
  namespace bn = biweibull::numerics;
  const double width = hi - lo;
  auto g = [&](double y) {
    return bm::marginal_density_y(y, th) - bm::neg_dS_dy(y, y, th);
  };
  CategoryProbs out;
  out.p = bn::integrate_finite(g, 0.0, lo, spec) +
          bn::integrate_finite([&](double y) { return g(y) * (hi - y) / width; }, lo, hi, spec);
  const double mean_sy =
      bn::integrate_finite([&](double c) { return bm::marginal_survival_y(c, th); }, lo, hi, spec) /
      width;
  const double mean_scc =
      bn::integrate_finite([&](double c) { return bm::joint_survival(c, c, th); }, lo, hi, spec) /
      width;
  out.q = mean_sy - mean_scc;
  out.r = (1.0 - mean_sy) - out.p;
  out.censored = mean_scc;
  return out;
}

// Swap the roles of the margins; Pr(t < Y < X) under th equals
// Pr(t < X < Y) under the swapped parameters.
inline ModelParams swap_margins(const ModelParams& p) {
  return {p.alpha, p.lambda2, p.gamma2, p.lambda1, p.gamma1};
}

}  // namespace testsup
