#pragma once

// Maximum-likelihood fitting.
//
// The five parameters live on a constrained set (scales and shapes
// positive, alpha in (0, 1]); optimization happens in an unconstrained
// transform (logit for alpha, log for the rest) with a derivative-free
// simplex search plus jittered restarts, followed by an optional Newton
// polish that is only allowed to improve the objective.  Standard errors
// come from the finite-difference Hessian of the negative log-likelihood
// in the ORIGINAL parameterization, which is the scale on which they are
// reported.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "biweibull/likelihood.hpp"
#include "biweibull/model.hpp"
#include "biweibull/numerics.hpp"
#include "biweibull/simulation.hpp"

namespace biweibull::estimation {

using model::ModelParams;

// Which dataset log-likelihood to maximize: the termination scheme (the
// default) or the plain right-censoring baseline for synthetic data.
enum class Objective { Termination, PlainCensoring };

// Transform order everywhere: (alpha, lambda1, gamma1, lambda2, gamma2).
inline std::array<double, 5> to_unconstrained(const ModelParams& p) {
  p.validate();
  if (p.alpha == 1.0) {
    throw std::invalid_argument(
        "to_unconstrained: alpha = 1 is the boundary (logit is infinite); "
        "nudge to 1 - 1e-8 first");
  }
  return {std::log(p.alpha / (1.0 - p.alpha)), std::log(p.lambda1),
          std::log(p.gamma1), std::log(p.lambda2), std::log(p.gamma2)};
}

inline ModelParams from_unconstrained(const std::array<double, 5>& v) {
  return {1.0 / (1.0 + std::exp(-v[0])), std::exp(v[1]), std::exp(v[2]),
          std::exp(v[3]), std::exp(v[4])};
}

struct FitConfig {
  std::optional<ModelParams> init;  // default: data-driven starting point
  int max_iter = 2000;              // simplex iterations per start
  double f_tol = 1e-10;
  double x_tol = 1e-8;
  int restarts = 5;                 // jittered starts beyond the first
  std::uint64_t seed = 20140615;    // jitter stream; fit is a pure function of (data, cfg)
  Objective objective = Objective::Termination;
  numerics::QuadratureSpec quad;    // tolerances for tail-probability factors

  void validate() const {
    if (max_iter < 1) throw std::invalid_argument("FitConfig: max_iter must be >= 1");
    if (!(f_tol > 0.0)) throw std::invalid_argument("FitConfig: f_tol must be > 0");
    if (!(x_tol > 0.0)) throw std::invalid_argument("FitConfig: x_tol must be > 0");
    if (restarts < 0) throw std::invalid_argument("FitConfig: restarts must be >= 0");
  }
};

struct FitResult {
  ModelParams estimate;
  std::optional<std::array<double, 5>> std_errors;  // present only when hessian_ok
  double loglik;
  bool converged;         // gradient max-norm (transformed space) <= 1e-4
  int n_iter;             // simplex iterations of the winning start
  bool hessian_ok;        // negative-Hessian positive definite in original space
  double grad_max_norm;   // transformed space, at the estimate
  std::array<bool, 5> flat{};  // per-parameter non-identifiability flags
  bool alpha_at_boundary = false;
  // When alpha lands within 1e-4 of 1, the model is refit with alpha pinned
  // at exactly 1 (independence) and both results are reported.
  std::shared_ptr<const FitResult> independence_fit;
};

struct StdErrors {
  std::array<double, 5> se{};
  bool hessian_ok = false;
  numerics::Matrix hessian;     // of the negative log-likelihood, original space
  numerics::Matrix covariance;  // inverse of the above, when positive definite
};

namespace detail {

constexpr double kGradTol = 1e-4;        // convergence gate on the transformed gradient
constexpr double kAlphaBoundary = 1e-4;  // refit trigger: alpha > 1 - this
constexpr double kFlatRatio = 1e-4;      // Hessian row-norm ratio declaring a flat direction

inline double dataset_loglik(const likelihood::Dataset& data, const ModelParams& p,
                             Objective obj, const numerics::QuadratureSpec& quad) {
  return obj == Objective::Termination ? likelihood::loglik_termination(data, p, quad)
                                       : likelihood::loglik_plain_censoring(data, p);
}

struct NMOptions {
  int max_iter;
  double f_tol;
  double x_tol;
  double init_step = 0.25;  // transformed space, i.e. roughly +-25% on scales
};

struct NMResult {
  std::vector<double> x;
  double f;
  int iterations;
  bool tol_reached;
};

// Classic Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink
// 1/2).  The objective may return +inf for failed evaluations; such
// vertices are simply the worst and get replaced.
template <class F>
NMResult nelder_mead(F&& f, const std::vector<double>& x0, const NMOptions& opt) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> xs(n + 1, x0);
  std::vector<double> fs(n + 1);
  for (std::size_t i = 1; i <= n; ++i) xs[i][i - 1] += opt.init_step;
  for (std::size_t i = 0; i <= n; ++i) fs[i] = f(xs[i]);

  std::vector<std::size_t> ord(n + 1);
  auto reorder = [&] {
    for (std::size_t i = 0; i <= n; ++i) ord[i] = i;
    std::stable_sort(ord.begin(), ord.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
  };

  int it = 0;
  bool tol_reached = false;
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  for (; it < opt.max_iter; ++it) {
    reorder();
    const std::size_t best = ord[0], worst = ord[n], second_worst = ord[n - 1];

    double f_spread = fs[worst] - fs[best];
    double x_spread = 0.0;
    double x_scale = 0.0;
    for (std::size_t j = 0; j < n; ++j) x_scale = std::max(x_scale, std::abs(xs[best][j]));
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        x_spread = std::max(x_spread, std::abs(xs[i][j] - xs[best][j]));
      }
    }
    if (std::isfinite(fs[worst]) && f_spread <= opt.f_tol * (1.0 + std::abs(fs[best])) &&
        x_spread <= opt.x_tol * (1.0 + x_scale)) {
      tol_reached = true;
      break;
    }

    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i <= n; ++i) {
        if (i != worst) s += xs[i][j];
      }
      centroid[j] = s / static_cast<double>(n);
    }

    for (std::size_t j = 0; j < n; ++j) xr[j] = centroid[j] + (centroid[j] - xs[worst][j]);
    const double fr = f(xr);
    if (fr < fs[best]) {
      for (std::size_t j = 0; j < n; ++j) xe[j] = centroid[j] + 2.0 * (centroid[j] - xs[worst][j]);
      const double fe = f(xe);
      if (fe < fr) {
        xs[worst] = xe;
        fs[worst] = fe;
      } else {
        xs[worst] = xr;
        fs[worst] = fr;
      }
      continue;
    }
    if (fr < fs[second_worst]) {
      xs[worst] = xr;
      fs[worst] = fr;
      continue;
    }
    if (fr < fs[worst]) {
      // outside contraction
      for (std::size_t j = 0; j < n; ++j) xc[j] = centroid[j] + 0.5 * (xr[j] - centroid[j]);
      const double fc = f(xc);
      if (fc <= fr) {
        xs[worst] = xc;
        fs[worst] = fc;
        continue;
      }
    } else {
      // inside contraction
      for (std::size_t j = 0; j < n; ++j) xc[j] = centroid[j] - 0.5 * (centroid[j] - xs[worst][j]);
      const double fc = f(xc);
      if (fc < fs[worst]) {
        xs[worst] = xc;
        fs[worst] = fc;
        continue;
      }
    }
    // shrink toward the best vertex
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < n; ++j) xs[i][j] = xs[best][j] + 0.5 * (xs[i][j] - xs[best][j]);
      fs[i] = f(xs[i]);
    }
  }
  reorder();
  return {xs[ord[0]], fs[ord[0]], it, tol_reached};
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + mid);
    m = 0.5 * (m + lo);
  }
  return m;
}

}  // namespace detail

// Data-driven starting point: alpha = 0.8, unit shapes, and scales set so
// each Weibull median matches the observed per-margin median (with gamma
// = 1 the median is lambda * ln 2).  A margin with no observed events
// falls back to the overall time median; the likelihood is flat in that
// margin anyway.
inline ModelParams default_init(const likelihood::Dataset& data) {
  std::vector<double> x_times, y_times, all_times;
  for (const auto& r : data.records()) {
    using likelihood::Category;
    if (r.category == Category::BothObserved || r.category == Category::AObservedBCensored) {
      x_times.push_back(r.t_x);
    }
    if (r.category == Category::BothObserved || r.category == Category::BObservedNoA) {
      y_times.push_back(r.t_y);
    }
    all_times.push_back(r.t_x);
    all_times.push_back(r.t_y);
  }
  const double ln2 = std::log(2.0);
  const double fallback = std::max(detail::median(all_times), 1e-6) / ln2;
  ModelParams p;
  p.alpha = 0.8;
  p.gamma1 = 1.0;
  p.gamma2 = 1.0;
  p.lambda1 = x_times.empty() ? fallback : detail::median(x_times) / ln2;
  p.lambda2 = y_times.empty() ? fallback : detail::median(y_times) / ln2;
  return p;
}

// Standard errors from the observed information: H = FD Hessian of the
// negative log-likelihood at theta in the original parameterization,
// std_errors = sqrt(diag(H^-1)) when H is positive definite.  When theta
// sits too close to the alpha boundary for a central difference, or H is
// not positive definite, hessian_ok comes back false and no errors are
// reported rather than wrong ones.
inline StdErrors standard_errors(const likelihood::Dataset& data, const ModelParams& theta,
                                 Objective obj = Objective::Termination,
                                 const numerics::QuadratureSpec& quad = {}) {
  theta.validate();
  auto negloglik = [&](const std::vector<double>& x) -> double {
    const ModelParams p{x[0], x[1], x[2], x[3], x[4]};
    try {
      return -detail::dataset_loglik(data, p, obj, quad);
    } catch (const std::exception&) {
      return std::numeric_limits<double>::quiet_NaN();  // surfaced by the FD kernel
    }
  };

  StdErrors out;
  std::vector<double> x{theta.alpha, theta.lambda1, theta.gamma1, theta.lambda2, theta.gamma2};
  try {
    out.hessian = numerics::central_diff_hessian(negloglik, x);
  } catch (const std::domain_error&) {
    return out;  // evaluation failed inside the stencil (e.g. alpha + h > 1)
  }
  if (!out.hessian.invert_spd(out.covariance)) return out;
  for (std::size_t i = 0; i < 5; ++i) out.se[i] = std::sqrt(out.covariance(i, i));
  out.hessian_ok = true;
  return out;
}

namespace detail {

// Newton polish in the transformed space; accepts only strict improvements
// so it can never degrade the simplex result.
template <class F>
void newton_polish(F&& f, std::vector<double>& x, double& fx, int& iters) {
  for (int round = 0; round < 30; ++round) {
    std::vector<double> g;
    numerics::Matrix h;
    try {
      g = numerics::central_diff_grad(f, x);
      h = numerics::central_diff_hessian(f, x);
    } catch (const std::domain_error&) {
      return;  // stencil touched a failing region; keep the simplex answer
    }
    double gmax = 0.0;
    for (double gi : g) gmax = std::max(gmax, std::abs(gi));
    if (gmax <= kGradTol / 10.0) return;

    numerics::Matrix hinv;
    if (!h.invert_spd(hinv)) return;
    std::vector<double> step(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t j = 0; j < x.size(); ++j) step[i] -= hinv(i, j) * g[j];
    }

    bool improved = false;
    std::vector<double> trial(x.size());
    for (double t = 1.0; t >= 1.0 / 1024.0; t *= 0.5) {
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + t * step[i];
      const double ft = f(trial);
      if (ft < fx) {
        x = trial;
        fx = ft;
        ++iters;
        improved = true;
        break;
      }
    }
    if (!improved) return;
  }
}

template <class F>
double grad_max_norm_or_inf(F&& f, const std::vector<double>& x) {
  try {
    const auto g = numerics::central_diff_grad(f, x);
    double m = 0.0;
    for (double gi : g) m = std::max(m, std::abs(gi));
    return m;
  } catch (const std::domain_error&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct CoreFit {
  std::vector<double> v;  // transformed coordinates of the winner
  double negloglik;
  int n_iter;
  double grad_max_norm;
  std::vector<bool> flat;
};

// Multistart simplex + polish over an arbitrary-dimension transformed
// objective.  Deterministic: the jitter stream depends only on cfg.seed,
// and ties between equally good restarts resolve to the lowest index.
template <class F>
CoreFit fit_core(F&& objective, const std::vector<double>& v0, const FitConfig& cfg) {
  const double f0 = objective(v0);
  if (!std::isfinite(f0)) {
    throw std::runtime_error("fit: log-likelihood evaluation failed at the initial parameters");
  }

  NMOptions opt{cfg.max_iter, cfg.f_tol, cfg.x_tol};
  simulation::Rng jitter(cfg.seed);

  NMResult best;
  best.f = std::numeric_limits<double>::infinity();
  for (int r = 0; r <= cfg.restarts; ++r) {
    std::vector<double> start = v0;
    if (r > 0) {
      simulation::Rng stream = jitter.split(static_cast<std::uint64_t>(r));
      for (auto& s : start) s += stream.uniform(-0.2, 0.2);
    }
    NMResult run = nelder_mead(objective, start, opt);
    if (run.f < best.f) best = run;  // strict: earlier restarts win ties
  }

  newton_polish(objective, best.x, best.f, best.iterations);

  CoreFit out;
  out.v = best.x;
  out.negloglik = best.f;
  out.n_iter = best.iterations;
  out.grad_max_norm = grad_max_norm_or_inf(objective, best.x);

  // Flat (non-identified) directions show up as Hessian rows that vanish
  // relative to the largest row: the data simply never mentions them.
  out.flat.assign(v0.size(), false);
  try {
    const auto h = numerics::central_diff_hessian(objective, best.x);
    std::vector<double> row_max(v0.size(), 0.0);
    double overall = 0.0;
    for (std::size_t i = 0; i < v0.size(); ++i) {
      for (std::size_t j = 0; j < v0.size(); ++j) {
        row_max[i] = std::max(row_max[i], std::abs(h(i, j)));
      }
      overall = std::max(overall, row_max[i]);
    }
    for (std::size_t i = 0; i < v0.size(); ++i) {
      out.flat[i] = (overall == 0.0) || row_max[i] <= kFlatRatio * overall;
    }
  } catch (const std::domain_error&) {
    // leave flags false; the gradient diagnostics already tell the story
  }
  return out;
}

}  // namespace detail

inline FitResult fit(const likelihood::Dataset& data, const FitConfig& cfg = {});

namespace detail {

// Refit with alpha pinned at exactly 1 over the remaining four parameters.
inline FitResult fit_independence(const likelihood::Dataset& data, const FitConfig& cfg,
                                  const ModelParams& from) {
  auto objective = [&](const std::vector<double>& v) -> double {
    const ModelParams p{1.0, std::exp(v[0]), std::exp(v[1]), std::exp(v[2]), std::exp(v[3])};
    try {
      return -dataset_loglik(data, p, cfg.objective, cfg.quad);
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const std::vector<double> v0{std::log(from.lambda1), std::log(from.gamma1),
                               std::log(from.lambda2), std::log(from.gamma2)};
  CoreFit core = fit_core(objective, v0, cfg);

  FitResult res;
  res.estimate = ModelParams{1.0, std::exp(core.v[0]), std::exp(core.v[1]),
                             std::exp(core.v[2]), std::exp(core.v[3])};
  res.loglik = -core.negloglik;
  res.n_iter = core.n_iter;
  res.grad_max_norm = core.grad_max_norm;
  res.converged = core.grad_max_norm <= kGradTol;
  res.flat[0] = true;  // alpha is pinned, not estimated
  for (int i = 0; i < 4; ++i) res.flat[i + 1] = core.flat[i];

  // Observed information over the four free parameters, original space.
  auto negloglik4 = [&](const std::vector<double>& x) -> double {
    const ModelParams p{1.0, x[0], x[1], x[2], x[3]};
    try {
      return -dataset_loglik(data, p, cfg.objective, cfg.quad);
    } catch (const std::exception&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  std::vector<double> x{res.estimate.lambda1, res.estimate.gamma1, res.estimate.lambda2,
                        res.estimate.gamma2};
  try {
    numerics::Matrix h = numerics::central_diff_hessian(negloglik4, x);
    numerics::Matrix cov;
    if (h.invert_spd(cov)) {
      std::array<double, 5> se{};
      se[0] = 0.0;  // alpha fixed by the refit, no sampling variability reported
      for (std::size_t i = 0; i < 4; ++i) se[i + 1] = std::sqrt(cov(i, i));
      res.std_errors = se;
      res.hessian_ok = true;
    }
  } catch (const std::domain_error&) {
  }
  return res;
}

}  // namespace detail

// Maximize the dataset log-likelihood.  Deterministic given (data, cfg).
inline FitResult fit(const likelihood::Dataset& data, const FitConfig& cfg) {
  cfg.validate();

  ModelParams theta0 = cfg.init ? *cfg.init : default_init(data);
  theta0.validate();
  if (theta0.alpha == 1.0) theta0.alpha = 1.0 - 1e-8;  // step off the logit boundary
  const auto v0arr = to_unconstrained(theta0);
  const std::vector<double> v0(v0arr.begin(), v0arr.end());

  auto objective = [&](const std::vector<double>& v) -> double {
    const ModelParams p = from_unconstrained({v[0], v[1], v[2], v[3], v[4]});
    try {
      return -detail::dataset_loglik(data, p, cfg.objective, cfg.quad);
    } catch (const std::exception&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  detail::CoreFit core = detail::fit_core(objective, v0, cfg);

  FitResult res;
  res.estimate = from_unconstrained({core.v[0], core.v[1], core.v[2], core.v[3], core.v[4]});
  res.loglik = -core.negloglik;
  res.n_iter = core.n_iter;
  res.grad_max_norm = core.grad_max_norm;
  res.converged = core.grad_max_norm <= detail::kGradTol;
  for (int i = 0; i < 5; ++i) res.flat[i] = core.flat[i];

  const StdErrors se = standard_errors(data, res.estimate, cfg.objective, cfg.quad);
  res.hessian_ok = se.hessian_ok;
  if (se.hessian_ok) res.std_errors = se.se;

  if (res.estimate.alpha > 1.0 - detail::kAlphaBoundary) {
    res.alpha_at_boundary = true;
    res.independence_fit = std::make_shared<const FitResult>(
        detail::fit_independence(data, cfg, res.estimate));
  }
  return res;
}

}  // namespace biweibull::estimation
