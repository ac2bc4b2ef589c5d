#pragma once

// Shared numerical kernels: adaptive Gauss-Kronrod quadrature on finite and
// semi-infinite intervals, central finite differences for gradients and
// Hessians, a small dense matrix with Cholesky factorization, and checked
// special functions.  Everything downstream (model evaluation, likelihood,
// standard errors, moments) sits on top of these primitives.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace biweibull::numerics {

// Thrown when an integral cannot be brought below its requested tolerance or
// the integrand produces a non-finite value.  Carries the best estimate so
// callers can report how far off the result was.
class quadrature_error : public std::runtime_error {
 public:
  quadrature_error(const std::string& what, double estimate, double error)
      : std::runtime_error(what), estimate_(estimate), error_(error) {}
  double estimate() const noexcept { return estimate_; }
  double error() const noexcept { return error_; }

 private:
  double estimate_;
  double error_;
};

struct QuadratureSpec {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  int max_subdivisions = 200;
};

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1].
// Abscissae are symmetric; only the non-negative half is stored.
// Even indices are Kronrod-only points, odd indices (plus the centre)
// are the embedded Gauss points.
inline constexpr double kGK15Nodes[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};

inline constexpr double kKronrodWeights[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};

inline constexpr double kGaussWeights[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct GKResult {
  double integral;   // Kronrod estimate
  double error;      // scaled error bound, QUADPACK style
  double resabs;     // integral of |f|, for roundoff detection
};

// One Gauss-Kronrod pass over [a, b].  Throws if f is non-finite anywhere
// on the evaluation grid.
template <class F>
GKResult gk15(F&& f, double a, double b) {
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double abs_half = std::abs(half);

  auto eval = [&](double x) {
    double v = f(x);
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "integrand returned non-finite value at x = " << x;
      throw quadrature_error(msg.str(), v, std::numeric_limits<double>::infinity());
    }
    return v;
  };

  const double fc = eval(centre);
  double resg = kGaussWeights[3] * fc;
  double resk = kKronrodWeights[7] * fc;
  double resabs = std::abs(resk);

  double fv1[7], fv2[7];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kGK15Nodes[j];
    fv1[j] = eval(centre - dx);
    fv2[j] = eval(centre + dx);
    const double fsum = fv1[j] + fv2[j];
    resk += kKronrodWeights[j] * fsum;
    resabs += kKronrodWeights[j] * (std::abs(fv1[j]) + std::abs(fv2[j]));
    if (j % 2 == 1) resg += kGaussWeights[j / 2] * fsum;
  }

  // resasc measures deviation from the mean value; it rescales the raw
  // Gauss/Kronrod gap so the error bound stays meaningful on spiky
  // integrands (the (200 e)^1.5 damping below is the QUADPACK recipe).
  const double mean = 0.5 * resk;
  double resasc = kKronrodWeights[7] * std::abs(fc - mean);
  for (int j = 0; j < 7; ++j) {
    resasc += kKronrodWeights[j] *
              (std::abs(fv1[j] - mean) + std::abs(fv2[j] - mean));
  }

  resabs *= abs_half;
  resasc *= abs_half;
  double err = std::abs((resk - resg) * half);
  if (resasc != 0.0 && err != 0.0) {
    err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  }
  const double eps = std::numeric_limits<double>::epsilon();
  const double uflow = std::numeric_limits<double>::min();
  if (resabs > uflow / (50.0 * eps)) {
    err = std::max(50.0 * eps * resabs, err);
  }
  return {resk * half, err, resabs};
}

struct Segment {
  double a, b, integral, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

}  // namespace detail

// Adaptive integration of f over [a, b]: globally bisect the segment with
// the largest error estimate until sum(err) <= max(abs_tol, rel_tol*|I|).
// Throws quadrature_error when the subdivision budget runs out first.
template <class F>
double integrate_finite(F&& f, double a, double b,
                        const QuadratureSpec& spec = {}) {
  if (!(spec.rel_tol > 0.0) || !(spec.abs_tol >= 0.0) || spec.max_subdivisions < 1) {
    throw std::invalid_argument("integrate_finite: invalid QuadratureSpec");
  }
  if (!(a <= b)) throw std::invalid_argument("integrate_finite: requires a <= b");
  if (a == b) return 0.0;

  std::priority_queue<detail::Segment> segs;
  auto first = detail::gk15(f, a, b);
  segs.push({a, b, first.integral, first.error});
  double total = first.integral;
  double total_err = first.error;

  int splits = 0;
  while (true) {
    const double tol = std::max(spec.abs_tol, spec.rel_tol * std::abs(total));
    if (total_err <= tol) return total;
    if (splits >= spec.max_subdivisions) {
      std::ostringstream msg;
      msg << "integral did not converge after " << spec.max_subdivisions
          << " subdivisions (estimate " << total << ", error bound "
          << total_err << ", tolerance " << tol << ")";
      throw quadrature_error(msg.str(), total, total_err);
    }
    detail::Segment worst = segs.top();
    segs.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    // A segment that can no longer be split is pure roundoff; bisecting it
    // forever would spin, so put it back with zero error and move on.
    if (mid <= worst.a || mid >= worst.b) {
      total_err -= worst.error;
      worst.error = 0.0;
      segs.push(worst);
      ++splits;
      continue;
    }
    auto left = detail::gk15(f, worst.a, mid);
    auto right = detail::gk15(f, mid, worst.b);
    total += left.integral + right.integral - worst.integral;
    total_err += left.error + right.error - worst.error;
    segs.push({worst.a, mid, left.integral, left.error});
    segs.push({mid, worst.b, right.integral, right.error});
    ++splits;
  }
}

// Integration over [a, inf) via the rational substitution y = a + u/(1-u),
// u in [0, 1), dy = du/(1-u)^2.  The transformed integrand is clamped to 0
// at u = 1 where the original integrand must vanish for the integral to
// exist; the adaptive refinement near u = 1 resolves heavy tails.
template <class F>
double integrate_semi_infinite(F&& f, double a,
                               const QuadratureSpec& spec = {}) {
  auto g = [&](double u) {
    if (u >= 1.0) return 0.0;
    const double one_minus = 1.0 - u;
    const double y = a + u / one_minus;
    if (!std::isfinite(y)) return 0.0;
    return f(y) / (one_minus * one_minus);
  };
  return integrate_finite(g, 0.0, 1.0, spec);
}

// Central-difference gradient with per-coordinate step h_i scaled to the
// magnitude of x_i.  cbrt(eps) balances truncation against cancellation
// for first derivatives.
template <class F>
std::vector<double> central_diff_grad(F&& f, std::vector<double> x) {
  const double eps = std::numeric_limits<double>::epsilon();
  const double h0 = std::cbrt(eps);
  const std::size_t n = x.size();
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    const double h = h0 * std::max(1.0, std::abs(xi));
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      std::ostringstream msg;
      msg << "central_diff_grad: non-finite function value near coordinate " << i;
      throw std::domain_error(msg.str());
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Minimal dense square matrix, enough for Hessians and their inverses.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n) : n_(n), a_(n * n, 0.0) {}

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }

  // In-place lower Cholesky factor of a symmetric matrix.  Returns false
  // (leaving *this unspecified) when the matrix is not positive definite.
  bool cholesky() {
    for (std::size_t j = 0; j < n_; ++j) {
      double d = (*this)(j, j);
      for (std::size_t k = 0; k < j; ++k) d -= (*this)(j, k) * (*this)(j, k);
      if (!(d > 0.0) || !std::isfinite(d)) return false;
      const double l = std::sqrt(d);
      (*this)(j, j) = l;
      for (std::size_t i = j + 1; i < n_; ++i) {
        double s = (*this)(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= (*this)(i, k) * (*this)(j, k);
        (*this)(i, j) = s / l;
      }
      for (std::size_t k = j + 1; k < n_; ++k) (*this)(j, k) = 0.0;
    }
    return true;
  }

  // Inverse of a symmetric positive definite matrix via its Cholesky
  // factor.  Returns false when the factorization fails.
  bool invert_spd(Matrix& inv) const {
    Matrix chol = *this;
    if (!chol.cholesky()) return false;
    inv = Matrix(n_);
    // Solve L L^T z = e_k column by column.
    std::vector<double> y(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      for (std::size_t i = 0; i < n_; ++i) {
        double s = (i == k) ? 1.0 : 0.0;
        for (std::size_t j = 0; j < i; ++j) s -= chol(i, j) * y[j];
        y[i] = s / chol(i, i);
      }
      for (std::size_t i = n_; i-- > 0;) {
        double s = y[i];
        for (std::size_t j = i + 1; j < n_; ++j) s -= chol(j, i) * inv(j, k);
        inv(i, k) = s / chol(i, i);
      }
    }
    return true;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

// Central-difference Hessian with steps h_i = eps^(1/4) * max(1, |x_i|).
// The quarter-root step is the standard choice for second differences.
// Each (i, j) entry is computed once and mirrored, so the result is
// symmetric by construction.
template <class F>
Matrix central_diff_hessian(F&& f, std::vector<double> x) {
  const double eps = std::numeric_limits<double>::epsilon();
  const double h0 = std::pow(eps, 0.25);
  const std::size_t n = x.size();
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = h0 * std::max(1.0, std::abs(x[i]));

  auto checked = [&](const std::vector<double>& p, std::size_t i, std::size_t j) {
    double v = f(p);
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "central_diff_hessian: non-finite function value near coordinates ("
          << i << ", " << j << ")";
      throw std::domain_error(msg.str());
    }
    return v;
  };

  Matrix H(n);
  const double f0 = checked(x, 0, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    x[i] = xi + h[i];
    const double fp = checked(x, i, i);
    x[i] = xi - h[i];
    const double fm = checked(x, i, i);
    x[i] = xi;
    H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double xj = x[j];
      x[i] = xi + h[i]; x[j] = xj + h[j];
      const double fpp = checked(x, i, j);
      x[j] = xj - h[j];
      const double fpm = checked(x, i, j);
      x[i] = xi - h[i]; x[j] = xj + h[j];
      const double fmp = checked(x, i, j);
      x[j] = xj - h[j];
      const double fmm = checked(x, i, j);
      x[i] = xi; x[j] = xj;
      const double v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
      H(i, j) = v;
      H(j, i) = v;
    }
  }
  return H;
}

// Gamma function restricted to the positive half line, where the model
// needs it.  std::tgamma is exact enough (< 1e-12 relative) there.
inline double gamma_fn(double z) {
  if (!(z > 0.0)) {
    std::ostringstream msg;
    msg << "gamma_fn: argument must be positive, got " << z;
    throw std::domain_error(msg.str());
  }
  return std::tgamma(z);
}

// log(sum(exp(a), exp(b))) without overflow; both arguments may be -inf.
inline double log_sum_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

// Compensated (Kahan) accumulator; keeps long sums independent of term
// order to well below 1e-9.
class KahanSum {
 public:
  void add(double v) {
    const double y = v - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const noexcept { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

}  // namespace biweibull::numerics
