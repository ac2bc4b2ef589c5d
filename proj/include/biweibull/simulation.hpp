#pragma once

// Exact sampling from the bivariate Weibull and generation of
// termination-scheme study datasets.  These samplers are the independent
// Monte-Carlo oracles for every closed-form quantity in the library, so
// they deliberately share no code with the model evaluation paths.
//
// Construction: a positive alpha-stable frailty Z (Laplace transform
// E[e^{-sZ}] = e^{-s^alpha}) mixes two conditionally independent
// exponentials.  Given Z, set X = l1 (E1/Z)^(a/g1), Y = l2 (E2/Z)^(a/g2);
// integrating the conditional survival e^{-Z(u+v)} over Z yields exactly
// exp(-(u+v)^a), the model's joint survival.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "biweibull/likelihood.hpp"
#include "biweibull/model.hpp"

namespace biweibull::simulation {

namespace detail {

// SplitMix64 finalizer; used to decorrelate seeds and derive child streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Deterministic, splittable random source.  Contract:
//  * identical seed => identical draw sequence, on every platform
//    (mt19937_64 plus fixed bit-to-double conversions, no libc reliance);
//  * split(k) derives an independent child stream as a pure function of
//    the parent's ORIGINAL seed and k -- unaffected by how many draws the
//    parent has consumed, so chunked parallel generation stays
//    reproducible for a fixed (seed, chunk count).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(detail::mix64(seed)) {}

  // Uniform on the open interval (0, 1); never returns 0 or 1.
  double uniform01() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard exponential; finite because uniform01 is never 0.
  double exponential1() { return -std::log(uniform01()); }

  Rng split(std::uint64_t stream) const {
    return Rng(detail::mix64(seed_ ^ (0xA24BAED4963EE407ULL * (stream + 1))));
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

// Positive alpha-stable draw with Laplace transform e^{-s^alpha}, via the
// Chambers-Mallows-Stuck representation:
//
//   Z = [sin(aU) / (sin U)^(1/a)] * [sin((1-a)U) / E]^((1-a)/a),
//
// U uniform on (0, pi), E standard exponential.  Valid for 0 < alpha < 1;
// alpha = 1 is the degenerate Z == 1 and is handled by callers.
inline double sample_positive_stable(double alpha, Rng& rng) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    std::ostringstream msg;
    msg << "sample_positive_stable: alpha must be in (0, 1), got " << alpha;
    throw std::invalid_argument(msg.str());
  }
  const double u = std::numbers::pi * rng.uniform01();
  const double e = rng.exponential1();
  const double s = std::sin(u);
  return (std::sin(alpha * u) / std::pow(s, 1.0 / alpha)) *
         std::pow(std::sin((1.0 - alpha) * u) / e, (1.0 - alpha) / alpha);
}

// One draw from the bivariate Weibull.  Resamples on the (measure-zero,
// floating-point-only) event that a coordinate underflows to 0.
inline std::pair<double, double> sample_pair(const model::ModelParams& p, Rng& rng) {
  p.validate();
  for (;;) {
    double x, y;
    if (p.alpha == 1.0) {
      x = p.lambda1 * std::pow(rng.exponential1(), 1.0 / p.gamma1);
      y = p.lambda2 * std::pow(rng.exponential1(), 1.0 / p.gamma2);
    } else {
      const double z = sample_positive_stable(p.alpha, rng);
      x = p.lambda1 * std::pow(rng.exponential1() / z, p.alpha / p.gamma1);
      y = p.lambda2 * std::pow(rng.exponential1() / z, p.alpha / p.gamma2);
    }
    if (x > 0.0 && y > 0.0 && std::isfinite(x) && std::isfinite(y)) return {x, y};
  }
}

// Observation plan: every subject is censored at the study end; optionally
// each also has a uniformly distributed last-seen time (staggered-entry
// approximation), and the effective censor time is the minimum of the two.
struct StudyDesign {
  std::size_t n_subjects;
  double end_time;  // days
  std::optional<std::pair<double, double>> uniform_last_seen;  // [lo, hi]

  void validate() const {
    if (n_subjects < 1) throw std::invalid_argument("StudyDesign: n_subjects must be >= 1");
    if (!(end_time > 0.0) || !std::isfinite(end_time)) {
      throw std::invalid_argument("StudyDesign: end_time must be positive and finite");
    }
    if (uniform_last_seen) {
      const auto [lo, hi] = *uniform_last_seen;
      if (!(0.0 < lo && lo <= hi)) {
        throw std::invalid_argument("StudyDesign: uniform_last_seen needs 0 < lo <= hi");
      }
    }
  }
};

// Latent pair (x, y) plus censor time c map to the four observable
// categories:
//   x < y <= c   -> both events observed
//   x <= c < y   -> non-fatal observed, fatal censored at c
//   y <= c, y <= x -> fatal observed first; the non-fatal event is gone
//   c < min(x, y) -> nothing observed by c
inline likelihood::Dataset generate_dataset(const model::ModelParams& p,
                                            const StudyDesign& design, Rng& rng) {
  p.validate();
  design.validate();
  std::vector<likelihood::SubjectRecord> recs;
  recs.reserve(design.n_subjects);
  for (std::size_t i = 0; i < design.n_subjects; ++i) {
    const auto [x, y] = sample_pair(p, rng);
    double c = design.end_time;
    if (design.uniform_last_seen) {
      const auto [lo, hi] = *design.uniform_last_seen;
      c = std::min(c, rng.uniform(lo, hi));
    }
    using likelihood::Category;
    if (y <= c && y <= x) {
      recs.push_back({Category::BObservedNoA, y, y});
    } else if (x < y && y <= c) {
      recs.push_back({Category::BothObserved, x, y});
    } else if (x <= c && c < y) {
      recs.push_back({Category::AObservedBCensored, x, c});
    } else {
      recs.push_back({Category::BothCensored, c, c});
    }
  }
  return likelihood::Dataset::from_records(std::move(recs));
}

struct McEstimate {
  double estimate;
  double std_error;
};

// Monte-Carlo Pr(t < X < Y), the independent check on tail_prob.
inline McEstimate mc_tail_prob(double t, const model::ModelParams& p,
                               std::size_t n_draws, Rng& rng) {
  p.validate();
  if (n_draws < 1) throw std::invalid_argument("mc_tail_prob: n_draws must be >= 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n_draws; ++i) {
    const auto [x, y] = sample_pair(p, rng);
    if (t < x && x < y) ++hits;
  }
  const double est = static_cast<double>(hits) / static_cast<double>(n_draws);
  return {est, std::sqrt(est * (1.0 - est) / static_cast<double>(n_draws))};
}

}  // namespace biweibull::simulation
