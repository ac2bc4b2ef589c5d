#pragma once

// Per-record log-likelihood factors and dataset-level log-likelihoods.
//
// Two observation schemes share the Dataset type:
//
//  * termination scheme: the second event is fatal.  A subject falls into
//    one of four categories -- both events seen, first seen / second
//    censored, second seen with the first never observable, or neither
//    seen by the subject's censoring time t_i.  The factors are
//    f(t_x, t_y), -dS/dx(t_x, t_y), f_Y(t_y), and Pr(t_i < X < Y).
//  * plain right-censoring (the textbook bivariate likelihood): the four
//    factors are f, -dS/dx, -dS/dy, and S itself.  Used as the baseline
//    for fully observable synthetic data.
//
// Everything is summed in log space with compensated accumulation; no
// product-form likelihood is ever materialized.

#include <cmath>
#include <cstddef>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "biweibull/model.hpp"
#include "biweibull/numerics.hpp"

namespace biweibull::likelihood {

enum class Category {
  BothObserved,        // p = 1: non-fatal at t_x, fatal at t_y, t_x < t_y
  AObservedBCensored,  // q = 1: non-fatal at t_x, alive when last seen at t_y
  BObservedNoA,        // r = 1: fatal at t_y with no prior non-fatal event
  BothCensored         // neither event by the censoring time t_i
};

inline const char* category_name(Category c) {
  switch (c) {
    case Category::BothObserved: return "both_observed";
    case Category::AObservedBCensored: return "a_observed_b_censored";
    case Category::BObservedNoA: return "b_observed_no_a";
    case Category::BothCensored: return "both_censored";
  }
  return "unknown";
}

struct SubjectRecord {
  Category category;
  double t_x;  // days
  double t_y;  // days; equals t_x for BObservedNoA and BothCensored

  // Per-category shape constraints.  BothObserved demands strict order:
  // under the termination scheme the non-fatal event must precede the
  // fatal one, and violations are data errors, never reordered silently.
  void validate() const {
    auto fail = [this](const char* what) {
      std::ostringstream msg;
      msg << "SubjectRecord(" << category_name(category) << ", t_x=" << t_x
          << ", t_y=" << t_y << "): " << what;
      throw std::invalid_argument(msg.str());
    };
    if (!std::isfinite(t_x) || !std::isfinite(t_y)) fail("times must be finite");
    switch (category) {
      case Category::BothObserved:
        if (!(t_x > 0.0 && t_y > 0.0)) fail("times must be > 0");
        if (!(t_x < t_y)) fail("requires t_x < t_y (non-fatal event precedes the fatal one)");
        break;
      case Category::AObservedBCensored:
        if (!(t_x > 0.0 && t_y > 0.0)) fail("times must be > 0");
        if (!(t_x <= t_y)) fail("requires t_x <= t_y (censoring cannot precede the observed event)");
        break;
      case Category::BObservedNoA:
        if (!(t_y > 0.0)) fail("time of the fatal event must be > 0");
        if (t_x != t_y) fail("requires t_x == t_y (both columns carry the fatal-event time)");
        break;
      case Category::BothCensored:
        if (!(t_y > 0.0)) fail("censoring time must be > 0");
        if (t_x != t_y) fail("requires t_x == t_y (the shared censoring time)");
        break;
    }
  }
};

struct CategoryCounts {
  std::size_t p = 0;         // BothObserved
  std::size_t q = 0;         // AObservedBCensored
  std::size_t r = 0;         // BObservedNoA
  std::size_t censored = 0;  // BothCensored

  std::size_t total() const noexcept { return p + q + r + censored; }
  bool operator==(const CategoryCounts&) const = default;
};

// Validated, immutable collection of records with category tallies.
class Dataset {
 public:
  static Dataset from_records(std::vector<SubjectRecord> records) {
    if (records.empty()) throw std::invalid_argument("Dataset: needs at least one record");
    Dataset d;
    for (std::size_t i = 0; i < records.size(); ++i) {
      try {
        records[i].validate();
      } catch (const std::invalid_argument& e) {
        std::ostringstream msg;
        msg << "Dataset: record " << i << " invalid: " << e.what();
        throw std::invalid_argument(msg.str());
      }
      switch (records[i].category) {
        case Category::BothObserved: ++d.counts_.p; break;
        case Category::AObservedBCensored: ++d.counts_.q; break;
        case Category::BObservedNoA: ++d.counts_.r; break;
        case Category::BothCensored: ++d.counts_.censored; break;
      }
    }
    d.records_ = std::move(records);
    return d;
  }

  const std::vector<SubjectRecord>& records() const noexcept { return records_; }
  const CategoryCounts& counts() const noexcept { return counts_; }
  std::size_t size() const noexcept { return records_.size(); }

 private:
  Dataset() = default;
  std::vector<SubjectRecord> records_;
  CategoryCounts counts_;
};

namespace detail {

[[noreturn]] inline void report_bad_record(const char* fn, std::size_t index,
                                           double value) {
  std::ostringstream msg;
  msg << fn << ": non-finite log contribution (" << value << ") at record " << index;
  throw std::runtime_error(msg.str());
}

// tail_prob is the only factor that costs a quadrature; censored subjects
// in simulated studies often share one censoring time, so cache per
// distinct t_i within a single likelihood evaluation (theta is fixed for
// the lifetime of the cache).
class TailProbCache {
 public:
  TailProbCache(const model::ModelParams& p, const numerics::QuadratureSpec& spec)
      : p_(p), spec_(spec) {}

  double log_at(double t) {
    auto it = cache_.find(t);
    if (it == cache_.end()) {
      it = cache_.emplace(t, std::log(model::tail_prob(t, p_, spec_))).first;
    }
    return it->second;
  }

 private:
  const model::ModelParams& p_;
  const numerics::QuadratureSpec& spec_;
  std::map<double, double> cache_;
};

}  // namespace detail

// log factor of one record under the termination scheme.
inline double log_factor_termination(const SubjectRecord& rec,
                                     const model::ModelParams& theta,
                                     const numerics::QuadratureSpec& spec = {}) {
  rec.validate();
  switch (rec.category) {
    case Category::BothObserved:
      return model::log_joint_density(rec.t_x, rec.t_y, theta);
    case Category::AObservedBCensored:
      return model::log_neg_dS_dx(rec.t_x, rec.t_y, theta);
    case Category::BObservedNoA:
      // Full marginal density of the fatal event; carries no information
      // about the association parameter.
      return model::log_marginal_density_y(rec.t_y, theta);
    case Category::BothCensored:
      return std::log(model::tail_prob(rec.t_y, theta, spec));
  }
  throw std::logic_error("log_factor_termination: unreachable category");
}

// Dataset log-likelihood under the termination scheme.  Kahan-compensated,
// so the result is independent of record order far below 1e-9.
inline double loglik_termination(const Dataset& data, const model::ModelParams& theta,
                                 const numerics::QuadratureSpec& spec = {}) {
  theta.validate();
  detail::TailProbCache tail(theta, spec);
  numerics::KahanSum sum;
  const auto& recs = data.records();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& rec = recs[i];
    double lf;
    switch (rec.category) {
      case Category::BothObserved:
        lf = model::log_joint_density(rec.t_x, rec.t_y, theta);
        break;
      case Category::AObservedBCensored:
        lf = model::log_neg_dS_dx(rec.t_x, rec.t_y, theta);
        break;
      case Category::BObservedNoA:
        lf = model::log_marginal_density_y(rec.t_y, theta);
        break;
      case Category::BothCensored:
        lf = tail.log_at(rec.t_y);
        break;
      default:
        throw std::logic_error("loglik_termination: unreachable category");
    }
    if (!std::isfinite(lf)) detail::report_bad_record("loglik_termination", i, lf);
    sum.add(lf);
  }
  return sum.value();
}

// log factor of one record under plain right-censoring: the fourth factor
// is joint survival, and a fatal-only record contributes the sub-density
// -dS/dy at (t_x, t_y) because here t_x is an ordinary censoring time.
inline double log_factor_plain_censoring(const SubjectRecord& rec,
                                         const model::ModelParams& theta) {
  rec.validate();
  switch (rec.category) {
    case Category::BothObserved:
      return model::log_joint_density(rec.t_x, rec.t_y, theta);
    case Category::AObservedBCensored:
      return model::log_neg_dS_dx(rec.t_x, rec.t_y, theta);
    case Category::BObservedNoA:
      return model::log_neg_dS_dy(rec.t_x, rec.t_y, theta);
    case Category::BothCensored:
      return model::log_joint_survival(rec.t_x, rec.t_y, theta);
  }
  throw std::logic_error("log_factor_plain_censoring: unreachable category");
}

// Baseline log-likelihood (plain right-censoring semantics), used for
// fully observable synthetic data.  No quadrature anywhere in this path.
inline double loglik_plain_censoring(const Dataset& data,
                                     const model::ModelParams& theta) {
  theta.validate();
  numerics::KahanSum sum;
  const auto& recs = data.records();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const double lf = log_factor_plain_censoring(recs[i], theta);
    if (!std::isfinite(lf)) detail::report_bad_record("loglik_plain_censoring", i, lf);
    sum.add(lf);
  }
  return sum.value();
}

}  // namespace biweibull::likelihood
