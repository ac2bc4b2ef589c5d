#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "biweibull/estimation.hpp"
#include "biweibull/likelihood.hpp"
#include "biweibull/numerics.hpp"
#include "biweibull/simulation.hpp"
#include "support/helpers.hpp"

using namespace biweibull::estimation;
using biweibull::likelihood::Category;
using biweibull::likelihood::Dataset;
using biweibull::likelihood::SubjectRecord;
using biweibull::model::ModelParams;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Fatal-only dataset: Weibull draws for the terminating event, nothing
// else ever observed.  Leaves alpha, lambda1, gamma1 completely outside
// the likelihood.
Dataset only_fatal_dataset(double lambda, double gamma, std::size_t n, std::uint64_t seed) {
  biweibull::simulation::Rng rng(seed);
  std::vector<SubjectRecord> recs;
  recs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = lambda * std::pow(rng.exponential1(), 1.0 / gamma);
    recs.push_back({Category::BObservedNoA, t, t});
  }
  return Dataset::from_records(std::move(recs));
}

std::pair<std::vector<double>, std::vector<bool>> fatal_times(const Dataset& d) {
  std::vector<double> t;
  std::vector<bool> obs;
  for (const auto& r : d.records()) {
    t.push_back(r.t_y);
    obs.push_back(true);
  }
  return {t, obs};
}

}  // namespace

TEST_CASE("parameter transform round-trips and guards the boundary", "[estimation]") {
  const ModelParams p = testsup::stanford_fit();
  const auto v = to_unconstrained(p);
  const ModelParams back = from_unconstrained(v);
  CHECK_THAT(back.alpha, WithinRel(p.alpha, 1e-12));
  CHECK_THAT(back.lambda1, WithinRel(p.lambda1, 1e-12));
  CHECK_THAT(back.gamma1, WithinRel(p.gamma1, 1e-12));
  CHECK_THAT(back.lambda2, WithinRel(p.lambda2, 1e-12));
  CHECK_THAT(back.gamma2, WithinRel(p.gamma2, 1e-12));

  // Reference points of the transform.
  CHECK(to_unconstrained({0.5, 1.0, 1.0, 1.0, 1.0}) == std::array<double, 5>{0, 0, 0, 0, 0});
  // alpha = 1 sits at logit infinity and must be rejected loudly.
  CHECK_THROWS_AS(to_unconstrained({1.0, 1.0, 1.0, 1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("every unconstrained vector maps to valid parameters", "[estimation]") {
  biweibull::simulation::Rng rng(55);
  for (int i = 0; i < 50; ++i) {
    std::array<double, 5> v;
    for (auto& c : v) c = rng.uniform(-20.0, 20.0);
    const ModelParams p = from_unconstrained(v);
    CHECK_NOTHROW(p.validate());
    CHECK((p.alpha > 0.0 && p.alpha <= 1.0));
  }
}

TEST_CASE("data-driven starting point targets the per-margin medians", "[estimation]") {
  const auto d = Dataset::from_records({
      {Category::BothObserved, 2.0, 10.0},
      {Category::AObservedBCensored, 4.0, 12.0},
      {Category::BObservedNoA, 9.0, 9.0},
  });
  const ModelParams init = default_init(d);
  const double ln2 = std::log(2.0);
  CHECK(init.alpha == 0.8);
  CHECK(init.gamma1 == 1.0);
  CHECK(init.gamma2 == 1.0);
  // x medians over {2, 4}; y medians over {10, 9}.
  CHECK_THAT(init.lambda1, WithinRel(3.0 / ln2, 1e-12));
  CHECK_THAT(init.lambda2, WithinRel(9.5 / ln2, 1e-12));

  // No observed non-fatal events: fall back to the overall time median.
  const auto fatal_only = Dataset::from_records({{Category::BObservedNoA, 9.0, 9.0}});
  const ModelParams fb = default_init(fatal_only);
  CHECK_THAT(fb.lambda1, WithinRel(9.0 / ln2, 1e-12));
  CHECK_THAT(fb.lambda2, WithinRel(9.0 / ln2, 1e-12));
}

TEST_CASE("fit is deterministic in data and config", "[estimation]") {
  const ModelParams truth = testsup::stanford_fit();
  biweibull::simulation::Rng rng(3);
  const auto d = biweibull::simulation::generate_dataset(truth, {60, 1460.0, std::nullopt}, rng);

  FitConfig cfg;
  cfg.restarts = 2;
  const FitResult r1 = fit(d, cfg);
  const FitResult r2 = fit(d, cfg);
  CHECK(r1.estimate.alpha == r2.estimate.alpha);
  CHECK(r1.estimate.lambda1 == r2.estimate.lambda1);
  CHECK(r1.estimate.gamma1 == r2.estimate.gamma1);
  CHECK(r1.estimate.lambda2 == r2.estimate.lambda2);
  CHECK(r1.estimate.gamma2 == r2.estimate.gamma2);
  CHECK(r1.loglik == r2.loglik);
  CHECK(r1.n_iter == r2.n_iter);
  CHECK(r1.converged == r2.converged);
}

TEST_CASE("plain-censoring fit recovers the truth within three standard errors",
          "[estimation]") {
  // Under plain right-censoring semantics the baseline likelihood is the
  // exact likelihood of the generated records, so the MLE is consistent
  // and the 3-SE band around the estimate should cover the truth.
  const ModelParams truth = testsup::stanford_fit();
  biweibull::simulation::Rng rng(101);
  const auto d = biweibull::simulation::generate_dataset(truth, {1200, 1460.0, std::nullopt}, rng);

  FitConfig cfg;
  cfg.objective = Objective::PlainCensoring;
  cfg.restarts = 2;
  const FitResult res = fit(d, cfg);

  REQUIRE(res.converged);
  REQUIRE(res.hessian_ok);
  REQUIRE(res.std_errors.has_value());
  CHECK(res.alpha_at_boundary == false);
  CHECK(res.independence_fit == nullptr);
  CHECK(res.grad_max_norm <= 1e-4);
  for (bool f : res.flat) CHECK_FALSE(f);

  const std::array<double, 5> est{res.estimate.alpha, res.estimate.lambda1, res.estimate.gamma1,
                                  res.estimate.lambda2, res.estimate.gamma2};
  const std::array<double, 5> tru{truth.alpha, truth.lambda1, truth.gamma1, truth.lambda2,
                                  truth.gamma2};
  for (int i = 0; i < 5; ++i) {
    CAPTURE(i, est[i], tru[i], (*res.std_errors)[i]);
    CHECK(std::abs(est[i] - tru[i]) <= 3.0 * (*res.std_errors)[i]);
  }

  SECTION("the fitted likelihood dominates random parameter draws") {
    biweibull::simulation::Rng draw(2025);
    for (int i = 0; i < 100; ++i) {
      const ModelParams cand{draw.uniform(0.05, 1.0),
                             std::exp(draw.uniform(std::log(5.0), std::log(2000.0))),
                             std::exp(draw.uniform(std::log(0.2), std::log(3.0))),
                             std::exp(draw.uniform(std::log(5.0), std::log(2000.0))),
                             std::exp(draw.uniform(std::log(0.2), std::log(3.0)))};
      CHECK(biweibull::likelihood::loglik_plain_censoring(d, cand) <= res.loglik + 1e-9);
    }
  }
}

TEST_CASE("parameters the data never mentions are flagged flat", "[estimation]") {
  // Fatal-only records: the likelihood is constant in alpha, lambda1, and
  // gamma1.  The fit must say so instead of reporting arbitrary numbers
  // with confident-looking standard errors.
  const auto d = only_fatal_dataset(385.6361, 0.48300, 300, 17);

  FitConfig cfg;
  cfg.restarts = 2;
  const FitResult res = fit(d, cfg);

  CHECK(res.flat[0]);  // alpha
  CHECK(res.flat[1]);  // lambda1
  CHECK(res.flat[2]);  // gamma1
  CHECK_FALSE(res.flat[3]);
  CHECK_FALSE(res.flat[4]);
  CHECK_FALSE(res.hessian_ok);
  CHECK_FALSE(res.std_errors.has_value());
  CHECK_FALSE(res.alpha_at_boundary);  // alpha idles near its 0.8 start
  CHECK(res.converged);  // the gradient vanishes in the flat directions too

  // The identified margin must match the independent univariate MLE.
  const auto [t, obs] = fatal_times(d);
  const auto [lam, gam] = testsup::uniweibull_mle(t, obs);
  CHECK_THAT(res.estimate.lambda2, WithinRel(lam, 1e-3));
  CHECK_THAT(res.estimate.gamma2, WithinRel(gam, 1e-3));
  CHECK_THAT(res.loglik, WithinAbs(testsup::uniweibull_loglik(t, obs, res.estimate.lambda2,
                                                              res.estimate.gamma2),
                                   1e-8));
}

TEST_CASE("an estimate at the association boundary triggers an independence refit",
          "[estimation]") {
  const auto d = only_fatal_dataset(385.6361, 0.48300, 300, 17);

  FitConfig cfg;
  cfg.restarts = 0;
  // Start essentially at independence; the flat likelihood never moves
  // alpha away, so the estimate lands inside the boundary band.
  cfg.init = ModelParams{1.0 - 1e-8, 100.0, 1.0, 350.0, 0.5};
  const FitResult res = fit(d, cfg);

  CHECK(res.estimate.alpha > 1.0 - 1e-4);
  REQUIRE(res.alpha_at_boundary);
  REQUIRE(res.independence_fit != nullptr);

  const FitResult& ind = *res.independence_fit;
  CHECK(ind.estimate.alpha == 1.0);
  CHECK(ind.flat[0]);  // pinned, not estimated
  CHECK(ind.flat[1]);  // lambda1 still untouched by the data
  CHECK(ind.flat[2]);
  CHECK_FALSE(ind.hessian_ok);  // information matrix is singular in the X margin
  CHECK_FALSE(ind.std_errors.has_value());

  const auto [t, obs] = fatal_times(d);
  const auto [lam, gam] = testsup::uniweibull_mle(t, obs);
  CHECK_THAT(ind.estimate.lambda2, WithinRel(lam, 1e-3));
  CHECK_THAT(ind.estimate.gamma2, WithinRel(gam, 1e-3));
  // Both fits see the same data and the same flat directions, so the
  // achieved log-likelihoods must agree.
  CHECK_THAT(ind.loglik, WithinAbs(res.loglik, 1e-6));
}

TEST_CASE("standard errors reproduce the censored-exponential closed form", "[estimation]") {
  // Exponential with scale 2 censored at 3: the observed information gives
  // SE(scale) = scale_hat / sqrt(d) exactly at the MLE scale_hat = sum t / d.
  // This pins the finite-difference Hessian machinery to a hand-derivable
  // answer through a one-parameter likelihood.
  biweibull::simulation::Rng rng(23);
  const std::size_t n = 400;
  std::vector<double> t;
  std::vector<bool> obs;
  std::size_t d = 0;
  double sum_t = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double draw = 2.0 * rng.exponential1();
    const bool seen = draw <= 3.0;
    t.push_back(seen ? draw : 3.0);
    obs.push_back(seen);
    d += seen ? 1 : 0;
    sum_t += t.back();
  }
  const double scale_hat = sum_t / static_cast<double>(d);

  auto negloglik = [&](const std::vector<double>& v) {
    return -testsup::uniweibull_loglik(t, obs, v[0], 1.0);
  };
  const auto h = biweibull::numerics::central_diff_hessian(negloglik, {scale_hat});
  biweibull::numerics::Matrix cov;
  REQUIRE(h.invert_spd(cov));
  const double se_fd = std::sqrt(cov(0, 0));
  const double se_exact = scale_hat / std::sqrt(static_cast<double>(d));
  CHECK_THAT(se_fd, WithinRel(se_exact, 1e-5));
}

TEST_CASE("standard errors shrink by sqrt(2) when the data doubles", "[estimation]") {
  const ModelParams theta = testsup::stanford_fit();
  biweibull::simulation::Rng rng(21);
  const auto d1 = biweibull::simulation::generate_dataset(theta, {400, 1460.0, std::nullopt}, rng);

  std::vector<SubjectRecord> doubled = d1.records();
  doubled.insert(doubled.end(), d1.records().begin(), d1.records().end());
  const auto d2 = Dataset::from_records(std::move(doubled));

  const StdErrors s1 = standard_errors(d1, theta);
  const StdErrors s2 = standard_errors(d2, theta);
  REQUIRE(s1.hessian_ok);
  REQUIRE(s2.hessian_ok);
  for (int i = 0; i < 5; ++i) {
    CAPTURE(i, s1.se[i], s2.se[i]);
    CHECK_THAT(s1.se[i] / s2.se[i], WithinRel(std::sqrt(2.0), 1e-6));
  }

  SECTION("covariance is a faithful inverse of the Hessian") {
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        double prod = 0.0;
        for (int k = 0; k < 5; ++k) prod += s1.hessian(i, k) * s1.covariance(k, j);
        CHECK_THAT(prod, WithinAbs(i == j ? 1.0 : 0.0, 1e-8));
      }
    }
  }
}

TEST_CASE("a likelihood that fails at the starting point is a loud error", "[estimation]") {
  // tail probability underflows to an exact zero at t = 1e7 under unit
  // exponentials, so the objective is -inf at the configured start.
  const auto d = Dataset::from_records({{Category::BothCensored, 1e7, 1e7}});
  FitConfig cfg;
  cfg.init = testsup::unit_exponentials();
  try {
    fit(d, cfg);
    FAIL("expected runtime_error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("initial parameters") != std::string::npos);
  }
}

TEST_CASE("fit configuration is validated", "[estimation]") {
  const auto d = Dataset::from_records({{Category::BothObserved, 1.0, 2.0}});
  FitConfig bad;
  bad.max_iter = 0;
  CHECK_THROWS_AS(fit(d, bad), std::invalid_argument);
  bad = FitConfig{};
  bad.restarts = -1;
  CHECK_THROWS_AS(fit(d, bad), std::invalid_argument);
  bad = FitConfig{};
  bad.x_tol = 0.0;
  CHECK_THROWS_AS(fit(d, bad), std::invalid_argument);
  bad = FitConfig{};
  bad.init = ModelParams{0.5, -1.0, 1.0, 1.0, 1.0};
  CHECK_THROWS_AS(fit(d, bad), std::invalid_argument);
}
