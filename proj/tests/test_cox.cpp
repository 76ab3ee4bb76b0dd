#include <cmath>

#include "catch_amalgamated.hpp"
#include "fixtures.hpp"

using namespace atecr;

TEST_CASE("three-subject fixture loglik and maximizer", "[cox]") {
  Dataset ds = fixtures::three_subject();
  CoxContext ctx = fixtures::covariate_only_context(ds);

  Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(1);
  PartialLoglik pl = detail::partial_loglik_sweep(ctx, beta0, {});
  REQUIRE_THAT(pl.loglik, Catch::Matchers::WithinAbs(-std::log(6.0), 1e-12));

  CoxFit fit = fit_cause_specific(ctx);
  REQUIRE(fit.converged);
  REQUIRE(fit.score_norm_at_solution <= 1e-9);
  REQUIRE_THAT(fit.beta[0], Catch::Matchers::WithinAbs(-0.5 * std::log(2.0), 1e-8));
  const double x = std::exp(fit.beta[0]);
  REQUIRE_THAT(fit.baseline.value(1.0), Catch::Matchers::WithinAbs(1.0 / (2.0 * x + 1.0), 1e-12));
  REQUIRE_THAT(fit.baseline.value(1.0), Catch::Matchers::WithinAbs(0.414214, 1e-6));
  REQUIRE_THAT(fit.baseline.value(2.0), Catch::Matchers::WithinAbs(1.0, 1e-6));
  REQUIRE(fit.baseline.value(0.5) == 0.0);
  REQUIRE(fit.baseline.value_before(1.0) == 0.0);

  // Conditional cumulative hazard at (z = 1, t = 1).
  REQUIRE_THAT(cumulative_hazard_at(fit, 0, {1.0}, 1.0),
               Catch::Matchers::WithinAbs(0.292893, 1e-6));
  REQUIRE(cumulative_hazard_at(fit, 0, {1.0}, 0.0) == 0.0);
}

TEST_CASE("risk set of size one contributes nothing", "[cox]") {
  std::vector<SubjectRecord> recs(2);
  recs[0] = {1.0, 0, 0, {0.5}, 1.0};  // censored before the lone event
  recs[1] = {2.0, 1, 0, {1.5}, 1.0};
  Dataset ds(recs, 1, {"z"});
  CoxContext ctx = fixtures::covariate_only_context(ds);
  for (double b : {-2.0, 0.0, 3.0}) {
    Eigen::VectorXd beta(1);
    beta << b;
    PartialLoglik pl = detail::partial_loglik_sweep(ctx, beta, {});
    REQUIRE_THAT(pl.loglik, Catch::Matchers::WithinAbs(0.0, 1e-14));
    REQUIRE_THAT(pl.score[0], Catch::Matchers::WithinAbs(0.0, 1e-14));
  }
}

TEST_CASE("weights scale the loglik and leave the maximizer alone", "[cox]") {
  Dataset ds = fixtures::three_subject();
  CoxContext ctx = fixtures::covariate_only_context(ds);
  Eigen::VectorXd beta(1);
  beta << 0.3;
  PartialLoglik a = detail::partial_loglik_sweep(ctx, beta, {1.0, 1.0, 1.0});
  PartialLoglik b = detail::partial_loglik_sweep(ctx, beta, {2.0, 2.0, 2.0});
  // Doubling all weights doubles each event term but also shifts every risk
  // denominator by log 2: ll(2w) = 2 ll(w) - 2 (sum of event weights) log 2.
  REQUIRE_THAT(b.loglik, Catch::Matchers::WithinRel(2.0 * a.loglik - 6.0 * std::log(2.0), 1e-12));
  REQUIRE_THAT(b.score[0], Catch::Matchers::WithinRel(2.0 * a.score[0], 1e-12));

  CoxFit unit = fit_cause_specific(ctx);
  CoxFit scaled = fit_cause_specific(ctx, {3.0, 3.0, 3.0});
  REQUIRE_THAT(scaled.beta[0], Catch::Matchers::WithinAbs(unit.beta[0], 1e-9));
}

TEST_CASE("monotone likelihood raises a divergence error", "[cox]") {
  std::vector<SubjectRecord> recs(2);
  recs[0] = {1.0, 1, 0, {0.0}, 1.0};
  recs[1] = {2.0, 1, 0, {1.0}, 1.0};
  Dataset ds(recs, 1, {"z"});
  CoxContext ctx = fixtures::covariate_only_context(ds);
  // The partial likelihood is monotone in beta, so the solver either trips the
  // divergence guard or flattens out at an extreme coefficient whose score is
  // already below tolerance.
  bool flagged = false;
  try {
    CoxFit fit = fit_cause_specific(ctx);
    flagged = std::abs(fit.beta[0]) > 10.0;
  } catch (const NumericalError&) {
    flagged = true;
  }
  REQUIRE(flagged);
}

TEST_CASE("constant covariate column is reported by name", "[cox]") {
  std::vector<SubjectRecord> recs(3);
  recs[0] = {1.0, 1, 0, {2.0}, 1.0};
  recs[1] = {2.0, 1, 0, {2.0}, 1.0};
  recs[2] = {3.0, 0, 0, {2.0}, 1.0};
  Dataset ds(recs, 1, {"flat"});
  CoxContext ctx = fixtures::covariate_only_context(ds);
  try {
    fit_cause_specific(ctx);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    REQUIRE(std::string(e.what()).find("flat") != std::string::npos);
  }
}

TEST_CASE("score and hessian match finite differences", "[cox]") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Dataset ds = fixtures::random_dataset(30, 2, 1, seed);
    CoxContext ctx(ds, 1, resolve_design(ds, 1, true, {}));
    RngStream rng(seed * 17);
    Eigen::VectorXd beta(3);
    for (int c = 0; c < 3; ++c) beta[c] = 0.5 * rng.normal();

    PartialLoglik pl = detail::partial_loglik_sweep(ctx, beta, {});
    for (int c = 0; c < 3; ++c) {
      const double h = 1e-6 * (1.0 + std::abs(beta[c]));
      Eigen::VectorXd bp = beta, bm = beta;
      bp[c] += h;
      bm[c] -= h;
      const double fd =
          (detail::partial_loglik_sweep(ctx, bp, {}).loglik -
           detail::partial_loglik_sweep(ctx, bm, {}).loglik) /
          (2.0 * h);
      REQUIRE_THAT(pl.score[c], Catch::Matchers::WithinRel(fd, 1e-5) ||
                                    Catch::Matchers::WithinAbs(fd, 1e-8));
      Eigen::VectorXd sfd =
          (detail::partial_loglik_sweep(ctx, bp, {}).score -
           detail::partial_loglik_sweep(ctx, bm, {}).score) /
          (2.0 * h);
      for (int r = 0; r < 3; ++r) {
        REQUIRE_THAT(pl.hessian(r, c), Catch::Matchers::WithinRel(sfd[r], 1e-5) ||
                                           Catch::Matchers::WithinAbs(sfd[r], 1e-6));
      }
    }
  }
}

TEST_CASE("covariate rescaling moves the coefficient inversely", "[cox]") {
  Dataset ds = fixtures::random_dataset(50, 1, 1, 21);
  CoxContext ctx(ds, 1, resolve_design(ds, 1, true, {}));
  CoxFit fit = fit_cause_specific(ctx);

  const double c = 4.0;
  std::vector<SubjectRecord> recs = ds.records();
  for (auto& r : recs) r.covariates[0] *= c;
  Dataset scaled(recs, 1, {"x0"});
  CoxContext ctx2(scaled, 1, resolve_design(scaled, 1, true, {}));
  CoxFit fit2 = fit_cause_specific(ctx2);

  REQUIRE_THAT(fit2.beta[1], Catch::Matchers::WithinAbs(fit.beta[0 + 1] / c, 1e-7));
  // Predictions are invariant: hazard at matching covariate values agrees.
  const double z = ds.records()[0].covariates[0];
  REQUIRE_THAT(cumulative_hazard_at(fit2, 1, {c * z}, 1.0),
               Catch::Matchers::WithinAbs(cumulative_hazard_at(fit, 1, {z}, 1.0), 1e-10));
}

TEST_CASE("breslow at beta = 0 reduces to Nelson-Aalen", "[cox]") {
  Dataset ds = fixtures::random_dataset(25, 1, 1, 31);
  CoxContext ctx(ds, 1, resolve_design(ds, 1, true, {}));
  StepCumHazard bres = breslow_baseline(ctx, Eigen::VectorXd::Zero(2));
  for (std::size_t j = 0; j < bres.jump_times.size(); ++j) {
    const double na = 1.0 / static_cast<double>(ds.risk_set_size(bres.jump_times[j]));
    REQUIRE_THAT(bres.jump_sizes[j], Catch::Matchers::WithinAbs(na, 1e-14));
  }
}

TEST_CASE("pinned treatment coefficient stays at zero", "[cox]") {
  Dataset ds = fixtures::random_dataset(60, 2, 1, 41);
  CoxOptions opt;
  opt.pin_treatment_zero = true;
  CoxFit fit = fit_cause_specific(ds, 1, {}, opt);
  REQUIRE(fit.converged);
  REQUIRE(fit.beta[0] == 0.0);
  // Matches a fit that simply excludes the treatment column.
  CoxContext noA = fixtures::covariate_only_context(ds);
  CoxFit fit2 = fit_cause_specific(noA);
  REQUIRE_THAT(fit.beta[1], Catch::Matchers::WithinAbs(fit2.beta[0], 1e-8));
  REQUIRE_THAT(fit.beta[2], Catch::Matchers::WithinAbs(fit2.beta[1], 1e-8));
}

TEST_CASE("information matrix is positive semidefinite at the fit", "[cox]") {
  Dataset ds = fixtures::random_dataset(80, 2, 2, 51);
  for (int k = 1; k <= 2; ++k) {
    CoxFit fit = fit_cause_specific(ds, k);
    REQUIRE(fit.converged);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.information_matrix);
    REQUIRE(es.eigenvalues().minCoeff() >= -1e-10);
  }
}
