#include <cmath>
#include <numeric>

#include "catch_amalgamated.hpp"
#include "fixtures.hpp"

using namespace atecr;

TEST_CASE("empirical quantile follows the ceiling rule", "[resample]") {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  REQUIRE(empirical_quantile(v, 0.95) == 95.0);
  REQUIRE(empirical_quantile(v, 1.0) == 100.0);
  REQUIRE(empirical_quantile(v, 0.001) == 1.0);
  REQUIRE(empirical_quantile({42.0}, 0.3) == 42.0);
  REQUIRE_THROWS_AS(empirical_quantile({}, 0.5), DomainError);
  REQUIRE_THROWS_AS(empirical_quantile(v, 0.0), DomainError);
  REQUIRE_THROWS_AS(empirical_quantile(v, 1.1), DomainError);
}

TEST_CASE("multiplier schemes have the right support and moments", "[resample]") {
  Dataset ds = fixtures::random_dataset(20, 0, 1, 131);
  const std::size_t reps = 2000;

  auto moments = [&](MultiplierKind kind) {
    RngStream rng(5);
    double sum = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      MultiplierScheme scheme{kind};
      for (double g : gen_multipliers(scheme, ds, rng)) {
        sum += g;
        sq += g * g;
      }
    }
    const double m = sum / (reps * ds.size());
    return std::pair{m, sq / (reps * ds.size()) - m * m};
  };

  for (auto kind : {MultiplierKind::standard_normal, MultiplierKind::centered_poisson}) {
    auto [mean, var] = moments(kind);
    REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.0, 0.03));
    REQUIRE_THAT(var, Catch::Matchers::WithinAbs(1.0, 0.05));
  }

  SECTION("poisson support is {-1, 0, 1, ...}") {
    RngStream rng(6);
    MultiplierScheme scheme{MultiplierKind::centered_poisson};
    for (double g : gen_multipliers(scheme, ds, rng)) {
      REQUIRE(g >= -1.0);
      REQUIRE(g == std::floor(g));
    }
  }

  SECTION("weird multiplier is 0 when the risk set has one subject") {
    RngStream rng(7);
    MultiplierScheme scheme{MultiplierKind::weird_binomial};
    // Subject with the latest observed time has Y = 1.
    std::size_t last = ds.time_order().back();
    for (int rep = 0; rep < 50; ++rep) {
      REQUIRE(gen_multipliers(scheme, ds, rng)[last] == 0.0);
    }
  }
}

TEST_CASE("bootstrap ensemble is seed-deterministic", "[resample]") {
  Dataset ds = fixtures::random_dataset(60, 1, 2, 141);
  auto ctxs = fixtures::standard_contexts(ds);
  auto fits = fixtures::standard_fits(ctxs);
  TimeGrid grid = default_grid(ds, {});

  ResampleEnsemble a = efron_ensemble(ctxs, fits, grid, 20, 9001);
  ResampleEnsemble b = efron_ensemble(ctxs, fits, grid, 20, 9001, 3);
  REQUIRE(a.draws.cwiseEqual(b.draws).all());
  REQUIRE(a.discarded == b.discarded);
  ResampleEnsemble c = efron_ensemble(ctxs, fits, grid, 20, 9002);
  REQUIRE_FALSE(a.draws.cwiseEqual(c.draws).all());
  REQUIRE_THROWS_AS(efron_ensemble(ctxs, fits, grid, 0, 1), DomainError);
}

TEST_CASE("wild draws scale linearly and deterministically", "[resample]") {
  Dataset ds = fixtures::random_dataset(60, 1, 2, 151);
  auto ctxs = fixtures::standard_contexts(ds);
  auto fits = fixtures::standard_fits(ctxs);
  TimeGrid grid = default_grid(ds, {});

  ResampleEnsemble a = wild_ensemble(ctxs, fits, grid, 15, {}, 77);
  ResampleEnsemble b = wild_ensemble(ctxs, fits, grid, 15, {}, 77, 4);
  REQUIRE(a.draws.cwiseEqual(b.draws).all());

  WildLinearization lin(ctxs, fits, grid);
  const auto E = static_cast<Eigen::Index>(lin.contributions().rows());
  Eigen::VectorXd g1(E), g2(E);
  RngStream rng(8);
  for (Eigen::Index e = 0; e < E; ++e) {
    g1[e] = rng.normal();
    g2[e] = rng.normal();
  }
  Eigen::RowVectorXd u1 = g1.transpose() * lin.contributions();
  Eigen::RowVectorXd u2 = (2.0 * g1).transpose() * lin.contributions();
  for (Eigen::Index g = 0; g < u1.size(); ++g) REQUIRE(u2[g] == 2.0 * u1[g]);
  Eigen::RowVectorXd usum = (g1 + g2).transpose() * lin.contributions();
  Eigen::RowVectorXd usep = g1.transpose() * lin.contributions() +
                            (g2.transpose() * lin.contributions()).eval();
  for (Eigen::Index g = 0; g < usum.size(); ++g) {
    REQUIRE_THAT(usum[g], Catch::Matchers::WithinAbs(usep[g], 1e-10));
  }
}

TEST_CASE("wild linearization matches finite-difference derivatives", "[resample]") {
  Dataset ds = fixtures::random_dataset(40, 2, 2, 161, 0.15);
  auto ctxs = fixtures::standard_contexts(ds);
  auto fits = fixtures::standard_fits(ctxs);
  TimeGrid grid = default_grid(ds, {});
  WildLinearization lin(ctxs, fits, grid);
  const std::size_t G = grid.size();
  ATECurve base = g_formula_ate(fits, ds, grid);

  SECTION("baseline-atom derivatives") {
    const double h = 1e-6;
    for (std::size_t e : {std::size_t{0}, lin.events().size() / 2, lin.events().size() - 1}) {
      const auto k = static_cast<std::size_t>(lin.events()[e].cause_index);
      // Locate this event within its cause's baseline.
      std::size_t idx = 0;
      const auto& bt = fits[k].baseline.jump_times;
      while (bt[idx] != lin.events()[e].time) ++idx;

      auto eval = [&](double delta) {
        std::vector<CoxFit> mod = fits;
        mod[k].baseline.jump_sizes[idx] += delta;
        return g_formula_ate(mod, ds, grid).values;
      };
      std::vector<double> up = eval(h), dn = eval(-h);
      for (std::size_t g = 0; g < G; g += 7) {
        const double fd = (up[g] - dn[g]) / (2.0 * h);
        REQUIRE_THAT(lin.atom_derivative(e, g),
                     Catch::Matchers::WithinAbs(fd, 5e-6) ||
                         Catch::Matchers::WithinRel(fd, 1e-4));
      }
    }
  }

  SECTION("coefficient gradients, with baselines refit at the shifted beta") {
    const double h = 1e-6;
    for (std::size_t k = 0; k < 2; ++k) {
      RngStream rng(10 + k);
      Eigen::VectorXd dir(fits[k].beta.size());
      for (Eigen::Index c = 0; c < dir.size(); ++c) dir[c] = rng.normal();
      auto eval = [&](double delta) {
        std::vector<CoxFit> mod = fits;
        mod[k].beta += delta * dir;
        mod[k].baseline = breslow_baseline(ctxs[k], mod[k].beta);
        return g_formula_ate(mod, ds, grid).values;
      };
      std::vector<double> up = eval(h), dn = eval(-h);
      for (std::size_t g = 0; g < G; g += 5) {
        const double fd = (up[g] - dn[g]) / (2.0 * h);
        const double lin_d = lin.beta_gradient(k, g).dot(dir);
        REQUIRE_THAT(lin_d, Catch::Matchers::WithinAbs(fd, 5e-6) ||
                                Catch::Matchers::WithinRel(fd, 1e-4));
      }
    }
  }
}

TEST_CASE("influence rows are mean-centered and vanish under a pinned effect", "[resample]") {
  Dataset ds = fixtures::random_dataset(40, 1, 2, 171);
  auto ctxs = fixtures::standard_contexts(ds);
  auto fits = fixtures::standard_fits(ctxs);
  TimeGrid grid = default_grid(ds, {});
  InfluenceMatrix ifm = influence_matrix(ctxs, fits, grid);
  REQUIRE(ifm.values.rows() == 40);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto col = ifm.values.col(static_cast<Eigen::Index>(g));
    const double sd = std::sqrt(col.squaredNorm() / 40.0);
    if (sd > 0.0) REQUIRE(std::abs(col.sum()) <= 1e-6 * 40.0 * sd);
    REQUIRE(ifm.variance[g] >= 0.0);
  }

  SECTION("pinned treatment gives a zero influence matrix") {
    std::vector<CoxContext> pctxs;
    for (int k = 1; k <= 2; ++k) pctxs.emplace_back(ds, k, resolve_design(ds, k, true, {}, true));
    std::vector<CoxFit> pinned;
    for (const auto& ctx : pctxs) pinned.push_back(fit_cause_specific(ctx));
    InfluenceMatrix zero = influence_matrix(pctxs, pinned, grid);
    REQUIRE(zero.values.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("pointwise interval formulas check out against the draws", "[resample]") {
  Dataset ds = fixtures::random_dataset(70, 1, 2, 181);
  auto ctxs = fixtures::standard_contexts(ds);
  auto fits = fixtures::standard_fits(ctxs);
  TimeGrid grid = default_grid(ds, {});
  ATECurve est = g_formula_ate(fits, ds, grid);
  const double alpha = 0.05;

  SECTION("wild half-width is the quantile of |U| over sqrt(n)") {
    ResampleEnsemble ens = wild_ensemble(ctxs, fits, grid, 200, {}, 1234);
    ConfidenceRegion ci = pointwise_ci_wbs(ens, est, alpha);
    const std::size_t g = grid.size() / 2;
    std::vector<double> abs_draws;
    for (Eigen::Index b = 0; b < ens.draws.rows(); ++b) {
      abs_draws.push_back(std::abs(ens.draws(b, static_cast<Eigen::Index>(g))));
    }
    std::sort(abs_draws.begin(), abs_draws.end());
    const double q = abs_draws[189];  // ceil(200 * 0.95) = 190
    REQUIRE_THAT(ci.upper[g] - est.values[g],
                 Catch::Matchers::WithinAbs(q / std::sqrt(70.0), 1e-14));
    REQUIRE_THAT(est.values[g] - ci.lower[g],
                 Catch::Matchers::WithinAbs(q / std::sqrt(70.0), 1e-14));
  }

  SECTION("bootstrap interval is ordered around the estimate") {
    ResampleEnsemble ens = efron_ensemble(ctxs, fits, grid, 50, 4321);
    ConfidenceRegion ci = pointwise_ci_ebs(ens, est, alpha);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      REQUIRE(ci.lower[g] <= est.values[g]);
      REQUIRE(ci.upper[g] >= est.values[g]);
    }
  }

  SECTION("influence interval uses the normal quantile") {
    InfluenceMatrix ifm = influence_matrix(ctxs, fits, grid);
    ConfidenceRegion ci = pointwise_ci_if(ifm, est, alpha);
    const std::size_t g = grid.size() - 1;
    const double hw = normal_quantile(0.975) * std::sqrt(ifm.variance[g] / 70.0);
    REQUIRE_THAT(ci.upper[g] - ci.lower[g], Catch::Matchers::WithinAbs(2.0 * hw, 1e-14));
  }

  SECTION("intervals nest as alpha shrinks") {
    ResampleEnsemble ens = wild_ensemble(ctxs, fits, grid, 300, {}, 999);
    ConfidenceRegion wide = pointwise_ci_wbs(ens, est, 0.01);
    ConfidenceRegion narrow = pointwise_ci_wbs(ens, est, 0.10);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      REQUIRE(wide.lower[g] <= narrow.lower[g]);
      REQUIRE(wide.upper[g] >= narrow.upper[g]);
    }
  }
}

TEST_CASE("bands dominate same-draw pointwise quantiles and flag degeneracy", "[resample]") {
  Dataset ds = fixtures::random_dataset(70, 1, 2, 191);
  auto ctxs = fixtures::standard_contexts(ds);
  auto fits = fixtures::standard_fits(ctxs);
  TimeGrid grid = default_grid(ds, {});
  ATECurve est = g_formula_ate(fits, ds, grid);

  ResampleEnsemble ens = wild_ensemble(ctxs, fits, grid, 150, {}, 2024);
  ConfidenceRegion band = simultaneous_band_wbs(ens, est, 0.05, 0.0, grid.points.back());
  REQUIRE(band.band);
  REQUIRE(band.quantile_used.size() == 1);
  for (std::size_t bg = 0; bg < band.grid.size(); ++bg) {
    // Standardized pointwise quantile at this time from the same draws.
    std::size_t g = 0;
    while (grid.points[g] != band.grid.points[bg]) ++g;
    std::vector<double> std_abs;
    for (Eigen::Index b = 0; b < ens.draws.rows(); ++b) {
      std_abs.push_back(std::abs(ens.draws(b, static_cast<Eigen::Index>(g))) /
                        std::sqrt(ens.variance[g]));
    }
    REQUIRE(band.quantile_used[0] >= empirical_quantile(std_abs, 0.95) - 1e-12);
  }

  SECTION("band interval outside the grid is rejected") {
    REQUIRE_THROWS_AS(simultaneous_band_wbs(ens, est, 0.05, grid.points.back() + 1.0,
                                            grid.points.back() + 2.0),
                      DomainError);
  }

  SECTION("single-draw bands are flagged") {
    ResampleEnsemble one = wild_ensemble(ctxs, fits, grid, 1, {}, 5);
    // Variance of one draw is zero everywhere -> all points excluded.
    REQUIRE_THROWS_AS(simultaneous_band_wbs(one, est, 0.05, 0.0, grid.points.back()),
                      DomainError);
  }
}

TEST_CASE("variance estimators agree on simulated data", "[resample]") {
  // One light-censoring dataset; a loose single-dataset version of the
  // cross-method agreement property.
  ScenarioConfig cfg;
  cfg.beta_1a = 2.0;
  RngStream rng(11);
  Dataset ds = generate_dataset(cfg, 150, rng);
  auto ctxs = fixtures::standard_contexts(ds);
  auto fits = fixtures::standard_fits(ctxs);
  TimeGrid grid({5.0});
  ATECurve est = g_formula_ate(fits, ds, grid);
  (void)est;

  ResampleEnsemble eb = efron_ensemble(ctxs, fits, grid, 200, 31);
  InfluenceMatrix ifm = influence_matrix(ctxs, fits, grid);
  ResampleEnsemble wb = wild_ensemble(ctxs, fits, grid, 500, {}, 41);

  const double v_eb = 150.0 * eb.variance[0];
  const double v_if = ifm.variance[0];
  const double v_wb = wb.variance[0];
  REQUIRE(v_eb / v_if > 0.5);
  REQUIRE(v_eb / v_if < 2.0);
  REQUIRE(v_wb / v_if > 0.5);
  REQUIRE(v_wb / v_if < 2.0);
}
