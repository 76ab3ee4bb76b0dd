#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "atecr/cif.hpp"
#include "atecr/cox.hpp"
#include "atecr/dataset.hpp"
#include "atecr/errors.hpp"
#include "atecr/parallel.hpp"
#include "atecr/resample_types.hpp"
#include "atecr/rng.hpp"
#include "atecr/stats.hpp"
#include "atecr/wild.hpp"

namespace atecr {

struct RedrawPolicy {
  std::size_t max_attempts_per_replicate = 100;
};

namespace detail {

inline std::vector<CoxOptions> warm_options(const std::vector<CoxFit>& base_fits) {
  std::vector<CoxOptions> opts(base_fits.size());
  for (std::size_t k = 0; k < base_fits.size(); ++k) {
    opts[k].include_treatment = base_fits[k].design.include_treatment;
    opts[k].pin_treatment_zero = base_fits[k].design.pin_treatment_zero;
    opts[k].covariate_subset = base_fits[k].design.covariate_subset;
    opts[k].initial_beta = base_fits[k].beta;
  }
  return opts;
}

// Refit all causes under the given case weights and evaluate the ATE curve.
inline std::vector<double> weighted_ate(const std::vector<CoxContext>& ctxs,
                                        const std::vector<CoxOptions>& opts,
                                        const std::vector<double>& weights,
                                        const TimeGrid& grid) {
  std::vector<CoxFit> fits;
  fits.reserve(ctxs.size());
  for (std::size_t k = 0; k < ctxs.size(); ++k) {
    CoxFit f = fit_cause_specific(ctxs[k], weights, opts[k]);
    if (!f.converged) {
      throw NumericalError("cause-" + std::to_string(k + 1) + " refit did not converge");
    }
    fits.push_back(std::move(f));
  }
  return g_formula_ate(fits, ctxs[0].dataset(), grid, weights).values;
}

}  // namespace detail

// Nonparametric bootstrap: each replicate draws n records with replacement
// (as multinomial case weights, so resamples never create new event-time
// ties), refits all models, and re-evaluates the ATE curve. Replicates whose
// refit fails are redrawn from the attempt-indexed substream.
inline ResampleEnsemble efron_ensemble(const std::vector<CoxContext>& ctxs,
                                       const std::vector<CoxFit>& base_fits, const TimeGrid& grid,
                                       std::size_t B, std::uint64_t seed, int workers = 1,
                                       const RedrawPolicy& policy = {}) {
  if (B == 0) throw DomainError("efron_ensemble: B must be positive");
  if (ctxs.empty() || ctxs.size() != base_fits.size()) {
    throw DomainError("efron_ensemble: one context per fit required");
  }
  const Dataset& ds = ctxs[0].dataset();
  const std::size_t n = ds.size();
  const std::vector<CoxOptions> opts = detail::warm_options(base_fits);

  ResampleEnsemble ens;
  ens.grid = grid;
  ens.method = Method::EBS;
  ens.draws.resize(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(grid.size()));
  std::vector<std::size_t> discarded_per(B, 0);

  parallel_for(B, workers, [&](std::size_t b) {
    std::vector<double> weights(n);
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt >= policy.max_attempts_per_replicate) {
        throw NumericalError("bootstrap replicate " + std::to_string(b) + " failed " +
                             std::to_string(attempt) + " consecutive redraws");
      }
      RngStream rng = RngStream::substream(seed, rng_tag::ebs, b, attempt);
      std::fill(weights.begin(), weights.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) weights[rng.index(n)] += 1.0;
      for (std::size_t i = 0; i < n; ++i) weights[i] *= ds.records()[i].weight;
      try {
        std::vector<double> values = detail::weighted_ate(ctxs, opts, weights, grid);
        for (std::size_t g = 0; g < grid.size(); ++g) {
          ens.draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(g)) = values[g];
        }
        discarded_per[b] = attempt;
        return;
      } catch (const NumericalError&) {
      } catch (const DomainError&) {
      }
    }
  });
  for (std::size_t d : discarded_per) ens.discarded += d;
  finalize_ensemble_stats(ens);
  return ens;
}

enum class InfluenceMode { gateaux_numeric };

// Per-subject influence curves by a numeric Gateaux derivative: tilt the
// empirical distribution toward subject i by epsilon, refit (warm-started)
// in both directions, and take the central difference of the ATE curve.
inline InfluenceMatrix influence_matrix(const std::vector<CoxContext>& ctxs,
                                        const std::vector<CoxFit>& base_fits, const TimeGrid& grid,
                                        InfluenceMode mode = InfluenceMode::gateaux_numeric,
                                        int workers = 1, double epsilon_scale = 1e-2) {
  (void)mode;
  if (ctxs.empty() || ctxs.size() != base_fits.size()) {
    throw DomainError("influence_matrix: one context per fit required");
  }
  const Dataset& ds = ctxs[0].dataset();
  const std::size_t n = ds.size();
  const double eps = epsilon_scale / static_cast<double>(n);
  const std::vector<CoxOptions> opts = detail::warm_options(base_fits);

  InfluenceMatrix out;
  out.grid = grid;
  out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(grid.size()));

  parallel_for(n, workers, [&](std::size_t i) {
    std::vector<double> wp(n), wm(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double tilt = eps * (static_cast<double>(n) * (j == i ? 1.0 : 0.0) - 1.0);
      wp[j] = ds.records()[j].weight * (1.0 + tilt);
      wm[j] = ds.records()[j].weight * (1.0 - tilt);
    }
    std::vector<double> up, um;
    try {
      up = detail::weighted_ate(ctxs, opts, wp, grid);
      um = detail::weighted_ate(ctxs, opts, wm, grid);
    } catch (const std::runtime_error& e) {
      throw NumericalError("influence refit failed for subject " + std::to_string(i) + ": " +
                           e.what());
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g)) =
          (up[g] - um[g]) / (2.0 * eps);
    }
  });

  out.variance.assign(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    out.variance[g] = out.values.col(static_cast<Eigen::Index>(g)).squaredNorm() /
                      static_cast<double>(n);
  }
  return out;
}

namespace detail {

inline void check_region_inputs(const TimeGrid& grid, const ATECurve& estimate, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0,1)");
  if (estimate.grid.points != grid.points) {
    throw DomainError("estimate and resampling results use different time grids");
  }
}

inline void enforce_ordering(ConfidenceRegion& r) {
  for (std::size_t g = 0; g < r.estimate.size(); ++g) {
    r.lower[g] = std::min(r.lower[g], r.estimate[g]);
    r.upper[g] = std::max(r.upper[g], r.estimate[g]);
  }
}

struct BandIndex {
  std::vector<std::size_t> kept;
  std::size_t excluded_degenerate = 0;
};

inline BandIndex band_indices(const TimeGrid& grid, const std::vector<double>& variance,
                              double t1, double t2, double eps_var) {
  if (!(t1 <= t2)) throw DomainError("band interval must satisfy t1 <= t2");
  BandIndex idx;
  bool any_in_window = false;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double t = grid.points[g];
    if (t < t1 || t > t2) continue;
    any_in_window = true;
    if (variance[g] > eps_var) {
      idx.kept.push_back(g);
    } else {
      ++idx.excluded_degenerate;
    }
  }
  if (!any_in_window) throw DomainError("no grid points inside the band interval");
  if (idx.kept.empty()) {
    throw DomainError("all grid points in the band interval have degenerate variance");
  }
  return idx;
}

inline void band_warnings(ConfidenceRegion& r, const BandIndex& idx, std::size_t B) {
  if (idx.excluded_degenerate > 0) {
    r.warnings.push_back(std::to_string(idx.excluded_degenerate) +
                         " grid point(s) with near-zero variance excluded from the band");
  }
  if (B < 2) r.warnings.push_back("band quantile based on a single resampling draw");
}

}  // namespace detail

constexpr double k_band_variance_floor = 1e-12;

// Percentile bootstrap interval at each grid point.
inline ConfidenceRegion pointwise_ci_ebs(const ResampleEnsemble& ens, const ATECurve& estimate,
                                         double alpha) {
  detail::check_region_inputs(ens.grid, estimate, alpha);
  if (ens.method != Method::EBS) throw DomainError("pointwise_ci_ebs needs a bootstrap ensemble");
  ConfidenceRegion r;
  r.grid = ens.grid;
  r.estimate = estimate.values;
  r.level = 1.0 - alpha;
  r.method = Method::EBS;
  const std::size_t G = ens.grid.size();
  r.lower.resize(G);
  r.upper.resize(G);
  std::vector<double> col(static_cast<std::size_t>(ens.draws.rows()));
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t b = 0; b < col.size(); ++b) {
      col[b] = ens.draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(g));
    }
    r.lower[g] = empirical_quantile(col, alpha / 2.0);
    r.upper[g] = empirical_quantile(col, 1.0 - alpha / 2.0);
    if (ens.variance[g] <= 0.0) {
      r.warnings.push_back("degenerate bootstrap distribution at t=" +
                           std::to_string(ens.grid.points[g]));
    }
  }
  detail::enforce_ordering(r);
  return r;
}

// Normal interval from the influence-function variance estimate.
inline ConfidenceRegion pointwise_ci_if(const InfluenceMatrix& ifm, const ATECurve& estimate,
                                        double alpha) {
  detail::check_region_inputs(ifm.grid, estimate, alpha);
  ConfidenceRegion r;
  r.grid = ifm.grid;
  r.estimate = estimate.values;
  r.level = 1.0 - alpha;
  r.method = Method::IF;
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const auto n = static_cast<double>(ifm.values.rows());
  const std::size_t G = ifm.grid.size();
  r.lower.resize(G);
  r.upper.resize(G);
  r.quantile_used.resize(G);
  for (std::size_t g = 0; g < G; ++g) {
    const double hw = z * std::sqrt(ifm.variance[g] / n);
    r.quantile_used[g] = hw;
    r.lower[g] = estimate.values[g] - hw;
    r.upper[g] = estimate.values[g] + hw;
    if (ifm.variance[g] <= 0.0) {
      r.warnings.push_back("degenerate influence variance at t=" +
                           std::to_string(ifm.grid.points[g]));
    }
  }
  return r;
}

// Interval with half-width q_{1-alpha}(|U(t)|)/sqrt(n) from the multiplier
// process draws.
inline ConfidenceRegion pointwise_ci_wbs(const ResampleEnsemble& ens, const ATECurve& estimate,
                                         double alpha) {
  detail::check_region_inputs(ens.grid, estimate, alpha);
  if (ens.method != Method::WBS) throw DomainError("pointwise_ci_wbs needs a wild ensemble");
  ConfidenceRegion r;
  r.grid = ens.grid;
  r.estimate = estimate.values;
  r.level = 1.0 - alpha;
  r.method = Method::WBS;
  r.scheme = ens.scheme;
  const double sqrt_n = std::sqrt(static_cast<double>(estimate.n_subjects));
  const std::size_t G = ens.grid.size();
  r.lower.resize(G);
  r.upper.resize(G);
  r.quantile_used.resize(G);
  std::vector<double> col(static_cast<std::size_t>(ens.draws.rows()));
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t b = 0; b < col.size(); ++b) {
      col[b] = std::abs(ens.draws(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(g)));
    }
    const double hw = empirical_quantile(col, 1.0 - alpha) / sqrt_n;
    r.quantile_used[g] = hw;
    r.lower[g] = estimate.values[g] - hw;
    r.upper[g] = estimate.values[g] + hw;
    if (ens.variance[g] <= 0.0) {
      r.warnings.push_back("degenerate multiplier distribution at t=" +
                           std::to_string(ens.grid.points[g]));
    }
  }
  return r;
}

// Bootstrap band: quantile of sup_t |draw(t) - mean(t)| / sd(t) over [t1, t2],
// then estimate +- q * sd(t).
inline ConfidenceRegion simultaneous_band_ebs(const ResampleEnsemble& ens,
                                              const ATECurve& estimate, double alpha, double t1,
                                              double t2) {
  detail::check_region_inputs(ens.grid, estimate, alpha);
  if (ens.method != Method::EBS) throw DomainError("simultaneous_band_ebs needs a bootstrap ensemble");
  const auto idx = detail::band_indices(ens.grid, ens.variance, t1, t2, k_band_variance_floor);
  const auto B = static_cast<std::size_t>(ens.draws.rows());
  std::vector<double> sups(B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    double s = 0.0;
    for (std::size_t g : idx.kept) {
      const double z = std::abs(ens.draws(static_cast<Eigen::Index>(b),
                                          static_cast<Eigen::Index>(g)) -
                                ens.center[g]) /
                       std::sqrt(ens.variance[g]);
      s = std::max(s, z);
    }
    sups[b] = s;
  }
  const double q = empirical_quantile(sups, 1.0 - alpha);

  ConfidenceRegion r;
  r.level = 1.0 - alpha;
  r.method = Method::EBS;
  r.band = true;
  r.quantile_used = {q};
  std::vector<double> pts;
  for (std::size_t g : idx.kept) {
    pts.push_back(ens.grid.points[g]);
    r.estimate.push_back(estimate.values[g]);
    const double hw = q * std::sqrt(ens.variance[g]);
    r.lower.push_back(estimate.values[g] - hw);
    r.upper.push_back(estimate.values[g] + hw);
  }
  r.grid = TimeGrid(std::move(pts));
  detail::band_warnings(r, idx, B);
  return r;
}

// Influence band: resampled sups of |sum_i G_i IF_i(t)| / sqrt(n nu(t)) with
// standard-normal multipliers, then estimate +- q * sqrt(nu(t)/n).
inline ConfidenceRegion simultaneous_band_if(const InfluenceMatrix& ifm, const ATECurve& estimate,
                                             double alpha, double t1, double t2, std::size_t B,
                                             std::uint64_t seed, int workers = 1) {
  detail::check_region_inputs(ifm.grid, estimate, alpha);
  if (B == 0) throw DomainError("simultaneous_band_if: B must be positive");
  const auto idx = detail::band_indices(ifm.grid, ifm.variance, t1, t2, k_band_variance_floor);
  const auto n = static_cast<std::size_t>(ifm.values.rows());

  Eigen::MatrixXd sub(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(idx.kept.size()));
  for (std::size_t c = 0; c < idx.kept.size(); ++c) {
    sub.col(static_cast<Eigen::Index>(c)) = ifm.values.col(static_cast<Eigen::Index>(idx.kept[c]));
  }
  Eigen::VectorXd inv_sd(static_cast<Eigen::Index>(idx.kept.size()));
  for (std::size_t c = 0; c < idx.kept.size(); ++c) {
    inv_sd[static_cast<Eigen::Index>(c)] =
        1.0 / std::sqrt(static_cast<double>(n) * ifm.variance[idx.kept[c]]);
  }

  std::vector<double> sups(B, 0.0);
  parallel_for(B, workers, [&](std::size_t b) {
    RngStream rng = RngStream::substream(seed, rng_tag::if_band, b);
    Eigen::VectorXd g(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) g[static_cast<Eigen::Index>(i)] = rng.normal();
    Eigen::VectorXd u = (sub.transpose() * g).cwiseProduct(inv_sd);
    sups[b] = u.cwiseAbs().maxCoeff();
  });
  const double q = empirical_quantile(sups, 1.0 - alpha);

  ConfidenceRegion r;
  r.level = 1.0 - alpha;
  r.method = Method::IF;
  r.band = true;
  r.quantile_used = {q};
  std::vector<double> pts;
  for (std::size_t g : idx.kept) {
    pts.push_back(ifm.grid.points[g]);
    r.estimate.push_back(estimate.values[g]);
    const double hw = q * std::sqrt(ifm.variance[g] / static_cast<double>(n));
    r.lower.push_back(estimate.values[g] - hw);
    r.upper.push_back(estimate.values[g] + hw);
  }
  r.grid = TimeGrid(std::move(pts));
  detail::band_warnings(r, idx, B);
  return r;
}

// Wild band: quantile of sup_t |U_b(t)| / sd(U(t)), then
// estimate +- q * sd(U(t)) / sqrt(n).
inline ConfidenceRegion simultaneous_band_wbs(const ResampleEnsemble& ens,
                                              const ATECurve& estimate, double alpha, double t1,
                                              double t2) {
  detail::check_region_inputs(ens.grid, estimate, alpha);
  if (ens.method != Method::WBS) throw DomainError("simultaneous_band_wbs needs a wild ensemble");
  const auto idx = detail::band_indices(ens.grid, ens.variance, t1, t2, k_band_variance_floor);
  const auto B = static_cast<std::size_t>(ens.draws.rows());
  std::vector<double> sups(B, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    double s = 0.0;
    for (std::size_t g : idx.kept) {
      const double z = std::abs(ens.draws(static_cast<Eigen::Index>(b),
                                          static_cast<Eigen::Index>(g))) /
                       std::sqrt(ens.variance[g]);
      s = std::max(s, z);
    }
    sups[b] = s;
  }
  const double q = empirical_quantile(sups, 1.0 - alpha);
  const double sqrt_n = std::sqrt(static_cast<double>(estimate.n_subjects));

  ConfidenceRegion r;
  r.level = 1.0 - alpha;
  r.method = Method::WBS;
  r.scheme = ens.scheme;
  r.band = true;
  r.quantile_used = {q};
  std::vector<double> pts;
  for (std::size_t g : idx.kept) {
    pts.push_back(ens.grid.points[g]);
    r.estimate.push_back(estimate.values[g]);
    const double hw = q * std::sqrt(ens.variance[g]) / sqrt_n;
    r.lower.push_back(estimate.values[g] - hw);
    r.upper.push_back(estimate.values[g] + hw);
  }
  r.grid = TimeGrid(std::move(pts));
  detail::band_warnings(r, idx, B);
  return r;
}

}  // namespace atecr
