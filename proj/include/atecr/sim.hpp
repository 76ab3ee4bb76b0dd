#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "atecr/cif.hpp"
#include "atecr/cox.hpp"
#include "atecr/dataset.hpp"
#include "atecr/errors.hpp"
#include "atecr/parallel.hpp"
#include "atecr/resample.hpp"
#include "atecr/rng.hpp"
#include "atecr/wild.hpp"

namespace atecr {

// Study design that stops after a fixed number of events; subjects enter at
// uniform staggered calendar times and are administratively censored when the
// study stops.
struct Type2Settings {
  std::size_t target_event_count = 0;  // 0 -> ceil(0.7 * n)
  double entry_horizon = 1.0;
};

struct ScenarioConfig {
  double beta_1a = 0.0;            // treatment log hazard ratio, cause 1
  // The default censoring multiplier 0.5 yields roughly 14% censoring by
  // t = 9 when beta_1a = 0 and, together with alpha_0 = 0 (about 56% of
  // subjects treated), reproduces the marginal event/censoring rates of the
  // default scenario for every treatment effect in {-2, 0, 2}.
  double alpha_0 = 0.0;            // treatment-model intercept
  double normal_covariate_sd = 1.0;
  double censoring_scale = 0.5;    // multiplier on the censoring hazard; 0 disables
  std::optional<Type2Settings> type2;
  int min_events_per_cause = 10;
  std::size_t max_regeneration_attempts = 1000;
};

namespace sim_detail {

constexpr std::size_t k_num_covariates = 12;

inline double dot6(const double* z, double c1, double c2, double c3, double c4, double c5,
                   double c6) {
  return c1 * z[0] + c2 * z[1] + c3 * z[2] + c4 * z[3] + c5 * z[4] + c6 * z[5];
}

// Linear predictors for the treatment model and the three Weibull hazards
// lambda(t) = 0.02 t exp(lp). Covariates z[0..5] are the normal block,
// z[6..11] the Bernoulli block; both blocks share one effect pattern.
inline double treatment_lp(const ScenarioConfig& cfg, const double* z) {
  const double l2 = std::log(2.0);
  return cfg.alpha_0 + l2 * (z[0] - z[1] + z[5]) + l2 * (z[6] - z[7] + z[11]);
}

inline double cause1_lp(const ScenarioConfig& cfg, int a, const double* z) {
  const double l2 = std::log(2.0);
  return cfg.beta_1a * a + l2 * (z[0] + z[2] + z[5]) + l2 * (z[6] + z[8] + z[11]);
}

inline double cause2_lp(const double* z) {
  const double l2 = std::log(2.0);
  return -l2 * (z[0] + z[6]) + l2 * (z[4] + z[5] + z[10] + z[11]);
}

inline double censoring_lp(const double* z) {
  const double l2 = std::log(2.0);
  return -l2 * (z[0] + z[6]) + l2 * (z[3] + z[9]) - l2 * (z[5] + z[11]);
}

// Inverse transform for Lambda(t) = 0.01 t^2 exp(lp).
inline double weibull_time(double lp, RngStream& rng) {
  double u = rng.uniform();
  while (u <= 0.0) u = rng.uniform();
  return std::sqrt(-100.0 * std::log(u) / std::exp(lp));
}

inline void draw_covariates(const ScenarioConfig& cfg, RngStream& rng, double* z) {
  for (int j = 0; j < 6; ++j) z[j] = cfg.normal_covariate_sd * rng.normal();
  for (int j = 6; j < 12; ++j) z[j] = rng.bernoulli(0.5) ? 1.0 : 0.0;
}

inline std::vector<std::string> covariate_names() {
  std::vector<std::string> names;
  for (std::size_t j = 1; j <= k_num_covariates; ++j) names.push_back("z" + std::to_string(j));
  return names;
}

// Observed (time, cause) pairs under event-count stopping with staggered
// entry; cause 1 for events, 0 for administrative censoring.
inline std::vector<std::pair<double, int>> type2_observe(
    const std::vector<double>& latent_event_times, const Type2Settings& cfg, RngStream& rng) {
  const std::size_t n = latent_event_times.size();
  std::size_t r = cfg.target_event_count;
  if (r == 0) r = static_cast<std::size_t>(std::ceil(0.7 * static_cast<double>(n)));
  if (r > n) throw DomainError("type-II target event count exceeds the sample size");
  if (!(cfg.entry_horizon >= 0.0)) throw DomainError("entry horizon must be nonnegative");

  std::vector<double> entry(n), calendar(n);
  for (std::size_t i = 0; i < n; ++i) {
    entry[i] = cfg.entry_horizon * rng.uniform();
    calendar[i] = entry[i] + latent_event_times[i];
  }
  std::vector<double> sorted = calendar;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(r - 1),
                   sorted.end());
  const double stop = sorted[r - 1];

  std::vector<std::pair<double, int>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (calendar[i] <= stop) {
      out[i] = {latent_event_times[i], 1};
    } else {
      out[i] = {std::max(stop - entry[i], 0.0), 0};
    }
  }
  return out;
}

}  // namespace sim_detail

// Covariate-free convenience wrapper around the stopping rule.
inline Dataset apply_type2_censoring(const std::vector<double>& latent_event_times,
                                     const Type2Settings& cfg, RngStream& rng) {
  if (latent_event_times.size() < 2) throw DomainError("need at least two subjects");
  auto obs = sim_detail::type2_observe(latent_event_times, cfg, rng);
  std::vector<SubjectRecord> records(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    records[i].time = obs[i].first;
    records[i].cause = obs[i].second;
  }
  return Dataset(std::move(records), 1, {});
}

// One synthetic dataset: twelve covariates, logistic treatment assignment,
// latent Weibull cause-1 / cause-2 / censoring times (the minimum is
// observed). Regenerates until each cause has min_events_per_cause events.
inline Dataset generate_dataset(const ScenarioConfig& cfg, std::size_t n, RngStream& rng) {
  if (n < 2) throw DomainError("generate_dataset: n must be at least 2");
  if (!(cfg.normal_covariate_sd > 0.0)) throw DomainError("normal covariate sd must be positive");
  if (cfg.censoring_scale < 0.0) throw DomainError("censoring scale must be nonnegative");
  const int num_causes = cfg.type2 ? 1 : 2;
  const double log_cens_scale =
      cfg.censoring_scale > 0.0 ? std::log(cfg.censoring_scale) : 0.0;

  for (std::size_t attempt = 0; attempt < cfg.max_regeneration_attempts; ++attempt) {
    std::vector<SubjectRecord> records(n);
    std::vector<double> latent1(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& r = records[i];
      r.covariates.resize(sim_detail::k_num_covariates);
      sim_detail::draw_covariates(cfg, rng, r.covariates.data());
      const double* z = r.covariates.data();
      const double p = 1.0 / (1.0 + std::exp(-sim_detail::treatment_lp(cfg, z)));
      r.treated = rng.bernoulli(p) ? 1 : 0;

      const double t1 = sim_detail::weibull_time(sim_detail::cause1_lp(cfg, r.treated, z), rng);
      latent1[i] = t1;
      if (cfg.type2) continue;
      const double t2 = sim_detail::weibull_time(sim_detail::cause2_lp(z), rng);
      const double tc = cfg.censoring_scale > 0.0
                            ? sim_detail::weibull_time(sim_detail::censoring_lp(z) + log_cens_scale, rng)
                            : std::numeric_limits<double>::infinity();
      r.time = std::min({t1, t2, tc});
      r.cause = r.time == t1 ? 1 : (r.time == t2 ? 2 : 0);
    }
    if (cfg.type2) {
      auto obs = sim_detail::type2_observe(latent1, *cfg.type2, rng);
      for (std::size_t i = 0; i < n; ++i) {
        records[i].time = obs[i].first;
        records[i].cause = obs[i].second;
      }
    }
    std::vector<int> events(static_cast<std::size_t>(num_causes), 0);
    for (const auto& r : records) {
      if (r.cause >= 1) ++events[static_cast<std::size_t>(r.cause - 1)];
    }
    bool enough = true;
    for (int c : events) enough = enough && c >= cfg.min_events_per_cause;
    if (!enough) continue;
    return Dataset(std::move(records), num_causes, sim_detail::covariate_names());
  }
  throw NumericalError("dataset regeneration cap reached without " +
                       std::to_string(cfg.min_events_per_cause) + " events per cause");
}

// Large-sample truth: random treatment independent of the covariates, no
// censoring, empirical cause-1 incidence difference between arms, averaged
// over reps independent datasets.
inline ATECurve true_ate_oracle(const ScenarioConfig& cfg, const TimeGrid& grid,
                                std::size_t n_large, std::size_t reps, std::uint64_t seed,
                                int workers = 1) {
  if (n_large < 1000) throw DomainError("true_ate_oracle: n_large must be at least 1000");
  if (reps == 0) throw DomainError("true_ate_oracle: reps must be positive");
  const std::size_t G = grid.size();

  std::vector<std::vector<double>> per_rep(reps);
  parallel_for(reps, workers, [&](std::size_t rep) {
    RngStream rng = RngStream::substream(seed, rng_tag::oracle, rep);
    std::vector<double> z(sim_detail::k_num_covariates);
    // Per-arm event-time samples for cause 1 plus arm sizes.
    std::vector<std::vector<double>> t1_by_arm(2);
    std::vector<std::size_t> n_by_arm(2, 0);
    for (std::size_t i = 0; i < n_large; ++i) {
      sim_detail::draw_covariates(cfg, rng, z.data());
      const int a = rng.bernoulli(0.5) ? 1 : 0;
      ++n_by_arm[static_cast<std::size_t>(a)];
      const double t1 = sim_detail::weibull_time(sim_detail::cause1_lp(cfg, a, z.data()), rng);
      if (cfg.type2) {
        t1_by_arm[static_cast<std::size_t>(a)].push_back(t1);
      } else {
        const double t2 = sim_detail::weibull_time(sim_detail::cause2_lp(z.data()), rng);
        if (t1 <= t2) t1_by_arm[static_cast<std::size_t>(a)].push_back(t1);
      }
    }
    std::vector<double> curve(G, 0.0);
    for (int a = 0; a < 2; ++a) {
      auto& times = t1_by_arm[static_cast<std::size_t>(a)];
      std::sort(times.begin(), times.end());
      const double sign = a == 1 ? 1.0 : -1.0;
      const double denom = static_cast<double>(n_by_arm[static_cast<std::size_t>(a)]);
      for (std::size_t g = 0; g < G; ++g) {
        const auto cnt = std::upper_bound(times.begin(), times.end(), grid.points[g]) -
                         times.begin();
        curve[g] += sign * static_cast<double>(cnt) / denom;
      }
    }
    per_rep[rep] = std::move(curve);
  });

  ATECurve out;
  out.grid = grid;
  out.values.assign(G, 0.0);
  out.n_subjects = n_large;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    for (std::size_t g = 0; g < G; ++g) out.values[g] += per_rep[rep][g];
  }
  for (std::size_t g = 0; g < G; ++g) out.values[g] /= static_cast<double>(reps);
  return out;
}

// Intercepts and censoring-hazard scalings matching the stated marginal
// targets, found by Monte Carlo bisection at n = 1e5 (beta_1a = 0).
inline double calibrate_alpha0(ScenarioConfig cfg, double target_rate, std::uint64_t seed,
                               std::size_t n = 100000) {
  auto rate = [&](double a0) {
    cfg.alpha_0 = a0;
    RngStream rng(seed);
    std::vector<double> z(sim_detail::k_num_covariates);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sim_detail::draw_covariates(cfg, rng, z.data());
      s += 1.0 / (1.0 + std::exp(-sim_detail::treatment_lp(cfg, z.data())));
    }
    return s / static_cast<double>(n);
  };
  double lo = -10.0, hi = 10.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rate(mid) < target_rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double calibrate_censoring_scale(ScenarioConfig cfg, double target_censored_by_t9,
                                        std::uint64_t seed, std::size_t n = 100000) {
  auto censored_fraction = [&](double scale) {
    cfg.censoring_scale = scale;
    RngStream rng(seed);
    cfg.min_events_per_cause = 0;
    Dataset ds = generate_dataset(cfg, n, rng);
    std::size_t c = 0;
    for (const auto& r : ds.records()) {
      if (r.cause == 0 && r.time <= 9.0) ++c;
    }
    return static_cast<double>(c) / static_cast<double>(n);
  };
  double lo = 0.0, hi = 16.0;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    (censored_fraction(mid) < target_censored_by_t9 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct MethodSpec {
  Method method = Method::EBS;
  MultiplierKind scheme = MultiplierKind::standard_normal;

  std::string label() const { return method_label(method, scheme); }
};

inline std::vector<MethodSpec> all_methods() {
  return {{Method::EBS, MultiplierKind::standard_normal},
          {Method::IF, MultiplierKind::standard_normal},
          {Method::WBS, MultiplierKind::standard_normal},
          {Method::WBS, MultiplierKind::centered_poisson},
          {Method::WBS, MultiplierKind::weird_binomial}};
}

struct StudyConfig {
  ScenarioConfig scenario;
  std::string scenario_label = "default";
  std::vector<std::size_t> sample_sizes = {50, 75, 100, 200, 300};
  std::size_t replications = 100;
  std::vector<MethodSpec> methods = all_methods();
  std::vector<double> report_times = {1, 3, 5, 7, 9};
  double band_t1 = 0.0;
  double band_t2 = 9.0;
  double alpha = 0.05;
  std::size_t B_ebs = 1000;
  std::size_t B_if = 10000;
  std::size_t B_wbs = 10000;
  std::uint64_t master_seed = 1;
  std::size_t oracle_n = 100000;
  std::size_t oracle_reps = 10;
  int workers = 1;
  bool record_wallclock = false;  // off by default so rerun reports are byte-identical
};

struct CoverageCell {
  std::string scenario;
  std::size_t n = 0;
  std::string method;
  bool is_band = false;
  double time = 0.0;  // ignored for band rows
  double coverage = 0.0;
  double mc_se = 0.0;
  double mean_width = 0.0;
  double elapsed_ms = 0.0;
};

struct CoverageReport {
  std::vector<CoverageCell> cells;
  std::size_t attempted_replications = 0;
  std::size_t failed_replications = 0;
  std::vector<std::string> diagnostics;
};

namespace sim_detail {

struct RepMethodResult {
  std::vector<int> ci_hit;       // per report time
  std::vector<double> ci_width;  // per report time
  int band_hit = 0;
  double band_width = 0.0;
  double elapsed_ms = 0.0;
};

struct RepResult {
  bool ok = false;
  std::string error;
  std::vector<RepMethodResult> per_method;
};

inline double interpolate(const TimeGrid& grid, const std::vector<double>& values, double t) {
  if (grid.size() == 0) throw DomainError("empty curve");
  if (t <= grid.points.front()) return values.front();
  if (t >= grid.points.back()) return values.back();
  const auto it = std::upper_bound(grid.points.begin(), grid.points.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - grid.points.begin());
  const std::size_t lo = hi - 1;
  const double w = (t - grid.points[lo]) / (grid.points[hi] - grid.points[lo]);
  return (1.0 - w) * values[lo] + w * values[hi];
}

inline std::size_t grid_index_of(const TimeGrid& grid, double t) {
  const auto it = std::lower_bound(grid.points.begin(), grid.points.end(), t);
  if (it == grid.points.end() || *it != t) throw DomainError("report time missing from grid");
  return static_cast<std::size_t>(it - grid.points.begin());
}

inline double mean_region_width(const ConfidenceRegion& r) {
  double s = 0.0;
  for (std::size_t g = 0; g < r.grid.size(); ++g) s += r.upper[g] - r.lower[g];
  return r.grid.size() ? s / static_cast<double>(r.grid.size()) : 0.0;
}

inline bool region_contains(const ConfidenceRegion& r, const ATECurve& truth) {
  for (std::size_t g = 0; g < r.grid.size(); ++g) {
    const double v = interpolate(truth.grid, truth.values, r.grid.points[g]);
    if (v < r.lower[g] || v > r.upper[g]) return false;
  }
  return true;
}

}  // namespace sim_detail

// Fine grid the oracle truth is tabulated on; report times are merged in so
// CI coverage is checked at exact, not interpolated, truth values.
inline TimeGrid oracle_grid(const StudyConfig& study) {
  std::vector<double> pts;
  const double hi = std::max(study.band_t2, study.report_times.empty()
                                                ? 0.0
                                                : *std::max_element(study.report_times.begin(),
                                                                    study.report_times.end()));
  const int steps = 400;
  for (int i = 0; i <= steps; ++i) pts.push_back(hi * i / steps);
  for (double t : study.report_times) pts.push_back(t);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return TimeGrid(std::move(pts));
}

inline CoverageReport run_coverage_study(const StudyConfig& study,
                                         const ATECurve* cached_truth = nullptr) {
  if (study.replications == 0) throw DomainError("replications must be positive");
  if (!(study.alpha > 0.0 && study.alpha < 1.0)) throw DomainError("alpha must be in (0,1)");
  if (study.methods.empty()) throw DomainError("no methods requested");

  ATECurve truth;
  if (cached_truth) {
    truth = *cached_truth;
  } else {
    truth = true_ate_oracle(study.scenario, oracle_grid(study), study.oracle_n,
                            study.oracle_reps, study.master_seed, study.workers);
  }

  const std::size_t R = study.replications;
  const std::size_t M = study.methods.size();
  const std::size_t T = study.report_times.size();
  const int num_causes = study.scenario.type2 ? 1 : 2;

  CoverageReport report;
  for (std::size_t n_idx = 0; n_idx < study.sample_sizes.size(); ++n_idx) {
    const std::size_t n = study.sample_sizes[n_idx];
    std::vector<sim_detail::RepResult> results(R);

    parallel_for(R, study.workers, [&](std::size_t rep) {
      sim_detail::RepResult& res = results[rep];
      res.per_method.resize(M);
      const std::uint64_t rep_index = n_idx * R + rep;
      try {
        RngStream rng = RngStream::substream(study.master_seed, rng_tag::sim, rep_index);
        const std::uint64_t rep_seed = rng.next_u64();
        Dataset ds = generate_dataset(study.scenario, n, rng);
        TimeGrid grid = default_grid(ds, study.report_times);

        std::vector<CoxContext> ctxs;
        std::vector<CoxFit> fits;
        for (int k = 1; k <= num_causes; ++k) {
          ctxs.emplace_back(ds, k, resolve_design(ds, k, true, {}));
        }
        for (int k = 1; k <= num_causes; ++k) {
          CoxFit f = fit_cause_specific(ctxs[static_cast<std::size_t>(k - 1)], {}, {});
          if (!f.converged) throw NumericalError("base fit did not converge");
          fits.push_back(std::move(f));
        }
        ATECurve est = g_formula_ate(fits, ds, grid);

        for (std::size_t m = 0; m < M; ++m) {
          const MethodSpec& spec = study.methods[m];
          auto& mr = res.per_method[m];
          mr.ci_hit.assign(T, 0);
          mr.ci_width.assign(T, 0.0);
          const auto start = std::chrono::steady_clock::now();

          ConfidenceRegion ci, band;
          if (spec.method == Method::EBS) {
            ResampleEnsemble ens =
                efron_ensemble(ctxs, fits, grid, study.B_ebs, rep_seed, 1);
            ci = pointwise_ci_ebs(ens, est, study.alpha);
            band = simultaneous_band_ebs(ens, est, study.alpha, study.band_t1, study.band_t2);
          } else if (spec.method == Method::IF) {
            InfluenceMatrix ifm = influence_matrix(ctxs, fits, grid);
            ci = pointwise_ci_if(ifm, est, study.alpha);
            band = simultaneous_band_if(ifm, est, study.alpha, study.band_t1, study.band_t2,
                                        study.B_if, rep_seed, 1);
          } else {
            ResampleEnsemble ens = wild_ensemble(ctxs, fits, grid, study.B_wbs,
                                                 MultiplierScheme{spec.scheme}, rep_seed, 1);
            ci = pointwise_ci_wbs(ens, est, study.alpha);
            band = simultaneous_band_wbs(ens, est, study.alpha, study.band_t1, study.band_t2);
          }

          for (std::size_t ti = 0; ti < T; ++ti) {
            const std::size_t g = sim_detail::grid_index_of(grid, study.report_times[ti]);
            const double tv =
                sim_detail::interpolate(truth.grid, truth.values, study.report_times[ti]);
            mr.ci_hit[ti] = (tv >= ci.lower[g] && tv <= ci.upper[g]) ? 1 : 0;
            mr.ci_width[ti] = ci.upper[g] - ci.lower[g];
          }
          mr.band_hit = sim_detail::region_contains(band, truth) ? 1 : 0;
          mr.band_width = sim_detail::mean_region_width(band);
          if (study.record_wallclock) {
            mr.elapsed_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - start)
                                .count();
          }
        }
        res.ok = true;
      } catch (const std::runtime_error& e) {
        res.ok = false;
        res.error = e.what();
      }
    });

    std::size_t ok_count = 0;
    for (const auto& r : results) {
      if (r.ok) {
        ++ok_count;
      } else {
        report.diagnostics.push_back("n=" + std::to_string(n) + ": " + r.error);
      }
    }
    report.attempted_replications += R;
    report.failed_replications += R - ok_count;
    if (static_cast<double>(R - ok_count) > 0.05 * static_cast<double>(R)) {
      throw NumericalError("more than 5% of replications failed at n = " + std::to_string(n));
    }
    if (ok_count == 0) throw NumericalError("no successful replications at n = " + std::to_string(n));

    for (std::size_t m = 0; m < M; ++m) {
      const std::string label = study.methods[m].label();
      double elapsed = 0.0;
      for (const auto& r : results) {
        if (r.ok) elapsed += r.per_method[m].elapsed_ms;
      }
      for (std::size_t ti = 0; ti < T; ++ti) {
        CoverageCell cell;
        cell.scenario = study.scenario_label;
        cell.n = n;
        cell.method = label;
        cell.time = study.report_times[ti];
        double hits = 0.0, width = 0.0;
        for (const auto& r : results) {
          if (!r.ok) continue;
          hits += r.per_method[m].ci_hit[ti];
          width += r.per_method[m].ci_width[ti];
        }
        cell.coverage = hits / static_cast<double>(ok_count);
        cell.mc_se = std::sqrt(cell.coverage * (1.0 - cell.coverage) /
                               static_cast<double>(ok_count));
        cell.mean_width = width / static_cast<double>(ok_count);
        cell.elapsed_ms = elapsed;
        report.cells.push_back(cell);
      }
      CoverageCell band_cell;
      band_cell.scenario = study.scenario_label;
      band_cell.n = n;
      band_cell.method = label;
      band_cell.is_band = true;
      double hits = 0.0, width = 0.0;
      for (const auto& r : results) {
        if (!r.ok) continue;
        hits += r.per_method[m].band_hit;
        width += r.per_method[m].band_width;
      }
      band_cell.coverage = hits / static_cast<double>(ok_count);
      band_cell.mc_se = std::sqrt(band_cell.coverage * (1.0 - band_cell.coverage) /
                                  static_cast<double>(ok_count));
      band_cell.mean_width = width / static_cast<double>(ok_count);
      band_cell.elapsed_ms = elapsed;
      report.cells.push_back(band_cell);
    }
  }
  std::stable_sort(report.cells.begin(), report.cells.end(),
                   [](const CoverageCell& a, const CoverageCell& b) {
                     if (a.scenario != b.scenario) return a.scenario < b.scenario;
                     if (a.n != b.n) return a.n < b.n;
                     if (a.method != b.method) return a.method < b.method;
                     if (a.is_band != b.is_band) return a.is_band < b.is_band;
                     return a.time < b.time;
                   });
  return report;
}

}  // namespace atecr
