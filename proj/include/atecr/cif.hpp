#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "atecr/cox.hpp"
#include "atecr/dataset.hpp"
#include "atecr/errors.hpp"

namespace atecr {

struct TimeGrid {
  std::vector<double> points;

  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> pts) : points(std::move(pts)) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (points[i] < 0.0) throw DomainError("grid points must be nonnegative");
      if (i > 0 && points[i] <= points[i - 1]) {
        throw DomainError("grid points must be strictly increasing");
      }
    }
  }

  std::size_t size() const { return points.size(); }
};

// Sorted cause-1 event times merged with any requested report times.
inline TimeGrid default_grid(const Dataset& ds, const std::vector<double>& report_times = {},
                             double max_time = -1.0) {
  std::vector<double> pts;
  for (const auto& r : ds.records()) {
    if (r.cause == 1 && (max_time < 0.0 || r.time <= max_time)) pts.push_back(r.time);
  }
  for (double t : report_times) pts.push_back(t);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return TimeGrid(std::move(pts));
}

struct ATECurve {
  TimeGrid grid;
  std::vector<double> values;
  std::size_t n_subjects = 0;
  bool clamp_warning = false;
};

namespace detail {

// All causes' Breslow jumps in one ascending sequence.
struct MergedJumps {
  std::vector<double> times;
  std::vector<int> cause_index;  // 0-based
  std::vector<double> sizes;
};

inline MergedJumps merge_jumps(const std::vector<CoxFit>& fits) {
  MergedJumps m;
  std::size_t total = 0;
  for (const auto& f : fits) total += f.baseline.jump_times.size();
  std::vector<std::size_t> order;
  m.times.reserve(total);
  m.cause_index.reserve(total);
  m.sizes.reserve(total);
  for (std::size_t k = 0; k < fits.size(); ++k) {
    const auto& b = fits[k].baseline;
    for (std::size_t j = 0; j < b.jump_times.size(); ++j) {
      m.times.push_back(b.jump_times[j]);
      m.cause_index.push_back(static_cast<int>(k));
      m.sizes.push_back(b.jump_sizes[j]);
    }
  }
  order.resize(m.times.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return m.times[a] < m.times[b]; });
  MergedJumps out;
  out.times.reserve(total);
  out.cause_index.reserve(total);
  out.sizes.reserve(total);
  for (std::size_t i : order) {
    out.times.push_back(m.times[i]);
    out.cause_index.push_back(m.cause_index[i]);
    out.sizes.push_back(m.sizes[i]);
  }
  return out;
}

// F_1(t|a,z) for one subject as a sweep over the merged jumps: at each cause-1
// jump s, add exp(-sum_k Lambda_k(s-|a,z)) * dLambda_1(s|a,z).
inline bool cif_sweep(const MergedJumps& jumps, const std::vector<double>& relative_risks,
                      const TimeGrid& grid, double* out) {
  double cum = 0.0;      // sum_k Lambda_k(s-|a,z)
  double f = 0.0;        // raw cumulative incidence
  bool clamped = false;
  std::size_t g = 0;
  for (std::size_t e = 0; e < jumps.times.size(); ++e) {
    const double s = jumps.times[e];
    while (g < grid.size() && grid.points[g] < s) {
      out[g++] = std::min(f, 1.0);
    }
    if (jumps.cause_index[e] == 0) {
      f += std::exp(-cum) * relative_risks[0] * jumps.sizes[e];
      if (f > 1.0) clamped = true;
    }
    cum += relative_risks[static_cast<std::size_t>(jumps.cause_index[e])] * jumps.sizes[e];
  }
  while (g < grid.size()) out[g++] = std::min(f, 1.0);
  return clamped;
}

inline void check_fits(const std::vector<CoxFit>& fits) {
  if (fits.empty()) throw DomainError("no cause-specific fits supplied");
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (fits[k].cause != static_cast<int>(k) + 1) {
      throw DomainError("fits must be ordered by cause (1..K)");
    }
    if (!fits[k].converged) {
      throw DomainError("refusing non-converged cause-" + std::to_string(fits[k].cause) + " fit");
    }
  }
}

}  // namespace detail

struct CifResult {
  std::vector<double> values;
  bool clamp_warning = false;
};

inline CifResult cumulative_incidence(const std::vector<CoxFit>& fits, int a,
                                      const std::vector<double>& z, const TimeGrid& grid) {
  detail::check_fits(fits);
  detail::MergedJumps jumps = detail::merge_jumps(fits);
  std::vector<double> rr(fits.size());
  for (std::size_t k = 0; k < fits.size(); ++k) {
    rr[k] = std::exp(fits[k].linear_predictor(a, z));
  }
  CifResult res;
  res.values.resize(grid.size());
  res.clamp_warning = detail::cif_sweep(jumps, rr, grid, res.values.data());
  return res;
}

// g-formula: averages the counterfactual cause-1 CIF contrast over the
// empirical covariate distribution, optionally with case weights.
inline ATECurve g_formula_ate(const std::vector<CoxFit>& fits, const Dataset& ds,
                              const TimeGrid& grid, const std::vector<double>& weights = {}) {
  detail::check_fits(fits);
  if (!fits[0].design.include_treatment) {
    throw DomainError("cause-1 fit must include the treatment covariate");
  }
  if (!weights.empty() && weights.size() != ds.size()) {
    throw DomainError("weights length mismatch");
  }
  detail::MergedJumps jumps = detail::merge_jumps(fits);

  ATECurve curve;
  curve.grid = grid;
  curve.values.assign(grid.size(), 0.0);
  curve.n_subjects = ds.size();

  std::vector<double> f1(grid.size()), f0(grid.size());
  std::vector<double> rr(fits.size());
  double wsum = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    wsum += weights.empty() ? 1.0 : weights[i];
  }
  if (!(wsum > 0.0)) throw DomainError("weights must have positive sum");

  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double w = (weights.empty() ? 1.0 : weights[i]) / wsum;
    if (w == 0.0) continue;
    const auto& z = ds.records()[i].covariates;
    for (std::size_t k = 0; k < fits.size(); ++k) rr[k] = std::exp(fits[k].linear_predictor(1, z));
    curve.clamp_warning |= detail::cif_sweep(jumps, rr, grid, f1.data());
    for (std::size_t k = 0; k < fits.size(); ++k) rr[k] = std::exp(fits[k].linear_predictor(0, z));
    curve.clamp_warning |= detail::cif_sweep(jumps, rr, grid, f0.data());
    for (std::size_t g = 0; g < grid.size(); ++g) curve.values[g] += w * (f1[g] - f0[g]);
  }
  return curve;
}

}  // namespace atecr
