#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "atecr/dataset.hpp"
#include "atecr/errors.hpp"

namespace atecr {

// Right-continuous nondecreasing step function; value(t) sums jumps at times <= t.
struct StepCumHazard {
  std::vector<double> jump_times;  // strictly increasing
  std::vector<double> jump_sizes;

  double value(double t) const {
    auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    double sum = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(it - jump_times.begin()); ++i) {
      sum += jump_sizes[i];
    }
    return sum;
  }

  // Left limit: jumps strictly before t.
  double value_before(double t) const {
    auto it = std::lower_bound(jump_times.begin(), jump_times.end(), t);
    double sum = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(it - jump_times.begin()); ++i) {
      sum += jump_sizes[i];
    }
    return sum;
  }
};

// Which columns enter the model for one cause. The treatment indicator comes
// first when included; pin_treatment_zero keeps it in the design but holds its
// coefficient at zero (used when evaluating the no-effect functional).
struct CoxDesign {
  bool include_treatment = true;
  bool pin_treatment_zero = false;
  std::vector<std::size_t> covariate_subset;  // indices into dataset covariates

  std::size_t dim() const { return (include_treatment ? 1 : 0) + covariate_subset.size(); }

  void fill_counterfactual(int a, const std::vector<double>& z, double* x) const {
    std::size_t off = 0;
    if (include_treatment) x[off++] = static_cast<double>(a);
    for (std::size_t j : covariate_subset) x[off++] = z[j];
  }
};

inline CoxDesign resolve_design(const Dataset& ds, int cause, bool include_treatment,
                                std::vector<std::size_t> covariate_subset,
                                bool pin_treatment_zero = false) {
  if (cause == 1 && !include_treatment) {
    throw DomainError("the cause-1 model must include the treatment column");
  }
  if (covariate_subset.empty()) {
    covariate_subset.resize(ds.num_covariates());
    for (std::size_t j = 0; j < covariate_subset.size(); ++j) covariate_subset[j] = j;
  } else {
    for (std::size_t j : covariate_subset) {
      if (j >= ds.num_covariates()) throw DomainError("covariate subset index out of range");
    }
  }
  return CoxDesign{include_treatment, pin_treatment_zero, std::move(covariate_subset)};
}

struct CoxOptions {
  double tol = 1e-9;               // on the max-norm of the score
  int max_iter = 50;
  int max_halvings = 20;
  double divergence_bound = 30.0;  // on the max-norm of beta
  bool include_treatment = true;
  bool pin_treatment_zero = false;
  std::vector<std::size_t> covariate_subset;  // empty -> all covariates
  std::optional<Eigen::VectorXd> initial_beta;
};

struct CoxFit {
  int cause = 1;
  CoxDesign design;
  Eigen::VectorXd beta;
  StepCumHazard baseline;
  double loglik = 0.0;
  double score_norm_at_solution = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd information_matrix;

  double linear_predictor(int a, const std::vector<double>& z) const {
    if (z.size() < required_covariate_length()) {
      throw DomainError("covariate vector too short for this fit");
    }
    std::size_t off = 0;
    double lp = 0.0;
    if (design.include_treatment) lp += beta[static_cast<Eigen::Index>(off++)] * a;
    for (std::size_t j : design.covariate_subset) {
      lp += beta[static_cast<Eigen::Index>(off++)] * z[j];
    }
    return lp;
  }

  std::size_t required_covariate_length() const {
    std::size_t m = 0;
    for (std::size_t j : design.covariate_subset) m = std::max(m, j + 1);
    return m;
  }
};

// Lambda_k(t | a, z) = Lambda_0k(t) * exp(beta' x(a,z)).
inline double cumulative_hazard_at(const CoxFit& fit, int a, const std::vector<double>& z,
                                   double t) {
  if (t < 0.0) throw DomainError("cumulative_hazard_at: negative time");
  return fit.baseline.value(t) * std::exp(fit.linear_predictor(a, z));
}

// Precomputed per-(dataset, cause, design) state reused across refits with
// different case weights: design matrix rows and the descending time order.
class CoxContext {
 public:
  CoxContext(const Dataset& ds, int cause, CoxDesign design)
      : ds_(&ds), cause_(cause), design_(std::move(design)) {
    if (cause < 1 || cause > ds.num_causes()) throw DomainError("cause out of range");
    const std::size_t n = ds.size();
    const std::size_t d = design_.dim();
    X_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = ds.records()[i];
      std::size_t off = 0;
      if (design_.include_treatment) X_(i, off++) = static_cast<double>(r.treated);
      for (std::size_t j : design_.covariate_subset) X_(i, off++) = r.covariates[j];
    }
    desc_ = ds.time_order();
    std::reverse(desc_.begin(), desc_.end());
  }

  const Dataset& dataset() const { return *ds_; }
  int cause() const { return cause_; }
  const CoxDesign& design() const { return design_; }
  const Eigen::MatrixXd& X() const { return X_; }
  const std::vector<std::size_t>& descending_order() const { return desc_; }

  std::string column_name(std::size_t col) const {
    if (design_.include_treatment) {
      if (col == 0) return "treated";
      col -= 1;
    }
    return ds_->covariate_names()[design_.covariate_subset[col]];
  }

 private:
  const Dataset* ds_;
  int cause_;
  CoxDesign design_;
  Eigen::MatrixXd X_;
  std::vector<std::size_t> desc_;
};

struct PartialLoglik {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;  // second derivative of the loglik (negative semidefinite)
};

namespace detail {

// One sweep over subjects in descending time order. Risk-set sums use a global
// max shift on the linear predictors so exp never overflows. with_derivatives
// may be switched off for line-search evaluations that only need the loglik.
inline PartialLoglik partial_loglik_sweep(const CoxContext& ctx, const Eigen::VectorXd& beta,
                                          const std::vector<double>& weights,
                                          bool with_derivatives = true) {
  const Dataset& ds = ctx.dataset();
  const std::size_t n = ds.size();
  const std::size_t d = ctx.design().dim();
  if (beta.size() != static_cast<Eigen::Index>(d)) throw DomainError("beta length mismatch");
  if (!weights.empty() && weights.size() != n) throw DomainError("weights length mismatch");
  if (!beta.allFinite()) throw DomainError("beta must be finite");

  Eigen::VectorXd eta = ctx.X() * beta;
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double w = weights.empty() ? 1.0 : weights[i];
    if (w > 0.0) shift = std::max(shift, eta[static_cast<Eigen::Index>(i)]);
  }
  if (!std::isfinite(shift)) shift = 0.0;

  PartialLoglik out;
  out.score = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  out.hessian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));

  double a0 = 0.0;
  Eigen::VectorXd a1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  Eigen::MatrixXd a2 =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::VectorXd xbar(static_cast<Eigen::Index>(d));

  const auto& desc = ctx.descending_order();
  std::size_t pos = 0;
  bool any_event = false;
  while (pos < desc.size()) {
    const double t = ds.records()[desc[pos]].time;
    std::size_t group_end = pos;
    while (group_end < desc.size() && ds.records()[desc[group_end]].time == t) ++group_end;
    // Everyone with time >= t joins the risk set before events at t are scored.
    for (std::size_t g = pos; g < group_end; ++g) {
      const std::size_t i = desc[g];
      const double w = weights.empty() ? 1.0 : weights[i];
      if (w <= 0.0) continue;
      const double e = w * std::exp(eta[static_cast<Eigen::Index>(i)] - shift);
      a0 += e;
      if (with_derivatives) {
        a1.noalias() += e * ctx.X().row(static_cast<Eigen::Index>(i)).transpose();
        a2.selfadjointView<Eigen::Lower>().rankUpdate(
            ctx.X().row(static_cast<Eigen::Index>(i)).transpose(), e);
      }
    }
    for (std::size_t g = pos; g < group_end; ++g) {
      const std::size_t i = desc[g];
      const auto& r = ds.records()[i];
      const double w = weights.empty() ? 1.0 : weights[i];
      if (r.cause != ctx.cause() || w <= 0.0) continue;
      any_event = true;
      out.loglik += w * (eta[static_cast<Eigen::Index>(i)] - shift - std::log(a0));
      if (with_derivatives) {
        xbar = a1 / a0;
        out.score.noalias() +=
            w * (ctx.X().row(static_cast<Eigen::Index>(i)).transpose() - xbar);
        out.hessian.noalias() -=
            w * (Eigen::MatrixXd(a2.selfadjointView<Eigen::Lower>()) / a0 -
                 xbar * xbar.transpose());
      }
    }
    pos = group_end;
  }
  if (!any_event) {
    throw DomainError("no events of cause " + std::to_string(ctx.cause()) +
                      " with positive weight");
  }
  return out;
}

}  // namespace detail

inline PartialLoglik partial_loglik(const Dataset& ds, int cause, const Eigen::VectorXd& beta,
                                    const std::vector<double>& weights = {},
                                    const CoxOptions& options = {}) {
  CoxContext ctx(ds, cause,
                 resolve_design(ds, cause, options.include_treatment, options.covariate_subset,
                                options.pin_treatment_zero));
  return detail::partial_loglik_sweep(ctx, beta, weights);
}

// Breslow jumps: one per cause-k event time s, size w_event / sum_{j at risk} w_j exp(eta_j).
inline StepCumHazard breslow_baseline(const CoxContext& ctx, const Eigen::VectorXd& beta,
                                      const std::vector<double>& weights = {}) {
  const Dataset& ds = ctx.dataset();
  const std::size_t n = ds.size();
  if (!weights.empty() && weights.size() != n) throw DomainError("weights length mismatch");
  if (!beta.allFinite()) throw DomainError("beta must be finite");

  Eigen::VectorXd eta = ctx.X() * beta;
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double w = weights.empty() ? 1.0 : weights[i];
    if (w > 0.0) shift = std::max(shift, eta[static_cast<Eigen::Index>(i)]);
  }
  if (!std::isfinite(shift)) shift = 0.0;

  StepCumHazard out;
  const auto& desc = ctx.descending_order();
  double denom = 0.0;
  std::size_t pos = 0;
  while (pos < desc.size()) {
    const double t = ds.records()[desc[pos]].time;
    std::size_t group_end = pos;
    while (group_end < desc.size() && ds.records()[desc[group_end]].time == t) ++group_end;
    for (std::size_t g = pos; g < group_end; ++g) {
      const std::size_t i = desc[g];
      const double w = weights.empty() ? 1.0 : weights[i];
      if (w <= 0.0) continue;
      denom += w * std::exp(eta[static_cast<Eigen::Index>(i)] - shift);
    }
    for (std::size_t g = pos; g < group_end; ++g) {
      const std::size_t i = desc[g];
      const auto& r = ds.records()[i];
      const double w = weights.empty() ? 1.0 : weights[i];
      if (r.cause != ctx.cause() || w <= 0.0) continue;
      out.jump_times.push_back(t);
      out.jump_sizes.push_back(w * std::exp(-shift) / denom);
    }
    pos = group_end;
  }
  std::reverse(out.jump_times.begin(), out.jump_times.end());
  std::reverse(out.jump_sizes.begin(), out.jump_sizes.end());
  return out;
}

inline StepCumHazard breslow_baseline(const Dataset& ds, int cause, const Eigen::VectorXd& beta,
                                      const std::vector<double>& weights = {},
                                      const CoxOptions& options = {}) {
  CoxContext ctx(ds, cause,
                 resolve_design(ds, cause, options.include_treatment, options.covariate_subset,
                                options.pin_treatment_zero));
  return breslow_baseline(ctx, beta, weights);
}

// Newton-Raphson with step-halving on the weighted partial likelihood.
inline CoxFit fit_cause_specific(const CoxContext& ctx, const std::vector<double>& weights = {},
                                 const CoxOptions& options = {}) {
  const Dataset& ds = ctx.dataset();
  const std::size_t n = ds.size();
  const std::size_t d = ctx.design().dim();

  // A design column that is constant among positively weighted records makes
  // the information singular; report it by name.
  for (std::size_t c = 0; c < d; ++c) {
    bool seen = false;
    double first = 0.0;
    bool constant = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weights.empty() ? 1.0 : weights[i];
      if (w <= 0.0) continue;
      const double v = ctx.X()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      if (!seen) {
        first = v;
        seen = true;
      } else if (v != first) {
        constant = false;
        break;
      }
    }
    const bool pinned = ctx.design().pin_treatment_zero && ctx.design().include_treatment && c == 0;
    if (constant && !pinned) {
      throw NumericalError("singular information: constant covariate column '" +
                           ctx.column_name(c) + "' for cause " + std::to_string(ctx.cause()));
    }
  }

  CoxFit fit;
  fit.cause = ctx.cause();
  fit.design = ctx.design();
  fit.beta = options.initial_beta ? *options.initial_beta
                                  : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  if (fit.beta.size() != static_cast<Eigen::Index>(d)) throw DomainError("initial beta length mismatch");

  const Eigen::Index pin =
      (ctx.design().pin_treatment_zero && ctx.design().include_treatment) ? 0 : -1;
  if (pin >= 0) fit.beta[pin] = 0.0;

  auto mask = [&](PartialLoglik& pl) {
    if (pin < 0) return;
    pl.score[pin] = 0.0;
    pl.hessian.row(pin).setZero();
    pl.hessian.col(pin).setZero();
    pl.hessian(pin, pin) = -1.0;
  };

  PartialLoglik pl = detail::partial_loglik_sweep(ctx, fit.beta, weights);
  Eigen::MatrixXd raw_hessian = pl.hessian;
  mask(pl);
  bool loglik_increased = false;

  for (int iter = 0; iter < options.max_iter; ++iter) {
    fit.iterations = iter;
    fit.score_norm_at_solution = pl.score.lpNorm<Eigen::Infinity>();
    if (fit.score_norm_at_solution <= options.tol) {
      fit.converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-pl.hessian);
    Eigen::VectorXd step = ldlt.solve(pl.score);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      throw NumericalError("singular information matrix for cause " + std::to_string(ctx.cause()));
    }
    // The quadratic model bounds the achievable improvement by score'*step/2.
    // Once that bound sinks below the rounding noise of the loglik, the line
    // search can no longer certify progress (it would crawl by halvings and
    // exhaust the iteration budget); take the full step and let the score
    // test decide convergence.
    const double predicted_gain = 0.5 * pl.score.dot(step);
    if (std::isfinite(pl.loglik) &&
        predicted_gain <= 1e-11 * (1.0 + std::abs(pl.loglik))) {
      fit.beta += step;
      pl = detail::partial_loglik_sweep(ctx, fit.beta, weights);
      raw_hessian = pl.hessian;
      mask(pl);
      fit.iterations = iter + 1;
      continue;
    }
    double scale = 1.0;
    Eigen::VectorXd beta_new;
    double ll_new = 0.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h) {
      beta_new = fit.beta + scale * step;
      ll_new = detail::partial_loglik_sweep(ctx, beta_new, weights, false).loglik;
      if (ll_new >= pl.loglik || !std::isfinite(pl.loglik)) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      // Near the optimum the loglik is flat to rounding noise, so the line
      // search cannot certify progress. A Newton step of negligible size is
      // taken anyway and the score test decides convergence.
      if (step.lpNorm<Eigen::Infinity>() <= 1e-6) {
        fit.beta += step;
        pl = detail::partial_loglik_sweep(ctx, fit.beta, weights);
        raw_hessian = pl.hessian;
        mask(pl);
        fit.iterations = iter + 1;
        continue;
      }
      break;  // genuine stall; report non-convergence below
    }
    if (ll_new > pl.loglik) loglik_increased = true;
    fit.beta = beta_new;
    pl = detail::partial_loglik_sweep(ctx, fit.beta, weights);
    raw_hessian = pl.hessian;
    mask(pl);
    if (fit.beta.lpNorm<Eigen::Infinity>() > options.divergence_bound && loglik_increased) {
      throw NumericalError("monotone likelihood: coefficients diverge for cause " +
                           std::to_string(ctx.cause()));
    }
    fit.iterations = iter + 1;
  }
  fit.score_norm_at_solution = pl.score.lpNorm<Eigen::Infinity>();
  if (fit.score_norm_at_solution <= options.tol) fit.converged = true;
  fit.loglik = pl.loglik;
  fit.information_matrix = -raw_hessian;
  fit.baseline = breslow_baseline(ctx, fit.beta, weights);
  return fit;
}

inline CoxFit fit_cause_specific(const Dataset& ds, int cause,
                                 const std::vector<double>& weights = {},
                                 const CoxOptions& options = {}) {
  CoxContext ctx(ds, cause,
                 resolve_design(ds, cause, options.include_treatment, options.covariate_subset,
                                options.pin_treatment_zero));
  return fit_cause_specific(ctx, weights, options);
}

}  // namespace atecr
