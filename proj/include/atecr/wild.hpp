#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "atecr/cif.hpp"
#include "atecr/cox.hpp"
#include "atecr/dataset.hpp"
#include "atecr/errors.hpp"
#include "atecr/parallel.hpp"
#include "atecr/resample_types.hpp"

namespace atecr {

struct WildEvent {
  std::size_t subject = 0;
  int cause_index = 0;  // 0-based
  double time = 0.0;
  double jump = 0.0;  // baseline jump at this event
};

// Linearization of the root-n-scaled ATE process around the fitted model.
// Each observed event contributes a curve c_e(t); a resampled process is
// U(t) = n^{-1/2} sum_e G_{subject(e)} c_e(t) with i.i.d. mean-zero,
// unit-variance multipliers G.
//
// c_e(t) splits into a baseline-hazard part and a coefficient part:
//   * perturbing the Breslow atom at the event time u_e moves every
//     counterfactual CIF evaluated at t >= u_e (directly for cause-1 atoms,
//     through the overall survival factor for all atoms), and
//   * the event's score residual x_i - xbar_k(u_e) moves beta_k, which moves
//     the ATE through its gradient g_k(t).
class WildLinearization {
 public:
  WildLinearization(const std::vector<CoxContext>& ctxs, const std::vector<CoxFit>& fits,
                    const TimeGrid& grid)
      : grid_(grid) {
    detail::check_fits(fits);
    if (ctxs.size() != fits.size()) throw DomainError("one context per fit required");
    const Dataset& ds = ctxs[0].dataset();
    const std::size_t n = ds.size();
    const std::size_t K = fits.size();
    const std::size_t G = grid.size();
    n_ = n;

    // Counterfactual design matrices, relative risks, and per-event risk-set
    // means for each cause.
    std::vector<Eigen::MatrixXd> rr(K);           // n x 2: exp(beta_k' x^a), a = 0,1
    std::vector<Eigen::MatrixXd> xbar(K);         // d_k x (#cause-k events), ascending
    std::vector<Eigen::MatrixXd> xa(2 * K);       // counterfactual rows per (k, a)
    std::vector<Eigen::MatrixXd> omega_inv(K);    // n * information^{-1}
    std::vector<std::vector<std::size_t>> event_subject(K);
    for (std::size_t k = 0; k < K; ++k) {
      const CoxContext& ctx = ctxs[k];
      if (&ctx.dataset() != &ds) throw DomainError("contexts must share one dataset");
      if (ctx.cause() != static_cast<int>(k) + 1) throw DomainError("contexts must be ordered by cause");
      const auto d = static_cast<Eigen::Index>(ctx.design().dim());
      if (fits[k].beta.size() != d) throw DomainError("fit/context design mismatch");
      for (int a = 0; a < 2; ++a) {
        Eigen::MatrixXd X = ctx.X();
        if (ctx.design().include_treatment) X.col(0).setConstant(static_cast<double>(a));
        xa[2 * k + a] = std::move(X);
      }
      rr[k].resize(static_cast<Eigen::Index>(n), 2);
      for (int a = 0; a < 2; ++a) {
        rr[k].col(a) = (xa[2 * k + a] * fits[k].beta).array().exp();
      }
      Eigen::LDLT<Eigen::MatrixXd> ldlt(fits[k].information_matrix);
      if (ldlt.info() != Eigen::Success) {
        throw NumericalError("singular information matrix in wild-bootstrap linearization");
      }
      omega_inv[k] = static_cast<double>(n) *
                     ldlt.solve(Eigen::MatrixXd::Identity(d, d));

      // Risk-set means at cause-k event times, descending sweep then reversed.
      Eigen::VectorXd eta = ctx.X() * fits[k].beta;
      const double shift = eta.size() > 0 ? eta.maxCoeff() : 0.0;
      double a0 = 0.0;
      Eigen::VectorXd a1 = Eigen::VectorXd::Zero(d);
      std::vector<Eigen::VectorXd> means;
      std::vector<std::size_t> subjects;
      const auto& desc = ctx.descending_order();
      std::size_t pos = 0;
      while (pos < desc.size()) {
        const double t = ds.records()[desc[pos]].time;
        std::size_t group_end = pos;
        while (group_end < desc.size() && ds.records()[desc[group_end]].time == t) ++group_end;
        for (std::size_t gi = pos; gi < group_end; ++gi) {
          const std::size_t i = desc[gi];
          const double e = std::exp(eta[static_cast<Eigen::Index>(i)] - shift);
          a0 += e;
          a1.noalias() += e * ctx.X().row(static_cast<Eigen::Index>(i)).transpose();
        }
        for (std::size_t gi = pos; gi < group_end; ++gi) {
          const std::size_t i = desc[gi];
          if (ds.records()[i].cause != ctx.cause()) continue;
          means.push_back(a1 / a0);
          subjects.push_back(i);
        }
        pos = group_end;
      }
      std::reverse(means.begin(), means.end());
      std::reverse(subjects.begin(), subjects.end());
      if (means.size() != fits[k].baseline.jump_times.size()) {
        throw DomainError("baseline jumps do not match cause-" + std::to_string(k + 1) +
                          " events; wild bootstrap needs an unweighted base fit");
      }
      xbar[k].resize(d, static_cast<Eigen::Index>(means.size()));
      for (std::size_t e = 0; e < means.size(); ++e) {
        xbar[k].col(static_cast<Eigen::Index>(e)) = means[e];
      }
      event_subject[k] = std::move(subjects);
    }

    detail::MergedJumps jumps = detail::merge_jumps(fits);
    const std::size_t E = jumps.times.size();
    events_.resize(E);

    // Running state of the ascending sweep.
    Eigen::MatrixXd cum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 2);
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 2);
    std::vector<double> L0(K, 0.0);             // Lambda_0k left limit
    std::vector<Eigen::VectorXd> Bk(K);         // running sum of xbar_k * jump
    std::vector<double> V(K, 0.0);              // Vtilde_k
    std::vector<Eigen::VectorXd> gk(K);         // running ATE gradient wrt beta_k
    std::vector<std::size_t> event_counter(K, 0);
    for (std::size_t k = 0; k < K; ++k) {
      Bk[k] = Eigen::VectorXd::Zero(xbar[k].rows());
      gk[k] = Eigen::VectorXd::Zero(xbar[k].rows());
    }

    W_.assign(E, 0.0);
    V_at_event_.assign(E, 0.0);
    V_snap_.assign(G, std::vector<double>(K, 0.0));
    g_snap_.assign(G, std::vector<Eigen::VectorXd>(K));
    h_.resize(E);

    std::size_t g = 0;
    auto flush = [&](double up_to) {
      while (g < G && grid.points[g] < up_to) {
        for (std::size_t k = 0; k < K; ++k) {
          V_snap_[g][k] = V[k];
          g_snap_[g][k] = gk[k];
        }
        ++g;
      }
    };

    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t e = 0; e < E; ++e) {
      const double u = jumps.times[e];
      const double jump = jumps.sizes[e];
      const auto k = static_cast<std::size_t>(jumps.cause_index[e]);
      flush(u);

      if (k == 0) {
        double w_sum = 0.0;
        std::vector<double> dV(K, 0.0);
        std::vector<Eigen::VectorXd> dg(K);
        for (std::size_t kk = 0; kk < K; ++kk) dg[kk] = Eigen::VectorXd::Zero(gk[kk].size());
        const Eigen::Index ee = static_cast<Eigen::Index>(event_counter[0]);
        for (std::size_t j = 0; j < n; ++j) {
          const auto jj = static_cast<Eigen::Index>(j);
          for (int a = 0; a < 2; ++a) {
            const double sigma = a == 1 ? 1.0 : -1.0;
            const double r1 = rr[0](jj, a);
            const double p = std::exp(-cum(jj, a));
            const double df = p * r1 * jump;
            w_sum += sigma * p * r1;
            F(jj, a) += df;
            for (std::size_t kk = 0; kk < K; ++kk) {
              const double rk = rr[kk](jj, a);
              dV[kk] += sigma * rk * df;
              if (kk == 0) {
                dg[0].noalias() +=
                    (sigma * df) *
                    (xa[2 * kk + a].row(jj).transpose() - xbar[0].col(ee) -
                     rk * (L0[0] * xa[2 * kk + a].row(jj).transpose() - Bk[0]));
              } else {
                dg[kk].noalias() -=
                    (sigma * df * rk) *
                    (L0[kk] * xa[2 * kk + a].row(jj).transpose() - Bk[kk]);
              }
            }
          }
        }
        W_[e] = w_sum;
        for (std::size_t kk = 0; kk < K; ++kk) {
          V[kk] += dV[kk];
          gk[kk].noalias() += inv_n * dg[kk];
        }
      }
      V_at_event_[e] = V[k];

      const std::size_t ev_index = event_counter[k]++;
      const std::size_t subj = event_subject[k][ev_index];
      events_[e] = WildEvent{subj, static_cast<int>(k), u, jump};
      h_[e] = omega_inv[k] * (ctxs[k].X().row(static_cast<Eigen::Index>(subj)).transpose() -
                              xbar[k].col(static_cast<Eigen::Index>(ev_index)));

      cum.col(0) += jump * rr[k].col(0);
      cum.col(1) += jump * rr[k].col(1);
      Bk[k].noalias() += jump * xbar[k].col(static_cast<Eigen::Index>(ev_index));
      L0[k] += jump;
    }
    flush(std::numeric_limits<double>::infinity());

    contributions_.resize(static_cast<Eigen::Index>(E), static_cast<Eigen::Index>(G));
    for (std::size_t e = 0; e < E; ++e) {
      const auto k = static_cast<std::size_t>(events_[e].cause_index);
      const double direct = k == 0 ? W_[e] : 0.0;
      for (std::size_t gg = 0; gg < G; ++gg) {
        const bool in = events_[e].time <= grid.points[gg];
        const double atom_part =
            in ? (direct - V_snap_[gg][k] + V_at_event_[e]) * events_[e].jump : 0.0;
        contributions_(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(gg)) =
            atom_part + g_snap_[gg][k].dot(h_[e]);
      }
    }
  }

  const TimeGrid& grid() const { return grid_; }
  const std::vector<WildEvent>& events() const { return events_; }
  const Eigen::MatrixXd& contributions() const { return contributions_; }
  std::size_t n_subjects() const { return n_; }

  // d ATE(t_g) / d (baseline jump size of event e).
  double atom_derivative(std::size_t e, std::size_t g) const {
    if (events_[e].time > grid_.points[g]) return 0.0;
    const auto k = static_cast<std::size_t>(events_[e].cause_index);
    const double direct = k == 0 ? W_[e] : 0.0;
    return (direct - V_snap_[g][k] + V_at_event_[e]) / static_cast<double>(n_);
  }

  // d ATE(t_g) / d beta_k, with baselines recomputed at the shifted beta.
  const Eigen::VectorXd& beta_gradient(std::size_t cause_index, std::size_t g) const {
    return g_snap_[g][cause_index];
  }

 private:
  TimeGrid grid_;
  std::size_t n_ = 0;
  std::vector<WildEvent> events_;
  Eigen::MatrixXd contributions_;
  std::vector<double> W_;
  std::vector<double> V_at_event_;
  std::vector<std::vector<double>> V_snap_;
  std::vector<std::vector<Eigen::VectorXd>> g_snap_;
  std::vector<Eigen::VectorXd> h_;
};

// B draws of the multiplier process U(t); one multiplier vector per replicate,
// generated from the replicate-indexed substream.
inline ResampleEnsemble wild_ensemble(const std::vector<CoxContext>& ctxs,
                                      const std::vector<CoxFit>& fits, const TimeGrid& grid,
                                      std::size_t B, const MultiplierScheme& scheme,
                                      std::uint64_t seed, int workers = 1) {
  if (B == 0) throw DomainError("wild_ensemble: B must be positive");
  WildLinearization lin(ctxs, fits, grid);
  const Dataset& ds = ctxs[0].dataset();
  const std::size_t n = ds.size();
  const auto E = static_cast<std::size_t>(lin.contributions().rows());
  const std::uint64_t tag = rng_tag::for_scheme(scheme.kind);

  // Multipliers gathered per event subject, so the draw is one matrix product.
  Eigen::MatrixXd Gmat(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(E));
  parallel_for(B, workers, [&](std::size_t b) {
    RngStream rng = RngStream::substream(seed, tag, b);
    std::vector<double> mult = gen_multipliers(scheme, ds, rng);
    for (std::size_t e = 0; e < E; ++e) {
      Gmat(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e)) =
          mult[lin.events()[e].subject];
    }
  });

  ResampleEnsemble ens;
  ens.grid = grid;
  ens.method = Method::WBS;
  ens.scheme = scheme.kind;
  ens.draws = (Gmat * lin.contributions()) / std::sqrt(static_cast<double>(n));
  finalize_ensemble_stats(ens);
  return ens;
}

}  // namespace atecr
