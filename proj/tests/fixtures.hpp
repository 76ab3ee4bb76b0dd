#pragma once

#include <vector>

#include "atecr/atecr.hpp"

namespace fixtures {

// Three subjects with a single covariate z = (1, 0, 1), all cause-1 events at
// times (1, 2, 3). At beta = 0 the partial loglik is -log 6; the maximizer is
// beta = -log(2)/2 and the baseline satisfies L0(1) = 1/(sqrt(2) + 1).
inline atecr::Dataset three_subject() {
  std::vector<atecr::SubjectRecord> recs(3);
  recs[0] = {1.0, 1, 0, {1.0}, 1.0};
  recs[1] = {2.0, 1, 0, {0.0}, 1.0};
  recs[2] = {3.0, 1, 0, {1.0}, 1.0};
  return atecr::Dataset(std::move(recs), 1, {"z"});
}

inline atecr::CoxContext covariate_only_context(const atecr::Dataset& ds, int cause = 1) {
  atecr::CoxDesign design;
  design.include_treatment = false;
  for (std::size_t j = 0; j < ds.num_covariates(); ++j) design.covariate_subset.push_back(j);
  return atecr::CoxContext(ds, cause, design);
}

// Random competing-risks dataset without event-time ties: exponential-ish
// times, K causes, p covariates plus a treatment flag.
inline atecr::Dataset random_dataset(std::size_t n, std::size_t p, int num_causes,
                                     std::uint64_t seed, double censor_prob = 0.2) {
  atecr::RngStream rng(seed);
  std::vector<atecr::SubjectRecord> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = recs[i];
    r.treated = rng.bernoulli(0.5) ? 1 : 0;
    r.covariates.resize(p);
    for (auto& z : r.covariates) z = rng.normal();
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    r.time = -std::log(u);
    if (rng.uniform() < censor_prob) {
      r.cause = 0;
    } else {
      r.cause = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(num_causes)));
    }
  }
  // Ensure at least two events of each cause so fits are well posed.
  for (int k = 1; k <= num_causes; ++k) {
    recs[static_cast<std::size_t>(2 * (k - 1))].cause = k;
    recs[static_cast<std::size_t>(2 * (k - 1) + 1)].cause = k;
  }
  return atecr::Dataset(std::move(recs), num_causes, [&] {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
    return names;
  }());
}

inline std::vector<atecr::CoxContext> standard_contexts(const atecr::Dataset& ds) {
  std::vector<atecr::CoxContext> ctxs;
  for (int k = 1; k <= ds.num_causes(); ++k) {
    ctxs.emplace_back(ds, k, atecr::resolve_design(ds, k, true, {}));
  }
  return ctxs;
}

inline std::vector<atecr::CoxFit> standard_fits(const std::vector<atecr::CoxContext>& ctxs) {
  std::vector<atecr::CoxFit> fits;
  for (const auto& ctx : ctxs) fits.push_back(atecr::fit_cause_specific(ctx));
  return fits;
}

}  // namespace fixtures
