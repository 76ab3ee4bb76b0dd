#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "atecr/cif.hpp"
#include "atecr/dataset.hpp"
#include "atecr/errors.hpp"
#include "atecr/rng.hpp"

namespace atecr {

enum class Method { EBS, IF, WBS };

enum class MultiplierKind { standard_normal, centered_poisson, weird_binomial };

struct MultiplierScheme {
  MultiplierKind kind = MultiplierKind::standard_normal;
};

inline std::string method_label(Method m, MultiplierKind kind = MultiplierKind::standard_normal) {
  switch (m) {
    case Method::EBS: return "ebs";
    case Method::IF: return "if";
    case Method::WBS:
      switch (kind) {
        case MultiplierKind::standard_normal: return "wbs-normal";
        case MultiplierKind::centered_poisson: return "wbs-poisson";
        case MultiplierKind::weird_binomial: return "wbs-weird";
      }
  }
  return "?";
}

// RNG stream tags; replicate b of a method always derives its stream from
// (master seed, tag, b) so ensembles do not depend on worker scheduling.
namespace rng_tag {
constexpr std::uint64_t ebs = 1;
constexpr std::uint64_t if_band = 2;
constexpr std::uint64_t wbs_normal = 3;
constexpr std::uint64_t wbs_poisson = 4;
constexpr std::uint64_t wbs_weird = 5;
constexpr std::uint64_t sim = 6;
constexpr std::uint64_t oracle = 7;

inline std::uint64_t for_scheme(MultiplierKind kind) {
  switch (kind) {
    case MultiplierKind::standard_normal: return wbs_normal;
    case MultiplierKind::centered_poisson: return wbs_poisson;
    case MultiplierKind::weird_binomial: return wbs_weird;
  }
  return wbs_normal;
}
}  // namespace rng_tag

// One vector of n multipliers. The weird-binomial scheme draws
// Binomial(Y(T_i), 1/Y(T_i)) - 1 with Y the risk-set size at the subject's
// observed time.
inline std::vector<double> gen_multipliers(const MultiplierScheme& scheme, const Dataset& ds,
                                           RngStream& rng) {
  std::vector<double> g(ds.size());
  switch (scheme.kind) {
    case MultiplierKind::standard_normal:
      for (auto& x : g) x = rng.normal();
      break;
    case MultiplierKind::centered_poisson:
      for (auto& x : g) x = static_cast<double>(rng.poisson(1.0)) - 1.0;
      break;
    case MultiplierKind::weird_binomial:
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto y = static_cast<int>(ds.risk_set_size(ds.records()[i].time));
        if (y < 1) throw DomainError("weird multipliers need risk-set size >= 1");
        g[i] = static_cast<double>(rng.binomial(y, 1.0 / y)) - 1.0;
      }
      break;
  }
  return g;
}

// Ceiling-rule empirical quantile: the ceil(m*p)-th order statistic.
inline double empirical_quantile(const std::vector<double>& samples, double p) {
  if (samples.empty()) throw DomainError("empirical_quantile: empty sample");
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("empirical_quantile: p must be in (0,1]");
  const std::size_t m = samples.size();
  const double mp = static_cast<double>(m) * p;
  std::size_t k = static_cast<std::size_t>(std::floor(mp));
  if (mp - static_cast<double>(k) > 1e-9) ++k;
  if (k < 1) k = 1;
  if (k > m) k = m;
  std::vector<double> copy = samples;
  std::nth_element(copy.begin(), copy.begin() + static_cast<std::ptrdiff_t>(k - 1), copy.end());
  return copy[k - 1];
}

// B resampled curves plus per-time mean and sample variance.
struct ResampleEnsemble {
  TimeGrid grid;
  Eigen::MatrixXd draws;  // B x |grid|
  std::vector<double> center;
  std::vector<double> variance;
  Method method = Method::EBS;
  MultiplierKind scheme = MultiplierKind::standard_normal;
  std::size_t B = 0;
  std::size_t discarded = 0;
};

inline void finalize_ensemble_stats(ResampleEnsemble& ens) {
  const auto B = static_cast<std::size_t>(ens.draws.rows());
  const auto G = static_cast<std::size_t>(ens.draws.cols());
  ens.B = B;
  ens.center.assign(G, 0.0);
  ens.variance.assign(G, 0.0);
  for (std::size_t g = 0; g < G; ++g) {
    double mean = ens.draws.col(static_cast<Eigen::Index>(g)).mean();
    ens.center[g] = mean;
    if (B > 1) {
      double ss = (ens.draws.col(static_cast<Eigen::Index>(g)).array() - mean).square().sum();
      ens.variance[g] = ss / static_cast<double>(B - 1);
    }
  }
}

// Estimated per-subject influence values and the plug-in variance
// nu_hat(t) = n^{-1} sum_i IF_i(t)^2.
struct InfluenceMatrix {
  TimeGrid grid;
  Eigen::MatrixXd values;  // n x |grid|
  std::vector<double> variance;
};

struct ConfidenceRegion {
  TimeGrid grid;
  std::vector<double> estimate;
  std::vector<double> lower;
  std::vector<double> upper;
  double level = 0.95;
  Method method = Method::EBS;
  MultiplierKind scheme = MultiplierKind::standard_normal;
  bool band = false;
  std::vector<double> quantile_used;  // per-time for intervals, one entry for bands
  std::vector<std::string> warnings;
};

}  // namespace atecr
