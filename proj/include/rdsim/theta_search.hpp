#pragma once

// Search for energy weights theta making the reduced block matrix positive
// definite at every sampled diffusion tensor while keeping the weighted
// reaction sums of order r.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rdsim/dense.hpp"
#include "rdsim/error.hpp"
#include "rdsim/multinomial.hpp"
#include "rdsim/reaction.hpp"

namespace rdsim {

/// One coefficient sample: an n x n diffusion tensor per species.
using DiffusionSample = std::vector<DenseMatrix>;

struct ThetaSearchOptions {
  int max_doublings = 20;
  double plateau_tolerance = kPlateauTolerance;
};

struct ThetaSelection {
  ThetaVector theta;
  double K_estimate = 0.0;
  /// Smallest eigenvalue of the reduced block matrix over all samples.
  double min_block_eigenvalue = 0.0;
  /// Running-max weighted ratio per sampler radius at the returned theta.
  std::vector<double> radius_ratios;
  std::vector<std::string> log;
};

/// min over samples of the smallest eigenvalue of the reduced block matrix.
inline double min_btilde_eigenvalue(std::span<const DiffusionSample> samples, const ThetaVector& theta) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& D : samples) lo = std::min(lo, min_eigenvalue(assemble_btilde(D, theta).matrix));
  return lo;
}

inline bool btilde_positive_definite(std::span<const DiffusionSample> samples, const ThetaVector& theta) {
  for (const auto& D : samples) {
    if (!is_positive_definite(assemble_btilde(D, theta).matrix)) return false;
  }
  return true;
}

/// Positive definiteness of the trailing principal block over species
/// first..m-1, which only involves theta_first..theta_m.
inline bool trailing_btilde_positive_definite(std::span<const DiffusionSample> samples,
                                              const std::vector<double>& theta, std::size_t first) {
  const ThetaVector tail(std::vector<double>(theta.begin() + static_cast<std::ptrdiff_t>(first), theta.end()));
  for (const auto& D : samples) {
    const DiffusionSample sub(D.begin() + static_cast<std::ptrdiff_t>(first), D.end());
    if (!is_positive_definite(assemble_btilde(sub, tail).matrix)) return false;
  }
  return true;
}

/// Per radius: max over samples u and over |beta| = p-1 of
///   sum_k theta_k^{2 beta_k + 1} F_k(u) / (1 + sum u_i^r).
inline std::vector<double> weighted_reaction_ratios(const ReactionSystem& system, const ThetaVector& theta, int p,
                                                    const StateSampler& sampler) {
  const std::size_t m = system.species();
  const double r = system.structure().intermediate_order;
  const auto betas = enumerate_multi_indices(m, std::max(p - 1, 0));
  std::vector<std::vector<double>> weights;
  weights.reserve(betas.size());
  for (const auto& beta : betas) {
    std::vector<double> w(m);
    for (std::size_t k = 0; k < m; ++k) w[k] = std::pow(theta[k], 2.0 * beta[k] + 1.0);
    weights.push_back(std::move(w));
  }

  std::vector<double> out(sampler.radius_count(), -std::numeric_limits<double>::infinity());
  std::vector<double> f(m);
  for (std::size_t k = 0; k < sampler.radius_count(); ++k) {
    for (const auto& s : sampler.samples(m, k)) {
      system.evaluate(s.at, s.u, f);
      double denom = 1.0;
      for (double v : s.u) denom += std::pow(v, r);
      for (const auto& w : weights) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += w[i] * f[i];
        const double ratio = std::isnan(acc) ? std::numeric_limits<double>::infinity() : acc / denom;
        out[k] = std::max(out[k], ratio);
      }
    }
  }
  return out;
}

/// Backward sweep i = m..1: theta_i doubles from 1 until the trailing block
/// of the reduced matrix over species i..m is positive definite at every
/// sample (the full matrix once i = 1) and the weighted reaction
/// ratio plateaus as the radius doubles. For i > 1, a ratio that cannot be
/// tamed by theta_i alone is left to the leading species (theta_1 is the
/// largest lever, as later species gain what earlier ones lose); theta_i
/// then keeps the smallest value giving positive definiteness.
inline ThetaSelection select_theta(const ReactionSystem& system, std::span<const DiffusionSample> samples, int p,
                                   const StateSampler& sampler, const ThetaSearchOptions& options = {}) {
  const std::size_t m = system.species();
  if (p < 1) throw InvalidArgument("select_theta: p must be >= 1");
  for (const auto& D : samples) {
    if (D.size() != m) throw InvalidArgument("select_theta: each diffusion sample needs one tensor per species");
  }

  std::vector<double> theta(m, 1.0);
  ThetaSelection result;
  auto plateau = [&](const std::vector<double>& ratios) {
    return ratio_plateaued(ratios, options.plateau_tolerance);
  };

  for (std::size_t step = 0; step < m; ++step) {
    const std::size_t i = m - 1 - step;
    double first_pd = -1.0;
    bool done = false;
    for (int d = 0; d <= options.max_doublings; ++d) {
      const ThetaVector candidate(theta);
      const bool pd = trailing_btilde_positive_definite(samples, theta, i);
      if (pd && first_pd < 0.0) first_pd = theta[i];
      if (pd && plateau(weighted_reaction_ratios(system, candidate, p, sampler))) {
        done = true;
        break;
      }
      if (d < options.max_doublings) theta[i] *= 2.0;
    }
    if (!done) {
      if (first_pd < 0.0) {
        throw HypothesisError("PD", "select_theta: reduced block matrix not positive definite after " +
                                        std::to_string(options.max_doublings) + " doublings of theta_" +
                                        std::to_string(i + 1));
      }
      if (i == 0) {
        throw HypothesisError("F4", "select_theta: weighted reaction ratio keeps growing with the sample radius after " +
                                        std::to_string(options.max_doublings) + " doublings of theta_1");
      }
      theta[i] = first_pd;
      result.log.push_back("theta_" + std::to_string(i + 1) + " = " + std::to_string(theta[i]) +
                           " (positive definite; ratio deferred to leading species)");
    } else {
      result.log.push_back("theta_" + std::to_string(i + 1) + " = " + std::to_string(theta[i]));
    }
  }

  result.theta = ThetaVector(theta);
  result.min_block_eigenvalue = samples.empty() ? std::numeric_limits<double>::infinity()
                                                : min_btilde_eigenvalue(samples, result.theta);
  result.radius_ratios = weighted_reaction_ratios(system, result.theta, p, sampler);
  for (std::size_t k = 1; k < result.radius_ratios.size(); ++k) {
    result.radius_ratios[k] = std::max(result.radius_ratios[k], result.radius_ratios[k - 1]);
  }
  if (!plateau(result.radius_ratios)) {
    throw HypothesisError("F4", "select_theta: final weighted reaction ratio does not plateau");
  }
  result.K_estimate = result.radius_ratios.back();
  return result;
}

}  // namespace rdsim
