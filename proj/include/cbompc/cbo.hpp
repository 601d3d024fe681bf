#pragma once

#include <cbompc/box.hpp>
#include <cbompc/errors.hpp>
#include <cbompc/rng.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <type_traits>
#include <utility>

namespace cbompc {

/// Black-box objective over the stacked control vector.
template <class F>
concept Objective = std::is_invocable_r_v<double, F&, const Eigen::Ref<const Eigen::VectorXd>&>;

enum class DiffusionKind { Isotropic, ConsensusRelative };

/// Diffusion vector D in the update: all-ones (isotropic) or
/// (m - U^i) + sigma_tilde * 1 (consensus-relative).
struct Diffusion {
  DiffusionKind kind = DiffusionKind::Isotropic;
  double sigma_tilde = 0.0;

  static Diffusion isotropic() { return {}; }
  static Diffusion consensus_relative(double sigma_tilde) {
    return {DiffusionKind::ConsensusRelative, sigma_tilde};
  }
  friend bool operator==(const Diffusion&, const Diffusion&) = default;
};

struct CboParams {
  double lambda = 1.0;
  double sigma = 3.0;
  double tau = 0.1;
  double alpha = 1e5;
  std::size_t n_agents = 32;
  std::size_t k_bar = 10;
  Diffusion diffusion = Diffusion::consensus_relative(1e-3);
  std::uint64_t seed = 0;

  // sigma = 0 and k_bar = 0 are accepted: both are useful degenerate cases.
  void validate() const {
    if (!(lambda > 0.0) || !(tau > 0.0))
      throw std::invalid_argument("CboParams: lambda and tau must be positive");
    const double lt = lambda * tau;
    if (!(lt > 0.0 && lt < 1.0)) throw std::invalid_argument("CboParams: lambda*tau must lie in (0,1)");
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
      throw std::invalid_argument("CboParams: sigma must be finite and >= 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
      throw std::invalid_argument("CboParams: alpha must be finite and >= 0");
    if (n_agents == 0) throw std::invalid_argument("CboParams: n_agents must be >= 1");
    if (diffusion.kind == DiffusionKind::ConsensusRelative &&
        (!(diffusion.sigma_tilde >= 0.0) || !std::isfinite(diffusion.sigma_tilde)))
      throw std::invalid_argument("CboParams: sigma_tilde must be finite and >= 0");
  }
};

/// Agent positions (one column per agent) with a cache of objective values
/// and the consensus point of the current positions.
struct Ensemble {
  Eigen::MatrixXd positions;
  Eigen::VectorXd values;
  std::optional<Eigen::VectorXd> consensus;
  // Number of CBO steps applied so far. Keys the per-agent noise streams, so
  // it is carried across warm starts.
  std::uint64_t steps = 0;

  static Ensemble from_positions(Eigen::MatrixXd positions) {
    Ensemble e;
    e.positions = std::move(positions);
    return e;
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(positions.cols()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(positions.rows()); }
};

/// Gibbs-weighted mean sum_i U^i w_i / sum_i w_i, w_i = exp(-alpha (L_i - min_j L_j)).
///
/// Weights are shifted by the minimum, which leaves the ratio unchanged and
/// keeps the best agent's weight at exactly 1 for any alpha.
inline Eigen::VectorXd consensus_point(const Eigen::MatrixXd& positions,
                                       const Eigen::VectorXd& values, double alpha) {
  const Eigen::Index n = positions.cols();
  if (n == 0) throw std::invalid_argument("consensus_point: empty ensemble");
  if (values.size() != n) throw std::invalid_argument("consensus_point: value cache size mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!std::isfinite(values[i]))
      throw EvaluationError(static_cast<std::size_t>(i), "non-finite objective value");

  const double best = values.minCoeff();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(positions.rows());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = std::exp(-alpha * (values[i] - best));
    acc += w * positions.col(i);
    total += w;
  }
  Eigen::VectorXd m = acc / total;
  // Rounding in the weighted sum can land one ulp outside the agents' hull.
  return m.cwiseMax(positions.rowwise().minCoeff()).cwiseMin(positions.rowwise().maxCoeff());
}

inline Eigen::VectorXd consensus_point(const Ensemble& ensemble, double alpha) {
  return consensus_point(ensemble.positions, ensemble.values, alpha);
}

/// Re-evaluates every agent and recomputes the consensus point.
template <Objective F>
void refresh(Ensemble& ensemble, F& objective, double alpha) {
  const Eigen::Index n = ensemble.positions.cols();
  ensemble.values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = objective(ensemble.positions.col(i));
    if (!std::isfinite(v)) throw EvaluationError(static_cast<std::size_t>(i), "non-finite objective value");
    ensemble.values[i] = v;
  }
  ensemble.consensus = consensus_point(ensemble.positions, ensemble.values, alpha);
}

/// One projected CBO step for all agents against the consensus of the
/// current snapshot, followed by a cache and consensus refresh.
template <Objective F>
Ensemble cbo_step(Ensemble ensemble, F&& objective, const CboParams& params, const ControlBox& box) {
  if (box.dim() != ensemble.dim())
    throw std::invalid_argument("cbo_step: box dimension does not match ensemble dimension");
  if (!ensemble.consensus) refresh(ensemble, objective, params.alpha);

  const Eigen::VectorXd m = *ensemble.consensus;
  const double drift = params.lambda * params.tau;
  const double noise = params.sigma * std::sqrt(params.tau);
  const bool relative = params.diffusion.kind == DiffusionKind::ConsensusRelative;
  const Eigen::Index dim = ensemble.positions.rows();

  // Agents only read their own column and the frozen consensus, so the
  // columns can be updated in place (and independently).
  for (Eigen::Index i = 0; i < ensemble.positions.cols(); ++i) {
    auto rng = agent_stream(params.seed, static_cast<std::uint64_t>(i), ensemble.steps);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto agent = ensemble.positions.col(i);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double gap = m[j] - agent[j];
      const double scale = relative ? gap + params.diffusion.sigma_tilde : 1.0;
      agent[j] += drift * gap + noise * scale * normal(rng);
    }
    agent = agent.cwiseMax(box.lower()).cwiseMin(box.upper());
  }
  ++ensemble.steps;
  refresh(ensemble, objective, params.alpha);
  return ensemble;
}

struct CboResult {
  Ensemble ensemble;
  Eigen::VectorXd consensus;
};

struct NoStepObserver {
  void operator()(std::size_t, const Ensemble&) const noexcept {}
};

/// Evaluates the ensemble on `objective`, then applies exactly k_bar steps.
/// `observe(k, ensemble)` is called for k = 0..k_bar.
template <Objective F, class Observer = NoStepObserver>
CboResult run_cbo(Ensemble ensemble, F&& objective, const CboParams& params, const ControlBox& box,
                  Observer&& observe = {}) {
  params.validate();
  if (ensemble.size() == 0) throw std::invalid_argument("run_cbo: empty ensemble");
  refresh(ensemble, objective, params.alpha);
  observe(std::size_t{0}, std::as_const(ensemble));
  for (std::size_t k = 1; k <= params.k_bar; ++k) {
    ensemble = cbo_step(std::move(ensemble), objective, params, box);
    observe(k, std::as_const(ensemble));
  }
  Eigen::VectorXd m = *ensemble.consensus;
  return {std::move(ensemble), std::move(m)};
}

}  // namespace cbompc
