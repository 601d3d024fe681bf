#pragma once

#include <cbompc/cbo.hpp>
#include <cbompc/errors.hpp>
#include <cbompc/plant.hpp>
#include <cbompc/rng.hpp>

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbompc {

struct MpcConfig {
  std::size_t horizon = 10;  // control moves per sub-problem
  double nu = 1.0;           // control regularization weight
  std::size_t n_steps = 130; // outer MPC steps
  double dt = 0.05;          // sampling period
  bool regularize_to_reference = true;  // penalize |u - u_ref(t)|^2 instead of |u|^2

  void validate() const {
    if (horizon == 0) throw std::invalid_argument("MpcConfig: horizon must be >= 1");
    if (n_steps == 0) throw std::invalid_argument("MpcConfig: n_steps must be >= 1");
    if (!(nu >= 0.0) || !std::isfinite(nu)) throw std::invalid_argument("MpcConfig: nu must be >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("MpcConfig: dt must be positive");
  }
};

struct MpcStep {
  std::size_t n = 0;
  double t = 0.0;
  Eigen::VectorXd state;      // x_(n), before the control is applied
  Eigen::VectorXd control;    // applied u_(n)
  double loss = 0.0;          // L_n at the consensus control sequence
  Eigen::VectorXd consensus;  // full consensus sequence of sub-problem n
  double inner_seconds = 0.0;
};

struct MpcTrace {
  std::vector<MpcStep> steps;
  Eigen::VectorXd final_state;  // x_(n_steps)
  std::uint64_t objective_evaluations = 0;
  std::uint64_t cbo_steps = 0;
};

/// Sub-problem loss: rolls the plant forward over the horizon from x_n and
/// sums |y_(m) - y_ref(t_m)|^2 for m = n+1..n+H plus nu times the control
/// penalty for m = n..n+H-1.
inline double rollout_loss(const Plant& plant, const Eigen::VectorXd& x_n, double t_n,
                           const Eigen::Ref<const Eigen::VectorXd>& u_seq, const MpcConfig& config) {
  const auto d = static_cast<Eigen::Index>(plant.control_dim());
  if (u_seq.size() != d * static_cast<Eigen::Index>(config.horizon))
    throw std::invalid_argument("rollout_loss: control sequence length must be control_dim * horizon");

  Eigen::VectorXd x = x_n;
  double tracking = 0.0;
  double penalty = 0.0;
  for (std::size_t j = 0; j < config.horizon; ++j) {
    const double t = t_n + static_cast<double>(j) * config.dt;
    const Eigen::VectorXd u = u_seq.segment(static_cast<Eigen::Index>(j) * d, d);
    penalty += config.regularize_to_reference ? (u - plant.control_reference(t)).squaredNorm()
                                               : u.squaredNorm();
    try {
      x = plant.step(x, u, t);
    } catch (const Error& e) {
      throw RolloutError(j, e.what());
    }
    if (!x.allFinite()) throw RolloutError(j, "plant produced a non-finite state");
    tracking += (plant.tracked_output(x) - plant.output_reference(t + config.dt)).squaredNorm();
  }
  return tracking + config.nu * penalty;
}

/// Draws the initial ensemble: one column per agent in R^(d*H).
using EnsembleSampler = std::function<Eigen::MatrixXd(std::size_t n_agents, StreamEngine& rng)>;

/// u_ref(0) replicated over the horizon plus Unif([-half_width, half_width]),
/// projected onto the box.
inline EnsembleSampler reference_uniform_sampler(const Plant& plant, std::size_t horizon,
                                                 double half_width) {
  const ControlBox box = plant.box().replicate(horizon);
  const Eigen::VectorXd center = plant.control_reference(0.0).replicate(static_cast<Eigen::Index>(horizon), 1);
  return [box, center, half_width](std::size_t n_agents, StreamEngine& rng) {
    std::uniform_real_distribution<double> unif(-half_width, half_width);
    Eigen::MatrixXd out(center.size(), static_cast<Eigen::Index>(n_agents));
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      for (Eigen::Index j = 0; j < out.rows(); ++j) out(j, i) = center[j] + unif(rng);
      out.col(i) = box.project(out.col(i));
    }
    return out;
  };
}

/// Uniform on the horizon-replicated box (full support on the admissible set).
inline EnsembleSampler box_uniform_sampler(const Plant& plant, std::size_t horizon) {
  const ControlBox box = plant.box().replicate(horizon);
  return [box](std::size_t n_agents, StreamEngine& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(box.dim()), static_cast<Eigen::Index>(n_agents));
    for (Eigen::Index i = 0; i < out.cols(); ++i)
      for (Eigen::Index j = 0; j < out.rows(); ++j)
        out(j, i) = box.lower()[j] + (box.upper()[j] - box.lower()[j]) * unif(rng);
    return out;
  };
}

/// Optional hooks into mpc_run. `subproblem(n, x_n, initial, final)` sees the
/// ensemble entering and leaving sub-problem n (values evaluated on L_n);
/// `cbo_step(n, k, ensemble)` sees every inner iterate k = 0..k_bar.
struct MpcObserver {
  std::function<void(std::size_t, const Eigen::VectorXd&, const Ensemble&, const Ensemble&)> subproblem;
  std::function<void(std::size_t, std::size_t, const Ensemble&)> cbo_step;
};

/// Receding-horizon loop: for each n, k_bar CBO steps on L_n, apply the first
/// block of the consensus point, advance the plant and carry the final
/// ensemble over to sub-problem n+1 unchanged.
inline MpcTrace mpc_run(const Plant& plant, const Eigen::VectorXd& x0, const CboParams& cbo,
                        const MpcConfig& config, const EnsembleSampler& init,
                        const MpcObserver& observer = {}) {
  cbo.validate();
  config.validate();
  if (static_cast<std::size_t>(x0.size()) != plant.state_dim())
    throw std::invalid_argument("mpc_run: initial state has the wrong dimension");

  const auto d = static_cast<Eigen::Index>(plant.control_dim());
  const ControlBox box = plant.box().replicate(config.horizon);

  auto init_rng = sampler_stream(cbo.seed);
  Ensemble ensemble = Ensemble::from_positions(init(cbo.n_agents, init_rng));
  if (ensemble.dim() != box.dim() || ensemble.size() != cbo.n_agents)
    throw std::invalid_argument("mpc_run: sampler returned an ensemble of the wrong shape");
  for (Eigen::Index i = 0; i < ensemble.positions.cols(); ++i)
    if (!box.contains(ensemble.positions.col(i)))
      throw std::invalid_argument("mpc_run: initial agent " + std::to_string(i) + " lies outside the box");

  MpcTrace trace;
  trace.steps.reserve(config.n_steps);
  Eigen::VectorXd x = x0;

  for (std::size_t n = 0; n < config.n_steps; ++n) {
    const double t_n = static_cast<double>(n) * config.dt;
    std::uint64_t evaluations = 0;
    auto loss = [&](const Eigen::Ref<const Eigen::VectorXd>& u) {
      ++evaluations;
      return rollout_loss(plant, x, t_n, u, config);
    };

    std::optional<Ensemble> initial;
    auto observe = [&](std::size_t k, const Ensemble& e) {
      if (k == 0 && observer.subproblem) initial = e;
      if (observer.cbo_step) observer.cbo_step(n, k, e);
    };

    const auto start = std::chrono::steady_clock::now();
    CboResult result = run_cbo(std::move(ensemble), loss, cbo, box, observe);
    const auto stop = std::chrono::steady_clock::now();

    if (observer.subproblem) observer.subproblem(n, x, *initial, result.ensemble);

    MpcStep record;
    record.n = n;
    record.t = t_n;
    record.state = x;
    record.control = result.consensus.head(d);
    record.loss = rollout_loss(plant, x, t_n, result.consensus, config);
    record.consensus = result.consensus;
    record.inner_seconds = std::chrono::duration<double>(stop - start).count();

    x = plant.step(x, record.control, t_n);
    if (!x.allFinite()) throw RolloutError(0, "mpc_run: plant produced a non-finite state");

    trace.objective_evaluations += evaluations;
    trace.cbo_steps += cbo.k_bar;
    trace.steps.push_back(std::move(record));
    ensemble = std::move(result.ensemble);
  }
  trace.final_state = x;
  return trace;
}

}  // namespace cbompc
