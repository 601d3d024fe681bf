#pragma once

#include <cbompc/cstr.hpp>
#include <cbompc/harness/config.hpp>
#include <cbompc/harness/csv.hpp>
#include <cbompc/harness/stats.hpp>
#include <cbompc/linear_plant.hpp>
#include <cbompc/mpc.hpp>
#include <cbompc/theory.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace cbompc::harness {

inline std::unique_ptr<Plant> make_plant(const ExperimentConfig& c) {
  if (c.plant == PlantKind::Cstr) {
    CstrPlant::Options o{c.cstr.params, c.cstr.substep, c.mpc.dt, c.cstr.q_c_min, c.cstr.q_c_max, c.cstr.c_ref,
                         c.cstr.q_c_ref};
    return std::make_unique<CstrPlant>(std::move(o));
  }
  return std::make_unique<LinearAdditivePlant>(c.linear.a_s, c.linear.b_s, c.linear.f_c,
                                               ControlBox(c.linear.u_min, c.linear.u_max), c.linear.x_ref);
}

inline Eigen::VectorXd initial_state(const ExperimentConfig& c) {
  return c.plant == PlantKind::Cstr ? c.cstr.x0 : c.linear.x0;
}

inline EnsembleSampler make_sampler(const ExperimentConfig& c, const Plant& plant) {
  return c.init.kind == InitKind::ReferenceUniform
             ? reference_uniform_sampler(plant, c.mpc.horizon, c.init.half_width)
             : box_uniform_sampler(plant, c.mpc.horizon);
}

struct RunOutcome {
  MpcTrace trace;
  std::vector<theory::QpSolution> oracle;  // linear plant only: u*_(n) per step
  double total_loss = 0.0;                 // sum_n L_n at the applied sequences
  double mean_loss = 0.0;
  double tail_mean_loss = 0.0;  // mean L_n over the last min(20, n_steps) steps
  double max_control_error = 0.0;  // linear plant only: max_n |u_(n) - u*_(n)|
  double wall_seconds = 0.0;
};

inline constexpr std::size_t kTailSteps = 20;

/// Runs one closed-loop experiment without touching the filesystem.
inline RunOutcome execute(const ExperimentConfig& c, const MpcObserver& observer = {}) {
  validate(c);
  const auto plant = make_plant(c);
  const auto start = std::chrono::steady_clock::now();
  RunOutcome out;
  out.trace = mpc_run(*plant, initial_state(c), c.cbo, c.mpc, make_sampler(c, *plant), observer);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto& steps = out.trace.steps;
  for (const auto& s : steps) out.total_loss += s.loss;
  out.mean_loss = out.total_loss / static_cast<double>(steps.size());
  const std::size_t tail = std::min(kTailSteps, steps.size());
  for (std::size_t i = steps.size() - tail; i < steps.size(); ++i) out.tail_mean_loss += steps[i].loss;
  out.tail_mean_loss /= static_cast<double>(tail);

  if (c.plant == PlantKind::Linear) {
    const auto& linear = static_cast<const LinearAdditivePlant&>(*plant);
    for (const auto& s : steps) {
      const double t_next = static_cast<double>(s.n + 1) * c.mpc.dt;
      out.oracle.push_back(theory::qp_solve(linear, s.state, linear.output_reference(t_next), c.mpc.nu));
      out.max_control_error = std::max(out.max_control_error, (s.control - out.oracle.back().u_star).norm());
    }
  }
  return out;
}

inline std::vector<std::string> trace_header(const ExperimentConfig& c) {
  if (c.plant == PlantKind::Cstr) return {"n", "t_min", "C", "T", "q_c_applied", "loss_n"};
  std::vector<std::string> h{"n", "t"};
  const auto m = c.linear.a_s.rows();
  const auto d = c.linear.f_c.cols();
  for (Eigen::Index i = 0; i < m; ++i) h.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 0; i < d; ++i) h.push_back("u" + std::to_string(i));
  h.push_back("loss_n");
  for (Eigen::Index i = 0; i < d; ++i) h.push_back("u_star" + std::to_string(i));
  h.push_back("err_u");
  return h;
}

inline void write_trace_csv(const std::string& path, const ExperimentConfig& c, const RunOutcome& r) {
  CsvWriter csv(path, trace_header(c));
  for (std::size_t k = 0; k < r.trace.steps.size(); ++k) {
    const auto& s = r.trace.steps[k];
    std::vector<std::string> row{std::to_string(s.n), format_number(s.t)};
    for (Eigen::Index i = 0; i < s.state.size(); ++i) row.push_back(format_number(s.state[i]));
    for (Eigen::Index i = 0; i < s.control.size(); ++i) row.push_back(format_number(s.control[i]));
    row.push_back(format_number(s.loss));
    if (c.plant == PlantKind::Linear) {
      const auto& u_star = r.oracle[k].u_star;
      for (Eigen::Index i = 0; i < u_star.size(); ++i) row.push_back(format_number(u_star[i]));
      row.push_back(format_number((s.control - u_star).norm()));
    }
    csv.row(row);
  }
}

inline json summary_json(const ExperimentConfig& c, const RunOutcome& r) {
  json j{{"final_loss", r.trace.steps.back().loss},
         {"mean_loss", r.mean_loss},
         {"tail_mean_loss", r.tail_mean_loss},
         {"total_loss", r.total_loss},
         {"n_steps", r.trace.steps.size()},
         {"objective_evaluations", r.trace.objective_evaluations},
         {"cbo_steps", r.trace.cbo_steps},
         {"wall_clock_seconds", r.wall_seconds},
         {"final_state", to_json(r.trace.final_state)},
         {"seed", c.cbo.seed},
         {"config", to_json(c)}};
  if (c.plant == PlantKind::Linear) j["max_control_error"] = r.max_control_error;
  return j;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

struct RunFiles {
  std::filesystem::path trace_csv;
  std::filesystem::path summary_json;
  RunOutcome outcome;
};

/// Single closed-loop run; writes trace.csv and summary.json into output_dir.
inline RunFiles run_single(const ExperimentConfig& c) {
  RunFiles files;
  files.outcome = execute(c);
  const std::filesystem::path dir(c.output_dir);
  std::filesystem::create_directories(dir);
  files.trace_csv = dir / "trace.csv";
  files.summary_json = dir / "summary.json";
  write_trace_csv(files.trace_csv.string(), c, files.outcome);
  write_json(files.summary_json.string(), summary_json(c, files.outcome));
  return files;
}

/// Seed of repetition r at sweep point p.
inline std::uint64_t sweep_seed(std::uint64_t seed_base, std::size_t point, std::size_t repetition) {
  return seed_base + static_cast<std::uint64_t>(point) * 1000000ULL + repetition;
}

struct SweepRecord {
  std::size_t point = 0;  // sweep value (N or k_bar)
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  double metric = 0.0;  // total loss
};

struct SweepPoint {
  std::size_t value = 0;
  QuantileSummary summary;
};

struct SweepResult {
  std::vector<SweepRecord> records;
  std::vector<SweepPoint> points;
};

/// Runs every (point, repetition) pair; repetitions are independent and are
/// distributed over `jobs` worker threads. Output order does not depend on
/// scheduling.
inline SweepResult compute_sweep(const ExperimentConfig& c) {
  validate(c);
  if (c.sweep.axis == SweepAxis::None) throw ConfigError("sweep.axis", "no sweep axis selected");

  std::vector<ExperimentConfig> tasks;
  SweepResult result;
  for (std::size_t p = 0; p < c.sweep.values.size(); ++p) {
    for (std::size_t r = 0; r < c.sweep.repetitions; ++r) {
      ExperimentConfig t = c;
      if (c.sweep.axis == SweepAxis::NAgents) t.cbo.n_agents = c.sweep.values[p];
      else t.cbo.k_bar = c.sweep.values[p];
      t.cbo.seed = sweep_seed(c.sweep.seed_base, p, r);
      tasks.push_back(std::move(t));
      result.records.push_back({c.sweep.values[p], r, tasks.back().cbo.seed, 0.0});
    }
  }

  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t jobs = std::min(tasks.size(), c.jobs == 0 ? hw : c.jobs);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
      try {
        result.records[i].metric = execute(tasks[i]).total_loss;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (std::size_t p = 0; p < c.sweep.values.size(); ++p) {
    std::vector<double> sample;
    for (const auto& rec : result.records)
      if (rec.point == c.sweep.values[p]) sample.push_back(rec.metric);
    result.points.push_back({c.sweep.values[p], summarize(sample)});
  }
  return result;
}

/// Sweep driver; writes sweep.csv and sweep_summary.csv.
inline SweepResult run_sweep(const ExperimentConfig& c) {
  SweepResult result = compute_sweep(c);
  const std::filesystem::path dir(c.output_dir);
  std::filesystem::create_directories(dir);
  {
    CsvWriter csv((dir / "sweep.csv").string(), {"point", "repetition", "seed", "metric"});
    for (const auto& r : result.records)
      csv.row({std::to_string(r.point), std::to_string(r.repetition), std::to_string(r.seed), format_number(r.metric)});
  }
  {
    CsvWriter csv((dir / "sweep_summary.csv").string(), {"point", "median", "p25", "p75"});
    for (const auto& p : result.points)
      csv.row({std::to_string(p.value), format_number(p.summary.median), format_number(p.summary.p25),
               format_number(p.summary.p75)});
  }
  return result;
}

/// Bound values for the first sub-problem of the configured linear instance
/// (state x0, reference at t_1) at accuracy theory.eps.
inline json theory_report(const ExperimentConfig& c) {
  if (c.plant != PlantKind::Linear)
    throw ConfigError("plant", "theory-report requires the linear plant (control must enter additively)");
  validate(c);
  const auto plant_ptr = make_plant(c);
  const auto& plant = static_cast<const LinearAdditivePlant&>(*plant_ptr);
  const Eigen::VectorXd x0 = initial_state(c);
  const auto problem = theory::QpProblem::from_plant(plant, x0, plant.output_reference(c.mpc.dt), c.mpc.nu);
  const auto qp = theory::qp_solve(problem);

  const double eps = c.theory_eps;
  const double diam = plant.box().diameter();
  const std::size_t d = plant.control_dim();
  const double r_eps = theory::r_epsilon(eps, qp.lambda_min_A, qp.lambda_max_A, qp.eta_norm_sum());
  const double log_delta = theory::log_delta_r_bound(r_eps, c.cbo.sigma, c.cbo.tau, d, diam);

  auto rng = sampler_stream(c.cbo.seed);
  const Eigen::MatrixXd f0 = make_sampler(c, plant)(c.cbo.n_agents, rng);
  const double v0 = theory::v_star(f0, qp.u_star);

  const double a0n = theory::alpha0_n_log(eps, qp.lambda_min_A, log_delta, v0, c.cbo.sigma, c.cbo.lambda, c.cbo.tau);
  const double a0 = theory::alpha0_log(eps, qp.lambda_min_A, log_delta, diam, c.cbo.sigma, c.cbo.lambda, c.cbo.tau);
  const std::size_t kmin = theory::kbar_min(eps, c.cbo.lambda, c.cbo.tau, diam);

  json report{{"eps", eps},
              {"u_star", to_json(qp.u_star)},
              {"eta1", to_json(qp.eta1)},
              {"eta2", to_json(qp.eta2)},
              {"eta1_norm", qp.eta1.norm()},
              {"eta2_norm", qp.eta2.norm()},
              {"lambda_min_A", qp.lambda_min_A},
              {"lambda_max_A", qp.lambda_max_A},
              {"diam_U", diam},
              {"R_eps", r_eps},
              {"log_delta_R", log_delta},
              {"delta_R", std::exp(log_delta)},
              {"v_star_initial", v0},
              {"alpha0_n", a0n},
              {"alpha0", a0},
              {"kbar_min", kmin},
              {"v_limit", theory::vdecay_limit(eps, c.cbo.lambda, c.cbo.tau, c.cbo.sigma)},
              {"alpha", c.cbo.alpha},
              {"k_bar", c.cbo.k_bar},
              {"alpha_exceeds_alpha0", c.cbo.alpha >= a0},
              {"k_bar_exceeds_kbar_min", c.cbo.k_bar >= kmin},
              {"config", to_json(c)}};
  return report;
}

inline std::filesystem::path write_theory_report(const ExperimentConfig& c) {
  const json report = theory_report(c);
  const std::filesystem::path dir(c.output_dir);
  std::filesystem::create_directories(dir);
  const auto path = dir / "theory_report.json";
  write_json(path.string(), report);
  return path;
}

}  // namespace cbompc::harness
