#pragma once

// Exact sub-problem solver and convergence-bound calculators for plants with
// linear additive control and a one-move horizon. There each sub-problem is
// the box-constrained convex QP
//
//   min_{u in U}  L(u) = |Phi_s(x) + F_c u - x_ref|^2 + nu |u|^2,
//
// with Hessian 2A, A = F_c^T F_c + nu I.

#include <cbompc/box.hpp>
#include <cbompc/linear_plant.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <algorithm>
#include <limits>
#include <numbers>
#include <tuple>
#include <stdexcept>
#include <vector>

namespace cbompc::theory {

struct QpProblem {
  Eigen::MatrixXd f_c;
  Eigen::VectorXd misfit;  // Phi_s(x) - x_ref
  double nu = 0.0;
  ControlBox box;

  static QpProblem from_plant(const LinearAdditivePlant& plant, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& x_ref_next, double nu) {
    return {plant.f_c(), plant.phi_s(x) - x_ref_next, nu, plant.box()};
  }

  std::size_t dim() const noexcept { return box.dim(); }
  Eigen::MatrixXd hessian_half() const {
    return f_c.transpose() * f_c + nu * Eigen::MatrixXd::Identity(f_c.cols(), f_c.cols());
  }
  double loss(const Eigen::VectorXd& u) const { return (misfit + f_c * u).squaredNorm() + nu * u.squaredNorm(); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& u) const {
    return 2.0 * hessian_half() * u + 2.0 * f_c.transpose() * misfit;
  }
};

/// Minimizer with box multipliers. eta1 belongs to u <= u_max, eta2 to
/// u_min <= u; stationarity reads grad L(u*) + eta1 - eta2 = 0.
struct QpSolution {
  Eigen::VectorXd u_star;
  Eigen::VectorXd eta1;
  Eigen::VectorXd eta2;
  double lambda_min_A = 0.0;
  double lambda_max_A = 0.0;

  double eta_norm_sum() const { return eta1.norm() + eta2.norm(); }
};

struct KktReport {
  double stationarity = 0.0;   // |grad L + eta1 - eta2|_inf
  double slackness = 0.0;      // max_i |eta1_i (u_i - u_max_i)|, |eta2_i (u_min_i - u_i)|
  double activity = 0.0;       // max_i eta1_i * eta2_i
  double feasibility = 0.0;    // max bound violation
  double dual_sign = 0.0;      // most negative multiplier, as a positive number
};

inline KktReport kkt_report(const QpProblem& problem, const QpSolution& s) {
  const Eigen::VectorXd r = problem.gradient(s.u_star) + s.eta1 - s.eta2;
  KktReport k;
  k.stationarity = r.lpNorm<Eigen::Infinity>();
  const auto& lo = problem.box.lower();
  const auto& hi = problem.box.upper();
  for (Eigen::Index i = 0; i < s.u_star.size(); ++i) {
    k.slackness = std::max({k.slackness, std::abs(s.eta1[i] * (s.u_star[i] - hi[i])),
                            std::abs(s.eta2[i] * (lo[i] - s.u_star[i]))});
    k.activity = std::max(k.activity, s.eta1[i] * s.eta2[i]);
    k.feasibility = std::max({k.feasibility, s.u_star[i] - hi[i], lo[i] - s.u_star[i]});
    k.dual_sign = std::max({k.dual_sign, -s.eta1[i], -s.eta2[i]});
  }
  return k;
}

/// Smallest and largest eigenvalue of a symmetric matrix.
inline std::pair<double, double> symmetric_extreme_eigenvalues(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigenvalue computation failed");
  return {solver.eigenvalues().minCoeff(), solver.eigenvalues().maxCoeff()};
}

namespace detail {

inline void recover_multipliers(const QpProblem& problem, QpSolution& s) {
  const Eigen::VectorXd g = problem.gradient(s.u_star);
  const auto n = s.u_star.size();
  s.eta1 = Eigen::VectorXd::Zero(n);
  s.eta2 = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (s.u_star[i] == problem.box.upper()[i]) s.eta1[i] = std::max(-g[i], 0.0);
    else if (s.u_star[i] == problem.box.lower()[i]) s.eta2[i] = std::max(g[i], 0.0);
  }
}

// Enumerates the 3^d free/lower/upper patterns. Each pattern fixes its bound
// components and solves the free block of A u = b; the feasible candidate of
// least loss is the constrained minimizer.
inline Eigen::VectorXd solve_by_enumeration(const QpProblem& problem, const Eigen::MatrixXd& a,
                                            const Eigen::VectorXd& b) {
  const auto d = static_cast<Eigen::Index>(problem.dim());
  std::uint64_t patterns = 1;
  for (Eigen::Index i = 0; i < d; ++i) patterns *= 3;

  Eigen::VectorXd best;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<int> state(static_cast<std::size_t>(d));
  for (std::uint64_t code = 0; code < patterns; ++code) {
    std::uint64_t c = code;
    std::vector<Eigen::Index> free;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i, c /= 3) {
      state[static_cast<std::size_t>(i)] = static_cast<int>(c % 3);
      if (c % 3 == 0) free.push_back(i);
      else u[i] = (c % 3 == 1) ? problem.box.lower()[i] : problem.box.upper()[i];
    }
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd aff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (Eigen::Index r = 0; r < nf; ++r) {
        rhs[r] = b[free[r]];
        for (Eigen::Index j = 0; j < d; ++j)
          if (state[static_cast<std::size_t>(j)] != 0) rhs[r] -= a(free[r], j) * u[j];
        for (Eigen::Index q = 0; q < nf; ++q) aff(r, q) = a(free[r], free[q]);
      }
      const Eigen::VectorXd uf = aff.llt().solve(rhs);
      for (Eigen::Index r = 0; r < nf; ++r) u[free[r]] = uf[r];
    }
    if (!problem.box.contains(u)) continue;
    const double l = problem.loss(u);
    if (l < best_loss) {
      best_loss = l;
      best = u;
    }
  }
  return best;
}

// Projected gradient with step 1/(2 lambda_max) until the iterate stalls.
inline Eigen::VectorXd solve_by_projected_gradient(const QpProblem& problem, double lambda_max) {
  Eigen::VectorXd u = problem.box.project(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.dim())));
  const double step = 0.5 / lambda_max;
  for (int it = 0; it < 1000000; ++it) {
    Eigen::VectorXd next = problem.box.project(u - step * problem.gradient(u));
    const double change = (next - u).lpNorm<Eigen::Infinity>();
    u = std::move(next);
    if (change <= 1e-15 * std::max(1.0, u.lpNorm<Eigen::Infinity>())) break;
  }
  return u;
}

}  // namespace detail

inline constexpr std::size_t kEnumerationMaxDim = 10;

inline QpSolution qp_solve(const QpProblem& problem) {
  if (!(problem.nu > 0.0)) throw std::invalid_argument("qp_solve: nu must be positive");
  if (static_cast<std::size_t>(problem.f_c.cols()) != problem.dim() || problem.misfit.size() != problem.f_c.rows())
    throw std::invalid_argument("qp_solve: dimension mismatch");

  const Eigen::MatrixXd a = problem.hessian_half();
  const Eigen::VectorXd b = -problem.f_c.transpose() * problem.misfit;
  QpSolution s;
  std::tie(s.lambda_min_A, s.lambda_max_A) = symmetric_extreme_eigenvalues(a);
  s.u_star = problem.dim() <= kEnumerationMaxDim ? detail::solve_by_enumeration(problem, a, b)
                                                 : detail::solve_by_projected_gradient(problem, s.lambda_max_A);
  detail::recover_multipliers(problem, s);
  return s;
}

inline QpSolution qp_solve(const LinearAdditivePlant& plant, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& x_ref_next, double nu) {
  return qp_solve(QpProblem::from_plant(plant, x, x_ref_next, nu));
}

struct GrowthGaps {
  double lower_gap;  // L(u) - L(u*) - lambda_min |u - u*|^2
  double upper_gap;  // (|eta1| + |eta2|)|u - u*| + lambda_max |u - u*|^2 - (L(u) - L(u*))
};

inline GrowthGaps growth_check(const QpSolution& qp, const QpProblem& problem, const Eigen::VectorXd& u) {
  const double r = (u - qp.u_star).norm();
  const double rise = problem.loss(u) - problem.loss(qp.u_star);
  return {rise - qp.lambda_min_A * r * r, qp.eta_norm_sum() * r + qp.lambda_max_A * r * r - rise};
}

/// Empirical V*: mean Euclidean distance of the agents to u*.
inline double v_star(const Eigen::MatrixXd& positions, const Eigen::VectorXd& u_star) {
  if (positions.cols() == 0) throw std::invalid_argument("v_star: empty sample");
  return (positions.colwise() - u_star).colwise().norm().mean();
}

/// Fraction of agents within distance r of u*.
inline double mass_estimate(const Eigen::MatrixXd& positions, const Eigen::VectorXd& u_star, double r) {
  if (positions.cols() == 0) throw std::invalid_argument("mass_estimate: empty sample");
  const auto dist = (positions.colwise() - u_star).colwise().norm();
  return static_cast<double>((dist.array() <= r).count()) / static_cast<double>(positions.cols());
}

/// Radius R_eps = min{eps^2 lambda_min / (8 (lambda_max + |eta1| + |eta2|)), 1}.
inline double r_epsilon(double eps, double lambda_min_A, double lambda_max_A, double eta_norm_sum) {
  return std::min(eps * eps * lambda_min_A / (8.0 * (lambda_max_A + eta_norm_sum)), 1.0);
}

/// eps/2 + exp(-alpha lambda_min (eps/4)^2) / mass * V*.
inline double laplace_bound(double eps, double alpha, double lambda_min_A, double mass_at_r, double v_star) {
  if (!(mass_at_r > 0.0)) throw std::invalid_argument("laplace_bound: mass must be positive");
  const double q = eps / 4.0;
  return eps / 2.0 + std::exp(-alpha * lambda_min_A * q * q) / mass_at_r * v_star;
}

/// log of the Lebesgue measure of the d-ball of radius rho.
inline double log_ball_volume(std::size_t d, double rho) {
  const double dd = static_cast<double>(d);
  return 0.5 * dd * std::log(std::numbers::pi) - std::lgamma(0.5 * dd + 1.0) + dd * std::log(rho);
}

/// log of delta_{r,1} = exp(-diam^2/2) / sqrt(2 pi d) * Leb^d(B_{r/(sigma sqrt(tau))}).
/// The sqrt(2 pi d) prefactor is kept as printed. Returns -inf for r = 0.
inline double log_delta_r_bound(double r, double sigma, double tau, std::size_t d, double diam) {
  if (d == 0) throw std::invalid_argument("delta_r_bound: d must be >= 1");
  if (!(sigma > 0.0) || !(tau > 0.0)) throw std::invalid_argument("delta_r_bound: sigma, tau must be positive");
  if (r < 0.0) throw std::invalid_argument("delta_r_bound: r must be >= 0");
  if (r == 0.0) return -std::numeric_limits<double>::infinity();
  return -0.5 * diam * diam - 0.5 * std::log(2.0 * std::numbers::pi * static_cast<double>(d)) +
         log_ball_volume(d, r / (sigma * std::sqrt(tau)));
}

inline double delta_r_bound(double r, double sigma, double tau, std::size_t d, double diam) {
  return std::exp(log_delta_r_bound(r, sigma, tau, d, diam));
}

/// e^{-lambda k tau} v0 + (B + sigma / (lambda sqrt(tau))) (1 - e^{-lambda k tau}).
inline double vdecay_bound(double v0, double bound_b, double lambda, double tau, std::size_t k_bar, double sigma) {
  const double decay = std::exp(-lambda * static_cast<double>(k_bar) * tau);
  return decay * v0 + (bound_b + sigma / (lambda * std::sqrt(tau))) * (1.0 - decay);
}

inline double vdecay_limit(double bound_b, double lambda, double tau, double sigma) {
  return bound_b + sigma / (lambda * std::sqrt(tau));
}

/// 16/(eps^2 lambda_min) * log(2/(eps delta_R) * spread), with delta_R passed as its log.
inline double alpha_threshold_log(double eps, double lambda_min_A, double log_delta_R, double spread) {
  return 16.0 / (eps * eps * lambda_min_A) * (std::log(2.0 / eps) - log_delta_R + std::log(spread));
}

/// Uniform threshold, spread = diam(U) + eps + sigma/(lambda sqrt(tau)).
inline double alpha0_log(double eps, double lambda_min_A, double log_delta_R, double diam, double sigma,
                         double lambda, double tau) {
  return alpha_threshold_log(eps, lambda_min_A, log_delta_R, diam + eps + sigma / (lambda * std::sqrt(tau)));
}

inline double alpha0(double eps, double lambda_min_A, double delta_R, double diam, double sigma, double lambda,
                     double tau) {
  return alpha0_log(eps, lambda_min_A, std::log(delta_R), diam, sigma, lambda, tau);
}

/// Per-problem threshold, spread = max{V*[f_0], eps + sigma/(lambda sqrt(tau))}.
inline double alpha0_n_log(double eps, double lambda_min_A, double log_delta_R, double v0, double sigma,
                           double lambda, double tau) {
  return alpha_threshold_log(eps, lambda_min_A, log_delta_R, std::max(v0, eps + sigma / (lambda * std::sqrt(tau))));
}

inline double alpha0_n(double eps, double lambda_min_A, double delta_R, double v0, double sigma, double lambda,
                       double tau) {
  return alpha0_n_log(eps, lambda_min_A, std::log(delta_R), v0, sigma, lambda, tau);
}

/// ceil((1/(lambda tau)) log(diam/eps)), clamped at 0 when eps >= diam.
inline std::size_t kbar_min(double eps, double lambda, double tau, double diam) {
  if (!(eps > 0.0) || !(diam > 0.0)) throw std::invalid_argument("kbar_min: eps and diam must be positive");
  const double k = std::log(diam / eps) / (lambda * tau);
  return k <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(k));
}

}  // namespace cbompc::theory
