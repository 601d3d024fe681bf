#pragma once

#include <cbompc/errors.hpp>
#include <cbompc/plant.hpp>

#include <cmath>
#include <cstddef>
#include <string>

namespace cbompc {

/// CSTR constants. Units: minutes, mol/l, K, l/min.
struct CstrParams {
  double q = 100.0;         // process flow rate
  double V = 100.0;         // reactor volume
  double C_f = 1.0;         // feed concentration
  double T_0 = 350.0;       // feed temperature
  double T_C0 = 350.0;      // inlet coolant temperature
  double hA = 7e5;          // heat transfer term
  double k_0 = 7.2e10;      // reaction rate
  double E_over_R = 1e4;    // activation energy / gas constant
  double dH = -2e5;         // heat of reaction (exothermic)
  double rho = 1e3;         // liquid density
  double rho_c = 1e3;       // coolant density
  double c_p = 1.0;         // specific heat
  double c_pc = 1.0;        // coolant specific heat
};

struct CstrState {
  double C = 0.0;
  double T = 0.0;
};

struct CstrDerivative {
  double dC = 0.0;
  double dT = 0.0;
};

inline CstrDerivative cstr_rhs(double C, double T, double q_c, const CstrParams& p) {
  if (!(q_c > 0.0)) throw DomainError("cstr_rhs: coolant flow q_c must be positive");
  if (!(T > 0.0)) throw DomainError("cstr_rhs: temperature must be positive");
  const double dilution = p.q / p.V;
  const double reaction = p.k_0 * C * std::exp(-p.E_over_R / T);
  const double cooling = p.rho_c * p.c_pc * q_c / (p.rho * p.c_p * p.V) *
                         (1.0 - std::exp(-p.hA / (q_c * p.rho_c * p.c_pc)));
  return {dilution * (p.C_f - C) - reaction,
          dilution * (p.T_0 - T) - p.dH / (p.rho * p.c_p) * reaction + cooling * (p.T_C0 - T)};
}

/// `substeps` explicit-Euler steps of size h with q_c held constant.
inline CstrState cstr_integrate(CstrState s, double q_c, const CstrParams& p, double h,
                                std::size_t substeps) {
  for (std::size_t k = 0; k < substeps; ++k) {
    const auto d = cstr_rhs(s.C, s.T, q_c, p);
    s.C += h * d.dC;
    s.T += h * d.dT;
    if (!std::isfinite(s.C) || !std::isfinite(s.T))
      throw IntegrationError(k, "cstr: non-finite state");
  }
  return s;
}

/// Number of Euler sub-steps covering dt; dt must be an integer multiple of substep.
inline std::size_t cstr_substeps(double dt, double substep) {
  if (!(dt > 0.0) || !(substep > 0.0)) throw std::invalid_argument("cstr: dt and substep must be positive");
  const double ratio = dt / substep;
  const double count = std::round(ratio);
  if (count < 1.0 || std::abs(ratio - count) > 1e-9 * ratio)
    throw std::invalid_argument("cstr: dt must be an integer multiple of substep");
  return static_cast<std::size_t>(count);
}

/// Zero-order-hold transition over one sampling period dt.
inline CstrState cstr_step(CstrState s, double q_c, const CstrParams& p, double substep, double dt) {
  return cstr_integrate(s, q_c, p, substep, cstr_substeps(dt, substep));
}

/// CSTR as a plant: state (C, T), control q_c, tracked output C.
class CstrPlant final : public Plant {
 public:
  struct Options {
    CstrParams params{};
    double substep = 1e-3;
    double dt = 0.05;
    double q_c_min = 20.0;
    double q_c_max = 200.0;
    PiecewiseConstant c_ref{{0.0, 3.0}, {Eigen::VectorXd::Constant(1, 0.1), Eigen::VectorXd::Constant(1, 0.12)}};
    PiecewiseConstant q_c_ref{{0.0, 3.0},
                              {Eigen::VectorXd::Constant(1, 103.411), Eigen::VectorXd::Constant(1, 108.1)}};
  };

  CstrPlant() : CstrPlant(Options{}) {}

  explicit CstrPlant(Options options)
      : options_(std::move(options)),
        substeps_(cstr_substeps(options_.dt, options_.substep)),
        box_(Eigen::VectorXd::Constant(1, options_.q_c_min), Eigen::VectorXd::Constant(1, options_.q_c_max)) {
    if (!(options_.q_c_min > 0.0)) throw std::invalid_argument("CstrPlant: q_c bounds must be positive");
    if (options_.c_ref.dim() != 1 || options_.q_c_ref.dim() != 1)
      throw std::invalid_argument("CstrPlant: references must be scalar");
  }

  const Options& options() const noexcept { return options_; }
  const CstrParams& params() const noexcept { return options_.params; }
  std::size_t substeps() const noexcept { return substeps_; }

  std::size_t state_dim() const override { return 2; }
  std::size_t control_dim() const override { return 1; }
  const ControlBox& box() const override { return box_; }

  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u, double) const override {
    if (x.size() != 2 || u.size() != 1) throw std::invalid_argument("CstrPlant::step: dimension mismatch");
    const auto s = cstr_integrate({x[0], x[1]}, u[0], options_.params, options_.substep, substeps_);
    return Eigen::Vector2d(s.C, s.T);
  }

  Eigen::VectorXd tracked_output(const Eigen::VectorXd& x) const override { return x.head(1); }
  Eigen::VectorXd output_reference(double t) const override { return options_.c_ref(t); }
  Eigen::VectorXd control_reference(double t) const override { return options_.q_c_ref(t); }

 private:
  Options options_;
  std::size_t substeps_;
  ControlBox box_;
};

}  // namespace cbompc
