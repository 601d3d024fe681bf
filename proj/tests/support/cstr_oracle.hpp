#pragma once

// Adaptive high-order reference integration of the CSTR equations, used only
// to check the fixed-step Euler path.

#include <cbompc/cstr.hpp>

#include <boost/numeric/odeint.hpp>

#include <array>

namespace testing_support {

inline cbompc::CstrState cstr_reference(cbompc::CstrState s, double q_c, const cbompc::CstrParams& p,
                                        double duration, double tol = 1e-13) {
  namespace ode = boost::numeric::odeint;
  using State = std::array<double, 2>;
  State y{s.C, s.T};
  auto rhs = [&](const State& x, State& dx, double) {
    const auto d = cbompc::cstr_rhs(x[0], x[1], q_c, p);
    dx[0] = d.dC;
    dx[1] = d.dT;
  };
  auto stepper = ode::make_controlled(tol, tol, ode::runge_kutta_fehlberg78<State>());
  ode::integrate_adaptive(stepper, rhs, y, 0.0, duration, duration / 100.0);
  return {y[0], y[1]};
}

}  // namespace testing_support
