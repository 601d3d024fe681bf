#pragma once

#include <cbompc/box.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cbompc {

/// Right-continuous piecewise-constant signal: value k holds on
/// [times[k], times[k+1]); the first value also covers t < times[0] and the
/// last one is held indefinitely.
class PiecewiseConstant {
 public:
  PiecewiseConstant() = default;

  explicit PiecewiseConstant(Eigen::VectorXd value) : times_{0.0}, values_{std::move(value)} {}

  PiecewiseConstant(std::vector<double> times, std::vector<Eigen::VectorXd> values)
      : times_(std::move(times)), values_(std::move(values)) {
    if (times_.empty() || times_.size() != values_.size())
      throw std::invalid_argument("PiecewiseConstant: need one value per breakpoint");
    for (std::size_t k = 1; k < times_.size(); ++k)
      if (!(times_[k] > times_[k - 1]))
        throw std::invalid_argument("PiecewiseConstant: breakpoints must be strictly increasing");
    for (const auto& v : values_)
      if (v.size() != values_.front().size())
        throw std::invalid_argument("PiecewiseConstant: values must share one dimension");
  }

  const Eigen::VectorXd& operator()(double t) const {
    if (values_.empty()) throw std::logic_error("PiecewiseConstant: empty signal");
    std::size_t k = 0;
    // Sample times come from n*dt; allow for the rounding of that product.
    while (k + 1 < times_.size() && t >= times_[k + 1] - 1e-9 * std::max(1.0, std::abs(times_[k + 1])))
      ++k;
    return values_[k];
  }

  std::size_t dim() const noexcept {
    return values_.empty() ? 0 : static_cast<std::size_t>(values_.front().size());
  }
  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<Eigen::VectorXd>& values() const noexcept { return values_; }

 private:
  std::vector<double> times_;
  std::vector<Eigen::VectorXd> values_;
};

/// Discrete-time plant x_{n+1} = Phi(x_n, u_n) with an admissible control box,
/// a tracked output y = h(x) and reference signals for y and u.
///
/// Implementations are immutable after construction and step() is pure, so a
/// plant may be shared by concurrent rollouts.
class Plant {
 public:
  virtual ~Plant() = default;

  virtual std::size_t state_dim() const = 0;
  virtual std::size_t control_dim() const = 0;
  virtual const ControlBox& box() const = 0;

  /// One sampling period from time t.
  virtual Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u, double t) const = 0;

  virtual Eigen::VectorXd tracked_output(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd output_reference(double t) const = 0;
  virtual Eigen::VectorXd control_reference(double t) const = 0;
};

}  // namespace cbompc
