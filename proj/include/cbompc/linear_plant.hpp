#pragma once

#include <cbompc/plant.hpp>

#include <functional>
#include <stdexcept>

namespace cbompc {

/// Plant with control entering linearly: Phi(x, u) = Phi_s(x) + F_c u.
/// The tracked output is the full state; the control reference is zero.
class LinearAdditivePlant final : public Plant {
 public:
  using StateMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  /// Affine state map Phi_s(x) = A_s x + b_s.
  LinearAdditivePlant(Eigen::MatrixXd a_s, Eigen::VectorXd b_s, Eigen::MatrixXd f_c, ControlBox box,
                      PiecewiseConstant reference)
      : state_dim_(static_cast<std::size_t>(a_s.rows())),
        f_c_(std::move(f_c)),
        box_(std::move(box)),
        reference_(std::move(reference)),
        a_s_(std::move(a_s)),
        b_s_(std::move(b_s)) {
    if (a_s_.rows() != a_s_.cols() || b_s_.size() != a_s_.rows())
      throw std::invalid_argument("LinearAdditivePlant: A_s must be square and match b_s");
    check();
  }

  /// Arbitrary (possibly nonlinear) state map.
  LinearAdditivePlant(std::size_t state_dim, StateMap phi_s, Eigen::MatrixXd f_c, ControlBox box,
                      PiecewiseConstant reference)
      : state_dim_(state_dim),
        f_c_(std::move(f_c)),
        box_(std::move(box)),
        reference_(std::move(reference)),
        phi_s_(std::move(phi_s)) {
    if (!phi_s_) throw std::invalid_argument("LinearAdditivePlant: empty state map");
    check();
  }

  std::size_t state_dim() const override { return state_dim_; }
  std::size_t control_dim() const override { return static_cast<std::size_t>(f_c_.cols()); }
  const ControlBox& box() const override { return box_; }

  Eigen::VectorXd phi_s(const Eigen::VectorXd& x) const {
    if (phi_s_) return phi_s_(x);
    return a_s_ * x + b_s_;
  }
  const Eigen::MatrixXd& f_c() const noexcept { return f_c_; }
  bool is_affine() const noexcept { return !phi_s_; }
  const Eigen::MatrixXd& a_s() const noexcept { return a_s_; }
  const Eigen::VectorXd& b_s() const noexcept { return b_s_; }
  const PiecewiseConstant& reference() const noexcept { return reference_; }

  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u, double) const override {
    if (static_cast<std::size_t>(x.size()) != state_dim_ || u.size() != f_c_.cols())
      throw std::invalid_argument("LinearAdditivePlant::step: dimension mismatch");
    return phi_s(x) + f_c_ * u;
  }

  Eigen::VectorXd tracked_output(const Eigen::VectorXd& x) const override { return x; }
  Eigen::VectorXd output_reference(double t) const override { return reference_(t); }
  Eigen::VectorXd control_reference(double) const override {
    return Eigen::VectorXd::Zero(f_c_.cols());
  }

 private:
  void check() const {
    if (state_dim_ == 0) throw std::invalid_argument("LinearAdditivePlant: empty state");
    if (static_cast<std::size_t>(f_c_.rows()) != state_dim_ || f_c_.cols() == 0)
      throw std::invalid_argument("LinearAdditivePlant: F_c must be state_dim x control_dim");
    if (box_.dim() != static_cast<std::size_t>(f_c_.cols()))
      throw std::invalid_argument("LinearAdditivePlant: box dimension must equal control_dim");
    if (reference_.dim() != state_dim_)
      throw std::invalid_argument("LinearAdditivePlant: reference dimension must equal state_dim");
  }

  std::size_t state_dim_;
  Eigen::MatrixXd f_c_;
  ControlBox box_;
  PiecewiseConstant reference_;
  Eigen::MatrixXd a_s_;
  Eigen::VectorXd b_s_;
  StateMap phi_s_;
};

inline Eigen::VectorXd linear_step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                   const LinearAdditivePlant& plant) {
  return plant.step(x, u, 0.0);
}

}  // namespace cbompc
