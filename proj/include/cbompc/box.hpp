#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>

namespace cbompc {

/// Componentwise box {u : lower <= u <= upper}, lower < upper strictly.
class ControlBox {
 public:
  ControlBox(Eigen::VectorXd lower, Eigen::VectorXd upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() == 0 || lower_.size() != upper_.size())
      throw std::invalid_argument("ControlBox: bounds must be non-empty and of equal length");
    if (!lower_.allFinite() || !upper_.allFinite())
      throw std::invalid_argument("ControlBox: bounds must be finite");
    if ((lower_.array() >= upper_.array()).any())
      throw std::invalid_argument("ControlBox: lower < upper required componentwise");
  }

  static ControlBox uniform(std::size_t dim, double lower, double upper) {
    const auto n = static_cast<Eigen::Index>(dim);
    return ControlBox(Eigen::VectorXd::Constant(n, lower), Eigen::VectorXd::Constant(n, upper));
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(lower_.size()); }
  const Eigen::VectorXd& lower() const noexcept { return lower_; }
  const Eigen::VectorXd& upper() const noexcept { return upper_; }

  /// Euclidean diameter |upper - lower|.
  double diameter() const { return (upper_ - lower_).norm(); }

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    return v.size() == lower_.size() && (v.array() >= lower_.array()).all() &&
           (v.array() <= upper_.array()).all();
  }

  /// Box over a horizon of `horizon` stacked control moves.
  ControlBox replicate(std::size_t horizon) const {
    if (horizon == 0) throw std::invalid_argument("ControlBox::replicate: horizon must be >= 1");
    const auto h = static_cast<Eigen::Index>(horizon);
    return ControlBox(lower_.replicate(h, 1), upper_.replicate(h, 1));
  }

  Eigen::VectorXd project(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    if (v.size() != lower_.size())
      throw std::invalid_argument("ControlBox::project: dimension mismatch");
    return v.cwiseMax(lower_).cwiseMin(upper_);
  }

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

/// Euclidean projection onto the box (componentwise clamp).
inline Eigen::VectorXd project_box(const Eigen::Ref<const Eigen::VectorXd>& v,
                                   const ControlBox& box) {
  return box.project(v);
}

}  // namespace cbompc
