#pragma once

#include <Eigen/Dense>

namespace knockint {

// A twice-differentiable scalar function of a fixed-length input vector.
// Attribution measures are written against this interface so they apply to
// the trained network and to closed-form test functions alike.
class ScalarField {
 public:
  virtual ~ScalarField() = default;
  virtual Eigen::Index dim() const = 0;
  virtual double value(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const = 0;
};

}  // namespace knockint
