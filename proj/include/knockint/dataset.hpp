#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace knockint {

enum class Task { regression, binary };

struct Dataset {
  Eigen::MatrixXd X;  // n x p
  Eigen::VectorXd y;  // n
  std::vector<std::string> feature_names;
  std::string response_name = "y";

  Eigen::Index n_samples() const { return X.rows(); }
  Eigen::Index n_features() const { return X.cols(); }
};

// Original features in columns 0..p-1, knockoffs in p..2p-1.
struct AugmentedDataset {
  Eigen::MatrixXd columns;  // n x 2p
  Eigen::VectorXd response;

  Eigen::Index n_samples() const { return columns.rows(); }
  Eigen::Index p() const { return columns.cols() / 2; }

  // Involution pairing each column with its counterpart.
  Eigen::Index knockoff_of(Eigen::Index j) const {
    const Eigen::Index half = p();
    return j < half ? j + half : j - half;
  }
};

inline AugmentedDataset augment(const Dataset& data, const Eigen::MatrixXd& knockoffs) {
  if (knockoffs.rows() != data.X.rows() || knockoffs.cols() != data.X.cols())
    throw std::invalid_argument("augment: knockoff matrix shape must match the feature matrix");
  AugmentedDataset aug;
  aug.columns.resize(data.X.rows(), 2 * data.X.cols());
  aug.columns << data.X, knockoffs;
  aug.response = data.y;
  return aug;
}

}  // namespace knockint
