#pragma once

// Second-order Gaussian knockoffs: a fitted Gaussian surrogate of the
// feature matrix plus conditional sampling that matches first and second
// moments of the (X, knockoff) joint. Also the deliberately invalid
// per-column permutation knockoffs and the exchangeability diagnostics.

#include <cstdint>

#include <Eigen/Dense>

namespace knockint::knockoffs {

struct KnockoffModel {
  Eigen::VectorXd mu;                     // column means
  Eigen::MatrixXd sigma;                  // shrunk covariance, SPD
  Eigen::VectorXd s;                      // equicorrelated s on covariance scale
  Eigen::MatrixXd conditional_cov_factor; // A with A A^T = 2 diag(s) - diag(s) Sigma^-1 diag(s)
  Eigen::MatrixXd mean_shift;             // Sigma^-1 diag(s), cached for sampling
};

// Fits column means plus a shrunk covariance (1-l)*S + l*diag(S) and the
// equicorrelated s-vector: s = min(2 eigmin(correlation), 1) rescaled to the
// covariance scale, backed off multiplicatively until the conditional
// covariance is PSD to 1e-10.
KnockoffModel fit_gaussian(const Eigen::MatrixXd& X, double shrinkage);

// One knockoff row per input row, sampled from the conditional Gaussian
// centered at mu + (I - Sigma^-1 diag(s))^T (x - mu). Deterministic per seed.
Eigen::MatrixXd sample_knockoffs(const KnockoffModel& model, const Eigen::MatrixXd& X,
                                 std::uint64_t seed);

// Invalid knockoffs: independently permutes each column (marginals kept,
// joint structure destroyed).
Eigen::MatrixXd permutation_knockoffs(const Eigen::MatrixXd& X, std::uint64_t seed);

struct DiagnosticsReport {
  double mean_gap = 0.0;       // max_j |mean(X_j) - mean(Xk_j)|
  double cov_gap = 0.0;        // max_ij |cov(X) - cov(Xk)|
  double cross_cov_gap = 0.0;  // max_{i != j} |crosscov(X, Xk) - cov(X)|
};

DiagnosticsReport diagnostics(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X_tilde);

// Sample covariance with the 1/(n-1) convention.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& X);

}  // namespace knockint::knockoffs
