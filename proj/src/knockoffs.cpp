#include "knockint/knockoffs.hpp"

#include <stdexcept>
#include <string>

#include "knockint/rng.hpp"

namespace knockint::knockoffs {

namespace {

constexpr double kPsdTolerance = 1e-10;

Eigen::MatrixXd conditional_covariance(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& s) {
  // 2 diag(s) - diag(s) Sigma^-1 diag(s), symmetrized against solver noise.
  const Eigen::MatrixXd sinv_ds = sigma.ldlt().solve(Eigen::MatrixXd(s.asDiagonal()));
  Eigen::MatrixXd v = -(s.asDiagonal() * sinv_ds);
  v.diagonal() += 2.0 * s;
  return 0.5 * (v + Eigen::MatrixXd(v.transpose()));
}

}  // namespace

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& X) {
  if (X.rows() < 2) throw std::invalid_argument("sample_covariance: need at least 2 rows");
  const Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(X.rows() - 1);
}

KnockoffModel fit_gaussian(const Eigen::MatrixXd& X, double shrinkage) {
  if (X.rows() < 2) throw std::invalid_argument("fit_gaussian: need at least 2 rows");
  if (!X.allFinite()) throw std::invalid_argument("fit_gaussian: non-finite entries in X");
  if (shrinkage < 0.0 || shrinkage > 1.0)
    throw std::invalid_argument("fit_gaussian: shrinkage must lie in [0, 1]");

  KnockoffModel model;
  model.mu = X.colwise().mean();

  const Eigen::MatrixXd sample = sample_covariance(X);
  model.sigma = (1.0 - shrinkage) * sample;
  model.sigma.diagonal() = sample.diagonal();

  const Eigen::VectorXd d = model.sigma.diagonal();
  for (Eigen::Index j = 0; j < d.size(); ++j)
    if (d[j] <= 0.0)
      throw std::runtime_error("fit_gaussian: column " + std::to_string(j + 1) +
                               " has zero variance (singular covariance)");

  const Eigen::VectorXd dinv_sqrt = d.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd corr = dinv_sqrt.asDiagonal() * model.sigma * dinv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> corr_eig(corr);
  const double lambda_min = corr_eig.eigenvalues().minCoeff();
  if (lambda_min <= 1e-12)
    throw std::runtime_error(
        "fit_gaussian: covariance is rank deficient after shrinkage; increase the shrinkage "
        "parameter");

  // Equicorrelated rule on the correlation scale, rescaled per column.
  double s_corr = std::min(2.0 * lambda_min, 1.0);
  for (int attempt = 0; attempt < 400; ++attempt) {
    model.s = s_corr * d;
    const Eigen::MatrixXd v = conditional_covariance(model.sigma, model.s);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> v_eig(v);
    if (v_eig.eigenvalues().minCoeff() >= -kPsdTolerance) {
      Eigen::VectorXd clamped = v_eig.eigenvalues().cwiseMax(0.0);
      model.conditional_cov_factor =
          v_eig.eigenvectors() * clamped.cwiseSqrt().asDiagonal();
      model.mean_shift = model.sigma.ldlt().solve(Eigen::MatrixXd(model.s.asDiagonal()));
      return model;
    }
    s_corr *= 0.98;
  }
  throw std::runtime_error("fit_gaussian: could not reach a PSD conditional covariance");
}

Eigen::MatrixXd sample_knockoffs(const KnockoffModel& model, const Eigen::MatrixXd& X,
                                 std::uint64_t seed) {
  const Eigen::Index p = model.mu.size();
  if (X.cols() != p) throw std::invalid_argument("sample_knockoffs: dimension mismatch");

  const Eigen::MatrixXd centered = X.rowwise() - model.mu.transpose();
  Eigen::MatrixXd means = X - centered * model.mean_shift;

  Eigen::MatrixXd z(X.rows(), p);
  const Rng base(seed);
  for (Eigen::Index j = 0; j < p; ++j) {
    Rng col = base.substream(static_cast<std::uint64_t>(j));
    for (Eigen::Index i = 0; i < X.rows(); ++i) z(i, j) = col.normal();
  }
  return means + z * model.conditional_cov_factor.transpose();
}

Eigen::MatrixXd permutation_knockoffs(const Eigen::MatrixXd& X, std::uint64_t seed) {
  Eigen::MatrixXd out = X;
  const Eigen::Index n = X.rows();
  const Rng base(seed);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    Rng col = base.substream(static_cast<std::uint64_t>(j));
    // Fisher-Yates over the column.
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto k = static_cast<Eigen::Index>(col.bounded(static_cast<std::uint64_t>(i + 1)));
      std::swap(out(i, j), out(k, j));
    }
  }
  return out;
}

DiagnosticsReport diagnostics(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X_tilde) {
  if (X.rows() != X_tilde.rows() || X.cols() != X_tilde.cols())
    throw std::invalid_argument("diagnostics: shape mismatch");

  DiagnosticsReport report;
  report.mean_gap =
      (X.colwise().mean() - X_tilde.colwise().mean()).cwiseAbs().maxCoeff();

  const Eigen::MatrixXd cov_x = sample_covariance(X);
  const Eigen::MatrixXd cov_xt = sample_covariance(X_tilde);
  report.cov_gap = (cov_x - cov_xt).cwiseAbs().maxCoeff();

  const Eigen::MatrixXd xc = X.rowwise() - X.colwise().mean();
  const Eigen::MatrixXd xtc = X_tilde.rowwise() - X_tilde.colwise().mean();
  const Eigen::MatrixXd cross = xc.transpose() * xtc / static_cast<double>(X.rows() - 1);
  // Off-diagonal blocks of the joint should match cov(X); the diagonal is
  // Sigma - diag(s) and is excluded from the gap.
  Eigen::MatrixXd target = cov_x;
  target.diagonal() = cross.diagonal();
  report.cross_cov_gap = (cross - target).cwiseAbs().maxCoeff();
  return report;
}

}  // namespace knockint::knockoffs
