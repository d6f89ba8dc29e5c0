#include <doctest.h>

#include <cmath>
#include <vector>

#include "knockint/knockoffs.hpp"
#include "knockint/rng.hpp"

using namespace knockint;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Index n, Index p, std::uint64_t seed) {
  MatrixXd x(n, p);
  Rng rng(seed);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) x(i, j) = rng.uniform();
  return x;
}

// Rows transformed so that the sample covariance equals `target` exactly.
MatrixXd with_sample_covariance(Index n, const MatrixXd& target, std::uint64_t seed) {
  const Index p = target.cols();
  MatrixXd x(n, p);
  Rng rng(seed);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) x(i, j) = rng.normal();
  MatrixXd centered = x.rowwise() - x.colwise().mean();
  const MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  const Eigen::LLT<MatrixXd> cov_llt(cov);
  const Eigen::LLT<MatrixXd> target_llt(target);
  // whiten, then color with the target factor
  MatrixXd whitened = cov_llt.matrixL().solve(centered.transpose()).transpose();
  return whitened * target_llt.matrixL().transpose();
}

MatrixXd ar1_matrix(Index p, double rho) {
  MatrixXd m(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) m(i, j) = std::pow(rho, std::abs(double(i - j)));
  return m;
}

// Smallest eigenvalue by bisection on the Cholesky-failure boundary; an
// eigensolver-independent oracle.
double min_eig_bisect(const MatrixXd& m) {
  double lo = -10.0, hi = 10.0;
  auto psd = [&](double shift) {
    const MatrixXd shifted = m - shift * MatrixXd::Identity(m.rows(), m.cols());
    return Eigen::LLT<MatrixXd>(shifted).info() == Eigen::Success;
  };
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (psd(mid)) lo = mid; else hi = mid;
  }
  return lo;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

TEST_SUITE_BEGIN("knockoffs");

TEST_CASE("identity covariance gives s = 1 and independent knockoffs") {
  const Index n = 500, p = 6;
  const MatrixXd x = with_sample_covariance(n, MatrixXd::Identity(p, p), 31);
  const auto model = knockoffs::fit_gaussian(x, 0.0);
  for (Index j = 0; j < p; ++j) CHECK(model.s[j] == doctest::Approx(1.0).epsilon(1e-8));
  // Conditional covariance 2I - I = I: factor times its transpose is I.
  const MatrixXd v = model.conditional_cov_factor * model.conditional_cov_factor.transpose();
  CHECK((v - MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("equicorrelated s matches an eigen-bisection oracle on AR(1)") {
  const MatrixXd corr = ar1_matrix(3, 0.5);
  const MatrixXd x = with_sample_covariance(400, corr, 77);
  const auto model = knockoffs::fit_gaussian(x, 0.0);
  const double lambda_min = min_eig_bisect(corr);
  const double expected = std::min(2.0 * lambda_min, 1.0);
  for (Index j = 0; j < 3; ++j)
    CHECK(model.s[j] == doctest::Approx(expected * corr(j, j)).epsilon(1e-6));
}

TEST_CASE("constant columns are rejected") {
  MatrixXd x = random_matrix(50, 4, 5);
  x.col(2).setConstant(0.7);
  CHECK_THROWS_AS((void)knockoffs::fit_gaussian(x, 0.1), std::runtime_error);
}

TEST_CASE("conditional covariance stays PSD across fits") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL}) {
    const MatrixXd x = random_matrix(300, 12, seed);
    const auto model = knockoffs::fit_gaussian(x, 0.05);
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(
        2.0 * MatrixXd(model.s.asDiagonal()) -
        model.s.asDiagonal() * model.sigma.ldlt().solve(MatrixXd(model.s.asDiagonal())));
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
  }
}

TEST_CASE("sampling matches the joint second moments at n = 5000") {
  const Index n = 5000, p = 5;
  const MatrixXd x = with_sample_covariance(n, ar1_matrix(p, 0.5), 91);
  const auto model = knockoffs::fit_gaussian(x, 0.0);
  const MatrixXd before = x;
  const MatrixXd ko = knockoffs::sample_knockoffs(model, x, 17);
  CHECK(x == before);  // input untouched

  const MatrixXd cov_x = knockoffs::sample_covariance(x);
  const MatrixXd cov_ko = knockoffs::sample_covariance(ko);
  CHECK((cov_x - cov_ko).cwiseAbs().maxCoeff() < 0.1);

  // Cross covariance: Sigma - diag(s).
  const MatrixXd xc = x.rowwise() - x.colwise().mean();
  const MatrixXd kc = ko.rowwise() - ko.colwise().mean();
  const MatrixXd cross = xc.transpose() * kc / static_cast<double>(n - 1);
  MatrixXd target = model.sigma;
  target.diagonal() -= model.s;
  CHECK((cross - target).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("identity case: per-column correlation is near zero and marginals are normal") {
  const Index n = 5000, p = 4;
  const MatrixXd x = with_sample_covariance(n, MatrixXd::Identity(p, p), 13);
  const auto model = knockoffs::fit_gaussian(x, 0.0);
  const MatrixXd ko = knockoffs::sample_knockoffs(model, x, 3);
  for (Index j = 0; j < p; ++j) {
    const VectorXd a = x.col(j).array() - x.col(j).mean();
    const VectorXd b = ko.col(j).array() - ko.col(j).mean();
    const double r = a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
    CHECK(std::abs(r) < 0.05);
    CHECK(std::abs(ko.col(j).mean() - model.mu[j]) < 0.06);

    // Kolmogorov-Smirnov distance against N(mu_j, 1).
    std::vector<double> sorted(ko.col(j).data(), ko.col(j).data() + n);
    std::sort(sorted.begin(), sorted.end());
    double ks = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double cdf = normal_cdf(sorted[static_cast<std::size_t>(i)] - model.mu[j]);
      ks = std::max(ks, std::abs(cdf - (i + 1.0) / n));
      ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
    }
    CHECK(ks < 0.05);
  }
}

TEST_CASE("sampling is deterministic per seed") {
  const MatrixXd x = random_matrix(100, 5, 21);
  const auto model = knockoffs::fit_gaussian(x, 0.1);
  CHECK(knockoffs::sample_knockoffs(model, x, 5) == knockoffs::sample_knockoffs(model, x, 5));
  CHECK(knockoffs::sample_knockoffs(model, x, 5) != knockoffs::sample_knockoffs(model, x, 6));
}

TEST_CASE("permutation knockoffs preserve column multisets") {
  const MatrixXd x = random_matrix(200, 4, 33);
  const MatrixXd ko = knockoffs::permutation_knockoffs(x, 9);
  for (Index j = 0; j < 4; ++j) {
    std::vector<double> a(x.col(j).data(), x.col(j).data() + 200);
    std::vector<double> b(ko.col(j).data(), ko.col(j).data() + 200);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  CHECK(ko != x);  // overwhelmingly likely for n = 200
  CHECK(knockoffs::permutation_knockoffs(x, 9) == ko);

  const MatrixXd single = random_matrix(1, 4, 2);
  CHECK(knockoffs::permutation_knockoffs(single, 1) == single);
}

TEST_CASE("diagnostics flag identity swaps and invalid knockoffs") {
  const MatrixXd x = with_sample_covariance(5000, ar1_matrix(6, 0.5), 55);

  const auto self_report = knockoffs::diagnostics(x, x);
  CHECK(self_report.mean_gap == doctest::Approx(0.0));
  CHECK(self_report.cov_gap == doctest::Approx(0.0));

  const auto model = knockoffs::fit_gaussian(x, 0.0);
  const MatrixXd ko = knockoffs::sample_knockoffs(model, x, 7);
  const auto valid = knockoffs::diagnostics(x, ko);
  CHECK(valid.mean_gap < 0.1);
  CHECK(valid.cov_gap < 0.1);
  CHECK(valid.cross_cov_gap < 0.1);

  const MatrixXd perm = knockoffs::permutation_knockoffs(x, 7);
  const auto invalid = knockoffs::diagnostics(x, perm);
  CHECK(invalid.cov_gap > 0.1);  // off-diagonal structure destroyed

  CHECK_THROWS_AS((void)knockoffs::diagnostics(x, x.topRows(10)), std::invalid_argument);
}

TEST_SUITE_END();
