#include "knockint/distill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace knockint::distill {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Clamped cubic B-spline basis with interior knots at covariate quantiles.
struct SplineBasis {
  std::vector<double> knots;  // full knot vector with repeated boundaries
  int degree = 3;

  int size() const { return static_cast<int>(knots.size()) - degree - 1; }

  static SplineBasis from_quantiles(std::vector<double> values, int n_interior, int degree) {
    std::sort(values.begin(), values.end());
    const double lo = values.front();
    const double hi = values.back();
    SplineBasis basis;
    basis.degree = degree;
    for (int k = 0; k <= degree; ++k) basis.knots.push_back(lo);
    double prev = lo;
    for (int k = 1; k <= n_interior; ++k) {
      const double q = static_cast<double>(k) / (n_interior + 1);
      const double pos = q * static_cast<double>(values.size() - 1);
      const auto lo_idx = static_cast<std::size_t>(std::floor(pos));
      const double frac = pos - std::floor(pos);
      const double knot = (lo_idx + 1 < values.size())
                              ? values[lo_idx] * (1.0 - frac) + values[lo_idx + 1] * frac
                              : values[lo_idx];
      // Strictly increasing interior knots only; collapse duplicates.
      if (knot > prev + 1e-12 * std::max(1.0, std::abs(hi - lo)) && knot < hi) {
        basis.knots.push_back(knot);
        prev = knot;
      }
    }
    for (int k = 0; k <= degree; ++k) basis.knots.push_back(hi);
    return basis;
  }

  // Fills a full basis row by the de Boor recursion.
  void evaluate(double u, Eigen::Ref<Eigen::RowVectorXd> row) const {
    row.setZero();
    const double lo = knots.front();
    const double hi = knots.back();
    u = std::clamp(u, lo, hi);
    // Locate the knot span [knots[k], knots[k+1]).
    int k = degree;
    const int last_span = static_cast<int>(knots.size()) - degree - 2;
    while (k < last_span && u >= knots[static_cast<std::size_t>(k + 1)]) ++k;

    std::vector<double> vals(static_cast<std::size_t>(degree) + 1, 0.0);
    vals[0] = 1.0;
    for (int d = 1; d <= degree; ++d) {
      double saved = 0.0;
      for (int r = 0; r < d; ++r) {
        const double left = knots[static_cast<std::size_t>(k - d + 1 + r)];
        const double right = knots[static_cast<std::size_t>(k + 1 + r)];
        const double denom = right - left;
        const double term = denom > 0.0 ? vals[static_cast<std::size_t>(r)] / denom : 0.0;
        vals[static_cast<std::size_t>(r)] = saved + (right - u) * term;
        saved = (u - left) * term;
      }
      vals[static_cast<std::size_t>(d)] = saved;
    }
    for (int r = 0; r <= degree; ++r) {
      const int idx = k - degree + r;
      if (idx >= 0 && idx < size()) row[idx] += vals[static_cast<std::size_t>(r)];
    }
  }
};

MatrixXd second_difference_penalty(int n) {
  if (n < 3) return MatrixXd::Zero(n, n);
  MatrixXd d2 = MatrixXd::Zero(n - 2, n);
  for (int r = 0; r < n - 2; ++r) {
    d2(r, r) = 1.0;
    d2(r, r + 1) = -2.0;
    d2(r, r + 2) = 1.0;
  }
  return d2.transpose() * d2;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

int max_column_index(const std::vector<PairRecord>& pairs) {
  int n_cols = 0;
  for (const auto& pr : pairs) n_cols = std::max(n_cols, std::max(pr.i, pr.j));
  return n_cols;
}

std::vector<double> covariate_values(const std::vector<PairRecord>& pairs) {
  std::vector<double> values;
  values.reserve(2 * pairs.size());
  for (const auto& pr : pairs) {
    values.push_back(pr.e_i);
    values.push_back(pr.e_j);
  }
  return values;
}

}  // namespace

std::vector<PairRecord> build_pairs(const attribution::AttributionResult& attr) {
  const Index dims = attr.e1d.size();
  if (dims == 0 || dims % 2 != 0 || attr.e2d.rows() != dims || attr.e2d.cols() != dims)
    throw std::invalid_argument("build_pairs: attribution result is not over 2p columns");
  const int p = static_cast<int>(dims / 2);
  std::vector<PairRecord> pairs;
  pairs.reserve(static_cast<std::size_t>(dims * (dims - 1) / 2));
  for (int i = 1; i <= 2 * p; ++i) {
    for (int j = i + 1; j <= 2 * p; ++j) {
      PairRecord pr;
      pr.i = i;
      pr.j = j;
      pr.e_ij = attr.e2d(i - 1, j - 1);
      pr.e_i = attr.e1d(i - 1);
      pr.e_j = attr.e1d(j - 1);
      pr.category = fdr::categorize(i, j, p);
      pr.self_pair = (j == i + p);
      pairs.push_back(pr);
    }
  }
  return pairs;
}

Eigen::VectorXd compute_pair_weights(const std::vector<PairRecord>& pairs, double reg) {
  const auto n = static_cast<Index>(pairs.size());
  if (n == 0) throw std::invalid_argument("compute_pair_weights: no pairs");
  if (reg < 0.0) throw std::invalid_argument("compute_pair_weights: negative regularization");

  VectorXd label(n);
  MatrixXd z(n, 4);  // intercept + (e_i, e_j, e_i + e_j)
  for (Index r = 0; r < n; ++r) {
    const auto& pr = pairs[static_cast<std::size_t>(r)];
    label[r] = (pr.category == fdr::Category::OO) ? 0.0 : 1.0;
    z(r, 0) = 1.0;
    z(r, 1) = pr.e_i;
    z(r, 2) = pr.e_j;
    z(r, 3) = pr.e_i + pr.e_j;
  }
  const double n_pos = label.sum();
  if (n_pos == 0.0 || n_pos == static_cast<double>(n))
    throw std::invalid_argument("compute_pair_weights: both pair classes must be present");

  // Standardize covariates so the ridge penalty is scale-free.
  for (Index c = 1; c < 4; ++c) {
    const double mean = z.col(c).mean();
    z.col(c).array() -= mean;
    const double sd = std::sqrt(z.col(c).squaredNorm() / static_cast<double>(n));
    if (sd > 1e-12) z.col(c) /= sd;
  }

  MatrixXd ridge = reg * MatrixXd::Identity(4, 4);
  ridge(0, 0) = 0.0;  // intercept unpenalized

  VectorXd theta = VectorXd::Zero(4);
  for (int iter = 0; iter < 100; ++iter) {
    const VectorXd eta = z * theta;
    VectorXd mu = eta.unaryExpr([](double v) { return sigmoid(v); });
    VectorXd irls_w = mu.array() * (1.0 - mu.array());
    irls_w = irls_w.cwiseMax(1e-10);
    const VectorXd working = eta + (label - mu).cwiseQuotient(irls_w);
    const MatrixXd zw = z.transpose() * irls_w.asDiagonal();
    const VectorXd next = (zw * z + ridge).ldlt().solve(zw * working);
    const double step = (next - theta).cwiseAbs().maxCoeff();
    theta = next;
    if (step < 1e-10) break;
  }

  const VectorXd prob_k = (z * theta).unaryExpr([](double v) { return sigmoid(v); });
  VectorXd weights(n);
  for (Index r = 0; r < n; ++r) {
    const double own = (label[r] == 1.0) ? prob_k[r] : 1.0 - prob_k[r];
    weights[r] = std::max(own, 1e-3);
  }
  return weights;
}

DesignMatrices build_design(const std::vector<PairRecord>& pairs, const SplineConfig& cfg) {
  const auto n = static_cast<Index>(pairs.size());
  const int n_cols = max_column_index(pairs);

  std::vector<double> values = covariate_values(pairs);
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double spread = *mx - *mn;
  const bool degenerate = !(spread > 1e-12 * std::max(1.0, std::abs(*mx)));

  DesignMatrices out;
  out.n_columns = n_cols;
  if (degenerate) {
    out.n_spline = 0;
    out.design = MatrixXd::Zero(n, n_cols + 1);
    out.penalty = MatrixXd::Zero(n_cols + 1, n_cols + 1);
  } else {
    SplineBasis basis = SplineBasis::from_quantiles(values, cfg.n_interior_knots, cfg.degree);
    out.n_spline = basis.size();
    out.design = MatrixXd::Zero(n, out.n_spline + n_cols + 1);
    out.penalty = MatrixXd::Zero(out.design.cols(), out.design.cols());
    out.penalty.topLeftCorner(out.n_spline, out.n_spline) =
        second_difference_penalty(out.n_spline);
    Eigen::RowVectorXd row_i(out.n_spline), row_j(out.n_spline);
    for (Index r = 0; r < n; ++r) {
      basis.evaluate(pairs[static_cast<std::size_t>(r)].e_i, row_i);
      basis.evaluate(pairs[static_cast<std::size_t>(r)].e_j, row_j);
      out.design.block(r, 0, 1, out.n_spline) = row_i + row_j;
    }
  }
  out.response.resize(n);
  for (Index r = 0; r < n; ++r) {
    const auto& pr = pairs[static_cast<std::size_t>(r)];
    out.response[r] = pr.e_ij;
    out.design(r, out.n_spline + pr.i - 1) += 1.0;
    out.design(r, out.n_spline + pr.j - 1) += 1.0;
    out.design(r, out.n_spline + n_cols) = 1.0;  // intercept
  }
  return out;
}

DistillationResult fit_additive_surface(const std::vector<PairRecord>& pairs,
                                        const Eigen::VectorXd& weights,
                                        const SplineConfig& cfg) {
  const auto n = static_cast<Index>(pairs.size());
  if (n < 10) throw std::invalid_argument("fit_additive_surface: need at least 10 pairs");
  if (weights.size() != n)
    throw std::invalid_argument("fit_additive_surface: weight length mismatch");
  if (weights.minCoeff() <= 0.0)
    throw std::invalid_argument("fit_additive_surface: weights must be positive");
  for (const auto& pr : pairs)
    if (!std::isfinite(pr.e_ij) || !std::isfinite(pr.e_i) || !std::isfinite(pr.e_j))
      throw std::invalid_argument("fit_additive_surface: non-finite covariates");

  DesignMatrices dm = build_design(pairs, cfg);
  const Index n_params = dm.design.cols();
  const VectorXd& y = dm.response;

  const MatrixXd xtw = dm.design.transpose() * weights.asDiagonal();
  const MatrixXd a = xtw * dm.design;
  const VectorXd rhs = xtw * y;
  // Tiny ridge keeps the intrinsically aliased design (smooth vs biases vs
  // intercept) solvable without influencing the fitted surface.
  const double eps = 1e-9 * (a.trace() / static_cast<double>(n_params));
  const MatrixXd eye = MatrixXd::Identity(n_params, n_params);

  double best_gcv = std::numeric_limits<double>::infinity();
  double best_lambda = 0.0;
  VectorXd best_theta;
  double best_edf = 0.0;

  std::vector<double> grid = cfg.lambda_grid;
  if (dm.n_spline == 0) grid = {0.0};  // bias-only fallback: nothing to smooth
  for (double lambda : grid) {
    const MatrixXd m = a + lambda * dm.penalty + eps * eye;
    const auto solver = m.ldlt();
    if (solver.info() != Eigen::Success) continue;
    const VectorXd theta = solver.solve(rhs);
    const VectorXd fitted = dm.design * theta;
    const double wrss = (weights.array() * (y - fitted).array().square()).sum();
    const double edf = solver.solve(a).trace();
    const double denom = 1.0 - edf / static_cast<double>(n);
    if (denom <= 1e-8) continue;
    const double gcv = (wrss / static_cast<double>(n)) / (denom * denom);
    if (gcv < best_gcv) {
      best_gcv = gcv;
      best_lambda = lambda;
      best_theta = theta;
      best_edf = edf;
    }
  }
  if (best_theta.size() == 0)
    throw std::runtime_error("fit_additive_surface: no smoothing level produced a valid fit");

  DistillationResult result;
  result.pairs = pairs;
  const VectorXd fitted = dm.design * best_theta;
  result.scores = y - fitted;
  result.weights = weights;
  result.smooth_coefficients = best_theta.head(dm.n_spline);
  result.bias_beta = best_theta.segment(dm.n_spline, dm.n_columns);
  result.intercept = best_theta[n_params - 1];

  const double w_total = weights.sum();
  const double y_bar = (weights.array() * y.array()).sum() / w_total;
  const double tss = (weights.array() * (y.array() - y_bar).square()).sum();
  const double wrss = (weights.array() * result.scores.array().square()).sum();
  result.fit_diagnostics.weighted_r2 = tss > 0.0 ? 1.0 - wrss / tss : 0.0;
  result.fit_diagnostics.effective_dof = best_edf;
  result.fit_diagnostics.lambda = best_lambda;
  result.fit_diagnostics.ridge_epsilon = eps;
  result.fit_diagnostics.bias_only_fallback = (dm.n_spline == 0);
  return result;
}

fdr::InteractionScoreSet distill(const attribution::AttributionResult& attr, double weight_reg,
                                 const SplineConfig& cfg, DistillationResult* detail) {
  std::vector<PairRecord> pairs = build_pairs(attr);
  pairs.erase(std::remove_if(pairs.begin(), pairs.end(),
                             [](const PairRecord& pr) { return pr.self_pair; }),
              pairs.end());
  const VectorXd weights = compute_pair_weights(pairs, weight_reg);
  DistillationResult fit = fit_additive_surface(pairs, weights, cfg);

  fdr::InteractionScoreSet gamma;
  gamma.p = static_cast<int>(attr.e1d.size() / 2);
  gamma.entries.reserve(pairs.size());
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    fdr::ScoreEntry entry;
    entry.i = pairs[r].i;
    entry.j = pairs[r].j;
    entry.score = fit.scores[static_cast<Index>(r)];
    entry.category = pairs[r].category;
    entry.weight = fit.weights[static_cast<Index>(r)];
    gamma.entries.push_back(entry);
  }
  if (detail) *detail = std::move(fit);
  return gamma;
}

fdr::InteractionScoreSet undistilled_scores(const attribution::AttributionResult& attr) {
  fdr::InteractionScoreSet gamma;
  const Index dims = attr.e1d.size();
  gamma.p = static_cast<int>(dims / 2);
  for (const auto& pr : build_pairs(attr)) {
    if (pr.self_pair) continue;
    fdr::ScoreEntry entry;
    entry.i = pr.i;
    entry.j = pr.j;
    entry.score = std::abs(pr.e_ij);
    entry.category = pr.category;
    gamma.entries.push_back(entry);
  }
  return gamma;
}

}  // namespace knockint::distill
