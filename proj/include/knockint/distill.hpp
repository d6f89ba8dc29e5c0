#pragma once

// Non-additivity distillation: strips additively explainable structure from
// the pairwise importance surface. Each reported e_ij is modeled as
// g(e_i) + g(e_j) + beta_i + beta_j + c with a shared penalized B-spline
// smooth g and per-column biases beta, fitted by weighted least squares;
// the signed residuals are the interaction scores. Pair weights come from a
// ridge logistic regression of pair class (original-only vs
// knockoff-involving) on the univariate importances.

#include <vector>

#include <Eigen/Dense>

#include "knockint/attribution.hpp"
#include "knockint/fdr.hpp"

namespace knockint::distill {

struct PairRecord {
  int i = 0, j = 0;      // 1-based augmented column indices, i < j
  double e_ij = 0.0;     // pairwise importance
  double e_i = 0.0, e_j = 0.0;  // univariate importances
  fdr::Category category = fdr::Category::OO;
  bool self_pair = false;  // j == i + p
};

// All i < j pairs over the 2p columns of an attribution result, self pairs
// flagged; categories derive from the indices alone.
std::vector<PairRecord> build_pairs(const attribution::AttributionResult& attr);

// Own-class probability of each pair under an L2-regularized logistic
// regression on (e_i, e_j, e_i + e_j), floored at 1e-3. Throws when only one
// class is present.
Eigen::VectorXd compute_pair_weights(const std::vector<PairRecord>& pairs, double reg);

struct SplineConfig {
  int n_interior_knots = 10;
  int degree = 3;
  std::vector<double> lambda_grid = {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
};

struct FitDiagnostics {
  double weighted_r2 = 0.0;
  double effective_dof = 0.0;
  double lambda = 0.0;          // chosen smoothing level
  double ridge_epsilon = 0.0;   // solvability ridge actually applied
  bool bias_only_fallback = false;
};

struct DistillationResult {
  std::vector<PairRecord> pairs;        // the fitted (non-self) pairs
  Eigen::VectorXd scores;               // signed residuals s_ij, one per pair
  Eigen::VectorXd weights;              // w_ij > 0
  Eigen::VectorXd smooth_coefficients;  // B-spline coefficients of g
  Eigen::VectorXd bias_beta;            // per-column biases, length 2p
  double intercept = 0.0;
  FitDiagnostics fit_diagnostics;
};

// Weighted penalized least squares with a second-difference penalty on the
// spline coefficients; the smoothing level is picked by generalized
// cross-validation over cfg.lambda_grid. Degenerate univariate importances
// (no spread) drop the smooth and fall back to the bias-only model.
DistillationResult fit_additive_surface(const std::vector<PairRecord>& pairs,
                                        const Eigen::VectorXd& weights,
                                        const SplineConfig& cfg);

// Full distillation: build pairs, drop self pairs, weight, fit, and return
// the signed residual scores with categories.
fdr::InteractionScoreSet distill(const attribution::AttributionResult& attr,
                                 double weight_reg = 1.0, const SplineConfig& cfg = {},
                                 DistillationResult* detail = nullptr);

// The no-distillation score set: raw absolute pairwise importances.
fdr::InteractionScoreSet undistilled_scores(const attribution::AttributionResult& attr);

// Exposed for verification: the exact design and penalty used by the fit.
struct DesignMatrices {
  Eigen::MatrixXd design;        // rows = non-self pairs, cols = [spline | beta | 1]
  Eigen::MatrixXd penalty;       // unscaled second-difference penalty, spline block only
  Eigen::VectorXd response;      // e_ij
  int n_spline = 0;
  int n_columns = 0;             // 2p
};
DesignMatrices build_design(const std::vector<PairRecord>& pairs, const SplineConfig& cfg);

}  // namespace knockint::distill
