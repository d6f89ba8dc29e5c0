#pragma once

// Univariate and pairwise importance over the 2p augmented columns.
//
// The path-based measures share one template: move from a baseline x' toward
// the explained point x and weight first/second derivatives along the path.
// "expected" draws the path positions (and the baseline) at random;
// "integrated" sweeps them on a fixed midpoint grid. Both aggregate by
// summation over the explained rows, symmetrize the pairwise matrix, and
// report absolute values (signed aggregates are retained alongside).

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "knockint/model.hpp"
#include "knockint/scalar_field.hpp"

namespace knockint::attribution {

enum class Measure { expected, integrated, model_specific };

std::string measure_name(Measure m);
Measure parse_measure(const std::string& name);

struct AttributionResult {
  Eigen::VectorXd e1d;         // absolute aggregates, length 2p
  Eigen::MatrixXd e2d;         // absolute aggregates, symmetric 2p x 2p
  Eigen::VectorXd e1d_signed;  // pre-absolute-value aggregates
  Eigen::MatrixXd e2d_signed;
  Measure measure = Measure::expected;
  Eigen::Index n_samples_explained = 0;
  int mc_draws = 0;   // per-row draws (expected) ...
  int grid_size = 0;  // ... or quadrature points per axis (integrated)
};

// Monte Carlo estimate: per draw, sample alpha, beta ~ U(0,1) and a baseline
// row; the pairwise term weights the Hessian at x' + alpha*beta*(x - x') by
// (x_i - x'_i)(x_j - x'_j)*alpha*beta, the univariate term weights the
// gradient at x' + alpha*(x - x') by (x_i - x'_i)*alpha.
AttributionResult expected_attributions(const ScalarField& model,
                                        const Eigen::MatrixXd& X_explain,
                                        const Eigen::MatrixXd& baselines, int draws,
                                        std::uint64_t seed, int workers = 1);

// Deterministic tensor-product midpoint quadrature of the same integrals,
// averaged over the baseline set.
AttributionResult integrated_attributions(const ScalarField& model,
                                          const Eigen::MatrixXd& X_explain,
                                          const Eigen::MatrixXd& baselines, int grid,
                                          int workers = 1);

// Weight-path measure for the coupling MLP: with W_agg the product of all
// layers above the first dense one, scores are quadratic forms of the
// filter-scaled first-layer rows against W_agg.
AttributionResult model_specific_attributions(const model::CouplingMLP& net);

void save_attribution(const AttributionResult& attr, const std::string& path,
                      std::uint64_t seed = 0);
AttributionResult load_attribution(const std::string& path);

}  // namespace knockint::attribution
