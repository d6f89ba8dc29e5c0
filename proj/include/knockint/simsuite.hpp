#pragma once

// Synthetic regression benchmark: ten fixed generating functions over ten
// active features, with the ground-truth pairwise decomposition of every
// non-additive term. Features beyond the tenth are noise.

#include <cstdint>
#include <set>
#include <utility>

#include "knockint/dataset.hpp"

namespace knockint::simsuite {

struct SimulationSpec {
  int function_id = 1;       // 1..10
  Eigen::Index n_samples = 0;
  Eigen::Index n_features = 30;  // >= 10
  std::uint64_t seed = 0;
};

// Unordered 1-based index pairs (i, j), i < j.
using PairSet = std::set<std::pair<int, int>>;

struct GroundTruth {
  PairSet pairs;
};

// Evaluates F_{function_id} at x (1-based feature k is x[k-1]); throws
// std::domain_error on any out-of-domain subexpression instead of
// returning NaN/inf.
double eval_function(int function_id, const Eigen::VectorXd& x);

// All 2-subsets of every non-additive multivariate term of F_{function_id}.
GroundTruth ground_truth_pairs(int function_id);

// Features i.i.d. U(0,1) from per-column substreams of spec.seed; response
// is the rowwise function value.
std::pair<Dataset, GroundTruth> generate_dataset(const SimulationSpec& spec);

}  // namespace knockint::simsuite
