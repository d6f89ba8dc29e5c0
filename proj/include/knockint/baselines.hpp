#pragma once

// The three comparison procedures: permutation p-values for original-only
// pairs combined with Benjamini-Hochberg or Benjamini-Yekutieli, and the
// aggregation of univariate knockoff q-values to pairs.

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "knockint/dataset.hpp"
#include "knockint/fdr.hpp"
#include "knockint/model.hpp"

namespace knockint::baselines {

using PairKey = fdr::PairKey;  // 1-based (i, j), i < j <= p

struct PValueTable {
  std::vector<PairKey> pairs;
  Eigen::VectorXd p;  // add-one permutation p-values, >= 1/(B+1)
  int n_permutations = 0;
};

struct PermutationConfig {
  model::TrainConfig observed_train;   // settings for the model on the true response
  int null_epochs = 50;                // null refits use a reduced epoch budget
  int draws = 32;                      // expected-measure draws for the pair statistic
  Task task = Task::regression;
  int workers = 1;
};

// Observed statistic: raw |e_ij| per original-only pair under the expected
// measure, from a model trained on the true response. Null replicates
// retrain on seeded permutations of the response (same augmented features)
// and are merged by replicate index. p = (1 + #{null >= obs}) / (1 + B).
PValueTable permutation_pvalues(const AugmentedDataset& data,
                                const std::vector<Eigen::Index>& train_rows,
                                const std::vector<Eigen::Index>& explain_rows,
                                const PermutationConfig& cfg, int n_permutations,
                                std::uint64_t seed);

// Step-up selections. Both return the selected subset of table.pairs in
// input order.
std::vector<PairKey> bh_select(const PValueTable& table, double q);
std::vector<PairKey> by_select(const PValueTable& table, double q);

struct FeaturewiseResult {
  std::vector<PairKey> selected;
  std::map<PairKey, double> pair_q;  // max of the two univariate q-values
};

// W_j = e1d_j - e1d_{j+p}; a pair's q is the max of its members' univariate
// knockoff q-values; pairs containing a feature with W_j <= 0 get q = 1.
FeaturewiseResult featurewise_aggregation(const Eigen::VectorXd& e1d, double q);

}  // namespace knockint::baselines
