#include "knockint/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "knockint/attribution.hpp"
#include "knockint/parallel.hpp"
#include "knockint/rng.hpp"

namespace knockint::baselines {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

AugmentedDataset gather_rows(const AugmentedDataset& data, const std::vector<Index>& rows,
                             const VectorXd& response) {
  AugmentedDataset out;
  out.columns.resize(static_cast<Index>(rows.size()), data.columns.cols());
  out.response.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.columns.row(static_cast<Index>(i)) = data.columns.row(rows[i]);
    out.response[static_cast<Index>(i)] = response[rows[i]];
  }
  return out;
}

// |e_ij| per original-only pair for one trained model.
VectorXd pair_statistics(const AugmentedDataset& data, const std::vector<Index>& train_rows,
                         const std::vector<Index>& explain_rows, const VectorXd& response,
                         const PermutationConfig& cfg, const model::TrainConfig& train_cfg,
                         std::uint64_t attrib_seed) {
  const AugmentedDataset train_data = gather_rows(data, train_rows, response);
  const model::CouplingMLP net = model::train(train_data, train_cfg, cfg.task);

  MatrixXd explain(static_cast<Index>(explain_rows.size()), data.columns.cols());
  for (std::size_t i = 0; i < explain_rows.size(); ++i)
    explain.row(static_cast<Index>(i)) = data.columns.row(explain_rows[i]);
  const auto attr =
      attribution::expected_attributions(net, explain, explain, cfg.draws, attrib_seed, 1);

  const Index p = data.p();
  VectorXd stats(p * (p - 1) / 2);
  Index idx = 0;
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j) stats[idx++] = attr.e2d(i, j);
  return stats;
}

}  // namespace

PValueTable permutation_pvalues(const AugmentedDataset& data,
                                const std::vector<Index>& train_rows,
                                const std::vector<Index>& explain_rows,
                                const PermutationConfig& cfg, int n_permutations,
                                std::uint64_t seed) {
  if (n_permutations < 19)
    throw std::invalid_argument("permutation_pvalues: need at least 19 permutations");
  if (train_rows.empty() || explain_rows.empty())
    throw std::invalid_argument("permutation_pvalues: empty train or explain split");

  const Index p = data.p();
  model::TrainConfig observed_cfg = cfg.observed_train;
  observed_cfg.seed = derive_seed(seed, 1);
  const VectorXd observed = pair_statistics(data, train_rows, explain_rows, data.response, cfg,
                                            observed_cfg, derive_seed(seed, 2));

  const Index n = data.n_samples();
  std::vector<VectorXd> null_stats(static_cast<std::size_t>(n_permutations));
  parallel_tasks(static_cast<std::size_t>(n_permutations), cfg.workers, [&](std::size_t b) {
    const std::uint64_t rep_seed = derive_seed(seed, 1000 + b);
    Rng rng(rep_seed);
    VectorXd permuted = data.response;
    for (Index i = n - 1; i > 0; --i) {
      const auto k = static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(i + 1)));
      std::swap(permuted[i], permuted[k]);
    }
    model::TrainConfig null_cfg = cfg.observed_train;
    null_cfg.epochs = cfg.null_epochs;
    null_cfg.seed = derive_seed(rep_seed, 1);
    try {
      null_stats[b] = pair_statistics(data, train_rows, explain_rows, permuted, cfg, null_cfg,
                                      derive_seed(rep_seed, 2));
    } catch (const std::exception& e) {
      throw std::runtime_error("permutation_pvalues: replicate with seed " +
                               std::to_string(rep_seed) + " failed: " + e.what());
    }
  });

  PValueTable table;
  table.n_permutations = n_permutations;
  table.p.resize(observed.size());
  Index idx = 0;
  for (int i = 1; i <= static_cast<int>(p); ++i)
    for (int j = i + 1; j <= static_cast<int>(p); ++j) table.pairs.emplace_back(i, j);
  for (Index s = 0; s < observed.size(); ++s) {
    long exceed = 0;
    for (const auto& null : null_stats)
      if (null[s] >= observed[s]) ++exceed;
    table.p[idx++] = static_cast<double>(1 + exceed) / static_cast<double>(1 + n_permutations);
  }
  return table;
}

namespace {

std::vector<PairKey> step_up(const PValueTable& table, double q, double correction) {
  if (q <= 0.0 || q >= 1.0) throw std::invalid_argument("step-up selection: q must lie in (0, 1)");
  const auto m = static_cast<Index>(table.pairs.size());
  if (m == 0) return {};
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return table.p[a] < table.p[b]; });
  double cutoff = -1.0;
  for (Index k = m; k >= 1; --k) {
    const double bound = static_cast<double>(k) * q / (static_cast<double>(m) * correction);
    if (table.p[order[static_cast<std::size_t>(k - 1)]] <= bound) {
      cutoff = table.p[order[static_cast<std::size_t>(k - 1)]];
      break;
    }
  }
  std::vector<PairKey> selected;
  if (cutoff >= 0.0)
    for (std::size_t i = 0; i < table.pairs.size(); ++i)
      if (table.p[static_cast<Index>(i)] <= cutoff) selected.push_back(table.pairs[i]);
  return selected;
}

}  // namespace

std::vector<PairKey> bh_select(const PValueTable& table, double q) {
  return step_up(table, q, 1.0);
}

std::vector<PairKey> by_select(const PValueTable& table, double q) {
  double harmonic = 0.0;
  for (std::size_t k = 1; k <= table.pairs.size(); ++k)
    harmonic += 1.0 / static_cast<double>(k);
  return step_up(table, q, std::max(harmonic, 1.0));
}

FeaturewiseResult featurewise_aggregation(const Eigen::VectorXd& e1d, double q) {
  if (q <= 0.0 || q >= 1.0)
    throw std::invalid_argument("featurewise_aggregation: q must lie in (0, 1)");
  if (e1d.size() % 2 != 0)
    throw std::invalid_argument("featurewise_aggregation: e1d must cover 2p columns");
  if (!e1d.allFinite()) throw std::invalid_argument("featurewise_aggregation: non-finite e1d");
  const Index p = e1d.size() / 2;
  const VectorXd w = e1d.head(p) - e1d.tail(p);
  const VectorXd feature_q = fdr::univariate_qvalues(w);

  FeaturewiseResult result;
  for (int i = 1; i <= static_cast<int>(p); ++i) {
    for (int j = i + 1; j <= static_cast<int>(p); ++j) {
      const double pair_q = std::max(feature_q[i - 1], feature_q[j - 1]);
      result.pair_q[{i, j}] = pair_q;
      if (pair_q <= q) result.selected.emplace_back(i, j);
    }
  }
  return result;
}

}  // namespace knockint::baselines
