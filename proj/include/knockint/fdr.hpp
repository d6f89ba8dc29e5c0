#pragma once

// Interaction knockoff filter: the decoy-counting threshold over the
// distilled score set, per-pair q-values (minimum target FDR at which a
// pair enters the selection), the false-positive estimate behind the
// threshold, and the univariate knockoff filter used by baselines.
//
// Column indices are 1-based and run over {1..2p}: 1..p originals,
// p+1..2p knockoffs.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace knockint::fdr {

enum class Category { OO, OK, KK };

std::string category_name(Category c);
Category parse_category(const std::string& name);

// Category is fully determined by the indices relative to p.
Category categorize(int i, int j, int p);

struct ScoreEntry {
  int i = 0, j = 0;  // 1-based, i < j
  double score = 0.0;
  Category category = Category::OO;
  double weight = 1.0;  // distillation weight, carried for reporting
};

struct InteractionScoreSet {
  int p = 0;  // original feature count
  std::vector<ScoreEntry> entries;
};

using PairKey = std::pair<int, int>;

struct SelectionResult {
  std::optional<double> threshold;  // empty when no candidate qualifies
  double estimated_fdp = 0.0;       // achieved ratio at the threshold
  std::vector<ScoreEntry> selected; // original-only pairs with score >= T
  std::map<PairKey, double> q_values;
};

// T = min{t in unique positive scores :
//        (#{K >= t} - 2 #{KK >= t})_+ / max(1, #{OO >= t}) <= q}.
// `plus_one` adds the knockoff+-style offset to the numerator; the plain
// form admits every pair above the largest knockoff-involving score, which
// measurably inflates realized FDP at desk-scale pair counts, so the
// pipeline selects with the offset by default.
SelectionResult interaction_threshold(const InteractionScoreSet& gamma, double q,
                                      bool plus_one = false);

// Per OO pair: the minimum achieved ratio over candidate thresholds at or
// below its score, clamped to [0, 1]; 1 when no candidate lies below.
std::map<PairKey, double> q_values(const InteractionScoreSet& gamma, bool plus_one = false);

// Decoy estimate of the false positive count among selected interactions:
// max(0, #knockoff-involving - 2 #knockoff-knockoff).
double expected_fp(long count_knockoff_involving, long count_kk);

struct UnivariateSelection {
  std::optional<double> threshold;
  std::vector<int> selected;  // 0-based feature indices with W_j >= T
};

// Classic knockoff+ filter: T = min{t in unique nonzero |W| :
// (1 + #{W <= -t}) / max(1, #{W >= t}) <= q}.
UnivariateSelection univariate_threshold(const Eigen::VectorXd& W, double q);

// Per-feature minimum qualifying level of the univariate filter; features
// with W_j <= 0 get 1.
Eigen::VectorXd univariate_qvalues(const Eigen::VectorXd& W);

void save_score_set(const InteractionScoreSet& gamma, const std::string& path);
InteractionScoreSet load_score_set(const std::string& path);

}  // namespace knockint::fdr
