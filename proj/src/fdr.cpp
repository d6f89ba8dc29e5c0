#include "knockint/fdr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "knockint/csv.hpp"

namespace knockint::fdr {

std::string category_name(Category c) {
  switch (c) {
    case Category::OO: return "OO";
    case Category::OK: return "OK";
    case Category::KK: return "KK";
  }
  return "OO";
}

Category parse_category(const std::string& name) {
  if (name == "OO") return Category::OO;
  if (name == "OK") return Category::OK;
  if (name == "KK") return Category::KK;
  throw std::invalid_argument("unknown pair category '" + name + "'");
}

Category categorize(int i, int j, int p) {
  const int knockoffs = (i > p ? 1 : 0) + (j > p ? 1 : 0);
  return knockoffs == 0 ? Category::OO : (knockoffs == 1 ? Category::OK : Category::KK);
}

namespace {

struct CategoryScores {
  std::vector<double> oo, ko, kk;  // each sorted ascending

  static long count_at_least(const std::vector<double>& sorted, double t) {
    return static_cast<long>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
  }

  double ratio(double t, bool plus_one) const {
    const long k_count = count_at_least(ko, t) + count_at_least(kk, t);
    const long kk_count = count_at_least(kk, t);
    const double offset = plus_one ? 1.0 : 0.0;
    const double numerator =
        offset + std::max(0.0, static_cast<double>(k_count - 2 * kk_count));
    const double denominator = std::max<long>(1, count_at_least(oo, t));
    return numerator / denominator;
  }
};

CategoryScores split_scores(const InteractionScoreSet& gamma) {
  CategoryScores cs;
  for (const auto& entry : gamma.entries) {
    switch (entry.category) {
      case Category::OO: cs.oo.push_back(entry.score); break;
      case Category::OK: cs.ko.push_back(entry.score); break;
      case Category::KK: cs.kk.push_back(entry.score); break;
    }
  }
  std::sort(cs.oo.begin(), cs.oo.end());
  std::sort(cs.ko.begin(), cs.ko.end());
  std::sort(cs.kk.begin(), cs.kk.end());
  return cs;
}

// Candidate thresholds: unique positive values present in the score set.
// Nonpositive scores never threshold a selection.
std::vector<double> candidate_thresholds(const InteractionScoreSet& gamma) {
  std::set<double> uniq;
  for (const auto& entry : gamma.entries)
    if (entry.score > 0.0) uniq.insert(entry.score);
  return {uniq.begin(), uniq.end()};
}

}  // namespace

SelectionResult interaction_threshold(const InteractionScoreSet& gamma, double q,
                                      bool plus_one) {
  if (q <= 0.0 || q >= 1.0)
    throw std::invalid_argument("interaction_threshold: q must lie in (0, 1)");
  if (gamma.entries.empty())
    throw std::invalid_argument("interaction_threshold: empty score set");

  const CategoryScores cs = split_scores(gamma);
  SelectionResult result;
  for (double t : candidate_thresholds(gamma)) {
    if (cs.ratio(t, plus_one) <= q) {
      result.threshold = t;
      result.estimated_fdp = cs.ratio(t, plus_one);
      break;  // candidates ascend; the first qualifying one is the minimum
    }
  }
  if (result.threshold) {
    for (const auto& entry : gamma.entries)
      if (entry.category == Category::OO && entry.score >= *result.threshold)
        result.selected.push_back(entry);
    std::sort(result.selected.begin(), result.selected.end(),
              [](const ScoreEntry& a, const ScoreEntry& b) { return a.score > b.score; });
  }
  result.q_values = q_values(gamma, plus_one);
  return result;
}

std::map<PairKey, double> q_values(const InteractionScoreSet& gamma, bool plus_one) {
  if (gamma.entries.empty()) throw std::invalid_argument("q_values: empty score set");
  const CategoryScores cs = split_scores(gamma);
  const std::vector<double> candidates = candidate_thresholds(gamma);

  // Prefix minimum of the achieved ratio over ascending candidates: the
  // q-value of a score s is the best ratio among thresholds at or below s.
  std::vector<double> prefix_min(candidates.size());
  double running = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < candidates.size(); ++m) {
    running = std::min(running, cs.ratio(candidates[m], plus_one));
    prefix_min[m] = running;
  }

  std::map<PairKey, double> out;
  for (const auto& entry : gamma.entries) {
    if (entry.category != Category::OO) continue;
    const auto it = std::upper_bound(candidates.begin(), candidates.end(), entry.score);
    double qv = 1.0;
    if (it != candidates.begin())
      qv = std::clamp(prefix_min[static_cast<std::size_t>(it - candidates.begin()) - 1], 0.0, 1.0);
    out[{entry.i, entry.j}] = qv;
  }
  return out;
}

double expected_fp(long count_knockoff_involving, long count_kk) {
  if (count_knockoff_involving < 0 || count_kk < 0)
    throw std::invalid_argument("expected_fp: counts must be nonnegative");
  if (count_kk > count_knockoff_involving)
    throw std::invalid_argument("expected_fp: KK count exceeds the knockoff-involving count");
  return std::max(0.0, static_cast<double>(count_knockoff_involving - 2 * count_kk));
}

namespace {

double univariate_ratio(const std::vector<double>& sorted_w, double t) {
  // #{W <= -t} and #{W >= t} over the sorted statistics.
  const auto leq = std::upper_bound(sorted_w.begin(), sorted_w.end(), -t) - sorted_w.begin();
  const auto geq = sorted_w.end() - std::lower_bound(sorted_w.begin(), sorted_w.end(), t);
  return (1.0 + static_cast<double>(leq)) / std::max<double>(1.0, static_cast<double>(geq));
}

std::vector<double> univariate_candidates(const Eigen::VectorXd& W) {
  std::set<double> uniq;
  for (Eigen::Index j = 0; j < W.size(); ++j)
    if (W[j] != 0.0) uniq.insert(std::abs(W[j]));
  return {uniq.begin(), uniq.end()};
}

}  // namespace

UnivariateSelection univariate_threshold(const Eigen::VectorXd& W, double q) {
  if (q <= 0.0 || q >= 1.0)
    throw std::invalid_argument("univariate_threshold: q must lie in (0, 1)");
  if (!W.allFinite()) throw std::invalid_argument("univariate_threshold: non-finite statistics");

  std::vector<double> sorted_w(W.data(), W.data() + W.size());
  std::sort(sorted_w.begin(), sorted_w.end());

  UnivariateSelection result;
  for (double t : univariate_candidates(W)) {
    if (univariate_ratio(sorted_w, t) <= q) {
      result.threshold = t;
      break;
    }
  }
  if (result.threshold)
    for (Eigen::Index j = 0; j < W.size(); ++j)
      if (W[j] >= *result.threshold) result.selected.push_back(static_cast<int>(j));
  return result;
}

Eigen::VectorXd univariate_qvalues(const Eigen::VectorXd& W) {
  if (!W.allFinite()) throw std::invalid_argument("univariate_qvalues: non-finite statistics");
  std::vector<double> sorted_w(W.data(), W.data() + W.size());
  std::sort(sorted_w.begin(), sorted_w.end());
  const std::vector<double> candidates = univariate_candidates(W);

  std::vector<double> prefix_min(candidates.size());
  double running = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < candidates.size(); ++m) {
    running = std::min(running, univariate_ratio(sorted_w, candidates[m]));
    prefix_min[m] = running;
  }

  Eigen::VectorXd out = Eigen::VectorXd::Ones(W.size());
  for (Eigen::Index j = 0; j < W.size(); ++j) {
    if (W[j] <= 0.0) continue;
    const auto it = std::upper_bound(candidates.begin(), candidates.end(), W[j]);
    if (it != candidates.begin())
      out[j] = std::clamp(prefix_min[static_cast<std::size_t>(it - candidates.begin()) - 1], 0.0, 1.0);
  }
  return out;
}

void save_score_set(const InteractionScoreSet& gamma, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_score_set: cannot write " + path);
  out << "i,j,category,score,weight\n";
  for (const auto& entry : gamma.entries)
    out << entry.i << ',' << entry.j << ',' << category_name(entry.category) << ','
        << csv::format_double(entry.score) << ',' << csv::format_double(entry.weight) << '\n';
  if (!out) throw std::runtime_error("save_score_set: write failed for " + path);
}

InteractionScoreSet load_score_set(const std::string& path) {
  const csv::Table table = csv::read_table(path);
  const auto ci = table.column_index("i");
  const auto cj = table.column_index("j");
  const auto cc = table.column_index("category");
  const auto cs = table.column_index("score");
  const auto cw = table.column_index("weight");
  InteractionScoreSet gamma;
  int max_index = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    ScoreEntry entry;
    entry.i = static_cast<int>(csv::parse_double(row[ci], "column i"));
    entry.j = static_cast<int>(csv::parse_double(row[cj], "column j"));
    entry.category = parse_category(row[cc]);
    entry.score = csv::parse_double(row[cs], "column score");
    entry.weight = csv::parse_double(row[cw], "column weight");
    max_index = std::max({max_index, entry.i, entry.j});
    gamma.entries.push_back(entry);
  }
  gamma.p = max_index / 2;
  // Categories pin down p exactly when mixed; fall back to the index span.
  for (const auto& entry : gamma.entries) {
    if (entry.category == Category::OK) {
      gamma.p = std::max(gamma.p, entry.i);  // i is the original side
    }
  }
  return gamma;
}

}  // namespace knockint::fdr
