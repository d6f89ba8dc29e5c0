#include "knockint/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "knockint/csv.hpp"
#include "knockint/knockoffs.hpp"
#include "knockint/parallel.hpp"
#include "knockint/rng.hpp"

namespace knockint::harness {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

// Stage keys for per-repetition seed derivation.
enum StageSeed : std::uint64_t {
  kSplitSeed = 21,
  kKnockoffSeed = 22,
  kTrainSeed = 23,
  kAttributionSeed = 24,
  kBaselineSeed = 25,
};

double default_shrinkage(Index n, Index p) { return n < 10 * p ? 0.1 : 0.01; }

struct StageTimer {
  std::map<std::string, double>& sink;
  std::string name;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  StageTimer(std::map<std::string, double>& sink, std::string name)
      : sink(sink), name(std::move(name)) {}
  ~StageTimer() {
    sink[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::pair<std::vector<Index>, std::vector<Index>> split_half(Index n, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    const auto k = static_cast<Index>(rng.bounded(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(k)]);
  }
  const Index n_train = n / 2;
  std::vector<Index> train(order.begin(), order.begin() + n_train);
  std::vector<Index> test(order.begin() + n_train, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

MatrixXd gather_rows(const MatrixXd& m, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

AugmentedDataset gather_aug(const AugmentedDataset& aug, const std::vector<Index>& rows) {
  AugmentedDataset out;
  out.columns = gather_rows(aug.columns, rows);
  out.response.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.response[static_cast<Index>(i)] = aug.response[rows[i]];
  return out;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::vector<std::string> header = data.feature_names;
  header.push_back(data.response_name);
  MatrixXd m(data.X.rows(), data.X.cols() + 1);
  m << data.X, data.y;
  csv::write_matrix(path, header, m);
}

void write_knockoffs_csv(const Dataset& data, const MatrixXd& ko, const std::string& path) {
  std::vector<std::string> header;
  header.reserve(data.feature_names.size());
  for (const auto& name : data.feature_names) header.push_back(name + "_ko");
  csv::write_matrix(path, header, ko);
}

json selection_to_json(const fdr::SelectionResult& sel, double q) {
  json doc;
  doc["q"] = q;
  if (sel.threshold)
    doc["threshold"] = *sel.threshold;
  else
    doc["threshold"] = nullptr;
  doc["estimated_fdp"] = sel.estimated_fdp;
  json selected = json::array();
  for (const auto& entry : sel.selected) {
    const auto qv_it = sel.q_values.find({entry.i, entry.j});
    const double qv = qv_it == sel.q_values.end() ? 1.0 : qv_it->second;
    selected.push_back({entry.i, entry.j, entry.score, qv});
  }
  doc["selected"] = std::move(selected);
  json qvals = json::array();
  for (const auto& [key, value] : sel.q_values) qvals.push_back({key.first, key.second, value});
  doc["q_values"] = std::move(qvals);
  return doc;
}

struct RepContext {
  const PipelineConfig& cfg;
  const Dataset* shared_data = nullptr;          // csv source, loaded once
  const simsuite::GroundTruth* shared_truth = nullptr;
  int attribution_workers = 1;
};

struct RepArtifacts {
  Dataset data;
  simsuite::GroundTruth truth;
  bool has_truth = false;
  std::vector<Index> train_rows, test_rows;
  MatrixXd knockoffs;
  AugmentedDataset augmented;
  model::CouplingMLP net;
  model::TrainReport train_report;
  attribution::AttributionResult attr;
};

RepArtifacts build_artifacts(const RepContext& ctx, std::uint64_t seed_r,
                             std::map<std::string, double>& timings) {
  const PipelineConfig& cfg = ctx.cfg;
  RepArtifacts art;

  {
    StageTimer timer(timings, "data");
    if (cfg.simulation) {
      simsuite::SimulationSpec spec;
      spec.function_id = cfg.simulation->function_id;
      spec.n_samples = cfg.simulation->n_samples;
      spec.n_features = cfg.simulation->n_features;
      spec.seed = seed_r;
      auto [data, truth] = simsuite::generate_dataset(spec);
      art.data = std::move(data);
      art.truth = std::move(truth);
      art.has_truth = true;
    } else {
      art.data = *ctx.shared_data;
      if (ctx.shared_truth) {
        art.truth = *ctx.shared_truth;
        art.has_truth = true;
      }
    }
  }

  std::tie(art.train_rows, art.test_rows) =
      split_half(art.data.n_samples(), derive_seed(seed_r, kSplitSeed));

  {
    StageTimer timer(timings, "knockoffs");
    if (cfg.knockoff_method == "gaussian") {
      const MatrixXd x_train = gather_rows(art.data.X, art.train_rows);
      const double shrink = cfg.shrinkage.value_or(
          default_shrinkage(static_cast<Index>(art.train_rows.size()), art.data.n_features()));
      const auto ko_model = knockoffs::fit_gaussian(x_train, shrink);
      art.knockoffs = knockoffs::sample_knockoffs(ko_model, art.data.X,
                                                  derive_seed(seed_r, kKnockoffSeed));
    } else if (cfg.knockoff_method == "permutation") {
      art.knockoffs =
          knockoffs::permutation_knockoffs(art.data.X, derive_seed(seed_r, kKnockoffSeed));
    } else {
      throw std::invalid_argument("unknown knockoff method '" + cfg.knockoff_method + "'");
    }
  }
  art.augmented = augment(art.data, art.knockoffs);

  {
    StageTimer timer(timings, "train");
    model::TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seed_r, kTrainSeed);
    const AugmentedDataset train_subset = gather_aug(art.augmented, art.train_rows);
    art.net = model::train(train_subset, tc, cfg.task, &art.train_report);
  }

  {
    StageTimer timer(timings, "attribution");
    if (cfg.measure == attribution::Measure::model_specific) {
      art.attr = attribution::model_specific_attributions(art.net);
    } else {
      std::vector<Index> explain_rows = art.test_rows;
      if (cfg.max_explain_rows > 0 &&
          static_cast<Index>(explain_rows.size()) > cfg.max_explain_rows)
        explain_rows.resize(static_cast<std::size_t>(cfg.max_explain_rows));
      const MatrixXd explain = gather_rows(art.augmented.columns, explain_rows);
      if (cfg.measure == attribution::Measure::expected)
        art.attr = attribution::expected_attributions(art.net, explain, explain, cfg.draws,
                                                      derive_seed(seed_r, kAttributionSeed),
                                                      ctx.attribution_workers);
      else
        art.attr = attribution::integrated_attributions(art.net, explain, explain, cfg.grid,
                                                        ctx.attribution_workers);
    }
  }
  return art;
}

void persist_artifacts(const RepArtifacts& art, const PipelineConfig& cfg,
                       const std::string& rep_dir, std::uint64_t seed_r) {
  fs::create_directories(rep_dir);
  write_dataset_csv(art.data, rep_dir + "/data.csv");
  if (art.has_truth) save_truth(art.truth, rep_dir + "/truth.json");
  write_knockoffs_csv(art.data, art.knockoffs, rep_dir + "/knockoffs.csv");
  art.net.save(rep_dir + "/model.json");
  attribution::save_attribution(art.attr, rep_dir + "/attrib.json",
                                derive_seed(seed_r, kAttributionSeed));
  (void)cfg;
}

std::vector<fdr::PairKey> selected_keys(const std::vector<fdr::ScoreEntry>& selected) {
  std::vector<fdr::PairKey> keys;
  keys.reserve(selected.size());
  for (const auto& entry : selected) keys.emplace_back(entry.i, entry.j);
  return keys;
}

double auroc_from_gamma(const fdr::InteractionScoreSet& gamma, const simsuite::PairSet& truth) {
  std::vector<double> scores;
  std::vector<bool> positive;
  for (const auto& entry : gamma.entries) {
    if (entry.category != fdr::Category::OO) continue;
    scores.push_back(entry.score);
    positive.push_back(truth.count({entry.i, entry.j}) > 0);
  }
  return auroc(scores, positive);
}

RepetitionOutcome run_one_pipeline(const RepContext& ctx, int rep) {
  const PipelineConfig& cfg = ctx.cfg;
  RepetitionOutcome outcome;
  outcome.repetition = rep;
  outcome.seed = cfg.base_seed + static_cast<std::uint64_t>(rep);
  const std::string rep_dir = cfg.out_dir + "/rep_" + std::to_string(rep);

  RepArtifacts art = build_artifacts(ctx, outcome.seed, outcome.stage_seconds);

  fdr::InteractionScoreSet gamma;
  {
    StageTimer timer(outcome.stage_seconds, "distill");
    gamma = cfg.distillation ? distill::distill(art.attr, cfg.weight_reg, cfg.spline)
                             : distill::undistilled_scores(art.attr);
  }

  fdr::SelectionResult sel;
  {
    StageTimer timer(outcome.stage_seconds, "select");
    sel = fdr::interaction_threshold(gamma, cfg.q, cfg.selection_offset);
  }

  outcome.threshold = sel.threshold;
  outcome.estimated_fdp = sel.estimated_fdp;
  for (const auto& entry : sel.selected) {
    const auto qv_it = sel.q_values.find({entry.i, entry.j});
    outcome.selected.push_back(
        {entry.i, entry.j, entry.score,
         qv_it == sel.q_values.end() ? 1.0 : qv_it->second});
  }

  if (art.has_truth) {
    outcome.has_truth = true;
    const auto [fdp, power] = fdp_power(selected_keys(sel.selected), art.truth.pairs);
    outcome.fdp = fdp;
    outcome.power = power;
    outcome.auroc = auroc_from_gamma(gamma, art.truth.pairs);
  }

  if (cfg.persist) {
    StageTimer timer(outcome.stage_seconds, "persist");
    persist_artifacts(art, cfg, rep_dir, outcome.seed);
    fdr::save_score_set(gamma, rep_dir + "/gamma.csv");
    std::ofstream out(rep_dir + "/selection.json");
    out << selection_to_json(sel, cfg.q).dump(2) << '\n';
  }

  outcome.ok = true;
  return outcome;
}

RepetitionOutcome run_one_baseline(const RepContext& ctx, int rep) {
  const PipelineConfig& cfg = ctx.cfg;
  RepetitionOutcome outcome;
  outcome.repetition = rep;
  outcome.seed = cfg.base_seed + static_cast<std::uint64_t>(rep);
  const std::string rep_dir = cfg.out_dir + "/rep_" + std::to_string(rep);

  std::vector<fdr::PairKey> selected;
  std::map<fdr::PairKey, double> pair_scores;  // ranking scores for AUROC
  std::map<fdr::PairKey, double> pair_q;
  json selection_doc;
  selection_doc["q"] = cfg.q;
  selection_doc["threshold"] = nullptr;
  selection_doc["estimated_fdp"] = nullptr;

  simsuite::GroundTruth truth;
  bool has_truth = false;
  Dataset data_copy;

  if (cfg.baseline_method == "featurewise") {
    RepArtifacts art = build_artifacts(ctx, outcome.seed, outcome.stage_seconds);
    has_truth = art.has_truth;
    truth = art.truth;
    data_copy = art.data;
    StageTimer timer(outcome.stage_seconds, "select");
    const auto result = baselines::featurewise_aggregation(art.attr.e1d, cfg.q);
    selected = result.selected;
    for (const auto& [key, qv] : result.pair_q) {
      pair_q[key] = qv;
      pair_scores[key] = -qv;
    }
    if (cfg.persist) {
      persist_artifacts(art, cfg, rep_dir, outcome.seed);
    }
  } else if (cfg.baseline_method == "perm-bh" || cfg.baseline_method == "perm-by") {
    // Shared front end: data, split, knockoffs (independent of the response).
    RepArtifacts art;
    {
      // Build only data/split/knockoffs here; the permutation machinery does
      // its own (repeated) training and attribution.
      const PipelineConfig& c = cfg;
      StageTimer timer(outcome.stage_seconds, "data");
      if (c.simulation) {
        simsuite::SimulationSpec spec;
        spec.function_id = c.simulation->function_id;
        spec.n_samples = c.simulation->n_samples;
        spec.n_features = c.simulation->n_features;
        spec.seed = outcome.seed;
        auto [data, tr] = simsuite::generate_dataset(spec);
        art.data = std::move(data);
        art.truth = std::move(tr);
        art.has_truth = true;
      } else {
        art.data = *ctx.shared_data;
        if (ctx.shared_truth) {
          art.truth = *ctx.shared_truth;
          art.has_truth = true;
        }
      }
    }
    has_truth = art.has_truth;
    truth = art.truth;
    std::tie(art.train_rows, art.test_rows) =
        split_half(art.data.n_samples(), derive_seed(outcome.seed, kSplitSeed));
    {
      StageTimer timer(outcome.stage_seconds, "knockoffs");
      if (cfg.knockoff_method == "gaussian") {
        const MatrixXd x_train = gather_rows(art.data.X, art.train_rows);
        const double shrink = cfg.shrinkage.value_or(default_shrinkage(
            static_cast<Index>(art.train_rows.size()), art.data.n_features()));
        const auto ko_model = knockoffs::fit_gaussian(x_train, shrink);
        art.knockoffs = knockoffs::sample_knockoffs(ko_model, art.data.X,
                                                    derive_seed(outcome.seed, kKnockoffSeed));
      } else {
        art.knockoffs = knockoffs::permutation_knockoffs(
            art.data.X, derive_seed(outcome.seed, kKnockoffSeed));
      }
    }
    art.augmented = augment(art.data, art.knockoffs);
    data_copy = art.data;

    baselines::PermutationConfig pcfg;
    pcfg.observed_train = cfg.train;
    pcfg.null_epochs = cfg.baseline_null_epochs;
    pcfg.draws = cfg.baseline_draws;
    pcfg.task = cfg.task;
    pcfg.workers = ctx.attribution_workers;

    std::vector<Index> explain_rows = art.test_rows;
    if (cfg.baseline_explain_rows > 0 &&
        static_cast<Index>(explain_rows.size()) > cfg.baseline_explain_rows)
      explain_rows.resize(static_cast<std::size_t>(cfg.baseline_explain_rows));

    baselines::PValueTable table;
    {
      StageTimer timer(outcome.stage_seconds, "permutation_pvalues");
      table = baselines::permutation_pvalues(art.augmented, art.train_rows, explain_rows, pcfg,
                                             cfg.baseline_permutations,
                                             derive_seed(outcome.seed, kBaselineSeed));
    }
    {
      StageTimer timer(outcome.stage_seconds, "select");
      selected = (cfg.baseline_method == "perm-bh") ? baselines::bh_select(table, cfg.q)
                                                    : baselines::by_select(table, cfg.q);
    }
    for (std::size_t s = 0; s < table.pairs.size(); ++s) {
      pair_scores[table.pairs[s]] = -table.p[static_cast<Index>(s)];
      pair_q[table.pairs[s]] = table.p[static_cast<Index>(s)];
    }
    if (cfg.persist) {
      fs::create_directories(rep_dir);
      write_dataset_csv(art.data, rep_dir + "/data.csv");
      if (art.has_truth) save_truth(art.truth, rep_dir + "/truth.json");
      write_knockoffs_csv(art.data, art.knockoffs, rep_dir + "/knockoffs.csv");
      std::ofstream pv(rep_dir + "/pvalues.csv");
      pv << "i,j,pvalue\n";
      for (std::size_t s = 0; s < table.pairs.size(); ++s)
        pv << table.pairs[s].first << ',' << table.pairs[s].second << ','
           << csv::format_double(table.p[static_cast<Index>(s)]) << '\n';
    }
  } else {
    throw std::invalid_argument("unknown baseline method '" + cfg.baseline_method + "'");
  }

  // Selected pairs with their q-style scores.
  for (const auto& key : selected) {
    SelectedPair sp;
    sp.i = key.first;
    sp.j = key.second;
    sp.score = pair_scores.count(key) ? pair_scores[key] : 0.0;
    sp.q_value = pair_q.count(key) ? pair_q[key] : 1.0;
    outcome.selected.push_back(sp);
  }
  if (has_truth) {
    outcome.has_truth = true;
    const auto [fdp, power] = fdp_power(selected, truth.pairs);
    outcome.fdp = fdp;
    outcome.power = power;
    std::vector<double> scores;
    std::vector<bool> positive;
    for (const auto& [key, score] : pair_scores) {
      scores.push_back(score);
      positive.push_back(truth.pairs.count(key) > 0);
    }
    outcome.auroc = auroc(scores, positive);
  }
  if (cfg.persist) {
    fs::create_directories(rep_dir);
    json sel_list = json::array();
    for (const auto& sp : outcome.selected)
      sel_list.push_back({sp.i, sp.j, sp.score, sp.q_value});
    selection_doc["selected"] = std::move(sel_list);
    json qvals = json::array();
    for (const auto& [key, qv] : pair_q) qvals.push_back({key.first, key.second, qv});
    selection_doc["q_values"] = std::move(qvals);
    std::ofstream out(rep_dir + "/selection.json");
    out << selection_doc.dump(2) << '\n';
  }
  outcome.ok = true;
  return outcome;
}

json outcome_to_json(const RepetitionOutcome& outcome) {
  json doc;
  doc["repetition"] = outcome.repetition;
  doc["seed"] = outcome.seed;
  doc["ok"] = outcome.ok;
  if (!outcome.ok) {
    doc["error"] = outcome.error;
    return doc;
  }
  if (outcome.has_truth) {
    doc["metrics"] = {{"fdp", outcome.fdp}, {"power", outcome.power}, {"auroc", outcome.auroc}};
  } else {
    doc["metrics"] = nullptr;
  }
  if (outcome.threshold)
    doc["threshold"] = *outcome.threshold;
  else
    doc["threshold"] = nullptr;
  doc["estimated_fdp"] = outcome.estimated_fdp;
  json selected = json::array();
  for (const auto& sp : outcome.selected)
    selected.push_back({sp.i, sp.j, sp.score, sp.q_value});
  doc["selected"] = std::move(selected);
  return doc;
}

json aggregate_to_json(const std::optional<Aggregate>& agg) {
  if (!agg) return nullptr;
  return json{{"mean", agg->mean}, {"ci_low", agg->ci_low}, {"ci_high", agg->ci_high},
              {"n", agg->n}};
}

MetricsReport run_common(const PipelineConfig& cfg, bool baseline) {
  if (cfg.repetitions < 1) throw std::invalid_argument("config: repetitions must be >= 1");
  if (cfg.q <= 0.0 || cfg.q >= 1.0) throw std::invalid_argument("config: q must lie in (0, 1)");
  if (cfg.simulation.has_value() == cfg.csv.has_value())
    throw std::invalid_argument("config: exactly one data source must be set");

  const auto t_start = std::chrono::steady_clock::now();

  Dataset shared_data;
  simsuite::GroundTruth shared_truth;
  bool shared_has_truth = false;
  RepContext ctx{cfg};
  if (cfg.csv) {
    shared_data = ingest_csv(cfg.csv->path, cfg.csv->response_column, cfg.csv->standardize,
                             cfg.csv->categorical_columns);
    ctx.shared_data = &shared_data;
    if (!cfg.csv->truth_path.empty()) {
      shared_truth = load_truth(cfg.csv->truth_path);
      ctx.shared_truth = &shared_truth;
      shared_has_truth = true;
    }
  }
  (void)shared_has_truth;
  ctx.attribution_workers = cfg.repetitions == 1 ? cfg.workers : 1;

  if (cfg.persist) fs::create_directories(cfg.out_dir);

  MetricsReport report;
  report.repetitions.resize(static_cast<std::size_t>(cfg.repetitions));
  parallel_tasks(static_cast<std::size_t>(cfg.repetitions), cfg.workers, [&](std::size_t r) {
    try {
      report.repetitions[r] =
          baseline ? run_one_baseline(ctx, static_cast<int>(r)) : run_one_pipeline(ctx, static_cast<int>(r));
    } catch (const std::exception& e) {
      RepetitionOutcome failed;
      failed.repetition = static_cast<int>(r);
      failed.seed = cfg.base_seed + r;
      failed.ok = false;
      failed.error = e.what();
      report.repetitions[r] = std::move(failed);
    }
  });

  std::vector<double> fdps, powers, aurocs;
  for (const auto& outcome : report.repetitions) {
    if (!outcome.ok || !outcome.has_truth) continue;
    fdps.push_back(outcome.fdp);
    powers.push_back(outcome.power);
    aurocs.push_back(outcome.auroc);
  }
  if (!fdps.empty()) {
    report.fdp = aggregate_of(fdps);
    report.power = aggregate_of(powers);
    report.auroc = aggregate_of(aurocs);
  }
  report.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  if (cfg.persist) {
    json summary;
    summary["schema"] = "knockint-summary-v1";
    summary["kind"] = baseline ? "baseline" : "pipeline";
    summary["config"] = json::parse(config_to_json(cfg));
    json reps = json::array();
    for (const auto& outcome : report.repetitions) reps.push_back(outcome_to_json(outcome));
    summary["repetitions"] = std::move(reps);
    summary["aggregate"] = {{"fdp", aggregate_to_json(report.fdp)},
                            {"power", aggregate_to_json(report.power)},
                            {"auroc", aggregate_to_json(report.auroc)}};
    std::ofstream out(cfg.out_dir + "/summary.json");
    out << summary.dump(2) << '\n';

    json timings;
    timings["total_seconds"] = report.total_seconds;
    json rep_times = json::array();
    for (const auto& outcome : report.repetitions) {
      json entry;
      entry["repetition"] = outcome.repetition;
      entry["stages"] = outcome.stage_seconds;
      rep_times.push_back(std::move(entry));
    }
    timings["repetitions"] = std::move(rep_times);
    std::ofstream tout(cfg.out_dir + "/timings.json");
    tout << timings.dump(2) << '\n';
  }
  return report;
}

}  // namespace

MetricsReport run_pipeline(const PipelineConfig& cfg) { return run_common(cfg, false); }

MetricsReport run_baseline(const PipelineConfig& cfg) {
  if (cfg.baseline_method.empty())
    throw std::invalid_argument("run_baseline: baseline method not set");
  return run_common(cfg, true);
}

std::pair<double, double> fdp_power(const std::vector<fdr::PairKey>& selected,
                                    const simsuite::PairSet& truth) {
  long tp = 0;
  for (const auto& key : selected)
    if (truth.count(key)) ++tp;
  const double fdp = selected.empty()
                         ? 0.0
                         : static_cast<double>(static_cast<long>(selected.size()) - tp) /
                               static_cast<double>(selected.size());
  const double power =
      truth.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(truth.size());
  return {fdp, power};
}

double auroc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("auroc: length mismatch");
  long n_pos = 0;
  for (bool flag : positive) n_pos += flag ? 1 : 0;
  const long n_neg = static_cast<long>(positive.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auroc: need at least one positive and one negative");
  double favorable = 0.0;
  for (std::size_t a = 0; a < scores.size(); ++a) {
    if (!positive[a]) continue;
    for (std::size_t b = 0; b < scores.size(); ++b) {
      if (positive[b]) continue;
      if (scores[a] > scores[b])
        favorable += 1.0;
      else if (scores[a] == scores[b])
        favorable += 0.5;
    }
  }
  return favorable / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

Dataset ingest_csv(const std::string& path, const std::string& response_column, bool standardize,
                   const std::vector<std::string>& categorical_columns) {
  const csv::Table table = csv::read_table(path);
  const std::size_t response_idx = table.column_index(response_column);
  const std::set<std::string> categorical(categorical_columns.begin(),
                                          categorical_columns.end());
  for (const auto& name : categorical_columns)
    (void)table.column_index(name);  // validate declared names

  const auto n = static_cast<Index>(table.rows.size());
  if (n == 0) throw std::runtime_error("ingest_csv: no data rows in " + path);

  // Missing cells are an error; collect all offending rows first.
  std::vector<std::size_t> missing_rows;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (const auto& cell : table.rows[r])
      if (cell.empty()) {
        missing_rows.push_back(r + 2);  // 1-based with header
        break;
      }
  if (!missing_rows.empty()) {
    std::ostringstream msg;
    msg << "ingest_csv: missing values in rows";
    for (std::size_t r : missing_rows) msg << ' ' << r;
    throw std::runtime_error(msg.str());
  }

  std::vector<std::string> names;
  std::vector<VectorXd> columns;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == response_idx) continue;
    const std::string& name = table.header[c];
    if (categorical.count(name)) {
      std::set<std::string> levels;
      for (const auto& row : table.rows) levels.insert(row[c]);
      for (const auto& level : levels) {
        VectorXd column(n);
        for (Index r = 0; r < n; ++r)
          column[r] = table.rows[static_cast<std::size_t>(r)][c] == level ? 1.0 : 0.0;
        names.push_back(name + "=" + level);
        columns.push_back(std::move(column));
      }
    } else {
      VectorXd column(n);
      for (Index r = 0; r < n; ++r)
        column[r] = csv::parse_double(table.rows[static_cast<std::size_t>(r)][c],
                                      "row " + std::to_string(r + 2) + ", column " + name);
      names.push_back(name);
      columns.push_back(std::move(column));
    }
  }

  Dataset data;
  data.feature_names = names;
  data.response_name = response_column;
  data.X.resize(n, static_cast<Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) data.X.col(static_cast<Index>(c)) = columns[c];
  data.y.resize(n);
  for (Index r = 0; r < n; ++r)
    data.y[r] = csv::parse_double(table.rows[static_cast<std::size_t>(r)][response_idx],
                                  "row " + std::to_string(r + 2) + ", response");

  if (standardize) {
    for (Index c = 0; c < data.X.cols(); ++c) {
      const double mean = data.X.col(c).mean();
      data.X.col(c).array() -= mean;
      const double sd =
          std::sqrt(data.X.col(c).squaredNorm() / static_cast<double>(std::max<Index>(n - 1, 1)));
      if (sd < 1e-12)
        throw std::runtime_error("ingest_csv: feature '" + data.feature_names[static_cast<std::size_t>(c)] +
                                 "' is constant and cannot be standardized");
      data.X.col(c) /= sd;
    }
  }
  return data;
}

void save_truth(const simsuite::GroundTruth& truth, const std::string& path) {
  json doc;
  json pairs = json::array();
  for (const auto& [i, j] : truth.pairs) pairs.push_back({i, j});
  doc["pairs"] = std::move(pairs);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_truth: cannot write " + path);
  out << doc.dump() << '\n';
}

simsuite::GroundTruth load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_truth: cannot open " + path);
  const json doc = json::parse(in);
  simsuite::GroundTruth truth;
  for (const auto& pair : doc.at("pairs")) {
    const int i = pair.at(0).get<int>();
    const int j = pair.at(1).get<int>();
    truth.pairs.emplace(std::min(i, j), std::max(i, j));
  }
  return truth;
}

Aggregate aggregate_of(const std::vector<double>& values) {
  Aggregate agg;
  agg.n = static_cast<int>(values.size());
  if (values.empty()) return agg;
  agg.mean = std::accumulate(values.begin(), values.end(), 0.0) / agg.n;
  double var = 0.0;
  for (double v : values) var += (v - agg.mean) * (v - agg.mean);
  const double sd = values.size() > 1 ? std::sqrt(var / (agg.n - 1)) : 0.0;
  const double half = 1.96 * sd / std::sqrt(static_cast<double>(agg.n));
  agg.ci_low = agg.mean - half;
  agg.ci_high = agg.mean + half;
  return agg;
}

PipelineConfig parse_config(const std::string& json_text) {
  const json doc = json::parse(json_text);
  PipelineConfig cfg;

  if (doc.contains("data")) {
    const auto& data = doc.at("data");
    const std::string type = data.value("type", "simulation");
    if (type == "simulation") {
      SimulationSource sim;
      sim.function_id = data.value("function", 1);
      sim.n_samples = data.value("n", 4000);
      sim.n_features = data.value("p", 30);
      cfg.simulation = sim;
    } else if (type == "csv") {
      CsvSource src;
      src.path = data.at("path").get<std::string>();
      src.response_column = data.at("response").get<std::string>();
      src.standardize = data.value("standardize", true);
      if (data.contains("categoricals"))
        src.categorical_columns = data.at("categoricals").get<std::vector<std::string>>();
      src.truth_path = data.value("truth", "");
      cfg.csv = src;
    } else {
      throw std::invalid_argument("config: unknown data type '" + type + "'");
    }
  }

  if (doc.contains("knockoffs")) {
    const auto& ko = doc.at("knockoffs");
    cfg.knockoff_method = ko.value("method", "gaussian");
    if (ko.contains("shrinkage") && !ko.at("shrinkage").is_null())
      cfg.shrinkage = ko.at("shrinkage").get<double>();
  }

  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    cfg.task = m.value("task", "regression") == "binary" ? Task::binary : Task::regression;
    cfg.train.epochs = m.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = m.value("batch_size", cfg.train.batch_size);
    cfg.train.learning_rate = m.value("learning_rate", cfg.train.learning_rate);
    cfg.train.weight_decay = m.value("weight_decay", cfg.train.weight_decay);
    cfg.train.validation_fraction = m.value("validation_fraction", cfg.train.validation_fraction);
    cfg.train.patience = m.value("patience", cfg.train.patience);
    cfg.train.max_grad_norm = m.value("max_grad_norm", cfg.train.max_grad_norm);
    cfg.train.residual_clip_mads = m.value("residual_clip_mads", cfg.train.residual_clip_mads);
    cfg.train.lr_floor_fraction = m.value("lr_floor_fraction", cfg.train.lr_floor_fraction);
  }

  if (doc.contains("attribution")) {
    const auto& a = doc.at("attribution");
    cfg.measure = attribution::parse_measure(a.value("measure", "expected"));
    cfg.draws = a.value("draws", cfg.draws);
    cfg.grid = a.value("grid", cfg.grid);
    cfg.max_explain_rows = a.value("max_explain_rows", cfg.max_explain_rows);
  }

  if (doc.contains("distillation")) {
    const auto& d = doc.at("distillation");
    cfg.distillation = d.value("enabled", true);
    cfg.weight_reg = d.value("weight_reg", cfg.weight_reg);
  }

  if (doc.contains("selection")) {
    cfg.q = doc.at("selection").value("q", cfg.q);
    cfg.selection_offset = doc.at("selection").value("offset", cfg.selection_offset);
  }

  if (doc.contains("baseline")) {
    const auto& b = doc.at("baseline");
    cfg.baseline_method = b.value("method", "");
    cfg.baseline_permutations = b.value("permutations", cfg.baseline_permutations);
    cfg.baseline_null_epochs = b.value("null_epochs", cfg.baseline_null_epochs);
    cfg.baseline_draws = b.value("draws", cfg.baseline_draws);
    cfg.baseline_explain_rows = b.value("explain_rows", cfg.baseline_explain_rows);
  }

  cfg.repetitions = doc.value("repetitions", cfg.repetitions);
  cfg.base_seed = doc.value("seed", cfg.base_seed);
  cfg.workers = doc.value("workers", cfg.workers);
  cfg.out_dir = doc.value("out_dir", cfg.out_dir);
  cfg.persist = doc.value("persist", cfg.persist);
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string config_to_json(const PipelineConfig& cfg) {
  json doc;
  if (cfg.simulation) {
    doc["data"] = {{"type", "simulation"},
                   {"function", cfg.simulation->function_id},
                   {"n", cfg.simulation->n_samples},
                   {"p", cfg.simulation->n_features}};
  } else if (cfg.csv) {
    doc["data"] = {{"type", "csv"},
                   {"path", cfg.csv->path},
                   {"response", cfg.csv->response_column},
                   {"standardize", cfg.csv->standardize},
                   {"categoricals", cfg.csv->categorical_columns},
                   {"truth", cfg.csv->truth_path}};
  }
  doc["knockoffs"] = {{"method", cfg.knockoff_method}};
  if (cfg.shrinkage)
    doc["knockoffs"]["shrinkage"] = *cfg.shrinkage;
  else
    doc["knockoffs"]["shrinkage"] = nullptr;
  doc["model"] = {{"task", cfg.task == Task::binary ? "binary" : "regression"},
                  {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate},
                  {"weight_decay", cfg.train.weight_decay},
                  {"validation_fraction", cfg.train.validation_fraction},
                  {"patience", cfg.train.patience},
                  {"max_grad_norm", cfg.train.max_grad_norm},
                  {"residual_clip_mads", cfg.train.residual_clip_mads},
                  {"lr_floor_fraction", cfg.train.lr_floor_fraction}};
  doc["attribution"] = {{"measure", attribution::measure_name(cfg.measure)},
                        {"draws", cfg.draws},
                        {"grid", cfg.grid},
                        {"max_explain_rows", cfg.max_explain_rows}};
  doc["distillation"] = {{"enabled", cfg.distillation}, {"weight_reg", cfg.weight_reg}};
  doc["selection"] = {{"q", cfg.q}, {"offset", cfg.selection_offset}};
  if (!cfg.baseline_method.empty())
    doc["baseline"] = {{"method", cfg.baseline_method},
                       {"permutations", cfg.baseline_permutations},
                       {"null_epochs", cfg.baseline_null_epochs},
                       {"draws", cfg.baseline_draws},
                       {"explain_rows", cfg.baseline_explain_rows}};
  doc["repetitions"] = cfg.repetitions;
  doc["seed"] = cfg.base_seed;
  doc["workers"] = cfg.workers;
  doc["out_dir"] = cfg.out_dir;
  doc["persist"] = cfg.persist;
  return doc.dump();
}

void emit_plot_data(const std::string& run_dir) {
  std::ifstream in(run_dir + "/summary.json");
  if (!in) throw std::runtime_error("emit_plot_data: no summary.json in " + run_dir);
  const json summary = json::parse(in);
  const bool distilled = summary.at("config").at("distillation").value("enabled", true);
  const bool is_pipeline = summary.value("kind", "pipeline") == "pipeline";

  std::ofstream fdp_out(run_dir + "/fdp_power.csv");
  fdp_out << "repetition,fdp,power,auroc\n";
  std::ofstream dist_out(run_dir + "/score_distributions.csv");
  dist_out << "repetition,stage,category,score\n";

  std::map<fdr::PairKey, std::pair<double, long>> q_accumulator;

  for (const auto& rep : summary.at("repetitions")) {
    if (!rep.value("ok", false)) continue;
    const int r = rep.at("repetition").get<int>();
    if (!rep.at("metrics").is_null()) {
      const auto& metrics = rep.at("metrics");
      fdp_out << r << ',' << csv::format_double(metrics.at("fdp").get<double>()) << ','
              << csv::format_double(metrics.at("power").get<double>()) << ','
              << csv::format_double(metrics.at("auroc").get<double>()) << '\n';
    }
    const std::string rep_dir = run_dir + "/rep_" + std::to_string(r);

    if (is_pipeline) {
      // Raw (undistilled) pairwise importances from the attribution file.
      if (fs::exists(rep_dir + "/attrib.json")) {
        const auto attr = attribution::load_attribution(rep_dir + "/attrib.json");
        const auto raw = distill::undistilled_scores(attr);
        for (const auto& entry : raw.entries)
          dist_out << r << ",raw," << fdr::category_name(entry.category) << ','
                   << csv::format_double(entry.score) << '\n';
      }
      if (distilled && fs::exists(rep_dir + "/gamma.csv")) {
        const auto gamma = fdr::load_score_set(rep_dir + "/gamma.csv");
        for (const auto& entry : gamma.entries)
          dist_out << r << ",distilled," << fdr::category_name(entry.category) << ','
                   << csv::format_double(entry.score) << '\n';
      }
    }

    if (fs::exists(rep_dir + "/selection.json")) {
      std::ifstream sel_in(rep_dir + "/selection.json");
      const json sel = json::parse(sel_in);
      if (sel.contains("q_values")) {
        for (const auto& row : sel.at("q_values")) {
          const fdr::PairKey key{row.at(0).get<int>(), row.at(1).get<int>()};
          auto& slot = q_accumulator[key];
          slot.first += row.at(2).get<double>();
          slot.second += 1;
        }
      }
    }
  }

  std::ofstream q_out(run_dir + "/qvalue_matrix.csv");
  q_out << "i,j,mean_qvalue\n";
  for (const auto& [key, slot] : q_accumulator)
    q_out << key.first << ',' << key.second << ','
          << csv::format_double(slot.first / static_cast<double>(slot.second)) << '\n';
}

}  // namespace knockint::harness
