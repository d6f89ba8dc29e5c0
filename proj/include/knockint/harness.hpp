#pragma once

// End-to-end orchestration: data -> knockoffs -> training -> attribution ->
// distillation -> selection -> metrics, across seeded repetitions, with
// every intermediate persisted and a deterministic summary. Wall-clock
// timings go to a separate file so summaries stay byte-reproducible.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "knockint/attribution.hpp"
#include "knockint/baselines.hpp"
#include "knockint/dataset.hpp"
#include "knockint/distill.hpp"
#include "knockint/fdr.hpp"
#include "knockint/model.hpp"
#include "knockint/simsuite.hpp"

namespace knockint::harness {

struct SimulationSource {
  int function_id = 1;
  Eigen::Index n_samples = 4000;
  Eigen::Index n_features = 30;
};

struct CsvSource {
  std::string path;
  std::string response_column;
  bool standardize = true;
  std::vector<std::string> categorical_columns;
  std::string truth_path;  // optional ground-truth pairs JSON
};

struct PipelineConfig {
  std::optional<SimulationSource> simulation;
  std::optional<CsvSource> csv;

  std::string knockoff_method = "gaussian";  // or "permutation"
  std::optional<double> shrinkage;  // unset: 0.1 when n < 10 p, else 0.01

  Task task = Task::regression;
  model::TrainConfig train;

  attribution::Measure measure = attribution::Measure::expected;
  int draws = 128;
  int grid = 16;
  Eigen::Index max_explain_rows = 0;  // 0 = the whole test split

  bool distillation = true;
  double weight_reg = 1.0;
  distill::SplineConfig spline;

  double q = 0.2;
  bool selection_offset = false;  // optional knockoff+-style +1 in the filter

  int repetitions = 1;
  std::uint64_t base_seed = 1;
  int workers = 1;
  std::string out_dir = "run";
  bool persist = true;

  // Baseline knobs (perm-bh / perm-by / featurewise).
  std::string baseline_method;
  int baseline_permutations = 99;
  int baseline_null_epochs = 50;
  int baseline_draws = 32;
  Eigen::Index baseline_explain_rows = 256;
};

PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::string& path);
std::string config_to_json(const PipelineConfig& cfg);  // normalized echo

struct SelectedPair {
  int i = 0, j = 0;
  double score = 0.0;
  double q_value = 1.0;
};

struct RepetitionOutcome {
  int repetition = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;

  bool has_truth = false;
  double fdp = 0.0, power = 0.0, auroc = 0.0;

  std::optional<double> threshold;
  double estimated_fdp = 0.0;
  std::vector<SelectedPair> selected;

  std::map<std::string, double> stage_seconds;
};

struct Aggregate {
  double mean = 0.0, ci_low = 0.0, ci_high = 0.0;
  int n = 0;
};

struct MetricsReport {
  std::vector<RepetitionOutcome> repetitions;
  std::optional<Aggregate> fdp, power, auroc;
  double total_seconds = 0.0;
};

// Runs cfg.repetitions seeded repetitions (seed_r = base_seed + r), persists
// artifacts under cfg.out_dir/rep_<r>/ plus summary.json and timings.json.
// A failed repetition is recorded and does not abort the others.
MetricsReport run_pipeline(const PipelineConfig& cfg);

// Same harness for the comparison procedures named by cfg.baseline_method.
MetricsReport run_baseline(const PipelineConfig& cfg);

// FDP (0/0 := 0) and power of a selected set against ground truth.
std::pair<double, double> fdp_power(const std::vector<fdr::PairKey>& selected,
                                    const simsuite::PairSet& truth);

// Mann-Whitney AUROC with ties counted 1/2. Throws when either class is
// empty.
double auroc(const std::vector<double>& scores, const std::vector<bool>& positive);

// CSV ingestion: declared categorical columns are one-hot expanded, all
// feature columns are optionally z-scored, missing cells raise with the
// offending rows listed.
Dataset ingest_csv(const std::string& path, const std::string& response_column, bool standardize,
                   const std::vector<std::string>& categorical_columns = {});

// Rewrites a finished run directory into plot-ready CSV files
// (fdp_power.csv, score_distributions.csv, qvalue_matrix.csv).
void emit_plot_data(const std::string& run_dir);

void save_truth(const simsuite::GroundTruth& truth, const std::string& path);
simsuite::GroundTruth load_truth(const std::string& path);

Aggregate aggregate_of(const std::vector<double>& values);

}  // namespace knockint::harness
