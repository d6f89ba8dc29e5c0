// Command-line front end. Subcommands mirror the pipeline stages so each
// intermediate file can be produced and inspected on its own; `pipeline`
// runs everything across seeded repetitions.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "knockint/attribution.hpp"
#include "knockint/csv.hpp"
#include "knockint/dataset.hpp"
#include "knockint/distill.hpp"
#include "knockint/fdr.hpp"
#include "knockint/harness.hpp"
#include "knockint/knockoffs.hpp"
#include "knockint/model.hpp"
#include "knockint/simsuite.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

using knockint::Dataset;
using Eigen::Index;
using Eigen::MatrixXd;

// data.csv layout: feature columns then one response column.
Dataset read_dataset_csv(const std::string& path, const std::string& response) {
  const auto table = knockint::csv::read_table(path);
  const auto mat = knockint::csv::to_matrix(table);
  const auto response_idx = static_cast<Index>(table.column_index(response));
  Dataset data;
  data.response_name = response;
  data.y = mat.col(response_idx);
  data.X.resize(mat.rows(), mat.cols() - 1);
  Index out = 0;
  for (Index c = 0; c < mat.cols(); ++c) {
    if (c == response_idx) continue;
    data.X.col(out++) = mat.col(c);
    data.feature_names.push_back(table.header[static_cast<std::size_t>(c)]);
  }
  return data;
}

struct AugmentedCsv {
  knockint::AugmentedDataset data;
};

// aug.csv layout: originals, then the *_ko twins, then the response.
AugmentedCsv read_augmented_csv(const std::string& path, const std::string& response) {
  const auto table = knockint::csv::read_table(path);
  const auto mat = knockint::csv::to_matrix(table);
  const auto response_idx = static_cast<Index>(table.column_index(response));
  std::vector<Index> originals, knockoffs;
  for (Index c = 0; c < mat.cols(); ++c) {
    if (c == response_idx) continue;
    const std::string& name = table.header[static_cast<std::size_t>(c)];
    if (name.size() > 3 && name.substr(name.size() - 3) == "_ko")
      knockoffs.push_back(c);
    else
      originals.push_back(c);
  }
  if (originals.size() != knockoffs.size())
    throw std::runtime_error("augmented csv must hold matching original and *_ko columns");
  AugmentedCsv out;
  out.data.columns.resize(mat.rows(), static_cast<Index>(originals.size() + knockoffs.size()));
  for (std::size_t c = 0; c < originals.size(); ++c)
    out.data.columns.col(static_cast<Index>(c)) = mat.col(originals[c]);
  for (std::size_t c = 0; c < knockoffs.size(); ++c)
    out.data.columns.col(static_cast<Index>(originals.size() + c)) = mat.col(knockoffs[c]);
  out.data.response = mat.col(response_idx);
  return out;
}

int run_app(int argc, char** argv) {
  CLI::App app{"FDR-controlled discovery of non-additive feature interactions"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic benchmark dataset");
  int sim_function = 1;
  Index sim_n = 4000, sim_p = 30;
  std::uint64_t sim_seed = 1;
  std::string sim_out = "data.csv", sim_truth = "truth.json";
  simulate->add_option("--function", sim_function, "Generating function id (1..10)")
      ->check(CLI::Range(1, 10));
  simulate->add_option("--n", sim_n, "Sample count");
  simulate->add_option("--p", sim_p, "Feature count (>= 10)");
  simulate->add_option("--seed", sim_seed, "Seed");
  simulate->add_option("--out", sim_out, "Output CSV path");
  simulate->add_option("--truth", sim_truth, "Ground-truth pairs JSON path");

  // knockoffs
  auto* knockoffs_cmd = app.add_subcommand("knockoffs", "Sample knockoff columns for a dataset");
  std::string ko_in = "data.csv", ko_method = "gaussian", ko_out = "knockoffs.csv",
              ko_response = "y";
  std::uint64_t ko_seed = 1;
  double ko_shrinkage = -1.0;
  knockoffs_cmd->add_option("--in", ko_in, "Input dataset CSV")->required();
  knockoffs_cmd->add_option("--method", ko_method, "gaussian or permutation")
      ->check(CLI::IsMember({"gaussian", "permutation"}));
  knockoffs_cmd->add_option("--seed", ko_seed, "Seed");
  knockoffs_cmd->add_option("--out", ko_out, "Output CSV path");
  knockoffs_cmd->add_option("--response", ko_response, "Response column name");
  knockoffs_cmd->add_option("--shrinkage", ko_shrinkage,
                            "Covariance shrinkage in [0,1] (negative = default rule)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the coupling MLP on augmented data");
  std::string tr_data = "data.csv", tr_ko = "knockoffs.csv", tr_model = "model.json",
              tr_aug = "", tr_task = "regression", tr_response = "y";
  knockint::model::TrainConfig tr_cfg;
  std::uint64_t tr_seed = 1;
  train_cmd->add_option("--data", tr_data, "Dataset CSV")->required();
  train_cmd->add_option("--knockoffs", tr_ko, "Knockoff CSV")->required();
  train_cmd->add_option("--out", tr_model, "Model checkpoint path");
  train_cmd->add_option("--aug-out", tr_aug, "Also write the augmented matrix CSV here");
  train_cmd->add_option("--task", tr_task, "regression or binary")
      ->check(CLI::IsMember({"regression", "binary"}));
  train_cmd->add_option("--response", tr_response, "Response column name");
  train_cmd->add_option("--epochs", tr_cfg.epochs, "Epoch budget");
  train_cmd->add_option("--batch-size", tr_cfg.batch_size, "Mini-batch size");
  train_cmd->add_option("--learning-rate", tr_cfg.learning_rate, "Learning rate");
  train_cmd->add_option("--weight-decay", tr_cfg.weight_decay, "L2 penalty");
  train_cmd->add_option("--validation-fraction", tr_cfg.validation_fraction,
                        "Validation slice in (0, 0.5]");
  train_cmd->add_option("--patience", tr_cfg.patience, "Early-stopping patience");
  train_cmd->add_option("--seed", tr_seed, "Seed");

  // attribute
  auto* attribute = app.add_subcommand("attribute", "Compute interaction importances");
  std::string at_model = "model.json", at_data = "aug.csv", at_measure = "expected",
              at_out = "attrib.json", at_response = "y";
  int at_draws = 128, at_grid = 16;
  std::uint64_t at_seed = 1;
  int at_workers = 1;
  attribute->add_option("--model", at_model, "Model checkpoint")->required();
  attribute->add_option("--data", at_data, "Augmented CSV (originals, *_ko, response)")
      ->required();
  attribute->add_option("--measure", at_measure, "expected | integrated | model-specific")
      ->check(CLI::IsMember({"expected", "integrated", "model-specific"}));
  attribute->add_option("--draws", at_draws, "Monte Carlo draws per explained row");
  attribute->add_option("--grid", at_grid, "Quadrature points per axis");
  attribute->add_option("--seed", at_seed, "Seed");
  attribute->add_option("--workers", at_workers, "Worker threads");
  attribute->add_option("--response", at_response, "Response column name");
  attribute->add_option("--out", at_out, "Output JSON path");

  // distill
  auto* distill_cmd = app.add_subcommand("distill", "Distill non-additive interaction scores");
  std::string di_attrib = "attrib.json", di_out = "gamma.csv";
  double di_reg = 1.0;
  distill_cmd->add_option("--attrib", di_attrib, "Attribution JSON")->required();
  distill_cmd->add_option("--out", di_out, "Output gamma CSV");
  distill_cmd->add_option("--weight-reg", di_reg, "Logistic ridge strength");

  // select
  auto* select_cmd = app.add_subcommand("select", "Apply the interaction knockoff filter");
  std::string se_gamma = "gamma.csv", se_out = "selection.json";
  double se_q = 0.2;
  select_cmd->add_option("--gamma", se_gamma, "Gamma CSV")->required();
  select_cmd->add_option("--q", se_q, "Target FDR level in (0,1)");
  select_cmd->add_option("--out", se_out, "Output JSON path");

  // baseline
  auto* baseline_cmd = app.add_subcommand("baseline", "Run a comparison FDR procedure");
  std::string bl_config, bl_method = "perm-bh", bl_out_dir;
  double bl_q = -1.0;
  std::uint64_t bl_seed = 0;
  bool bl_seed_set = false;
  int bl_workers = 0;
  baseline_cmd->add_option("--config", bl_config, "Pipeline config JSON")->required();
  baseline_cmd->add_option("--method", bl_method, "perm-bh | perm-by | featurewise")
      ->check(CLI::IsMember({"perm-bh", "perm-by", "featurewise"}));
  baseline_cmd->add_option("--q", bl_q, "Override target FDR level");
  baseline_cmd->add_option("--seed", bl_seed, "Override base seed")
      ->each([&](const std::string&) { bl_seed_set = true; });
  baseline_cmd->add_option("--workers", bl_workers, "Override worker count");
  baseline_cmd->add_option("--out-dir", bl_out_dir, "Override output directory");

  // pipeline
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run the full pipeline");
  std::string pl_config, pl_out_dir;
  std::uint64_t pl_seed = 0;
  bool pl_seed_set = false;
  int pl_workers = 0;
  pipeline_cmd->add_option("--config", pl_config, "Pipeline config JSON")->required();
  pipeline_cmd->add_option("--seed", pl_seed, "Override base seed")
      ->each([&](const std::string&) { pl_seed_set = true; });
  pipeline_cmd->add_option("--workers", pl_workers, "Override worker count");
  pipeline_cmd->add_option("--out-dir", pl_out_dir, "Override output directory");

  // plot-data
  auto* plot_cmd = app.add_subcommand("plot-data", "Emit plot-ready CSVs for a finished run");
  std::string pd_dir;
  plot_cmd->add_option("--run-dir", pd_dir, "Run directory with summary.json")->required();

  app.add_subcommand("version", "Print the version");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("version")) {
    std::cout << "knockint " << kVersion << '\n';
    return kExitOk;
  }

  if (app.got_subcommand(simulate)) {
    knockint::simsuite::SimulationSpec spec;
    spec.function_id = sim_function;
    spec.n_samples = sim_n;
    spec.n_features = sim_p;
    spec.seed = sim_seed;
    auto [data, truth] = knockint::simsuite::generate_dataset(spec);
    std::vector<std::string> header = data.feature_names;
    header.push_back("y");
    MatrixXd m(data.X.rows(), data.X.cols() + 1);
    m << data.X, data.y;
    knockint::csv::write_matrix(sim_out, header, m);
    knockint::harness::save_truth(truth, sim_truth);
    std::cout << "wrote " << sim_out << " and " << sim_truth << '\n';
    return kExitOk;
  }

  if (app.got_subcommand(knockoffs_cmd)) {
    const Dataset data = read_dataset_csv(ko_in, ko_response);
    MatrixXd ko;
    if (ko_method == "gaussian") {
      const double shrink = ko_shrinkage >= 0.0
                                ? ko_shrinkage
                                : (data.n_samples() < 10 * data.n_features() ? 0.1 : 0.01);
      const auto model = knockint::knockoffs::fit_gaussian(data.X, shrink);
      ko = knockint::knockoffs::sample_knockoffs(model, data.X, ko_seed);
    } else {
      ko = knockint::knockoffs::permutation_knockoffs(data.X, ko_seed);
    }
    std::vector<std::string> header;
    for (const auto& name : data.feature_names) header.push_back(name + "_ko");
    knockint::csv::write_matrix(ko_out, header, ko);
    std::cout << "wrote " << ko_out << '\n';
    return kExitOk;
  }

  if (app.got_subcommand(train_cmd)) {
    const Dataset data = read_dataset_csv(tr_data, tr_response);
    const auto ko_table = knockint::csv::read_table(tr_ko);
    const MatrixXd ko = knockint::csv::to_matrix(ko_table);
    const auto aug = knockint::augment(data, ko);
    tr_cfg.seed = tr_seed;
    const auto task =
        tr_task == "binary" ? knockint::Task::binary : knockint::Task::regression;
    knockint::model::TrainReport report;
    const auto net = knockint::model::train(aug, tr_cfg, task, &report);
    net.save(tr_model);
    if (!tr_aug.empty()) {
      std::vector<std::string> header = data.feature_names;
      for (const auto& name : data.feature_names) header.push_back(name + "_ko");
      header.push_back(tr_response);
      MatrixXd m(aug.columns.rows(), aug.columns.cols() + 1);
      m << aug.columns, aug.response;
      knockint::csv::write_matrix(tr_aug, header, m);
    }
    std::cout << "trained for " << report.epochs_run << " epochs (best epoch "
              << report.best_epoch << ", validation loss " << report.best_validation_loss
              << "); wrote " << tr_model << '\n';
    return kExitOk;
  }

  if (app.got_subcommand(attribute)) {
    const auto net = knockint::model::CouplingMLP::load(at_model);
    const auto aug = read_augmented_csv(at_data, at_response);
    knockint::attribution::AttributionResult attr;
    const auto measure = knockint::attribution::parse_measure(at_measure);
    if (measure == knockint::attribution::Measure::model_specific) {
      attr = knockint::attribution::model_specific_attributions(net);
    } else if (measure == knockint::attribution::Measure::expected) {
      attr = knockint::attribution::expected_attributions(net, aug.data.columns, aug.data.columns,
                                                          at_draws, at_seed, at_workers);
    } else {
      attr = knockint::attribution::integrated_attributions(net, aug.data.columns,
                                                            aug.data.columns, at_grid, at_workers);
    }
    knockint::attribution::save_attribution(attr, at_out, at_seed);
    std::cout << "wrote " << at_out << '\n';
    return kExitOk;
  }

  if (app.got_subcommand(distill_cmd)) {
    const auto attr = knockint::attribution::load_attribution(di_attrib);
    const auto gamma = knockint::distill::distill(attr, di_reg);
    knockint::fdr::save_score_set(gamma, di_out);
    std::cout << "wrote " << di_out << " (" << gamma.entries.size() << " pairs)\n";
    return kExitOk;
  }

  if (app.got_subcommand(select_cmd)) {
    const auto gamma = knockint::fdr::load_score_set(se_gamma);
    const auto sel = knockint::fdr::interaction_threshold(gamma, se_q);
    nlohmann::json doc;
    doc["q"] = se_q;
    if (sel.threshold)
      doc["threshold"] = *sel.threshold;
    else
      doc["threshold"] = nullptr;
    doc["estimated_fdp"] = sel.estimated_fdp;
    nlohmann::json selected = nlohmann::json::array();
    for (const auto& entry : sel.selected) {
      const auto it = sel.q_values.find({entry.i, entry.j});
      selected.push_back(
          {entry.i, entry.j, entry.score, it == sel.q_values.end() ? 1.0 : it->second});
    }
    doc["selected"] = std::move(selected);
    nlohmann::json qvals = nlohmann::json::array();
    for (const auto& [key, value] : sel.q_values)
      qvals.push_back({key.first, key.second, value});
    doc["q_values"] = std::move(qvals);
    std::ofstream out(se_out);
    out << doc.dump(2) << '\n';
    std::cout << "wrote " << se_out << " (" << sel.selected.size() << " selected)\n";
    return kExitOk;
  }

  if (app.got_subcommand(baseline_cmd)) {
    auto cfg = knockint::harness::load_config(bl_config);
    cfg.baseline_method = bl_method;
    if (bl_q > 0.0) cfg.q = bl_q;
    if (bl_seed_set) cfg.base_seed = bl_seed;
    if (bl_workers > 0) cfg.workers = bl_workers;
    if (!bl_out_dir.empty()) cfg.out_dir = bl_out_dir;
    const auto report = knockint::harness::run_baseline(cfg);
    for (const auto& rep : report.repetitions)
      if (!rep.ok) {
        std::cerr << "repetition " << rep.repetition << " failed: " << rep.error << '\n';
        return kExitStage;
      }
    if (report.fdp)
      std::cout << "mean FDP " << report.fdp->mean << ", mean power " << report.power->mean
                << '\n';
    std::cout << "summary written to " << cfg.out_dir << "/summary.json\n";
    return kExitOk;
  }

  if (app.got_subcommand(pipeline_cmd)) {
    auto cfg = knockint::harness::load_config(pl_config);
    if (pl_seed_set) cfg.base_seed = pl_seed;
    if (pl_workers > 0) cfg.workers = pl_workers;
    if (!pl_out_dir.empty()) cfg.out_dir = pl_out_dir;
    const auto report = knockint::harness::run_pipeline(cfg);
    bool any_failed = false;
    for (const auto& rep : report.repetitions)
      if (!rep.ok) {
        std::cerr << "repetition " << rep.repetition << " failed: " << rep.error << '\n';
        any_failed = true;
      }
    if (report.fdp)
      std::cout << "mean FDP " << report.fdp->mean << ", mean power " << report.power->mean
                << ", mean AUROC " << report.auroc->mean << '\n';
    std::cout << "summary written to " << cfg.out_dir << "/summary.json\n";
    return any_failed ? kExitStage : kExitOk;
  }

  if (app.got_subcommand(plot_cmd)) {
    knockint::harness::emit_plot_data(pd_dir);
    std::cout << "plot data written to " << pd_dir << '\n';
    return kExitOk;
  }

  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_app(argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
}
