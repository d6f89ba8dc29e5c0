#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "knockint/csv.hpp"
#include "knockint/fdr.hpp"
#include "knockint/harness.hpp"
#include "knockint/rng.hpp"

using namespace knockint;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("knockint_harness_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small but end-to-end pipeline configuration.
std::string small_config(const std::string& out_dir, bool distillation, int reps) {
  std::ostringstream cfg;
  cfg << R"({
    "data": {"type": "simulation", "function": 4, "n": 600, "p": 10},
    "model": {"epochs": 25, "patience": 25},
    "attribution": {"measure": "expected", "draws": 24, "max_explain_rows": 128},
    "distillation": {"enabled": )"
      << (distillation ? "true" : "false") << R"(},
    "selection": {"q": 0.2},
    "repetitions": )"
      << reps << R"(,
    "seed": 11,
    "workers": 2,
    "out_dir": ")"
      << out_dir << R"("
  })";
  return cfg.str();
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("fdp and power bookkeeping") {
  const simsuite::PairSet truth{{1, 2}, {3, 5}, {7, 8}};
  const std::vector<fdr::PairKey> selected{{1, 2}, {3, 5}, {4, 6}};
  const auto [fdp, power] = harness::fdp_power(selected, truth);
  CHECK(fdp == doctest::Approx(1.0 / 3.0));
  CHECK(power == doctest::Approx(2.0 / 3.0));

  const auto [fdp0, power0] = harness::fdp_power({}, truth);
  CHECK(fdp0 == 0.0);
  CHECK(power0 == 0.0);

  const std::vector<fdr::PairKey> exact(truth.begin(), truth.end());
  const auto [fdp1, power1] = harness::fdp_power(exact, truth);
  CHECK(fdp1 == 0.0);
  CHECK(power1 == 1.0);
}

TEST_CASE("auroc with ties counted one half") {
  CHECK(harness::auroc({0.9, 0.7, 0.8}, {true, true, false}) == doctest::Approx(0.5));
  CHECK(harness::auroc({0.9, 0.8, 0.1, 0.2}, {true, true, false, false}) == doctest::Approx(1.0));
  CHECK(harness::auroc({0.5, 0.5, 0.5}, {true, false, false}) == doctest::Approx(0.5));
  CHECK_THROWS_AS((void)harness::auroc({1.0, 2.0}, {true, true}), std::invalid_argument);
}

TEST_CASE("aggregate confidence intervals shrink with more repetitions") {
  std::vector<double> small_sample, large_sample;
  for (int i = 0; i < 10; ++i) small_sample.push_back(0.1 * (i % 5));
  for (int i = 0; i < 40; ++i) large_sample.push_back(0.1 * (i % 5));
  const auto small_agg = harness::aggregate_of(small_sample);
  const auto large_agg = harness::aggregate_of(large_sample);
  CHECK(small_agg.ci_low <= small_agg.mean);
  CHECK(small_agg.mean <= small_agg.ci_high);
  CHECK((large_agg.ci_high - large_agg.ci_low) < (small_agg.ci_high - small_agg.ci_low));
  // Same spread, 4x the count: width shrinks like 1/sqrt(r).
  const double ratio =
      (small_agg.ci_high - small_agg.ci_low) / (large_agg.ci_high - large_agg.ci_low);
  CHECK(ratio == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("csv ingestion standardizes, one-hot expands, and rejects missing cells") {
  const auto dir = temp_dir("ingest");
  const auto path = dir / "data.csv";
  {
    std::ofstream out(path);
    out << "age,group,bmi,progression\n";
    for (int i = 0; i < 30; ++i)
      out << (20 + i) << ',' << (i % 3 == 0 ? "a" : i % 3 == 1 ? "b" : "c") << ','
          << (22.0 + 0.3 * i) << ',' << (50 + 2 * i) << '\n';
  }
  const auto data = harness::ingest_csv(path.string(), "progression", true, {"group"});
  CHECK(data.n_samples() == 30);
  // age, bmi, and three one-hot columns for group.
  CHECK(data.n_features() == 5);
  CHECK(data.feature_names[1] == "group=a");
  for (Eigen::Index c = 0; c < data.X.cols(); ++c) {
    CHECK(std::abs(data.X.col(c).mean()) < 1e-9);
    const double sd = std::sqrt(data.X.col(c).squaredNorm() / 29.0);
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(data.y[0] == doctest::Approx(50.0));  // response stays raw

  {
    std::ofstream out(path);
    out << "a,b,y\n1,2,3\n4,,6\n7,8,\n";
  }
  CHECK_THROWS_WITH_AS((void)harness::ingest_csv(path.string(), "y", true),
                       doctest::Contains("rows 3 4"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("truth json round trip") {
  const auto dir = temp_dir("truth");
  simsuite::GroundTruth truth;
  truth.pairs = {{1, 2}, {3, 9}};
  harness::save_truth(truth, (dir / "truth.json").string());
  const auto loaded = harness::load_truth((dir / "truth.json").string());
  CHECK(loaded.pairs == truth.pairs);
  fs::remove_all(dir);
}

TEST_CASE("pipeline runs deterministically and persists reloadable artifacts") {
  const auto dir_a = temp_dir("det_a");
  const auto dir_b = temp_dir("det_b");
  const auto report_a =
      harness::run_pipeline(harness::parse_config(small_config(dir_a.string(), true, 2)));
  const auto report_b =
      harness::run_pipeline(harness::parse_config(small_config(dir_b.string(), true, 2)));

  for (const auto& rep : report_a.repetitions) {
    REQUIRE(rep.ok);
    CHECK(rep.has_truth);
    CHECK(rep.fdp >= 0.0);
    CHECK(rep.fdp <= 1.0);
    CHECK(rep.power >= 0.0);
    CHECK(rep.power <= 1.0);
    CHECK(rep.auroc >= 0.0);
    CHECK(rep.auroc <= 1.0);
  }

  // Byte-identical summaries modulo the configured output directory.
  std::string sum_a = slurp(dir_a / "summary.json");
  std::string sum_b = slurp(dir_b / "summary.json");
  const auto scrub = [](std::string s, const std::string& needle) {
    for (std::size_t at = s.find(needle); at != std::string::npos; at = s.find(needle, at))
      s.erase(at, needle.size());
    return s;
  };
  CHECK(scrub(sum_a, dir_a.string()) == scrub(sum_b, dir_b.string()));

  // Re-loading the persisted gamma reproduces the persisted selection.
  const auto gamma = fdr::load_score_set((dir_a / "rep_0" / "gamma.csv").string());
  const auto sel = fdr::interaction_threshold(gamma, 0.2, true);
  const std::string sel_json = slurp(dir_a / "rep_0" / "selection.json");
  if (sel.threshold)
    CHECK(sel_json.find(csv::format_double(*sel.threshold).substr(0, 10)) != std::string::npos);

  // Attribution file reloads and re-distills to the same gamma.
  const auto attr = attribution::load_attribution((dir_a / "rep_0" / "attrib.json").string());
  const auto gamma_again = distill::distill(attr);
  REQUIRE(gamma_again.entries.size() == gamma.entries.size());
  for (std::size_t k = 0; k < gamma.entries.size(); ++k)
    CHECK(gamma_again.entries[k].score ==
          doctest::Approx(gamma.entries[k].score).epsilon(1e-12));

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("distillation toggle changes the summary") {
  const auto dir = temp_dir("nodistill");
  const auto report =
      harness::run_pipeline(harness::parse_config(small_config(dir.string(), false, 1)));
  REQUIRE(report.repetitions[0].ok);
  const std::string summary = slurp(dir / "summary.json");
  CHECK(summary.find("\"enabled\": false") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("csv-sourced runs without truth report selections but no metrics") {
  const auto dir = temp_dir("csvrun");
  const auto csv_path = dir / "input.csv";
  {
    std::ofstream out(csv_path);
    out << "x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,x11,x12,y\n";
    Rng rng(3);
    for (int i = 0; i < 400; ++i) {
      double y = 0.0;
      for (int c = 0; c < 12; ++c) {
        const double v = rng.uniform();
        out << v << ',';
        if (c == 0 || c == 1) y += v;
      }
      out << y + 0.5 * rng.uniform() << '\n';
    }
  }
  std::ostringstream cfg;
  cfg << R"({"data": {"type": "csv", "path": ")" << csv_path.string()
      << R"(", "response": "y"},
          "model": {"epochs": 10, "patience": 10},
          "attribution": {"draws": 8, "max_explain_rows": 64},
          "repetitions": 1, "seed": 5, "out_dir": ")"
      << dir.string() << R"("})";
  const auto report = harness::run_pipeline(harness::parse_config(cfg.str()));
  REQUIRE(report.repetitions[0].ok);
  CHECK_FALSE(report.repetitions[0].has_truth);
  CHECK_FALSE(report.fdp.has_value());
  const std::string summary = slurp(dir / "summary.json");
  CHECK(summary.find("\"metrics\": null") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("plot data emission covers the three views") {
  const auto dir = temp_dir("plots");
  (void)harness::run_pipeline(harness::parse_config(small_config(dir.string(), true, 2)));
  harness::emit_plot_data(dir.string());
  CHECK(fs::exists(dir / "fdp_power.csv"));
  CHECK(fs::exists(dir / "score_distributions.csv"));
  CHECK(fs::exists(dir / "qvalue_matrix.csv"));

  const auto dist = csv::read_table((dir / "score_distributions.csv").string());
  bool has_raw = false, has_distilled = false;
  for (const auto& row : dist.rows) {
    if (row[1] == "raw") has_raw = true;
    if (row[1] == "distilled") has_distilled = true;
  }
  CHECK(has_raw);
  CHECK(has_distilled);

  const auto qmat = csv::read_table((dir / "qvalue_matrix.csv").string());
  CHECK(qmat.rows.size() == 45);  // all OO pairs for p = 10
  fs::remove_all(dir);
}

TEST_CASE("config errors are rejected up front") {
  CHECK_THROWS_AS((void)harness::run_pipeline(harness::parse_config(R"({"repetitions": 0})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      (void)harness::run_pipeline(harness::parse_config(
          R"({"data": {"type": "simulation"}, "selection": {"q": 1.5}, "persist": false})")),
      std::invalid_argument);
}

TEST_SUITE_END();
