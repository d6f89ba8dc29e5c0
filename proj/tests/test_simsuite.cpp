#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "knockint/rng.hpp"
#include "knockint/simsuite.hpp"

using namespace knockint;
using Eigen::VectorXd;

namespace {

// Independent re-implementation used as the agreement oracle: every function
// is a sum of term lambdas written in a different algebraic form than the
// production evaluator (exp/log forms for powers, hypot-style compositions).
double oracle_eval(int fid, const VectorXd& xv) {
  auto x = [&](int k) { return xv[k - 1]; };
  using Term = std::function<double()>;
  std::vector<Term> terms;
  const double ln_pi = std::log(std::numbers::pi);
  switch (fid) {
    case 1:
      terms = {
          [&] { return std::exp(x(1) * x(2) * ln_pi) * std::exp(0.5 * std::log(2.0 * x(3))); },
          [&] { return -std::asin(x(4)); },
          [&] { return std::log(x(3) + x(5)); },
          [&] { return -(x(9) / x(10)) * std::exp(0.5 * (std::log(x(7)) - std::log(x(8)))); },
          [&] { return -x(2) * x(7); },
      };
      break;
    case 2:
      terms = {
          [&] {
            return std::exp(x(1) * x(2) * ln_pi) * std::exp(0.5 * std::log(2.0 * std::abs(x(3))));
          },
          [&] { return -std::asin(0.5 * x(4)); },
          [&] { return std::log1p(std::abs(x(3) + x(5))); },
          [&] {
            return -(x(9) / (1.0 + std::abs(x(10)))) * std::sqrt(x(7)) /
                   std::sqrt(1.0 + std::abs(x(8)));
          },
          [&] { return -x(2) * x(7); },
      };
      break;
    case 3:
      terms = {
          [&] { return std::exp(std::abs(x(1) - x(2))); },
          [&] { return std::abs(x(2)) * std::abs(x(3)); },
          [&] { return -std::exp(2.0 * std::abs(x(4)) * std::log(x(3))); },
          [&] { return std::log(x(4) * x(4) + x(5) * x(5) + x(7) * x(7) + x(8) * x(8)); },
          [&] { return x(9); },
          [&] { return 1.0 / (1.0 + x(10) * x(10)); },
      };
      break;
    case 4:
      terms = {
          [&] { return std::exp(std::abs(x(1) - x(2))); },
          [&] { return std::abs(x(2)) * std::abs(x(3)); },
          [&] { return -std::exp(2.0 * std::abs(x(4)) * std::log(x(3))); },
          [&] { return std::pow(x(1), 2.0) * std::pow(x(4), 2.0); },
          [&] { return std::log(x(4) * x(4) + x(5) * x(5) + x(7) * x(7) + x(8) * x(8)); },
          [&] { return x(9); },
          [&] { return 1.0 / (1.0 + x(10) * x(10)); },
      };
      break;
    case 5:
      terms = {
          [&] { return std::pow(1.0 + x(1) * x(1) + x(2) * x(2) + x(3) * x(3), -1.0); },
          [&] { return std::exp(0.5 * (x(4) + x(5))); },
          [&] { return std::abs(x(6) + x(7)); },
          [&] { return x(8) * x(9) * x(10); },
      };
      break;
    case 6:
      terms = {
          [&] { return std::exp(std::abs(x(1) * x(2)) + 1.0); },
          [&] { return -std::exp(std::abs(x(3) + x(4)) + 1.0); },
          [&] { return std::cos(x(5) + x(6) - x(8)); },
          [&] { return std::hypot(x(8), std::hypot(x(9), x(10))); },
      };
      break;
    case 7:
      terms = {
          [&] { return std::pow(std::atan(x(1)) + std::atan(x(2)), 2.0); },
          [&] { return std::max(x(3) * x(4) + x(6), 0.0); },
          [&] {
            const double prod = x(4) * x(5) * x(6) * x(7) * x(8);
            return -std::pow(1.0 + prod * prod, -1.0);
          },
          [&] { return std::pow(std::abs(x(7)) / (1.0 + std::abs(x(9))), 5.0); },
          [&] {
            double sum = 0.0;
            for (int k = 1; k <= 10; ++k) sum += x(k);
            return sum;
          },
      };
      break;
    case 8:
      terms = {
          [&] { return x(1) * x(2); },
          [&] { return std::exp((x(3) + x(5) + x(6)) * std::log(2.0)); },
          [&] { return std::exp((x(3) + x(4) + x(5) + x(7)) * std::log(2.0)); },
          [&] { return std::sin(x(7) * std::sin(x(8) + x(9))); },
          [&] { return std::acos(0.9 * x(10)); },
      };
      break;
    case 9:
      terms = {
          [&] { return std::tanh(x(1) * x(2) + x(3) * x(4)) * std::sqrt(std::abs(x(5))); },
          [&] { return std::exp(x(5)) * std::exp(x(6)); },
          [&] { return std::log1p(std::pow(x(6) * x(7) * x(8), 2.0)); },
          [&] { return x(9) * x(10); },
          [&] { return std::pow(1.0 + std::abs(x(10)), -1.0); },
      };
      break;
    case 10:
      terms = {
          [&] { return 0.5 * (std::exp(x(1) + x(2)) - std::exp(-x(1) - x(2))); },
          [&] { return std::acos(std::tanh(x(3) + x(5) + x(7))); },
          [&] { return std::cos(x(4) + x(5)); },
          [&] { return 1.0 / std::cos(x(7) * x(9)); },
      };
      break;
  }
  double total = 0.0;
  for (const auto& term : terms) total += term();
  return total;
}

VectorXd half_vector(int n = 10) { return VectorXd::Constant(n, 0.5); }

}  // namespace

TEST_SUITE_BEGIN("simsuite");

TEST_CASE("hand-evaluated spot values") {
  CHECK(simsuite::eval_function(1, half_vector()) == doctest::Approx(-0.442264).epsilon(1e-5));
  CHECK(simsuite::eval_function(5, half_vector()) == doctest::Approx(3.345150).epsilon(1e-5));
}

TEST_CASE("zero exponent drops the first factor's x1 dependence") {
  VectorXd a = half_vector();
  VectorXd b = half_vector();
  a[1] = 0.0;  // x2 = 0 shuts off pi^{x1 x2} and x2 x7
  b[1] = 0.0;
  a[0] = 0.1;
  b[0] = 0.9;
  CHECK(simsuite::eval_function(1, a) == doctest::Approx(simsuite::eval_function(1, b)));
}

TEST_CASE("agreement with the independently coded evaluator") {
  Rng rng(2024);
  for (int fid = 1; fid <= 10; ++fid) {
    for (int trial = 0; trial < 1000; ++trial) {
      VectorXd x(10);
      for (int k = 0; k < 10; ++k) x[k] = 0.001 + 0.998 * rng.uniform();
      const double ours = simsuite::eval_function(fid, x);
      const double oracle = oracle_eval(fid, x);
      CHECK(ours == doctest::Approx(oracle).epsilon(1e-12));
    }
  }
}

TEST_CASE("domain violations raise instead of returning NaN") {
  VectorXd x = half_vector();
  x[9] = 0.0;  // x10 = 0: zero denominator in F1
  CHECK_THROWS_AS((void)simsuite::eval_function(1, x), std::domain_error);

  x = half_vector();
  x[2] = 0.0;
  x[4] = 0.0;  // log(x3 + x5) with both zero
  CHECK_THROWS_AS((void)simsuite::eval_function(1, x), std::domain_error);

  x = half_vector();
  x[3] = 1.5;  // asin out of range
  CHECK_THROWS_AS((void)simsuite::eval_function(1, x), std::domain_error);

  CHECK_THROWS_AS((void)simsuite::eval_function(0, half_vector()), std::invalid_argument);
  CHECK_THROWS_AS((void)simsuite::eval_function(11, half_vector()), std::invalid_argument);
}

TEST_CASE("ground truth pair tables") {
  using P = std::pair<int, int>;
  const auto f5 = simsuite::ground_truth_pairs(5).pairs;
  CHECK(f5.count(P{8, 9}) == 1);
  CHECK(f5.count(P{8, 10}) == 1);
  CHECK(f5.count(P{9, 10}) == 1);
  CHECK(f5 == simsuite::PairSet{{1, 2}, {1, 3}, {2, 3}, {4, 5}, {6, 7}, {8, 9}, {8, 10}, {9, 10}});

  const auto f1 = simsuite::ground_truth_pairs(1).pairs;
  CHECK(f1.count(P{3, 5}) == 1);
  CHECK(f1.count(P{2, 7}) == 1);
  CHECK(f1.size() == 11);

  // The plain sum in F7 contributes no pair: (9,10) only co-occur additively.
  const auto f7 = simsuite::ground_truth_pairs(7).pairs;
  CHECK(f7.count(P{9, 10}) == 0);
  CHECK(f7.count(P{1, 3}) == 0);

  const auto f10 = simsuite::ground_truth_pairs(10).pairs;
  CHECK(f10 == simsuite::PairSet{{1, 2}, {3, 5}, {3, 7}, {5, 7}, {4, 5}, {7, 9}});

  for (int fid = 1; fid <= 10; ++fid) {
    for (const auto& [i, j] : simsuite::ground_truth_pairs(fid).pairs) {
      CHECK(i >= 1);
      CHECK(i < j);
      CHECK(j <= 10);
    }
  }
}

TEST_CASE("generate_dataset determinism, shape, and construction") {
  simsuite::SimulationSpec spec;
  spec.function_id = 1;
  spec.n_samples = 1000;
  spec.n_features = 30;
  spec.seed = 99;
  const auto [data_a, truth_a] = simsuite::generate_dataset(spec);
  const auto [data_b, truth_b] = simsuite::generate_dataset(spec);
  CHECK(data_a.X == data_b.X);
  CHECK(data_a.y == data_b.y);
  CHECK(truth_a.pairs == truth_b.pairs);

  CHECK(data_a.X.rows() == 1000);
  CHECK(data_a.X.cols() == 30);
  CHECK(data_a.X.minCoeff() >= 0.0);
  CHECK(data_a.X.maxCoeff() < 1.0);
  CHECK(data_a.y.allFinite());

  for (int r : {0, 17, 999})
    CHECK(data_a.y[r] ==
          doctest::Approx(simsuite::eval_function(1, data_a.X.row(r).transpose())));

  simsuite::SimulationSpec other = spec;
  other.seed = 100;
  const auto [data_c, truth_c] = simsuite::generate_dataset(other);
  CHECK(data_a.X != data_c.X);

  simsuite::SimulationSpec bad = spec;
  bad.n_features = 9;
  CHECK_THROWS_AS((void)simsuite::generate_dataset(bad), std::invalid_argument);
}

TEST_SUITE_END();
