#include "knockint/simsuite.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "knockint/rng.hpp"

namespace knockint::simsuite {

namespace {

[[noreturn]] void domain_fail(int fid, const std::string& what) {
  throw std::domain_error("F" + std::to_string(fid) + ": " + what);
}

double checked_log(int fid, double arg) {
  if (!(arg > 0.0)) domain_fail(fid, "log argument " + std::to_string(arg) + " <= 0");
  return std::log(arg);
}

double checked_sqrt(int fid, double arg) {
  if (arg < 0.0) domain_fail(fid, "sqrt argument " + std::to_string(arg) + " < 0");
  return std::sqrt(arg);
}

double checked_div(int fid, double num, double den) {
  if (den == 0.0) domain_fail(fid, "zero denominator");
  return num / den;
}

double checked_asin(int fid, double arg) {
  if (arg < -1.0 || arg > 1.0) domain_fail(fid, "asin argument outside [-1, 1]");
  return std::asin(arg);
}

double checked_acos(int fid, double arg) {
  if (arg < -1.0 || arg > 1.0) domain_fail(fid, "acos argument outside [-1, 1]");
  return std::acos(arg);
}

double sec(int fid, double arg) {
  const double c = std::cos(arg);
  if (c == 0.0) domain_fail(fid, "sec pole");
  return 1.0 / c;
}

double eval_impl(int fid, const Eigen::VectorXd& x) {
  // 1-based accessor matching the written formulas.
  auto v = [&](int k) { return x[k - 1]; };
  switch (fid) {
    case 1:
      return std::pow(std::numbers::pi, v(1) * v(2)) * checked_sqrt(fid, 2.0 * v(3)) -
             checked_asin(fid, v(4)) + checked_log(fid, v(3) + v(5)) -
             checked_div(fid, v(9), v(10)) * checked_sqrt(fid, checked_div(fid, v(7), v(8))) -
             v(2) * v(7);
    case 2:
      return std::pow(std::numbers::pi, v(1) * v(2)) * checked_sqrt(fid, 2.0 * std::abs(v(3))) -
             checked_asin(fid, 0.5 * v(4)) + checked_log(fid, std::abs(v(3) + v(5)) + 1.0) -
             (v(9) / (1.0 + std::abs(v(10)))) *
                 checked_sqrt(fid, v(7) / (1.0 + std::abs(v(8)))) -
             v(2) * v(7);
    case 3: {
      if (v(3) < 0.0) domain_fail(fid, "negative base for real exponent");
      const double sq = v(4) * v(4) + v(5) * v(5) + v(7) * v(7) + v(8) * v(8);
      return std::exp(std::abs(v(1) - v(2))) + std::abs(v(2) * v(3)) -
             std::pow(v(3), 2.0 * std::abs(v(4))) + checked_log(fid, sq) + v(9) +
             1.0 / (1.0 + v(10) * v(10));
    }
    case 4: {
      if (v(3) < 0.0) domain_fail(fid, "negative base for real exponent");
      const double sq = v(4) * v(4) + v(5) * v(5) + v(7) * v(7) + v(8) * v(8);
      const double x14 = v(1) * v(4);
      return std::exp(std::abs(v(1) - v(2))) + std::abs(v(2) * v(3)) -
             std::pow(v(3), 2.0 * std::abs(v(4))) + x14 * x14 + checked_log(fid, sq) + v(9) +
             1.0 / (1.0 + v(10) * v(10));
    }
    case 5:
      return 1.0 / (1.0 + v(1) * v(1) + v(2) * v(2) + v(3) * v(3)) +
             checked_sqrt(fid, std::exp(v(4) + v(5))) + std::abs(v(6) + v(7)) +
             v(8) * v(9) * v(10);
    case 6:
      return std::exp(std::abs(v(1) * v(2)) + 1.0) - std::exp(std::abs(v(3) + v(4)) + 1.0) +
             std::cos(v(5) + v(6) - v(8)) +
             checked_sqrt(fid, v(8) * v(8) + v(9) * v(9) + v(10) * v(10));
    case 7: {
      const double at = std::atan(v(1)) + std::atan(v(2));
      const double prod = v(4) * v(5) * v(6) * v(7) * v(8);
      const double ratio = std::abs(v(7)) / (1.0 + std::abs(v(9)));
      double total = at * at + std::max(v(3) * v(4) + v(6), 0.0) - 1.0 / (1.0 + prod * prod) +
                     std::pow(ratio, 5.0);
      for (int k = 1; k <= 10; ++k) total += v(k);
      return total;
    }
    case 8:
      return v(1) * v(2) + std::exp2(v(3) + v(5) + v(6)) + std::exp2(v(3) + v(4) + v(5) + v(7)) +
             std::sin(v(7) * std::sin(v(8) + v(9))) + checked_acos(fid, 0.9 * v(10));
    case 9: {
      const double prod678 = v(6) * v(7) * v(8);
      return std::tanh(v(1) * v(2) + v(3) * v(4)) * checked_sqrt(fid, std::abs(v(5))) +
             std::exp(v(5) + v(6)) + checked_log(fid, prod678 * prod678 + 1.0) + v(9) * v(10) +
             1.0 / (1.0 + std::abs(v(10)));
    }
    case 10:
      return std::sinh(v(1) + v(2)) + checked_acos(fid, std::tanh(v(3) + v(5) + v(7))) +
             std::cos(v(4) + v(5)) + sec(fid, v(7) * v(9));
    default:
      throw std::invalid_argument("eval_function: function_id must be in 1..10");
  }
}

}  // namespace

double eval_function(int function_id, const Eigen::VectorXd& x) {
  if (function_id < 1 || function_id > 10)
    throw std::invalid_argument("eval_function: function_id must be in 1..10");
  if (x.size() < 10)
    throw std::invalid_argument("eval_function: need at least 10 features");
  const double value = eval_impl(function_id, x);
  if (!std::isfinite(value))
    throw std::domain_error("F" + std::to_string(function_id) + ": non-finite value");
  return value;
}

GroundTruth ground_truth_pairs(int function_id) {
  // Static per-function tables: every non-additive multivariate term expanded
  // into its 2-subsets. Purely additive terms (plain sums, univariate maps)
  // contribute nothing.
  auto expand = [](PairSet& out, std::initializer_list<int> vars) {
    for (auto i = vars.begin(); i != vars.end(); ++i)
      for (auto j = std::next(i); j != vars.end(); ++j)
        out.emplace(std::min(*i, *j), std::max(*i, *j));
  };
  PairSet pairs;
  switch (function_id) {
    case 1:
    case 2:
      expand(pairs, {1, 2, 3});     // pi^{x1 x2} * sqrt(2 x3)
      expand(pairs, {3, 5});        // log(x3 + x5)
      expand(pairs, {7, 8, 9, 10}); // (x9/x10) sqrt(x7/x8)
      expand(pairs, {2, 7});        // x2 x7
      break;
    case 3:
      expand(pairs, {1, 2});        // exp|x1 - x2|
      expand(pairs, {2, 3});        // |x2 x3|
      expand(pairs, {3, 4});        // x3^{2|x4|}
      expand(pairs, {4, 5, 7, 8});  // log(sum of squares)
      break;
    case 4:
      expand(pairs, {1, 2});
      expand(pairs, {2, 3});
      expand(pairs, {3, 4});
      expand(pairs, {1, 4});        // (x1 x4)^2
      expand(pairs, {4, 5, 7, 8});
      break;
    case 5:
      expand(pairs, {1, 2, 3});     // 1/(1 + x1^2 + x2^2 + x3^2)
      expand(pairs, {4, 5});        // sqrt(exp(x4 + x5))
      expand(pairs, {6, 7});        // |x6 + x7|
      expand(pairs, {8, 9, 10});    // x8 x9 x10
      break;
    case 6:
      expand(pairs, {1, 2});        // exp(|x1 x2| + 1)
      expand(pairs, {3, 4});        // exp(|x3 + x4| + 1)
      expand(pairs, {5, 6, 8});     // cos(x5 + x6 - x8)
      expand(pairs, {8, 9, 10});    // sqrt(sum of squares)
      break;
    case 7:
      expand(pairs, {1, 2});           // (atan x1 + atan x2)^2
      expand(pairs, {3, 4, 6});        // max(x3 x4 + x6, 0)
      expand(pairs, {4, 5, 6, 7, 8});  // 1/(1 + (x4 x5 x6 x7 x8)^2)
      expand(pairs, {7, 9});           // (|x7|/(1+|x9|))^5
      break;
    case 8:
      expand(pairs, {1, 2});        // x1 x2
      expand(pairs, {3, 5, 6});     // 2^{x3 + x5 + x6}
      expand(pairs, {3, 4, 5, 7});  // 2^{x3 + x4 + x5 + x7}
      expand(pairs, {7, 8, 9});     // sin(x7 sin(x8 + x9))
      break;
    case 9:
      expand(pairs, {1, 2, 3, 4, 5});  // tanh(x1 x2 + x3 x4) sqrt|x5|
      expand(pairs, {5, 6});           // exp(x5 + x6)
      expand(pairs, {6, 7, 8});        // log((x6 x7 x8)^2 + 1)
      expand(pairs, {9, 10});          // x9 x10
      break;
    case 10:
      expand(pairs, {1, 2});     // sinh(x1 + x2)
      expand(pairs, {3, 5, 7});  // acos(tanh(x3 + x5 + x7))
      expand(pairs, {4, 5});     // cos(x4 + x5)
      expand(pairs, {7, 9});     // sec(x7 x9)
      break;
    default:
      throw std::invalid_argument("ground_truth_pairs: function_id must be in 1..10");
  }
  return GroundTruth{std::move(pairs)};
}

std::pair<Dataset, GroundTruth> generate_dataset(const SimulationSpec& spec) {
  if (spec.function_id < 1 || spec.function_id > 10)
    throw std::invalid_argument("generate_dataset: function_id must be in 1..10");
  if (spec.n_samples <= 0) throw std::invalid_argument("generate_dataset: n_samples must be positive");
  if (spec.n_features < 10)
    throw std::invalid_argument("generate_dataset: n_features must be at least 10");

  Dataset data;
  data.X.resize(spec.n_samples, spec.n_features);
  const Rng base(spec.seed);
  for (Eigen::Index j = 0; j < spec.n_features; ++j) {
    Rng col = base.substream(static_cast<std::uint64_t>(j));
    for (Eigen::Index i = 0; i < spec.n_samples; ++i) data.X(i, j) = col.uniform();
  }
  data.y.resize(spec.n_samples);
  for (Eigen::Index i = 0; i < spec.n_samples; ++i)
    data.y[i] = eval_function(spec.function_id, data.X.row(i).transpose());
  data.feature_names.reserve(spec.n_features);
  for (Eigen::Index j = 0; j < spec.n_features; ++j)
    data.feature_names.push_back("x" + std::to_string(j + 1));
  return {std::move(data), ground_truth_pairs(spec.function_id)};
}

}  // namespace knockint::simsuite
