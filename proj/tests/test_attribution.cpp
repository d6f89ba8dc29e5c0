#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "knockint/attribution.hpp"
#include "knockint/model.hpp"
#include "knockint/rng.hpp"
#include "knockint/scalar_field.hpp"

using namespace knockint;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// f(x) = x_a * x_b over d inputs; constant cross-derivative.
struct BilinearField : ScalarField {
  Index d, a, b;
  BilinearField(Index d, Index a, Index b) : d(d), a(a), b(b) {}
  Index dim() const override { return d; }
  double value(const VectorXd& x) const override { return x[a] * x[b]; }
  VectorXd gradient(const VectorXd& x) const override {
    VectorXd g = VectorXd::Zero(d);
    g[a] = x[b];
    g[b] = x[a];
    return g;
  }
  MatrixXd hessian(const VectorXd& x) const override {
    (void)x;
    MatrixXd h = MatrixXd::Zero(d, d);
    h(a, b) = h(b, a) = 1.0;
    return h;
  }
};

struct ConstantField : ScalarField {
  Index d;
  explicit ConstantField(Index d) : d(d) {}
  Index dim() const override { return d; }
  double value(const VectorXd&) const override { return 3.5; }
  VectorXd gradient(const VectorXd&) const override { return VectorXd::Zero(d); }
  MatrixXd hessian(const VectorXd&) const override { return MatrixXd::Zero(d, d); }
};

struct LinearField : ScalarField {
  VectorXd coef;
  explicit LinearField(VectorXd c) : coef(std::move(c)) {}
  Index dim() const override { return coef.size(); }
  double value(const VectorXd& x) const override { return coef.dot(x); }
  VectorXd gradient(const VectorXd&) const override { return coef; }
  MatrixXd hessian(const VectorXd&) const override {
    return MatrixXd::Zero(coef.size(), coef.size());
  }
};

// Coupling bilinear: f = F_1 * F_2 with F_j = Z_j x_j + Zt_j x_{j+p}.
struct CouplingBilinear : ScalarField {
  VectorXd z, zt;
  CouplingBilinear(VectorXd z, VectorXd zt) : z(std::move(z)), zt(std::move(zt)) {}
  Index p() const { return z.size(); }
  Index dim() const override { return 2 * z.size(); }
  double f1(const VectorXd& x) const { return z[0] * x[0] + zt[0] * x[p()]; }
  double f2(const VectorXd& x) const { return z[1] * x[1] + zt[1] * x[p() + 1]; }
  double value(const VectorXd& x) const override { return f1(x) * f2(x); }
  VectorXd gradient(const VectorXd& x) const override {
    VectorXd g = VectorXd::Zero(dim());
    g[0] = z[0] * f2(x);
    g[p()] = zt[0] * f2(x);
    g[1] = z[1] * f1(x);
    g[p() + 1] = zt[1] * f1(x);
    return g;
  }
  MatrixXd hessian(const VectorXd& x) const override {
    (void)x;
    MatrixXd h = MatrixXd::Zero(dim(), dim());
    auto set = [&](Index i, Index j, double v) { h(i, j) = h(j, i) = v; };
    set(0, 1, z[0] * z[1]);
    set(0, p() + 1, z[0] * zt[1]);
    set(p(), 1, zt[0] * z[1]);
    set(p(), p() + 1, zt[0] * zt[1]);
    return h;
  }
};

MatrixXd single_row(std::initializer_list<double> values) {
  MatrixXd m(1, static_cast<Index>(values.size()));
  Index c = 0;
  for (double v : values) m(0, c++) = v;
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("attribution");

TEST_CASE("expected hessian of the bilinear field approaches 1/4") {
  const BilinearField field(4, 0, 1);
  const MatrixXd x = single_row({1.0, 1.0, 0.0, 0.0});
  const MatrixXd baseline = MatrixXd::Zero(1, 4);
  const auto attr = attribution::expected_attributions(field, x, baseline, 4096, 7);
  CHECK(attr.e2d(0, 1) == doctest::Approx(0.25).epsilon(0.05));
  CHECK(attr.e2d(1, 0) == attr.e2d(0, 1));
  CHECK(attr.e2d(2, 3) == doctest::Approx(0.0));
  CHECK(attr.measure == attribution::Measure::expected);
  CHECK(attr.mc_draws == 4096);
}

TEST_CASE("integrated hessian of the bilinear field is exact for constant curvature") {
  const BilinearField field(4, 0, 1);
  const MatrixXd x = single_row({1.0, 1.0, 0.0, 0.0});
  const MatrixXd baseline = MatrixXd::Zero(1, 4);
  for (int grid : {16, 64}) {
    const auto attr = attribution::integrated_attributions(field, x, baseline, grid);
    CHECK(attr.e2d(0, 1) == doctest::Approx(0.25).epsilon(1e-10));
  }
}

TEST_CASE("constant model attributes nothing") {
  const ConstantField field(6);
  MatrixXd x(2, 6);
  x.setRandom();
  const auto attr = attribution::expected_attributions(field, x, x, 32, 3);
  CHECK(attr.e1d.isZero(0.0));
  CHECK(attr.e2d.isZero(0.0));
}

TEST_CASE("baseline equal to the explained point attributes nothing") {
  const BilinearField field(4, 0, 1);
  const MatrixXd x = single_row({0.7, 0.4, 0.2, 0.9});
  const auto attr = attribution::expected_attributions(field, x, x, 64, 5);
  CHECK(attr.e1d.isZero(0.0));
  CHECK(attr.e2d.isZero(0.0));
}

TEST_CASE("integrated gradient is exact for linear models at any grid") {
  VectorXd coef(4);
  coef << 2.0, -1.0, 0.5, 0.0;
  const LinearField field(coef);
  const MatrixXd x = single_row({1.0, 1.0, 1.0, 1.0});
  const MatrixXd baseline = single_row({0.5, 0.0, -1.0, 0.2});
  for (int grid : {2, 5, 16}) {
    const auto attr = attribution::integrated_attributions(field, x, baseline, grid);
    for (Index i = 0; i < 4; ++i)
      CHECK(attr.e1d_signed[i] ==
            doctest::Approx(coef[i] * (x(0, i) - baseline(0, i))).epsilon(1e-12));
  }
}

TEST_CASE("expected gradient halves linear attributions through the alpha factor") {
  VectorXd coef(3);
  coef << 1.0, 2.0, -3.0;
  const LinearField field(coef);
  const MatrixXd x = single_row({1.0, 1.0, 1.0});
  const MatrixXd baseline = MatrixXd::Zero(1, 3);
  const auto attr = attribution::expected_attributions(field, x, baseline, 8192, 11);
  for (Index i = 0; i < 3; ++i)
    CHECK(attr.e1d_signed[i] == doctest::Approx(0.5 * coef[i]).epsilon(0.03));
}

TEST_CASE("integrated gradient completeness on a trained network") {
  // Train a small net, then check sum_i IG_i = f(x) - f(x') within 1%.
  const Index p = 4;
  AugmentedDataset data;
  data.columns.resize(600, 2 * p);
  Rng rng(17);
  for (Index j = 0; j < 2 * p; ++j) {
    Rng col = rng.substream(static_cast<std::uint64_t>(j));
    for (Index i = 0; i < 600; ++i) data.columns(i, j) = col.uniform();
  }
  data.response.resize(600);
  for (Index i = 0; i < 600; ++i)
    data.response[i] = data.columns(i, 0) * data.columns(i, 1) + 0.5 * data.columns(i, 2);
  model::TrainConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 23;
  const auto net = model::train(data, cfg);

  const MatrixXd x = data.columns.topRows(1);
  const MatrixXd baseline = data.columns.middleRows(1, 1);
  const auto attr = attribution::integrated_attributions(net, x, baseline, 128);
  const double total = attr.e1d_signed.sum();
  const double expected = net.value(x.row(0).transpose()) - net.value(baseline.row(0).transpose());
  CHECK(total == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("expected and integrated agree on the bilinear oracle at defaults") {
  const BilinearField field(4, 0, 1);
  const MatrixXd x = single_row({1.0, 1.0, 0.0, 0.0});
  const MatrixXd baseline = MatrixXd::Zero(1, 4);
  const auto exp_attr = attribution::expected_attributions(field, x, baseline, 128, 29);
  const auto int_attr = attribution::integrated_attributions(field, x, baseline, 16);
  CHECK(exp_attr.e2d(0, 1) == doctest::Approx(0.25).epsilon(0.05));
  CHECK(int_attr.e2d(0, 1) == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("coupling bilinear has constant filter-product cross derivative") {
  VectorXd z(2), zt(2);
  z << 0.8, 0.6;
  zt << 0.2, 0.4;
  const CouplingBilinear field(z, zt);
  const MatrixXd x = single_row({1.0, 1.0, 1.0, 1.0});
  const MatrixXd baseline = MatrixXd::Zero(1, 4);
  const auto attr = attribution::integrated_attributions(field, x, baseline, 32);
  // e2d(1,2) integrates alpha*beta * Z_1 Z_2 exactly.
  CHECK(attr.e2d(0, 1) == doctest::Approx(0.25 * z[0] * z[1]).epsilon(1e-10));
  CHECK(attr.e2d(0, 3) == doctest::Approx(0.25 * z[0] * zt[1]).epsilon(1e-10));
  CHECK(attr.e2d(2, 3) == doctest::Approx(0.25 * zt[0] * zt[1]).epsilon(1e-10));
}

TEST_CASE("monte carlo consistency: 4x draws stay within 3 SE of the 1x estimate") {
  const BilinearField field(4, 0, 1);
  MatrixXd x(3, 4);
  x << 1.0, 0.8, 0.1, 0.2,
       0.5, 0.9, 0.4, 0.3,
       0.2, 0.1, 0.8, 0.7;
  const MatrixXd baseline = MatrixXd::Zero(2, 4).array() + 0.1;

  const int reps = 8;
  std::vector<attribution::AttributionResult> runs;
  for (int r = 0; r < reps; ++r)
    runs.push_back(attribution::expected_attributions(field, x, baseline, 64, 100 + r));
  const auto big = attribution::expected_attributions(field, x, baseline, 256, 100);

  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 4; ++j) {
      double mean = 0.0;
      for (const auto& run : runs) mean += run.e2d_signed(i, j);
      mean /= reps;
      double var = 0.0;
      for (const auto& run : runs) var += std::pow(run.e2d_signed(i, j) - mean, 2);
      const double se = std::sqrt(var / (reps - 1));
      CHECK(std::abs(big.e2d_signed(i, j) - mean) <= 3.0 * se + 1e-12);
    }
  }
}

TEST_CASE("model-specific measure reproduces the worked two-feature example") {
  model::CouplingMLP net;
  net.task = Task::regression;
  net.Z = VectorXd::Ones(2);
  net.Z_tilde = VectorXd::Constant(2, 0.5);
  MatrixXd w0(2, 1);
  w0 << 1.0, 2.0;
  MatrixXd w1(1, 1);
  w1 << 3.0;
  net.W = {w0, w1};
  net.b = {VectorXd::Zero(1), VectorXd::Zero(1)};

  const auto attr = attribution::model_specific_attributions(net);
  CHECK(attr.e2d(0, 1) == doctest::Approx(6.0));
  VectorXd expected(4);
  expected << 3.0, 6.0, 1.5, 3.0;
  for (Index i = 0; i < 4; ++i) CHECK(attr.e1d[i] == doctest::Approx(expected[i]));
}

TEST_CASE("model-specific measure is zero for a zero first layer") {
  auto net = model::CouplingMLP::initialize(3, Task::regression, 5);
  net.W[0].setZero();
  const auto attr = attribution::model_specific_attributions(net);
  CHECK(attr.e1d.isZero(0.0));
  CHECK(attr.e2d.isZero(0.0));
}

TEST_CASE("model-specific measure mirrors originals and knockoffs when Z equals Zt") {
  auto net = model::CouplingMLP::initialize(4, Task::regression, 9);
  net.Z_tilde = net.Z;
  const auto attr = attribution::model_specific_attributions(net);
  const Index p = 4;
  for (Index j = 0; j < p; ++j) CHECK(attr.e1d[j] == doctest::Approx(attr.e1d[j + p]));
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j)
      CHECK(attr.e2d(i, j) == doctest::Approx(attr.e2d(i + p, j + p)));
}

TEST_CASE("symmetry and nonnegativity of returned matrices") {
  const BilinearField field(4, 0, 1);
  MatrixXd x(5, 4);
  x.setRandom();
  const auto attr = attribution::expected_attributions(field, x, x, 16, 3);
  CHECK(attr.e2d == MatrixXd(attr.e2d.transpose()));
  CHECK(attr.e2d.minCoeff() >= 0.0);
  CHECK(attr.e1d.minCoeff() >= 0.0);
}

TEST_CASE("attribution is independent of the worker count") {
  const BilinearField field(6, 1, 2);
  MatrixXd x(70, 6);
  x.setRandom();
  const auto one = attribution::expected_attributions(field, x, x, 16, 9, 1);
  const auto four = attribution::expected_attributions(field, x, x, 16, 9, 4);
  CHECK(one.e2d == four.e2d);
  CHECK(one.e1d == four.e1d);
}

TEST_CASE("save and load round trip") {
  const BilinearField field(4, 0, 1);
  MatrixXd x(2, 4);
  x.setRandom();
  const auto attr = attribution::expected_attributions(field, x, x, 8, 2);
  const auto path = std::filesystem::temp_directory_path() / "knockint_attr_test.json";
  attribution::save_attribution(attr, path.string(), 2);
  const auto loaded = attribution::load_attribution(path.string());
  CHECK(loaded.e2d == attr.e2d);
  CHECK(loaded.e1d == attr.e1d);
  CHECK(loaded.e2d_signed == attr.e2d_signed);
  CHECK(loaded.measure == attr.measure);
  CHECK(loaded.n_samples_explained == attr.n_samples_explained);
  std::filesystem::remove(path);
}

TEST_CASE("input validation") {
  const BilinearField field(4, 0, 1);
  const MatrixXd x = single_row({1.0, 1.0, 0.0, 0.0});
  CHECK_THROWS_AS(
      (void)attribution::expected_attributions(field, x, x, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(
      (void)attribution::integrated_attributions(field, x, x, 1), std::invalid_argument);
  CHECK_THROWS_AS(
      (void)attribution::expected_attributions(field, MatrixXd(0, 4), x, 8, 1),
      std::invalid_argument);
  CHECK_THROWS_AS(
      (void)attribution::expected_attributions(field, x, MatrixXd(1, 3), 8, 1),
      std::invalid_argument);
}

TEST_SUITE_END();
