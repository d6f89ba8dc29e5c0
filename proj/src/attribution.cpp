#include "knockint/attribution.hpp"

#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "knockint/parallel.hpp"
#include "knockint/rng.hpp"

namespace knockint::attribution {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string measure_name(Measure m) {
  switch (m) {
    case Measure::expected: return "expected";
    case Measure::integrated: return "integrated";
    case Measure::model_specific: return "model-specific";
  }
  return "expected";
}

Measure parse_measure(const std::string& name) {
  if (name == "expected") return Measure::expected;
  if (name == "integrated") return Measure::integrated;
  if (name == "model-specific" || name == "model_specific") return Measure::model_specific;
  throw std::invalid_argument("unknown attribution measure '" + name + "'");
}

namespace {

constexpr Index kRowChunk = 32;

struct Accumulator {
  MatrixXd e2d;
  VectorXd e1d;
  void init(Index d) {
    e2d = MatrixXd::Zero(d, d);
    e1d = VectorXd::Zero(d);
  }
  void add(const Accumulator& other) {
    e2d += other.e2d;
    e1d += other.e1d;
  }
};

// Splits explained rows into fixed-size chunks, evaluates them in parallel,
// and reduces partial sums in chunk order so results do not depend on the
// worker count.
Accumulator chunked_sum(Index n_rows, int workers,
                        const std::function<void(Index, Index, Accumulator&)>& body, Index d) {
  const Index n_chunks = (n_rows + kRowChunk - 1) / kRowChunk;
  std::vector<Accumulator> partial(static_cast<std::size_t>(n_chunks));
  parallel_tasks(static_cast<std::size_t>(n_chunks), workers, [&](std::size_t c) {
    const Index begin = static_cast<Index>(c) * kRowChunk;
    const Index end = std::min(begin + kRowChunk, n_rows);
    partial[c].init(d);
    body(begin, end, partial[c]);
  });
  Accumulator total;
  total.init(d);
  for (const auto& part : partial) total.add(part);
  return total;
}

AttributionResult finalize(Accumulator total, Measure measure, Index n_rows, int draws,
                           int grid) {
  if (!total.e2d.allFinite() || !total.e1d.allFinite())
    throw std::runtime_error("attribution: non-finite model output encountered");
  AttributionResult result;
  result.e2d_signed = 0.5 * (total.e2d + MatrixXd(total.e2d.transpose()));
  result.e1d_signed = total.e1d;
  result.e2d = result.e2d_signed.cwiseAbs();
  result.e1d = result.e1d_signed.cwiseAbs();
  result.measure = measure;
  result.n_samples_explained = n_rows;
  result.mc_draws = draws;
  result.grid_size = grid;
  return result;
}

void check_inputs(const ScalarField& model, const MatrixXd& X_explain,
                  const MatrixXd& baselines) {
  if (X_explain.rows() == 0) throw std::invalid_argument("attribution: empty explained set");
  if (baselines.rows() == 0) throw std::invalid_argument("attribution: empty baseline set");
  if (X_explain.cols() != model.dim() || baselines.cols() != model.dim())
    throw std::invalid_argument("attribution: column count does not match the model input size");
}

}  // namespace

AttributionResult expected_attributions(const ScalarField& model, const MatrixXd& X_explain,
                                        const MatrixXd& baselines, int draws,
                                        std::uint64_t seed, int workers) {
  check_inputs(model, X_explain, baselines);
  if (draws < 1) throw std::invalid_argument("expected_attributions: draws must be >= 1");

  const Index d = model.dim();
  const auto n_baselines = static_cast<std::uint64_t>(baselines.rows());
  const Rng base(seed);

  auto body = [&](Index begin, Index end, Accumulator& acc) {
    MatrixXd e2d_row(d, d);
    VectorXd e1d_row(d);
    for (Index r = begin; r < end; ++r) {
      Rng rng = base.substream(static_cast<std::uint64_t>(r));
      const VectorXd x = X_explain.row(r).transpose();
      e2d_row.setZero();
      e1d_row.setZero();
      for (int k = 0; k < draws; ++k) {
        const double alpha = rng.uniform();
        const double beta = rng.uniform();
        const auto b_idx = static_cast<Index>(rng.bounded(n_baselines));
        const VectorXd diff = x - baselines.row(b_idx).transpose();
        const VectorXd point2 = x - (1.0 - alpha * beta) * diff;
        e2d_row.noalias() +=
            (alpha * beta) * (diff * diff.transpose()).cwiseProduct(model.hessian(point2));
        const VectorXd point1 = x - (1.0 - alpha) * diff;
        e1d_row += alpha * diff.cwiseProduct(model.gradient(point1));
      }
      acc.e2d += e2d_row / static_cast<double>(draws);
      acc.e1d += e1d_row / static_cast<double>(draws);
    }
  };
  Accumulator total = chunked_sum(X_explain.rows(), workers, body, d);
  return finalize(std::move(total), Measure::expected, X_explain.rows(), draws, 0);
}

AttributionResult integrated_attributions(const ScalarField& model, const MatrixXd& X_explain,
                                          const MatrixXd& baselines, int grid, int workers) {
  check_inputs(model, X_explain, baselines);
  if (grid < 2) throw std::invalid_argument("integrated_attributions: grid must be >= 2");

  const Index d = model.dim();
  const Index n_baselines = baselines.rows();
  std::vector<double> nodes(static_cast<std::size_t>(grid));
  for (int a = 0; a < grid; ++a) nodes[static_cast<std::size_t>(a)] = (a + 0.5) / grid;

  auto body = [&](Index begin, Index end, Accumulator& acc) {
    for (Index r = begin; r < end; ++r) {
      const VectorXd x = X_explain.row(r).transpose();
      MatrixXd e2d_row = MatrixXd::Zero(d, d);
      VectorXd e1d_row = VectorXd::Zero(d);
      for (Index bidx = 0; bidx < n_baselines; ++bidx) {
        const VectorXd diff = x - baselines.row(bidx).transpose();
        const MatrixXd outer = diff * diff.transpose();
        for (double alpha : nodes) {
          for (double beta : nodes) {
            const VectorXd point = x - (1.0 - alpha * beta) * diff;
            e2d_row.noalias() += (alpha * beta) * outer.cwiseProduct(model.hessian(point));
          }
          const VectorXd point = x - (1.0 - alpha) * diff;
          e1d_row += diff.cwiseProduct(model.gradient(point));
        }
      }
      const double cell = static_cast<double>(grid) * static_cast<double>(grid) *
                          static_cast<double>(n_baselines);
      acc.e2d += e2d_row / cell;
      acc.e1d += e1d_row / (static_cast<double>(grid) * static_cast<double>(n_baselines));
    }
  };
  Accumulator total = chunked_sum(X_explain.rows(), workers, body, d);
  return finalize(std::move(total), Measure::integrated, X_explain.rows(), 0, grid);
}

AttributionResult model_specific_attributions(const model::CouplingMLP& net) {
  const Index p = net.p();
  if (net.W.empty()) throw std::invalid_argument("model_specific_attributions: empty network");
  const Index p1 = net.W[0].cols();

  // Aggregate path weight above the first dense layer.
  MatrixXd w_agg = MatrixXd::Identity(p1, p1);
  Index chain = p1;
  for (std::size_t k = 1; k < net.W.size(); ++k) {
    if (net.W[k].rows() != chain)
      throw std::invalid_argument("model_specific_attributions: layer dimension chain mismatch");
    w_agg = w_agg * net.W[k];
    chain = net.W[k].cols();
  }
  if (chain != 1)
    throw std::invalid_argument("model_specific_attributions: network must end in a scalar");
  const VectorXd agg = w_agg.col(0);  // length p1

  // Filter-scaled first-layer rows, originals stacked above knockoffs.
  MatrixXd scaled(2 * p, p1);
  scaled.topRows(p) = net.Z.asDiagonal() * net.W[0];
  scaled.bottomRows(p) = net.Z_tilde.asDiagonal() * net.W[0];

  Accumulator total;
  total.init(2 * p);
  total.e2d = scaled * agg.asDiagonal() * scaled.transpose();

  const VectorXd w1d = net.W[0] * agg;  // length p
  total.e1d.head(p) = net.Z.cwiseProduct(w1d);
  total.e1d.tail(p) = net.Z_tilde.cwiseProduct(w1d);

  return finalize(std::move(total), Measure::model_specific, 0, 0, 0);
}

void save_attribution(const AttributionResult& attr, const std::string& path,
                      std::uint64_t seed) {
  nlohmann::json doc;
  doc["format"] = "knockint-attrib-v1";
  doc["measure"] = measure_name(attr.measure);
  doc["n_samples_explained"] = attr.n_samples_explained;
  doc["settings"] = {{"draws", attr.mc_draws}, {"grid", attr.grid_size}, {"seed", seed}};
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  doc["e1d"] = vec(attr.e1d);
  doc["e1d_signed"] = vec(attr.e1d_signed);
  auto mat = [](const MatrixXd& m) {
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(m.rows()));
    for (Index i = 0; i < m.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(m.cols()));
      for (Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
      rows.push_back(std::move(row));
    }
    return rows;
  };
  doc["e2d"] = mat(attr.e2d);
  doc["e2d_signed"] = mat(attr.e2d_signed);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_attribution: cannot write " + path);
  out << doc.dump() << '\n';
}

AttributionResult load_attribution(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_attribution: cannot open " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  if (doc.value("format", "") != "knockint-attrib-v1")
    throw std::runtime_error("load_attribution: unrecognized file format");
  AttributionResult attr;
  attr.measure = parse_measure(doc.at("measure").get<std::string>());
  attr.n_samples_explained = doc.at("n_samples_explained").get<Index>();
  attr.mc_draws = doc.at("settings").at("draws").get<int>();
  attr.grid_size = doc.at("settings").at("grid").get<int>();
  auto vec = [](const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return VectorXd(Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size())));
  };
  attr.e1d = vec(doc.at("e1d"));
  attr.e1d_signed = vec(doc.at("e1d_signed"));
  auto mat = [](const nlohmann::json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    MatrixXd m(static_cast<Index>(rows.size()),
               rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Index>(rows[i].size()) != m.cols())
        throw std::runtime_error("load_attribution: ragged matrix");
      for (std::size_t jx = 0; jx < rows[i].size(); ++jx)
        m(static_cast<Index>(i), static_cast<Index>(jx)) = rows[i][jx];
    }
    return m;
  };
  attr.e2d = mat(doc.at("e2d"));
  attr.e2d_signed = mat(doc.at("e2d_signed"));
  return attr;
}

}  // namespace knockint::attribution
