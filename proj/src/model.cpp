#include "knockint/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "knockint/rng.hpp"

namespace knockint::model {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double elu(double u) { return u > 0.0 ? u : std::expm1(u); }
double elu_d1(double u) { return u > 0.0 ? 1.0 : std::exp(u); }
double elu_d2(double u) { return u < 0.0 ? std::exp(u) : 0.0; }

std::vector<Index> hidden_widths(Index p) {
  return {2 * p, p, (p + 1) / 2, (p + 3) / 4};
}

namespace {

MatrixXd elu_mat(const MatrixXd& a) { return a.unaryExpr([](double u) { return elu(u); }); }
MatrixXd elu_d1_mat(const MatrixXd& a) { return a.unaryExpr([](double u) { return elu_d1(u); }); }

// Coupling layer over a batch: rows x 2p -> rows x p.
MatrixXd couple(const CouplingMLP& net, const MatrixXd& rows) {
  const Index p = net.p();
  return rows.leftCols(p) * net.Z.asDiagonal() + rows.rightCols(p) * net.Z_tilde.asDiagonal();
}

struct ForwardCache {
  MatrixXd filtered;            // batch x p
  std::vector<MatrixXd> pre;    // pre-activations per weight layer
  std::vector<MatrixXd> post;   // ELU outputs for all but the final layer
};

MatrixXd forward_batch(const CouplingMLP& net, const MatrixXd& rows, ForwardCache* cache) {
  MatrixXd h = couple(net, rows);
  if (cache) cache->filtered = h;
  const std::size_t n_layers = net.W.size();
  for (std::size_t k = 0; k < n_layers; ++k) {
    MatrixXd a = (h * net.W[k]).rowwise() + net.b[k].transpose();
    const bool last = (k + 1 == n_layers);
    if (cache) cache->pre.push_back(a);
    h = last ? std::move(a) : elu_mat(a);
    if (cache && !last) cache->post.push_back(h);
  }
  return h;  // batch x 1
}

struct Gradients {
  VectorXd Z, Z_tilde;
  std::vector<MatrixXd> W;
  std::vector<VectorXd> b;
};

// Backward pass for d(loss)/d(output) stacked in a column.
Gradients backward_batch(const CouplingMLP& net, const MatrixXd& rows, const ForwardCache& cache,
                         const MatrixXd& d_out) {
  const Index p = net.p();
  const std::size_t n_layers = net.W.size();
  Gradients g;
  g.W.resize(n_layers);
  g.b.resize(n_layers);

  MatrixXd delta = d_out;  // gradient w.r.t. pre-activation of the current layer
  for (std::size_t k = n_layers; k-- > 0;) {
    const MatrixXd& input = (k == 0) ? cache.filtered : cache.post[k - 1];
    g.W[k] = input.transpose() * delta;
    g.b[k] = delta.colwise().sum().transpose();
    if (k > 0) {
      delta = (delta * net.W[k].transpose()).cwiseProduct(elu_d1_mat(cache.pre[k - 1]));
    } else {
      const MatrixXd d_filtered = delta * net.W[0].transpose();  // batch x p
      g.Z = d_filtered.cwiseProduct(rows.leftCols(p)).colwise().sum().transpose();
      g.Z_tilde = d_filtered.cwiseProduct(rows.rightCols(p)).colwise().sum().transpose();
    }
  }
  return g;
}

struct AdamState {
  Gradients m, v;
  long t = 0;
};

void adam_init(AdamState& st, const CouplingMLP& net) {
  st.m.Z = VectorXd::Zero(net.Z.size());
  st.m.Z_tilde = VectorXd::Zero(net.Z.size());
  st.v = st.m;
  for (const auto& w : net.W) {
    st.m.W.push_back(MatrixXd::Zero(w.rows(), w.cols()));
    st.v.W.push_back(MatrixXd::Zero(w.rows(), w.cols()));
  }
  for (const auto& bias : net.b) {
    st.m.b.push_back(VectorXd::Zero(bias.size()));
    st.v.b.push_back(VectorXd::Zero(bias.size()));
  }
}

template <typename T>
void adam_update(T& param, T& m, T& v, const T& grad, double lr, long t) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  param.array() -= (lr / c1) * m.array() / ((v.array() / c2).sqrt() + eps);
}

double batch_loss(Task task, const MatrixXd& out, const VectorXd& y, MatrixXd* d_out,
                  double residual_clip = 0.0) {
  const auto n = static_cast<double>(out.rows());
  if (task == Task::regression) {
    const VectorXd r = out.col(0) - y;
    if (d_out) {
      if (residual_clip > 0.0)
        *d_out = (2.0 / n) * r.cwiseMax(-residual_clip).cwiseMin(residual_clip);
      else
        *d_out = (2.0 / n) * r;
    }
    return r.squaredNorm() / n;
  }
  // Logistic loss on the logit, numerically stable softplus form.
  double loss = 0.0;
  if (d_out) d_out->resize(out.rows(), 1);
  for (Index i = 0; i < out.rows(); ++i) {
    const double z = out(i, 0);
    loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - y[i] * z;
    if (d_out) (*d_out)(i, 0) = (1.0 / (1.0 + std::exp(-z)) - y[i]) / n;
  }
  return loss / n;
}

}  // namespace

CouplingMLP CouplingMLP::initialize(Index p, Task task, std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("CouplingMLP: p must be positive");
  CouplingMLP net;
  net.task = task;
  net.Z = VectorXd::Constant(p, 1.0 / std::numbers::sqrt2);
  net.Z_tilde = net.Z;

  std::vector<Index> widths{p};
  for (Index w : hidden_widths(p)) widths.push_back(w);
  widths.push_back(1);

  Rng base(seed);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    Rng layer = base.substream(static_cast<std::uint64_t>(k));
    const Index in = widths[k], out = widths[k + 1];
    const double limit = std::sqrt(3.0 / static_cast<double>(in));  // fan-in uniform
    MatrixXd w(in, out);
    for (Index i = 0; i < in; ++i)
      for (Index j = 0; j < out; ++j) w(i, j) = limit * (2.0 * layer.uniform() - 1.0);
    net.W.push_back(std::move(w));
    net.b.emplace_back(VectorXd::Zero(out));
  }
  return net;
}

double CouplingMLP::value(const VectorXd& x) const {
  if (x.size() != dim()) throw std::invalid_argument("CouplingMLP::value: bad input length");
  if (!x.allFinite()) throw std::invalid_argument("CouplingMLP::value: non-finite input");
  return forward_batch(*this, x.transpose(), nullptr)(0, 0);
}

Eigen::VectorXd CouplingMLP::predict(const MatrixXd& rows) const {
  if (rows.cols() != dim()) throw std::invalid_argument("CouplingMLP::predict: bad input width");
  return forward_batch(*this, rows, nullptr).col(0);
}

VectorXd CouplingMLP::gradient(const VectorXd& x) const {
  if (x.size() != dim()) throw std::invalid_argument("CouplingMLP::gradient: bad input length");
  const Index np = p();
  ForwardCache cache;
  forward_batch(*this, x.transpose(), &cache);

  // Gradient w.r.t. the current hidden vector, walked down to the filters.
  VectorXd g = W.back().col(0);
  for (std::size_t k = W.size() - 1; k-- > 0;) {
    const VectorXd d1 = cache.pre[k].row(0).transpose().unaryExpr([](double u) { return elu_d1(u); });
    g = W[k] * d1.cwiseProduct(g);
  }
  VectorXd full(2 * np);
  full.head(np) = Z.cwiseProduct(g);
  full.tail(np) = Z_tilde.cwiseProduct(g);
  return full;
}

MatrixXd CouplingMLP::hessian(const VectorXd& x) const {
  if (x.size() != dim()) throw std::invalid_argument("CouplingMLP::hessian: bad input length");
  const Index np = p();
  ForwardCache cache;
  forward_batch(*this, x.transpose(), &cache);

  // Second-order backward recursion: with y seen as a function of hidden
  // layer h, gradient g and Hessian H propagate through h = ELU(W^T h_prev + b) as
  //   H_prev = W (diag(phi'' . g) + diag(phi') H diag(phi')) W^T,
  //   g_prev = W (phi' . g).
  const std::size_t n_layers = W.size();
  VectorXd g = W.back().col(0);
  MatrixXd h_mat = MatrixXd::Zero(g.size(), g.size());
  for (std::size_t k = n_layers - 1; k-- > 0;) {
    const VectorXd a = cache.pre[k].row(0).transpose();
    const VectorXd d1 = a.unaryExpr([](double u) { return elu_d1(u); });
    const VectorXd d2 = a.unaryExpr([](double u) { return elu_d2(u); });
    MatrixXd inner = d1.asDiagonal() * h_mat * d1.asDiagonal();
    inner.diagonal() += d2.cwiseProduct(g);
    h_mat = W[k] * inner * W[k].transpose();
    h_mat = 0.5 * (h_mat + MatrixXd(h_mat.transpose()));  // exact symmetry
    g = W[k] * d1.cwiseProduct(g);
  }

  // Chain through the linear coupling layer: J = [diag(Z) | diag(Z_tilde)].
  MatrixXd full(2 * np, 2 * np);
  const MatrixXd zz = Z * Z.transpose();
  const MatrixXd zzt = Z * Z_tilde.transpose();
  const MatrixXd ztzt = Z_tilde * Z_tilde.transpose();
  full.topLeftCorner(np, np) = zz.cwiseProduct(h_mat);
  full.topRightCorner(np, np) = zzt.cwiseProduct(h_mat);
  full.bottomLeftCorner(np, np) = zzt.transpose().cwiseProduct(h_mat);
  full.bottomRightCorner(np, np) = ztzt.cwiseProduct(h_mat);
  return full;
}

CouplingMLP train(const AugmentedDataset& data, const TrainConfig& cfg, Task task,
                  TrainReport* report) {
  const Index n = data.n_samples();
  const Index p = data.p();
  if (n < 10) throw std::invalid_argument("train: need at least 10 samples");
  if (!data.response.allFinite()) throw std::invalid_argument("train: non-finite response");
  if (cfg.batch_size < 1 || cfg.learning_rate <= 0.0 || cfg.patience < 1)
    throw std::invalid_argument("train: invalid config");
  if (cfg.validation_fraction <= 0.0 || cfg.validation_fraction > 0.5)
    throw std::invalid_argument("train: validation_fraction must lie in (0, 0.5]");

  CouplingMLP net = CouplingMLP::initialize(p, task, derive_seed(cfg.seed, 11));
  if (cfg.epochs == 0) {
    if (report) *report = TrainReport{};
    return net;
  }

  // Validation split.
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  Rng split_rng = Rng(cfg.seed).substream(13);
  for (Index i = n - 1; i > 0; --i) {
    const auto k = static_cast<Index>(split_rng.bounded(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[i], order[k]);
  }
  const Index n_val = std::max<Index>(1, static_cast<Index>(std::llround(cfg.validation_fraction * n)));
  const Index n_train = n - n_val;
  if (n_train < 1) throw std::invalid_argument("train: no training rows after validation split");

  auto gather = [&](Index begin, Index count) {
    std::pair<MatrixXd, VectorXd> out;
    out.first.resize(count, 2 * p);
    out.second.resize(count);
    for (Index i = 0; i < count; ++i) {
      out.first.row(i) = data.columns.row(order[begin + i]);
      out.second[i] = data.response[order[begin + i]];
    }
    return out;
  };
  auto [val_x, val_y] = gather(n_train, n_val);

  std::vector<Index> train_idx(order.begin(), order.begin() + n_train);

  double residual_clip = 0.0;
  if (task == Task::regression && cfg.residual_clip_mads > 0.0) {
    std::vector<double> dev(static_cast<std::size_t>(n_train));
    std::vector<double> ys(static_cast<std::size_t>(n_train));
    for (Index i = 0; i < n_train; ++i) ys[static_cast<std::size_t>(i)] = data.response[train_idx[static_cast<std::size_t>(i)]];
    std::nth_element(ys.begin(), ys.begin() + n_train / 2, ys.end());
    const double median = ys[static_cast<std::size_t>(n_train / 2)];
    for (Index i = 0; i < n_train; ++i)
      dev[static_cast<std::size_t>(i)] =
          std::abs(data.response[train_idx[static_cast<std::size_t>(i)]] - median);
    std::nth_element(dev.begin(), dev.begin() + n_train / 2, dev.end());
    const double mad = std::max(dev[static_cast<std::size_t>(n_train / 2)], 1e-12);
    residual_clip = cfg.residual_clip_mads * mad;
  }

  AdamState adam;
  adam_init(adam, net);
  Rng shuffle_rng = Rng(cfg.seed).substream(17);

  CouplingMLP best = net;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int wait = 0;
  double last_train_loss = 0.0;
  int epoch = 0;

  for (; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate;
    if (cfg.lr_floor_fraction < 1.0) {
      const double t = static_cast<double>(epoch) / std::max(1, cfg.epochs - 1);
      const double floor = cfg.lr_floor_fraction * cfg.learning_rate;
      lr = floor + (cfg.learning_rate - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
    }
    for (Index i = n_train - 1; i > 0; --i) {
      const auto k = static_cast<Index>(shuffle_rng.bounded(static_cast<std::uint64_t>(i + 1)));
      std::swap(train_idx[i], train_idx[k]);
    }
    double epoch_loss = 0.0;
    Index seen = 0;
    for (Index start = 0; start < n_train; start += cfg.batch_size) {
      const Index count = std::min<Index>(cfg.batch_size, n_train - start);
      MatrixXd bx(count, 2 * p);
      VectorXd by(count);
      for (Index i = 0; i < count; ++i) {
        bx.row(i) = data.columns.row(train_idx[start + i]);
        by[i] = data.response[train_idx[start + i]];
      }
      ForwardCache cache;
      const MatrixXd out = forward_batch(net, bx, &cache);
      MatrixXd d_out;
      const double loss = batch_loss(task, out, by, &d_out, residual_clip);
      if (!std::isfinite(loss))
        throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(count);
      seen += count;

      Gradients grad = backward_batch(net, bx, cache, d_out);
      if (cfg.max_grad_norm > 0.0) {
        double sq = grad.Z.squaredNorm() + grad.Z_tilde.squaredNorm();
        for (std::size_t k = 0; k < net.W.size(); ++k)
          sq += grad.W[k].squaredNorm() + grad.b[k].squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > cfg.max_grad_norm) {
          const double scale = cfg.max_grad_norm / norm;
          grad.Z *= scale;
          grad.Z_tilde *= scale;
          for (std::size_t k = 0; k < net.W.size(); ++k) {
            grad.W[k] *= scale;
            grad.b[k] *= scale;
          }
        }
      }
      if (cfg.weight_decay > 0.0) {
        // Body weights only: the coupling filters stay unpenalized so the
        // original-vs-knockoff competition is not shrunk away.
        for (std::size_t k = 0; k < net.W.size(); ++k) grad.W[k] += cfg.weight_decay * net.W[k];
      }
      ++adam.t;
      adam_update(net.Z, adam.m.Z, adam.v.Z, grad.Z, lr, adam.t);
      adam_update(net.Z_tilde, adam.m.Z_tilde, adam.v.Z_tilde, grad.Z_tilde, lr, adam.t);
      for (std::size_t k = 0; k < net.W.size(); ++k) {
        adam_update(net.W[k], adam.m.W[k], adam.v.W[k], grad.W[k], lr, adam.t);
        adam_update(net.b[k], adam.m.b[k], adam.v.b[k], grad.b[k], lr, adam.t);
      }
    }
    last_train_loss = epoch_loss / static_cast<double>(seen);

    const MatrixXd val_out = forward_batch(net, val_x, nullptr);
    const double val_loss = batch_loss(task, val_out, val_y, nullptr);
    if (!std::isfinite(val_loss))
      throw std::runtime_error("train: validation loss diverged at epoch " + std::to_string(epoch));
    if (std::getenv("KNOCKINT_TRAIN_TRACE"))
      std::fprintf(stderr, "epoch %d train %.6g val %.6g\n", epoch, last_train_loss, val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = net;
      best_epoch = epoch;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      ++epoch;
      break;
    }
  }

  if (report) {
    report->epochs_run = epoch;
    report->best_epoch = best_epoch;
    report->best_validation_loss = best_val;
    report->final_train_loss = last_train_loss;
  }
  return best;
}

void CouplingMLP::save(const std::string& path) const {
  nlohmann::json doc;
  doc["format"] = "knockint-mlp-v1";
  doc["task"] = (task == Task::regression) ? "regression" : "binary";
  doc["p"] = p();
  doc["Z"] = std::vector<double>(Z.data(), Z.data() + Z.size());
  doc["Z_tilde"] = std::vector<double>(Z_tilde.data(), Z_tilde.data() + Z_tilde.size());
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t k = 0; k < W.size(); ++k) {
    nlohmann::json layer;
    layer["rows"] = W[k].rows();
    layer["cols"] = W[k].cols();
    std::vector<double> weights;
    weights.reserve(static_cast<std::size_t>(W[k].size()));
    for (Index i = 0; i < W[k].rows(); ++i)  // row-major
      for (Index j = 0; j < W[k].cols(); ++j) weights.push_back(W[k](i, j));
    layer["weights"] = weights;
    layer["bias"] = std::vector<double>(b[k].data(), b[k].data() + b[k].size());
    layers.push_back(std::move(layer));
  }
  doc["layers"] = std::move(layers);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("CouplingMLP::save: cannot write " + path);
  out << doc.dump(2) << '\n';
}

CouplingMLP CouplingMLP::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("CouplingMLP::load: cannot open " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  if (doc.value("format", "") != "knockint-mlp-v1")
    throw std::runtime_error("CouplingMLP::load: unrecognized checkpoint format");
  CouplingMLP net;
  net.task = (doc.at("task").get<std::string>() == "binary") ? Task::binary : Task::regression;
  const auto z = doc.at("Z").get<std::vector<double>>();
  const auto zt = doc.at("Z_tilde").get<std::vector<double>>();
  if (z.size() != zt.size()) throw std::runtime_error("CouplingMLP::load: filter size mismatch");
  net.Z = Eigen::Map<const VectorXd>(z.data(), static_cast<Index>(z.size()));
  net.Z_tilde = Eigen::Map<const VectorXd>(zt.data(), static_cast<Index>(zt.size()));
  Index prev = net.Z.size();
  for (const auto& layer : doc.at("layers")) {
    const auto rows = layer.at("rows").get<Index>();
    const auto cols = layer.at("cols").get<Index>();
    const auto weights = layer.at("weights").get<std::vector<double>>();
    const auto bias = layer.at("bias").get<std::vector<double>>();
    if (rows != prev || weights.size() != static_cast<std::size_t>(rows * cols) ||
        bias.size() != static_cast<std::size_t>(cols))
      throw std::runtime_error("CouplingMLP::load: layer dimension chain mismatch");
    MatrixXd w(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) w(i, j) = weights[static_cast<std::size_t>(i * cols + j)];
    net.W.push_back(std::move(w));
    net.b.push_back(Eigen::Map<const VectorXd>(bias.data(), cols));
    prev = cols;
  }
  if (net.W.empty() || prev != 1)
    throw std::runtime_error("CouplingMLP::load: checkpoint must end in a scalar output layer");
  return net;
}

}  // namespace knockint::model
