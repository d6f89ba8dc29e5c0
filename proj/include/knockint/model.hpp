#pragma once

// Knockoff-tailored multilayer perceptron. The augmented input of width 2p
// passes through a pairwise-coupling layer of p linear filters
// F_j = Z_j x_j + Zt_j x_{j+p}, then an ELU pyramid of widths
// ceil(p/2), ceil(p/4) and a linear scalar output (full width sequence
// 2p, p, p/2, p/4, 1). Gradients and Hessians with respect to all 2p inputs
// are exact, via the layerwise second-order backward recursion.

#include <cstdint>
#include <string>
#include <vector>

#include "knockint/dataset.hpp"
#include "knockint/scalar_field.hpp"

namespace knockint::model {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double validation_fraction = 0.2;
  // Validation MSE on heavy-tailed responses wanders for tens of epochs
  // before the interaction structure is learned; a 10-epoch patience halts
  // training inside that plateau.
  int patience = 40;
  // Heavy-tailed responses (ratio terms in the synthetic suite) swamp both
  // the batch gradients and the early-stopping signal; clipping the global
  // gradient norm keeps single rows from dominating an update.
  double max_grad_norm = 1.0;  // <= 0 disables clipping
  // Per-sample residual clip for the regression gradient, as a multiple of
  // the training response MAD (0 disables). Limits each row's vote in a
  // batch; the reported losses remain plain squared error.
  double residual_clip_mads = 20.0;
  // Cosine decay of the learning rate toward lr_floor_fraction * lr across
  // the epoch budget; 1.0 keeps the rate constant. Decayed weights settle,
  // which removes late-training curvature noise from the Hessian maps.
  double lr_floor_fraction = 0.05;
  std::uint64_t seed = 0;
};

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_validation_loss = 0.0;
  double final_train_loss = 0.0;
};

class CouplingMLP : public ScalarField {
 public:
  Eigen::VectorXd Z;        // filter weights for original columns, length p
  Eigen::VectorXd Z_tilde;  // filter weights for knockoff columns, length p
  std::vector<Eigen::MatrixXd> W;  // W[k] maps width_k -> width_{k+1}; last maps to 1
  std::vector<Eigen::VectorXd> b;
  Task task = Task::regression;

  // Fresh network with fan-in uniform weights and Z = Z_tilde = 1/sqrt(2).
  static CouplingMLP initialize(Eigen::Index p, Task task, std::uint64_t seed);

  Eigen::Index p() const { return Z.size(); }
  Eigen::Index dim() const override { return 2 * Z.size(); }

  // For the binary task this is the pre-sigmoid logit.
  double value(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const override;

  // Batched forward over rows (one output per row, logit scale).
  Eigen::VectorXd predict(const Eigen::MatrixXd& rows) const;

  void save(const std::string& path) const;
  static CouplingMLP load(const std::string& path);
};

// Hidden widths after the coupling output: {ceil(p/2), ceil(p/4)}.
std::vector<Eigen::Index> hidden_widths(Eigen::Index p);

// Mini-batch adaptive-moment training with early stopping on a held-out
// validation slice; returns the best-validation snapshot. Deterministic for
// a fixed (data, cfg) on one thread. Throws if the loss turns non-finite,
// naming the epoch.
CouplingMLP train(const AugmentedDataset& data, const TrainConfig& cfg,
                  Task task = Task::regression, TrainReport* report = nullptr);

double elu(double u);
double elu_d1(double u);
double elu_d2(double u);  // 0 for u >= 0 by convention, exp(u) for u < 0

}  // namespace knockint::model
