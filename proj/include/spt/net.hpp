// Copyright 2026 The spatial-templates Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense feed-forward networks with analytic backpropagation, the two losses
// used by the template models, RMSprop and a finite-difference gradient check.
//
// Batches are row-major in the sense that each row of an input matrix is one
// example. Layer l maps A_{l-1} (batch x in) to Z_l = A_{l-1} W_l^T + b_l and
// A_l = f_l(Z_l). All arithmetic is double precision.

#ifndef SPT_NET_HPP
#define SPT_NET_HPP

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "spt/common.hpp"

namespace spt {

enum class Activation { relu, linear, sigmoid };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  Eigen::MatrixXd weights;  ///< out x in
  Eigen::VectorXd bias;     ///< out
  Activation activation = Activation::linear;

  Eigen::Index inputs() const { return weights.cols(); }
  Eigen::Index outputs() const { return weights.rows(); }

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.activation == b.activation && a.weights.rows() == b.weights.rows() &&
           a.weights.cols() == b.weights.cols() && a.weights == b.weights && a.bias == b.bias;
  }
};

struct DenseParams {
  std::vector<DenseLayer> layers;

  Eigen::Index input_width() const { return layers.empty() ? 0 : layers.front().inputs(); }
  Eigen::Index output_width() const { return layers.empty() ? 0 : layers.back().outputs(); }
  std::size_t parameter_count() const;

  /// Throws ShapeError if consecutive layers do not compose or a value is not
  /// finite.
  void validate() const;

  friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

/// Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases.
/// `widths` lists input width, hidden widths, then output width; hidden
/// layers use relu.
DenseParams init_dense(const std::vector<Eigen::Index>& widths, Activation output_activation,
                       std::mt19937_64& rng);

struct Activations {
  std::vector<Eigen::MatrixXd> inputs;       ///< A_{l-1} per layer, inputs[0] is the batch
  std::vector<Eigen::MatrixXd> pre;          ///< Z_l per layer
  Eigen::MatrixXd output;                    ///< f(Z_L)
  Activation output_activation = Activation::linear;

  const Eigen::MatrixXd& logits() const { return pre.back(); }
};

Activations forward(const DenseParams& params, const Eigen::MatrixXd& batch);

/// Output only; same numbers as forward().output.
Eigen::MatrixXd predict(const DenseParams& params, const Eigen::MatrixXd& batch);

struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd grad;  ///< dL/dZ_out (equal to dL/dy_hat for a linear head)
};

/// Squared L2 norm of the per-example residual, averaged over the batch.
LossResult mse_loss(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& target);

/// Binary cross-entropy summed over output units, averaged over the batch,
/// computed from the pre-sigmoid logits. Gradient is (sigmoid(z) - y) / batch.
LossResult bce_loss_from_logits(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& target);

/// Same loss from post-sigmoid probabilities, clamped to [1e-12, 1 - 1e-12].
/// Gradient is still with respect to the logits.
LossResult bce_loss(const Eigen::MatrixXd& probabilities, const Eigen::MatrixXd& target);

enum class LossKind { mse, bce };

/// Dispatches on the loss kind; BCE uses the fused logit form.
LossResult evaluate_loss(LossKind kind, const Activations& acts, const Eigen::MatrixXd& target);

struct DenseGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;
};

/// Backpropagates dL/dZ_out. The relu derivative at exactly zero is zero.
DenseGrads backward(const DenseParams& params, const Activations& acts,
                    const Eigen::MatrixXd& output_grad);

struct RmsPropConfig {
  double learning_rate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-8;
};

class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(const DenseParams& params, RmsPropConfig config);

  /// a <- decay a + (1 - decay) g^2;  theta <- theta - lr g / (sqrt(a) + eps).
  /// Throws TrainingError on a non-finite gradient, before touching anything.
  void step(DenseParams& params, const DenseGrads& grads);

  const RmsPropConfig& config() const { return config_; }
  const std::vector<Eigen::MatrixXd>& weight_accumulators() const { return acc_w_; }
  const std::vector<Eigen::VectorXd>& bias_accumulators() const { return acc_b_; }

 private:
  RmsPropConfig config_;
  std::vector<Eigen::MatrixXd> acc_w_;
  std::vector<Eigen::VectorXd> acc_b_;
};

/// Max over all parameters of |analytic - numeric| / max(|analytic|,
/// |numeric|, 1e-8), numeric being the central difference with step epsilon.
double gradient_check(const DenseParams& params, LossKind loss, const Eigen::MatrixXd& batch,
                      const Eigen::MatrixXd& target, double epsilon = 1e-5);

}  // namespace spt

#endif  // SPT_NET_HPP
