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

#include "spt/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spt {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Eigen::MatrixXd apply(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::linear: return z;
    case Activation::sigmoid: return z.unaryExpr([](double v) { return sigmoid(v); });
  }
  return z;
}

/// Elementwise f'(z).
Eigen::MatrixXd derivative(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::linear: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    case Activation::sigmoid: {
      Eigen::MatrixXd s = apply(Activation::sigmoid, z);
      return (s.array() * (1.0 - s.array())).matrix();
    }
  }
  return z;
}

Eigen::MatrixXd affine(const DenseLayer& layer, const Eigen::MatrixXd& in) {
  Eigen::MatrixXd z = in * layer.weights.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(what) + ": shape " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

void check_binary(const Eigen::MatrixXd& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y.data()[i];
    if (v != 0.0 && v != 1.0) throw Error("BCE targets must be 0 or 1, got " + std::to_string(v));
  }
}

/// Per-element loss terms as a function of the final pre-activation. Their
/// sum divided by the batch size is the loss.
Eigen::ArrayXXd loss_terms(LossKind kind, Activation out_act, const Eigen::MatrixXd& z,
                           const Eigen::MatrixXd& target) {
  if (kind == LossKind::bce) {
    const Eigen::ArrayXXd a = z.array();
    return a.max(0.0) - target.array() * a + (-a.abs()).exp().log1p();
  }
  return (apply(out_act, z) - target).array().square();
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::linear: return "linear";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "linear") return Activation::linear;
  if (name == "sigmoid") return Activation::sigmoid;
  throw Error("unknown activation '" + std::string(name) + "'");
}

std::size_t DenseParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += std::size_t(l.weights.size() + l.bias.size());
  return n;
}

void DenseParams::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    if (layer.bias.size() != layer.weights.rows())
      throw ShapeError("layer " + std::to_string(l) + ": bias size does not match weight rows");
    if (l > 0 && layer.inputs() != layers[l - 1].outputs())
      throw ShapeError("layer " + std::to_string(l) + " expects " +
                       std::to_string(layer.inputs()) + " inputs, previous layer produces " +
                       std::to_string(layers[l - 1].outputs()));
    if (!layer.weights.allFinite() || !layer.bias.allFinite())
      throw ShapeError("layer " + std::to_string(l) + " holds non-finite values");
  }
}

DenseParams init_dense(const std::vector<Eigen::Index>& widths, Activation output_activation,
                       std::mt19937_64& rng) {
  if (widths.size() < 2) throw ShapeError("a dense network needs input and output widths");
  DenseParams params;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Eigen::Index in = widths[l];
    const Eigen::Index out = widths[l + 1];
    if (in <= 0 || out <= 0) throw ShapeError("layer widths must be positive");
    const double limit = std::sqrt(6.0 / double(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseLayer layer;
    layer.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = u(rng);
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.activation = l + 2 == widths.size() ? output_activation : Activation::relu;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Activations forward(const DenseParams& params, const Eigen::MatrixXd& batch) {
  if (params.layers.empty()) throw ShapeError("forward through an empty network");
  if (batch.cols() != params.input_width())
    throw ShapeError("input width " + std::to_string(batch.cols()) + " does not match network " +
                     std::to_string(params.input_width()));
  Activations acts;
  acts.inputs.reserve(params.layers.size());
  acts.pre.reserve(params.layers.size());
  Eigen::MatrixXd a = batch;
  for (const auto& layer : params.layers) {
    acts.inputs.push_back(a);
    acts.pre.push_back(affine(layer, a));
    a = apply(layer.activation, acts.pre.back());
  }
  acts.output = std::move(a);
  acts.output_activation = params.layers.back().activation;
  return acts;
}

Eigen::MatrixXd predict(const DenseParams& params, const Eigen::MatrixXd& batch) {
  return forward(params, batch).output;
}

LossResult mse_loss(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& target) {
  check_same_shape(predicted, target, "mse_loss");
  const double n = double(predicted.rows());
  Eigen::MatrixXd residual = predicted - target;
  return {residual.squaredNorm() / n, 2.0 * residual / n};
}

LossResult bce_loss_from_logits(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& target) {
  check_same_shape(logits, target, "bce_loss");
  check_binary(target);
  const double n = double(logits.rows());
  double total = 0.0;
  Eigen::MatrixXd grad(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const double z = logits(r, c);
      const double y = target(r, c);
      // softplus(z) - y z, written to avoid overflow for large |z|.
      total += std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
      grad(r, c) = (sigmoid(z) - y) / n;
    }
  }
  return {total / n, std::move(grad)};
}

LossResult bce_loss(const Eigen::MatrixXd& probabilities, const Eigen::MatrixXd& target) {
  check_same_shape(probabilities, target, "bce_loss");
  check_binary(target);
  constexpr double kClamp = 1e-12;
  const double n = double(probabilities.rows());
  double total = 0.0;
  Eigen::MatrixXd grad(probabilities.rows(), probabilities.cols());
  for (Eigen::Index c = 0; c < probabilities.cols(); ++c) {
    for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
      const double p = std::clamp(probabilities(r, c), kClamp, 1.0 - kClamp);
      const double y = target(r, c);
      total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
      grad(r, c) = (p - y) / n;
    }
  }
  return {total / n, std::move(grad)};
}

LossResult evaluate_loss(LossKind kind, const Activations& acts, const Eigen::MatrixXd& target) {
  if (kind == LossKind::bce) {
    if (acts.output_activation != Activation::sigmoid)
      throw ShapeError("BCE needs a sigmoid output layer");
    return bce_loss_from_logits(acts.logits(), target);
  }
  LossResult r = mse_loss(acts.output, target);
  if (acts.output_activation != Activation::linear)
    r.grad = r.grad.cwiseProduct(derivative(acts.output_activation, acts.logits()));
  return r;
}

DenseGrads backward(const DenseParams& params, const Activations& acts,
                    const Eigen::MatrixXd& output_grad) {
  const std::size_t n_layers = params.layers.size();
  if (acts.pre.size() != n_layers || acts.inputs.size() != n_layers)
    throw ShapeError("activations do not come from this network");
  check_same_shape(output_grad, acts.pre.back(), "backward");
  DenseGrads grads;
  grads.weights.resize(n_layers);
  grads.bias.resize(n_layers);
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t l = n_layers; l-- > 0;) {
    grads.weights[l] = delta.transpose() * acts.inputs[l];
    grads.bias[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd upstream = delta * params.layers[l].weights;
    delta = upstream.cwiseProduct(derivative(params.layers[l - 1].activation, acts.pre[l - 1]));
  }
  return grads;
}

RmsProp::RmsProp(const DenseParams& params, RmsPropConfig config) : config_(config) {
  for (const auto& layer : params.layers) {
    acc_w_.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    acc_b_.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
}

void RmsProp::step(DenseParams& params, const DenseGrads& grads) {
  const std::size_t n = params.layers.size();
  if (grads.weights.size() != n || grads.bias.size() != n || acc_w_.size() != n)
    throw ShapeError("optimizer state does not match parameters");
  for (std::size_t l = 0; l < n; ++l) {
    if (grads.weights[l].rows() != acc_w_[l].rows() || grads.weights[l].cols() != acc_w_[l].cols() ||
        grads.bias[l].size() != acc_b_[l].size())
      throw ShapeError("gradient shape mismatch in layer " + std::to_string(l));
    if (!grads.weights[l].allFinite() || !grads.bias[l].allFinite())
      throw TrainingError("non-finite gradient in layer " + std::to_string(l));
  }
  const double rho = config_.decay;
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;
  for (std::size_t l = 0; l < n; ++l) {
    acc_w_[l] = rho * acc_w_[l] + (1.0 - rho) * grads.weights[l].cwiseAbs2();
    acc_b_[l] = rho * acc_b_[l] + (1.0 - rho) * grads.bias[l].cwiseAbs2();
    params.layers[l].weights.array() -=
        lr * grads.weights[l].array() / (acc_w_[l].array().sqrt() + eps);
    params.layers[l].bias.array() -= lr * grads.bias[l].array() / (acc_b_[l].array().sqrt() + eps);
  }
}

double gradient_check(const DenseParams& params, LossKind loss, const Eigen::MatrixXd& batch,
                      const Eigen::MatrixXd& target, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
    throw Error("gradient_check epsilon must lie in [1e-7, 1e-3]");
  const Activations acts = forward(params, batch);
  const DenseGrads analytic = backward(params, acts, evaluate_loss(loss, acts, target).grad);
  const std::size_t last = params.layers.size() - 1;
  const Activation out_act = params.layers[last].activation;

  // Loss after replacing layer l by `layer`, reusing the cached inputs.
  auto loss_with = [&](std::size_t l, const DenseLayer& layer) {
    Eigen::MatrixXd z = affine(layer, acts.inputs[l]);
    for (std::size_t k = l + 1; k <= last; ++k)
      z = affine(params.layers[k], apply(params.layers[k - 1].activation, z));
    return loss_terms(loss, out_act, z, target);
  };
  // For the output layer a perturbation only moves one logit column.
  auto loss_last_unit = [&](Eigen::Index unit, const DenseLayer& layer) {
    Eigen::MatrixXd z = acts.pre[last];
    z.col(unit) = acts.inputs[last] * layer.weights.row(unit).transpose();
    z.col(unit).array() += layer.bias(unit);
    return loss_terms(loss, out_act, z, target);
  };

  // Differencing term by term keeps the rounding error of the large shared
  // part of the loss out of the numerator.
  const double scale = 2.0 * epsilon * double(batch.rows());
  auto central = [&](const Eigen::ArrayXXd& up, const Eigen::ArrayXXd& down) {
    return (up - down).sum() / scale;
  };
  double worst = 0.0;
  auto record = [&](double a, double numeric) {
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  };
  for (std::size_t l = 0; l <= last; ++l) {
    DenseLayer layer = params.layers[l];
    auto eval = [&](Eigen::Index unit) {
      return l == last ? loss_last_unit(unit, layer) : loss_with(l, layer);
    };
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        const double saved = layer.weights(r, c);
        layer.weights(r, c) = saved + epsilon;
        const Eigen::ArrayXXd up = eval(r);
        layer.weights(r, c) = saved - epsilon;
        const Eigen::ArrayXXd down = eval(r);
        layer.weights(r, c) = saved;
        record(analytic.weights[l](r, c), central(up, down));
      }
      const double saved = layer.bias(r);
      layer.bias(r) = saved + epsilon;
      const Eigen::ArrayXXd up = eval(r);
      layer.bias(r) = saved - epsilon;
      const Eigen::ArrayXXd down = eval(r);
      layer.bias(r) = saved;
      record(analytic.bias[l](r), central(up, down));
    }
  }
  return worst;
}

}  // namespace spt
