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

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "spt/net.hpp"

using namespace spt;

namespace {

DenseLayer layer(Eigen::MatrixXd w, Eigen::VectorXd b, Activation a) {
  DenseLayer l;
  l.weights = std::move(w);
  l.bias = std::move(b);
  l.activation = a;
  return l;
}

Eigen::MatrixXd row(std::initializer_list<double> xs) {
  Eigen::MatrixXd m(1, Eigen::Index(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) m(0, i++) = x;
  return m;
}

}  // namespace

TEST_CASE("forward pass") {
  SUBCASE("zero weights give the bias") {
    DenseParams p;
    p.layers.push_back(layer(Eigen::MatrixXd::Zero(4, 3), Eigen::Vector4d(1, 2, 3, 4),
                             Activation::linear));
    CHECK(predict(p, row({5, -6, 7})) == row({1, 2, 3, 4}));
  }
  SUBCASE("affine map") {
    Eigen::MatrixXd w(2, 2);
    w << 1, 2, 3, 4;
    DenseParams p;
    p.layers.push_back(layer(w, Eigen::Vector2d(0.5, -0.5), Activation::linear));
    CHECK(predict(p, row({1, 1})) == row({3.5, 6.5}));
  }
  SUBCASE("relu hidden layer") {
    Eigen::MatrixXd w1(2, 1), w2(1, 2);
    w1 << 1, -1;
    w2 << 1, 1;
    DenseParams p;
    p.layers.push_back(layer(w1, Eigen::Vector2d::Zero(), Activation::relu));
    p.layers.push_back(layer(w2, Eigen::VectorXd::Zero(1), Activation::linear));
    CHECK(predict(p, row({2}))(0, 0) == 2.0);
    CHECK(predict(p, row({-3}))(0, 0) == 3.0);
    const Activations a = forward(p, row({2}));
    CHECK(a.output == predict(p, row({2})));
    CHECK(a.inputs.size() == 2);
  }
  SUBCASE("sigmoid output") {
    DenseParams p;
    p.layers.push_back(layer(Eigen::MatrixXd::Zero(3, 2), Eigen::Vector3d::Zero(),
                             Activation::sigmoid));
    CHECK((predict(p, row({1, 2})).array() == 0.5).all());
  }
}

TEST_CASE("mse loss") {
  CHECK(mse_loss(row({0.1, 0.2, 0.3, 0.4}), row({0.1, 0.2, 0.3, 0.4})).value == 0.0);
  CHECK(mse_loss(row({0.0, 0.0, 0.0, 0.0}), row({1, 1, 1, 1})).value == doctest::Approx(4.0));
  Eigen::MatrixXd p(2, 1), t(2, 1);
  p << 1, 3;
  t << 0, 0;
  const LossResult r = mse_loss(p, t);
  CHECK(r.value == doctest::Approx(5.0));
  CHECK(r.grad(0, 0) == doctest::Approx(1.0));
  CHECK(r.grad(1, 0) == doctest::Approx(3.0));
  CHECK_THROWS_AS(mse_loss(row({1, 2}), row({1})), ShapeError);
}

TEST_CASE("bce loss") {
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(1, 225);
  Eigen::MatrixXd targets(1, 225);
  for (Eigen::Index i = 0; i < 225; ++i) targets(0, i) = double(i % 2);
  CHECK(bce_loss_from_logits(zeros, targets).value == doctest::Approx(225.0 * std::log(2.0)));
  const double logit = std::log(0.7 / 0.3);
  CHECK(bce_loss_from_logits(row({logit}), row({1.0})).grad(0, 0) == doctest::Approx(-0.3));
  CHECK(bce_loss_from_logits(row({0.0}), row({1.0})).value == doctest::Approx(std::log(2.0)));

  const Eigen::MatrixXd z = row({-3.0, 0.2, 4.0, 40.0, -40.0});
  const Eigen::MatrixXd y = row({0.0, 1.0, 1.0, 1.0, 0.0});
  const Eigen::MatrixXd prob = (1.0 / (1.0 + (-z.array()).exp())).matrix();
  const LossResult fused = bce_loss_from_logits(z, y);
  CHECK(std::isfinite(fused.value));
  CHECK(bce_loss(prob, y).value == doctest::Approx(fused.value).epsilon(1e-6));
  CHECK(fused.value >= 0.0);
}

TEST_CASE("backward on a hand example") {
  DenseParams p;
  p.layers.push_back(layer(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Zero(1),
                           Activation::linear));
  const Activations a = forward(p, row({2}));
  const LossResult l = mse_loss(a.output, row({0}));
  CHECK(l.value == doctest::Approx(16.0));
  CHECK(l.grad(0, 0) == doctest::Approx(8.0));
  const DenseGrads g = backward(p, a, l.grad);
  CHECK(g.weights[0](0, 0) == doctest::Approx(16.0));
  CHECK(g.bias[0](0) == doctest::Approx(8.0));
}

TEST_CASE("relu derivative at zero is zero") {
  DenseParams p;
  p.layers.push_back(layer(Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1),
                           Activation::relu));
  p.layers.push_back(layer(Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Zero(1),
                           Activation::linear));
  const Activations a = forward(p, row({0}));
  const DenseGrads g = backward(p, a, row({1}));
  CHECK(g.weights[0](0, 0) == 0.0);
  CHECK(g.bias[0](0) == 0.0);
}

TEST_CASE("rmsprop") {
  DenseParams p;
  p.layers.push_back(layer(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1),
                           Activation::linear));
  SUBCASE("first step") {
    RmsProp opt(p, {});
    DenseGrads g{{Eigen::MatrixXd::Constant(1, 1, 1.0)}, {Eigen::VectorXd::Zero(1)}};
    opt.step(p, g);
    CHECK(p.layers[0].weights(0, 0) == doctest::Approx(-3.1623e-4).epsilon(1e-4));
    CHECK(opt.weight_accumulators()[0](0, 0) == doctest::Approx(0.1));
    CHECK(p.layers[0].bias(0) == 0.0);
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    p.layers[0].weights(0, 0) = 0.25;
    const DenseParams before = p;
    RmsProp opt(p, {});
    DenseGrads g{{Eigen::MatrixXd::Zero(1, 1)}, {Eigen::VectorXd::Zero(1)}};
    for (int i = 0; i < 3; ++i) opt.step(p, g);
    CHECK(p == before);
  }
  SUBCASE("non-finite gradient") {
    RmsProp opt(p, {});
    DenseGrads g{{Eigen::MatrixXd::Constant(1, 1, std::numeric_limits<double>::quiet_NaN())},
                 {Eigen::VectorXd::Zero(1)}};
    const DenseParams before = p;
    CHECK_THROWS_AS(opt.step(p, g), TrainingError);
    CHECK(p == before);
  }
}

TEST_CASE("init") {
  std::mt19937_64 rng(3);
  const DenseParams p = init_dense({10, 100, 4}, Activation::linear, rng);
  REQUIRE(p.layers.size() == 2);
  CHECK(p.layers[0].activation == Activation::relu);
  CHECK(p.layers[1].activation == Activation::linear);
  CHECK(p.parameter_count() == 10 * 100 + 100 + 100 * 4 + 4);
  CHECK(p.layers[0].weights.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 110.0));
  CHECK(p.layers[1].bias.isZero());
  std::mt19937_64 rng2(3);
  CHECK(init_dense({10, 100, 4}, Activation::linear, rng2) == p);
}

TEST_CASE("gradient check") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.0, 1.0);
  auto random = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
    return m;
  };
  SUBCASE("regression head") {
    const DenseParams p = init_dense({6, 8, 4}, Activation::linear, rng);
    CHECK(gradient_check(p, LossKind::mse, random(5, 6), random(5, 4)) < 1e-4);
  }
  SUBCASE("pixel head") {
    const DenseParams p = init_dense({6, 8, 9}, Activation::sigmoid, rng);
    Eigen::MatrixXd t = (random(5, 9).array() > 0.0).cast<double>();
    CHECK(gradient_check(p, LossKind::bce, random(5, 6), t) < 1e-4);
  }
  SUBCASE("zero input") {
    const DenseParams p = init_dense({3, 4}, Activation::linear, rng);
    CHECK(gradient_check(p, LossKind::mse, Eigen::MatrixXd::Zero(2, 3), random(2, 4)) < 1e-4);
  }
}

TEST_CASE("memorizes a small set") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(50, 5), y(50, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = u(rng);
  DenseParams p = init_dense({5, 64, 2}, Activation::linear, rng);
  RmsProp opt(p, {1e-3, 0.9, 1e-8});
  const double initial = mse_loss(predict(p, x), y).value;
  for (int epoch = 0; epoch < 3000; ++epoch) {
    const Activations a = forward(p, x);
    const LossResult l = mse_loss(a.output, y);
    opt.step(p, backward(p, a, l.grad));
  }
  const double final_loss = mse_loss(predict(p, x), y).value;
  CHECK(final_loss < 0.05 * initial);
}
