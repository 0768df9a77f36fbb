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
#include <random>
#include <sstream>

#include "json.hpp"

#include "doctest.h"
#include "spt/metrics.hpp"

using namespace spt;

namespace {

// Area fractions by sampling a fine lattice over the unit square.
double lattice_iou(const Box& a, const Box& b, int n = 1000) {
  long inter = 0, uni = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = (j + 0.5) / n, y = (i + 0.5) / n;
      const bool in_a = x >= a.left() && x <= a.right() && y >= a.top() && y <= a.bottom();
      const bool in_b = x >= b.left() && x <= b.right() && y >= b.top() && y <= b.bottom();
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

Instance inst(Box sb, Box ob) {
  Instance i;
  i.subject_word = "s";
  i.relation_word = "r";
  i.object_word = "o";
  i.subject_box = sb;
  i.object_box = ob;
  return i;
}

}  // namespace

TEST_CASE("iou") {
  const Box a{0.3, 0.5, 0.2, 0.1}, b{0.5, 0.5, 0.2, 0.1};
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(lattice_iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(0.01));
  CHECK(iou(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, {0.9, 0.5, 0.05, 0.05}) == 0.0);
  CHECK(iou({0.5, 0.5, 0, 0}, {0.5, 0.5, 0, 0}) == 0.0);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> c(0.2, 0.8), h(0.02, 0.2);
  for (int k = 0; k < 200; ++k) {
    const Box p{c(rng), c(rng), h(rng), h(rng)}, q{c(rng), c(rng), h(rng), h(rng)};
    CHECK(iou(p, q) == doctest::Approx(iou(q, p)));
    CHECK(iou(p, q) >= 0.0);
    CHECK(iou(p, q) <= 1.0);
    if (k < 10) CHECK(std::abs(iou(p, q) - lattice_iou(p, q, 400)) < 0.02);
  }
}

TEST_CASE("iou_accuracy") {
  const Box a{0.3, 0.5, 0.2, 0.1}, b{0.5, 0.5, 0.2, 0.1};
  // iou exactly 0.5: [0,1] against [0,2] on x.
  const Box c{0.25, 0.5, 0.25, 0.1}, d{0.5, 0.5, 0.5, 0.1};
  CHECK(iou(c, d) == doctest::Approx(0.5));
  std::vector<Box> pred{a, a, c}, truth{a, b, d};
  CHECK(iou_accuracy(pred, truth) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("r_squared") {
  Eigen::MatrixXd t(4, 2);
  t << 1, 2, 2, 4, 3, 1, 4, 3;
  CHECK(r_squared(t, t) == doctest::Approx(1.0));
  Eigen::MatrixXd mean = t.colwise().mean().replicate(4, 1);
  CHECK(r_squared(mean, t) == doctest::Approx(0.0).epsilon(1e-12));
  Eigen::MatrixXd bad = t;
  bad.col(0) = t.col(0).reverse();
  CHECK(r_squared(bad, t) < 1.0);

  Eigen::MatrixXd k(3, 2), kp(3, 2);
  k << 1, 5, 2, 5, 3, 5;
  kp << 1, 4, 2, 6, 3, 7;
  CHECK(r_squared(kp, k) == doctest::Approx(1.0));
  CHECK_THROWS(r_squared(Eigen::MatrixXd::Constant(3, 1, 1.0), Eigen::MatrixXd::Constant(3, 1, 2.0)));

  Eigen::MatrixXd w(4, 2), wp(4, 2);
  w << 0, 0, 1, 10, 2, 20, 3, 30;
  wp << 0, 0, 1, 10, 2, 20, 3, 31;
  wp(0, 0) = 1;
  const double uniform = r_squared(wp, w);
  const double weighted = r_squared(wp, w, R2Aggregation::variance_weighted);
  CHECK(weighted != doctest::Approx(uniform));
  CHECK(weighted > uniform);
}

TEST_CASE("pearson") {
  std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 6, 8, 10}, z{5, 4, 3, 2, 1};
  CHECK(pearson(x, y) == doctest::Approx(1.0));
  CHECK(pearson(x, z) == doctest::Approx(-1.0));
  CHECK_THROWS(pearson(x, std::vector<double>(5, 3.0)));
  std::vector<double> u{0.3, -1.2, 2.5, 0.7, 1.1}, v{1.0, 0.2, 2.0, -0.5, 0.4};
  std::vector<double> ua, va;
  for (std::size_t i = 0; i < u.size(); ++i) {
    ua.push_back(3.0 * u[i] + 7.0);
    va.push_back(0.5 * v[i] - 2.0);
  }
  CHECK(pearson(ua, va) == doctest::Approx(pearson(u, v)));
}

TEST_CASE("above_below") {
  const std::vector<double> subject{0.5, 0.5, 0.5, 0.5};
  const std::vector<double> truth{0.3, 0.2, 0.7, 0.8};
  const std::vector<double> flipped{0.7, 0.8, 0.3, 0.2};
  const std::vector<double> same = truth;
  CHECK(above_below(same, truth, subject).accuracy == 1.0);
  CHECK(above_below(same, truth, subject).f1 == 1.0);
  CHECK(above_below(flipped, truth, subject).accuracy == 0.0);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s, t, p, q;
  for (int k = 0; k < 300; ++k) {
    s.push_back(0.5);
    t.push_back(u(rng));
    p.push_back(u(rng));
    q.push_back(1.0 - p.back());
  }
  const double acc = above_below(p, t, s).accuracy;
  CHECK(above_below(q, t, s).accuracy == doctest::Approx(1.0 - acc));

  // zero difference counts as "below"
  CHECK(above_below(std::vector<double>{0.5, 0.2}, std::vector<double>{0.6, 0.1},
                    std::vector<double>{0.5, 0.5})
            .accuracy == 1.0);
  const std::vector<double> imbalanced_truth{0.2, 0.2, 0.2, 0.8};
  const std::vector<double> all_above{0.2, 0.2, 0.2, 0.2};
  CHECK(above_below(all_above, imbalanced_truth, subject).accuracy == doctest::Approx(0.5));
  CHECK(above_below(all_above, imbalanced_truth, subject, MacroAccuracy::per_class).accuracy ==
        doctest::Approx(0.75));
}

TEST_CASE("mean_iou_pixels") {
  Grid target = Grid::Zero(3, 3);
  target(1, 1) = 1.0;
  const std::vector<Grid> targets{target};
  CHECK(mean_iou_pixels({Grid::Zero(3, 3)}, targets).value == doctest::Approx(0.5));
  CHECK(mean_iou_pixels({target}, targets).value == doctest::Approx(1.0));
  CHECK_THROWS(mean_iou_pixels({Grid::Zero(3, 3)}, {Grid::Zero(3, 3)}));

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Grid> heat, squashed, truth;
  for (int k = 0; k < 20; ++k) {
    Grid h(5, 5), t(5, 5);
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      h.data()[i] = u(rng);
      t.data()[i] = u(rng) < 0.3 + 0.4 * h.data()[i] ? 1.0 : 0.0;
    }
    heat.push_back(h);
    squashed.push_back(h.array().square().matrix());
    truth.push_back(t);
  }
  const MiouResult a = mean_iou_pixels(heat, truth, ThresholdSweep::exact);
  const MiouResult b = mean_iou_pixels(squashed, truth, ThresholdSweep::exact);
  CHECK(a.value == doctest::Approx(b.value));
  CHECK(a.value >= mean_iou_pixels(heat, truth, ThresholdSweep::grid101).value - 1e-12);
  CHECK(a.value > 0.5);
}

TEST_CASE("control baselines") {
  SUBCASE("constant targets") {
    const Eigen::MatrixXd t = Eigen::RowVector4d(0.1, 0.2, 0.3, 0.4).replicate(10, 1);
    const Eigen::MatrixXd c = ctrl_baseline(t, 5, 3);
    CHECK(c == Eigen::RowVector4d(0.1, 0.2, 0.3, 0.4).replicate(5, 1));
  }
  SUBCASE("moments") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z(0.3, 0.1);
    Eigen::MatrixXd t(500, 2);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = z(rng);
    const Eigen::MatrixXd c = ctrl_baseline(t, 20000, 8);
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double mu = t.col(j).mean();
      const double sd = std::sqrt((t.col(j).array() - mu).square().mean());
      CHECK(std::abs(c.col(j).mean() - mu) < 3.0 * sd / std::sqrt(20000.0));
    }
    CHECK(ctrl_baseline(t, 20000, 8) == c);
  }
  SUBCASE("heatmaps") {
    const auto h = ctrl_heatmaps(4, 15, 1);
    REQUIRE(h.size() == 4);
    CHECK(h[0].rows() == 15);
    CHECK((h[0].array() >= 0.0).all());
    CHECK((h[0].array() <= 1.0).all());
  }
}

TEST_CASE("reports") {
  std::vector<Instance> train, test;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.3, 0.7);
  for (int k = 0; k < 200; ++k) {
    Instance i = inst({u(rng), u(rng), 0.1, 0.1}, {u(rng), u(rng), 0.05, 0.05});
    (k < 150 ? train : test).push_back(i);
  }
  const FoldMetrics pix = evaluate_ctrl(Head::pix, train, test, 5);
  CHECK_FALSE(pix.r2.has_value());
  CHECK_FALSE(pix.iou_acc.has_value());
  CHECK(pix.miou.has_value());
  CHECK(pix.acc_y.has_value());
  const FoldMetrics reg = evaluate_ctrl(Head::reg, train, test, 5);
  CHECK(reg.r2.has_value());
  CHECK(reg.iou_acc.has_value());
  CHECK_FALSE(reg.miou.has_value());
  CHECK(reg.n_test == 50);

  std::vector<RegPrediction> exact;
  for (const auto& t : test) exact.push_back({{t.object_box.center_x, t.object_box.center_y},
                                             {t.object_box.half_w, t.object_box.half_h}});
  const FoldMetrics perfect = evaluate_reg(exact, test);
  CHECK(*perfect.r2 == doctest::Approx(1.0));
  CHECK(*perfect.iou_acc == 1.0);
  CHECK(*perfect.r_x == doctest::Approx(1.0));

  EvalReport report{"REG_1H", "cv", {perfect, reg}, "command=eval"};
  const FoldMetrics m = report.mean();
  CHECK(*m.r2 == doctest::Approx((*perfect.r2 + *reg.r2) / 2.0));
  CHECK(m.n_test == 100);
  report.folds.push_back(pix);
  CHECK(*report.mean().r2 == doctest::Approx(*m.r2));
  CHECK(*report.mean().miou == doctest::Approx(*pix.miou));

  std::ostringstream js, table;
  write_report_json(js, report);
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j["method"] == "REG_1H");
  CHECK(j["folds"].size() == 3);
  CHECK(j["folds"][2]["r2"].is_null());
  write_report_table(table, report);
  CHECK(table.str().find("mIoU") != std::string::npos);
  CHECK(table.str().find("1.000") != std::string::npos);
}
