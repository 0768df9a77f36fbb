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

#include "spt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include "json.hpp"

namespace spt {

namespace {

void require_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": " + std::to_string(a) + " predictions for " +
                     std::to_string(b) + " truths");
}

bool is_above(double diff) { return diff < 0.0; }

struct ReportField {
  const char* name;
  std::optional<double> FoldMetrics::*member;
};

constexpr ReportField kFields[] = {
    {"r2", &FoldMetrics::r2},       {"acc_y", &FoldMetrics::acc_y},
    {"f1_y", &FoldMetrics::f1_y},   {"r_x", &FoldMetrics::r_x},
    {"r_y", &FoldMetrics::r_y},     {"iou", &FoldMetrics::iou_acc},
    {"miou", &FoldMetrics::miou},   {"miou_threshold", &FoldMetrics::miou_threshold},
};

std::optional<double> try_pearson(std::span<const double> xs, std::span<const double> ys,
                                  const char* label) {
  try {
    return pearson(xs, ys);
  } catch (const Error& e) {
    warn(std::string(label) + " left absent: " + e.what());
    return std::nullopt;
  }
}

void fill_center_metrics(FoldMetrics& m, const std::vector<std::array<double, 2>>& centers,
                         const std::vector<Instance>& test, const EvalOptions& options) {
  std::vector<double> px, py, tx, ty, sy;
  for (std::size_t i = 0; i < test.size(); ++i) {
    px.push_back(centers[i][0]);
    py.push_back(centers[i][1]);
    tx.push_back(test[i].object_box.center_x);
    ty.push_back(test[i].object_box.center_y);
    sy.push_back(test[i].subject_box.center_y);
  }
  const AboveBelow ab = above_below(py, ty, sy, options.macro);
  m.acc_y = ab.accuracy;
  m.f1_y = ab.f1;
  m.r_x = try_pearson(px, tx, "r_x");
  m.r_y = try_pearson(py, ty, "r_y");
}

Eigen::MatrixXd reg_targets(const std::vector<Instance>& set) {
  Eigen::MatrixXd y(Eigen::Index(set.size()), 4);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Box& b = set[i].object_box;
    y.row(Eigen::Index(i)) << b.center_x, b.center_y, b.half_w, b.half_h;
  }
  return y;
}

std::string fixed3(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  if (a.half_w < 0 || a.half_h < 0 || b.half_w < 0 || b.half_h < 0)
    throw Error("iou of a box with negative half-extent");
  const double iw = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left(), b.left()));
  const double ih = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top()));
  const double inter = iw * ih;
  const double uni = 4.0 * a.half_w * a.half_h + 4.0 * b.half_w * b.half_h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double iou_accuracy(std::span<const Box> predictions, std::span<const Box> truths) {
  require_aligned(predictions.size(), truths.size(), "iou_accuracy");
  if (truths.empty()) throw Error("iou_accuracy of an empty list");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    // A predicted box with a negative half-extent has no area.
    Box p = predictions[i];
    p.half_w = std::max(0.0, p.half_w);
    p.half_h = std::max(0.0, p.half_h);
    if (iou(p, truths[i]) > 0.5) ++hits;
  }
  return double(hits) / double(truths.size());
}

double r_squared(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& truths,
                 R2Aggregation aggregation) {
  if (predictions.rows() != truths.rows() || predictions.cols() != truths.cols())
    throw ShapeError("r_squared: prediction and truth shapes differ");
  if (truths.rows() < 2) throw Error("r_squared needs at least 2 instances");
  double sum_r2 = 0.0;
  double sum_res = 0.0;
  double sum_tot = 0.0;
  int used = 0;
  for (Eigen::Index j = 0; j < truths.cols(); ++j) {
    const double mean = truths.col(j).mean();
    const double tot = (truths.col(j).array() - mean).square().sum();
    if (tot == 0.0) {
      warn("r_squared: output dimension " + std::to_string(j) +
           " has zero variance and is excluded");
      continue;
    }
    const double res = (truths.col(j) - predictions.col(j)).squaredNorm();
    sum_r2 += 1.0 - res / tot;
    sum_res += res;
    sum_tot += tot;
    ++used;
  }
  if (used == 0) throw Error("r_squared: every truth dimension is constant");
  return aggregation == R2Aggregation::uniform ? sum_r2 / used : 1.0 - sum_res / sum_tot;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  require_aligned(xs.size(), ys.size(), "pearson");
  const std::size_t n = xs.size();
  if (n < 2) throw Error("pearson needs at least 2 values");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson of a constant sequence");
  const double d = double(n - 1);
  return std::clamp((sxy / d) / (std::sqrt(sxx / d) * std::sqrt(syy / d)), -1.0, 1.0);
}

AboveBelow above_below(std::span<const double> predicted_y, std::span<const double> true_y,
                       std::span<const double> subject_y, MacroAccuracy averaging) {
  require_aligned(predicted_y.size(), true_y.size(), "above_below");
  require_aligned(subject_y.size(), true_y.size(), "above_below");
  if (true_y.empty()) throw Error("above_below of an empty list");
  // Index 0 = above, 1 = below.
  std::size_t truth_count[2] = {0, 0};
  std::size_t pred_count[2] = {0, 0};
  std::size_t hit[2] = {0, 0};
  for (std::size_t i = 0; i < true_y.size(); ++i) {
    const int t = is_above(true_y[i] - subject_y[i]) ? 0 : 1;
    const int p = is_above(predicted_y[i] - subject_y[i]) ? 0 : 1;
    ++truth_count[t];
    ++pred_count[p];
    if (t == p) ++hit[t];
  }
  const char* names[2] = {"above", "below"};
  double recall_sum = 0.0;
  double f1_sum = 0.0;
  int classes = 0;
  for (int c = 0; c < 2; ++c) {
    if (truth_count[c] == 0) {
      warn(std::string("above_below: no '") + names[c] +
           "' instances in the truths; class excluded from the macro averages");
      continue;
    }
    const double recall = double(hit[c]) / double(truth_count[c]);
    const double precision = pred_count[c] ? double(hit[c]) / double(pred_count[c]) : 0.0;
    recall_sum += recall;
    f1_sum += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    ++classes;
  }
  AboveBelow out;
  out.f1 = f1_sum / classes;
  if (averaging == MacroAccuracy::balanced)
    out.accuracy = recall_sum / classes;
  else
    out.accuracy = double(hit[0] + hit[1]) / double(true_y.size());
  return out;
}

MiouResult mean_iou_pixels(const std::vector<Grid>& heatmaps, const std::vector<Grid>& targets,
                           ThresholdSweep sweep) {
  require_aligned(heatmaps.size(), targets.size(), "mean_iou_pixels");
  std::vector<std::pair<double, bool>> pixels;
  for (std::size_t g = 0; g < heatmaps.size(); ++g) {
    if (heatmaps[g].rows() != targets[g].rows() || heatmaps[g].cols() != targets[g].cols())
      throw ShapeError("mean_iou_pixels: heatmap and target grids differ in size");
    for (Eigen::Index k = 0; k < heatmaps[g].size(); ++k)
      pixels.emplace_back(heatmaps[g].data()[k], targets[g].data()[k] > 0.5);
  }
  std::size_t positives = 0;
  for (const auto& p : pixels) positives += p.second;
  const std::size_t negatives = pixels.size() - positives;
  if (positives == 0 || negatives == 0)
    throw Error("mean_iou_pixels: pooled targets contain a single class");
  std::sort(pixels.begin(), pixels.end());

  // Prefix counts over pixels sorted by activation: below[k] holds the
  // positives among the first k pixels.
  std::vector<std::size_t> below(pixels.size() + 1, 0);
  for (std::size_t k = 0; k < pixels.size(); ++k) below[k + 1] = below[k] + pixels[k].second;

  auto score = [&](double t) {
    // Pixels with activation <= t are predicted background.
    const auto cut = std::size_t(
        std::upper_bound(pixels.begin(), pixels.end(), t,
                         [](double v, const std::pair<double, bool>& p) { return v < p.first; }) -
        pixels.begin());
    const double fg_recall = double(positives - below[cut]) / double(positives);
    const double bg_recall = double(cut - below[cut]) / double(negatives);
    return 0.5 * (fg_recall + bg_recall);
  };

  MiouResult best{-1.0, 0.0};
  auto consider = [&](double t) {
    const double s = score(t);
    if (s > best.value) best = {s, t};
  };
  if (sweep == ThresholdSweep::grid101) {
    for (int k = 0; k <= 100; ++k) consider(double(k) / 100.0);
  } else {
    consider(-std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < pixels.size(); ++k)
      if (k + 1 == pixels.size() || pixels[k + 1].first != pixels[k].first)
        consider(pixels[k].first);
  }
  return best;
}

Eigen::MatrixXd ctrl_baseline(const Eigen::MatrixXd& training_targets, std::size_t n_test,
                              std::uint64_t seed) {
  if (training_targets.rows() == 0) throw Error("ctrl baseline needs training targets");
  const Eigen::Index d = training_targets.cols();
  const Eigen::RowVectorXd mean = training_targets.colwise().mean();
  std::vector<std::normal_distribution<double>> draws;
  std::vector<bool> constant;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sd = std::sqrt((training_targets.col(j).array() - mean(j)).square().mean());
    constant.push_back(!(sd > 0.0));
    draws.emplace_back(mean(j), sd > 0.0 ? sd : 1.0);
  }
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd out(Eigen::Index(n_test), d);
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      out(i, j) = constant[std::size_t(j)] ? mean(j) : draws[std::size_t(j)](rng);
  return out;
}

std::vector<Grid> ctrl_heatmaps(std::size_t n_test, int grid_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Grid> out(n_test, Grid(grid_size, grid_size));
  for (auto& g : out)
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = u(rng);
  return out;
}

FoldMetrics EvalReport::mean() const {
  FoldMetrics m;
  for (const auto& f : kFields) {
    double sum = 0.0;
    int count = 0;
    for (const auto& fold : folds) {
      if (const auto& v = fold.*f.member) {
        sum += *v;
        ++count;
      }
    }
    if (count > 0) m.*f.member = sum / count;
  }
  for (const auto& fold : folds) {
    m.n_train += fold.n_train;
    m.n_test += fold.n_test;
    m.negative_halves += fold.negative_halves;
  }
  return m;
}

FoldMetrics evaluate_reg(const std::vector<RegPrediction>& predictions,
                         const std::vector<Instance>& test, const EvalOptions& options) {
  require_aligned(predictions.size(), test.size(), "evaluate_reg");
  if (test.empty()) throw Error("evaluation set is empty");
  FoldMetrics m;
  m.n_test = test.size();
  Eigen::MatrixXd pred(Eigen::Index(test.size()), 4);
  std::vector<Box> pboxes, tboxes;
  std::vector<std::array<double, 2>> centers;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& p = predictions[i];
    pred.row(Eigen::Index(i)) << p.center[0], p.center[1], p.half[0], p.half[1];
    pboxes.push_back(p.box());
    tboxes.push_back(test[i].object_box);
    centers.push_back(p.center);
    if (p.half[0] < 0.0 || p.half[1] < 0.0) ++m.negative_halves;
  }
  try {
    m.r2 = r_squared(pred, reg_targets(test), options.r2);
  } catch (const Error& e) {
    warn(std::string("r2 left absent: ") + e.what());
  }
  fill_center_metrics(m, centers, test, options);
  m.iou_acc = iou_accuracy(pboxes, tboxes);
  return m;
}

FoldMetrics evaluate_pix(const std::vector<Grid>& heatmaps, const std::vector<Instance>& test,
                         int grid_size, const EvalOptions& options,
                         const std::vector<std::array<double, 2>>* centers) {
  require_aligned(heatmaps.size(), test.size(), "evaluate_pix");
  if (test.empty()) throw Error("evaluation set is empty");
  FoldMetrics m;
  m.n_test = test.size();
  std::vector<std::array<double, 2>> derived;
  if (centers == nullptr) {
    for (const auto& h : heatmaps) derived.push_back(heatmap_center(h));
    centers = &derived;
  }
  require_aligned(centers->size(), test.size(), "evaluate_pix centers");
  fill_center_metrics(m, *centers, test, options);
  std::vector<Grid> targets;
  targets.reserve(test.size());
  for (const auto& inst : test) targets.push_back(rasterize_box(inst.object_box, grid_size));
  const MiouResult r = mean_iou_pixels(heatmaps, targets, options.sweep);
  m.miou = r.value;
  m.miou_threshold = r.threshold;
  return m;
}

FoldMetrics evaluate(const TrainedModel& model, const std::vector<Instance>& test,
                     const Provenance& data_provenance, const EvalOptions& options) {
  check_provenance(model, data_provenance);
  if (model.head == Head::reg) return evaluate_reg(predict_reg_batch(model, test), test, options);
  return evaluate_pix(predict_pix_batch(model, test), test, model.grid_size(), options);
}

FoldMetrics evaluate_ctrl(Head head, const std::vector<Instance>& train,
                          const std::vector<Instance>& test, std::uint64_t seed, int grid_size,
                          const EvalOptions& options) {
  const Eigen::MatrixXd draws = ctrl_baseline(reg_targets(train), test.size(), seed);
  FoldMetrics m;
  if (head == Head::reg) {
    std::vector<RegPrediction> preds;
    for (Eigen::Index i = 0; i < draws.rows(); ++i)
      preds.push_back({{draws(i, 0), draws(i, 1)}, {draws(i, 2), draws(i, 3)}});
    m = evaluate_reg(preds, test, options);
  } else {
    std::vector<std::array<double, 2>> centers;
    for (Eigen::Index i = 0; i < draws.rows(); ++i) centers.push_back({draws(i, 0), draws(i, 1)});
    m = evaluate_pix(ctrl_heatmaps(test.size(), grid_size, seed + 1), test, grid_size, options,
                     &centers);
  }
  m.n_train = train.size();
  return m;
}

void write_report_json(std::ostream& out, const EvalReport& report) {
  auto fold_json = [](const FoldMetrics& f) {
    nlohmann::ordered_json j;
    for (const auto& field : kFields) {
      const auto& v = f.*field.member;
      j[field.name] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    }
    j["n_train"] = f.n_train;
    j["n_test"] = f.n_test;
    j["negative_halves"] = f.negative_halves;
    return j;
  };
  nlohmann::ordered_json j;
  j["method"] = report.method;
  j["split"] = report.split;
  j["config"] = report.config;
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : report.folds) j["folds"].push_back(fold_json(f));
  j["mean"] = fold_json(report.mean());
  out << j.dump(2) << '\n';
}

void write_report_table(std::ostream& out, const EvalReport& report) {
  const char* headers[] = {"R2", "acc_y", "F1_y", "r_x", "r_y", "IoU", "mIoU"};
  auto row = [&](const std::string& label, const FoldMetrics& f) {
    out << std::left << std::setw(10) << label << std::right;
    for (const auto* field : {&f.r2, &f.acc_y, &f.f1_y, &f.r_x, &f.r_y, &f.iou_acc, &f.miou})
      out << std::setw(8) << fixed3(*field);
    out << std::setw(9) << f.n_test << '\n';
  };
  out << report.method << " (" << report.split << ")\n";
  out << std::left << std::setw(10) << "fold" << std::right;
  for (const char* h : headers) out << std::setw(8) << h;
  out << std::setw(9) << "n" << '\n';
  for (std::size_t i = 0; i < report.folds.size(); ++i) row(std::to_string(i), report.folds[i]);
  row("mean", report.mean());
}

}  // namespace spt
