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

// Evaluation metrics for spatial templates, the random control baseline and
// per-fold report aggregation.

#ifndef SPT_METRICS_HPP
#define SPT_METRICS_HPP

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spt/corpus.hpp"
#include "spt/templates.hpp"

namespace spt {

/// Axis-aligned intersection over union. Two zero-area boxes give 0.
double iou(const Box& a, const Box& b);

/// Fraction of pairs with iou strictly greater than 0.5.
double iou_accuracy(std::span<const Box> predictions, std::span<const Box> truths);

enum class R2Aggregation { uniform, variance_weighted };

/// Coefficient of determination of n x d predictions, computed per column and
/// aggregated over columns. Columns whose truth has zero variance are skipped
/// with a warning; throws if none remain or n < 2.
double r_squared(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& truths,
                 R2Aggregation aggregation = R2Aggregation::uniform);

/// Sample Pearson correlation. Throws on n < 2 or a constant argument.
double pearson(std::span<const double> xs, std::span<const double> ys);

enum class MacroAccuracy {
  balanced,   ///< mean of per-class recalls
  per_class,  ///< mean of per-class accuracies (plain accuracy for two classes)
};

struct AboveBelow {
  double accuracy = 0.0;
  double f1 = 0.0;
};

/// Classes are "above" when object y minus subject y is negative and "below"
/// otherwise. A class missing from the truths is left out of the macro
/// averages with a warning.
AboveBelow above_below(std::span<const double> predicted_y, std::span<const double> true_y,
                       std::span<const double> subject_y,
                       MacroAccuracy averaging = MacroAccuracy::balanced);

enum class ThresholdSweep {
  grid101,  ///< t in {0.00, 0.01, ..., 1.00}
  exact,    ///< every distinct activation, plus "everything positive"
};

struct MiouResult {
  double value = 0.0;
  double threshold = 0.0;
};

/// Best macro-averaged two-class pixel recall over thresholds, pixels pooled
/// over all grids, positives being activation > t. Throws if the pooled
/// targets lack a class.
MiouResult mean_iou_pixels(const std::vector<Grid>& heatmaps, const std::vector<Grid>& targets,
                           ThresholdSweep sweep = ThresholdSweep::grid101);

/// n x d matrix of independent Normal(mean_j, sd_j) draws, the moments being
/// the columns' mean and population standard deviation.
Eigen::MatrixXd ctrl_baseline(const Eigen::MatrixXd& training_targets, std::size_t n_test,
                              std::uint64_t seed);

/// M x M grids of Uniform[0,1] activations.
std::vector<Grid> ctrl_heatmaps(std::size_t n_test, int grid_size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reports

struct EvalOptions {
  R2Aggregation r2 = R2Aggregation::uniform;
  MacroAccuracy macro = MacroAccuracy::balanced;
  ThresholdSweep sweep = ThresholdSweep::grid101;
};

/// Metrics of one fold. Unset fields do not apply to the head (or could not
/// be computed, which is warned about).
struct FoldMetrics {
  std::optional<double> r2;
  std::optional<double> acc_y;
  std::optional<double> f1_y;
  std::optional<double> r_x;
  std::optional<double> r_y;
  std::optional<double> iou_acc;
  std::optional<double> miou;
  std::optional<double> miou_threshold;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  /// REG predictions with a negative half-extent (diagnostic).
  std::size_t negative_halves = 0;
};

struct EvalReport {
  std::string method;
  std::string split;
  std::vector<FoldMetrics> folds;
  /// Resolved producing configuration.
  std::string config;

  /// Per-field arithmetic mean over the folds reporting that field; counts
  /// are summed.
  FoldMetrics mean() const;
};

FoldMetrics evaluate_reg(const std::vector<RegPrediction>& predictions,
                         const std::vector<Instance>& test, const EvalOptions& options = {});

/// `centers` overrides the heatmap-derived centers (used by the control).
FoldMetrics evaluate_pix(const std::vector<Grid>& heatmaps, const std::vector<Instance>& test,
                         int grid_size, const EvalOptions& options = {},
                         const std::vector<std::array<double, 2>>* centers = nullptr);

/// Checks provenance, predicts and scores one fold.
FoldMetrics evaluate(const TrainedModel& model, const std::vector<Instance>& test,
                     const Provenance& data_provenance, const EvalOptions& options = {});

/// Scores the control baseline for a head, its moments taken from `train`.
FoldMetrics evaluate_ctrl(Head head, const std::vector<Instance>& train,
                          const std::vector<Instance>& test, std::uint64_t seed,
                          int grid_size = 15, const EvalOptions& options = {});

void write_report_json(std::ostream& out, const EvalReport& report);

/// Aligned text table: one row per fold plus the mean, columns
/// R2 acc_y F1_y r_x r_y IoU mIoU, "-" for absent values.
void write_report_table(std::ostream& out, const EvalReport& report);

}  // namespace spt

#endif  // SPT_METRICS_HPP
