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

// Spatial template models. Both heads read the concatenation
//   [emb(subject), emb(relation), emb(object), subject center, subject half]
// through a relu MLP. REG regresses the object's center and half-extent;
// PIX predicts an M x M grid of object-membership probabilities.

#ifndef SPT_TEMPLATES_HPP
#define SPT_TEMPLATES_HPP

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spt/corpus.hpp"
#include "spt/embed.hpp"
#include "spt/net.hpp"

namespace spt {

enum class Head { reg, pix };

std::string_view head_name(Head head);
Head parse_head(std::string_view name);

struct Query {
  std::string subject_word;
  std::string relation_word;
  std::string object_word;
  Box subject_box;

  static Query from_instance(const Instance& inst) {
    return {inst.subject_word, inst.relation_word, inst.object_word, inst.subject_box};
  }
};

/// Raw REG output, never clipped.
struct RegPrediction {
  std::array<double, 2> center{};
  std::array<double, 2> half{};

  Box box() const { return {center[0], center[1], half[0], half[1]}; }
};

/// M x M grid; row i runs downward, column j to the right. Cell (i, j) covers
/// [j/M, (j+1)/M] x [i/M, (i+1)/M] in normalized image coordinates.
using Grid = Eigen::MatrixXd;

/// Cell (i, j) is 1 iff its center ((j+0.5)/M, (i+0.5)/M) lies in the box,
/// boundaries included, after clipping the box to [0,1]^2. A box that covers
/// no cell center (including zero-extent boxes) marks the cell holding its
/// center.
Grid rasterize_box(const Box& box, int grid_size);

/// Average of the centers of all cells within 1e-9 of the maximum.
std::array<double, 2> heatmap_center(const Grid& grid);

struct EmbeddingTables {
  EmbeddingTable subjects;
  EmbeddingTable relations;
  EmbeddingTable objects;

  Eigen::Index width() const { return subjects.dim() + relations.dim() + objects.dim(); }
};

/// One-hot tables for the three vocabularies.
EmbeddingTables one_hot_tables(const Vocabularies& vocabs);

/// Tables of the requested variant. `store` supplies pretrained vectors and is
/// required for pretrained and random_matched.
EmbeddingTables make_tables(EmbeddingVariant variant, const Vocabularies& vocabs,
                            const VectorStore* store, std::uint64_t seed);

struct ModelConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double rms_decay = 0.9;
  double rms_epsilon = 1e-8;
  std::vector<int> hidden{100, 100};
  int grid_size = 15;
  std::uint64_t seed = 0;
  /// Feed the subject half-extent; off for the average-size ablation.
  bool use_subject_size = true;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainedModel {
  Head head = Head::reg;
  DenseParams params;
  EmbeddingTables tables;
  ModelConfig config;
  Provenance provenance;
  std::vector<double> epoch_losses;
  /// Fold of the split plan this model was trained on, when known.
  std::optional<int> fold;
  /// Free-form producing configuration, echoed into the checkpoint.
  std::string run_config;

  int grid_size() const { return config.grid_size; }
};

Eigen::Index input_width(const EmbeddingTables& tables, bool use_subject_size);

Eigen::VectorXd assemble_input(const Query& query, const EmbeddingTables& tables,
                               bool use_subject_size = true);

Eigen::MatrixXd assemble_batch(const std::vector<Instance>& instances,
                               const std::vector<std::size_t>& rows, const EmbeddingTables& tables,
                               bool use_subject_size = true);

/// Training targets: [cx, cy, hw, hh] rows for REG, flattened rasterized
/// object boxes for PIX.
Eigen::MatrixXd make_targets(Head head, const std::vector<Instance>& instances,
                             const std::vector<std::size_t>& rows, int grid_size);

struct EpochReport {
  int epoch = 0;
  double mean_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Shuffled mini-batch RMSprop on MSE (REG) or fused sigmoid BCE (PIX) with
/// frozen embeddings. The seed fixes initialization and batch order. Throws
/// TrainingError on a non-finite loss.
TrainedModel train(const std::vector<Instance>& train_set, Head head, EmbeddingTables tables,
                   const ModelConfig& config, const Provenance& provenance,
                   const EpochCallback& on_epoch = {});

/// Mean per-example training loss of a model over a data set.
double dataset_loss(const TrainedModel& model, const std::vector<Instance>& data);

RegPrediction predict_reg(const TrainedModel& model, const Query& query);
Grid predict_pix(const TrainedModel& model, const Query& query);

std::vector<RegPrediction> predict_reg_batch(const TrainedModel& model,
                                             const std::vector<Instance>& instances);
std::vector<Grid> predict_pix_batch(const TrainedModel& model,
                                    const std::vector<Instance>& instances);

/// Throws ProvenanceError if the model was trained on differently
/// preprocessed data.
void check_provenance(const TrainedModel& model, const Provenance& data_provenance);

// ---------------------------------------------------------------------------
// Interpretation

/// REG without hidden layers on one-hot inputs: y = W u + b with
/// u = [w_S, w_R, w_O, S^c, S^b], trained from zero weights. The weights of
/// each one-hot block are returned centered, their mean folded into the bias.
/// Throws Error for any other variant.
DenseParams fit_linear_interpreter(const std::vector<Instance>& train_set,
                                   const Vocabularies& vocabs, EmbeddingVariant variant,
                                   const ModelConfig& config);

/// Column of a token in the interpreter's concatenation layer.
std::size_t concat_index(const Vocabularies& vocabs, Role role, std::size_t token_index);

enum class RankOrder { largest, smallest };

/// Tokens of one role ranked by |weight| on output row `output_dim`
/// (0 = center x, 1 = center y, 2 = half w, 3 = half h). Ties break
/// lexicographically.
std::vector<std::pair<std::string, double>> rank_weights(const DenseParams& linear,
                                                         const Vocabularies& vocabs,
                                                         int output_dim, Role role,
                                                         std::size_t top_k,
                                                         RankOrder order = RankOrder::largest);

// ---------------------------------------------------------------------------
// Checkpoints

void save_model(std::ostream& out, const TrainedModel& model);
TrainedModel load_model(std::istream& in);

}  // namespace spt

#endif  // SPT_TEMPLATES_HPP
