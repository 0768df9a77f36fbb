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

#include "spt/templates.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace spt {

using nlohmann::json;

namespace {

constexpr std::size_t kEvalChunk = 1024;

std::vector<Eigen::Index> layer_widths(Eigen::Index input, const std::vector<int>& hidden,
                                       Eigen::Index output) {
  std::vector<Eigen::Index> widths{input};
  for (int h : hidden) {
    if (h <= 0) throw Error("hidden layer sizes must be positive");
    widths.push_back(h);
  }
  widths.push_back(output);
  return widths;
}

Eigen::Index output_width(Head head, int grid_size) {
  return head == Head::reg ? 4 : Eigen::Index(grid_size) * grid_size;
}

LossKind loss_for(Head head) { return head == Head::reg ? LossKind::mse : LossKind::bce; }

void check_config(const ModelConfig& c) {
  if (c.epochs < 0) throw Error("epochs must be >= 0");
  if (c.batch_size <= 0) throw Error("batch size must be positive");
  if (!(c.learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (c.grid_size < 2) throw Error("grid size must be >= 2");
}

Grid row_to_grid(const Eigen::MatrixXd& out, Eigen::Index row, int m) {
  Grid g(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) g(i, j) = out(row, Eigen::Index(i) * m + j);
  return g;
}

template <typename Fn>
void for_each_chunk(std::size_t n, Fn&& fn) {
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    std::vector<std::size_t> rows(std::min(kEvalChunk, n - start));
    std::iota(rows.begin(), rows.end(), start);
    fn(rows);
  }
}

// ---- checkpoint helpers ----------------------------------------------------

json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(std::size_t(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", flat}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& values = j.at("values");
  if (values.size() != std::size_t(rows * cols)) throw ParseError("matrix value count mismatch");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[k++].get<double>();
  return m;
}

json table_json(const EmbeddingTable& t) {
  json j = {{"role", role_name(t.vocabulary().role())},
            {"variant", variant_name(t.variant())},
            {"tokens", t.vocabulary().tokens()}};
  // One-hot rows are implied by the vocabulary.
  if (t.variant() != EmbeddingVariant::one_hot) j["rows"] = matrix_json(t.rows());
  return j;
}

EmbeddingTable table_from_json(const json& j) {
  Vocabulary vocab(parse_role(j.at("role").get<std::string>()),
                   j.at("tokens").get<std::vector<std::string>>());
  const auto variant = parse_variant(j.at("variant").get<std::string>());
  if (variant == EmbeddingVariant::one_hot) return make_one_hot(vocab);
  return EmbeddingTable(std::move(vocab), matrix_from_json(j.at("rows")), variant);
}

json config_json(const ModelConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"rms_decay", c.rms_decay},
          {"rms_epsilon", c.rms_epsilon},
          {"hidden", c.hidden},
          {"grid_size", c.grid_size},
          {"seed", c.seed},
          {"use_subject_size", c.use_subject_size}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.rms_decay = j.at("rms_decay").get<double>();
  c.rms_epsilon = j.at("rms_epsilon").get<double>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.grid_size = j.at("grid_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.use_subject_size = j.at("use_subject_size").get<bool>();
  return c;
}

}  // namespace

std::string_view head_name(Head head) { return head == Head::reg ? "reg" : "pix"; }

Head parse_head(std::string_view name) {
  if (name == "reg" || name == "REG") return Head::reg;
  if (name == "pix" || name == "PIX") return Head::pix;
  throw Error("unknown head '" + std::string(name) + "'");
}

Grid rasterize_box(const Box& box, int grid_size) {
  if (grid_size < 2) throw Error("grid size must be >= 2");
  const int m = grid_size;
  const double x0 = std::max(0.0, box.left());
  const double x1 = std::min(1.0, box.right());
  const double y0 = std::max(0.0, box.top());
  const double y1 = std::min(1.0, box.bottom());
  Grid g = Grid::Zero(m, m);
  bool any = false;
  for (int i = 0; i < m; ++i) {
    const double cy = (i + 0.5) / m;
    if (cy < y0 || cy > y1) continue;
    for (int j = 0; j < m; ++j) {
      const double cx = (j + 0.5) / m;
      if (cx < x0 || cx > x1) continue;
      g(i, j) = 1.0;
      any = true;
    }
  }
  if (!any) {
    auto cell = [m](double v) { return std::clamp(int(std::floor(v * m)), 0, m - 1); };
    g(cell(box.center_y), cell(box.center_x)) = 1.0;
  }
  return g;
}

std::array<double, 2> heatmap_center(const Grid& grid) {
  if (grid.size() == 0) throw Error("heatmap_center of an empty grid");
  const double peak = grid.maxCoeff();
  double sx = 0.0;
  double sy = 0.0;
  int count = 0;
  const double rows = double(grid.rows());
  const double cols = double(grid.cols());
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    for (Eigen::Index j = 0; j < grid.cols(); ++j) {
      if (peak - grid(i, j) <= 1e-9) {
        sx += (double(j) + 0.5) / cols;
        sy += (double(i) + 0.5) / rows;
        ++count;
      }
    }
  }
  return {sx / count, sy / count};
}

EmbeddingTables one_hot_tables(const Vocabularies& vocabs) {
  return {make_one_hot(vocabs.subjects), make_one_hot(vocabs.relations),
          make_one_hot(vocabs.objects)};
}

EmbeddingTables make_tables(EmbeddingVariant variant, const Vocabularies& vocabs,
                            const VectorStore* store, std::uint64_t seed) {
  if (variant == EmbeddingVariant::one_hot) return one_hot_tables(vocabs);
  if (store == nullptr) throw Error("pretrained vectors are required for this embedding variant");
  EmbeddingTables emb{make_pretrained(*store, vocabs.subjects),
                      make_pretrained(*store, vocabs.relations),
                      make_pretrained(*store, vocabs.objects)};
  if (variant == EmbeddingVariant::pretrained) return emb;
  // Each role gets its own stream so adding tokens to one vocabulary does not
  // shift the others.
  return {make_random_matched(emb.subjects, vocabs.subjects, seed),
          make_random_matched(emb.relations, vocabs.relations, seed + 1),
          make_random_matched(emb.objects, vocabs.objects, seed + 2)};
}

Eigen::Index input_width(const EmbeddingTables& tables, bool use_subject_size) {
  return tables.width() + (use_subject_size ? 4 : 2);
}

Eigen::VectorXd assemble_input(const Query& query, const EmbeddingTables& tables,
                               bool use_subject_size) {
  Eigen::VectorXd v(input_width(tables, use_subject_size));
  const Eigen::Index ds = tables.subjects.dim();
  const Eigen::Index dr = tables.relations.dim();
  const Eigen::Index d_o = tables.objects.dim();
  v.segment(0, ds) = tables.subjects.lookup(query.subject_word);
  v.segment(ds, dr) = tables.relations.lookup(query.relation_word);
  v.segment(ds + dr, d_o) = tables.objects.lookup(query.object_word);
  Eigen::Index k = ds + dr + d_o;
  v(k++) = query.subject_box.center_x;
  v(k++) = query.subject_box.center_y;
  if (use_subject_size) {
    v(k++) = query.subject_box.half_w;
    v(k++) = query.subject_box.half_h;
  }
  return v;
}

Eigen::MatrixXd assemble_batch(const std::vector<Instance>& instances,
                               const std::vector<std::size_t>& rows, const EmbeddingTables& tables,
                               bool use_subject_size) {
  const Eigen::Index ds = tables.subjects.dim();
  const Eigen::Index dr = tables.relations.dim();
  const Eigen::Index d_o = tables.objects.dim();
  const Eigen::Index base = ds + dr + d_o;
  Eigen::MatrixXd x(Eigen::Index(rows.size()), input_width(tables, use_subject_size));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Instance& inst = instances.at(rows[r]);
    const auto row = Eigen::Index(r);
    x.row(row).segment(0, ds) =
        tables.subjects.rows().row(Eigen::Index(tables.subjects.vocabulary().index_of(inst.subject_word)));
    x.row(row).segment(ds, dr) = tables.relations.rows().row(
        Eigen::Index(tables.relations.vocabulary().index_of(inst.relation_word)));
    x.row(row).segment(ds + dr, d_o) =
        tables.objects.rows().row(Eigen::Index(tables.objects.vocabulary().index_of(inst.object_word)));
    x(row, base) = inst.subject_box.center_x;
    x(row, base + 1) = inst.subject_box.center_y;
    if (use_subject_size) {
      x(row, base + 2) = inst.subject_box.half_w;
      x(row, base + 3) = inst.subject_box.half_h;
    }
  }
  return x;
}

Eigen::MatrixXd make_targets(Head head, const std::vector<Instance>& instances,
                             const std::vector<std::size_t>& rows, int grid_size) {
  const Eigen::Index width = output_width(head, grid_size);
  Eigen::MatrixXd y(Eigen::Index(rows.size()), width);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Box& b = instances.at(rows[r]).object_box;
    const auto row = Eigen::Index(r);
    if (head == Head::reg) {
      y.row(row) << b.center_x, b.center_y, b.half_w, b.half_h;
    } else {
      const Grid g = rasterize_box(b, grid_size);
      for (int i = 0; i < grid_size; ++i)
        for (int j = 0; j < grid_size; ++j) y(row, Eigen::Index(i) * grid_size + j) = g(i, j);
    }
  }
  return y;
}

namespace {

TrainedModel train_impl(const std::vector<Instance>& train_set, Head head, EmbeddingTables tables,
                        const ModelConfig& config, const Provenance& provenance,
                        const EpochCallback& on_epoch, bool zero_weights) {
  check_config(config);
  if (train_set.empty()) throw Error("training set is empty");
  TrainedModel model;
  model.head = head;
  model.config = config;
  model.provenance = provenance;
  model.tables = std::move(tables);

  std::mt19937_64 rng(config.seed);
  const Eigen::Index in_width = input_width(model.tables, config.use_subject_size);
  model.params = init_dense(layer_widths(in_width, config.hidden, output_width(head, config.grid_size)),
                            head == Head::reg ? Activation::linear : Activation::sigmoid, rng);
  if (zero_weights)
    for (auto& layer : model.params.layers) layer.weights.setZero();
  RmsProp optimizer(model.params, {config.learning_rate, config.rms_decay, config.rms_epsilon});
  const LossKind loss_kind = loss_for(head);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = std::size_t(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::vector<std::size_t> rows(order.begin() + std::ptrdiff_t(start),
                                          order.begin() + std::ptrdiff_t(std::min(start + batch, order.size())));
      const Eigen::MatrixXd x = assemble_batch(train_set, rows, model.tables, config.use_subject_size);
      const Eigen::MatrixXd y = make_targets(head, train_set, rows, config.grid_size);
      const Activations acts = forward(model.params, x);
      const LossResult loss = evaluate_loss(loss_kind, acts, y);
      if (!std::isfinite(loss.value)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index << " ("
            << rows.size() << " examples, first id " << train_set[rows.front()].source_id << ")";
        throw TrainingError(msg.str());
      }
      optimizer.step(model.params, backward(model.params, acts, loss.grad));
      total += loss.value * double(rows.size());
    }
    const double mean = total / double(train_set.size());
    model.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch({epoch, mean});
  }
  return model;
}

}  // namespace

TrainedModel train(const std::vector<Instance>& train_set, Head head, EmbeddingTables tables,
                   const ModelConfig& config, const Provenance& provenance,
                   const EpochCallback& on_epoch) {
  return train_impl(train_set, head, std::move(tables), config, provenance, on_epoch, false);
}

double dataset_loss(const TrainedModel& model, const std::vector<Instance>& data) {
  if (data.empty()) throw Error("dataset_loss of an empty set");
  double total = 0.0;
  for_each_chunk(data.size(), [&](const std::vector<std::size_t>& rows) {
    const Activations acts =
        forward(model.params, assemble_batch(data, rows, model.tables, model.config.use_subject_size));
    total += evaluate_loss(loss_for(model.head),
                           acts, make_targets(model.head, data, rows, model.config.grid_size))
                 .value *
             double(rows.size());
  });
  return total / double(data.size());
}

RegPrediction predict_reg(const TrainedModel& model, const Query& query) {
  if (model.head != Head::reg) throw Error("predict_reg called on a PIX model");
  const Eigen::VectorXd x = assemble_input(query, model.tables, model.config.use_subject_size);
  const Eigen::MatrixXd out = predict(model.params, x.transpose());
  return {{out(0, 0), out(0, 1)}, {out(0, 2), out(0, 3)}};
}

Grid predict_pix(const TrainedModel& model, const Query& query) {
  if (model.head != Head::pix) throw Error("predict_pix called on a REG model");
  const Eigen::VectorXd x = assemble_input(query, model.tables, model.config.use_subject_size);
  return row_to_grid(predict(model.params, x.transpose()), 0, model.grid_size());
}

std::vector<RegPrediction> predict_reg_batch(const TrainedModel& model,
                                             const std::vector<Instance>& instances) {
  if (model.head != Head::reg) throw Error("predict_reg called on a PIX model");
  std::vector<RegPrediction> out;
  out.reserve(instances.size());
  for_each_chunk(instances.size(), [&](const std::vector<std::size_t>& rows) {
    const Eigen::MatrixXd y = predict(
        model.params, assemble_batch(instances, rows, model.tables, model.config.use_subject_size));
    for (Eigen::Index r = 0; r < y.rows(); ++r)
      out.push_back({{y(r, 0), y(r, 1)}, {y(r, 2), y(r, 3)}});
  });
  return out;
}

std::vector<Grid> predict_pix_batch(const TrainedModel& model,
                                    const std::vector<Instance>& instances) {
  if (model.head != Head::pix) throw Error("predict_pix called on a REG model");
  std::vector<Grid> out;
  out.reserve(instances.size());
  for_each_chunk(instances.size(), [&](const std::vector<std::size_t>& rows) {
    const Eigen::MatrixXd y = predict(
        model.params, assemble_batch(instances, rows, model.tables, model.config.use_subject_size));
    for (Eigen::Index r = 0; r < y.rows(); ++r) out.push_back(row_to_grid(y, r, model.grid_size()));
  });
  return out;
}

void check_provenance(const TrainedModel& model, const Provenance& data_provenance) {
  if (model.provenance == data_provenance) return;
  throw ProvenanceError("model was trained on data preprocessed with stoplist " +
                        model.provenance.stoplist_hash + " (mirroring " +
                        (model.provenance.mirroring ? "on" : "off") + "), data uses stoplist " +
                        data_provenance.stoplist_hash + " (mirroring " +
                        (data_provenance.mirroring ? "on" : "off") + ")");
}

// ---------------------------------------------------------------------------

DenseParams fit_linear_interpreter(const std::vector<Instance>& train_set,
                                   const Vocabularies& vocabs, EmbeddingVariant variant,
                                   const ModelConfig& config) {
  if (variant != EmbeddingVariant::one_hot)
    throw Error("the linear interpreter needs one-hot embeddings, got " +
                std::string(variant_name(variant)));
  ModelConfig linear = config;
  linear.hidden.clear();
  linear.use_subject_size = true;
  // Starting from zero keeps the weights at the minimum-norm solution along the
  // directions left free by the collinear one-hot blocks.
  DenseParams params =
      train_impl(train_set, Head::reg, one_hot_tables(vocabs), linear, Provenance{}, {}, true)
          .params;
  // Exactly one unit per one-hot block is active, so moving a block's mean into
  // the bias leaves every prediction unchanged.
  DenseLayer& layer = params.layers.front();
  Eigen::Index start = 0;
  for (std::size_t size : {vocabs.subjects.size(), vocabs.relations.size(), vocabs.objects.size()}) {
    const auto n = Eigen::Index(size);
    const Eigen::VectorXd mean = layer.weights.middleCols(start, n).rowwise().mean();
    layer.weights.middleCols(start, n).colwise() -= mean;
    layer.bias += mean;
    start += n;
  }
  return params;
}

std::size_t concat_index(const Vocabularies& vocabs, Role role, std::size_t token_index) {
  switch (role) {
    case Role::subject: return token_index;
    case Role::relation: return vocabs.subjects.size() + token_index;
    case Role::object: return vocabs.subjects.size() + vocabs.relations.size() + token_index;
  }
  return token_index;
}

std::vector<std::pair<std::string, double>> rank_weights(const DenseParams& linear,
                                                         const Vocabularies& vocabs,
                                                         int output_dim, Role role,
                                                         std::size_t top_k, RankOrder order) {
  if (output_dim < 0 || output_dim > 3) throw Error("output dimension must be in 0..3");
  if (linear.layers.size() != 1 || linear.output_width() != 4)
    throw ShapeError("rank_weights expects a single linear layer with 4 outputs");
  const Eigen::Index expected = Eigen::Index(vocabs.subjects.size() + vocabs.relations.size() +
                                             vocabs.objects.size()) + 4;
  if (linear.input_width() != expected)
    throw ShapeError("interpreter input width does not match the vocabularies");
  const Vocabulary& vocab = role == Role::subject    ? vocabs.subjects
                            : role == Role::relation ? vocabs.relations
                                                     : vocabs.objects;
  std::vector<std::pair<std::string, double>> ranked;
  ranked.reserve(vocab.size());
  const auto& w = linear.layers.front().weights;
  for (std::size_t i = 0; i < vocab.size(); ++i)
    ranked.emplace_back(vocab.token(i), w(output_dim, Eigen::Index(concat_index(vocabs, role, i))));
  std::sort(ranked.begin(), ranked.end(), [order](const auto& a, const auto& b) {
    const double ma = std::abs(a.second);
    const double mb = std::abs(b.second);
    if (ma != mb) return order == RankOrder::largest ? ma > mb : ma < mb;
    return a.first < b.first;
  });
  if (ranked.size() > top_k) ranked.resize(top_k);
  return ranked;
}

// ---------------------------------------------------------------------------

void save_model(std::ostream& out, const TrainedModel& model) {
  json layers = json::array();
  for (const auto& l : model.params.layers) {
    layers.push_back({{"activation", activation_name(l.activation)},
                      {"weights", matrix_json(l.weights)},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  json j = {{"format", "spatial-templates-checkpoint"},
            {"version", 1},
            {"head", head_name(model.head)},
            {"config", config_json(model.config)},
            {"run_config", model.run_config},
            {"provenance",
             {{"stoplist_hash", model.provenance.stoplist_hash},
              {"mirroring", model.provenance.mirroring}}},
            {"fold", model.fold ? json(*model.fold) : json(nullptr)},
            {"layers", layers},
            {"embeddings",
             {{"subject", table_json(model.tables.subjects)},
              {"relation", table_json(model.tables.relations)},
              {"object", table_json(model.tables.objects)}}},
            {"epoch_losses", model.epoch_losses}};
  out << j.dump() << '\n';
}

TrainedModel load_model(std::istream& in) {
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("checkpoint is not a JSON object");
  try {
    if (j.at("format").get<std::string>() != "spatial-templates-checkpoint")
      throw ParseError("not a spatial-templates checkpoint");
    TrainedModel m;
    m.head = parse_head(j.at("head").get<std::string>());
    m.config = config_from_json(j.at("config"));
    m.run_config = j.value("run_config", "");
    m.provenance = {j.at("provenance").at("stoplist_hash").get<std::string>(),
                    j.at("provenance").at("mirroring").get<bool>()};
    if (!j.at("fold").is_null()) m.fold = j.at("fold").get<int>();
    for (const auto& lj : j.at("layers")) {
      DenseLayer layer;
      layer.activation = parse_activation(lj.at("activation").get<std::string>());
      layer.weights = matrix_from_json(lj.at("weights"));
      const auto bias = lj.at("bias").get<std::vector<double>>();
      layer.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), Eigen::Index(bias.size()));
      m.params.layers.push_back(std::move(layer));
    }
    m.params.validate();
    const auto& e = j.at("embeddings");
    m.tables = {table_from_json(e.at("subject")), table_from_json(e.at("relation")),
                table_from_json(e.at("object"))};
    m.epoch_losses = j.at("epoch_losses").get<std::vector<double>>();
    if (m.params.input_width() != input_width(m.tables, m.config.use_subject_size))
      throw ShapeError("checkpoint first layer does not match its embedding tables");
    if (m.params.output_width() != output_width(m.head, m.config.grid_size))
      throw ShapeError("checkpoint output layer does not match its head");
    return m;
  } catch (const json::exception& ex) {
    throw ParseError(std::string("checkpoint: ") + ex.what());
  }
}

}  // namespace spt
