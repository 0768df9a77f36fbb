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

#include "spt/embed.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <istream>
#include <memory>
#include <random>

namespace spt {

namespace {

/// Handles one line of a vector file.
class VectorLineParser {
 public:
  VectorLineParser(int dim, const std::set<std::string>* wanted, VectorStore* store)
      : dim_(dim), wanted_(wanted), store_(store) {}

  void consume(std::string_view line) {
    ++store_->lines;
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
    if (line.empty()) return;
    fields_.clear();
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && line[pos] == ' ') ++pos;
      if (pos >= line.size()) break;
      std::size_t end = line.find(' ', pos);
      if (end == std::string_view::npos) end = line.size();
      fields_.push_back(line.substr(pos, end - pos));
      pos = end;
    }
    const std::size_t n = fields_.size();
    if (n < std::size_t(dim_) + 1)
      throw ParseError("vector file line " + std::to_string(store_->lines) + ": expected " +
                       std::to_string(dim_) + " values, found " +
                       std::to_string(n == 0 ? 0 : n - 1));
    const std::size_t token_fields = n - std::size_t(dim_);
    std::string token(fields_[0]);
    for (std::size_t i = 1; i < token_fields; ++i) {
      token += ' ';
      token.append(fields_[i]);
    }
    if (!wanted_->count(token)) return;
    if (store_->vectors.count(token)) {
      ++store_->duplicates;
      return;
    }
    std::vector<double> values(std::size_t(dim_), 0.0);
    for (int k = 0; k < dim_; ++k) {
      std::string_view f = fields_[token_fields + std::size_t(k)];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), values[std::size_t(k)]);
      if (ec != std::errc() || ptr != f.data() + f.size())
        throw ParseError("vector file line " + std::to_string(store_->lines) + ": bad number '" +
                         std::string(f) + "'");
    }
    store_->vectors.emplace(std::move(token), std::move(values));
  }

 private:
  int dim_;
  const std::set<std::string>* wanted_;
  VectorStore* store_;
  std::vector<std::string_view> fields_;
};

struct GzCloser {
  void operator()(gzFile f) const {
    if (f != nullptr) gzclose(f);
  }
};

}  // namespace

std::string_view variant_name(EmbeddingVariant v) {
  switch (v) {
    case EmbeddingVariant::pretrained: return "pretrained";
    case EmbeddingVariant::random_matched: return "random_matched";
    case EmbeddingVariant::one_hot: return "one_hot";
  }
  return "?";
}

EmbeddingVariant parse_variant(std::string_view name) {
  if (name == "pretrained" || name == "emb") return EmbeddingVariant::pretrained;
  if (name == "random_matched" || name == "rnd") return EmbeddingVariant::random_matched;
  if (name == "one_hot" || name == "1h") return EmbeddingVariant::one_hot;
  throw Error("unknown embedding variant '" + std::string(name) + "'");
}

EmbeddingTable::EmbeddingTable(Vocabulary vocabulary, Eigen::MatrixXd rows,
                               EmbeddingVariant variant)
    : vocabulary_(std::move(vocabulary)), rows_(std::move(rows)), variant_(variant) {
  if (std::size_t(rows_.rows()) != vocabulary_.size())
    throw ShapeError("embedding table has " + std::to_string(rows_.rows()) + " rows for " +
                     std::to_string(vocabulary_.size()) + " tokens");
}

Eigen::VectorXd EmbeddingTable::lookup(const std::string& token) const {
  return row(vocabulary_.index_of(token));
}

VectorStore read_vectors(std::istream& in, int expected_dim, const std::set<std::string>& wanted) {
  if (expected_dim <= 0) throw Error("embedding dimension must be positive");
  VectorStore store;
  store.dim = expected_dim;
  VectorLineParser parser(expected_dim, &wanted, &store);
  std::string line;
  while (std::getline(in, line)) parser.consume(line);
  return store;
}

VectorStore read_vectors_file(const std::string& path, int expected_dim,
                              const std::set<std::string>& wanted) {
  if (expected_dim <= 0) throw Error("embedding dimension must be positive");
  // gzread passes uncompressed files through unchanged.
  std::unique_ptr<gzFile_s, GzCloser> file(gzopen(path.c_str(), "rb"));
  if (!file) throw Error("cannot open vector file '" + path + "'");
  gzbuffer(file.get(), 1 << 20);
  VectorStore store;
  store.dim = expected_dim;
  VectorLineParser parser(expected_dim, &wanted, &store);
  std::string line;
  std::vector<char> chunk(1 << 16);
  while (gzgets(file.get(), chunk.data(), int(chunk.size())) != nullptr) {
    line.append(chunk.data());
    if (!line.empty() && line.back() == '\n') {
      parser.consume(line);
      line.clear();
    }
  }
  int err = 0;
  gzerror(file.get(), &err);
  if (err != Z_OK && err != Z_STREAM_END) throw Error("error reading '" + path + "'");
  if (!line.empty()) parser.consume(line);
  return store;
}

EmbeddingTable make_pretrained(const VectorStore& store, const Vocabulary& vocabulary) {
  Eigen::MatrixXd rows(Eigen::Index(vocabulary.size()), store.dim);
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    auto it = store.vectors.find(vocabulary.token(i));
    if (it == store.vectors.end()) {
      missing.push_back(vocabulary.token(i));
      continue;
    }
    for (int k = 0; k < store.dim; ++k) rows(Eigen::Index(i), k) = it->second[std::size_t(k)];
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " " +
                      std::string(role_name(vocabulary.role())) +
                      " token(s) have no pretrained vector:";
    for (const auto& m : missing) msg += " '" + m + "'";
    throw Error(msg);
  }
  return EmbeddingTable(vocabulary, std::move(rows), EmbeddingVariant::pretrained);
}

EmbeddingTable load_pretrained(std::istream& in, int expected_dim, const Vocabulary& vocabulary) {
  std::set<std::string> wanted(vocabulary.tokens().begin(), vocabulary.tokens().end());
  return make_pretrained(read_vectors(in, expected_dim, wanted), vocabulary);
}

std::vector<Instance> drop_uncovered(const std::vector<Instance>& instances,
                                     const VectorStore& store, std::size_t* dropped) {
  std::vector<Instance> kept;
  for (const auto& inst : instances) {
    if (store.vectors.count(inst.subject_word) && store.vectors.count(inst.relation_word) &&
        store.vectors.count(inst.object_word))
      kept.push_back(inst);
  }
  if (dropped) *dropped = instances.size() - kept.size();
  return kept;
}

EmbeddingTable make_one_hot(const Vocabulary& vocabulary) {
  if (vocabulary.size() == 0) throw Error("one-hot table needs a non-empty vocabulary");
  const auto n = Eigen::Index(vocabulary.size());
  return EmbeddingTable(vocabulary, Eigen::MatrixXd::Identity(n, n), EmbeddingVariant::one_hot);
}

EmbeddingTable make_random_matched(const EmbeddingTable& reference, const Vocabulary& vocabulary,
                                   std::uint64_t seed) {
  const Eigen::MatrixXd& ref = reference.rows();
  if (ref.rows() < 2) throw Error("random-matched embeddings need a reference with >= 2 rows");
  const Eigen::Index d = ref.cols();
  const Eigen::RowVectorXd mean = ref.colwise().mean();
  Eigen::RowVectorXd sd(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double ss = (ref.col(j).array() - mean(j)).square().sum();
    sd(j) = std::sqrt(ss / double(ref.rows() - 1));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd rows(Eigen::Index(vocabulary.size()), d);
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) rows(i, j) = mean(j) + sd(j) * z(rng);
  return EmbeddingTable(vocabulary, std::move(rows), EmbeddingVariant::random_matched);
}

}  // namespace spt
