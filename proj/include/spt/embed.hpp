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

#ifndef SPT_EMBED_HPP
#define SPT_EMBED_HPP

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spt/corpus.hpp"

namespace spt {

enum class EmbeddingVariant { pretrained, random_matched, one_hot };

std::string_view variant_name(EmbeddingVariant v);
/// Accepts the long names and the short CLI spellings emb / rnd / 1h.
EmbeddingVariant parse_variant(std::string_view name);

/// Frozen |V| x d lookup table for one vocabulary.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(Vocabulary vocabulary, Eigen::MatrixXd rows, EmbeddingVariant variant);

  const Vocabulary& vocabulary() const { return vocabulary_; }
  const Eigen::MatrixXd& rows() const { return rows_; }
  EmbeddingVariant variant() const { return variant_; }
  Eigen::Index dim() const { return rows_.cols(); }
  /// Embeddings are never backpropagated.
  bool trainable() const { return false; }

  /// The token's row, by value. Throws Error for an unknown token.
  Eigen::VectorXd lookup(const std::string& token) const;
  Eigen::VectorXd row(std::size_t index) const { return rows_.row(Eigen::Index(index)).transpose(); }

 private:
  Vocabulary vocabulary_;
  Eigen::MatrixXd rows_;
  EmbeddingVariant variant_ = EmbeddingVariant::one_hot;
};

/// Vectors read from a pretrained-embedding text file, restricted to a wanted
/// token set.
struct VectorStore {
  int dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::size_t lines = 0;
  std::size_t duplicates = 0;  ///< repeated tokens; the first occurrence wins
};

/// Parses `token v1 ... vd` lines. A line with more than d+1 fields is read as
/// a multi-word token followed by d values; fewer is an error naming the line.
VectorStore read_vectors(std::istream& in, int expected_dim, const std::set<std::string>& wanted);

/// As read_vectors, from a plain or gzip-compressed file.
VectorStore read_vectors_file(const std::string& path, int expected_dim,
                              const std::set<std::string>& wanted);

/// Builds a pretrained table; throws Error listing every vocabulary token
/// missing from the store.
EmbeddingTable make_pretrained(const VectorStore& store, const Vocabulary& vocabulary);

EmbeddingTable load_pretrained(std::istream& in, int expected_dim, const Vocabulary& vocabulary);

/// Keeps instances whose subject, relation and object phrases all have a
/// vector; `dropped` receives the number removed.
std::vector<Instance> drop_uncovered(const std::vector<Instance>& instances,
                                     const VectorStore& store, std::size_t* dropped = nullptr);

EmbeddingTable make_one_hot(const Vocabulary& vocabulary);

/// Rows drawn i.i.d. per dimension from Normal(mean_j, sd_j) of the reference
/// table's columns (sample standard deviation).
EmbeddingTable make_random_matched(const EmbeddingTable& reference, const Vocabulary& vocabulary,
                                   std::uint64_t seed);

}  // namespace spt

#endif  // SPT_EMBED_HPP
