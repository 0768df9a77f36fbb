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

// Scene-graph ingestion and corpus preparation: parsing, explicit/implicit
// partitioning, coordinate normalization, mirroring, vocabularies, evaluation
// splits and the synthetic desk-scale corpus generator.

#ifndef SPT_CORPUS_HPP
#define SPT_CORPUS_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "spt/common.hpp"

namespace spt {

/// Axis-aligned box as center + half-extent, in normalized image units.
struct Box {
  double center_x = 0.0;
  double center_y = 0.0;
  double half_w = 0.0;
  double half_h = 0.0;

  double left() const { return center_x - half_w; }
  double right() const { return center_x + half_w; }
  double top() const { return center_y - half_h; }
  double bottom() const { return center_y + half_h; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// Pixel-space box in corner + size form, as annotated in the source corpora.
struct PixelBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct RawRecord {
  std::string subject;
  std::string relation;
  std::string object;
  PixelBox subject_box;
  PixelBox object_box;
  double image_width = 0.0;
  double image_height = 0.0;
  std::string source_id;
};

struct Instance {
  std::string subject_word;
  std::string relation_word;
  std::string object_word;
  Box subject_box;
  Box object_box;
  bool mirrored = false;
  std::string source_id;

  friend bool operator==(const Instance&, const Instance&) = default;
};

using Triplet = std::array<std::string, 3>;

inline Triplet triplet_of(const Instance& inst) {
  return {inst.subject_word, inst.relation_word, inst.object_word};
}

// ---------------------------------------------------------------------------
// Parsing

enum class InputFormat { vg_relationships, canonical_jsonl };

InputFormat parse_input_format(std::string_view name);

struct ImageSize {
  double width = 0.0;
  double height = 0.0;
};

struct ParseOptions {
  bool strict = false;
  /// Image dimensions keyed by image id. Required by vg_relationships, whose
  /// relationship file does not carry them.
  std::unordered_map<std::string, ImageSize> image_sizes;
};

struct ParseResult {
  std::vector<RawRecord> records;
  std::size_t malformed = 0;    ///< undecodable or schema-violating records
  std::size_t missing_box = 0;  ///< records lacking a subject or object box
  std::size_t missing_image = 0;

  std::size_t skipped() const { return malformed + missing_box + missing_image; }
};

/// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string normalize_token(std::string_view token);

/// Reads relationship records. Lenient mode skips and counts bad records;
/// strict mode throws ParseError on the first one.
ParseResult parse_scene_graph(std::istream& in, InputFormat format,
                              const ParseOptions& options = {});

/// Reads a Visual Genome image-metadata file (array of {image_id|id, width,
/// height}).
std::unordered_map<std::string, ImageSize> parse_image_sizes(std::istream& in);

// ---------------------------------------------------------------------------
// Preprocessing

/// The default list of explicit spatial prepositions. Mirrors
/// data/explicit_prepositions.txt.
std::set<std::string> default_stoplist();

/// One token per line; blank lines and '#' comments ignored.
std::set<std::string> read_stoplist(std::istream& in);

/// Stable hash of a stoplist, used as preprocessing provenance.
std::string stoplist_hash(const std::set<std::string>& stoplist);

struct Partition {
  std::vector<RawRecord> implicit_records;
  std::vector<RawRecord> explicit_records;
};

/// A record is explicit iff any whitespace-separated token of its relation
/// phrase is in the stoplist.
Partition partition_explicit(std::vector<RawRecord> records,
                             const std::set<std::string>& stoplist);

bool is_explicit(std::string_view relation, const std::set<std::string>& stoplist);

struct NormalizeStats {
  std::size_t clipped = 0;
};

/// Clips pixel boxes to the image, then converts to normalized center +
/// half-extent form. Throws Error on a non-positive image dimension.
Instance normalize(const RawRecord& record, NormalizeStats* stats = nullptr);

/// Inverse of the normalization for one box (no clipping).
PixelBox denormalize(const Box& box, double image_width, double image_height);

/// Reflects both boxes horizontally iff the object center lies strictly left
/// of the subject center.
Instance mirror_if_needed(Instance instance);

struct PreprocessReport {
  std::size_t input_records = 0;
  std::size_t explicit_records = 0;
  std::size_t clipped_boxes = 0;
  std::size_t rejected = 0;
  std::size_t mirrored = 0;
};

/// normalize + mirror over a record list. Records with bad image dimensions
/// are rejected and counted.
std::vector<Instance> preprocess(const std::vector<RawRecord>& records,
                                 PreprocessReport* report = nullptr);

// ---------------------------------------------------------------------------
// Vocabularies

enum class Role { subject, relation, object };

std::string_view role_name(Role role);
Role parse_role(std::string_view name);

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(Role role, std::vector<std::string> tokens);

  Role role() const { return role_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t index) const { return tokens_.at(index); }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  std::optional<std::size_t> find(const std::string& token) const;
  /// Throws Error for an unknown token.
  std::size_t index_of(const std::string& token) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.role_ == b.role_ && a.tokens_ == b.tokens_;
  }

 private:
  Role role_ = Role::subject;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Vocabularies {
  Vocabulary subjects;
  Vocabulary relations;
  Vocabulary objects;

  /// Distinct tokens across subjects and objects.
  std::size_t joint_object_count() const;
};

/// First-occurrence order over the given corpus. Throws on an empty corpus.
Vocabularies build_vocabs(const std::vector<Instance>& instances);

// ---------------------------------------------------------------------------
// Splits

enum class SplitMode { cv, gen_triplets, gen_words };

std::string_view split_mode_name(SplitMode mode);
SplitMode parse_split_mode(std::string_view name);

struct SplitPlan {
  SplitMode mode = SplitMode::cv;
  std::uint64_t seed = 0;
  /// Test ids per fold. Generalized plans have exactly one fold.
  std::vector<std::vector<std::string>> test_folds;
  /// Training ids of a generalized plan. Empty for CV, where the training set
  /// of fold k is the complement of test_folds[k].
  std::vector<std::string> train;
  std::vector<Triplet> held_out_triplets;
  std::vector<std::string> held_out_words;

  std::size_t fold_count() const { return test_folds.size(); }
};

struct FoldData {
  std::vector<Instance> train;
  std::vector<Instance> test;
};

/// Resolves the ids of one fold against the corpus. Throws on unknown ids or
/// an out-of-range fold.
FoldData materialize(const SplitPlan& plan, std::size_t fold,
                     const std::vector<Instance>& corpus);

/// k disjoint folds whose sizes differ by at most one.
SplitPlan make_cv_folds(const std::vector<Instance>& instances, std::size_t k,
                        std::uint64_t seed);

/// Distinct triplets sorted by descending frequency, ties in lexicographic
/// triplet order.
std::vector<std::pair<Triplet, std::size_t>> triplet_frequencies(
    const std::vector<Instance>& instances);

SplitPlan make_generalized_triplet_split(const std::vector<Instance>& instances,
                                         std::size_t n_pick = 100,
                                         std::size_t top_m = 1000,
                                         std::uint64_t seed = 0);

/// Explicit held-out triplets instead of a random pick.
SplitPlan make_held_out_triplet_split(const std::vector<Instance>& instances,
                                      const std::vector<Triplet>& held_out);

/// Test = instances whose subject or object is in the list. Relation tokens
/// are not matched.
SplitPlan make_generalized_word_split(const std::vector<Instance>& instances,
                                      const std::vector<std::string>& held_out_words);

/// The 25 held-out objects of the generalized-word regime.
std::vector<std::string> default_generalized_words();

// ---------------------------------------------------------------------------
// Synthetic corpora

struct TemplateRule {
  Triplet triplet;
  double offset_x = 0.0;  ///< object center minus subject center, pre-mirroring
  double offset_y = 0.0;
  double object_half_w = 0.0;
  double object_half_h = 0.0;
};

/// The eight-rule desk-scale rule set (four implicit-style relations plus
/// above, below, a left-of relation and wearing).
std::vector<TemplateRule> default_rules();

struct SyntheticOptions {
  double subject_half_min = 0.05;
  double subject_half_max = 0.15;
};

/// Subjects are placed uniformly inside the image, objects at the rule offset
/// plus Gaussian noise, clipped to [0,1] and mirrored. Throws on an empty
/// rule set or negative noise.
std::vector<Instance> generate_synthetic(const std::vector<TemplateRule>& rules,
                                         std::size_t n_instances,
                                         double noise_sigma, std::uint64_t seed,
                                         const SyntheticOptions& options = {});

// ---------------------------------------------------------------------------
// Canonical storage

/// Preprocessing provenance carried by corpora, split plans and checkpoints.
struct Provenance {
  std::string stoplist_hash;
  bool mirroring = true;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Corpus {
  Provenance provenance;
  std::string config;  ///< producing configuration, echoed verbatim
  std::vector<Instance> instances;
};

void write_corpus_jsonl(std::ostream& out, const Corpus& corpus);
Corpus read_corpus_jsonl(std::istream& in);

void write_split_plan(std::ostream& out, const SplitPlan& plan,
                      const Provenance& provenance, const std::string& config);
SplitPlan read_split_plan(std::istream& in, Provenance* provenance = nullptr);

}  // namespace spt

#endif  // SPT_CORPUS_HPP
