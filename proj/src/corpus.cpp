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

#include "spt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace spt {

using nlohmann::json;

namespace {

bool read_pixel_box(const json& arr, PixelBox* box) {
  if (!arr.is_array() || arr.size() != 4) return false;
  for (const auto& v : arr)
    if (!v.is_number()) return false;
  *box = {arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>(),
          arr[3].get<double>()};
  return true;
}

bool read_vg_box(const json& obj, PixelBox* box) {
  if (!obj.is_object()) return false;
  for (const char* key : {"x", "y", "w", "h"})
    if (!obj.contains(key) || !obj[key].is_number()) return false;
  *box = {obj["x"].get<double>(), obj["y"].get<double>(), obj["w"].get<double>(),
          obj["h"].get<double>()};
  return true;
}

std::string vg_name(const json& obj) {
  if (obj.contains("names") && obj["names"].is_array() && !obj["names"].empty() &&
      obj["names"][0].is_string())
    return obj["names"][0].get<std::string>();
  if (obj.contains("name") && obj["name"].is_string()) return obj["name"].get<std::string>();
  throw ParseError("object without name");
}

std::string id_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return v.dump();
  throw ParseError("id is neither a string nor a number");
}

void fail_or_count(bool strict, std::size_t* counter, const std::string& what) {
  if (strict) throw ParseError(what);
  ++*counter;
}

void parse_canonical(std::istream& in, const ParseOptions& opts, ParseResult* out) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    const std::string where = "line " + std::to_string(line_no);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      fail_or_count(opts.strict, &out->malformed, where + ": not a JSON object");
      continue;
    }
    if (!j.contains("s_box") || !j.contains("o_box") || j["s_box"].is_null() ||
        j["o_box"].is_null()) {
      ++out->missing_box;
      continue;
    }
    RawRecord rec;
    const bool tokens_ok = j.contains("s") && j["s"].is_string() && j.contains("r") &&
                           j["r"].is_string() && j.contains("o") && j["o"].is_string();
    const bool img_ok = j.contains("img") && j["img"].is_array() && j["img"].size() == 2 &&
                        j["img"][0].is_number() && j["img"][1].is_number();
    if (!tokens_ok || !img_ok || !read_pixel_box(j["s_box"], &rec.subject_box) ||
        !read_pixel_box(j["o_box"], &rec.object_box)) {
      fail_or_count(opts.strict, &out->malformed, where + ": schema violation");
      continue;
    }
    rec.subject = normalize_token(j["s"].get<std::string>());
    rec.relation = normalize_token(j["r"].get<std::string>());
    rec.object = normalize_token(j["o"].get<std::string>());
    rec.image_width = j["img"][0].get<double>();
    rec.image_height = j["img"][1].get<double>();
    rec.source_id = j.contains("id") ? id_string(j["id"]) : "line:" + std::to_string(line_no);
    out->records.push_back(std::move(rec));
  }
}

void parse_vg(std::istream& in, const ParseOptions& opts, ParseResult* out) {
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ParseError("relationships file is not valid JSON");
  if (!doc.is_array()) throw ParseError("relationships file must be a JSON array of images");
  for (const auto& image : doc) {
    if (!image.is_object() || !image.contains("relationships") ||
        !image["relationships"].is_array()) {
      fail_or_count(opts.strict, &out->malformed, "image entry without relationships");
      continue;
    }
    std::string image_id;
    if (image.contains("image_id")) {
      image_id = id_string(image["image_id"]);
    } else if (image.contains("id")) {
      image_id = id_string(image["id"]);
    }
    auto size_it = opts.image_sizes.find(image_id);
    for (const auto& rel : image["relationships"]) {
      if (size_it == opts.image_sizes.end()) {
        ++out->missing_image;
        continue;
      }
      if (!rel.is_object() || !rel.contains("predicate") || !rel["predicate"].is_string() ||
          !rel.contains("subject") || !rel.contains("object")) {
        fail_or_count(opts.strict, &out->malformed, "image " + image_id + ": bad relationship");
        continue;
      }
      RawRecord rec;
      if (!read_vg_box(rel["subject"], &rec.subject_box) ||
          !read_vg_box(rel["object"], &rec.object_box)) {
        ++out->missing_box;
        continue;
      }
      try {
        rec.subject = normalize_token(vg_name(rel["subject"]));
        rec.object = normalize_token(vg_name(rel["object"]));
      } catch (const ParseError& e) {
        fail_or_count(opts.strict, &out->malformed, "image " + image_id + ": " + e.what());
        continue;
      }
      rec.relation = normalize_token(rel["predicate"].get<std::string>());
      rec.image_width = size_it->second.width;
      rec.image_height = size_it->second.height;
      rec.source_id = image_id + ":" +
                      (rel.contains("relationship_id") ? id_string(rel["relationship_id"])
                                                       : std::to_string(out->records.size()));
      out->records.push_back(std::move(rec));
    }
  }
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Box normalize_box(const PixelBox& px, double w, double h, bool* clipped) {
  double x0 = std::max(px.x, 0.0);
  double y0 = std::max(px.y, 0.0);
  double x1 = std::min(px.x + px.w, w);
  double y1 = std::min(px.y + px.h, h);
  x0 = std::min(x0, w);
  y0 = std::min(y0, h);
  x1 = std::max(x1, x0);
  y1 = std::max(y1, y0);
  *clipped = x0 != px.x || y0 != px.y || x1 != px.x + px.w || y1 != px.y + px.h;
  return {(x0 + x1) / 2.0 / w, (y0 + y1) / 2.0 / h, (x1 - x0) / 2.0 / w, (y1 - y0) / 2.0 / h};
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream is{std::string(s)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

json box_json(const Box& b) { return json::array({b.center_x, b.center_y, b.half_w, b.half_h}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError("box must be a 4-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json provenance_json(const Provenance& p) {
  return {{"stoplist_hash", p.stoplist_hash}, {"mirroring", p.mirroring}};
}

Provenance provenance_from_json(const json& j) {
  return {j.at("stoplist_hash").get<std::string>(), j.at("mirroring").get<bool>()};
}

std::vector<std::string> ids_where(const std::vector<Instance>& instances, bool want,
                                   const std::vector<bool>& flags) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (flags[i] == want) ids.push_back(instances[i].source_id);
  return ids;
}

}  // namespace

// ---------------------------------------------------------------------------

InputFormat parse_input_format(std::string_view name) {
  if (name == "vg_relationships" || name == "vg") return InputFormat::vg_relationships;
  if (name == "canonical_jsonl" || name == "jsonl") return InputFormat::canonical_jsonl;
  throw Error("unknown input format '" + std::string(name) + "'");
}

std::string normalize_token(std::string_view token) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : token) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

ParseResult parse_scene_graph(std::istream& in, InputFormat format, const ParseOptions& options) {
  ParseResult result;
  if (format == InputFormat::canonical_jsonl) {
    parse_canonical(in, options, &result);
  } else {
    // An empty stream is an empty corpus in either format.
    if (in.peek() == std::char_traits<char>::eof()) return result;
    parse_vg(in, options, &result);
  }
  return result;
}

std::unordered_map<std::string, ImageSize> parse_image_sizes(std::istream& in) {
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_array())
    throw ParseError("image metadata must be a JSON array");
  std::unordered_map<std::string, ImageSize> sizes;
  for (const auto& img : doc) {
    const json* id = nullptr;
    if (img.contains("image_id")) {
      id = &img["image_id"];
    } else if (img.contains("id")) {
      id = &img["id"];
    }
    if (id == nullptr || !img.contains("width") || !img.contains("height"))
      throw ParseError("image metadata entry without id/width/height");
    sizes[id_string(*id)] = {img["width"].get<double>(), img["height"].get<double>()};
  }
  return sizes;
}

// ---------------------------------------------------------------------------

std::set<std::string> default_stoplist() {
  return {"on",     "in",     "above",  "below",   "under",      "beneath", "over",  "atop",
          "beside", "besides", "near",  "next",    "behind",     "inside",  "outside", "left",
          "right",  "across", "against", "along",  "among",      "around",  "at",    "between",
          "by",     "down",   "up",     "onto",    "into",       "underneath", "within", "front",
          "top",    "bottom", "side",   "off"};
}

std::set<std::string> read_stoplist(std::istream& in) {
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string tok = normalize_token(line);
    if (!tok.empty()) out.insert(tok);
  }
  if (out.empty()) throw Error("stoplist is empty");
  return out;
}

std::string stoplist_hash(const std::set<std::string>& stoplist) {
  std::string joined;
  for (const auto& t : stoplist) {
    joined += t;
    joined += '\n';
  }
  return fnv1a_hex(joined);
}

bool is_explicit(std::string_view relation, const std::set<std::string>& stoplist) {
  for (const auto& tok : split_ws(relation))
    if (stoplist.count(tok)) return true;
  return false;
}

Partition partition_explicit(std::vector<RawRecord> records,
                             const std::set<std::string>& stoplist) {
  Partition p;
  for (auto& r : records) {
    if (is_explicit(r.relation, stoplist)) {
      p.explicit_records.push_back(std::move(r));
    } else {
      p.implicit_records.push_back(std::move(r));
    }
  }
  return p;
}

Instance normalize(const RawRecord& record, NormalizeStats* stats) {
  const double w = record.image_width;
  const double h = record.image_height;
  if (!(w > 0.0) || !(h > 0.0))
    throw Error("record " + record.source_id + ": non-positive image dimensions");
  Instance inst;
  inst.subject_word = record.subject;
  inst.relation_word = record.relation;
  inst.object_word = record.object;
  inst.source_id = record.source_id;
  bool clipped_s = false;
  bool clipped_o = false;
  inst.subject_box = normalize_box(record.subject_box, w, h, &clipped_s);
  inst.object_box = normalize_box(record.object_box, w, h, &clipped_o);
  if (stats != nullptr) stats->clipped += std::size_t(clipped_s) + std::size_t(clipped_o);
  return inst;
}

PixelBox denormalize(const Box& box, double image_width, double image_height) {
  return {(box.center_x - box.half_w) * image_width, (box.center_y - box.half_h) * image_height,
          2.0 * box.half_w * image_width, 2.0 * box.half_h * image_height};
}

Instance mirror_if_needed(Instance instance) {
  if (instance.object_box.center_x < instance.subject_box.center_x) {
    instance.object_box.center_x = 1.0 - instance.object_box.center_x;
    instance.subject_box.center_x = 1.0 - instance.subject_box.center_x;
    instance.mirrored = true;
  } else {
    instance.mirrored = false;
  }
  return instance;
}

std::vector<Instance> preprocess(const std::vector<RawRecord>& records, PreprocessReport* report) {
  std::vector<Instance> out;
  out.reserve(records.size());
  NormalizeStats stats;
  std::size_t rejected = 0;
  std::size_t mirrored = 0;
  for (const auto& r : records) {
    if (!(r.image_width > 0.0) || !(r.image_height > 0.0)) {
      ++rejected;
      continue;
    }
    out.push_back(mirror_if_needed(normalize(r, &stats)));
    mirrored += out.back().mirrored;
  }
  if (report != nullptr) {
    report->input_records += records.size();
    report->clipped_boxes += stats.clipped;
    report->rejected += rejected;
    report->mirrored += mirrored;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view role_name(Role role) {
  switch (role) {
    case Role::subject: return "subject";
    case Role::relation: return "relation";
    case Role::object: return "object";
  }
  return "?";
}

Role parse_role(std::string_view name) {
  if (name == "subject") return Role::subject;
  if (name == "relation") return Role::relation;
  if (name == "object") return Role::object;
  throw Error("unknown vocabulary role '" + std::string(name) + "'");
}

Vocabulary::Vocabulary(Role role, std::vector<std::string> tokens)
    : role_(role), tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second)
      throw Error("duplicate token '" + tokens_[i] + "' in vocabulary");
  }
}

std::optional<std::size_t> Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end())
    throw Error("token '" + token + "' not in " + std::string(role_name(role_)) + " vocabulary");
  return it->second;
}

std::size_t Vocabularies::joint_object_count() const {
  std::unordered_set<std::string> all(subjects.tokens().begin(), subjects.tokens().end());
  all.insert(objects.tokens().begin(), objects.tokens().end());
  return all.size();
}

Vocabularies build_vocabs(const std::vector<Instance>& instances) {
  if (instances.empty()) throw Error("cannot build vocabularies from an empty corpus");
  std::vector<std::string> s, r, o;
  std::unordered_set<std::string> seen_s, seen_r, seen_o;
  for (const auto& inst : instances) {
    if (seen_s.insert(inst.subject_word).second) s.push_back(inst.subject_word);
    if (seen_r.insert(inst.relation_word).second) r.push_back(inst.relation_word);
    if (seen_o.insert(inst.object_word).second) o.push_back(inst.object_word);
  }
  return {Vocabulary(Role::subject, std::move(s)), Vocabulary(Role::relation, std::move(r)),
          Vocabulary(Role::object, std::move(o))};
}

// ---------------------------------------------------------------------------

std::string_view split_mode_name(SplitMode mode) {
  switch (mode) {
    case SplitMode::cv: return "cv";
    case SplitMode::gen_triplets: return "gen-triplets";
    case SplitMode::gen_words: return "gen-words";
  }
  return "?";
}

SplitMode parse_split_mode(std::string_view name) {
  if (name == "cv") return SplitMode::cv;
  if (name == "gen-triplets") return SplitMode::gen_triplets;
  if (name == "gen-words") return SplitMode::gen_words;
  throw Error("unknown split mode '" + std::string(name) + "'");
}

FoldData materialize(const SplitPlan& plan, std::size_t fold, const std::vector<Instance>& corpus) {
  if (fold >= plan.test_folds.size())
    throw Error("fold " + std::to_string(fold) + " out of range (plan has " +
                std::to_string(plan.test_folds.size()) + ")");
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus[i].source_id, i);
  auto resolve = [&](const std::string& id) -> const Instance& {
    auto it = index.find(id);
    if (it == index.end()) throw Error("split plan id '" + id + "' not found in corpus");
    return corpus[it->second];
  };
  FoldData data;
  std::unordered_set<std::string_view> test_ids;
  for (const auto& id : plan.test_folds[fold]) {
    data.test.push_back(resolve(id));
    test_ids.insert(id);
  }
  if (plan.mode == SplitMode::cv) {
    for (const auto& inst : corpus)
      if (!test_ids.count(inst.source_id)) data.train.push_back(inst);
  } else {
    for (const auto& id : plan.train) data.train.push_back(resolve(id));
  }
  return data;
}

SplitPlan make_cv_folds(const std::vector<Instance>& instances, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("cross-validation needs k >= 2");
  if (k > instances.size())
    throw Error("k = " + std::to_string(k) + " exceeds corpus size " +
                std::to_string(instances.size()));
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t pos = 0; pos < order.size(); ++pos) members[pos % k].push_back(order[pos]);
  SplitPlan plan;
  plan.mode = SplitMode::cv;
  plan.seed = seed;
  for (auto& m : members) {
    std::sort(m.begin(), m.end());
    std::vector<std::string> ids;
    ids.reserve(m.size());
    for (auto i : m) ids.push_back(instances[i].source_id);
    plan.test_folds.push_back(std::move(ids));
  }
  return plan;
}

std::vector<std::pair<Triplet, std::size_t>> triplet_frequencies(
    const std::vector<Instance>& instances) {
  std::map<Triplet, std::size_t> counts;
  for (const auto& inst : instances) ++counts[triplet_of(inst)];
  std::vector<std::pair<Triplet, std::size_t>> out(counts.begin(), counts.end());
  // std::map iterates lexicographically, so a stable sort by count keeps ties
  // in triplet order.
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

SplitPlan make_held_out_triplet_split(const std::vector<Instance>& instances,
                                      const std::vector<Triplet>& held_out) {
  std::set<Triplet> chosen(held_out.begin(), held_out.end());
  std::vector<bool> is_test(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i)
    is_test[i] = chosen.count(triplet_of(instances[i])) != 0;
  SplitPlan plan;
  plan.mode = SplitMode::gen_triplets;
  plan.held_out_triplets.assign(chosen.begin(), chosen.end());
  plan.test_folds.push_back(ids_where(instances, true, is_test));
  plan.train = ids_where(instances, false, is_test);
  return plan;
}

SplitPlan make_generalized_triplet_split(const std::vector<Instance>& instances,
                                         std::size_t n_pick, std::size_t top_m,
                                         std::uint64_t seed) {
  auto freq = triplet_frequencies(instances);
  const std::size_t pool = std::min(top_m, freq.size());
  if (pool < n_pick)
    throw Error("only " + std::to_string(pool) + " distinct triplets among the top " +
                std::to_string(top_m) + ", cannot pick " + std::to_string(n_pick));
  std::vector<std::size_t> order(pool);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Triplet> chosen;
  for (std::size_t i = 0; i < n_pick; ++i) chosen.push_back(freq[order[i]].first);
  SplitPlan plan = make_held_out_triplet_split(instances, chosen);
  plan.seed = seed;
  return plan;
}

SplitPlan make_generalized_word_split(const std::vector<Instance>& instances,
                                      const std::vector<std::string>& held_out_words) {
  if (held_out_words.empty()) throw Error("held-out word list is empty");
  std::set<std::string> words;
  for (const auto& w : held_out_words) words.insert(normalize_token(w));
  std::vector<bool> is_test(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i)
    is_test[i] = words.count(instances[i].subject_word) || words.count(instances[i].object_word);
  SplitPlan plan;
  plan.mode = SplitMode::gen_words;
  plan.held_out_words.assign(words.begin(), words.end());
  plan.test_folds.push_back(ids_where(instances, true, is_test));
  plan.train = ids_where(instances, false, is_test);
  return plan;
}

std::vector<std::string> default_generalized_words() {
  return {"surfboard", "shadow", "head",  "surfer", "woman", "bear",     "bag",
          "sunglasses", "hair",  "apple", "grass",  "water", "eye",      "shoes",
          "foot",      "jeans",  "jacket", "bus",   "bike",  "cat",      "sky",
          "elephant",  "tree",   "plane", "eyes"};
}

// ---------------------------------------------------------------------------

std::vector<TemplateRule> default_rules() {
  // Vertical placement outside "above"/"below" is carried by the subject and
  // object words alone: every man/bag triplet sits 0.15 below the subject and
  // every woman/hat triplet 0.15 above it, so "holding" and "carrying" occur
  // on both sides. "above" and "below" share subject and object, so only the
  // relation tells them apart.
  return {
      {{"man", "holding", "bag"}, 0.08, 0.15, 0.07, 0.08},
      {{"woman", "holding", "hat"}, 0.06, -0.15, 0.07, 0.05},
      {{"man", "carrying", "bag"}, 0.12, 0.15, 0.07, 0.08},
      {{"woman", "carrying", "hat"}, 0.03, -0.15, 0.07, 0.05},
      {{"woman", "wearing", "hat"}, 0.00, -0.15, 0.08, 0.05},
      {{"man", "left of", "bag"}, -0.25, 0.15, 0.07, 0.08},
      {{"cat", "above", "table"}, 0.00, -0.25, 0.14, 0.07},
      {{"cat", "below", "table"}, 0.00, 0.25, 0.14, 0.07},
  };
}

std::vector<Instance> generate_synthetic(const std::vector<TemplateRule>& rules,
                                         std::size_t n_instances, double noise_sigma,
                                         std::uint64_t seed, const SyntheticOptions& options) {
  if (rules.empty()) throw Error("synthetic generation needs at least one rule");
  if (!(noise_sigma >= 0.0)) throw Error("noise_sigma must be >= 0");
  if (!(options.subject_half_min >= 0.0) || options.subject_half_max < options.subject_half_min ||
      options.subject_half_max >= 0.5)
    throw Error("subject half-extent range must lie in [0, 0.5)");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, rules.size() - 1);
  std::uniform_real_distribution<double> half(options.subject_half_min, options.subject_half_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  std::vector<Instance> out;
  out.reserve(n_instances);
  for (std::size_t i = 0; i < n_instances; ++i) {
    const TemplateRule& rule = rules[pick(rng)];
    Instance inst;
    inst.subject_word = rule.triplet[0];
    inst.relation_word = rule.triplet[1];
    inst.object_word = rule.triplet[2];
    Box& s = inst.subject_box;
    s.half_w = half(rng);
    s.half_h = half(rng);
    s.center_x = s.half_w + unit(rng) * (1.0 - 2.0 * s.half_w);
    s.center_y = s.half_h + unit(rng) * (1.0 - 2.0 * s.half_h);
    double nx = 0.0;
    double ny = 0.0;
    if (noise_sigma > 0.0) {
      nx = noise(rng);
      ny = noise(rng);
    }
    Box& o = inst.object_box;
    o.center_x = clamp01(s.center_x + rule.offset_x + nx);
    o.center_y = clamp01(s.center_y + rule.offset_y + ny);
    o.half_w = rule.object_half_w;
    o.half_h = rule.object_half_h;
    inst.source_id = "synth:" + std::to_string(i);
    out.push_back(mirror_if_needed(std::move(inst)));
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_corpus_jsonl(std::ostream& out, const Corpus& corpus) {
  json meta = {{"meta",
                {{"provenance", provenance_json(corpus.provenance)},
                 {"config", corpus.config},
                 {"count", corpus.instances.size()}}}};
  out << meta.dump() << '\n';
  for (const auto& inst : corpus.instances) {
    json j = {{"id", inst.source_id},
              {"s", inst.subject_word},
              {"r", inst.relation_word},
              {"o", inst.object_word},
              {"s_box", box_json(inst.subject_box)},
              {"o_box", box_json(inst.object_box)},
              {"mirrored", inst.mirrored}};
    out << j.dump() << '\n';
  }
}

Corpus read_corpus_jsonl(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw ParseError("corpus line " + std::to_string(line_no) + ": not a JSON object");
    try {
      if (j.contains("meta")) {
        corpus.provenance = provenance_from_json(j["meta"].at("provenance"));
        corpus.config = j["meta"].value("config", "");
        have_meta = true;
        continue;
      }
      Instance inst;
      inst.source_id = j.at("id").get<std::string>();
      inst.subject_word = j.at("s").get<std::string>();
      inst.relation_word = j.at("r").get<std::string>();
      inst.object_word = j.at("o").get<std::string>();
      inst.subject_box = box_from_json(j.at("s_box"));
      inst.object_box = box_from_json(j.at("o_box"));
      inst.mirrored = j.value("mirrored", false);
      corpus.instances.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw ParseError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_meta) throw ParseError("corpus file has no meta header line");
  return corpus;
}

void write_split_plan(std::ostream& out, const SplitPlan& plan, const Provenance& provenance,
                      const std::string& config) {
  json triplets = json::array();
  for (const auto& t : plan.held_out_triplets) triplets.push_back({t[0], t[1], t[2]});
  json j = {{"meta", {{"provenance", provenance_json(provenance)}, {"config", config}}},
            {"mode", split_mode_name(plan.mode)},
            {"seed", plan.seed},
            {"folds", plan.test_folds},
            {"train", plan.train},
            {"held_out_triplets", triplets},
            {"held_out_words", plan.held_out_words}};
  out << j.dump(1) << '\n';
}

SplitPlan read_split_plan(std::istream& in, Provenance* provenance) {
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("split plan is not a JSON object");
  try {
    SplitPlan plan;
    plan.mode = parse_split_mode(j.at("mode").get<std::string>());
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.test_folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
    plan.train = j.at("train").get<std::vector<std::string>>();
    for (const auto& t : j.at("held_out_triplets"))
      plan.held_out_triplets.push_back({t.at(0).get<std::string>(), t.at(1).get<std::string>(),
                                        t.at(2).get<std::string>()});
    plan.held_out_words = j.at("held_out_words").get<std::vector<std::string>>();
    if (provenance != nullptr) *provenance = provenance_from_json(j.at("meta").at("provenance"));
    return plan;
  } catch (const json::exception& e) {
    throw ParseError(std::string("split plan: ") + e.what());
  }
}

}  // namespace spt
