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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "spt/corpus.hpp"

using namespace spt;

namespace {

RawRecord raw(std::string s, std::string r, std::string o, PixelBox sb, PixelBox ob,
              double w = 400, double h = 300) {
  return {std::move(s), std::move(r), std::move(o), sb, ob, w, h, "t"};
}

Instance inst(std::string s, std::string r, std::string o, double sx = 0.3, double ox = 0.6,
              std::string id = "") {
  Instance i;
  i.subject_word = std::move(s);
  i.relation_word = std::move(r);
  i.object_word = std::move(o);
  i.subject_box = {sx, 0.5, 0.1, 0.1};
  i.object_box = {ox, 0.5, 0.1, 0.1};
  i.source_id = std::move(id);
  return i;
}

std::vector<Instance> numbered(std::size_t n) {
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(inst("s" + std::to_string(i % 7), "r" + std::to_string(i % 3),
                       "o" + std::to_string(i % 5), 0.3, 0.6, "id" + std::to_string(i)));
  return out;
}

}  // namespace

TEST_CASE("canonical line maps directly to a raw record") {
  std::istringstream in(
      R"({"s":"man","r":"riding","o":"horse","s_box":[100,50,40,80],"o_box":[90,100,120,90],"img":[400,300]})"
      "\n");
  const ParseResult r = parse_scene_graph(in, InputFormat::canonical_jsonl);
  REQUIRE(r.records.size() == 1);
  CHECK(r.skipped() == 0);
  const RawRecord& rec = r.records[0];
  CHECK(rec.subject == "man");
  CHECK(rec.relation == "riding");
  CHECK(rec.object == "horse");
  CHECK(rec.subject_box == PixelBox{100, 50, 40, 80});
  CHECK(rec.object_box == PixelBox{90, 100, 120, 90});
  CHECK(rec.image_width == 400);
  CHECK(rec.image_height == 300);
}

TEST_CASE("empty stream parses to nothing") {
  std::istringstream in("");
  const ParseResult r = parse_scene_graph(in, InputFormat::canonical_jsonl);
  CHECK(r.records.empty());
  CHECK(r.skipped() == 0);
}

TEST_CASE("record without object box is skipped and counted") {
  std::istringstream in(R"({"s":"man","r":"riding","o":"horse","s_box":[1,2,3,4],"img":[10,10]})");
  const ParseResult r = parse_scene_graph(in, InputFormat::canonical_jsonl);
  CHECK(r.records.empty());
  CHECK(r.missing_box == 1);
}

TEST_CASE("malformed lines: lenient counts, strict throws") {
  const std::string text =
      "not json\n"
      "{\"s\":1,\"r\":\"on\",\"o\":\"x\",\"s_box\":[0,0,1,1],\"o_box\":[0,0,1,1],\"img\":[10,10]}\n";
  std::istringstream lenient(text);
  const ParseResult r = parse_scene_graph(lenient, InputFormat::canonical_jsonl);
  CHECK(r.malformed == 2);
  std::istringstream strict(text);
  ParseOptions opts;
  opts.strict = true;
  CHECK_THROWS_AS(parse_scene_graph(strict, InputFormat::canonical_jsonl, opts), ParseError);
}

TEST_CASE("tokens are lowercased, trimmed and collapsed") {
  CHECK(normalize_token("  Standing   Next To ") == "standing next to");
  CHECK(normalize_token("\tMAN\n") == "man");
}

TEST_CASE("visual genome relationships with image sizes") {
  std::istringstream rel(R"([
    {"image_id": 1, "relationships": [
      {"relationship_id": 10, "predicate": "Riding",
       "subject": {"x": 100, "y": 50, "w": 40, "h": 80, "names": ["Man"]},
       "object": {"x": 90, "y": 100, "w": 120, "h": 90, "name": "horse"}},
      {"relationship_id": 11, "predicate": "on",
       "subject": {"x": 0, "y": 0, "w": 10, "h": 10, "names": ["cup"]},
       "object": {"name": "table"}}]},
    {"image_id": 2, "relationships": [
      {"relationship_id": 12, "predicate": "has",
       "subject": {"x": 0, "y": 0, "w": 1, "h": 1, "names": ["a"]},
       "object": {"x": 0, "y": 0, "w": 1, "h": 1, "names": ["b"]}}]}
  ])");
  std::istringstream meta(R"([{"image_id": 1, "width": 400, "height": 300}])");
  ParseOptions opts;
  opts.image_sizes = parse_image_sizes(meta);
  const ParseResult r = parse_scene_graph(rel, InputFormat::vg_relationships, opts);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].subject == "man");
  CHECK(r.records[0].relation == "riding");
  CHECK(r.records[0].object == "horse");
  CHECK(r.records[0].image_width == 400);
  CHECK(r.missing_box == 1);
  CHECK(r.missing_image == 1);
}

TEST_CASE("explicit partition") {
  const auto stop = default_stoplist();
  CHECK(stop.size() == 36);
  CHECK(is_explicit("on", stop));
  CHECK_FALSE(is_explicit("riding", stop));
  CHECK(is_explicit("standing next to", stop));

  std::vector<RawRecord> records = {raw("glass", "on", "table", {}, {}),
                                    raw("woman", "riding", "horse", {}, {}),
                                    raw("man", "sitting in", "car", {}, {})};
  const Partition p = partition_explicit(records, stop);
  CHECK(p.implicit_records.size() == 1);
  CHECK(p.explicit_records.size() == 2);
  CHECK(p.implicit_records[0].relation == "riding");

  const Partition empty = partition_explicit({}, stop);
  CHECK(empty.implicit_records.empty());
  CHECK(empty.explicit_records.empty());
}

TEST_CASE("stoplist file and hash") {
  std::ifstream file(std::string(SPT_DATA_DIR) + "/explicit_prepositions.txt");
  REQUIRE(file);
  const auto from_file = read_stoplist(file);
  CHECK(from_file == default_stoplist());
  CHECK(stoplist_hash(from_file) == stoplist_hash(default_stoplist()));
  CHECK(stoplist_hash({"on"}) != stoplist_hash({"in"}));
  std::istringstream empty("# nothing\n\n");
  CHECK_THROWS(read_stoplist(empty));
}

TEST_CASE("normalize: arithmetic forced by definition") {
  const Instance i = normalize(raw("a", "b", "c", {100, 50, 40, 80}, {0, 0, 400, 300}));
  CHECK(i.subject_box.center_x == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(i.subject_box.center_y == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(i.subject_box.half_w == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(i.subject_box.half_h == doctest::Approx(80.0 / 600.0).epsilon(1e-12));
  CHECK(i.object_box == Box{0.5, 0.5, 0.5, 0.5});
  CHECK_THROWS_AS(normalize(raw("a", "b", "c", {}, {}, 0, 300)), Error);
}

TEST_CASE("normalize clips out-of-image boxes and counts them") {
  NormalizeStats stats;
  const Instance i = normalize(raw("a", "b", "c", {-40, 0, 80, 300}, {0, 0, 10, 10}), &stats);
  CHECK(stats.clipped == 1);
  CHECK(i.subject_box.left() == doctest::Approx(0.0));
  CHECK(i.subject_box.right() == doctest::Approx(0.1));
}

TEST_CASE("normalize/denormalize round trip") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    const double w = 50 + 1000 * u(rng);
    const double h = 50 + 1000 * u(rng);
    const double x = u(rng) * w * 0.5;
    const double y = u(rng) * h * 0.5;
    const PixelBox pb{x, y, u(rng) * (w - x), u(rng) * (h - y)};
    const Instance i = normalize(raw("a", "b", "c", pb, pb, w, h));
    const PixelBox back = denormalize(i.subject_box, w, h);
    CHECK(std::abs(back.x - pb.x) <= 1e-9 * std::max(1.0, std::abs(pb.x)));
    CHECK(std::abs(back.y - pb.y) <= 1e-9 * std::max(1.0, std::abs(pb.y)));
    CHECK(std::abs(back.w - pb.w) <= 1e-9 * std::max(1.0, pb.w));
    CHECK(std::abs(back.h - pb.h) <= 1e-9 * std::max(1.0, pb.h));
  }
}

TEST_CASE("mirroring") {
  SUBCASE("object left of subject is reflected") {
    const Instance m = mirror_if_needed(inst("s", "r", "o", 0.6, 0.2));
    CHECK(m.object_box.center_x == doctest::Approx(0.8));
    CHECK(m.subject_box.center_x == doctest::Approx(0.4));
    CHECK(m.mirrored);
  }
  SUBCASE("object right of subject is unchanged") {
    const Instance m = mirror_if_needed(inst("s", "r", "o", 0.3, 0.7));
    CHECK(m.object_box.center_x == 0.7);
    CHECK(m.subject_box.center_x == 0.3);
    CHECK_FALSE(m.mirrored);
  }
  SUBCASE("tie is unchanged") {
    const Instance m = mirror_if_needed(inst("s", "r", "o", 0.5, 0.5));
    CHECK_FALSE(m.mirrored);
  }
}

TEST_CASE("preprocess keeps object right of subject and rejects bad images") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 200.0);
  std::vector<RawRecord> records;
  for (int k = 0; k < 300; ++k)
    records.push_back(raw("a", "b", "c", {u(rng), u(rng), u(rng), u(rng)},
                          {u(rng), u(rng), u(rng), u(rng)}));
  records.push_back(raw("a", "b", "c", {}, {}, -1, 10));
  PreprocessReport report;
  const auto out = preprocess(records, &report);
  CHECK(out.size() == 300);
  CHECK(report.rejected == 1);
  for (const auto& i : out) {
    CHECK(i.object_box.center_x >= i.subject_box.center_x);
    for (const Box* b : {&i.subject_box, &i.object_box}) {
      CHECK(b->center_x >= 0.0);
      CHECK(b->center_x <= 1.0);
      CHECK(b->center_y >= 0.0);
      CHECK(b->center_y <= 1.0);
      CHECK(b->half_w >= 0.0);
      CHECK(b->half_h >= 0.0);
    }
  }
}

TEST_CASE("vocabularies") {
  const auto two = build_vocabs({inst("man", "riding", "horse"), inst("man", "feeding", "horse")});
  CHECK(two.subjects.size() == 1);
  CHECK(two.relations.size() == 2);
  CHECK(two.relations.index_of("riding") == 0);
  CHECK(two.relations.index_of("feeding") == 1);
  CHECK_THROWS(two.objects.index_of("zebra"));
  const auto corpus = numbered(50);
  CHECK(build_vocabs(corpus).subjects == build_vocabs(corpus).subjects);
  CHECK(build_vocabs(corpus).objects == build_vocabs(corpus).objects);
  const auto v = build_vocabs(corpus);
  for (std::size_t i = 0; i < v.subjects.size(); ++i)
    CHECK(v.subjects.index_of(v.subjects.token(i)) == i);
}

TEST_CASE("cv folds partition the corpus") {
  const auto corpus = numbered(100);
  const SplitPlan plan = make_cv_folds(corpus, 10, 42);
  REQUIRE(plan.fold_count() == 10);
  std::multiset<std::string> all;
  for (const auto& f : plan.test_folds) {
    CHECK(f.size() == 10);
    all.insert(f.begin(), f.end());
  }
  std::multiset<std::string> expected;
  for (const auto& i : corpus) expected.insert(i.source_id);
  CHECK(all == expected);

  const FoldData d = materialize(plan, 3, corpus);
  CHECK(d.train.size() == 90);
  CHECK(d.test.size() == 10);

  CHECK(make_cv_folds(corpus, 10, 42).test_folds == plan.test_folds);
  CHECK(make_cv_folds(corpus, 10, 43).test_folds != plan.test_folds);

  const SplitPlan uneven = make_cv_folds(numbered(23), 5, 1);
  std::size_t lo = 100, hi = 0;
  for (const auto& f : uneven.test_folds) {
    lo = std::min(lo, f.size());
    hi = std::max(hi, f.size());
  }
  CHECK(hi - lo <= 1);
  CHECK_THROWS(make_cv_folds(corpus, 1, 0));
  CHECK_THROWS(materialize(plan, 10, corpus));
}

TEST_CASE("generalized triplet split removes held-out triplets from training") {
  // Triplet (s_i, r_i, o_i) for i in 0..29 with count 30 - i, plus ties.
  std::vector<Instance> corpus;
  int id = 0;
  for (int t = 0; t < 30; ++t)
    for (int c = 0; c < 30 - t; ++c)
      corpus.push_back(inst("s" + std::to_string(t), "r", "o", 0.3, 0.6, std::to_string(id++)));
  for (const char* s : {"tie_b", "tie_a", "tie_c"})
    corpus.push_back(inst(s, "r", "o", 0.3, 0.6, std::to_string(id++)));

  const auto freq = triplet_frequencies(corpus);
  CHECK(freq.front().first == Triplet{"s0", "r", "o"});
  CHECK(freq.front().second == 30);
  // Ties at count 1: lexicographic order among s29, tie_a, tie_b, tie_c.
  const std::vector<std::string> tail = {freq[29].first[0], freq[30].first[0], freq[31].first[0],
                                         freq[32].first[0]};
  CHECK(tail == std::vector<std::string>{"s29", "tie_a", "tie_b", "tie_c"});

  const SplitPlan plan = make_generalized_triplet_split(corpus, 5, 10, 9);
  CHECK(plan.held_out_triplets.size() == 5);
  const FoldData d = materialize(plan, 0, corpus);
  std::set<Triplet> held(plan.held_out_triplets.begin(), plan.held_out_triplets.end());
  std::set<Triplet> top10;
  for (std::size_t k = 0; k < 10; ++k) top10.insert(freq[k].first);
  for (const auto& t : plan.held_out_triplets) CHECK(top10.count(t));
  for (const auto& i : d.train) CHECK_FALSE(held.count(triplet_of(i)));
  for (const auto& i : d.test) CHECK(held.count(triplet_of(i)));
  CHECK(d.train.size() + d.test.size() == corpus.size());
  CHECK(make_generalized_triplet_split(corpus, 5, 10, 9).held_out_triplets ==
        plan.held_out_triplets);
  CHECK_THROWS(make_generalized_triplet_split(corpus, 50, 1000, 0));
}

TEST_CASE("generalized word split matches subjects and objects only") {
  std::vector<Instance> corpus = {inst("cat", "sniffing", "apple", 0.3, 0.6, "a"),
                                  inst("man", "riding", "horse", 0.3, 0.6, "b"),
                                  inst("man", "apple", "horse", 0.3, 0.6, "c")};
  const SplitPlan plan = make_generalized_word_split(corpus, {"apple"});
  const FoldData d = materialize(plan, 0, corpus);
  REQUIRE(d.test.size() == 1);
  CHECK(d.test[0].source_id == "a");
  CHECK(d.train.size() == 2);

  const auto words = default_generalized_words();
  CHECK(words.size() == 25);
  std::ifstream file(std::string(SPT_DATA_DIR) + "/generalized_words.txt");
  REQUIRE(file);
  const auto listed = read_stoplist(file);
  CHECK(listed == std::set<std::string>(words.begin(), words.end()));
}

TEST_CASE("synthetic generation") {
  SUBCASE("zero noise places objects exactly at the offset") {
    const std::vector<TemplateRule> rules = {{{"man", "holding", "cup"}, 0.1, 0.05, 0.02, 0.02}};
    SyntheticOptions opts;
    opts.subject_half_min = 0.05;
    opts.subject_half_max = 0.1;
    for (const auto& i : generate_synthetic(rules, 500, 0.0, 5, opts)) {
      CHECK_FALSE(i.mirrored);
      const double dx = i.object_box.center_x - i.subject_box.center_x;
      const double dy = i.object_box.center_y - i.subject_box.center_y;
      // Exact unless the object center had to be clipped into the image.
      if (i.object_box.center_x < 1.0 && i.object_box.center_y < 1.0) {
        CHECK(dx == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(dy == doctest::Approx(0.05).epsilon(1e-12));
      }
    }
  }
  SUBCASE("noise has the requested spread") {
    const std::vector<TemplateRule> rules = {{{"a", "b", "c"}, 0.1, 0.0, 0.02, 0.02}};
    SyntheticOptions opts;
    opts.subject_half_min = 0.3;
    opts.subject_half_max = 0.3;
    const auto data = generate_synthetic(rules, 10000, 0.02, 8, opts);
    double sx = 0, sxx = 0, sy = 0, syy = 0;
    for (const auto& i : data) {
      const double dx = i.object_box.center_x - i.subject_box.center_x - 0.1;
      const double dy = i.object_box.center_y - i.subject_box.center_y;
      sx += dx;
      sxx += dx * dx;
      sy += dy;
      syy += dy * dy;
    }
    const double n = double(data.size());
    CHECK(std::sqrt(sxx / n - (sx / n) * (sx / n)) == doctest::Approx(0.02).epsilon(0.15));
    CHECK(std::sqrt(syy / n - (sy / n) * (sy / n)) == doctest::Approx(0.02).epsilon(0.15));
  }
  SUBCASE("same seed gives a byte-identical corpus") {
    auto dump = [](std::uint64_t seed) {
      std::ostringstream out;
      write_corpus_jsonl(out, {{"h", true}, "", generate_synthetic(default_rules(), 300, 0.02, seed)});
      return out.str();
    };
    CHECK(dump(4) == dump(4));
    CHECK(dump(4) != dump(5));
  }
  SUBCASE("default rules") {
    const auto rules = default_rules();
    CHECK(rules.size() == 8);
    std::set<std::string> relations;
    for (const auto& r : rules) relations.insert(r.triplet[1]);
    CHECK(relations.count("above"));
    CHECK(relations.count("below"));
    for (const auto& i : generate_synthetic(rules, 2000, 0.02, 1))
      CHECK(i.object_box.center_x >= i.subject_box.center_x);
  }
}

TEST_CASE("corpus and split plan round trip") {
  const auto data = generate_synthetic(default_rules(), 200, 0.02, 3);
  const Corpus corpus{{"abcd", true}, "command=synth\n", data};
  std::stringstream buf;
  write_corpus_jsonl(buf, corpus);
  const Corpus back = read_corpus_jsonl(buf);
  CHECK(back.provenance == corpus.provenance);
  CHECK(back.config == corpus.config);
  CHECK(back.instances == corpus.instances);

  const SplitPlan plan = make_cv_folds(data, 4, 2);
  std::stringstream pbuf;
  write_split_plan(pbuf, plan, corpus.provenance, "cfg");
  Provenance prov;
  const SplitPlan pback = read_split_plan(pbuf, &prov);
  CHECK(prov == corpus.provenance);
  CHECK(pback.mode == SplitMode::cv);
  CHECK(pback.test_folds == plan.test_folds);

  std::istringstream headless(R"({"id":"x"})");
  CHECK_THROWS(read_corpus_jsonl(headless));
}
