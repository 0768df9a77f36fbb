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

#include "spt/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "spt/corpus.hpp"
#include "spt/embed.hpp"
#include "spt/metrics.hpp"
#include "spt/render.hpp"
#include "spt/templates.hpp"

namespace spt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- config files ------------------------------------------------------------

/// TOML/INI key=value files, or a JSON object whose nested objects name
/// subcommands, e.g. {"train": {"epochs": 20}}.
class JsonOrTomlConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::string text((std::istreambuf_iterator<char>(input)), std::istreambuf_iterator<char>());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || text[first] != '{') {
      std::istringstream in(text);
      return CLI::ConfigTOML::from_config(in);
    }
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw CLI::ConfigError("config file is not valid JSON");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  }

  static void flatten(const json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto next = parents;
        next.push_back(key);
        flatten(value, next, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      items.push_back(std::move(item));
    }
  }
};

// ---- helpers -------------------------------------------------------------------

std::string env_name(const std::string& flag) {
  std::string out = "SPT_";
  for (char c : flag) out += c == '-' ? '_' : char(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

template <typename T>
CLI::Option* option(CLI::App* app, const std::string& name, T& value, const std::string& help) {
  return app->add_option("--" + name, value, help)->envname(env_name(name))->capture_default_str();
}

CLI::Option* flag(CLI::App* app, const std::string& name, bool& value, const std::string& help) {
  return app->add_flag("--" + name, value, help)->envname(env_name(name));
}

/// Options that name destinations or scheduling rather than results.
bool echoed(const CLI::Option* opt) {
  static const std::set<std::string> skip = {"help", "out", "report", "jobs", "csv", "quiet"};
  return !opt->get_lnames().empty() && !skip.count(opt->get_lnames().front());
}

/// Resolved "key=value" lines of a subcommand, in declaration order.
std::string resolved_config(const CLI::App* sub) {
  std::string out = "command=" + sub->get_name() + "\n";
  for (const CLI::Option* opt : sub->get_options()) {
    if (!echoed(opt)) continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      const bool nested = std::any_of(results.begin(), results.end(),
                                      [](const std::string& r) { return r.find(',') != std::string::npos; });
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? (nested ? ";" : ",") : "") + results[i];
    } else {
      value = opt->get_default_str();
      if (value == "{}" || value == "[]") value.clear();
    }
    out += opt->get_lnames().front() + "=" + value + "\n";
  }
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  return in;
}

void write_file(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw Error("error writing '" + path + "'");
}

Corpus load_corpus(const std::string& path) {
  auto in = open_in(path);
  return read_corpus_jsonl(in);
}

SplitPlan load_plan(const std::string& path, const Corpus& corpus) {
  auto in = open_in(path);
  Provenance prov;
  SplitPlan plan = read_split_plan(in, &prov);
  if (!(prov == corpus.provenance))
    throw ProvenanceError("split plan '" + path + "' was built from differently preprocessed data");
  return plan;
}

TrainedModel load_checkpoint(const std::string& path) {
  auto in = open_in(path);
  return load_model(in);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(normalize_token(item));
  return out;
}

Triplet parse_triplet(const std::string& text) {
  const auto parts = split_list(text, ',');
  if (parts.size() != 3 || parts[0].empty() || parts[1].empty() || parts[2].empty())
    throw Error("expected a triplet 's,r,o', got '" + text + "'");
  return {parts[0], parts[1], parts[2]};
}

Box parse_box(const std::string& text) {
  std::vector<double> v;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("bad number '" + item + "' in box '" + text + "'");
    }
  }
  if (v.size() != 4) throw Error("expected a box 'cx,cy,hw,hh', got '" + text + "'");
  if (v[2] < 0 || v[3] < 0) throw Error("box half-extents must be non-negative");
  return {v[0], v[1], v[2], v[3]};
}

/// Runs fn(0..n-1) on up to `jobs` threads; the first failure by index is
/// rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::size_t(std::max(1, std::min<int>(jobs, int(n))));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string variant_tag(EmbeddingVariant v) {
  switch (v) {
    case EmbeddingVariant::pretrained: return "EMB";
    case EmbeddingVariant::random_matched: return "RND";
    case EmbeddingVariant::one_hot: return "1H";
  }
  return "?";
}

std::string method_label(const TrainedModel& m) {
  std::string head(head_name(m.head));
  std::transform(head.begin(), head.end(), head.begin(), ::toupper);
  return head + "_" + variant_tag(m.tables.subjects.variant());
}

json query_json(const Query& q) {
  const Box& b = q.subject_box;
  return {{"s", q.subject_word},
          {"r", q.relation_word},
          {"o", q.object_word},
          {"subject_box", {b.center_x, b.center_y, b.half_w, b.half_h}}};
}

Query query_from_json(const json& j) {
  const auto box = j.at("subject_box").get<std::vector<double>>();
  if (box.size() != 4) throw ParseError("subject_box needs 4 values");
  return {j.at("s").get<std::string>(), j.at("r").get<std::string>(), j.at("o").get<std::string>(),
          {box[0], box[1], box[2], box[3]}};
}

std::vector<TemplateRule> load_rules(const std::string& source) {
  if (source == "default8") return default_rules();
  auto in = open_in(source);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw ParseError("rules file must be a JSON array");
  std::vector<TemplateRule> rules;
  try {
    for (const auto& r : j)
      rules.push_back({{normalize_token(r.at("s").get<std::string>()),
                        normalize_token(r.at("r").get<std::string>()),
                        normalize_token(r.at("o").get<std::string>())},
                       r.at("dx").get<double>(),
                       r.at("dy").get<double>(),
                       r.at("hw").get<double>(),
                       r.at("hh").get<double>()});
  } catch (const json::exception& e) {
    throw ParseError(std::string("rules file: ") + e.what());
  }
  return rules;
}

// ---- subcommand state ----------------------------------------------------------

struct Options {
  int jobs = 1;
  bool quiet = false;

  // ingest
  std::string input;
  std::string format = "vg";
  std::string image_data;
  std::string stoplist;
  bool strict = false;
  std::string subset = "implicit";

  // synth
  std::string rules = "default8";
  std::size_t n = 20000;
  double noise = 0.02;

  // split
  std::string mode = "cv";
  std::size_t k = 10;
  std::string words_file;
  std::size_t n_pick = 100;
  std::size_t top_m = 1000;
  std::vector<std::string> triplets;

  // shared
  std::uint64_t seed = 0;
  std::string corpus;
  std::string split_plan;
  int fold = -1;
  std::string out;
  std::string model;

  // train
  std::string head = "reg";
  std::string emb = "1h";
  std::string vectors;
  int dim = 300;
  ModelConfig model_config;
  bool no_subject_size = false;

  // eval
  bool ctrl = false;
  std::string report;
  std::string r2 = "uniform";
  std::string macro = "balanced";
  std::string sweep = "grid";

  // predict
  std::string query;
  std::string subject_box;

  // render
  std::string prediction_file;
  int canvas = 512;
  bool reflect = false;

  // weights
  std::size_t top_k = 10;
  std::string csv;
};

struct Context {
  Options& o;
  std::ostream& out;
  std::ostream& err;
  std::string config;

  void note(const std::string& msg) const {
    if (!o.quiet) err << msg << '\n';
  }
};

// ---- ingest --------------------------------------------------------------------

void cmd_ingest(const Context& c) {
  const Options& o = c.o;
  const InputFormat format = parse_input_format(o.format);
  ParseOptions popts;
  popts.strict = o.strict;
  if (!o.image_data.empty()) {
    auto in = open_in(o.image_data);
    popts.image_sizes = parse_image_sizes(in);
  } else if (format == InputFormat::vg_relationships) {
    throw Error("--image-data is required for the vg format");
  }
  std::set<std::string> stoplist = default_stoplist();
  if (!o.stoplist.empty()) {
    auto in = open_in(o.stoplist);
    stoplist = read_stoplist(in);
  }
  auto in = open_in(o.input);
  ParseResult parsed = parse_scene_graph(in, format, popts);
  const std::size_t parsed_count = parsed.records.size();
  Partition part = partition_explicit(std::move(parsed.records), stoplist);
  std::vector<RawRecord> chosen;
  if (o.subset == "implicit") {
    chosen = std::move(part.implicit_records);
  } else if (o.subset == "explicit") {
    chosen = std::move(part.explicit_records);
  } else if (o.subset == "all") {
    chosen = std::move(part.implicit_records);
    chosen.insert(chosen.end(), part.explicit_records.begin(), part.explicit_records.end());
  } else {
    throw Error("--subset must be implicit, explicit or all");
  }
  PreprocessReport report;
  Corpus corpus{{stoplist_hash(stoplist), true}, c.config, preprocess(chosen, &report)};
  if (!o.vectors.empty()) {
    std::set<std::string> wanted;
    for (const auto& inst : corpus.instances)
      wanted.insert({inst.subject_word, inst.relation_word, inst.object_word});
    std::size_t dropped = 0;
    corpus.instances =
        drop_uncovered(corpus.instances, read_vectors_file(o.vectors, o.dim, wanted), &dropped);
    c.note("dropped " + std::to_string(dropped) + " instances without pretrained vectors");
  }
  std::ostringstream buf;
  write_corpus_jsonl(buf, corpus);
  write_file(o.out, buf.str());
  c.note("parsed " + std::to_string(parsed_count) + " records (" +
         std::to_string(parsed.malformed) + " malformed, " + std::to_string(parsed.missing_box) +
         " missing a box, " + std::to_string(parsed.missing_image) + " without image size)");
  c.note("kept " + std::to_string(corpus.instances.size()) + " " + o.subset + " instances (" +
         std::to_string(report.clipped_boxes) + " boxes clipped, " +
         std::to_string(report.rejected) + " rejected, " + std::to_string(report.mirrored) +
         " mirrored)");
}

// ---- synth -------------------------------------------------------------------------

void cmd_synth(const Context& c) {
  const Options& o = c.o;
  Corpus corpus{{stoplist_hash({}), true},
                c.config,
                generate_synthetic(load_rules(o.rules), o.n, o.noise, o.seed)};
  std::ostringstream buf;
  write_corpus_jsonl(buf, corpus);
  write_file(o.out, buf.str());
  c.note("wrote " + std::to_string(corpus.instances.size()) + " synthetic instances to " + o.out);
}

// ---- split -----------------------------------------------------------------------

void cmd_split(const Context& c) {
  const Options& o = c.o;
  const Corpus corpus = load_corpus(o.corpus);
  SplitPlan plan;
  switch (parse_split_mode(o.mode)) {
    case SplitMode::cv: plan = make_cv_folds(corpus.instances, o.k, o.seed); break;
    case SplitMode::gen_triplets:
      if (!o.triplets.empty()) {
        std::vector<Triplet> held;
        for (const auto& t : o.triplets) held.push_back(parse_triplet(t));
        plan = make_held_out_triplet_split(corpus.instances, held);
      } else {
        plan = make_generalized_triplet_split(corpus.instances, o.n_pick, o.top_m, o.seed);
      }
      break;
    case SplitMode::gen_words: {
      std::vector<std::string> words = default_generalized_words();
      if (!o.words_file.empty()) {
        auto in = open_in(o.words_file);
        const auto set = read_stoplist(in);
        words.assign(set.begin(), set.end());
      }
      plan = make_generalized_word_split(corpus.instances, words);
      break;
    }
  }
  std::ostringstream buf;
  write_split_plan(buf, plan, corpus.provenance, c.config);
  write_file(o.out, buf.str());
  std::size_t tests = 0;
  for (const auto& f : plan.test_folds) tests += f.size();
  c.note("wrote " + std::string(split_mode_name(plan.mode)) + " plan with " +
         std::to_string(plan.fold_count()) + " fold(s), " + std::to_string(tests) +
         " test instances");
}

// ---- train -----------------------------------------------------------------------

EmbeddingTables tables_for(const Options& o, const Vocabularies& vocabs) {
  const EmbeddingVariant variant = parse_variant(o.emb);
  if (variant == EmbeddingVariant::one_hot) return one_hot_tables(vocabs);
  if (o.vectors.empty()) throw Error("--vectors is required for --emb " + o.emb);
  std::set<std::string> wanted;
  for (const Vocabulary* v : {&vocabs.subjects, &vocabs.relations, &vocabs.objects})
    wanted.insert(v->tokens().begin(), v->tokens().end());
  const VectorStore store = read_vectors_file(o.vectors, o.dim, wanted);
  return make_tables(variant, vocabs, &store, o.seed);
}

void cmd_train(const Context& c) {
  const Options& o = c.o;
  const Corpus corpus = load_corpus(o.corpus);
  const Vocabularies vocabs = build_vocabs(corpus.instances);
  const Head head = parse_head(o.head);
  const EmbeddingTables tables = tables_for(o, vocabs);
  ModelConfig base = o.model_config;
  base.use_subject_size = !o.no_subject_size;

  std::optional<SplitPlan> plan;
  if (!o.split_plan.empty()) plan = load_plan(o.split_plan, corpus);

  auto fit = [&](std::optional<std::size_t> fold) {
    ModelConfig cfg = base;
    cfg.seed = o.seed + (fold ? *fold : 0);
    const std::vector<Instance> train_set =
        fold ? materialize(*plan, *fold, corpus.instances).train : corpus.instances;
    const std::string tag = fold ? "fold " + std::to_string(*fold) : "all";
    TrainedModel m = train(train_set, head, tables, cfg, corpus.provenance,
                           [&](const EpochReport& r) {
                             static std::mutex mu;
                             std::lock_guard<std::mutex> lock(mu);
                             char buf[64];
                             std::snprintf(buf, sizeof buf, "%.6g", r.mean_loss);
                             c.note(tag + " epoch " + std::to_string(r.epoch) + " loss " + buf);
                           });
    if (fold) m.fold = int(*fold);
    m.run_config = c.config;
    return m;
  };

  auto save = [](const TrainedModel& m, const std::string& path) {
    std::ostringstream buf;
    save_model(buf, m);
    write_file(path, buf.str());
  };

  if (!plan) {
    save(fit(std::nullopt), o.out);
    return;
  }
  if (o.fold >= 0) {
    save(fit(std::size_t(o.fold)), o.out);
    return;
  }
  // Every fold: --out names a directory of fold-<k>.json checkpoints.
  fs::create_directories(o.out);
  parallel_for(plan->fold_count(), o.jobs, [&](std::size_t k) {
    save(fit(k), (fs::path(o.out) / ("fold-" + std::to_string(k) + ".json")).string());
  });
}

// ---- eval ------------------------------------------------------------------------

EvalOptions eval_options(const Options& o) {
  EvalOptions e;
  if (o.r2 == "uniform") e.r2 = R2Aggregation::uniform;
  else if (o.r2 == "variance") e.r2 = R2Aggregation::variance_weighted;
  else throw Error("--r2 must be uniform or variance");
  if (o.macro == "balanced") e.macro = MacroAccuracy::balanced;
  else if (o.macro == "per-class") e.macro = MacroAccuracy::per_class;
  else throw Error("--macro must be balanced or per-class");
  if (o.sweep == "grid") e.sweep = ThresholdSweep::grid101;
  else if (o.sweep == "exact") e.sweep = ThresholdSweep::exact;
  else throw Error("--sweep must be grid or exact");
  return e;
}

void cmd_eval(const Context& c) {
  const Options& o = c.o;
  const Corpus corpus = load_corpus(o.corpus);
  const EvalOptions eopts = eval_options(o);
  std::optional<SplitPlan> plan;
  if (!o.split_plan.empty()) plan = load_plan(o.split_plan, corpus);

  // Folds to score: the requested one, the model's own, or all of the plan's.
  std::vector<std::optional<std::size_t>> folds;
  const bool model_dir = !o.model.empty() && fs::is_directory(o.model);
  if (!plan) {
    if (model_dir) throw Error("a directory of fold checkpoints needs --split-plan");
    if (o.fold >= 0) throw Error("--fold needs --split-plan");
    folds.push_back(std::nullopt);
  } else if (o.fold >= 0) {
    folds.push_back(std::size_t(o.fold));
  } else if (!o.ctrl && !model_dir) {
    const TrainedModel m = load_checkpoint(o.model);
    if (!m.fold) throw Error("model has no fold; pass --fold");
    folds.push_back(std::size_t(*m.fold));
  } else {
    for (std::size_t k = 0; k < plan->fold_count(); ++k) folds.push_back(k);
  }
  if (!o.ctrl && o.model.empty()) throw Error("--model is required unless --ctrl is given");

  EvalReport report;
  report.split = plan ? std::string(split_mode_name(plan->mode)) : "all";
  report.config = c.config;
  report.folds.resize(folds.size());
  std::vector<std::string> labels(folds.size());
  parallel_for(folds.size(), o.jobs, [&](std::size_t i) {
    const auto& fold = folds[i];
    FoldData data;
    if (fold)
      data = materialize(*plan, *fold, corpus.instances);
    else
      data = {corpus.instances, corpus.instances};
    if (o.ctrl) {
      report.folds[i] = evaluate_ctrl(parse_head(o.head), data.train, data.test,
                                      o.seed + (fold ? *fold : 0), o.model_config.grid_size, eopts);
      labels[i] = "ctrl";
      return;
    }
    const std::string path =
        model_dir ? (fs::path(o.model) / ("fold-" + std::to_string(*fold) + ".json")).string()
                  : o.model;
    const TrainedModel m = load_checkpoint(path);
    if (fold && m.fold && *m.fold != int(*fold))
      throw Error("checkpoint '" + path + "' was trained on fold " + std::to_string(*m.fold) +
                  ", not fold " + std::to_string(*fold));
    report.folds[i] = evaluate(m, data.test, corpus.provenance, eopts);
    report.folds[i].n_train = data.train.size();
    labels[i] = method_label(m);
  });
  report.method = labels.front();
  if (o.ctrl) {
    std::string head = o.head;
    std::transform(head.begin(), head.end(), head.begin(), ::toupper);
    report.method = "ctrl_" + head;
  }
  write_report_table(c.out, report);
  if (!o.report.empty()) {
    std::ostringstream buf;
    write_report_json(buf, report);
    write_file(o.report, buf.str());
  }
}

// ---- predict -----------------------------------------------------------------------

void cmd_predict(const Context& c) {
  const Options& o = c.o;
  const TrainedModel m = load_checkpoint(o.model);
  std::vector<Query> queries;
  if (!o.query.empty()) {
    if (o.subject_box.empty()) throw Error("--query needs --subject-box");
    const Triplet t = parse_triplet(o.query);
    queries.push_back({t[0], t[1], t[2], parse_box(o.subject_box)});
  } else if (!o.corpus.empty()) {
    const Corpus corpus = load_corpus(o.corpus);
    check_provenance(m, corpus.provenance);
    std::vector<Instance> set = corpus.instances;
    if (!o.split_plan.empty()) {
      const SplitPlan plan = load_plan(o.split_plan, corpus);
      const int fold = o.fold >= 0 ? o.fold : m.fold.value_or(-1);
      if (fold < 0) throw Error("pass --fold to choose the test fold");
      set = materialize(plan, std::size_t(fold), corpus.instances).test;
    }
    for (const auto& inst : set) queries.push_back(Query::from_instance(inst));
  } else {
    throw Error("predict needs --query and --subject-box, or --corpus");
  }

  std::ostringstream buf;
  buf << json{{"meta", {{"config", c.config}, {"model_config", m.run_config}}}}.dump() << '\n';
  for (const auto& q : queries) {
    json line = {{"query", query_json(q)}, {"head", head_name(m.head)}};
    if (m.head == Head::reg) {
      const RegPrediction p = predict_reg(m, q);
      line["center"] = p.center;
      line["half"] = p.half;
    } else {
      const Grid g = predict_pix(m, q);
      json rows = json::array();
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        std::vector<double> row(std::size_t(g.cols()));
        for (Eigen::Index j = 0; j < g.cols(); ++j) row[std::size_t(j)] = g(i, j);
        rows.push_back(row);
      }
      line["grid"] = rows;
    }
    buf << line.dump() << '\n';
  }
  if (o.out.empty())
    c.out << buf.str();
  else
    write_file(o.out, buf.str());
}

// ---- render ------------------------------------------------------------------------

void cmd_render(const Context& c) {
  const Options& o = c.o;
  auto in = open_in(o.prediction_file);
  RenderStyle style;
  style.canvas = o.canvas;
  style.side_by_side_reflection = o.reflect;
  style.metadata = c.config;
  fs::create_directories(o.out);
  std::string line;
  std::size_t lineno = 0;
  std::size_t written = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw ParseError(o.prediction_file + ":" + std::to_string(lineno) + ": not JSON");
    if (j.contains("meta")) continue;
    try {
      const Query q = query_from_json(j.at("query"));
      std::optional<RegPrediction> box;
      std::optional<Grid> grid;
      if (j.contains("center")) {
        box = RegPrediction{j.at("center").get<std::array<double, 2>>(),
                            j.at("half").get<std::array<double, 2>>()};
      }
      if (j.contains("grid")) {
        const auto rows = j.at("grid").get<std::vector<std::vector<double>>>();
        Grid g(Eigen::Index(rows.size()), rows.empty() ? 0 : Eigen::Index(rows[0].size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (Eigen::Index(rows[i].size()) != g.cols()) throw ParseError("ragged grid");
          for (std::size_t k = 0; k < rows[i].size(); ++k) g(Eigen::Index(i), Eigen::Index(k)) = rows[i][k];
        }
        grid = std::move(g);
      }
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.svg", written);
      write_file((fs::path(o.out) / name).string(), render_scene(Scene(q, box, grid), style));
      ++written;
    } catch (const json::exception& e) {
      throw ParseError(o.prediction_file + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.note("rendered " + std::to_string(written) + " scene(s) into " + o.out);
}

// ---- weights -----------------------------------------------------------------------

void cmd_weights(const Context& c) {
  const Options& o = c.o;
  const Corpus corpus = load_corpus(o.corpus);
  const Vocabularies vocabs = build_vocabs(corpus.instances);
  std::vector<Instance> train_set = corpus.instances;
  if (!o.split_plan.empty()) {
    if (o.fold < 0) throw Error("--split-plan needs --fold");
    train_set = materialize(load_plan(o.split_plan, corpus), std::size_t(o.fold), corpus.instances)
                    .train;
  }
  ModelConfig cfg = o.model_config;
  cfg.seed = o.seed;
  const DenseParams linear =
      fit_linear_interpreter(train_set, vocabs, parse_variant(o.emb), cfg);

  const char* dims[] = {"center_x", "center_y", "half_w", "half_h"};
  for (int d = 0; d < 4; ++d) {
    for (Role role : {Role::subject, Role::relation, Role::object}) {
      for (RankOrder order : {RankOrder::largest, RankOrder::smallest}) {
        c.out << dims[d] << " " << role_name(role) << " "
              << (order == RankOrder::largest ? "top" : "bottom") << ":";
        for (const auto& [token, w] : rank_weights(linear, vocabs, d, role, o.top_k, order)) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.3f", w);
          c.out << "  " << token << " " << buf;
        }
        c.out << '\n';
      }
    }
  }
  if (o.csv.empty()) return;
  std::ostringstream csv;
  std::istringstream cfg_lines(c.config);
  for (std::string l; std::getline(cfg_lines, l);) csv << "# " << l << '\n';
  csv << "role,token,index,dim,weight,abs_weight\n";
  const auto& w = linear.layers.front().weights;
  for (Role role : {Role::subject, Role::relation, Role::object}) {
    const Vocabulary& v = role == Role::subject    ? vocabs.subjects
                          : role == Role::relation ? vocabs.relations
                                                   : vocabs.objects;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto col = Eigen::Index(concat_index(vocabs, role, i));
      for (int d = 0; d < 4; ++d) {
        json token = v.token(i);
        csv << role_name(role) << ',' << token.dump() << ',' << col << ',' << dims[d] << ','
            << json(w(d, col)).dump() << ',' << json(std::abs(w(d, col))).dump() << '\n';
      }
    }
  }
  write_file(o.csv, csv.str());
}

// ---- wiring ------------------------------------------------------------------------

void add_model_options(CLI::App* sub, Options& o) {
  option(sub, "epochs", o.model_config.epochs, "Training epochs");
  option(sub, "batch", o.model_config.batch_size, "Mini-batch size");
  option(sub, "lr", o.model_config.learning_rate, "RMSprop learning rate");
  option(sub, "rms-decay", o.model_config.rms_decay, "RMSprop decay");
  option(sub, "rms-epsilon", o.model_config.rms_epsilon, "RMSprop epsilon");
  option(sub, "hidden", o.model_config.hidden, "Hidden layer widths")->delimiter(',');
  option(sub, "grid-size", o.model_config.grid_size, "PIX grid side M");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Spatial templates: predict where an object sits relative to a subject.", "spt"};
  app.config_formatter(std::make_shared<JsonOrTomlConfig>());
  app.set_config("--config", "", "Read options from a key=value or JSON file");
  app.require_subcommand(1, 1);
  app.fallthrough();
  option(&app, "jobs", o.jobs, "Worker threads for per-fold work")->check(CLI::PositiveNumber);
  flag(&app, "quiet", o.quiet, "Suppress progress messages");

  auto* ingest = app.add_subcommand("ingest", "Parse, filter and preprocess annotations");
  option(ingest, "input", o.input, "Relationships file")->required();
  option(ingest, "format", o.format, "vg or jsonl");
  option(ingest, "image-data", o.image_data, "Image metadata file (vg format)");
  option(ingest, "stoplist", o.stoplist, "Explicit-preposition list (default: built in)");
  flag(ingest, "strict", o.strict, "Abort on the first malformed record");
  option(ingest, "subset", o.subset, "implicit, explicit or all");
  option(ingest, "vectors", o.vectors, "Drop instances without a vector in this file");
  option(ingest, "dim", o.dim, "Vector dimension");
  option(ingest, "out", o.out, "Corpus JSONL to write")->required();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus from template rules");
  option(synth, "rules", o.rules, "default8 or a JSON rules file");
  option(synth, "n", o.n, "Number of instances");
  option(synth, "noise", o.noise, "Gaussian noise on object centers");
  option(synth, "seed", o.seed, "Random seed");
  option(synth, "out", o.out, "Corpus JSONL to write")->required();

  auto* split = app.add_subcommand("split", "Build a cross-validation or generalization split");
  option(split, "corpus", o.corpus, "Corpus JSONL")->required();
  option(split, "mode", o.mode, "cv, gen-triplets or gen-words");
  option(split, "k", o.k, "Number of CV folds");
  option(split, "seed", o.seed, "Random seed");
  option(split, "words-file", o.words_file, "Held-out words, one per line (gen-words)");
  option(split, "n-pick", o.n_pick, "Triplets to hold out (gen-triplets)");
  option(split, "top-m", o.top_m, "Most frequent triplets to pick from (gen-triplets)");
  option(split, "triplet", o.triplets, "Explicit held-out triplet 's,r,o' (repeatable)");
  option(split, "out", o.out, "Split plan JSON to write")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a REG or PIX model");
  option(train_cmd, "corpus", o.corpus, "Corpus JSONL")->required();
  option(train_cmd, "head", o.head, "reg or pix");
  option(train_cmd, "emb", o.emb, "emb, rnd or 1h");
  option(train_cmd, "vectors", o.vectors, "Pretrained vector file (plain or gzip)");
  option(train_cmd, "dim", o.dim, "Pretrained vector dimension");
  option(train_cmd, "split-plan", o.split_plan, "Split plan JSON");
  option(train_cmd, "fold", o.fold, "Fold to train on (default: every fold)");
  option(train_cmd, "seed", o.seed, "Random seed");
  add_model_options(train_cmd, o);
  flag(train_cmd, "no-subject-size", o.no_subject_size, "Do not feed the subject size");
  option(train_cmd, "out", o.out, "Checkpoint file, or directory when training every fold")
      ->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model or the control baseline");
  option(eval_cmd, "corpus", o.corpus, "Corpus JSONL")->required();
  option(eval_cmd, "model", o.model, "Checkpoint file or directory of fold checkpoints");
  option(eval_cmd, "split-plan", o.split_plan, "Split plan JSON");
  option(eval_cmd, "fold", o.fold, "Fold to evaluate");
  flag(eval_cmd, "ctrl", o.ctrl, "Score the random control baseline");
  option(eval_cmd, "head", o.head, "Head of the control baseline");
  option(eval_cmd, "grid-size", o.model_config.grid_size, "Grid side of the control baseline");
  option(eval_cmd, "seed", o.seed, "Random seed of the control baseline");
  option(eval_cmd, "r2", o.r2, "uniform or variance");
  option(eval_cmd, "macro", o.macro, "balanced or per-class");
  option(eval_cmd, "sweep", o.sweep, "grid or exact mIoU thresholds");
  option(eval_cmd, "report", o.report, "Report JSON to write");

  auto* predict_cmd = app.add_subcommand("predict", "Predict templates for queries");
  option(predict_cmd, "model", o.model, "Checkpoint file")->required();
  option(predict_cmd, "query", o.query, "Triplet 's,r,o'");
  option(predict_cmd, "subject-box", o.subject_box, "Subject box 'cx,cy,hw,hh' in [0,1]");
  option(predict_cmd, "corpus", o.corpus, "Predict every instance of a corpus");
  option(predict_cmd, "split-plan", o.split_plan, "Restrict to a test fold");
  option(predict_cmd, "fold", o.fold, "Fold of the split plan");
  option(predict_cmd, "out", o.out, "Prediction JSONL to write (default: stdout)");

  auto* render_cmd = app.add_subcommand("render", "Render predictions as SVG");
  option(render_cmd, "prediction-file", o.prediction_file, "Prediction JSONL")->required();
  option(render_cmd, "canvas", o.canvas, "Canvas side in device units");
  flag(render_cmd, "reflect", o.reflect, "Also draw the horizontal reflection");
  option(render_cmd, "out", o.out, "Output directory")->required();

  auto* weights = app.add_subcommand("weights", "Fit the linear interpreter and rank words");
  option(weights, "corpus", o.corpus, "Corpus JSONL")->required();
  option(weights, "emb", o.emb, "Embedding variant (must be 1h)");
  option(weights, "split-plan", o.split_plan, "Split plan JSON");
  option(weights, "fold", o.fold, "Fold whose training part is used");
  option(weights, "seed", o.seed, "Random seed");
  add_model_options(weights, o);
  option(weights, "top-k", o.top_k, "Words listed per ranking");
  option(weights, "csv", o.csv, "Per-token weight CSV to write");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  const std::map<CLI::App*, void (*)(const Context&)> handlers = {
      {ingest, cmd_ingest},       {synth, cmd_synth},     {split, cmd_split},
      {train_cmd, cmd_train},     {eval_cmd, cmd_eval},   {predict_cmd, cmd_predict},
      {render_cmd, cmd_render},   {weights, cmd_weights},
  };
  CLI::App* chosen = app.get_subcommands().front();
  Context ctx{o, out, err, resolved_config(chosen)};
  try {
    handlers.at(chosen)(ctx);
  } catch (const std::exception& e) {
    err << "spt " << chosen->get_name() << ": error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace spt::cli
