// crisisrag command-line driver.
//
// Every subcommand reads an optional JSON config (--config) and lets flags
// override individual fields. Exit codes: 0 ok, 2 input or validation error,
// 3 backend failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <unordered_map>

#include "crisisrag/crisisrag.hpp"
#include "crisisrag/remote.hpp"

namespace fs = std::filesystem;
using namespace crisisrag;
using json = nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitBackend = 3;

/// Effective configuration. Field names match the config-file keys.
struct Settings {
  json doc = json::object();

  template <class T>
  T get(const std::string& pointer, T fallback) const {
    const json::json_pointer p(pointer);
    return doc.contains(p) && !doc[p].is_null() ? doc[p].get<T>() : fallback;
  }
  bool has(const std::string& pointer) const { return doc.contains(json::json_pointer(pointer)); }
  template <class T>
  void set(const std::string& pointer, const T& value) {
    doc[json::json_pointer(pointer)] = value;
  }

  std::uint64_t seed() const { return get<std::uint64_t>("/seed", 0); }

  std::string hash() const {
    const auto text = doc.dump();
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(text.data(), text.size());
    return s.str();
  }

  json provenance() const { return {{"seed", seed()}, {"config_hash", hash()}}; }
};

Settings load_settings(const std::string& path) {
  Settings s;
  if (path.empty()) return s;
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open config " + path);
  s.doc = json::parse(in, nullptr, false);
  if (s.doc.is_discarded() || !s.doc.is_object()) throw Error(Errc::InvalidConfig, path + " is not a JSON object");
  return s;
}

/// Binds a flag that, when given, overrides the config field at `pointer`.
template <class T>
struct Override {
  std::string pointer;
  T value{};
  CLI::Option* opt = nullptr;
};

class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    auto ov = std::make_shared<Override<T>>();
    ov->pointer = pointer;
    ov->opt = app->add_option(flag, ov->value, help);
    apply_.push_back([ov](Settings& s) {
      if (ov->opt->count() > 0) s.set(ov->pointer, ov->value);
    });
    return ov->opt;
  }
  CLI::Option* add_flag(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    auto ov = std::make_shared<Override<bool>>();
    ov->pointer = pointer;
    ov->opt = app->add_flag(flag, ov->value, help);
    apply_.push_back([ov](Settings& s) {
      if (ov->opt->count() > 0) s.set(ov->pointer, true);
    });
    return ov->opt;
  }
  void apply(Settings& s) const {
    for (const auto& f : apply_) f(s);
  }

 private:
  std::vector<std::function<void(Settings&)>> apply_;
};

std::string require_path(const Settings& s, const std::string& pointer, const std::string& what) {
  auto p = s.get<std::string>(pointer, "");
  if (p.empty()) throw Error(Errc::InvalidConfig, what + " is required (" + pointer.substr(1) + ")");
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

std::unique_ptr<Embedder> make_embedder(const Settings& s) {
  const auto kind = s.get<std::string>("/embedder/kind", "hashed");
  const auto dim = s.get<std::size_t>("/embedder/dim", kDefaultEmbeddingDim);
  if (kind == "hashed") return std::make_unique<HashedEmbedder>(dim);
  if (kind == "http") return std::make_unique<HttpEmbedder>(HttpEmbedder::from_env(dim));
  throw Error(Errc::InvalidConfig, "unknown embedder kind '" + kind + "' (hashed or http)");
}

/// Base embedder optionally wrapped by a trained adapter.
struct EmbedderStack {
  std::unique_ptr<Embedder> base;
  std::optional<LinearAdapter> adapter;
  std::unique_ptr<Embedder> adapted;

  const Embedder& get() const { return adapted ? *adapted : *base; }
};

EmbedderStack make_embedder_stack(const Settings& s) {
  EmbedderStack st;
  st.base = make_embedder(s);
  const auto adapter_path = s.get<std::string>("/paths/adapter", "");
  if (!adapter_path.empty()) {
    st.adapter = LinearAdapter::load(adapter_path);
    st.adapted = std::make_unique<AdaptedEmbedder>(*st.base, *st.adapter);
  }
  return st;
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

int cmd_preprocess(const Settings& s) {
  const fs::path raw = require_path(s, "/paths/raw_dir", "--raw-dir");
  const fs::path out = require_path(s, "/paths/output", "--out-dir");
  if (!fs::is_directory(raw)) throw Error(Errc::Io, "raw directory not found: " + raw.string());

  std::unordered_map<std::string, std::string> texts;
  std::vector<fs::path> text_files;
  for (const auto& entry : fs::directory_iterator(raw)) {
    if (!entry.is_directory() || entry.path().filename().string().rfind("events_set", 0) != 0) continue;
    for (const auto& f : fs::recursive_directory_iterator(entry.path()))
      if (f.is_regular_file() && f.path().extension() == ".tsv") text_files.push_back(f.path());
  }
  std::sort(text_files.begin(), text_files.end());
  if (text_files.empty()) throw Error(Errc::Io, "no event text files under " + raw.string() + "/events_set*");
  for (const auto& f : text_files) parse_text_tsv(f, texts);

  Corpus all;
  nlohmann::ordered_json orphans;
  fs::create_directories(out);
  for (auto split : {Split::Train, Split::Dev, Split::Test}) {
    const auto name = std::string(to_string(split));
    const fs::path label_file = raw / "all_combined" / ("all_" + name + ".tsv");
    if (!fs::exists(label_file)) throw Error(Errc::Io, "missing label file " + label_file.string());
    auto joined = join_records(parse_label_tsv(label_file), texts, split);
    write_jsonl(out / (name + ".jsonl"), joined.records);
    orphans[name] = joined.orphan_ids.size();
    if (!joined.orphan_ids.empty())
      std::cerr << "warning: " << joined.orphan_ids.size() << " " << name << " label(s) without text, first id "
                << joined.orphan_ids.front() << "\n";
    all.insert(all.end(), joined.records.begin(), joined.records.end());
  }
  auto stats = compute_stats(all);
  auto j = to_json(stats);
  j["orphans"] = orphans;
  j["provenance"] = s.provenance();
  write_json(out / "stats.json", j);
  std::cout << "records " << stats.total << " (train " << stats.split_totals[0] << ", dev " << stats.split_totals[1]
            << ", test " << stats.split_totals[2] << "), imbalance " << std::fixed << std::setprecision(2)
            << stats.imbalance_ratio << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

int cmd_index(const Settings& s) {
  const auto corpus_path = require_path(s, "/paths/corpus", "--corpus");
  const fs::path prefix = require_path(s, "/paths/index", "--out");
  auto corpus = read_jsonl(corpus_path, Split::Train);
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, corpus_path + " has no records");
  const bool enriched = s.get<bool>("/index/enriched", false);
  auto stack = make_embedder_stack(s);
  auto index = VectorIndex::build(corpus, stack.get(), enriched);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  index.save(prefix);

  double worst = 0.0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    double sq = 0.0;
    for (float x : index.vector(i)) sq += static_cast<double>(x) * x;
    worst = std::max(worst, std::abs(std::sqrt(sq) - 1.0));
  }
  nlohmann::ordered_json meta;
  meta["entries"] = index.size();
  meta["dimension"] = index.dimension();
  meta["enriched"] = enriched;
  meta["max_norm_deviation"] = worst;
  meta["provenance"] = s.provenance();
  write_json(prefix.string() + ".run.json", meta);
  std::cout << "indexed " << index.size() << " entries, dimension " << index.dimension()
            << (enriched ? ", label-enriched" : "") << ", max |norm-1| " << std::scientific << std::setprecision(2)
            << worst << (worst <= kUnitNormTolerance ? " (ok)" : " (FAILED)") << "\n";
  return worst <= kUnitNormTolerance ? 0 : kExitInput;
}

// ---------------------------------------------------------------------------
// train-adapter
// ---------------------------------------------------------------------------

int cmd_train_adapter(const Settings& s) {
  const auto corpus_path = require_path(s, "/paths/corpus", "--corpus");
  const fs::path out = require_path(s, "/paths/adapter_out", "--out");
  auto corpus = read_jsonl(corpus_path, Split::Train);
  std::vector<LabeledText> texts;
  for (const auto& r : corpus) texts.push_back({r.tweet, r.label});
  auto pairs = make_pairs(texts, s.seed());

  auto embedder = make_embedder(s);
  std::vector<std::string> raw;
  for (const auto& t : texts) raw.push_back(t.text);
  const auto base = embedder->embed(raw);
  const auto embedded = embed_pairs(pairs, base);

  AdapterTrainingConfig cfg;
  cfg.steps = s.get<std::size_t>("/adapter/steps", 200);
  cfg.learning_rate = s.get<double>("/adapter/learning_rate", 0.05);
  cfg.batch_size = s.get<std::size_t>("/adapter/batch_size", 0);
  cfg.seed = s.seed();
  if (s.has("/adapter/epochs"))
    cfg = AdapterTrainingConfig::for_epochs(embedded.size(), s.get<std::size_t>("/adapter/epochs", 2),
                                            cfg.batch_size == 0 ? 32 : cfg.batch_size, cfg.learning_rate, cfg.seed);
  auto result = train_adapter(embedded, cfg);

  std::vector<HumanitarianLabel> labels;
  for (const auto& t : texts) labels.push_back(t.label);
  std::vector<Vector> adapted;
  for (const auto& v : base) adapted.push_back(result.adapter.apply(v));
  const auto before = cluster_metrics<HumanitarianLabel>(base, labels);
  const auto after = cluster_metrics<HumanitarianLabel>(adapted, labels);

  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  auto j = result.adapter.to_json();
  j["provenance"] = s.provenance();
  write_text(out, j.dump() + "\n");
  auto metrics_json = [](const ClusterMetrics& m) {
    return json{{"mean_intra", m.mean_intra},
                {"mean_inter", m.mean_inter},
                {"separation_ratio", m.separation_ratio ? json(*m.separation_ratio) : json(nullptr)},
                {"silhouette", m.silhouette}};
  };
  json report{{"pairs", pairs.size()},
              {"steps", cfg.steps},
              {"initial_loss", result.initial_loss},
              {"final_loss", result.final_loss},
              {"loss_trace", result.loss_trace},
              {"before", metrics_json(before)},
              {"after", metrics_json(after)},
              {"provenance", s.provenance()}};
  write_text(out.string() + ".report.json", report.dump(2) + "\n");
  std::cout << std::setprecision(4) << "pairs " << pairs.size() << ", loss " << result.initial_loss << " -> "
            << result.final_loss << ", R " << before.separation_ratio.value_or(0.0) << " -> "
            << after.separation_ratio.value_or(0.0) << ", silhouette " << before.silhouette << " -> "
            << after.silhouette << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

StrategyConfig strategy_config(const Settings& s) {
  StrategyConfig c;
  c.mode = parse_strategy_mode(s.get<std::string>("/strategy/mode", "zero_shot"));
  c.k = s.get<std::size_t>("/strategy/k", c.k);
  c.tau = s.get<double>("/strategy/tau", c.tau);
  c.max_context_tokens = s.get<std::size_t>("/strategy/max_context_tokens", c.max_context_tokens);
  c.candidate_pool = s.get<std::size_t>("/strategy/candidate_pool", c.candidate_pool);
  if (s.has("/strategy/fallback_confidence")) c.fallback_confidence = s.get<double>("/strategy/fallback_confidence", 1.0);
  c.decoding.temperature = s.get<double>("/decoding/temperature", c.decoding.temperature);
  c.decoding.top_p = s.get<double>("/decoding/top_p", c.decoding.top_p);
  c.decoding.max_tokens = s.get<int>("/decoding/max_tokens", c.decoding.max_tokens);
  c.validate();
  return c;
}

std::set<std::string> existing_ids(const fs::path& path) {
  std::set<std::string> ids;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    auto j = json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("tweet_id")) ids.insert(j["tweet_id"].get<std::string>());
  }
  return ids;
}

int cmd_classify(const Settings& s) {
  const auto input_path = require_path(s, "/paths/input", "--input");
  const fs::path out_path = require_path(s, "/paths/output", "--out");
  const auto config = strategy_config(s);
  auto records = read_jsonl(input_path, Split::Test);

  const bool skip_existing = s.get<bool>("/skip_existing", false);
  Corpus todo;
  if (skip_existing && fs::exists(out_path)) {
    const auto done = existing_ids(out_path);
    for (const auto& r : records)
      if (!done.count(r.tweet_id)) todo.push_back(r);
    std::cerr << "skipping " << records.size() - todo.size() << " already classified\n";
  } else {
    todo = records;
  }

  std::unique_ptr<ChatBackend> backend;
  const auto script = s.get<std::string>("/mock_script", "");
  if (!script.empty())
    backend = std::make_unique<ScriptedBackend>(ScriptedBackend::load_script(script));
  else
    backend = std::make_unique<HttpChatBackend>(HttpChatBackend::config_from_env());

  Classifier classifier(*backend, config);

  // Retrieval for the RAG modes.
  EmbedderStack stack;
  VectorIndex index;
  if (is_rag(config.mode)) {
    stack = make_embedder_stack(s);
    index = VectorIndex::load(require_path(s, "/paths/index", "--index"));
    classifier.set_retrieval(index, stack.get());
  }

  // Demonstrations for few-shot.
  Corpus train;
  TfidfModel tfidf;
  if (config.mode == StrategyMode::FewShot) {
    const auto shot_kind = s.get<std::string>("/shots/strategy", "static");
    const auto k = s.get<std::size_t>("/shots/k", 10);
    DemonstrationSource src;
    src.k = k;
    if (shot_kind == "manual") {
      src.fixed = load_demonstrations(require_path(s, "/paths/demos", "--demos"));
    } else {
      train = read_jsonl(require_path(s, "/paths/train", "--train"), Split::Train);
      if (shot_kind == "static") {
        src.fixed = select_static_stratified(train, k, s.get<std::uint64_t>("/shots/seed", s.seed()));
      } else if (shot_kind == "dynamic") {
        tfidf = fit_tfidf(train);
        src.pool = &train;
        src.tfidf = &tfidf;
      } else {
        throw Error(Errc::InvalidConfig, "unknown shot strategy '" + shot_kind + "' (manual, static, dynamic)");
      }
    }
    classifier.set_demonstrations(std::move(src));
  }

  std::vector<std::string> tweets;
  for (const auto& r : todo) tweets.push_back(r.tweet);
  const auto batch = classify_batch(classifier, tweets, s.get<std::size_t>("/max_in_flight", 8));

  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream out(out_path, skip_existing ? std::ios::app : std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + out_path.string());
  const auto prov = s.provenance();
  for (std::size_t i = 0; i < batch.results.size(); ++i) {
    nlohmann::ordered_json line;
    line["tweet_id"] = todo[i].tweet_id;
    const auto outcome = to_json(batch.results[i]);
    for (auto& [k, v] : outcome.items()) line[k] = v;
    line["mode"] = kStrategyModeNames[static_cast<std::size_t>(config.mode)];
    line["provenance"] = prov;
    out << line.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace) << '\n';
  }
  out.flush();

  std::cout << "classified " << batch.results.size() << "/" << todo.size() << ", trigger rate " << std::fixed
            << std::setprecision(4) << trigger_rate(batch.results) << "\n";
  if (batch.failure) {
    std::cerr << "error: backend failed at input " << *batch.failed_index << ": " << batch.failure->what()
              << "\npartial results written; rerun with --skip-existing to resume\n";
    return kExitBackend;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int cmd_evaluate(const Settings& s) {
  const auto outcomes_path = require_path(s, "/paths/outcomes", "--outcomes");
  const auto gold_path = require_path(s, "/paths/gold", "--gold");
  const fs::path out = require_path(s, "/paths/output", "--out-dir");

  std::unordered_map<std::string, GoldLabel> gold_by_id;
  for (const auto& r : read_jsonl(gold_path, Split::Test)) gold_by_id[r.tweet_id] = {r.label, r.event_type};

  std::vector<GoldLabel> golds;
  std::vector<ParseResult> preds;
  std::ifstream in(outcomes_path);
  if (!in) throw Error(Errc::Io, "cannot open " + outcomes_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = json::parse(line, nullptr, false);
    const auto where = outcomes_path + ":" + std::to_string(lineno);
    if (j.is_discarded() || !j.is_object() || !j.contains("tweet_id"))
      throw Error(Errc::MalformedRecord, where + ": expected an outcome with tweet_id");
    const auto id = j["tweet_id"].get<std::string>();
    auto it = gold_by_id.find(id);
    if (it == gold_by_id.end()) throw Error(Errc::MalformedRecord, where + ": tweet " + id + " not in gold corpus");
    golds.push_back(it->second);
    preds.push_back(prediction_from_json(j));
  }
  auto report = score(golds, preds);

  fs::create_directories(out);
  auto rj = to_json(report);
  rj["provenance"] = s.provenance();
  write_json(out / "report.json", rj);
  write_text(out / "confusion.csv", confusion_csv(report));

  std::optional<HumanitarianLabel> focus;
  if (auto f = s.get<std::string>("/evaluate/focus", ""); !f.empty()) focus = parse_humanitarian(f);
  auto pairs = top_confusion_pairs(report, s.get<std::size_t>("/evaluate/top_pairs", 15), focus);
  write_json(out / "pairs.json", to_json(pairs));

  std::cout << std::fixed << std::setprecision(4) << "n " << report.n << ", accuracy_h " << report.accuracy_h()
            << ", accuracy_e " << report.accuracy_e() << ", macro_f1 " << report.humanitarian.macro_f1
            << ", weighted_f1 " << report.humanitarian.weighted_f1 << ", parse failures " << report.parse_failures
            << "\n";

  if (auto relabel_path = s.get<std::string>("/paths/relabels", ""); !relabel_path.empty()) {
    auto relabels = load_relabels(relabel_path);
    auto ceiling = correction_ceiling(report, relabels);
    auto cj = to_json(ceiling);
    if (s.has("/evaluate/oracle_cost")) {
      const double cost = s.get<double>("/evaluate/oracle_cost", 0.0);
      cj["cost"] = cost;
      cj["cost_per_point"] = ceiling.delta > 0 ? json(cost_per_point(cost, ceiling.delta * 100)) : json(nullptr);
    }
    cj["provenance"] = s.provenance();
    write_json(out / "ceiling.json", cj);
    std::cout << "ceiling " << ceiling.base_accuracy << " -> " << ceiling.ceiling_accuracy << " (+"
              << ceiling.delta * 100 << " points, " << ceiling.total_corrected << " corrections)\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// plan-lora
// ---------------------------------------------------------------------------

int cmd_plan_lora(const Settings& s) {
  ModelDims dims;
  dims.hidden = s.get<std::uint64_t>("/lora/hidden", dims.hidden);
  dims.intermediate = s.get<std::uint64_t>("/lora/intermediate", dims.intermediate);
  dims.kv_dim = s.get<std::uint64_t>("/lora/kv_dim", dims.kv_dim);
  dims.layers = s.get<std::uint64_t>("/lora/layers", dims.layers);
  dims.total_params = s.get<std::uint64_t>("/lora/total_params", dims.total_params);
  LoraConfig cfg;
  cfg.rank = s.get<std::uint64_t>("/lora/rank", cfg.rank);
  cfg.alpha = s.get<double>("/lora/alpha", cfg.alpha);
  if (s.has("/lora/targets")) {
    cfg.targets.clear();
    for (const auto& t : s.get<std::vector<std::string>>("/lora/targets", {})) cfg.targets.insert(parse_lora_target(t));
  }
  auto plan = count_params(dims, cfg);
  auto j = to_json(plan, dims, cfg);
  j["provenance"] = s.provenance();
  if (auto out = s.get<std::string>("/paths/output", ""); !out.empty()) write_json(out, j);
  std::cout << "trainable " << plan.trainable << " of " << dims.total_params << " (" << std::fixed
            << std::setprecision(2) << plan.ratio * 100 << "%), r=" << cfg.rank << " alpha=" << cfg.alpha << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disaster tweet classification pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its fields");
  Overrides ov;
  ov.add<std::uint64_t>(&app, "--seed", "/seed", "Seed for every sampling decision");

  auto* pre = app.add_subcommand("preprocess", "Join raw TSV files into JSONL splits and statistics");
  ov.add<std::string>(pre, "--raw-dir", "/paths/raw_dir", "Directory with all_combined/ and events_set*/");
  ov.add<std::string>(pre, "--out-dir", "/paths/output", "Output directory");

  auto* idx = app.add_subcommand("index", "Embed a corpus into a vector index");
  ov.add<std::string>(idx, "--corpus", "/paths/corpus", "Training JSONL");
  ov.add<std::string>(idx, "--out", "/paths/index", "Index path prefix");
  ov.add_flag(idx, "--enriched", "/index/enriched", "Embed 'Label: <label>. Tweet: <tweet>'");
  ov.add<std::string>(idx, "--embedder", "/embedder/kind", "hashed or http");
  ov.add<std::size_t>(idx, "--dim", "/embedder/dim", "Embedding dimension");
  ov.add<std::string>(idx, "--adapter", "/paths/adapter", "Trained adapter JSON applied after embedding");

  auto* tr = app.add_subcommand("train-adapter", "Train the linear contrastive adapter");
  ov.add<std::string>(tr, "--corpus", "/paths/corpus", "Training JSONL");
  ov.add<std::string>(tr, "--out", "/paths/adapter_out", "Adapter JSON to write");
  ov.add<std::string>(tr, "--embedder", "/embedder/kind", "hashed or http");
  ov.add<std::size_t>(tr, "--dim", "/embedder/dim", "Embedding dimension");
  ov.add<std::size_t>(tr, "--steps", "/adapter/steps", "Gradient steps");
  ov.add<std::size_t>(tr, "--epochs", "/adapter/epochs", "Epochs (overrides --steps)");
  ov.add<double>(tr, "--lr", "/adapter/learning_rate", "Learning rate");
  ov.add<std::size_t>(tr, "--batch", "/adapter/batch_size", "Mini-batch size, 0 for full batch");

  auto* cl = app.add_subcommand("classify", "Classify tweets with one strategy");
  ov.add<std::string>(cl, "--input", "/paths/input", "JSONL of tweets to classify");
  ov.add<std::string>(cl, "--out", "/paths/output", "Outcomes JSONL");
  ov.add<std::string>(cl, "--strategy", "/strategy/mode", "zero_shot, few_shot, rag_standard, rag_adaptive, rag_hybrid");
  ov.add<std::size_t>(cl, "--k", "/strategy/k", "Neighbors per RAG prompt");
  ov.add<double>(cl, "--tau", "/strategy/tau", "Adaptive confidence threshold");
  ov.add<std::size_t>(cl, "--max-context-tokens", "/strategy/max_context_tokens", "Prompt budget");
  ov.add<std::size_t>(cl, "--candidate-pool", "/strategy/candidate_pool", "Neighbors retrieved before reranking");
  ov.add<double>(cl, "--fallback-confidence", "/strategy/fallback_confidence", "Confidence when logprobs are absent");
  ov.add<std::string>(cl, "--index", "/paths/index", "Index path prefix (RAG modes)");
  ov.add<std::string>(cl, "--embedder", "/embedder/kind", "hashed or http");
  ov.add<std::size_t>(cl, "--dim", "/embedder/dim", "Embedding dimension");
  ov.add<std::string>(cl, "--adapter", "/paths/adapter", "Trained adapter JSON");
  ov.add<std::string>(cl, "--shots", "/shots/strategy", "manual, static or dynamic (few_shot)");
  ov.add<std::size_t>(cl, "--shots-k", "/shots/k", "Demonstrations per prompt (few_shot)");
  ov.add<std::string>(cl, "--train", "/paths/train", "Training JSONL for static or dynamic shots");
  ov.add<std::string>(cl, "--demos", "/paths/demos", "Manual demonstrations JSONL");
  ov.add<std::string>(cl, "--mock-script", "/mock_script", "Scripted completions JSONL instead of the HTTP backend");
  ov.add<std::size_t>(cl, "--max-in-flight", "/max_in_flight", "Concurrent requests");
  ov.add_flag(cl, "--skip-existing", "/skip_existing", "Append only tweets missing from --out");

  auto* ev = app.add_subcommand("evaluate", "Score outcomes against gold labels");
  ov.add<std::string>(ev, "--outcomes", "/paths/outcomes", "Outcomes JSONL from classify");
  ov.add<std::string>(ev, "--gold", "/paths/gold", "Gold JSONL corpus");
  ov.add<std::string>(ev, "--out-dir", "/paths/output", "Directory for report.json, confusion.csv, pairs.json");
  ov.add<std::string>(ev, "--relabels", "/paths/relabels", "Oracle relabels JSONL for the correction ceiling");
  ov.add<std::size_t>(ev, "--top-pairs", "/evaluate/top_pairs", "Confusion pairs to list");
  ov.add<std::string>(ev, "--focus", "/evaluate/focus", "Label to flag in the pair list");
  ov.add<double>(ev, "--oracle-cost", "/evaluate/oracle_cost", "Cost of the relabelling, for cost per point");

  auto* pl = app.add_subcommand("plan-lora", "Count LoRA trainable parameters");
  ov.add<std::uint64_t>(pl, "--hidden", "/lora/hidden", "Hidden size");
  ov.add<std::uint64_t>(pl, "--intermediate", "/lora/intermediate", "MLP intermediate size");
  ov.add<std::uint64_t>(pl, "--kv-dim", "/lora/kv_dim", "Key/value projection width");
  ov.add<std::uint64_t>(pl, "--layers", "/lora/layers", "Decoder layers");
  ov.add<std::uint64_t>(pl, "--total-params", "/lora/total_params", "Base model parameter count");
  ov.add<std::uint64_t>(pl, "--rank", "/lora/rank", "LoRA rank r");
  ov.add<double>(pl, "--alpha", "/lora/alpha", "LoRA alpha");
  ov.add<std::vector<std::string>>(pl, "--targets", "/lora/targets", "Target projections (q_proj ... or q ...)");
  ov.add<std::string>(pl, "--out", "/paths/output", "Plan JSON to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    auto settings = load_settings(config_path);
    ov.apply(settings);
    if (*pre) return cmd_preprocess(settings);
    if (*idx) return cmd_index(settings);
    if (*tr) return cmd_train_adapter(settings);
    if (*cl) return cmd_classify(settings);
    if (*ev) return cmd_evaluate(settings);
    if (*pl) return cmd_plan_lora(settings);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_backend_error(e.code()) ? kExitBackend : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
