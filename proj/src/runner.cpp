#include "ficl/runner.hpp"

#include "ficl/templates.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"

#ifndef FICL_VERSION
#define FICL_VERSION "0.1.0"
#endif

namespace ficl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string sanitize_name(const std::string& name) {
  std::string out;
  for (char c : name)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

std::string format_double_cfg(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = to_lower(trim(value));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(Errc::InvalidConfig, "key '" + key + "': expected boolean, got '" + value + "'");
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    long long v = std::stoll(trim(value), &used);
    if (used != trim(value).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::InvalidConfig, "key '" + key + "': expected integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(trim(value), &used);
    if (used != trim(value).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::InvalidConfig, "key '" + key + "': expected number, got '" + value + "'");
  }
}

std::vector<uint64_t> parse_seed_list(const std::string& key, std::string value) {
  std::string v = trim(value);
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<uint64_t> seeds;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    seeds.push_back(static_cast<uint64_t>(parse_int(key, item)));
  }
  if (seeds.empty()) throw Error(Errc::InvalidConfig, "key '" + key + "': empty seed list");
  return seeds;
}

std::string seeds_to_string(const std::vector<uint64_t>& seeds) {
  std::string out;
  for (size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(seeds[i]);
  }
  return out;
}

std::string unquote(std::string v) {
  v = trim(v);
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') ||
                        (v.front() == '\'' && v.back() == '\'')))
    return v.substr(1, v.size() - 2);
  return v;
}

std::string iso_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

ExperimentConfig ExperimentConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::InvalidConfig,
                  path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = stripped.substr(eq + 1);
    // strip trailing comments outside quotes
    bool in_quote = false;
    char quote = 0;
    for (size_t i = 0; i < value.size(); ++i) {
      char c = value[i];
      if (in_quote) {
        if (c == quote) in_quote = false;
      } else if (c == '"' || c == '\'') {
        in_quote = true;
        quote = c;
      } else if (c == '#') {
        value = value.substr(0, i);
        break;
      }
    }
    kv[key] = unquote(value);
  }
  return from_map(kv);
}

ExperimentConfig ExperimentConfig::from_map(const std::map<std::string, std::string>& kv) {
  ExperimentConfig config;
  config.apply(kv);
  return config;
}

void ExperimentConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "dataset_dir") dataset_dir = value;
    else if (key == "task") task = value;
    else if (key == "task_kind") task_kind = value;
    else if (key == "task_labels") task_labels = value;
    else if (key == "task_instruction") task_instruction = value;
    else if (key == "task_template") task_template = value;
    else if (key == "backend_kind") backend_kind = to_lower(trim(value));
    else if (key == "endpoint") endpoint = value;
    else if (key == "model") model = value;
    else if (key == "timeout_s") timeout_s = parse_real(key, value);
    else if (key == "max_parallel") max_parallel = static_cast<int>(parse_int(key, value));
    else if (key == "credential_env") credential_env = value;
    else if (key == "scripted_mode") scripted_mode = to_lower(trim(value));
    else if (key == "top_logprobs") top_logprobs = static_cast<int>(parse_int(key, value));
    else if (key == "embedding_kind") embedding_kind = to_lower(trim(value));
    else if (key == "embedding_endpoint") embedding_endpoint = value;
    else if (key == "embedding_model") embedding_model = value;
    else if (key == "embedding_dim") embedding_dim = static_cast<int>(parse_int(key, value));
    else if (key == "embeddings_file") embeddings_file = value;
    else if (key == "retriever") retriever = to_lower(trim(value));
    else if (key == "bm25_k1") bm25_k1 = parse_real(key, value);
    else if (key == "bm25_b") bm25_b = parse_real(key, value);
    else if (key == "mmr_lambda") mmr_lambda = parse_real(key, value);
    else if (key == "kmeans_clusters") kmeans_clusters = static_cast<int>(parse_int(key, value));
    else if (key == "k") k = static_cast<int>(parse_int(key, value));
    else if (key == "wrong_count") wrong_count = static_cast<int>(parse_int(key, value));
    else if (key == "ordering") ordering = to_lower(trim(value));
    else if (key == "score_order") score_order = to_lower(trim(value));
    else if (key == "include_instruction") include_instruction = parse_bool(key, value);
    else if (key == "include_label") include_label = parse_bool(key, value);
    else if (key == "include_prediction") include_prediction = parse_bool(key, value);
    else if (key == "include_feedback") include_feedback = parse_bool(key, value);
    else if (key == "feedback_preset") feedback_preset = to_lower(trim(value));
    else if (key == "feedback_table9") feedback_table9 = parse_bool(key, value);
    else if (key == "feedback_on_correct") feedback_on_correct = value;
    else if (key == "feedback_on_wrong") feedback_on_wrong = value;
    else if (key == "mode") {
      mode = to_lower(trim(value));
      if (mode == "feedback-icl") mode = "feedback";
      if (mode == "conventional-icl") mode = "conventional";
    }
    else if (key == "prior_mode") prior_mode = to_lower(trim(value));
    else if (key == "pool_size") pool_size = static_cast<int>(parse_int(key, value));
    else if (key == "seeds") seeds = parse_seed_list(key, value);
    else if (key == "test_cap") test_cap = static_cast<int>(parse_int(key, value));
    else if (key == "output_dir") output_dir = value;
    else if (key == "cache_dir") cache_dir = value;
    else if (key == "explain_max_tokens")
      explain_max_tokens = static_cast<int>(parse_int(key, value));
    else
      throw Error(Errc::InvalidConfig, "unknown config key '" + key + "'");
  }
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  return {
      {"dataset_dir", dataset_dir},
      {"task", task},
      {"task_kind", task_kind},
      {"task_labels", task_labels},
      {"task_instruction", task_instruction},
      {"task_template", task_template},
      {"backend_kind", backend_kind},
      {"endpoint", endpoint},
      {"model", model},
      {"timeout_s", format_double_cfg(timeout_s)},
      {"max_parallel", std::to_string(max_parallel)},
      {"credential_env", credential_env},
      {"scripted_mode", scripted_mode},
      {"top_logprobs", std::to_string(top_logprobs)},
      {"embedding_kind", embedding_kind},
      {"embedding_endpoint", embedding_endpoint},
      {"embedding_model", embedding_model},
      {"embedding_dim", std::to_string(embedding_dim)},
      {"embeddings_file", embeddings_file},
      {"retriever", retriever},
      {"bm25_k1", format_double_cfg(bm25_k1)},
      {"bm25_b", format_double_cfg(bm25_b)},
      {"mmr_lambda", format_double_cfg(mmr_lambda)},
      {"kmeans_clusters", std::to_string(kmeans_clusters)},
      {"k", std::to_string(k)},
      {"wrong_count", std::to_string(wrong_count)},
      {"ordering", ordering},
      {"score_order", score_order},
      {"include_instruction", include_instruction ? "true" : "false"},
      {"include_label", include_label ? "true" : "false"},
      {"include_prediction", include_prediction ? "true" : "false"},
      {"include_feedback", include_feedback ? "true" : "false"},
      {"feedback_preset", feedback_preset},
      {"feedback_table9", feedback_table9 ? "true" : "false"},
      {"feedback_on_correct", feedback_on_correct},
      {"feedback_on_wrong", feedback_on_wrong},
      {"mode", mode},
      {"prior_mode", prior_mode},
      {"pool_size", std::to_string(pool_size)},
      {"seeds", seeds_to_string(seeds)},
      {"test_cap", std::to_string(test_cap)},
      {"output_dir", output_dir},
      {"cache_dir", cache_dir},
      {"explain_max_tokens", std::to_string(explain_max_tokens)},
  };
}

std::string ExperimentConfig::fingerprint() const {
  std::string repr;
  for (const auto& [key, value] : to_map()) repr += key + "=" + value + "\n";
  return fingerprint_hex(repr);
}

TaskSpec ExperimentConfig::resolve_task() const {
  if (task_labels.empty()) return builtin_task(task);
  TaskSpec spec;
  spec.id = task.empty() ? "custom" : task;
  spec.kind = task_kind_from(task_kind.empty() ? "sc" : task_kind);
  std::stringstream ss(task_labels);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = to_lower(trim(item));
    if (!item.empty()) spec.label_space.push_back(item);
  }
  spec.template_id = task_template.empty() ? task_kind_name(spec.kind) : task_template;
  spec.instruction =
      task_instruction.empty() ? builtin_template(spec.template_id).instruction : task_instruction;
  spec.metric = spec.label_space.size() == 2 ? MetricKind::BinaryF1 : MetricKind::MacroF1;
  return spec;
}

RetrieverConfig ExperimentConfig::retriever_config(uint64_t seed) const {
  RetrieverConfig cfg;
  cfg.method = retrieval_method_from(retriever);
  cfg.bm25_k1 = bm25_k1;
  cfg.bm25_b = bm25_b;
  cfg.mmr_lambda = mmr_lambda;
  cfg.kmeans_clusters = kmeans_clusters;
  cfg.seed = seed;
  return cfg;
}

PromptConfig ExperimentConfig::prompt_config() const {
  PromptConfig cfg;
  cfg.k = k;
  cfg.wrong_count = wrong_count;
  cfg.group_order = group_order_from(ordering);
  cfg.score_order = score_order_from(score_order);
  cfg.include_instruction = include_instruction;
  cfg.include_label = include_label;
  cfg.include_prediction = include_prediction;
  cfg.include_feedback = include_feedback;
  cfg.conventional = mode == "conventional";
  return cfg;
}

FeedbackTexts ExperimentConfig::feedback_texts() const {
  if (!feedback_on_correct.empty() || !feedback_on_wrong.empty()) {
    if (feedback_on_correct.empty() || feedback_on_wrong.empty())
      throw Error(Errc::InvalidConfig, "custom feedback needs both texts");
    return FeedbackTexts::custom(feedback_on_correct, feedback_on_wrong);
  }
  return FeedbackTexts::preset(feedback_preset, feedback_table9);
}

void ExperimentConfig::validate() const {
  if (dataset_dir.empty()) throw Error(Errc::InvalidConfig, "dataset_dir is required");
  if (output_dir.empty()) throw Error(Errc::InvalidConfig, "output_dir is required");
  if (seeds.empty()) throw Error(Errc::InvalidConfig, "seeds must be nonempty");
  if (mode != "feedback" && mode != "conventional")
    throw Error(Errc::InvalidConfig, "mode must be feedback or conventional");
  if (backend_kind != "scripted" && backend_kind != "http")
    throw Error(Errc::InvalidConfig, "backend_kind must be scripted or http");
  if (scripted_mode != "hash" && scripted_mode != "marker")
    throw Error(Errc::InvalidConfig, "scripted_mode must be hash or marker");
  if (embedding_kind != "scripted" && embedding_kind != "http" && embedding_kind != "file")
    throw Error(Errc::InvalidConfig, "embedding_kind must be scripted, http or file");
  if (test_cap <= 0) throw Error(Errc::InvalidConfig, "test_cap must be positive");
  if (pool_size < k + 1)
    throw Error(Errc::InvalidConfig, "pool_size must be at least k + 1");
  prior_mode_from(prior_mode);
  TaskSpec spec = resolve_task();
  spec.validate();
  retriever_config(seeds.front()).validate();
  prompt_config().validate();
  if (mode == "feedback" && include_feedback) {
    FeedbackTexts fb = feedback_texts();
    if (fb.on_correct.empty() || fb.on_wrong.empty())
      throw Error(Errc::InvalidConfig, "feedback texts must be nonempty");
  }
  RetrievalMethod method = retrieval_method_from(retriever);
  bool needs_embeddings = method == RetrievalMethod::Cosine || method == RetrievalMethod::Mmr ||
                          method == RetrievalMethod::Kmeans;
  if (needs_embeddings && embedding_kind == "file" && embeddings_file.empty())
    throw Error(Errc::InvalidConfig, "embedding_kind=file requires embeddings_file");
  if (backend_kind == "http") {
    BackendDescriptor d;
    d.kind = BackendDescriptor::Kind::HttpCompletions;
    d.endpoint = endpoint;
    d.model = model;
    d.timeout_s = timeout_s;
    d.max_parallel = max_parallel;
    d.validate();
  }
}

// ---------------------------------------------------------------------------
// Provider construction

std::shared_ptr<CompletionsBackend> make_completions_backend(const ExperimentConfig& config) {
  std::shared_ptr<CompletionsBackend> inner;
  if (config.backend_kind == "scripted") {
    ScriptedRule rule =
        config.scripted_mode == "marker" ? ScriptedRule::marker_rule() : ScriptedRule::hash_rule();
    inner = std::make_shared<ScriptedBackend>(std::move(rule), config.model, config.max_parallel);
  } else {
    BackendDescriptor d;
    d.kind = BackendDescriptor::Kind::HttpCompletions;
    d.endpoint = config.endpoint;
    d.model = config.model;
    d.timeout_s = config.timeout_s;
    d.max_parallel = config.max_parallel;
    d.credential_env = config.credential_env;
    d.top_logprobs = config.top_logprobs;
    inner = std::make_shared<HttpBackend>(std::move(d));
  }
  if (config.cache_dir.empty()) return inner;
  return std::make_shared<CachingBackend>(inner, fs::path(config.cache_dir) / "scores");
}

std::shared_ptr<EmbeddingBackend> make_embedding_backend(const ExperimentConfig& config) {
  std::shared_ptr<EmbeddingBackend> inner;
  if (config.embedding_kind == "scripted") {
    inner = std::make_shared<ScriptedEmbeddingBackend>(
        static_cast<size_t>(std::max(1, config.embedding_dim)), config.embedding_model);
  } else if (config.embedding_kind == "http") {
    BackendDescriptor d;
    d.kind = BackendDescriptor::Kind::HttpCompletions;
    d.endpoint = config.embedding_endpoint;
    d.model = config.embedding_model;
    d.timeout_s = config.timeout_s;
    d.max_parallel = config.max_parallel;
    d.credential_env = config.credential_env;
    inner = std::make_shared<HttpEmbeddingBackend>(std::move(d));
  } else {
    throw Error(Errc::InvalidConfig, "no embedding backend for kind '" + config.embedding_kind + "'");
  }
  if (config.cache_dir.empty()) return inner;
  return std::make_shared<CachingEmbeddingBackend>(
      inner,
      fs::path(config.cache_dir) / "embeddings" / (sanitize_name(inner->model()) + ".jsonl"));
}

namespace {

struct EmbeddingContext {
  std::optional<EmbeddingStore> store;
  uint64_t calls = 0;
};

EmbeddingContext build_embedding_store(const ExperimentConfig& config, const TaskSpec& spec,
                                       const std::vector<LabeledExample>& pool,
                                       const std::vector<LabeledExample>& test) {
  EmbeddingContext ctx;
  RetrievalMethod method = retrieval_method_from(config.retriever);
  bool needs = method == RetrievalMethod::Cosine || method == RetrievalMethod::Mmr ||
               method == RetrievalMethod::Kmeans;
  if (!needs) return ctx;

  if (config.embedding_kind == "file") {
    ctx.store = load_embedding_store(config.embeddings_file);
    return ctx;
  }

  auto backend = make_embedding_backend(config);
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  for (const auto* split : {&pool, &test}) {
    for (const auto& ex : *split) {
      ids.push_back(ex.id);
      texts.push_back(retrieval_text(ex, spec.kind));
    }
  }
  auto vectors = backend->embed(texts);
  EmbeddingStore store;
  for (size_t i = 0; i < ids.size(); ++i) store.insert(ids[i], std::move(vectors[i]));
  ctx.store = std::move(store);
  ctx.calls = backend->call_count();
  return ctx;
}

template <typename Fn>
auto with_context(const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), context + ": " + e.what());
  }
}

json manifest_json(const RunManifest& m) {
  return {{"config_fingerprint", m.config_fingerprint},
          {"code_version", m.code_version},
          {"model", m.model},
          {"seeds", m.seeds},
          {"artifacts", m.artifacts},
          {"flags", {{"backfill", m.any_backfill}, {"shortfall", m.any_shortfall}}},
          {"backend_calls", m.backend_calls},
          {"timings_ms", m.timings_ms},
          {"timestamp", m.timestamp}};
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << content;
}

}  // namespace

// ---------------------------------------------------------------------------
// Directory lock

DirLock::DirLock(const fs::path& dir) {
  fs::create_directories(dir);
  lock_path_ = dir / ".lock";
  int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw Error(Errc::LockHeld, lock_path_.string() +
                                      " exists; another experiment is using this directory "
                                      "(remove the file if it is stale)");
    throw Error(Errc::IoError, "cannot create " + lock_path_.string());
  }
  std::string pid = std::to_string(::getpid()) + "\n";
  ssize_t n = ::write(fd, pid.data(), pid.size());
  (void)n;
  ::close(fd);
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(lock_path_, ec);
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

std::optional<fs::path> prior_cache_path(const ExperimentConfig& config,
                                         const std::string& dataset_fp, uint64_t seed,
                                         const std::string& model, PriorMode mode) {
  if (config.cache_dir.empty()) return std::nullopt;
  return fs::path(config.cache_dir) / "prior" /
         (dataset_fp + "_" + std::to_string(seed) + "_" + sanitize_name(model) + "_" +
          prior_mode_name(mode) + ".jsonl");
}

}  // namespace

AggregateReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  TaskSpec spec = config.resolve_task();
  spec.validate();

  Clock::time_point t_total = Clock::now();
  DatasetBundle bundle = with_context("load_dataset",
                                      [&] { return load_dataset(config.dataset_dir, spec); });
  std::string dataset_fp = bundle.fingerprint();

  fs::path out_dir = config.output_dir;
  fs::create_directories(out_dir);
  DirLock lock(out_dir);

  auto backend = make_completions_backend(config);
  bool feedback_mode = config.mode == "feedback";
  PriorMode prior = prior_mode_from(config.prior_mode);
  FeedbackTexts feedback =
      feedback_mode ? config.feedback_texts() : FeedbackTexts::preset("fc1+fa1");
  PromptConfig prompt_cfg = config.prompt_config();

  RunManifest manifest;
  manifest.config_fingerprint = config.fingerprint();
  manifest.code_version = FICL_VERSION;
  manifest.model = backend->descriptor().model;
  manifest.seeds = config.seeds;

  uint64_t embedding_calls = 0;
  std::vector<MetricReport> reports;
  for (uint64_t seed : config.seeds) {
    Clock::time_point t_seed = Clock::now();
    std::string seed_ctx = "seed " + std::to_string(seed);

    CandidatePool pool = with_context(seed_ctx + " sample_pool", [&] {
      return sample_pool(bundle.train, spec, config.pool_size, seed);
    });
    manifest.any_shortfall = manifest.any_shortfall || pool.has_shortfall();
    std::vector<LabeledExample> test = with_context(seed_ctx + " cap_test", [&] {
      return cap_test(bundle.test, static_cast<size_t>(config.test_cap), seed);
    });

    EmbeddingContext embeddings = with_context(seed_ctx + " embeddings", [&] {
      return build_embedding_store(config, spec, pool.examples, test);
    });
    embedding_calls += embeddings.calls;
    const EmbeddingStore* store = embeddings.store ? &*embeddings.store : nullptr;
    RetrieverConfig retriever = config.retriever_config(seed);

    SubPools subpools;
    if (feedback_mode) {
      auto records = with_context(seed_ctx + " prior_predictions", [&] {
        return acquire_prior_predictions(pool, spec, *backend, seed, prior,
                                         prior_cache_path(config, dataset_fp, seed,
                                                          backend->descriptor().model, prior));
      });
      subpools = with_context(seed_ctx + " partition_pool",
                              [&] { return partition_pool(pool, records); });
    }

    std::vector<Prediction> predictions(test.size());
    with_context(seed_ctx + " inference", [&] {
      parallel_for(test.size(), backend->descriptor().max_parallel, [&](size_t i) {
        predictions[i] =
            feedback_mode
                ? predict(test[i], subpools, spec, retriever, prompt_cfg, feedback, *backend,
                          store, seed)
                : predict_conventional(test[i], pool, spec, retriever, prompt_cfg, *backend,
                                       store, seed);
      });
      return 0;
    });

    std::vector<std::string> gold, predicted;
    std::vector<PredictionRow> rows;
    for (size_t i = 0; i < test.size(); ++i) {
      gold.push_back(test[i].gold_label);
      predicted.push_back(predictions[i].label);
      rows.push_back({test[i].id, test[i].gold_label, predictions[i].label,
                      fingerprint_hex(predictions[i].prompt.text)});
      manifest.any_backfill = manifest.any_backfill || predictions[i].prompt.backfilled;
    }

    MetricReport report = with_context(seed_ctx + " metrics",
                                       [&] { return evaluate(gold, predicted, spec, seed); });
    std::string seed_dir = "seed_" + std::to_string(seed);
    emit_report(report, rows, out_dir / seed_dir);
    for (const char* name : {"metrics.json", "predictions.csv", "confusion.csv", "confusion.svg"})
      manifest.artifacts.push_back(seed_dir + "/" + name);
    manifest.timings_ms[seed_dir] = ms_since(t_seed);
    reports.push_back(std::move(report));
  }

  AggregateReport agg = aggregate(reports);
  emit_aggregate(agg, out_dir / "aggregate.json");
  manifest.artifacts.push_back("aggregate.json");
  manifest.backend_calls = backend->call_count();
  manifest.timings_ms["total"] = ms_since(t_total);
  manifest.timestamp = iso_timestamp();

  json doc = manifest_json(manifest);
  doc["embedding_calls"] = embedding_calls;
  write_text(out_dir / "manifest.json", doc.dump(2) + "\n");
  return agg;
}

// ---------------------------------------------------------------------------
// Ablation

namespace {

struct AblationRow {
  const char* name;
  bool inst, label, feed;
  const char* pred;  // "on", "off", "R", "Z"
};

constexpr std::array<AblationRow, 7> kAblationRows = {{
    {"full", true, true, true, "on"},
    {"no_inst", false, true, true, "on"},
    {"no_label", true, false, true, "on"},
    {"no_pred", true, true, true, "off"},
    {"pred_r", true, true, true, "R"},
    {"pred_z", true, true, true, "Z"},
    {"no_feed", true, true, false, "on"},
}};

const AblationRow& ablation_row(const std::string& name) {
  for (const auto& row : kAblationRows)
    if (name == row.name) return row;
  throw Error(Errc::UnknownToggle, "'" + name + "' (valid: full, no_inst, no_label, no_pred, "
                                   "pred_r, pred_z, no_feed)");
}

}  // namespace

std::vector<std::pair<std::string, AggregateReport>> run_ablation(
    const ExperimentConfig& config, const std::vector<std::string>& rows) {
  config.validate();
  if (config.mode != "feedback")
    throw Error(Errc::InvalidConfig, "ablation runs on feedback mode");

  std::vector<std::string> row_names = rows;
  if (row_names.empty())
    for (const auto& row : kAblationRows) row_names.push_back(row.name);

  fs::path base_dir = config.output_dir;
  fs::create_directories(base_dir);
  DirLock lock(base_dir);

  std::vector<std::pair<std::string, AggregateReport>> results;
  std::string csv = "row,inst,label,pred,feed,mean_f1,std_f1,mean_accuracy,std_accuracy\n";
  for (const auto& name : row_names) {
    const AblationRow& row = ablation_row(name);
    ExperimentConfig sub = config;
    sub.include_instruction = row.inst;
    sub.include_label = row.label;
    sub.include_feedback = row.feed;
    std::string pred(row.pred);
    if (pred == "off") sub.include_prediction = false;
    else if (pred == "R") sub.prior_mode = "random_error";
    else if (pred == "Z") sub.prior_mode = "zero_shot";
    sub.output_dir = (base_dir / name).string();
    AggregateReport agg = run_experiment(sub);
    csv += std::string(row.name) + "," + (row.inst ? "yes" : "no") + "," +
           (row.label ? "yes" : "no") + "," + pred + "," + (row.feed ? "yes" : "no") + "," +
           std::to_string(agg.mean_f1) + "," + std::to_string(agg.std_f1) + "," +
           std::to_string(agg.mean_accuracy) + "," + std::to_string(agg.std_accuracy) + "\n";
    results.emplace_back(name, std::move(agg));
  }
  write_text(base_dir / "ablation.csv", csv);
  return results;
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<std::pair<double, AggregateReport>> sweep_ratio(const ExperimentConfig& config) {
  config.validate();
  if (config.k % 2 != 0) throw Error(Errc::InvalidConfig, "ratio sweep requires even k");

  fs::path base_dir = config.output_dir;
  fs::create_directories(base_dir);
  DirLock lock(base_dir);

  std::vector<std::pair<double, AggregateReport>> results;
  std::string csv = "ratio,wrong_count,mean_f1,std_f1,mean_accuracy,std_accuracy\n";
  std::vector<PlotPoint> points;
  for (int quarter = 0; quarter <= 4; ++quarter) {
    double ratio = quarter / 4.0;
    int wrong = static_cast<int>(std::lround(ratio * config.k));
    ExperimentConfig sub = config;
    sub.wrong_count = wrong;
    sub.output_dir = (base_dir / ("ratio_" + std::to_string(quarter * 25))).string();
    AggregateReport agg = run_experiment(sub);
    csv += std::to_string(ratio) + "," + std::to_string(wrong) + "," + std::to_string(agg.mean_f1) +
           "," + std::to_string(agg.std_f1) + "," + std::to_string(agg.mean_accuracy) + "," +
           std::to_string(agg.std_accuracy) + "\n";
    points.push_back({ratio, agg.mean_f1});
    results.emplace_back(ratio, std::move(agg));
  }
  write_text(base_dir / "ratio.csv", csv);
  write_text(base_dir / "ratio.svg",
             line_plot_svg("F1 vs wrong-example ratio", "wrong ratio", "mean F1", points));
  return results;
}

std::vector<std::pair<std::string, AggregateReport>> sweep_order(const ExperimentConfig& config) {
  config.validate();
  fs::path base_dir = config.output_dir;
  fs::create_directories(base_dir);
  DirLock lock(base_dir);

  std::vector<std::pair<std::string, AggregateReport>> results;
  std::string csv = "ordering,score_order,mean_f1,std_f1,mean_accuracy,std_accuracy\n";
  for (const char* group : {"wrong_first", "correct_first", "alternating"}) {
    for (const char* sort : {"desc", "asc"}) {
      ExperimentConfig sub = config;
      sub.ordering = group;
      sub.score_order = sort;
      std::string name = std::string(group) + "_" + sort;
      sub.output_dir = (base_dir / name).string();
      AggregateReport agg = run_experiment(sub);
      csv += std::string(group) + "," + sort + "," + std::to_string(agg.mean_f1) + "," +
             std::to_string(agg.std_f1) + "," + std::to_string(agg.mean_accuracy) + "," +
             std::to_string(agg.std_accuracy) + "\n";
      results.emplace_back(name, std::move(agg));
    }
  }
  write_text(base_dir / "order.csv", csv);
  return results;
}

std::vector<std::pair<int, AggregateReport>> sweep_shots(const ExperimentConfig& config,
                                                         const std::vector<int>& ks) {
  config.validate();
  if (ks.empty()) throw Error(Errc::InvalidConfig, "shot sweep needs at least one k");

  fs::path base_dir = config.output_dir;
  fs::create_directories(base_dir);
  DirLock lock(base_dir);

  std::vector<std::pair<int, AggregateReport>> results;
  std::string csv = "k,mean_f1,std_f1,mean_accuracy,std_accuracy\n";
  std::vector<PlotPoint> points;
  for (int shot : ks) {
    ExperimentConfig sub = config;
    sub.k = shot;
    sub.wrong_count = -1;  // default split per k
    sub.output_dir = (base_dir / ("k_" + std::to_string(shot))).string();
    AggregateReport agg = run_experiment(sub);
    csv += std::to_string(shot) + "," + std::to_string(agg.mean_f1) + "," +
           std::to_string(agg.std_f1) + "," + std::to_string(agg.mean_accuracy) + "," +
           std::to_string(agg.std_accuracy) + "\n";
    points.push_back({static_cast<double>(shot), agg.mean_f1});
    results.emplace_back(shot, std::move(agg));
  }
  write_text(base_dir / "shots.csv", csv);
  write_text(base_dir / "shots.svg",
             line_plot_svg("F1 vs shot count", "k", "mean F1", points));
  return results;
}

// ---------------------------------------------------------------------------
// Explanations, report recomputation, pool materialization

std::string run_explain(const ExperimentConfig& config, const std::string& example_id,
                        size_t index) {
  config.validate();
  TaskSpec spec = config.resolve_task();
  DatasetBundle bundle = load_dataset(config.dataset_dir, spec);
  uint64_t seed = config.seeds.front();
  std::string dataset_fp = bundle.fingerprint();

  CandidatePool pool = sample_pool(bundle.train, spec, config.pool_size, seed);
  std::vector<LabeledExample> test = cap_test(bundle.test, static_cast<size_t>(config.test_cap), seed);

  const LabeledExample* item = nullptr;
  if (!example_id.empty()) {
    for (const auto& ex : test)
      if (ex.id == example_id) item = &ex;
    if (item == nullptr)
      throw Error(Errc::MissingRecord, "test example '" + example_id + "' not found");
  } else {
    if (index >= test.size())
      throw Error(Errc::InvalidConfig, "test index " + std::to_string(index) + " out of range");
    item = &test[index];
  }

  EmbeddingContext embeddings = build_embedding_store(config, spec, pool.examples, test);
  const EmbeddingStore* store = embeddings.store ? &*embeddings.store : nullptr;
  auto backend = make_completions_backend(config);
  RetrieverConfig retriever = config.retriever_config(seed);
  PromptConfig prompt_cfg = config.prompt_config();
  FeedbackTexts feedback =
      config.mode == "feedback" ? config.feedback_texts() : FeedbackTexts::preset("fc1+fa1");

  std::vector<DemonstrationQuadruple> quads;
  if (config.mode == "feedback") {
    PriorMode prior = prior_mode_from(config.prior_mode);
    auto records = acquire_prior_predictions(
        pool, spec, *backend, seed, prior,
        prior_cache_path(config, dataset_fp, seed, backend->descriptor().model, prior));
    SubPools subpools = partition_pool(pool, records);
    quads = select_demonstrations(*item, subpools, spec, retriever, prompt_cfg, feedback, store,
                                  seed)
                .quadruples;
  } else {
    quads = select_conventional(*item, pool, spec, retriever, prompt_cfg, store, seed);
  }

  std::string text =
      explain(*item, quads, spec, prompt_cfg, feedback, *backend, config.explain_max_tokens);
  write_text(fs::path(config.output_dir) / ("explanation_" + sanitize_name(item->id) + ".txt"),
             text + "\n");
  return text;
}

AggregateReport recompute_reports(const ExperimentConfig& config,
                                  const std::vector<fs::path>& prediction_csvs) {
  TaskSpec spec = config.resolve_task();
  spec.validate();
  if (prediction_csvs.empty()) throw Error(Errc::EmptyInput, "no prediction files");

  fs::path out_dir = config.output_dir;
  fs::create_directories(out_dir);

  std::vector<MetricReport> reports;
  for (size_t i = 0; i < prediction_csvs.size(); ++i) {
    auto rows = load_predictions_csv(prediction_csvs[i]);
    std::vector<std::string> gold, pred;
    for (const auto& row : rows) {
      gold.push_back(row.gold);
      pred.push_back(row.pred);
    }
    MetricReport report = evaluate(gold, pred, spec, i);
    emit_report(report, rows, out_dir / ("report_" + std::to_string(i)));
    reports.push_back(std::move(report));
  }
  AggregateReport agg = aggregate(reports);
  emit_aggregate(agg, out_dir / "aggregate.json");
  return agg;
}

void prepare_pools(const ExperimentConfig& config) {
  config.validate();
  TaskSpec spec = config.resolve_task();
  DatasetBundle bundle = load_dataset(config.dataset_dir, spec);
  fs::path out_dir = config.output_dir;
  fs::create_directories(out_dir);

  json stats = json::object();
  for (uint64_t seed : config.seeds) {
    CandidatePool pool = sample_pool(bundle.train, spec, config.pool_size, seed);
    std::string name = "pool_seed_" + std::to_string(seed);
    save_examples_jsonl(pool.examples, out_dir / (name + ".jsonl"));
    stats[name] = {{"size", pool.examples.size()},
                   {"per_class", pool.per_class_counts},
                   {"shortfall", pool.shortfall}};
  }
  write_text(out_dir / "pool_stats.json", stats.dump(2) + "\n");
}

void run_prior_predict(const ExperimentConfig& config) {
  config.validate();
  TaskSpec spec = config.resolve_task();
  DatasetBundle bundle = load_dataset(config.dataset_dir, spec);
  std::string dataset_fp = bundle.fingerprint();
  fs::path out_dir = config.output_dir;
  fs::create_directories(out_dir);

  auto backend = make_completions_backend(config);
  PriorMode prior = prior_mode_from(config.prior_mode);
  for (uint64_t seed : config.seeds) {
    CandidatePool pool = sample_pool(bundle.train, spec, config.pool_size, seed);
    auto records = acquire_prior_predictions(
        pool, spec, *backend, seed, prior,
        prior_cache_path(config, dataset_fp, seed, backend->descriptor().model, prior));
    save_prior_cache(records, out_dir / ("prior_seed_" + std::to_string(seed) + ".jsonl"));
  }
}

}  // namespace ficl
