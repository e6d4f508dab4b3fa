#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ficl/common.hpp"

namespace ficl {

struct BackendDescriptor {
  enum class Kind { HttpCompletions, Scripted };
  Kind kind = Kind::Scripted;
  std::string endpoint;  // required iff HttpCompletions
  std::string model = "scripted";
  double timeout_s = 60.0;
  int max_parallel = 4;
  std::string credential_env;  // env var holding the bearer token; never logged
  int top_logprobs = 20;

  void validate() const;
};

// label word -> log-probability-like score, higher is better.
using LabelScoreMap = std::map<std::string, double>;

// Highest score wins; exact ties break by label_space declaration order.
std::string argmax_label(const LabelScoreMap& scores, const std::vector<std::string>& label_space);

// Rejects label sets whose first subtokens collide (the verbalizer would be
// ambiguous).
void check_label_subtokens(const std::vector<std::string>& labels);

class CompletionsBackend {
 public:
  virtual ~CompletionsBackend() = default;

  // One finite score per requested label, via next-token log-probabilities of
  // each label's first subtoken.
  virtual LabelScoreMap score_labels(const std::string& prompt,
                                     const std::vector<std::string>& labels) = 0;

  virtual std::string generate_text(const std::string& prompt, int max_tokens) = 0;

  virtual const BackendDescriptor& descriptor() const = 0;

  // Requests actually issued (cache hits excluded); used by cache tests and
  // run manifests.
  virtual uint64_t call_count() const = 0;
};

// Deterministic offline rule: an explicit prompt-fingerprint -> label map
// takes precedence; otherwise a pure fallback function scores each
// (prompt, label) pair.
struct ScriptedRule {
  std::unordered_map<std::string, std::string> label_by_fingerprint;
  std::function<double(const std::string& prompt, const std::string& label)> fallback;
  std::string fixture_text = "The label fits the example.";

  // Hash scorer: a fixed pseudo-random score per (prompt, label).
  static ScriptedRule hash_rule();
  // Marker scorer: boosts labels whose "[label]" marker appears in the
  // prompt's final input block, but only when feedback lines are present.
  // Conventional prompts fall back to hash scores, which makes feedback and
  // conventional runs separable in offline fixtures.
  static ScriptedRule marker_rule();
  // Always ranks `label` first (useful in tests).
  static ScriptedRule constant_rule(std::string label);
};

class ScriptedBackend : public CompletionsBackend {
 public:
  explicit ScriptedBackend(ScriptedRule rule, std::string model_name = "scripted",
                           int max_parallel = 4);

  LabelScoreMap score_labels(const std::string& prompt,
                             const std::vector<std::string>& labels) override;
  std::string generate_text(const std::string& prompt, int max_tokens) override;
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  uint64_t call_count() const override { return calls_.load(); }

 private:
  ScriptedRule rule_;
  BackendDescriptor descriptor_;
  std::atomic<uint64_t> calls_{0};
};

// OpenAI-style completions client: POST {model, prompt, max_tokens, logprobs}
// and read next-token top log-probabilities. Bounded parallelism, 3 attempts
// with exponential backoff on transient failures.
class HttpBackend : public CompletionsBackend {
 public:
  explicit HttpBackend(BackendDescriptor descriptor);
  ~HttpBackend() override;

  LabelScoreMap score_labels(const std::string& prompt,
                             const std::vector<std::string>& labels) override;
  std::string generate_text(const std::string& prompt, int max_tokens) override;
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  uint64_t call_count() const override { return calls_.load(); }

 private:
  struct Impl;
  std::string post_json(const std::string& body);

  BackendDescriptor descriptor_;
  std::unique_ptr<Impl> impl_;
  std::atomic<uint64_t> calls_{0};
};

// Matches a label against returned top tokens: strip one leading space or BPE
// space marker, lowercase, then require a nonempty prefix of the label. The
// best (max) logprob among matches wins; unmatched labels get a finite floor
// below every returned logprob.
LabelScoreMap scores_from_top_logprobs(const std::map<std::string, double>& top_logprobs,
                                       const std::vector<std::string>& labels);

// Write-through disk cache for label scores, keyed by
// (model, prompt fingerprint, label-set fingerprint). Atomic write-then-rename
// per key; concurrent readers are safe.
class ScoreCache {
 public:
  explicit ScoreCache(std::filesystem::path dir);

  std::optional<LabelScoreMap> get(const std::string& model, const std::string& prompt_fp,
                                   const std::string& labels_fp) const;
  void put(const std::string& model, const std::string& prompt_fp, const std::string& labels_fp,
           const LabelScoreMap& scores);

 private:
  std::filesystem::path key_path(const std::string& model, const std::string& prompt_fp,
                                 const std::string& labels_fp) const;
  std::filesystem::path dir_;
  mutable std::mutex write_mutex_;
};

// Wraps any backend with a ScoreCache; delegate calls happen only on miss.
class CachingBackend : public CompletionsBackend {
 public:
  CachingBackend(std::shared_ptr<CompletionsBackend> inner, std::filesystem::path cache_dir);

  LabelScoreMap score_labels(const std::string& prompt,
                             const std::vector<std::string>& labels) override;
  std::string generate_text(const std::string& prompt, int max_tokens) override;
  const BackendDescriptor& descriptor() const override { return inner_->descriptor(); }
  uint64_t call_count() const override { return inner_->call_count(); }

 private:
  std::shared_ptr<CompletionsBackend> inner_;
  ScoreCache cache_;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  // One vector per input text, all of one dimension.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
  virtual const std::string& model() const = 0;
  virtual uint64_t call_count() const = 0;
};

// Text -> fixed seeded vector (hash-seeded RNG), unit-normalized.
class ScriptedEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit ScriptedEmbeddingBackend(size_t dim = 16, std::string model_name = "scripted-embed");
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  const std::string& model() const override { return model_; }
  uint64_t call_count() const override { return calls_.load(); }

 private:
  size_t dim_;
  std::string model_;
  std::atomic<uint64_t> calls_{0};
};

// POST {model, texts} -> vectors. Accepts {"vectors": [...]},
// {"embeddings": [...]} or OpenAI-style {"data": [{"embedding": [...]}]}.
class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit HttpEmbeddingBackend(BackendDescriptor descriptor);
  ~HttpEmbeddingBackend() override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  const std::string& model() const override { return descriptor_.model; }
  uint64_t call_count() const override { return calls_.load(); }

 private:
  struct Impl;
  BackendDescriptor descriptor_;
  std::unique_ptr<Impl> impl_;
  std::atomic<uint64_t> calls_{0};
};

// Content-fingerprint cache in front of an embedding backend, persisted as
// JSONL ({"dim","model"} header, then {"fp","vector"} rows). A cached
// dimension that disagrees with fresh results is an error.
class CachingEmbeddingBackend : public EmbeddingBackend {
 public:
  CachingEmbeddingBackend(std::shared_ptr<EmbeddingBackend> inner, std::filesystem::path cache_file);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  const std::string& model() const override { return inner_->model(); }
  uint64_t call_count() const override { return inner_->call_count(); }

 private:
  void load();
  std::shared_ptr<EmbeddingBackend> inner_;
  std::filesystem::path cache_file_;
  std::unordered_map<std::string, std::vector<double>> by_fp_;
  size_t dim_ = 0;
  std::mutex mutex_;
};

}  // namespace ficl
