#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ficl/backend.hpp"
#include "ficl/corpus.hpp"
#include "ficl/metrics.hpp"
#include "ficl/pipeline.hpp"
#include "ficl/retrieval.hpp"

namespace ficl {

// Flat key/value experiment description. Every field can come from the config
// file or be overridden by the CLI flag of the same name.
struct ExperimentConfig {
  // data
  std::string dataset_dir;
  std::string task;
  // custom task definition (used when `task` is not a builtin id)
  std::string task_kind;
  std::string task_labels;  // comma-separated, declaration order
  std::string task_instruction;
  std::string task_template;

  // completions backend
  std::string backend_kind = "scripted";  // scripted | http
  std::string endpoint;
  std::string model = "scripted";
  double timeout_s = 60.0;
  int max_parallel = 4;
  std::string credential_env;
  std::string scripted_mode = "hash";  // hash | marker
  int top_logprobs = 20;

  // embedding provider (for cosine / mmr / kmeans retrievers)
  std::string embedding_kind = "scripted";  // scripted | http | file
  std::string embedding_endpoint;
  std::string embedding_model = "scripted-embed";
  int embedding_dim = 16;
  std::string embeddings_file;

  // retrieval
  std::string retriever = "random";
  double bm25_k1 = 1.5;
  double bm25_b = 0.75;
  double mmr_lambda = 0.7;
  int kmeans_clusters = 4;

  // prompt assembly
  int k = 4;
  int wrong_count = -1;  // -1: ceil(k/2)
  std::string ordering = "wrong_first";
  std::string score_order = "desc";
  bool include_instruction = true;
  bool include_label = true;
  bool include_prediction = true;
  bool include_feedback = true;
  std::string feedback_preset = "fc1+fa1";
  bool feedback_table9 = false;
  std::string feedback_on_correct;  // custom texts override the preset
  std::string feedback_on_wrong;

  // protocol
  std::string mode = "feedback";  // feedback | conventional
  std::string prior_mode = "icl";
  int pool_size = 300;
  std::vector<uint64_t> seeds = {13, 42, 87};
  int test_cap = 2000;
  std::string output_dir = "runs/out";
  std::string cache_dir;  // empty: no disk caching
  int explain_max_tokens = 256;

  static ExperimentConfig from_file(const std::filesystem::path& path);
  static ExperimentConfig from_map(const std::map<std::string, std::string>& kv);
  void apply(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_map() const;

  // Stable under key reordering of the source file.
  std::string fingerprint() const;
  void validate() const;

  TaskSpec resolve_task() const;
  RetrieverConfig retriever_config(uint64_t seed) const;
  PromptConfig prompt_config() const;
  FeedbackTexts feedback_texts() const;
};

std::shared_ptr<CompletionsBackend> make_completions_backend(const ExperimentConfig& config);
std::shared_ptr<EmbeddingBackend> make_embedding_backend(const ExperimentConfig& config);

// Holds <dir>/.lock exclusively for the lifetime of the object.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

struct RunManifest {
  std::string config_fingerprint;
  std::string code_version;
  std::string model;
  std::vector<uint64_t> seeds;
  std::vector<std::string> artifacts;  // paths relative to the run directory
  bool any_backfill = false;
  bool any_shortfall = false;
  uint64_t backend_calls = 0;
  std::map<std::string, double> timings_ms;
  std::string timestamp;  // volatile across reruns, like timings_ms
};

// Full protocol for one configuration: per seed, sample the pool, obtain or
// reuse prior predictions, partition, evaluate the capped test split, and
// emit per-seed reports plus aggregate.json and manifest.json under
// config.output_dir. Conventional mode skips the prior-prediction and
// partition steps and retrieves from the undivided pool.
AggregateReport run_experiment(const ExperimentConfig& config);

// Table-style toggle matrix. Rows: full, no_inst, no_label, no_pred, pred_r,
// pred_z, no_feed. Writes ablation.csv plus one run directory per row.
std::vector<std::pair<std::string, AggregateReport>> run_ablation(
    const ExperimentConfig& config, const std::vector<std::string>& rows = {});

// Wrong-example ratio sweep {0, 1/4, 1/2, 3/4, 1} at fixed even k.
// Writes ratio.csv and ratio.svg.
std::vector<std::pair<double, AggregateReport>> sweep_ratio(const ExperimentConfig& config);

// The 3x2 ordering grid (group order x score order). Writes order.csv.
std::vector<std::pair<std::string, AggregateReport>> sweep_order(const ExperimentConfig& config);

// Shot-count sweep; wrong_count reverts to the default split for each k.
// Writes shots.csv and shots.svg.
std::vector<std::pair<int, AggregateReport>> sweep_shots(const ExperimentConfig& config,
                                                         const std::vector<int>& ks = {2, 4, 6, 8,
                                                                                       12});

// Free-text explanation for one test item (by id, or by index when id is
// empty). Uses the first configured seed; writes explanation_<id>.txt.
std::string run_explain(const ExperimentConfig& config, const std::string& example_id,
                        size_t index = 0);

// Recompute reports from previously emitted predictions.csv files.
AggregateReport recompute_reports(const ExperimentConfig& config,
                                  const std::vector<std::filesystem::path>& prediction_csvs);

// Materialize per-seed candidate pools (pool_seed_<s>.jsonl + pool_stats.json).
void prepare_pools(const ExperimentConfig& config);

// Run step 1 only, per seed, writing prior_seed_<s>.jsonl (and warming the
// cache when cache_dir is set).
void run_prior_predict(const ExperimentConfig& config);

}  // namespace ficl
