#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ficl/backend.hpp"
#include "ficl/corpus.hpp"
#include "ficl/retrieval.hpp"

namespace ficl {

enum class PriorMode { Icl, RandomError, ZeroShot };

const char* prior_mode_name(PriorMode m);
PriorMode prior_mode_from(const std::string& name);

struct PriorPredictionRecord {
  std::string example_id;
  std::string predicted_label;
  bool is_correct = false;
  PriorMode source_mode = PriorMode::Icl;
  uint64_t seed = 0;
  std::string model;

  bool operator==(const PriorPredictionRecord&) const = default;
};

struct SubPools {
  std::vector<std::pair<LabeledExample, PriorPredictionRecord>> correct;  // P_c
  std::vector<std::pair<LabeledExample, PriorPredictionRecord>> wrong;    // P_w
};

struct FeedbackTexts {
  std::string on_correct;
  std::string on_wrong;
  std::string preset_id = "fc1+fa1";

  // Presets: fc1+fa1 (default), fc1+fa2, fc2+fa1, fc2+fa2. The fa1 sentences
  // follow the framework-description pairing (correct -> "Stay determined...");
  // table9_literal = true uses the variant table's column assignment instead,
  // which swaps the fa1 sentences.
  static FeedbackTexts preset(const std::string& id, bool table9_literal = false);
  static FeedbackTexts custom(std::string on_correct, std::string on_wrong);
};

enum class GroupOrder { WrongFirst, CorrectFirst, Alternating };
enum class ScoreOrder { Desc, Asc };

const char* group_order_name(GroupOrder g);
GroupOrder group_order_from(const std::string& name);
const char* score_order_name(ScoreOrder s);
ScoreOrder score_order_from(const std::string& name);

struct PromptConfig {
  int k = 4;
  int wrong_count = -1;  // -1: ceil(k/2), the default split
  GroupOrder group_order = GroupOrder::WrongFirst;
  ScoreOrder score_order = ScoreOrder::Desc;
  bool include_instruction = true;
  bool include_label = true;
  bool include_prediction = true;
  bool include_feedback = true;
  bool conventional = false;

  int effective_wrong_count() const { return wrong_count >= 0 ? wrong_count : (k + 1) / 2; }
  // Conventional mode forces prediction and feedback lines off.
  PromptConfig effective() const;
  void validate() const;
  std::string fingerprint() const;
};

struct DemonstrationQuadruple {
  LabeledExample example;
  std::string prediction;  // y'
  std::string gold;        // y
  std::string feedback;    // fd, matching the sub-pool of origin
  double score = 0.0;
  bool from_wrong_pool = false;
};

struct AssembledPrompt {
  std::string text;
  std::vector<std::string> demonstration_ids;
  std::string config_fingerprint;
  bool backfilled = false;
};

// Step 1: prior predictions over the candidate pool.
//   Icl         conventional 4-shot prompt from seeded-random other pool
//               examples (re-drawn per example from seed ^ fnv1a64(id))
//   ZeroShot    conventional prompt with no demonstrations
//   RandomError no backend call; a seeded-uniform label != gold
// With a cache path, existing records for (mode, seed, model) are reused and
// only missing examples hit the backend; the file is rewritten in pool order.
std::vector<PriorPredictionRecord> acquire_prior_predictions(
    const CandidatePool& pool, const TaskSpec& spec, CompletionsBackend& backend, uint64_t seed,
    PriorMode mode, const std::optional<std::filesystem::path>& cache_file = std::nullopt);

std::vector<PriorPredictionRecord> load_prior_cache(const std::filesystem::path& file);
void save_prior_cache(const std::vector<PriorPredictionRecord>& records,
                      const std::filesystem::path& file);

// Step 2: split by correctness, preserving pool order within each sub-pool.
SubPools partition_pool(const CandidatePool& pool,
                        const std::vector<PriorPredictionRecord>& records);

struct SelectionResult {
  std::vector<DemonstrationQuadruple> quadruples;
  bool backfilled = false;
};

// Step 3 (selection): wrong_count demonstrations from P_w and k - wrong_count
// from P_c via the configured retriever, run independently per sub-pool with
// a per-test derived seed (experiment_seed ^ fnv1a64(test id)). A short
// sub-pool contributes everything it has and the gap is backfilled from the
// other one (flagged). Groups are arranged per the ordering strategy; Asc
// reverses the within-group score order.
SelectionResult select_demonstrations(const LabeledExample& test, const SubPools& subpools,
                                      const TaskSpec& spec, const RetrieverConfig& retriever,
                                      const PromptConfig& prompt_config,
                                      const FeedbackTexts& feedback,
                                      const EmbeddingStore* embeddings, uint64_t experiment_seed);

// Step 3 (rendering): instruction line, examples header, one block per
// demonstration, then the test block ending with the formatting word --
// "Correct Label:" (feedback templates) or "Label:" (conventional mode).
AssembledPrompt render_prompt(const LabeledExample& test,
                              const std::vector<DemonstrationQuadruple>& quadruples,
                              const TaskSpec& spec, const PromptConfig& prompt_config,
                              const FeedbackTexts& feedback);

struct Prediction {
  std::string label;
  AssembledPrompt prompt;
};

// Feedback-driven inference: select -> render -> score -> argmax.
Prediction predict(const LabeledExample& test, const SubPools& subpools, const TaskSpec& spec,
                   const RetrieverConfig& retriever, const PromptConfig& prompt_config,
                   const FeedbackTexts& feedback, CompletionsBackend& backend,
                   const EmbeddingStore* embeddings, uint64_t experiment_seed);

// Conventional ICL selection: k demonstrations from the undivided pool
// (prediction and feedback fields stay empty).
std::vector<DemonstrationQuadruple> select_conventional(
    const LabeledExample& test, const CandidatePool& pool, const TaskSpec& spec,
    const RetrieverConfig& retriever, const PromptConfig& prompt_config,
    const EmbeddingStore* embeddings, uint64_t experiment_seed);

// Conventional ICL: k demonstrations from the undivided pool, label-only
// blocks, "Label:" formatting word.
Prediction predict_conventional(const LabeledExample& test, const CandidatePool& pool,
                                const TaskSpec& spec, const RetrieverConfig& retriever,
                                const PromptConfig& prompt_config, CompletionsBackend& backend,
                                const EmbeddingStore* embeddings, uint64_t experiment_seed);

// Free-text label + explanation: the instruction ("Provide the correct label
// for the following sample and explain your answer based on the above
// examples and feedback." -- the "and feedback" clause drops out in
// conventional mode) is inserted before the test block. Requires at least one
// demonstration.
std::string explain(const LabeledExample& test, const std::vector<DemonstrationQuadruple>& quadruples,
                    const TaskSpec& spec, const PromptConfig& prompt_config,
                    const FeedbackTexts& feedback, CompletionsBackend& backend,
                    int max_tokens = 256);

}  // namespace ficl
