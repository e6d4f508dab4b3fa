#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ficl/common.hpp"

namespace ficl {

enum class TaskKind { SC, ASC, ED, STANCE, IRONY, NLI };
enum class MetricKind { BinaryF1, MacroF1 };

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from(const std::string& name);

struct TaskSpec {
  std::string id;
  TaskKind kind = TaskKind::SC;
  std::vector<std::string> label_space;  // ordered; declaration order breaks ties
  std::string instruction;
  MetricKind metric = MetricKind::MacroF1;
  std::string template_id = "sc";
  bool normalize_case = true;

  // First label is the positive class for binary F1.
  const std::string& positive_label() const { return label_space.front(); }

  // Enforces: nonempty distinct lowercase labels, metric/kind coherence,
  // template exists, no first-subtoken collisions between labels.
  void validate() const;
};

// Built-in task registry covering the shipped datasets (sst2, twsenti, poem,
// finance, rest, laptop, twitter, emoc, twemo, pstance, twirony, mnli).
const TaskSpec& builtin_task(const std::string& name);
std::vector<std::string> builtin_task_names();

struct LabeledExample {
  std::string id;
  std::string text;
  std::string aspect;      // ASC only
  std::string target;      // STANCE only
  std::string premise;     // NLI only (text unused)
  std::string hypothesis;  // NLI only
  std::string gold_label;

  bool operator==(const LabeledExample&) const = default;
};

struct DatasetBundle {
  std::vector<LabeledExample> train, dev, test;
  std::string source;

  // Stable content fingerprint, used as a cache key component.
  std::string fingerprint() const;
};

struct CandidatePool {
  std::string task_id;
  std::vector<LabeledExample> examples;
  uint64_t seed = 0;
  std::map<std::string, int> per_class_counts;
  std::map<std::string, int> shortfall;  // label -> examples missing vs quota

  bool has_shortfall() const { return !shortfall.empty(); }
};

// Reads one split file (JSONL, one object per line: id, text, label and the
// task's optional fields). Labels are normalized per spec.normalize_case.
std::vector<LabeledExample> load_examples_jsonl(const std::filesystem::path& file,
                                                const TaskSpec& spec);

// Loads train.jsonl / test.jsonl (dev.jsonl optional) from a directory and
// checks id uniqueness across splits.
DatasetBundle load_dataset(const std::filesystem::path& dir, const TaskSpec& spec);

void save_examples_jsonl(const std::vector<LabeledExample>& rows,
                         const std::filesystem::path& file);
void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir);

// Label-balanced candidate pool: per-class quotas differ by at most one
// (remainder assigned in label declaration order), drawn without replacement.
// Short classes contribute everything they have; the gap is recorded, not
// filled from other classes.
CandidatePool sample_pool(const std::vector<LabeledExample>& train, const TaskSpec& spec,
                          int total, uint64_t seed);

// Seeded uniform subsample of size `limit`, keeping original relative order.
// Inputs at or under the limit pass through unchanged.
std::vector<LabeledExample> cap_test(const std::vector<LabeledExample>& test, size_t limit,
                                     uint64_t seed);

}  // namespace ficl
