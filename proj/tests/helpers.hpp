#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ficl/backend.hpp"
#include "ficl/corpus.hpp"
#include "ficl/pipeline.hpp"

namespace ficl::testing {

inline std::filesystem::path fresh_temp_dir(const std::string& tag) {
  static std::atomic<uint64_t> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("ficl_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter.fetch_add(1)));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline LabeledExample sc_example(const std::string& id, const std::string& text,
                                 const std::string& label) {
  LabeledExample ex;
  ex.id = id;
  ex.text = text;
  ex.gold_label = label;
  return ex;
}

// n examples cycling through the given labels, with distinctive texts. When
// `marker` is set, each text carries the "[label]" token the scripted marker
// backend keys on.
inline std::vector<LabeledExample> synthetic_examples(const std::string& prefix, size_t n,
                                                      const std::vector<std::string>& labels,
                                                      bool marker = false) {
  static const char* kWords[] = {"brisk",  "amber", "quiet", "meadow", "copper",
                                 "drift",  "lively", "stone", "harbor", "velvet"};
  std::vector<LabeledExample> out;
  for (size_t i = 0; i < n; ++i) {
    const std::string& label = labels[i % labels.size()];
    std::string text = std::string(kWords[i % 10]) + " " + kWords[(i * 3 + 1) % 10] + " sample " +
                       std::to_string(i);
    if (marker) text += " [" + label + "]";
    out.push_back(sc_example(prefix + std::to_string(i), text, label));
  }
  return out;
}

inline CandidatePool pool_of(std::vector<LabeledExample> examples, const std::string& task_id,
                             uint64_t seed = 0) {
  CandidatePool pool;
  pool.task_id = task_id;
  pool.seed = seed;
  for (const auto& ex : examples) pool.per_class_counts[ex.gold_label]++;
  pool.examples = std::move(examples);
  return pool;
}

// Records prompts passed to score_labels / generate_text for inspection.
class RecordingBackend : public CompletionsBackend {
 public:
  explicit RecordingBackend(ScriptedRule rule = ScriptedRule::hash_rule())
      : inner_(std::move(rule), "recording") {}

  LabelScoreMap score_labels(const std::string& prompt,
                             const std::vector<std::string>& labels) override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      prompts.push_back(prompt);
    }
    return inner_.score_labels(prompt, labels);
  }
  std::string generate_text(const std::string& prompt, int max_tokens) override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      prompts.push_back(prompt);
    }
    return inner_.generate_text(prompt, max_tokens);
  }
  const BackendDescriptor& descriptor() const override { return inner_.descriptor(); }
  uint64_t call_count() const override { return inner_.call_count(); }

  std::vector<std::string> prompts;

 private:
  ScriptedBackend inner_;
  std::mutex mutex_;
};

inline size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  size_t count = 0, pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::stringstream ss(text);
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

}  // namespace ficl::testing
