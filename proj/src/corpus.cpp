#include "ficl/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "ficl/templates.hpp"
#include "json.hpp"

namespace ficl {

using nlohmann::json;

const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::SC: return "sc";
    case TaskKind::ASC: return "asc";
    case TaskKind::ED: return "ed";
    case TaskKind::STANCE: return "stance";
    case TaskKind::IRONY: return "irony";
    case TaskKind::NLI: return "nli";
  }
  return "sc";
}

TaskKind task_kind_from(const std::string& name) {
  std::string n = to_lower(trim(name));
  if (n == "sc") return TaskKind::SC;
  if (n == "asc") return TaskKind::ASC;
  if (n == "ed") return TaskKind::ED;
  if (n == "stance") return TaskKind::STANCE;
  if (n == "irony") return TaskKind::IRONY;
  if (n == "nli") return TaskKind::NLI;
  throw Error(Errc::InvalidConfig, "unknown task kind '" + name + "'");
}

void TaskSpec::validate() const {
  if (label_space.empty()) throw Error(Errc::InvalidConfig, "task '" + id + "': empty label space");
  std::set<std::string> seen;
  for (const auto& label : label_space) {
    if (label.empty()) throw Error(Errc::InvalidConfig, "task '" + id + "': empty label word");
    if (label != to_lower(label))
      throw Error(Errc::InvalidConfig, "task '" + id + "': label '" + label + "' is not lowercase");
    if (!seen.insert(label).second)
      throw Error(Errc::InvalidConfig, "task '" + id + "': duplicate label '" + label + "'");
  }
  bool binary = metric == MetricKind::BinaryF1;
  if (binary != (label_space.size() == 2))
    throw Error(Errc::InvalidConfig,
                "task '" + id + "': binary-F1 requires exactly 2 labels, macro-F1 otherwise");
  if (!template_exists(template_id))
    throw Error(Errc::InvalidConfig, "task '" + id + "': unknown template '" + template_id + "'");
  std::set<std::string> subtokens;
  for (const auto& label : label_space) {
    if (!subtokens.insert(label_first_subtoken(label)).second)
      throw Error(Errc::FirstSubtokenCollision,
                  "task '" + id + "': labels share first subtoken '" +
                      label_first_subtoken(label) + "'");
  }
}

namespace {

TaskSpec make_task(std::string id, TaskKind kind, std::vector<std::string> labels,
                   std::string instruction, MetricKind metric, std::string template_id) {
  TaskSpec t;
  t.id = std::move(id);
  t.kind = kind;
  t.label_space = std::move(labels);
  t.instruction = std::move(instruction);
  t.metric = metric;
  t.template_id = std::move(template_id);
  return t;
}

const std::vector<TaskSpec>& builtin_tasks() {
  static const std::vector<TaskSpec> tasks = {
      make_task("sst2", TaskKind::SC, {"positive", "negative"},
                "Recognize the sentiment of the sentence.", MetricKind::BinaryF1, "sc"),
      make_task("twsenti", TaskKind::SC, {"positive", "negative", "neutral"},
                "Recognize the sentiment of the sentence.", MetricKind::MacroF1, "sc"),
      make_task("poem", TaskKind::SC, {"positive", "negative", "neutral"},
                "Recognize the sentiment of the sentence.", MetricKind::MacroF1, "sc"),
      make_task("finance", TaskKind::SC, {"positive", "negative", "neutral"},
                "Recognize the sentiment of the sentence.", MetricKind::MacroF1, "sc"),
      make_task("rest", TaskKind::ASC, {"positive", "negative", "neutral"},
                "Recognize the sentiment polarity for the given aspect term in the sentence.",
                MetricKind::MacroF1, "asc"),
      make_task("laptop", TaskKind::ASC, {"positive", "negative", "neutral"},
                "Recognize the sentiment polarity for the given aspect term in the sentence.",
                MetricKind::MacroF1, "asc"),
      make_task("twitter", TaskKind::ASC, {"positive", "negative", "neutral"},
                "Recognize the sentiment polarity for the given aspect term in the sentence.",
                MetricKind::MacroF1, "asc"),
      make_task("emoc", TaskKind::ED, {"happy", "sad", "angry", "others"},
                "Recognize the emotion of the sentence.", MetricKind::MacroF1, "ed"),
      make_task("twemo", TaskKind::ED, {"anger", "joy", "optimism", "sadness"},
                "Recognize the emotion of the sentence.", MetricKind::MacroF1, "ed"),
      make_task("pstance", TaskKind::STANCE, {"favor", "against"},
                "Recognize the stance of the sentence to the given target.", MetricKind::BinaryF1,
                "stance"),
      make_task("twirony", TaskKind::IRONY, {"irony", "non-irony"},
                "Determine whether the sentence is ironic or not.", MetricKind::BinaryF1, "irony"),
      make_task("mnli", TaskKind::NLI, {"entailment", "contradiction", "neutral"},
                "Recognize textual entailment between the 2 texts.", MetricKind::MacroF1, "nli"),
  };
  return tasks;
}

}  // namespace

const TaskSpec& builtin_task(const std::string& name) {
  std::string n = to_lower(trim(name));
  for (const auto& t : builtin_tasks())
    if (t.id == n) return t;
  throw Error(Errc::InvalidConfig, "unknown task '" + name + "'");
}

std::vector<std::string> builtin_task_names() {
  std::vector<std::string> names;
  for (const auto& t : builtin_tasks()) names.push_back(t.id);
  return names;
}

std::string DatasetBundle::fingerprint() const {
  std::string acc;
  auto feed = [&acc](const std::vector<LabeledExample>& rows) {
    for (const auto& r : rows) {
      acc += fingerprint_hex(r.id + "\x1f" + r.text + "\x1f" + r.aspect + "\x1f" + r.target +
                             "\x1f" + r.premise + "\x1f" + r.hypothesis + "\x1f" + r.gold_label);
      acc += '\n';
    }
    acc += "\x1e";
  };
  feed(train);
  feed(dev);
  feed(test);
  return fingerprint_hex(acc);
}

namespace {

std::string require_string(const json& row, const char* key, size_t line_no) {
  auto it = row.find(key);
  if (it == row.end() || !it->is_string() || it->get<std::string>().empty())
    throw Error(Errc::SchemaViolation,
                "row " + std::to_string(line_no) + ": missing or empty '" + key + "'");
  return it->get<std::string>();
}

std::string optional_string(const json& row, const char* key, size_t line_no) {
  auto it = row.find(key);
  if (it == row.end()) return {};
  if (!it->is_string())
    throw Error(Errc::SchemaViolation,
                "row " + std::to_string(line_no) + ": '" + std::string(key) + "' must be a string");
  return it->get<std::string>();
}

void forbid(const json& row, const char* key, size_t line_no) {
  if (row.contains(key))
    throw Error(Errc::SchemaViolation, "row " + std::to_string(line_no) + ": field '" +
                                           std::string(key) + "' not allowed for this task");
}

}  // namespace

std::vector<LabeledExample> load_examples_jsonl(const std::filesystem::path& file,
                                                const TaskSpec& spec) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::MissingFile, file.string());

  std::vector<LabeledExample> rows;
  std::set<std::string> ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaViolation, "row " + std::to_string(line_no) + ": " + e.what());
    }
    if (!row.is_object())
      throw Error(Errc::SchemaViolation, "row " + std::to_string(line_no) + ": not an object");

    LabeledExample ex;
    ex.id = require_string(row, "id", line_no);
    if (!ids.insert(ex.id).second)
      throw Error(Errc::SchemaViolation,
                  "row " + std::to_string(line_no) + ": duplicate id '" + ex.id + "'");

    switch (spec.kind) {
      case TaskKind::SC:
      case TaskKind::ED:
      case TaskKind::IRONY:
        ex.text = require_string(row, "text", line_no);
        forbid(row, "aspect", line_no);
        forbid(row, "target", line_no);
        forbid(row, "premise", line_no);
        forbid(row, "hypothesis", line_no);
        break;
      case TaskKind::ASC:
        ex.text = require_string(row, "text", line_no);
        ex.aspect = require_string(row, "aspect", line_no);
        forbid(row, "target", line_no);
        forbid(row, "premise", line_no);
        forbid(row, "hypothesis", line_no);
        break;
      case TaskKind::STANCE:
        ex.text = require_string(row, "text", line_no);
        ex.target = require_string(row, "target", line_no);
        forbid(row, "aspect", line_no);
        forbid(row, "premise", line_no);
        forbid(row, "hypothesis", line_no);
        break;
      case TaskKind::NLI:
        ex.premise = require_string(row, "premise", line_no);
        ex.hypothesis = require_string(row, "hypothesis", line_no);
        ex.text = optional_string(row, "text", line_no);  // unused when premise present
        forbid(row, "aspect", line_no);
        forbid(row, "target", line_no);
        break;
    }

    std::string raw_label = require_string(row, "label", line_no);
    std::string label = trim(raw_label);
    if (spec.normalize_case) label = to_lower(label);
    if (std::find(spec.label_space.begin(), spec.label_space.end(), label) ==
        spec.label_space.end())
      throw Error(Errc::UnknownLabel,
                  "row " + std::to_string(line_no) + ": label '" + raw_label + "'");
    ex.gold_label = label;
    rows.push_back(std::move(ex));
  }
  return rows;
}

DatasetBundle load_dataset(const std::filesystem::path& dir, const TaskSpec& spec) {
  if (!std::filesystem::exists(dir)) throw Error(Errc::MissingFile, dir.string());
  DatasetBundle bundle;
  bundle.source = dir.string();
  bundle.train = load_examples_jsonl(dir / "train.jsonl", spec);
  if (std::filesystem::exists(dir / "dev.jsonl"))
    bundle.dev = load_examples_jsonl(dir / "dev.jsonl", spec);
  bundle.test = load_examples_jsonl(dir / "test.jsonl", spec);

  std::set<std::string> ids;
  for (const auto* split : {&bundle.train, &bundle.dev, &bundle.test})
    for (const auto& ex : *split)
      if (!ids.insert(ex.id).second)
        throw Error(Errc::SchemaViolation, "id '" + ex.id + "' appears in multiple splits");
  return bundle;
}

void save_examples_jsonl(const std::vector<LabeledExample>& rows,
                         const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + file.string());
  for (const auto& ex : rows) {
    json row;
    row["id"] = ex.id;
    if (!ex.text.empty()) row["text"] = ex.text;
    if (!ex.aspect.empty()) row["aspect"] = ex.aspect;
    if (!ex.target.empty()) row["target"] = ex.target;
    if (!ex.premise.empty()) row["premise"] = ex.premise;
    if (!ex.hypothesis.empty()) row["hypothesis"] = ex.hypothesis;
    row["label"] = ex.gold_label;
    out << row.dump() << "\n";
  }
}

void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_examples_jsonl(bundle.train, dir / "train.jsonl");
  if (!bundle.dev.empty()) save_examples_jsonl(bundle.dev, dir / "dev.jsonl");
  save_examples_jsonl(bundle.test, dir / "test.jsonl");
}

CandidatePool sample_pool(const std::vector<LabeledExample>& train, const TaskSpec& spec,
                          int total, uint64_t seed) {
  if (total < static_cast<int>(spec.label_space.size()))
    throw Error(Errc::InvalidConfig, "pool size " + std::to_string(total) +
                                         " below class count " +
                                         std::to_string(spec.label_space.size()));

  size_t classes = spec.label_space.size();
  int base = total / static_cast<int>(classes);
  int remainder = total % static_cast<int>(classes);

  CandidatePool pool;
  pool.task_id = spec.id;
  pool.seed = seed;

  SeededRng rng(seed);
  for (size_t c = 0; c < classes; ++c) {
    const std::string& label = spec.label_space[c];
    std::vector<size_t> members;
    for (size_t i = 0; i < train.size(); ++i)
      if (train[i].gold_label == label) members.push_back(i);
    if (members.empty()) throw Error(Errc::EmptyClass, label);

    int quota = base + (static_cast<int>(c) < remainder ? 1 : 0);
    std::vector<size_t> chosen;
    if (members.size() <= static_cast<size_t>(quota)) {
      chosen = members;
      if (members.size() < static_cast<size_t>(quota))
        pool.shortfall[label] = quota - static_cast<int>(members.size());
    } else {
      for (size_t pick : rng.sample_indices(members.size(), static_cast<size_t>(quota)))
        chosen.push_back(members[pick]);
    }
    for (size_t i : chosen) pool.examples.push_back(train[i]);
    pool.per_class_counts[label] = static_cast<int>(chosen.size());
  }
  return pool;
}

std::vector<LabeledExample> cap_test(const std::vector<LabeledExample>& test, size_t limit,
                                     uint64_t seed) {
  if (limit == 0) throw Error(Errc::InvalidConfig, "test cap must be positive");
  if (test.size() <= limit) return test;
  SeededRng rng(seed);
  std::vector<size_t> picks = rng.sample_indices(test.size(), limit);
  std::sort(picks.begin(), picks.end());
  std::vector<LabeledExample> out;
  out.reserve(limit);
  for (size_t i : picks) out.push_back(test[i]);
  return out;
}

}  // namespace ficl
