#include "ficl/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "ficl/templates.hpp"
#include "json.hpp"

namespace ficl {

using nlohmann::json;

const char* prior_mode_name(PriorMode m) {
  switch (m) {
    case PriorMode::Icl: return "icl";
    case PriorMode::RandomError: return "random_error";
    case PriorMode::ZeroShot: return "zero_shot";
  }
  return "icl";
}

PriorMode prior_mode_from(const std::string& name) {
  std::string n = to_lower(trim(name));
  if (n == "icl") return PriorMode::Icl;
  if (n == "random_error" || n == "r") return PriorMode::RandomError;
  if (n == "zero_shot" || n == "z") return PriorMode::ZeroShot;
  throw Error(Errc::InvalidConfig, "unknown prior mode '" + name + "'");
}

namespace {

// Framework feedback sentence parts: correctness statement (fc) and
// adjustment guidance (fa), combined as "<fc> <fa>".
const char* kFc1Correct = "You are correct!";
const char* kFc1Wrong = "You are wrong!";
const char* kFc2Correct = "The answer is accurate.";
const char* kFc2Wrong = "The answer is incorrect.";
const char* kFa1OnCorrect = "Stay determined and keep moving forward.";
const char* kFa1OnWrong = "Make sure your prediction is accurate.";
const char* kFa2OnCorrect = "Please keep up the good work.";
const char* kFa2OnWrong = "Please adjust to ensure the prediction is correct.";

}  // namespace

FeedbackTexts FeedbackTexts::preset(const std::string& id, bool table9_literal) {
  std::string n = to_lower(trim(id));
  bool fc2 = false, fa2 = false;
  if (n == "fc1+fa1") {
  } else if (n == "fc1+fa2") {
    fa2 = true;
  } else if (n == "fc2+fa1") {
    fc2 = true;
  } else if (n == "fc2+fa2") {
    fc2 = fa2 = true;
  } else {
    throw Error(Errc::InvalidConfig, "unknown feedback preset '" + id + "'");
  }
  std::string fa_correct = fa2 ? kFa2OnCorrect : kFa1OnCorrect;
  std::string fa_wrong = fa2 ? kFa2OnWrong : kFa1OnWrong;
  // The variant table lists the fa1 sentences in swapped columns.
  if (table9_literal && !fa2) std::swap(fa_correct, fa_wrong);
  FeedbackTexts out;
  out.preset_id = n + (table9_literal ? ":table9" : "");
  out.on_correct = std::string(fc2 ? kFc2Correct : kFc1Correct) + " " + fa_correct;
  out.on_wrong = std::string(fc2 ? kFc2Wrong : kFc1Wrong) + " " + fa_wrong;
  return out;
}

FeedbackTexts FeedbackTexts::custom(std::string on_correct, std::string on_wrong) {
  FeedbackTexts out;
  out.preset_id = "custom";
  out.on_correct = std::move(on_correct);
  out.on_wrong = std::move(on_wrong);
  return out;
}

const char* group_order_name(GroupOrder g) {
  switch (g) {
    case GroupOrder::WrongFirst: return "wrong_first";
    case GroupOrder::CorrectFirst: return "correct_first";
    case GroupOrder::Alternating: return "alternating";
  }
  return "wrong_first";
}

GroupOrder group_order_from(const std::string& name) {
  std::string n = to_lower(trim(name));
  if (n == "wrong_first") return GroupOrder::WrongFirst;
  if (n == "correct_first") return GroupOrder::CorrectFirst;
  if (n == "alternating") return GroupOrder::Alternating;
  throw Error(Errc::InvalidConfig, "unknown ordering '" + name + "'");
}

const char* score_order_name(ScoreOrder s) {
  return s == ScoreOrder::Desc ? "desc" : "asc";
}

ScoreOrder score_order_from(const std::string& name) {
  std::string n = to_lower(trim(name));
  if (n == "desc") return ScoreOrder::Desc;
  if (n == "asc") return ScoreOrder::Asc;
  throw Error(Errc::InvalidConfig, "unknown score order '" + name + "'");
}

PromptConfig PromptConfig::effective() const {
  PromptConfig out = *this;
  if (out.conventional) {
    out.include_prediction = false;
    out.include_feedback = false;
  }
  return out;
}

void PromptConfig::validate() const {
  if (k < 1) throw Error(Errc::InvalidConfig, "k must be >= 1");
  if (wrong_count > k)
    throw Error(Errc::InvalidConfig, "wrong_count " + std::to_string(wrong_count) +
                                         " exceeds k=" + std::to_string(k));
}

std::string PromptConfig::fingerprint() const {
  PromptConfig e = effective();
  std::string repr = "k=" + std::to_string(e.k) +
                     ";wrong=" + std::to_string(e.effective_wrong_count()) +
                     ";group=" + group_order_name(e.group_order) +
                     ";sort=" + score_order_name(e.score_order) +
                     ";inst=" + std::to_string(e.include_instruction) +
                     ";label=" + std::to_string(e.include_label) +
                     ";pred=" + std::to_string(e.include_prediction) +
                     ";feed=" + std::to_string(e.include_feedback) +
                     ";conv=" + std::to_string(e.conventional);
  return fingerprint_hex(repr);
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string substitute_input_fields(const std::string& line, const LabeledExample& ex,
                                    const std::string& template_id) {
  static const std::pair<const char*, std::string LabeledExample::*> kFields[] = {
      {"{text}", &LabeledExample::text},
      {"{aspect}", &LabeledExample::aspect},
      {"{target}", &LabeledExample::target},
      {"{premise}", &LabeledExample::premise},
      {"{hypothesis}", &LabeledExample::hypothesis},
  };
  std::string out = line;
  for (const auto& [placeholder, member] : kFields) {
    size_t pos;
    while ((pos = out.find(placeholder)) != std::string::npos) {
      const std::string& value = ex.*member;
      if (value.empty())
        throw Error(Errc::TemplateFieldMissing, "example '" + ex.id + "' lacks " + placeholder +
                                                    " required by template '" + template_id + "'");
      out.replace(pos, std::string(placeholder).size(), value);
    }
  }
  return out;
}

std::string replace_one(const std::string& line, const std::string& placeholder,
                        const std::string& value) {
  std::string out = line;
  size_t pos = out.find(placeholder);
  if (pos != std::string::npos) out.replace(pos, placeholder.size(), value);
  return out;
}

constexpr const char* kExamplesHeader = "Here are some examples:";
constexpr const char* kFeedbackLabelWord = "Correct Label:";
constexpr const char* kConventionalLabelWord = "Label:";

std::string conventionalize(const std::string& line) {
  if (line.rfind(kFeedbackLabelWord, 0) == 0)
    return std::string(kConventionalLabelWord) + line.substr(std::string(kFeedbackLabelWord).size());
  return line;
}

// Demonstration block lines for one quadruple under the effective config.
std::vector<std::string> demonstration_block(const PromptTemplate& tmpl,
                                             const DemonstrationQuadruple& quad,
                                             const PromptConfig& cfg) {
  std::vector<std::string> lines;
  for (const auto& raw : tmpl.example_lines) {
    if (raw.find("{prediction}") != std::string::npos) {
      if (!cfg.include_prediction) continue;
      lines.push_back(replace_one(raw, "{prediction}", quad.prediction));
    } else if (raw.find("{label}") != std::string::npos) {
      if (!cfg.include_label) continue;
      std::string line = cfg.conventional ? conventionalize(raw) : raw;
      lines.push_back(replace_one(line, "{label}", quad.gold));
    } else if (raw == "{feedback}") {
      if (!cfg.include_feedback) continue;
      lines.push_back(quad.feedback);
    } else {
      lines.push_back(substitute_input_fields(raw, quad.example, tmpl.id));
    }
  }
  return lines;
}

std::vector<std::string> test_block(const PromptTemplate& tmpl, const LabeledExample& test,
                                    const PromptConfig& cfg) {
  std::vector<std::string> lines;
  for (const auto& raw : tmpl.test_lines) {
    if (raw.rfind(kFeedbackLabelWord, 0) == 0)
      lines.push_back(cfg.conventional ? conventionalize(raw) : raw);
    else
      lines.push_back(substitute_input_fields(raw, test, tmpl.id));
  }
  return lines;
}

AssembledPrompt assemble(const LabeledExample& test,
                         const std::vector<DemonstrationQuadruple>& quadruples,
                         const TaskSpec& spec, const PromptConfig& prompt_config,
                         const FeedbackTexts& feedback, const std::string* pre_test_line) {
  prompt_config.validate();
  PromptConfig cfg = prompt_config.effective();
  const PromptTemplate& tmpl = builtin_template(spec.template_id);

  if (cfg.include_feedback && !quadruples.empty() &&
      (feedback.on_correct.empty() || feedback.on_wrong.empty()))
    throw Error(Errc::InvalidConfig, "feedback enabled but feedback texts are empty");

  std::vector<std::string> lines;
  if (cfg.include_instruction && !tmpl.instruction.empty()) lines.push_back(tmpl.instruction);
  if (!quadruples.empty()) lines.push_back(kExamplesHeader);

  AssembledPrompt prompt;
  for (const auto& quad : quadruples) {
    lines.push_back("");
    for (auto& line : demonstration_block(tmpl, quad, cfg)) lines.push_back(std::move(line));
    prompt.demonstration_ids.push_back(quad.example.id);
  }
  lines.push_back("");
  if (pre_test_line != nullptr) {
    lines.push_back(*pre_test_line);
    lines.push_back("");
  }
  for (auto& line : test_block(tmpl, test, cfg)) lines.push_back(std::move(line));

  std::string text;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) text += '\n';
    text += lines[i];
  }
  prompt.text = std::move(text);
  prompt.config_fingerprint = prompt_config.fingerprint();
  return prompt;
}

}  // namespace

AssembledPrompt render_prompt(const LabeledExample& test,
                              const std::vector<DemonstrationQuadruple>& quadruples,
                              const TaskSpec& spec, const PromptConfig& prompt_config,
                              const FeedbackTexts& feedback) {
  return assemble(test, quadruples, spec, prompt_config, feedback, nullptr);
}

// ---------------------------------------------------------------------------
// Step 1

std::vector<PriorPredictionRecord> load_prior_cache(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::MissingFile, file.string());
  std::vector<PriorPredictionRecord> records;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaViolation,
                  file.string() + " row " + std::to_string(line_no) + ": " + e.what());
    }
    PriorPredictionRecord rec;
    try {
      rec.example_id = row.at("example_id").get<std::string>();
      rec.predicted_label = row.at("predicted_label").get<std::string>();
      rec.is_correct = row.at("is_correct").get<bool>();
      rec.source_mode = prior_mode_from(row.at("source_mode").get<std::string>());
      rec.seed = row.at("seed").get<uint64_t>();
      rec.model = row.at("model").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaViolation,
                  file.string() + " row " + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_prior_cache(const std::vector<PriorPredictionRecord>& records,
                      const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
    for (const auto& rec : records) {
      json row = {{"example_id", rec.example_id},
                  {"predicted_label", rec.predicted_label},
                  {"is_correct", rec.is_correct},
                  {"source_mode", prior_mode_name(rec.source_mode)},
                  {"seed", rec.seed},
                  {"model", rec.model}};
      out << row.dump() << "\n";
    }
  }
  std::filesystem::rename(tmp, file);
}

namespace {

uint64_t derived_seed(uint64_t experiment_seed, const std::string& example_id) {
  return experiment_seed ^ fnv1a64(example_id);
}

// Conventional step-1 prompt for one pool example: its 4 seeded-random
// neighbours (self excluded) as label-only demonstrations.
AssembledPrompt prior_prompt(const CandidatePool& pool, size_t target, const TaskSpec& spec,
                             uint64_t seed, PriorMode mode) {
  PromptConfig cfg;
  cfg.conventional = true;
  std::vector<DemonstrationQuadruple> quads;
  if (mode == PriorMode::Icl) {
    constexpr size_t kPriorShots = 4;
    SeededRng rng(derived_seed(seed, pool.examples[target].id));
    std::vector<size_t> others;
    others.reserve(pool.examples.size() - 1);
    for (size_t i = 0; i < pool.examples.size(); ++i)
      if (i != target) others.push_back(i);
    for (size_t pick : rng.sample_indices(others.size(), kPriorShots)) {
      DemonstrationQuadruple quad;
      quad.example = pool.examples[others[pick]];
      quad.gold = quad.example.gold_label;
      quad.score = static_cast<double>(kPriorShots - quads.size());
      quads.push_back(std::move(quad));
    }
  }
  return render_prompt(pool.examples[target], quads, spec, cfg, FeedbackTexts{});
}

}  // namespace

std::vector<PriorPredictionRecord> acquire_prior_predictions(
    const CandidatePool& pool, const TaskSpec& spec, CompletionsBackend& backend, uint64_t seed,
    PriorMode mode, const std::optional<std::filesystem::path>& cache_file) {
  if (mode == PriorMode::Icl && pool.examples.size() < 5)
    throw Error(Errc::PoolTooSmall, "ICL prior predictions need at least 5 pool examples, got " +
                                        std::to_string(pool.examples.size()));
  const std::string& model = backend.descriptor().model;

  std::map<std::string, PriorPredictionRecord> cached;
  if (cache_file && std::filesystem::exists(*cache_file)) {
    for (auto& rec : load_prior_cache(*cache_file))
      if (rec.source_mode == mode && rec.seed == seed && rec.model == model)
        cached.emplace(rec.example_id, std::move(rec));
  }

  std::vector<PriorPredictionRecord> records(pool.examples.size());
  std::vector<size_t> missing;
  for (size_t i = 0; i < pool.examples.size(); ++i) {
    auto it = cached.find(pool.examples[i].id);
    if (it != cached.end()) {
      if (it->second.is_correct != (it->second.predicted_label == pool.examples[i].gold_label))
        throw Error(Errc::SchemaViolation,
                    "cached record for '" + it->first + "' has inconsistent correctness flag");
      records[i] = it->second;
    } else {
      missing.push_back(i);
    }
  }

  auto fill = [&](size_t m) {
    size_t i = missing[m];
    const LabeledExample& ex = pool.examples[i];
    PriorPredictionRecord rec;
    rec.example_id = ex.id;
    rec.source_mode = mode;
    rec.seed = seed;
    rec.model = model;
    if (mode == PriorMode::RandomError) {
      SeededRng rng(derived_seed(seed, ex.id));
      size_t gold_pos = std::find(spec.label_space.begin(), spec.label_space.end(), ex.gold_label) -
                        spec.label_space.begin();
      size_t pick = rng.below(spec.label_space.size() - 1);
      if (pick >= gold_pos) ++pick;
      rec.predicted_label = spec.label_space[pick];
    } else {
      try {
        AssembledPrompt prompt = prior_prompt(pool, i, spec, seed, mode);
        rec.predicted_label = argmax_label(backend.score_labels(prompt.text, spec.label_space),
                                           spec.label_space);
      } catch (const Error& e) {
        throw Error(e.code(), "example '" + ex.id + "': " + e.what());
      }
    }
    rec.is_correct = rec.predicted_label == ex.gold_label;
    records[i] = std::move(rec);
  };
  parallel_for(missing.size(), backend.descriptor().max_parallel, fill);

  if (cache_file && !missing.empty()) save_prior_cache(records, *cache_file);
  return records;
}

// ---------------------------------------------------------------------------
// Step 2

SubPools partition_pool(const CandidatePool& pool,
                        const std::vector<PriorPredictionRecord>& records) {
  std::map<std::string, const PriorPredictionRecord*> by_id;
  std::set<std::string> pool_ids;
  for (const auto& ex : pool.examples) pool_ids.insert(ex.id);
  for (const auto& rec : records) {
    if (pool_ids.count(rec.example_id) == 0)
      throw Error(Errc::MissingRecord, "record for unknown example '" + rec.example_id + "'");
    by_id[rec.example_id] = &rec;
  }

  SubPools out;
  for (const auto& ex : pool.examples) {
    auto it = by_id.find(ex.id);
    if (it == by_id.end()) throw Error(Errc::MissingRecord, "no record for example '" + ex.id + "'");
    if (it->second->is_correct)
      out.correct.emplace_back(ex, *it->second);
    else
      out.wrong.emplace_back(ex, *it->second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Step 3

namespace {

std::vector<DemonstrationQuadruple> retrieve_group(
    const LabeledExample& test,
    const std::vector<std::pair<LabeledExample, PriorPredictionRecord>>& members, size_t want,
    bool from_wrong, const TaskSpec& spec, const RetrieverConfig& base_config,
    const FeedbackTexts& feedback, const EmbeddingStore* embeddings, uint64_t experiment_seed) {
  std::vector<DemonstrationQuadruple> out;
  if (want == 0) return out;

  std::vector<LabeledExample> pool;
  pool.reserve(members.size());
  std::map<std::string, const PriorPredictionRecord*> record_by_id;
  for (const auto& [ex, rec] : members) {
    pool.push_back(ex);
    record_by_id[ex.id] = &rec;
  }

  RetrieverConfig cfg = base_config;
  cfg.seed = derived_seed(experiment_seed, test.id);
  if (!cfg.kmeans_seed) cfg.kmeans_seed = experiment_seed;

  RetrievalRanking ranking = select_for_test(test, pool, spec.kind, cfg, want, embeddings);
  std::map<std::string, const LabeledExample*> example_by_id;
  for (const auto& ex : pool) example_by_id[ex.id] = &ex;
  for (const auto& entry : ranking.entries) {
    DemonstrationQuadruple quad;
    quad.example = *example_by_id.at(entry.id);
    quad.prediction = record_by_id.at(entry.id)->predicted_label;
    quad.gold = quad.example.gold_label;
    quad.feedback = from_wrong ? feedback.on_wrong : feedback.on_correct;
    quad.score = entry.score;
    quad.from_wrong_pool = from_wrong;
    out.push_back(std::move(quad));
  }
  return out;
}

}  // namespace

SelectionResult select_demonstrations(const LabeledExample& test, const SubPools& subpools,
                                      const TaskSpec& spec, const RetrieverConfig& retriever,
                                      const PromptConfig& prompt_config,
                                      const FeedbackTexts& feedback,
                                      const EmbeddingStore* embeddings, uint64_t experiment_seed) {
  prompt_config.validate();
  if (subpools.correct.empty() && subpools.wrong.empty())
    throw Error(Errc::BothPoolsEmpty, "no demonstrations available");

  const size_t k = static_cast<size_t>(prompt_config.k);
  const size_t wrong_request = static_cast<size_t>(prompt_config.effective_wrong_count());
  const size_t correct_request = k - wrong_request;
  const size_t n_wrong = subpools.wrong.size();
  const size_t n_correct = subpools.correct.size();

  size_t want_wrong = std::min(wrong_request, n_wrong);
  size_t want_correct = std::min(correct_request, n_correct);
  size_t deficit = k - want_wrong - want_correct;
  if (deficit > 0) {
    size_t extra_wrong = std::min(deficit, n_wrong - want_wrong);
    want_wrong += extra_wrong;
    deficit -= extra_wrong;
    size_t extra_correct = std::min(deficit, n_correct - want_correct);
    want_correct += extra_correct;
  }

  SelectionResult result;
  result.backfilled = want_wrong != wrong_request || want_correct != correct_request;

  auto wrong_group = retrieve_group(test, subpools.wrong, want_wrong, true, spec, retriever,
                                    feedback, embeddings, experiment_seed);
  auto correct_group = retrieve_group(test, subpools.correct, want_correct, false, spec, retriever,
                                      feedback, embeddings, experiment_seed);
  if (prompt_config.score_order == ScoreOrder::Asc) {
    std::reverse(wrong_group.begin(), wrong_group.end());
    std::reverse(correct_group.begin(), correct_group.end());
  }

  switch (prompt_config.group_order) {
    case GroupOrder::WrongFirst:
      result.quadruples = std::move(wrong_group);
      for (auto& q : correct_group) result.quadruples.push_back(std::move(q));
      break;
    case GroupOrder::CorrectFirst:
      result.quadruples = std::move(correct_group);
      for (auto& q : wrong_group) result.quadruples.push_back(std::move(q));
      break;
    case GroupOrder::Alternating: {
      size_t wi = 0, ci = 0;
      while (wi < wrong_group.size() || ci < correct_group.size()) {
        if (wi < wrong_group.size()) result.quadruples.push_back(std::move(wrong_group[wi++]));
        if (ci < correct_group.size()) result.quadruples.push_back(std::move(correct_group[ci++]));
      }
      break;
    }
  }
  return result;
}

Prediction predict(const LabeledExample& test, const SubPools& subpools, const TaskSpec& spec,
                   const RetrieverConfig& retriever, const PromptConfig& prompt_config,
                   const FeedbackTexts& feedback, CompletionsBackend& backend,
                   const EmbeddingStore* embeddings, uint64_t experiment_seed) {
  SelectionResult selection = select_demonstrations(test, subpools, spec, retriever, prompt_config,
                                                    feedback, embeddings, experiment_seed);
  AssembledPrompt prompt = render_prompt(test, selection.quadruples, spec, prompt_config, feedback);
  prompt.backfilled = selection.backfilled;
  LabelScoreMap scores = backend.score_labels(prompt.text, spec.label_space);
  return {argmax_label(scores, spec.label_space), std::move(prompt)};
}

std::vector<DemonstrationQuadruple> select_conventional(
    const LabeledExample& test, const CandidatePool& pool, const TaskSpec& spec,
    const RetrieverConfig& retriever, const PromptConfig& prompt_config,
    const EmbeddingStore* embeddings, uint64_t experiment_seed) {
  prompt_config.validate();
  if (pool.examples.empty()) throw Error(Errc::EmptyPool, "conventional ICL over empty pool");

  RetrieverConfig cfg = retriever;
  cfg.seed = derived_seed(experiment_seed, test.id);
  if (!cfg.kmeans_seed) cfg.kmeans_seed = experiment_seed;

  RetrievalRanking ranking = select_for_test(test, pool.examples, spec.kind, cfg,
                                             static_cast<size_t>(prompt_config.k), embeddings);
  std::map<std::string, const LabeledExample*> by_id;
  for (const auto& ex : pool.examples) by_id[ex.id] = &ex;

  std::vector<DemonstrationQuadruple> quads;
  for (const auto& entry : ranking.entries) {
    DemonstrationQuadruple quad;
    quad.example = *by_id.at(entry.id);
    quad.gold = quad.example.gold_label;
    quad.score = entry.score;
    quads.push_back(std::move(quad));
  }
  if (prompt_config.score_order == ScoreOrder::Asc) std::reverse(quads.begin(), quads.end());
  return quads;
}

Prediction predict_conventional(const LabeledExample& test, const CandidatePool& pool,
                                const TaskSpec& spec, const RetrieverConfig& retriever,
                                const PromptConfig& prompt_config, CompletionsBackend& backend,
                                const EmbeddingStore* embeddings, uint64_t experiment_seed) {
  auto quads =
      select_conventional(test, pool, spec, retriever, prompt_config, embeddings, experiment_seed);
  PromptConfig cfg_conv = prompt_config;
  cfg_conv.conventional = true;
  AssembledPrompt prompt = render_prompt(test, quads, spec, cfg_conv, FeedbackTexts{});
  LabelScoreMap scores = backend.score_labels(prompt.text, spec.label_space);
  return {argmax_label(scores, spec.label_space), std::move(prompt)};
}

std::string explain(const LabeledExample& test, const std::vector<DemonstrationQuadruple>& quadruples,
                    const TaskSpec& spec, const PromptConfig& prompt_config,
                    const FeedbackTexts& feedback, CompletionsBackend& backend, int max_tokens) {
  if (quadruples.empty())
    throw Error(Errc::ZeroShotExplainUnsupported, "explanation needs at least one demonstration");
  PromptConfig cfg = prompt_config.effective();
  bool with_feedback = cfg.include_feedback && !cfg.conventional;
  std::string instruction =
      std::string("Provide the correct label for the following sample and explain your answer "
                  "based on the above examples") +
      (with_feedback ? " and feedback." : ".");
  AssembledPrompt prompt = assemble(test, quadruples, spec, prompt_config, feedback, &instruction);
  return backend.generate_text(prompt.text, max_tokens);
}

}  // namespace ficl
