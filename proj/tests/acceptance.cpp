// Acceptance suite: each criterion runs at its stated tolerance and prints a
// single [PASS]/[FAIL] line. The only network-touching criterion (9) is off
// unless FICL_SMOKE_ENDPOINT is set; everything else is fully offline.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ficl/runner.hpp"
#include "ficl/templates.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace ficl;
namespace fs = std::filesystem;

namespace {

struct Checker {
  int failures = 0;
  std::string first_failure;

  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures;
    if (first_failure.empty()) first_failure = what;
  }
};

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("ficl_acceptance_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LabeledExample example_of(const std::string& id, const std::string& text,
                          const std::string& label) {
  LabeledExample ex;
  ex.id = id;
  ex.text = text;
  ex.gold_label = label;
  return ex;
}

std::vector<LabeledExample> make_examples(const std::string& prefix, size_t n,
                                          const std::vector<std::string>& labels, bool marker) {
  static const char* kWords[] = {"brisk",  "amber", "quiet", "meadow", "copper",
                                 "drift",  "lively", "stone", "harbor", "velvet"};
  std::vector<LabeledExample> out;
  for (size_t i = 0; i < n; ++i) {
    const std::string& label = labels[i % labels.size()];
    std::string text = std::string(kWords[i % 10]) + " " + kWords[(i * 3 + 1) % 10] + " sample " +
                       std::to_string(i);
    if (marker) text += " [" + label + "]";
    out.push_back(example_of(prefix + std::to_string(i), text, label));
  }
  return out;
}

DemonstrationQuadruple quad_of(LabeledExample ex, std::string prediction, std::string feedback,
                               double score, bool wrong) {
  DemonstrationQuadruple q;
  q.gold = ex.gold_label;
  q.example = std::move(ex);
  q.prediction = std::move(prediction);
  q.feedback = std::move(feedback);
  q.score = score;
  q.from_wrong_pool = wrong;
  return q;
}

SubPools make_subpools(size_t wrong_n, size_t correct_n, const std::vector<std::string>& labels) {
  SubPools out;
  for (size_t i = 0; i < wrong_n; ++i) {
    LabeledExample ex = example_of("w" + std::to_string(i),
                                   "wrong pool item number " + std::to_string(i) + " waves",
                                   labels[i % labels.size()]);
    out.wrong.emplace_back(
        ex, PriorPredictionRecord{ex.id, labels[(i + 1) % labels.size()], false, PriorMode::Icl, 1,
                                  "m"});
  }
  for (size_t i = 0; i < correct_n; ++i) {
    LabeledExample ex = example_of("c" + std::to_string(i),
                                   "correct pool item number " + std::to_string(i) + " stones",
                                   labels[i % labels.size()]);
    out.correct.emplace_back(
        ex, PriorPredictionRecord{ex.id, ex.gold_label, true, PriorMode::Icl, 1, "m"});
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::stringstream ss(text);
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

ExperimentConfig offline_config(const fs::path& root, bool marker = true) {
  DatasetBundle bundle;
  std::vector<std::string> labels{"positive", "negative", "neutral"};
  bundle.train = make_examples("tr", 60, labels, marker);
  bundle.test = make_examples("te", 24, labels, marker);
  save_dataset(bundle, root / "data");

  ExperimentConfig cfg;
  cfg.dataset_dir = (root / "data").string();
  cfg.task = "twsenti";
  cfg.backend_kind = "scripted";
  cfg.scripted_mode = "marker";
  cfg.retriever = "random";
  cfg.k = 4;
  cfg.pool_size = 12;
  cfg.seeds = {3, 5};
  cfg.test_cap = 18;
  cfg.output_dir = (root / "out").string();
  return cfg;
}

// ---------------------------------------------------------------------------
// Criterion 1: golden prompt fixtures for the six templates + conventional.

void criterion_prompt_fixtures(Checker& c) {
  FeedbackTexts fb = FeedbackTexts::preset("fc1+fa1");
  fs::path fixtures = fs::path(FICL_FIXTURES_DIR) / "prompts";
  PromptConfig cfg;
  cfg.k = 2;

  auto check_prompt = [&](const std::string& name, const AssembledPrompt& prompt) {
    std::string expected = slurp(fixtures / name);
    c.expect(!expected.empty(), name + " fixture missing");
    c.expect(prompt.text == expected, name + " mismatch");
  };

  std::vector<DemonstrationQuadruple> sc_quads{
      quad_of(example_of("w1", "the bread is stale", "negative"), "positive", fb.on_wrong, 2, true),
      quad_of(example_of("c1", "lovely crisp crust", "positive"), "positive", fb.on_correct, 1,
              false)};
  check_prompt("sc_feedback.txt",
               render_prompt(example_of("t", "the soup was fine", "neutral"), sc_quads,
                             builtin_task("twsenti"), cfg, fb));

  PromptConfig conventional = cfg;
  conventional.conventional = true;
  check_prompt("sc_conventional.txt",
               render_prompt(example_of("t", "the soup was fine", "neutral"), sc_quads,
                             builtin_task("twsenti"), conventional, fb));

  LabeledExample aw = example_of("w1", "the battery lasts two days", "positive");
  aw.aspect = "battery";
  LabeledExample ac = example_of("c1", "the keyboard feels mushy", "negative");
  ac.aspect = "keyboard";
  LabeledExample at = example_of("t", "the screen is bright", "positive");
  at.aspect = "screen";
  check_prompt("asc_feedback.txt",
               render_prompt(at,
                             {quad_of(aw, "neutral", fb.on_wrong, 2, true),
                              quad_of(ac, "negative", fb.on_correct, 1, false)},
                             builtin_task("rest"), cfg, fb));

  check_prompt("ed_feedback.txt",
               render_prompt(example_of("t", "the waiting is unbearable", "sadness"),
                             {quad_of(example_of("w1", "i cannot believe they cancelled the show",
                                                 "anger"),
                                      "sadness", fb.on_wrong, 2, true),
                              quad_of(example_of("c1", "what a bright morning to be alive", "joy"),
                                      "joy", fb.on_correct, 1, false)},
                             builtin_task("twemo"), cfg, fb));

  LabeledExample sw = example_of("w1", "lower taxes would help small shops", "favor");
  sw.target = "tax cuts";
  LabeledExample sc2 = example_of("c1", "this policy wastes public money", "against");
  sc2.target = "the policy";
  LabeledExample st = example_of("t", "the council should fund more parks", "favor");
  st.target = "park funding";
  check_prompt("stance_feedback.txt",
               render_prompt(st,
                             {quad_of(sw, "against", fb.on_wrong, 2, true),
                              quad_of(sc2, "against", fb.on_correct, 1, false)},
                             builtin_task("pstance"), cfg, fb));

  check_prompt(
      "irony_feedback.txt",
      render_prompt(example_of("t", "what a surprise, the printer is jammed again", "irony"),
                    {quad_of(example_of("w1", "oh great, another monday morning meeting", "irony"),
                             "non-irony", fb.on_wrong, 2, true),
                     quad_of(example_of("c1", "the train arrived on time today", "non-irony"),
                             "non-irony", fb.on_correct, 1, false)},
                    builtin_task("twirony"), cfg, fb));

  LabeledExample nw;
  nw.id = "w1";
  nw.premise = "a dog runs across the yard";
  nw.hypothesis = "an animal is outside";
  nw.gold_label = "entailment";
  LabeledExample nc;
  nc.id = "c1";
  nc.premise = "the chef slices onions";
  nc.hypothesis = "the chef is asleep";
  nc.gold_label = "contradiction";
  LabeledExample nt;
  nt.id = "t";
  nt.premise = "two kids play chess in the park";
  nt.hypothesis = "children are playing a board game";
  nt.gold_label = "entailment";
  check_prompt("nli_feedback.txt",
               render_prompt(nt,
                             {quad_of(nw, "neutral", fb.on_wrong, 2, true),
                              quad_of(nc, "contradiction", fb.on_correct, 1, false)},
                             builtin_task("mnli"), cfg, fb));
}

// ---------------------------------------------------------------------------
// Criterion 2: retrieval implementations match brute-force oracles.

void criterion_retrieval_oracles(Checker& c) {
  static const char* kVocab[] = {"ant", "bee", "cat", "dog", "elk", "fox",
                                 "gnu", "hen", "ibis", "jay", "kit", "lark"};
  SeededRng rng(20240401);

  for (int trial = 0; trial < 100; ++trial) {
    size_t n_docs = 2 + rng.below(9);
    std::vector<LabeledExample> pool;
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> docs;
    for (size_t d = 0; d < n_docs; ++d) {
      size_t len = 1 + rng.below(8);
      std::string text;
      std::vector<std::string> terms;
      for (size_t w = 0; w < len; ++w) {
        std::string word = kVocab[rng.below(12)];
        text += (w ? " " : "") + word;
        terms.push_back(word);
      }
      ids.push_back("doc" + std::to_string(d));
      pool.push_back(example_of(ids.back(), text, "positive"));
      docs.push_back(terms);
    }
    std::vector<std::string> query;
    for (size_t w = 0, q = 1 + rng.below(4); w < q; ++w) query.push_back(kVocab[rng.below(12)]);

    auto got = bm25_rank(query, build_bm25_index(pool, TaskKind::SC), RetrieverConfig{});
    auto expected = oracle::bm25(query, ids, docs, 1.5, 0.75);
    c.expect(got.entries.size() == expected.size(), "bm25 size");
    for (size_t i = 0; i < expected.size(); ++i) {
      c.expect(got.entries[i].id == expected[i].id, "bm25 order trial " + std::to_string(trial));
      c.expect(std::abs(got.entries[i].score - expected[i].score) <= 1e-9, "bm25 score");
    }
  }

  for (int trial = 0; trial < 100; ++trial) {
    size_t dim = 2 + rng.below(7);
    size_t n = 2 + rng.below(9);
    std::vector<std::string> ids;
    std::vector<std::vector<double>> vecs;
    EmbeddingStore store;
    for (size_t i = 0; i < n; ++i) {
      std::vector<double> v(dim);
      for (auto& x : v) x = static_cast<double>(rng.below(2001)) / 1000.0 - 1.0;
      v[0] += 1.5;
      ids.push_back("v" + std::to_string(i));
      vecs.push_back(v);
      store.insert(ids.back(), v);
    }
    std::vector<double> query(dim);
    for (auto& x : query) x = static_cast<double>(rng.below(2001)) / 1000.0 - 1.0;
    query[0] += 1.5;

    auto got = cosine_rank(query, ids, store);
    auto expected = oracle::cosine_rank(query, ids, vecs);
    for (size_t i = 0; i < expected.size(); ++i)
      c.expect(got.entries[i].id == expected[i].id,
               "cosine order trial " + std::to_string(trial));

    RetrieverConfig mcfg;
    mcfg.mmr_lambda = static_cast<double>(rng.below(11)) / 10.0;
    size_t k = 1 + rng.below(n);
    auto got_mmr = mmr_select(query, ids, store, k, mcfg);
    auto expected_mmr = oracle::mmr(query, ids, vecs, k, mcfg.mmr_lambda);
    for (size_t i = 0; i < k; ++i)
      c.expect(got_mmr.entries[i].id == expected_mmr[i].id,
               "mmr order trial " + std::to_string(trial));
  }

  for (int trial = 0; trial < 100; ++trial) {
    size_t n = 3 + rng.below(24);
    size_t dim = 2 + rng.below(4);
    EmbeddingStore store;
    std::vector<std::string> ids;
    for (size_t i = 0; i < n; ++i) {
      std::vector<double> v(dim);
      for (auto& x : v) x = static_cast<double>(rng.below(10001)) / 500.0;
      ids.push_back("x" + std::to_string(i));
      store.insert(ids.back(), v);
    }
    RetrieverConfig kcfg;
    kcfg.kmeans_clusters = 1 + static_cast<int>(rng.below(5));
    kcfg.seed = rng.next_u64();
    auto result = kmeans_partition(ids, store, kcfg);

    std::set<std::string> seen;
    size_t total = 0;
    for (const auto& cluster : result.clusters) {
      total += cluster.size();
      for (const auto& id : cluster)
        c.expect(seen.insert(id).second, "kmeans duplicate assignment");
    }
    c.expect(total == n, "kmeans completeness trial " + std::to_string(trial));
    for (size_t i = 1; i < result.sse_trace.size(); ++i)
      c.expect(result.sse_trace[i] <= result.sse_trace[i - 1] + 1e-9, "kmeans SSE monotonicity");
  }
}

// ---------------------------------------------------------------------------
// Criterion 3: metric implementations match per-class counting.

void criterion_metric_oracles(Checker& c) {
  c.expect(std::abs(macro_f1({"a", "a", "b", "c"}, {"a", "b", "b", "c"}, {"a", "b", "c"}) -
                    7.0 / 9.0) < 1e-15,
           "macro fixture 7/9");
  c.expect(std::abs(binary_f1({"p", "p", "n"}, {"p", "n", "n"}, "p") - 2.0 / 3.0) < 1e-15,
           "binary fixture 2/3");

  SeededRng rng(31337);
  std::vector<std::string> space{"a", "b", "c", "d"};
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = 1 + rng.below(50);
    std::vector<std::string> gold, pred;
    for (size_t i = 0; i < n; ++i) {
      gold.push_back(space[rng.below(space.size())]);
      pred.push_back(space[rng.below(space.size())]);
    }
    c.expect(std::abs(accuracy(gold, pred) - oracle::accuracy(gold, pred)) <= 1e-9, "accuracy");
    c.expect(std::abs(macro_f1(gold, pred, space) - oracle::macro_f1(gold, pred, space)) <= 1e-9,
             "macro f1 trial " + std::to_string(trial));
    c.expect(std::abs(binary_f1(gold, pred, "b") - oracle::binary_f1(gold, pred, "b")) <= 1e-9,
             "binary f1");
    auto matrix = confusion(gold, pred, space);
    auto norm = normalize_rows(matrix);
    auto expected = oracle::normalize_rows(matrix.counts);
    for (size_t r = 0; r < norm.size(); ++r)
      for (size_t col = 0; col < norm.size(); ++col)
        c.expect(std::abs(norm[r][col] - expected[r][col]) <= 1e-9, "confusion normalization");
  }
}

// ---------------------------------------------------------------------------
// Criterion 4: composition properties over synthetic test items.

void criterion_composition(Checker& c) {
  std::vector<std::string> labels{"positive", "negative", "neutral"};
  SubPools pools = make_subpools(10, 10, labels);
  FeedbackTexts fb = FeedbackTexts::preset("fc1+fa1");
  const TaskSpec& spec = builtin_task("twsenti");
  ScriptedBackend backend(ScriptedRule::hash_rule());

  PromptConfig cfg;
  cfg.k = 4;
  for (int item = 0; item < 200; ++item) {
    LabeledExample test =
        example_of("t" + std::to_string(item), "query text " + std::to_string(item),
                   labels[item % 3]);
    auto result = predict(test, pools, spec, RetrieverConfig{}, cfg, fb, backend, nullptr,
                          static_cast<uint64_t>(item));

    auto lines = lines_of(result.prompt.text);
    std::vector<size_t> wrong_pos, correct_pos;
    for (size_t i = 0; i < lines.size(); ++i) {
      if (lines[i] == fb.on_wrong) wrong_pos.push_back(i);
      if (lines[i] == fb.on_correct) correct_pos.push_back(i);
    }
    c.expect(wrong_pos.size() == 2, "wrong feedback count item " + std::to_string(item));
    c.expect(correct_pos.size() == 2, "correct feedback count");
    for (size_t w : wrong_pos)
      for (size_t k2 : correct_pos) c.expect(w < k2, "wrong-first placement");

    // within-group scores non-increasing
    auto quads = select_demonstrations(test, pools, spec, RetrieverConfig{}, cfg, fb, nullptr,
                                       static_cast<uint64_t>(item))
                     .quadruples;
    for (size_t i = 1; i < quads.size(); ++i)
      if (quads[i].from_wrong_pool == quads[i - 1].from_wrong_pool)
        c.expect(quads[i - 1].score >= quads[i].score, "within-group score order");
  }

  // boundary ratios produce a single feedback kind
  PromptConfig all_correct = cfg;
  all_correct.k = 8;
  all_correct.wrong_count = 0;
  PromptConfig all_wrong = cfg;
  all_wrong.k = 8;
  all_wrong.wrong_count = 8;
  for (int item = 0; item < 20; ++item) {
    LabeledExample test = example_of("b" + std::to_string(item), "boundary query", "positive");
    auto p0 = render_prompt(test,
                            select_demonstrations(test, pools, spec, RetrieverConfig{}, all_correct,
                                                  fb, nullptr, item)
                                .quadruples,
                            spec, all_correct, fb);
    c.expect(p0.text.find(fb.on_wrong) == std::string::npos, "ratio 0 has no wrong feedback");
    c.expect(p0.text.find(fb.on_correct) != std::string::npos, "ratio 0 has correct feedback");
    auto p1 = render_prompt(test,
                            select_demonstrations(test, pools, spec, RetrieverConfig{}, all_wrong,
                                                  fb, nullptr, item)
                                .quadruples,
                            spec, all_wrong, fb);
    c.expect(p1.text.find(fb.on_correct) == std::string::npos, "ratio 1 has no correct feedback");
    c.expect(p1.text.find(fb.on_wrong) != std::string::npos, "ratio 1 has wrong feedback");
  }

  // the runner-level ratio sweep emits exactly the five points
  auto root = temp_dir("ratio_sweep");
  ExperimentConfig sweep_cfg = offline_config(root);
  sweep_cfg.seeds = {3};
  sweep_cfg.k = 8;
  sweep_cfg.test_cap = 6;
  auto sweep = sweep_ratio(sweep_cfg);
  c.expect(sweep.size() == 5, "ratio sweep point count");
  std::vector<double> expected_ratios{0.0, 0.25, 0.5, 0.75, 1.0};
  for (size_t i = 0; i < sweep.size() && i < 5; ++i)
    c.expect(sweep[i].first == expected_ratios[i], "ratio sweep grid");

  // six ordering strategies give six distinct orders (distinct BM25 scores)
  RetrieverConfig bm25_cfg;
  bm25_cfg.method = RetrievalMethod::Bm25;
  LabeledExample probe = example_of("probe", "wrong pool item number 3 waves stones", "positive");
  std::set<std::vector<std::string>> orders;
  PromptConfig order_cfg;
  order_cfg.k = 4;
  for (GroupOrder g : {GroupOrder::WrongFirst, GroupOrder::CorrectFirst, GroupOrder::Alternating}) {
    for (ScoreOrder s : {ScoreOrder::Desc, ScoreOrder::Asc}) {
      order_cfg.group_order = g;
      order_cfg.score_order = s;
      auto quads =
          select_demonstrations(probe, pools, spec, bm25_cfg, order_cfg, fb, nullptr, 1).quadruples;
      std::vector<std::string> ids;
      for (const auto& q : quads) ids.push_back(q.example.id);
      orders.insert(ids);
    }
  }
  c.expect(orders.size() == 6, "six distinct demonstration orders, got " +
                                   std::to_string(orders.size()));
}

// ---------------------------------------------------------------------------
// Criterion 5: ablation line diffs and R/Z record properties.

void criterion_ablation(Checker& c) {
  FeedbackTexts fb = FeedbackTexts::preset("fc1+fa1");
  const TaskSpec& spec = builtin_task("twsenti");
  std::vector<std::string> labels = spec.label_space;
  SubPools pools = make_subpools(6, 6, labels);
  PromptConfig base;
  base.k = 4;
  LabeledExample test = example_of("t", "some query", "positive");

  auto quads =
      select_demonstrations(test, pools, spec, RetrieverConfig{}, base, fb, nullptr, 5).quadruples;
  auto base_lines = lines_of(render_prompt(test, quads, spec, base, fb).text);

  auto removed = [&](const PromptConfig& cfg) -> std::vector<std::string> {
    auto lines = lines_of(render_prompt(test, quads, spec, cfg, fb).text);
    std::vector<std::string> out;
    size_t j = 0;
    for (const auto& line : base_lines) {
      if (j < lines.size() && lines[j] == line)
        ++j;
      else
        out.push_back(line);
    }
    if (j != lines.size()) out.push_back("<<lines added>>");
    return out;
  };

  PromptConfig no_inst = base;
  no_inst.include_instruction = false;
  auto r1 = removed(no_inst);
  c.expect(r1.size() == 1 && r1[0] == spec.instruction, "no_inst removes the instruction line");

  PromptConfig no_label = base;
  no_label.include_label = false;
  auto r2 = removed(no_label);
  c.expect(r2.size() == 4, "no_label removes the four demo label lines");
  for (const auto& line : r2)
    c.expect(line.rfind("Correct Label: ", 0) == 0, "no_label removed line shape");

  PromptConfig no_pred = base;
  no_pred.include_prediction = false;
  auto r3 = removed(no_pred);
  c.expect(r3.size() == 4, "no_pred removes the four prediction lines");
  for (const auto& line : r3)
    c.expect(line.rfind("Prediction: ", 0) == 0, "no_pred removed line shape");

  PromptConfig no_feed = base;
  no_feed.include_feedback = false;
  auto r4 = removed(no_feed);
  c.expect(r4.size() == 4, "no_feed removes the four feedback lines");
  for (const auto& line : r4)
    c.expect(line == fb.on_wrong || line == fb.on_correct, "no_feed removed line shape");

  // full row: no diff at all
  c.expect(removed(base).empty(), "full row is the baseline");

  // R and Z prediction sources force the record properties
  CandidatePool pool;
  pool.task_id = spec.id;
  pool.examples = make_examples("p", 12, labels, false);
  for (const auto& ex : pool.examples) pool.per_class_counts[ex.gold_label]++;

  ScriptedBackend hash_backend(ScriptedRule::hash_rule());
  auto r_records =
      acquire_prior_predictions(pool, spec, hash_backend, 2, PriorMode::RandomError);
  c.expect(hash_backend.call_count() == 0, "R mode issues no backend calls");
  for (const auto& rec : r_records) {
    c.expect(!rec.is_correct, "R record incorrect by construction");
    bool in_space =
        std::find(labels.begin(), labels.end(), rec.predicted_label) != labels.end();
    c.expect(in_space && rec.predicted_label != "", "R record label in space");
  }

  auto z_records = acquire_prior_predictions(pool, spec, hash_backend, 2, PriorMode::ZeroShot);
  c.expect(z_records.size() == pool.examples.size(), "Z covers the pool");
  for (const auto& rec : z_records)
    c.expect(rec.source_mode == PriorMode::ZeroShot, "Z source mode");

  // runner-level: the 7-row matrix emits 7 aggregates
  auto root = temp_dir("ablation_runs");
  ExperimentConfig cfg = offline_config(root);
  cfg.seeds = {3};
  cfg.test_cap = 6;
  cfg.cache_dir = (root / "cache").string();
  auto rows = run_ablation(cfg);
  c.expect(rows.size() == 7, "ablation emits 7 aggregate reports");
}

// ---------------------------------------------------------------------------
// Criterion 6: closed-world decoding under fuzzing.

void criterion_closed_world(Checker& c) {
  static const char* kLabelVocab[] = {"alpha", "bravo", "coral", "delta", "ember",
                                      "flint", "grove", "heron", "irony", "jade"};
  SeededRng rng(777);
  ScriptedBackend backend(ScriptedRule::hash_rule());

  for (int trial = 0; trial < 1000; ++trial) {
    size_t n_labels = 2 + rng.below(5);
    std::vector<std::string> labels;
    std::vector<size_t> picks = rng.sample_indices(10, n_labels);
    for (size_t p : picks) labels.push_back(kLabelVocab[p]);

    TaskSpec spec;
    spec.id = "fuzz";
    spec.kind = TaskKind::SC;
    spec.label_space = labels;
    spec.instruction = "Recognize the sentiment of the sentence.";
    spec.template_id = "sc";
    spec.metric = labels.size() == 2 ? MetricKind::BinaryF1 : MetricKind::MacroF1;

    SubPools pools = make_subpools(2 + rng.below(4), 2 + rng.below(4), labels);
    PromptConfig cfg;
    cfg.k = 1 + static_cast<int>(rng.below(4));
    LabeledExample test = example_of("fz" + std::to_string(trial),
                                     "fuzzed input " + std::to_string(rng.next_u64() % 100000),
                                     labels[0]);
    auto result = predict(test, pools, spec, RetrieverConfig{}, cfg,
                          FeedbackTexts::preset("fc1+fa1"), backend, nullptr, rng.next_u64());
    bool in_space = std::find(labels.begin(), labels.end(), result.label) != labels.end();
    c.expect(in_space, "fuzzed prediction stays in the label space");
  }

  // constructed ties resolve by declaration order
  ScriptedRule flat;
  flat.fallback = [](const std::string&, const std::string&) { return -0.5; };
  ScriptedBackend tied(flat);
  SubPools pools = make_subpools(2, 2, {"positive", "negative"});
  PromptConfig cfg;
  cfg.k = 2;
  TaskSpec spec = builtin_task("sst2");
  auto result = predict(example_of("t", "tie case", "negative"), pools, spec, RetrieverConfig{},
                        cfg, FeedbackTexts::preset("fc1+fa1"), tied, nullptr, 1);
  c.expect(result.label == "positive", "tie resolves to the first declared label");
  LabelScoreMap exact{{"anger", -1.0}, {"joy", -0.25}, {"optimism", -0.25}, {"sadness", -3.0}};
  c.expect(argmax_label(exact, {"anger", "joy", "optimism", "sadness"}) == "joy",
           "argmax declaration-order tie");
}

// ---------------------------------------------------------------------------
// Criterion 7: determinism and warm-cache reruns.

void criterion_determinism(Checker& c) {
  auto snapshot = [](const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (auto& entry : fs::recursive_directory_iterator(dir))
      if (entry.is_regular_file())
        files[fs::relative(entry.path(), dir).string()] = slurp(entry.path());
    return files;
  };
  auto manifests_equal_modulo_volatile = [](std::string a_text, std::string b_text) {
    auto a = nlohmann::json::parse(a_text);
    auto b = nlohmann::json::parse(b_text);
    for (const char* key : {"timestamp", "timings_ms"}) {
      a.erase(key);
      b.erase(key);
    }
    return a == b;
  };

  // identical config + seeds, no caching: byte-identical reports
  auto root = temp_dir("determinism");
  ExperimentConfig cfg = offline_config(root);
  run_experiment(cfg);
  auto first = snapshot(cfg.output_dir);
  fs::remove_all(cfg.output_dir);
  run_experiment(cfg);
  auto second = snapshot(cfg.output_dir);

  c.expect(first.size() == second.size(), "same artifact set");
  for (const auto& [name, content] : first) {
    if (second.count(name) == 0) {
      c.expect(false, "missing artifact " + name);
      continue;
    }
    if (name == "manifest.json")
      c.expect(manifests_equal_modulo_volatile(content, second[name]),
               "manifest equal modulo timestamp");
    else
      c.expect(content == second[name], "byte-identical artifact " + name);
  }

  // warm caches: zero backend calls, reports unchanged
  auto root2 = temp_dir("warm_rerun");
  ExperimentConfig cached_cfg = offline_config(root2);
  cached_cfg.cache_dir = (root2 / "cache").string();
  run_experiment(cached_cfg);
  auto cold = snapshot(cached_cfg.output_dir);
  fs::remove_all(cached_cfg.output_dir);
  run_experiment(cached_cfg);
  auto warm = snapshot(cached_cfg.output_dir);

  auto manifest = nlohmann::json::parse(warm.at("manifest.json"));
  c.expect(manifest["backend_calls"].get<uint64_t>() == 0, "warm rerun issues zero backend calls");
  c.expect(manifest["embedding_calls"].get<uint64_t>() == 0, "warm rerun embeds nothing");
  for (const auto& [name, content] : cold)
    if (name != "manifest.json")
      c.expect(content == warm.at(name), "warm rerun artifact " + name);
}

// ---------------------------------------------------------------------------
// Criterion 8: pool balance across random datasets.

void criterion_pool_balance(Checker& c) {
  SeededRng rng(999);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n_classes = 2 + rng.below(4);
    std::vector<std::string> labels;
    for (size_t i = 0; i < n_classes; ++i) labels.push_back("l" + std::to_string(i));

    TaskSpec spec;
    spec.id = "balance";
    spec.kind = TaskKind::SC;
    spec.label_space = labels;
    spec.instruction = "x";
    spec.template_id = "sc";
    spec.metric = labels.size() == 2 ? MetricKind::BinaryF1 : MetricKind::MacroF1;

    int total = static_cast<int>(n_classes + rng.below(120));
    std::vector<LabeledExample> train;
    size_t id = 0;
    for (const auto& label : labels) {
      size_t plenty = static_cast<size_t>(total) + rng.below(40) + 1;
      for (size_t i = 0; i < plenty; ++i)
        train.push_back(
            example_of("e" + std::to_string(id++), "text " + std::to_string(id), label));
    }
    // interleave deterministically so classes are not contiguous
    SeededRng(trial).shuffle(train);

    CandidatePool pool = sample_pool(train, spec, total, rng.next_u64());
    c.expect(!pool.has_shortfall(), "no shortfall by construction");
    c.expect(static_cast<int>(pool.examples.size()) == total, "pool has the requested size");
    int lo = total, hi = 0;
    for (const auto& label : labels) {
      int count = pool.per_class_counts.at(label);
      lo = std::min(lo, count);
      hi = std::max(hi, count);
    }
    c.expect(hi - lo <= 1, "per-class deviation <= 1, got " + std::to_string(hi - lo));
  }
}

// ---------------------------------------------------------------------------
// Criterion 9 (optional): live smoke test against a completions endpoint.

bool criterion_live_smoke(Checker& c) {
  const char* endpoint = std::getenv("FICL_SMOKE_ENDPOINT");
  if (endpoint == nullptr) return false;

  auto root = temp_dir("live_smoke");
  ExperimentConfig cfg = offline_config(root, /*marker=*/false);
  cfg.backend_kind = "http";
  cfg.endpoint = endpoint;
  const char* model = std::getenv("FICL_SMOKE_MODEL");
  cfg.model = model ? model : "default";
  const char* cred = std::getenv("FICL_SMOKE_CREDENTIAL_ENV");
  cfg.credential_env = cred ? cred : "";
  cfg.seeds = {3};
  cfg.pool_size = 12;
  cfg.test_cap = 50;

  cfg.output_dir = (root / "out_feedback").string();
  AggregateReport fb = run_experiment(cfg);
  c.expect(fb.per_seed.size() == 1, "live feedback run completes");

  cfg.mode = "conventional";
  cfg.output_dir = (root / "out_conventional").string();
  AggregateReport conv = run_experiment(cfg);
  c.expect(conv.per_seed.size() == 1, "live conventional run completes");
  c.expect(fs::exists(fs::path(cfg.output_dir) / "aggregate.json"), "live reports written");
  return true;
}

struct CriterionResult {
  int id;
  std::string name;
  bool pass;
  std::string detail;
  double ms;
};

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<void(Checker&)> fn;
  };
  std::vector<Entry> criteria = {
      {1, "prompt golden fixtures", criterion_prompt_fixtures},
      {2, "retrieval oracle equivalence", criterion_retrieval_oracles},
      {3, "metric oracle equivalence", criterion_metric_oracles},
      {4, "composition properties", criterion_composition},
      {5, "ablation line diffs and R/Z modes", criterion_ablation},
      {6, "closed-world decoding", criterion_closed_world},
      {7, "determinism and warm caches", criterion_determinism},
      {8, "pool balance", criterion_pool_balance},
  };

  int failures = 0;
  for (auto& entry : criteria) {
    Checker checker;
    auto start = std::chrono::steady_clock::now();
    std::string aborted;
    try {
      entry.fn(checker);
    } catch (const std::exception& e) {
      aborted = e.what();
    }
    double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    bool pass = checker.failures == 0 && aborted.empty();
    std::string detail = aborted.empty() ? checker.first_failure : ("exception: " + aborted);
    if (pass) {
      std::printf("[PASS] criterion %d: %s (%.0f ms)\n", entry.id, entry.name, ms);
    } else {
      std::printf("[FAIL] criterion %d: %s (%.0f ms) -- %s\n", entry.id, entry.name, ms,
                  detail.c_str());
      ++failures;
    }
  }

  Checker smoke;
  auto start = std::chrono::steady_clock::now();
  bool ran = false;
  std::string aborted;
  try {
    ran = criterion_live_smoke(smoke);
  } catch (const std::exception& e) {
    ran = true;
    aborted = e.what();
  }
  double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (!ran) {
    std::printf("[SKIP] criterion 9: live endpoint smoke test (set FICL_SMOKE_ENDPOINT to run)\n");
  } else if (smoke.failures == 0 && aborted.empty()) {
    std::printf("[PASS] criterion 9: live endpoint smoke test (%.0f ms)\n", ms);
  } else {
    std::printf("[FAIL] criterion 9: live endpoint smoke test (%.0f ms) -- %s\n", ms,
                (aborted.empty() ? smoke.first_failure : aborted).c_str());
    ++failures;
  }

  return failures == 0 ? 0 : 1;
}
