#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ficl/runner.hpp"

namespace {

// One CLI flag per config key; only flags the user actually passed are
// applied on top of the config file.
void add_config_flags(CLI::App* cmd, std::map<std::string, std::string>& overrides) {
  static const char* kKeys[] = {
      "dataset_dir",     "task",
      "task_kind",       "task_labels",
      "task_instruction", "task_template",
      "backend_kind",    "endpoint",
      "model",           "timeout_s",
      "max_parallel",    "credential_env",
      "scripted_mode",   "top_logprobs",
      "embedding_kind",  "embedding_endpoint",
      "embedding_model", "embedding_dim",
      "embeddings_file", "retriever",
      "bm25_k1",         "bm25_b",
      "mmr_lambda",      "kmeans_clusters",
      "k",               "wrong_count",
      "ordering",        "score_order",
      "include_instruction", "include_label",
      "include_prediction",  "include_feedback",
      "feedback_preset", "feedback_table9",
      "feedback_on_correct", "feedback_on_wrong",
      "mode",            "prior_mode",
      "pool_size",       "seeds",
      "test_cap",        "output_dir",
      "cache_dir",       "explain_max_tokens",
  };
  for (const char* key : kKeys) {
    cmd->add_option_function<std::string>(
        "--" + std::string(key),
        [&overrides, key](const std::string& value) { overrides[key] = value; },
        "config key '" + std::string(key) + "'");
  }
}

struct CommonArgs {
  std::string config_file;
  std::map<std::string, std::string> overrides;

  ficl::ExperimentConfig build() const {
    ficl::ExperimentConfig config;
    if (!config_file.empty()) config = ficl::ExperimentConfig::from_file(config_file);
    config.apply(overrides);
    return config;
  }
};

CommonArgs* add_common(CLI::App* cmd) {
  auto* args = new CommonArgs();  // lives for the whole program run
  cmd->add_option("--config", args->config_file, "flat key=value config file");
  add_config_flags(cmd, args->overrides);
  return args;
}

void print_aggregate(const std::string& name, const ficl::AggregateReport& agg) {
  std::printf("%-24s F1 %.4f ± %.4f   Acc %.4f ± %.4f   (%zu seed%s)\n", name.c_str(), agg.mean_f1,
              agg.std_f1, agg.mean_accuracy, agg.std_accuracy, agg.per_seed.size(),
              agg.per_seed.size() == 1 ? "" : "s");
}

std::vector<int> parse_int_list(const std::string& value) {
  std::vector<int> out;
  std::string item;
  std::stringstream ss(value);
  while (std::getline(ss, item, ','))
    if (!ficl::trim(item).empty()) out.push_back(std::stoi(ficl::trim(item)));
  return out;
}

std::vector<std::string> parse_name_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(value);
  while (std::getline(ss, item, ','))
    if (!ficl::trim(item).empty()) out.push_back(ficl::trim(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prediction-feedback in-context learning harness"};
  app.require_subcommand(1);

  auto* prepare = app.add_subcommand("prepare-pool", "materialize per-seed candidate pools");
  auto* prepare_args = add_common(prepare);

  auto* prior = app.add_subcommand("prior-predict", "acquire prior predictions over the pool");
  auto* prior_args = add_common(prior);

  auto* run = app.add_subcommand("run", "run the full experiment protocol");
  auto* run_args = add_common(run);

  auto* ablate = app.add_subcommand("ablate", "toggle-matrix ablation runs");
  auto* ablate_args = add_common(ablate);
  std::string ablate_rows;
  ablate->add_option("--rows", ablate_rows,
                     "comma-separated rows (default: full,no_inst,no_label,no_pred,pred_r,pred_z,"
                     "no_feed)");

  auto* ratio = app.add_subcommand("sweep-ratio", "wrong-example ratio sweep at fixed k");
  auto* ratio_args = add_common(ratio);

  auto* order = app.add_subcommand("sweep-order", "ordering-strategy grid (3 groupings x 2 sorts)");
  auto* order_args = add_common(order);

  auto* shots = app.add_subcommand("sweep-shots", "shot-count sweep");
  auto* shots_args = add_common(shots);
  std::string k_list = "2,4,6,8,12";
  shots->add_option("--k-list", k_list, "comma-separated shot counts");

  auto* explain_cmd = app.add_subcommand("explain", "free-text explanation for one test item");
  auto* explain_args = add_common(explain_cmd);
  std::string example_id;
  size_t example_index = 0;
  explain_cmd->add_option("--example-id", example_id, "test example id");
  explain_cmd->add_option("--index", example_index, "test example index (when no id given)");

  auto* report_cmd = app.add_subcommand("report", "recompute metrics from predictions.csv files");
  auto* report_args = add_common(report_cmd);
  std::vector<std::string> prediction_files;
  report_cmd->add_option("--predictions", prediction_files, "predictions.csv paths (one per seed)")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) {
      auto config = prepare_args->build();
      ficl::prepare_pools(config);
      std::printf("pools written to %s\n", config.output_dir.c_str());
    } else if (prior->parsed()) {
      auto config = prior_args->build();
      ficl::run_prior_predict(config);
      std::printf("prior predictions written to %s\n", config.output_dir.c_str());
    } else if (run->parsed()) {
      auto config = run_args->build();
      auto agg = ficl::run_experiment(config);
      print_aggregate(config.task.empty() ? "run" : config.task, agg);
      std::printf("reports written to %s\n", config.output_dir.c_str());
    } else if (ablate->parsed()) {
      auto config = ablate_args->build();
      auto rows = ablate_rows.empty() ? std::vector<std::string>{} : parse_name_list(ablate_rows);
      for (const auto& [name, agg] : ficl::run_ablation(config, rows)) print_aggregate(name, agg);
      std::printf("ablation table written to %s/ablation.csv\n", config.output_dir.c_str());
    } else if (ratio->parsed()) {
      auto config = ratio_args->build();
      for (const auto& [r, agg] : ficl::sweep_ratio(config))
        print_aggregate("ratio " + std::to_string(r), agg);
      std::printf("sweep written to %s/ratio.csv\n", config.output_dir.c_str());
    } else if (order->parsed()) {
      auto config = order_args->build();
      for (const auto& [name, agg] : ficl::sweep_order(config)) print_aggregate(name, agg);
      std::printf("sweep written to %s/order.csv\n", config.output_dir.c_str());
    } else if (shots->parsed()) {
      auto config = shots_args->build();
      for (const auto& [shot, agg] : ficl::sweep_shots(config, parse_int_list(k_list)))
        print_aggregate("k=" + std::to_string(shot), agg);
      std::printf("sweep written to %s/shots.csv\n", config.output_dir.c_str());
    } else if (explain_cmd->parsed()) {
      auto config = explain_args->build();
      std::string text = ficl::run_explain(config, example_id, example_index);
      std::printf("%s\n", text.c_str());
    } else if (report_cmd->parsed()) {
      auto config = report_args->build();
      std::vector<std::filesystem::path> paths(prediction_files.begin(), prediction_files.end());
      auto agg = ficl::recompute_reports(config, paths);
      print_aggregate("report", agg);
    }
  } catch (const ficl::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
