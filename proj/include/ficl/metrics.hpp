#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ficl/common.hpp"
#include "ficl/corpus.hpp"

namespace ficl {

struct ConfusionMatrix {
  std::vector<std::string> labels;              // label_space order
  std::vector<std::vector<long long>> counts;   // rows gold, columns predicted

  long long total() const;
  long long trace() const;
};

ConfusionMatrix confusion(const std::vector<std::string>& gold,
                          const std::vector<std::string>& pred,
                          const std::vector<std::string>& label_space);

// Row (gold-conditioned) normalization; zero rows stay all-zero.
std::vector<std::vector<double>> normalize_rows(const ConfusionMatrix& matrix);

double accuracy(const std::vector<std::string>& gold, const std::vector<std::string>& pred);

// Unweighted mean of per-class F1 over classes present in gold or pred;
// classes absent from both are excluded. Per-class F1 is 0 when P+R = 0.
double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                const std::vector<std::string>& label_space);

// F1 of the positive class; 0 when P+R = 0.
double binary_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                 const std::string& positive_label);

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;  // gold occurrences
};

struct MetricReport {
  std::string task_id;
  MetricKind f1_kind = MetricKind::MacroF1;
  uint64_t seed = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  std::map<std::string, ClassScore> per_class;
  size_t n = 0;
  ConfusionMatrix matrix;
};

MetricReport evaluate(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                      const TaskSpec& spec, uint64_t seed);

struct AggregateReport {
  std::string task_id;
  std::vector<MetricReport> per_seed;
  double mean_accuracy = 0.0, std_accuracy = 0.0;
  double mean_f1 = 0.0, std_f1 = 0.0;
};

// Arithmetic mean and sample standard deviation (n-1; zero for one report).
AggregateReport aggregate(const std::vector<MetricReport>& reports);

struct PredictionRow {
  std::string id, gold, pred, prompt_fingerprint;
};

// Writes metrics.json, predictions.csv, confusion.csv (row-normalized) and
// confusion.svg into dir.
void emit_report(const MetricReport& report, const std::vector<PredictionRow>& rows,
                 const std::filesystem::path& dir);

void emit_aggregate(const AggregateReport& report, const std::filesystem::path& file);

std::vector<PredictionRow> load_predictions_csv(const std::filesystem::path& file);

// Standalone SVG heatmap with one annotated cell per matrix entry.
std::string confusion_svg(const ConfusionMatrix& matrix);

struct PlotPoint {
  double x, y;
};

// Minimal line plot (axes, markers, labels) used by the sweep commands.
std::string line_plot_svg(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<PlotPoint>& points);

std::string csv_escape(const std::string& field);

}  // namespace ficl
