#include "ficl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ficl {

using nlohmann::json;

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (const auto& row : counts)
    for (long long c : row) t += c;
  return t;
}

long long ConfusionMatrix::trace() const {
  long long t = 0;
  for (size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

namespace {

size_t label_index(const std::vector<std::string>& label_space, const std::string& label) {
  auto it = std::find(label_space.begin(), label_space.end(), label);
  if (it == label_space.end()) throw Error(Errc::UnknownLabel, "'" + label + "'");
  return static_cast<size_t>(it - label_space.begin());
}

}  // namespace

ConfusionMatrix confusion(const std::vector<std::string>& gold,
                          const std::vector<std::string>& pred,
                          const std::vector<std::string>& label_space) {
  if (gold.size() != pred.size())
    throw Error(Errc::LengthMismatch, std::to_string(gold.size()) + " gold vs " +
                                          std::to_string(pred.size()) + " predictions");
  ConfusionMatrix m;
  m.labels = label_space;
  m.counts.assign(label_space.size(), std::vector<long long>(label_space.size(), 0));
  for (size_t i = 0; i < gold.size(); ++i)
    m.counts[label_index(label_space, gold[i])][label_index(label_space, pred[i])]++;
  return m;
}

std::vector<std::vector<double>> normalize_rows(const ConfusionMatrix& matrix) {
  std::vector<std::vector<double>> out(matrix.counts.size(),
                                       std::vector<double>(matrix.counts.size(), 0.0));
  for (size_t r = 0; r < matrix.counts.size(); ++r) {
    long long row_sum = 0;
    for (long long c : matrix.counts[r]) row_sum += c;
    if (row_sum == 0) continue;
    for (size_t c = 0; c < matrix.counts[r].size(); ++c)
      out[r][c] = static_cast<double>(matrix.counts[r][c]) / static_cast<double>(row_sum);
  }
  return out;
}

double accuracy(const std::vector<std::string>& gold, const std::vector<std::string>& pred) {
  if (gold.size() != pred.size())
    throw Error(Errc::LengthMismatch, std::to_string(gold.size()) + " gold vs " +
                                          std::to_string(pred.size()) + " predictions");
  if (gold.empty()) return 0.0;
  size_t hits = 0;
  for (size_t i = 0; i < gold.size(); ++i)
    if (gold[i] == pred[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

namespace {

struct PrCounts {
  long long tp = 0, fp = 0, fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn); }
  double f1() const {
    double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

std::map<std::string, PrCounts> per_class_counts(const std::vector<std::string>& gold,
                                                 const std::vector<std::string>& pred,
                                                 const std::vector<std::string>& label_space) {
  std::map<std::string, PrCounts> counts;
  for (const auto& label : label_space) counts[label];
  for (size_t i = 0; i < gold.size(); ++i) {
    label_index(label_space, gold[i]);
    label_index(label_space, pred[i]);
    if (gold[i] == pred[i]) {
      counts[gold[i]].tp++;
    } else {
      counts[gold[i]].fn++;
      counts[pred[i]].fp++;
    }
  }
  return counts;
}

}  // namespace

double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                const std::vector<std::string>& label_space) {
  if (gold.size() != pred.size())
    throw Error(Errc::LengthMismatch, std::to_string(gold.size()) + " gold vs " +
                                          std::to_string(pred.size()) + " predictions");
  auto counts = per_class_counts(gold, pred, label_space);
  double sum = 0.0;
  int included = 0;
  for (const auto& label : label_space) {
    const PrCounts& c = counts.at(label);
    if (c.tp + c.fp + c.fn == 0) continue;  // absent from gold and predictions
    sum += c.f1();
    ++included;
  }
  return included == 0 ? 0.0 : sum / included;
}

double binary_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                 const std::string& positive_label) {
  if (gold.size() != pred.size())
    throw Error(Errc::LengthMismatch, std::to_string(gold.size()) + " gold vs " +
                                          std::to_string(pred.size()) + " predictions");
  PrCounts c;
  for (size_t i = 0; i < gold.size(); ++i) {
    bool g = gold[i] == positive_label, p = pred[i] == positive_label;
    if (g && p) c.tp++;
    else if (!g && p) c.fp++;
    else if (g && !p) c.fn++;
  }
  return c.f1();
}

MetricReport evaluate(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                      const TaskSpec& spec, uint64_t seed) {
  if (spec.metric == MetricKind::BinaryF1 && spec.label_space.size() != 2)
    throw Error(Errc::NotBinary, "binary F1 requires a 2-label task");
  MetricReport report;
  report.task_id = spec.id;
  report.f1_kind = spec.metric;
  report.seed = seed;
  report.n = gold.size();
  report.matrix = confusion(gold, pred, spec.label_space);
  report.accuracy = accuracy(gold, pred);

  auto counts = per_class_counts(gold, pred, spec.label_space);
  for (const auto& label : spec.label_space) {
    const PrCounts& c = counts.at(label);
    ClassScore score;
    score.precision = c.precision();
    score.recall = c.recall();
    score.f1 = c.f1();
    score.support = c.tp + c.fn;
    report.per_class[label] = score;
  }
  report.f1 = spec.metric == MetricKind::BinaryF1
                  ? binary_f1(gold, pred, spec.positive_label())
                  : macro_f1(gold, pred, spec.label_space);
  return report;
}

AggregateReport aggregate(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw Error(Errc::EmptyInput, "no reports to aggregate");
  for (const auto& r : reports)
    if (r.task_id != reports.front().task_id)
      throw Error(Errc::TaskMismatch,
                  "'" + r.task_id + "' vs '" + reports.front().task_id + "'");

  auto mean_std = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return std::pair<double, double>(mean, 0.0);
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
    return std::pair<double, double>(mean, std::sqrt(var));
  };

  std::vector<double> accs, f1s;
  for (const auto& r : reports) {
    accs.push_back(r.accuracy);
    f1s.push_back(r.f1);
  }
  AggregateReport out;
  out.task_id = reports.front().task_id;
  out.per_seed = reports;
  std::tie(out.mean_accuracy, out.std_accuracy) = mean_std(accs);
  std::tie(out.mean_f1, out.std_f1) = mean_std(f1s);
  return out;
}

// ---------------------------------------------------------------------------
// Emission

std::string csv_escape(const std::string& field) {
  bool needs_quotes = field.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs_quotes) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

namespace {

std::string format_double(double v, int precision = 12) {
  std::ostringstream os;
  os.setf(std::ios::fmtflags(0), std::ios::floatfield);
  os.precision(precision);
  os << v;
  return os.str();
}

json report_json(const MetricReport& r) {
  json per_class = json::object();
  for (const auto& [label, s] : r.per_class)
    per_class[label] = {{"precision", s.precision},
                        {"recall", s.recall},
                        {"f1", s.f1},
                        {"support", s.support}};
  return {{"task", r.task_id},
          {"seed", r.seed},
          {"n", r.n},
          {"accuracy", r.accuracy},
          {"f1", r.f1},
          {"f1_kind", r.f1_kind == MetricKind::BinaryF1 ? "binary-F1" : "macro-F1"},
          {"per_class", per_class},
          {"labels", r.matrix.labels},
          {"confusion_counts", r.matrix.counts}};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << content;
}

}  // namespace

void emit_report(const MetricReport& report, const std::vector<PredictionRow>& rows,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "metrics.json", report_json(report).dump(2) + "\n");

  std::string csv = "id,gold,pred,prompt_fingerprint\n";
  for (const auto& row : rows)
    csv += csv_escape(row.id) + "," + csv_escape(row.gold) + "," + csv_escape(row.pred) + "," +
           csv_escape(row.prompt_fingerprint) + "\n";
  write_file(dir / "predictions.csv", csv);

  auto normalized = normalize_rows(report.matrix);
  std::string conf = "gold";
  for (const auto& label : report.matrix.labels) conf += "," + csv_escape(label);
  conf += "\n";
  for (size_t r = 0; r < normalized.size(); ++r) {
    conf += csv_escape(report.matrix.labels[r]);
    for (double v : normalized[r]) conf += "," + format_double(v);
    conf += "\n";
  }
  write_file(dir / "confusion.csv", conf);
  write_file(dir / "confusion.svg", confusion_svg(report.matrix));
}

void emit_aggregate(const AggregateReport& report, const std::filesystem::path& file) {
  json seeds = json::array();
  for (const auto& r : report.per_seed)
    seeds.push_back({{"seed", r.seed}, {"accuracy", r.accuracy}, {"f1", r.f1}, {"n", r.n}});
  json doc = {{"task", report.task_id},
              {"seeds", seeds},
              {"mean_accuracy", report.mean_accuracy},
              {"std_accuracy", report.std_accuracy},
              {"mean_f1", report.mean_f1},
              {"std_f1", report.std_f1}};
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  write_file(file, doc.dump(2) + "\n");
}

std::vector<PredictionRow> load_predictions_csv(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, file.string());

  // RFC-4180: quoted fields may contain commas, doubled quotes and newlines.
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  for (size_t i = 0; i < content.size(); ++i) {
    char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
      fields.push_back(std::move(field));
      field.clear();
      if (!(fields.size() == 1 && fields[0].empty())) records.push_back(fields);
      fields.clear();
    } else {
      field += c;
    }
  }
  if (!field.empty() || !fields.empty()) {
    fields.push_back(std::move(field));
    records.push_back(fields);
  }

  if (records.empty()) throw Error(Errc::SchemaViolation, file.string() + ": empty CSV");
  std::vector<PredictionRow> rows;
  for (size_t r = 1; r < records.size(); ++r) {  // first record is the header
    if (records[r].size() < 3)
      throw Error(Errc::SchemaViolation,
                  file.string() + ": record " + std::to_string(r + 1) + " has too few fields");
    PredictionRow row;
    row.id = records[r][0];
    row.gold = records[r][1];
    row.pred = records[r][2];
    if (records[r].size() > 3) row.prompt_fingerprint = records[r][3];
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string format_fixed(double v, int decimals) {
  std::ostringstream os;
  os.setf(std::ios::fixed, std::ios::floatfield);
  os.precision(decimals);
  os << v;
  return os.str();
}

}  // namespace

std::string confusion_svg(const ConfusionMatrix& matrix) {
  const size_t n = matrix.labels.size();
  const int cell = 64, margin = 96, legend = 24;
  const int width = margin + static_cast<int>(n) * cell + legend;
  const int height = margin + static_cast<int>(n) * cell + legend;
  auto normalized = normalize_rows(matrix);

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  for (size_t r = 0; r < n; ++r) {
    for (size_t c = 0; c < n; ++c) {
      double v = normalized[r][c];
      int blue = static_cast<int>(255 - 155 * v);
      int other = static_cast<int>(255 - 205 * v);
      int x = margin + static_cast<int>(c) * cell;
      int y = margin + static_cast<int>(r) * cell;
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"rgb(" << other << "," << other << "," << blue
          << ")\" stroke=\"#777\"/>\n";
      svg << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
          << "\" font-size=\"12\" text-anchor=\"middle\" fill=\"" << (v > 0.6 ? "white" : "black")
          << "\">" << format_fixed(v, 2) << "</text>\n";
    }
  }
  for (size_t i = 0; i < n; ++i) {
    svg << "<text x=\"" << margin + static_cast<int>(i) * cell + cell / 2 << "\" y=\"" << margin - 8
        << "\" font-size=\"12\" text-anchor=\"middle\">" << xml_escape(matrix.labels[i])
        << "</text>\n";
    svg << "<text x=\"" << margin - 8 << "\" y=\"" << margin + static_cast<int>(i) * cell + cell / 2 + 4
        << "\" font-size=\"12\" text-anchor=\"end\">" << xml_escape(matrix.labels[i])
        << "</text>\n";
  }
  svg << "<text x=\"" << margin + static_cast<int>(n) * cell / 2 << "\" y=\"16\" font-size=\"13\" "
      << "text-anchor=\"middle\">predicted</text>\n";
  svg << "<text x=\"16\" y=\"" << margin + static_cast<int>(n) * cell / 2
      << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << margin + static_cast<int>(n) * cell / 2 << ")\">gold</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string line_plot_svg(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<PlotPoint>& points) {
  const int width = 480, height = 320, margin = 56;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!points.empty()) {
    xmin = xmax = points[0].x;
    ymin = ymax = points[0].y;
    for (const auto& p : points) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  double ypad = (ymax - ymin) * 0.1;
  ymin -= ypad;
  ymax += ypad;

  auto sx = [&](double x) {
    return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin);
  };
  auto sy = [&](double y) {
    return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">"
      << xml_escape(title) << "</text>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
      << "\" font-size=\"12\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
  svg << "<text x=\"14\" y=\"" << height / 2
      << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << height / 2
      << ")\">" << xml_escape(y_label) << "</text>\n";

  if (!points.empty()) {
    svg << "<polyline fill=\"none\" stroke=\"#2060c0\" stroke-width=\"2\" points=\"";
    for (const auto& p : points) svg << format_fixed(sx(p.x), 1) << "," << format_fixed(sy(p.y), 1) << " ";
    svg << "\"/>\n";
    for (const auto& p : points) {
      svg << "<circle cx=\"" << format_fixed(sx(p.x), 1) << "\" cy=\"" << format_fixed(sy(p.y), 1)
          << "\" r=\"3\" fill=\"#2060c0\"/>\n";
      svg << "<text x=\"" << format_fixed(sx(p.x), 1) << "\" y=\"" << format_fixed(sy(p.y) - 8, 1)
          << "\" font-size=\"10\" text-anchor=\"middle\">" << format_fixed(p.y, 3) << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ficl
