#pragma once

// Brute-force reference implementations, kept independent of the library's
// data structures and code paths. They recompute everything from raw inputs
// with naive loops.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace ficl::oracle {

struct RankedDoc {
  std::string id;
  double score;
};

inline void sort_desc_then_id(std::vector<RankedDoc>& docs) {
  std::sort(docs.begin(), docs.end(), [](const RankedDoc& a, const RankedDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

// Okapi BM25 with the +1 idf variant, recomputing df and avgdl from scratch.
inline std::vector<RankedDoc> bm25(const std::vector<std::string>& query,
                                   const std::vector<std::string>& ids,
                                   const std::vector<std::vector<std::string>>& docs, double k1,
                                   double b) {
  double n = static_cast<double>(docs.size());
  double total_len = 0;
  for (const auto& d : docs) total_len += static_cast<double>(d.size());
  double avgdl = docs.empty() ? 0.0 : total_len / n;

  std::vector<RankedDoc> out;
  for (size_t i = 0; i < docs.size(); ++i) {
    double score = 0.0;
    for (const auto& term : query) {
      double tf = 0;
      for (const auto& w : docs[i])
        if (w == term) tf += 1;
      if (tf == 0) continue;
      double df = 0;
      for (const auto& d : docs)
        if (std::find(d.begin(), d.end(), term) != d.end()) df += 1;
      double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
      double denom = tf + k1 * (1.0 - b + b * static_cast<double>(docs[i].size()) / avgdl);
      score += idf * tf * (k1 + 1.0) / denom;
    }
    out.push_back({ids[i], score});
  }
  sort_desc_then_id(out);
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return -1.0;
  return dot / std::sqrt(na) / std::sqrt(nb);
}

inline std::vector<RankedDoc> cosine_rank(const std::vector<double>& query,
                                          const std::vector<std::string>& ids,
                                          const std::vector<std::vector<double>>& vecs) {
  std::vector<RankedDoc> out;
  for (size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], cosine(query, vecs[i])});
  sort_desc_then_id(out);
  return out;
}

// Greedy MMR with the documented semantics: first pick by pure query
// similarity, emitted score lambda*sim with an empty-set penalty of 0;
// objective ties prefer lower redundancy when lambda < 1, then ascending id.
inline std::vector<RankedDoc> mmr(const std::vector<double>& query,
                                  const std::vector<std::string>& ids,
                                  const std::vector<std::vector<double>>& vecs, size_t k,
                                  double lambda) {
  std::vector<size_t> selected;
  std::vector<RankedDoc> out;
  while (out.size() < k) {
    int best = -1;
    double best_obj = 0, best_red = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      bool taken = false;
      for (size_t s : selected)
        if (s == i) taken = true;
      if (taken) continue;
      double red = 0;
      for (size_t s : selected) red = std::max(red, cosine(vecs[i], vecs[s]));
      double obj = selected.empty() ? cosine(query, vecs[i])
                                    : lambda * cosine(query, vecs[i]) - (1 - lambda) * red;
      bool better;
      if (best < 0) {
        better = true;
      } else if (obj != best_obj) {
        better = obj > best_obj;
      } else if (!selected.empty() && lambda < 1.0 && red != best_red) {
        better = red < best_red;
      } else {
        better = ids[i] < ids[static_cast<size_t>(best)];
      }
      if (better) {
        best = static_cast<int>(i);
        best_obj = obj;
        best_red = red;
      }
    }
    size_t pick = static_cast<size_t>(best);
    double red = 0;
    for (size_t s : selected) red = std::max(red, cosine(vecs[pick], vecs[s]));
    out.push_back({ids[pick], lambda * cosine(query, vecs[pick]) -
                                  (selected.empty() ? 0.0 : (1 - lambda) * red)});
    selected.push_back(pick);
  }
  return out;
}

// Direct per-class counting for classification metrics.
struct ClassCounts {
  long long tp = 0, fp = 0, fn = 0;
};

inline std::map<std::string, ClassCounts> count_classes(const std::vector<std::string>& gold,
                                                        const std::vector<std::string>& pred,
                                                        const std::vector<std::string>& labels) {
  std::map<std::string, ClassCounts> out;
  for (const auto& l : labels) out[l];
  for (size_t i = 0; i < gold.size(); ++i) {
    for (const auto& l : labels) {
      if (gold[i] == l && pred[i] == l) out[l].tp++;
      if (gold[i] != l && pred[i] == l) out[l].fp++;
      if (gold[i] == l && pred[i] != l) out[l].fn++;
    }
  }
  return out;
}

inline double f1_of(const ClassCounts& c) {
  double p = c.tp + c.fp == 0 ? 0.0 : double(c.tp) / double(c.tp + c.fp);
  double r = c.tp + c.fn == 0 ? 0.0 : double(c.tp) / double(c.tp + c.fn);
  return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

inline double accuracy(const std::vector<std::string>& gold, const std::vector<std::string>& pred) {
  if (gold.empty()) return 0.0;
  double hits = 0;
  for (size_t i = 0; i < gold.size(); ++i)
    if (gold[i] == pred[i]) hits += 1;
  return hits / static_cast<double>(gold.size());
}

inline double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                       const std::vector<std::string>& labels) {
  auto counts = count_classes(gold, pred, labels);
  double sum = 0;
  int n = 0;
  for (const auto& l : labels) {
    const ClassCounts& c = counts.at(l);
    if (c.tp + c.fp + c.fn == 0) continue;
    sum += f1_of(c);
    n++;
  }
  return n == 0 ? 0.0 : sum / n;
}

inline double binary_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                        const std::string& positive) {
  return f1_of(count_classes(gold, pred, {positive}).at(positive));
}

inline std::vector<std::vector<double>> normalize_rows(
    const std::vector<std::vector<long long>>& counts) {
  std::vector<std::vector<double>> out(counts.size(),
                                       std::vector<double>(counts.size(), 0.0));
  for (size_t r = 0; r < counts.size(); ++r) {
    long long sum = 0;
    for (long long v : counts[r]) sum += v;
    if (sum == 0) continue;
    for (size_t c = 0; c < counts[r].size(); ++c)
      out[r][c] = double(counts[r][c]) / double(sum);
  }
  return out;
}

}  // namespace ficl::oracle
