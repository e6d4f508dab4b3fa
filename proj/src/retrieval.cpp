#include "ficl/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"

namespace ficl {

using nlohmann::json;

const char* retrieval_method_name(RetrievalMethod m) {
  switch (m) {
    case RetrievalMethod::Random: return "random";
    case RetrievalMethod::Bm25: return "bm25";
    case RetrievalMethod::Cosine: return "cosine";
    case RetrievalMethod::Mmr: return "mmr";
    case RetrievalMethod::Kmeans: return "kmeans";
  }
  return "random";
}

RetrievalMethod retrieval_method_from(const std::string& name) {
  std::string n = to_lower(trim(name));
  if (n == "random") return RetrievalMethod::Random;
  if (n == "bm25") return RetrievalMethod::Bm25;
  if (n == "cosine" || n == "sbert") return RetrievalMethod::Cosine;
  if (n == "mmr") return RetrievalMethod::Mmr;
  if (n == "kmeans" || n == "k-means") return RetrievalMethod::Kmeans;
  throw Error(Errc::InvalidConfig, "unknown retrieval method '" + name + "'");
}

void RetrieverConfig::validate() const {
  if (mmr_lambda < 0.0 || mmr_lambda > 1.0)
    throw Error(Errc::InvalidConfig, "mmr_lambda must lie in [0,1]");
  if (kmeans_clusters < 1) throw Error(Errc::InvalidConfig, "kmeans_clusters must be >= 1");
  if (bm25_k1 <= 0.0 || bm25_b <= 0.0)
    throw Error(Errc::InvalidConfig, "bm25 parameters must be positive");
}

std::vector<std::string> tokenize_simple(std::string_view text) {
  std::vector<std::string> terms;
  std::string current;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      terms.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) terms.push_back(std::move(current));
  return terms;
}

std::string retrieval_text(const LabeledExample& ex, TaskKind kind) {
  switch (kind) {
    case TaskKind::ASC: return ex.text + " " + ex.aspect;
    case TaskKind::STANCE: return ex.text + " " + ex.target;
    case TaskKind::NLI: return ex.premise + " " + ex.hypothesis;
    default: return ex.text;
  }
}

Bm25Index build_bm25_index(const std::vector<LabeledExample>& pool, TaskKind kind) {
  Bm25Index index;
  size_t total_len = 0;
  for (const auto& ex : pool) {
    auto terms = tokenize_simple(retrieval_text(ex, kind));
    total_len += terms.size();
    std::map<std::string, int> distinct;
    for (const auto& t : terms) distinct[t]++;
    for (const auto& [t, _] : distinct) index.stats.doc_freq[t]++;
    index.ids.push_back(ex.id);
    index.docs.push_back(std::move(terms));
  }
  index.stats.doc_count = static_cast<int>(pool.size());
  index.stats.avg_doc_len =
      pool.empty() ? 0.0 : static_cast<double>(total_len) / static_cast<double>(pool.size());
  return index;
}

namespace {

void sort_ranking(std::vector<ScoredId>& entries) {
  std::sort(entries.begin(), entries.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

}  // namespace

RetrievalRanking bm25_rank(const std::vector<std::string>& query_terms, const Bm25Index& index,
                           const RetrieverConfig& config) {
  if (index.ids.empty()) throw Error(Errc::EmptyPool, "bm25 over empty pool");
  const double k1 = config.bm25_k1;
  const double b = config.bm25_b;
  const double n = index.stats.doc_count;
  const double avgdl = index.stats.avg_doc_len;

  RetrievalRanking ranking;
  ranking.method = RetrievalMethod::Bm25;
  for (size_t d = 0; d < index.docs.size(); ++d) {
    const auto& doc = index.docs[d];
    double score = 0.0;
    for (const auto& term : query_terms) {
      auto df_it = index.stats.doc_freq.find(term);
      if (df_it == index.stats.doc_freq.end()) continue;
      double tf = static_cast<double>(std::count(doc.begin(), doc.end(), term));
      if (tf == 0.0) continue;
      double idf = std::log((n - df_it->second + 0.5) / (df_it->second + 0.5) + 1.0);
      double len_norm = avgdl > 0.0 ? doc.size() / avgdl : 0.0;
      score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_norm));
    }
    ranking.entries.push_back({index.ids[d], score});
  }
  sort_ranking(ranking.entries);
  return ranking;
}

const std::vector<double>& EmbeddingStore::at(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw Error(Errc::MissingEmbeddings, "no vector for id '" + id + "'");
  return it->second;
}

void EmbeddingStore::insert(const std::string& id, std::vector<double> vec) {
  for (double v : vec)
    if (!std::isfinite(v))
      throw Error(Errc::SchemaViolation, "non-finite embedding entry for id '" + id + "'");
  if (by_id.empty() && dim == 0) dim = vec.size();
  if (vec.size() != dim)
    throw Error(Errc::DimensionMismatch, "vector for '" + id + "' has dim " +
                                             std::to_string(vec.size()) + ", store dim " +
                                             std::to_string(dim));
  by_id[id] = std::move(vec);
}

EmbeddingStore load_embedding_store(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::MissingFile, file.string());
  EmbeddingStore store;
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
    if (row.contains("dim")) {
      store.dim = row["dim"].get<size_t>();
      continue;
    }
    if (!row.contains("id") || !row.contains("vector"))
      throw Error(Errc::SchemaViolation,
                  file.string() + " row " + std::to_string(line_no) + ": need id and vector");
    store.insert(row["id"].get<std::string>(), row["vector"].get<std::vector<double>>());
  }
  return store;
}

void save_embedding_store(const EmbeddingStore& store, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + file.string());
  out << json{{"dim", store.dim}}.dump() << "\n";
  std::vector<std::string> ids;
  ids.reserve(store.by_id.size());
  for (const auto& [id, _] : store.by_id) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (const auto& id : ids)
    out << json{{"id", id}, {"vector", store.by_id.at(id)}}.dump() << "\n";
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw Error(Errc::DimensionMismatch, "cosine over dims " + std::to_string(a.size()) + " and " +
                                             std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return -1.0;  // zero-norm convention: sorts last
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

bool is_zero(const std::vector<double>& v) {
  for (double x : v)
    if (x != 0.0) return false;
  return true;
}

}  // namespace

RetrievalRanking cosine_rank(const std::vector<double>& query, const std::vector<std::string>& ids,
                             const EmbeddingStore& store) {
  if (is_zero(query)) throw Error(Errc::ZeroQueryVector, "cosine query has zero norm");
  RetrievalRanking ranking;
  ranking.method = RetrievalMethod::Cosine;
  for (const auto& id : ids)
    ranking.entries.push_back({id, cosine_similarity(query, store.at(id))});
  sort_ranking(ranking.entries);
  return ranking;
}

RetrievalRanking mmr_select(const std::vector<double>& query, const std::vector<std::string>& ids,
                            const EmbeddingStore& store, size_t k, const RetrieverConfig& config) {
  if (k > ids.size())
    throw Error(Errc::KTooLarge,
                "mmr k=" + std::to_string(k) + " over pool of " + std::to_string(ids.size()));
  if (is_zero(query)) throw Error(Errc::ZeroQueryVector, "mmr query has zero norm");
  const double lambda = config.mmr_lambda;

  std::vector<double> query_sim(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) query_sim[i] = cosine_similarity(query, store.at(ids[i]));

  std::vector<bool> selected(ids.size(), false);
  // Max similarity to anything already selected; empty set counts as 0 so the
  // emitted objective sequence stays non-increasing.
  std::vector<double> redundancy(ids.size(), 0.0);

  RetrievalRanking ranking;
  ranking.method = RetrievalMethod::Mmr;
  for (size_t step = 0; step < k; ++step) {
    size_t best = ids.size();
    double best_obj = 0.0;
    for (size_t i = 0; i < ids.size(); ++i) {
      if (selected[i]) continue;
      // First pick is by pure query similarity regardless of lambda.
      double obj = step == 0 ? query_sim[i] : lambda * query_sim[i] - (1.0 - lambda) * redundancy[i];
      if (best == ids.size()) {
        best = i;
        best_obj = obj;
        continue;
      }
      if (obj > best_obj) {
        best = i;
        best_obj = obj;
      } else if (obj == best_obj) {
        // With an active diversity term, ties go to the less redundant item.
        if (step > 0 && lambda < 1.0 && redundancy[i] != redundancy[best]) {
          if (redundancy[i] < redundancy[best]) best = i;
        } else if (ids[i] < ids[best]) {
          best = i;
        }
      }
    }
    selected[best] = true;
    double emitted =
        step == 0 ? lambda * query_sim[best]
                  : lambda * query_sim[best] - (1.0 - lambda) * redundancy[best];
    ranking.entries.push_back({ids[best], emitted});
    const auto& picked_vec = store.at(ids[best]);
    for (size_t i = 0; i < ids.size(); ++i) {
      if (selected[i]) continue;
      redundancy[i] = std::max(redundancy[i], cosine_similarity(store.at(ids[i]), picked_vec));
    }
  }
  return ranking;
}

KmeansResult kmeans_partition(const std::vector<std::string>& ids, const EmbeddingStore& store,
                              const RetrieverConfig& config) {
  if (ids.empty()) throw Error(Errc::EmptyPool, "kmeans over empty pool");
  const size_t n = ids.size();
  std::vector<const std::vector<double>*> points(n);
  for (size_t i = 0; i < n; ++i) points[i] = &store.at(ids[i]);
  for (size_t i = 1; i < n; ++i)
    if (points[i]->size() != points[0]->size())
      throw Error(Errc::DimensionMismatch, "kmeans pool vectors differ in dim");
  const size_t dim = points[0]->size();

  // Distinct points (by value, first occurrence) bound the usable k.
  std::map<std::vector<double>, size_t> distinct;
  for (size_t i = 0; i < n; ++i) distinct.emplace(*points[i], i);
  std::vector<size_t> distinct_idx;
  for (size_t i = 0; i < n; ++i)
    if (distinct.at(*points[i]) == i) distinct_idx.push_back(i);
  const size_t k = std::min<size_t>(std::max(1, config.kmeans_clusters), distinct_idx.size());

  SeededRng rng(config.cluster_seed());
  std::vector<std::vector<double>> centroids;
  for (size_t pick : rng.sample_indices(distinct_idx.size(), k))
    centroids.push_back(*points[distinct_idx[pick]]);

  auto sq_dist = [dim](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t j = 0; j < dim; ++j) {
      double diff = a[j] - b[j];
      s += diff * diff;
    }
    return s;
  };

  std::vector<size_t> assign(n, 0);
  KmeansResult result;
  constexpr int kMaxIterations = 100;
  constexpr double kShiftTolerance = 1e-6;

  for (int iter = 0; iter < kMaxIterations; ++iter) {
    result.iterations = iter + 1;
    for (size_t i = 0; i < n; ++i) {
      size_t best = 0;
      double best_d = sq_dist(*points[i], centroids[0]);
      for (size_t c = 1; c < k; ++c) {
        double d = sq_dist(*points[i], centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[i] = best;
    }

    std::vector<std::vector<size_t>> members(k);
    for (size_t i = 0; i < n; ++i) members[assign[i]].push_back(i);

    // Empty-cluster repair: move the farthest point of the largest cluster,
    // which becomes the empty cluster's centroid.
    for (size_t c = 0; c < k; ++c) {
      if (!members[c].empty()) continue;
      size_t donor = 0;
      for (size_t o = 1; o < k; ++o)
        if (members[o].size() > members[donor].size()) donor = o;
      size_t steal = members[donor][0];
      double steal_d = sq_dist(*points[steal], centroids[donor]);
      for (size_t m : members[donor]) {
        double d = sq_dist(*points[m], centroids[donor]);
        if (d > steal_d) {
          steal_d = d;
          steal = m;
        }
      }
      auto& dm = members[donor];
      dm.erase(std::find(dm.begin(), dm.end(), steal));
      members[c].push_back(steal);
      assign[steal] = c;
      centroids[c] = *points[steal];
    }

    double sse = 0.0;
    for (size_t i = 0; i < n; ++i) sse += sq_dist(*points[i], centroids[assign[i]]);
    result.sse_trace.push_back(sse);

    double shift = 0.0;
    for (size_t c = 0; c < k; ++c) {
      std::vector<double> mean(dim, 0.0);
      for (size_t m : members[c])
        for (size_t j = 0; j < dim; ++j) mean[j] += (*points[m])[j];
      for (size_t j = 0; j < dim; ++j) mean[j] /= static_cast<double>(members[c].size());
      shift = std::max(shift, std::sqrt(sq_dist(mean, centroids[c])));
      centroids[c] = std::move(mean);
    }
    if (shift < kShiftTolerance) break;
  }

  result.clusters.assign(k, {});
  for (size_t i = 0; i < n; ++i) result.clusters[assign[i]].push_back(ids[i]);
  return result;
}

RetrievalRanking select_for_test(const LabeledExample& test, const std::vector<LabeledExample>& pool,
                                 TaskKind kind, const RetrieverConfig& config, size_t k,
                                 const EmbeddingStore* embeddings) {
  config.validate();
  if (pool.empty()) throw Error(Errc::EmptyPool, "selection over empty pool");
  if (k > pool.size())
    throw Error(Errc::KTooLarge,
                "k=" + std::to_string(k) + " over pool of " + std::to_string(pool.size()));
  bool needs_embeddings = config.method == RetrievalMethod::Cosine ||
                          config.method == RetrievalMethod::Mmr ||
                          config.method == RetrievalMethod::Kmeans;
  if (needs_embeddings && embeddings == nullptr)
    throw Error(Errc::MissingEmbeddings,
                std::string(retrieval_method_name(config.method)) + " requires embeddings");

  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& ex : pool) ids.push_back(ex.id);

  RetrievalRanking ranking;
  ranking.method = config.method;
  switch (config.method) {
    case RetrievalMethod::Random: {
      SeededRng rng(config.seed);
      auto picks = rng.sample_indices(ids.size(), k);
      for (size_t i = 0; i < picks.size(); ++i)
        ranking.entries.push_back({ids[picks[i]], static_cast<double>(k - i)});
      break;
    }
    case RetrievalMethod::Kmeans: {
      auto clusters = kmeans_partition(ids, *embeddings, config).clusters;
      SeededRng rng(config.seed);
      size_t picked = 0;
      while (picked < k) {
        bool any = false;
        for (auto& members : clusters) {
          if (picked >= k) break;
          if (members.empty()) continue;
          size_t j = rng.below(members.size());
          ranking.entries.push_back({members[j], static_cast<double>(k - picked)});
          members.erase(members.begin() + static_cast<std::ptrdiff_t>(j));
          ++picked;
          any = true;
        }
        if (!any) break;  // unreachable while k <= pool size
      }
      break;
    }
    case RetrievalMethod::Bm25: {
      auto index = build_bm25_index(pool, kind);
      auto full = bm25_rank(tokenize_simple(retrieval_text(test, kind)), index, config);
      full.entries.resize(k);
      ranking.entries = std::move(full.entries);
      break;
    }
    case RetrievalMethod::Cosine: {
      auto full = cosine_rank(embeddings->at(test.id), ids, *embeddings);
      full.entries.resize(k);
      ranking.entries = std::move(full.entries);
      break;
    }
    case RetrievalMethod::Mmr: {
      ranking = mmr_select(embeddings->at(test.id), ids, *embeddings, k, config);
      break;
    }
  }
  return ranking;
}

}  // namespace ficl
