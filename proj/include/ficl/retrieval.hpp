#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ficl/common.hpp"
#include "ficl/corpus.hpp"

namespace ficl {

enum class RetrievalMethod { Random, Bm25, Cosine, Mmr, Kmeans };

const char* retrieval_method_name(RetrievalMethod m);
RetrievalMethod retrieval_method_from(const std::string& name);

struct RetrieverConfig {
  RetrievalMethod method = RetrievalMethod::Random;
  double bm25_k1 = 1.5;
  double bm25_b = 0.75;
  double mmr_lambda = 0.7;
  int kmeans_clusters = 4;
  uint64_t seed = 0;
  // Cluster assignment is seeded separately so it can stay fixed per
  // experiment seed while per-test random picks vary.
  std::optional<uint64_t> kmeans_seed;

  uint64_t cluster_seed() const { return kmeans_seed.value_or(seed); }
  void validate() const;
};

struct CorpusStats {
  std::unordered_map<std::string, int> doc_freq;
  double avg_doc_len = 0.0;
  int doc_count = 0;
};

struct ScoredId {
  std::string id;
  double score;
  bool operator==(const ScoredId&) const = default;
};

struct RetrievalRanking {
  RetrievalMethod method = RetrievalMethod::Random;
  std::vector<ScoredId> entries;  // scores non-increasing; ids unique
};

// Lowercase, split on non-alphanumeric runs, drop empties.
std::vector<std::string> tokenize_simple(std::string_view text);

// The text a retriever sees for an example (task-dependent field join).
std::string retrieval_text(const LabeledExample& ex, TaskKind kind);

// Tokenized pool plus its collection statistics; stats are always computed
// over exactly these documents.
struct Bm25Index {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> docs;
  CorpusStats stats;
};

Bm25Index build_bm25_index(const std::vector<LabeledExample>& pool, TaskKind kind);

// Okapi BM25 with the +1 idf variant:
//   score(d) = sum_t idf(t) * tf(t,d)*(k1+1) / (tf(t,d) + k1*(1-b+b*|d|/avgdl))
//   idf(t)   = ln((N-df+0.5)/(df+0.5) + 1)
// summed over the query term list (repeated terms contribute repeatedly).
// Full-pool ranking; ties broken by ascending id.
RetrievalRanking bm25_rank(const std::vector<std::string>& query_terms, const Bm25Index& index,
                           const RetrieverConfig& config);

// id -> vector map with a single dimension for the whole store.
struct EmbeddingStore {
  size_t dim = 0;
  std::unordered_map<std::string, std::vector<double>> by_id;

  const std::vector<double>& at(const std::string& id) const;
  void insert(const std::string& id, std::vector<double> vec);
};

EmbeddingStore load_embedding_store(const std::filesystem::path& file);
void save_embedding_store(const EmbeddingStore& store, const std::filesystem::path& file);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Cosine ranking over `ids`; zero-norm pool vectors score -1 and sort last;
// ties broken by ascending id. Query must be nonzero.
RetrievalRanking cosine_rank(const std::vector<double>& query, const std::vector<std::string>& ids,
                             const EmbeddingStore& store);

// Greedy maximal-marginal-relevance selection of k items:
//   pick argmax over unselected d of lambda*sim(q,d) - (1-lambda)*max_s sim(d,s)
// The first pick maximizes sim(q,d); emitted scores are the objective values
// at selection time (the first uses an empty-set penalty of 0, so the score
// sequence is non-increasing). Objective ties prefer the less redundant item
// when lambda < 1, then ascending id.
RetrievalRanking mmr_select(const std::vector<double>& query, const std::vector<std::string>& ids,
                            const EmbeddingStore& store, size_t k, const RetrieverConfig& config);

struct KmeansResult {
  std::vector<std::vector<std::string>> clusters;  // cluster -> member ids
  std::vector<double> sse_trace;                   // per-iteration, non-increasing
  int iterations = 0;
};

// Lloyd's algorithm: Euclidean distance, seeded init on distinct points,
// at most 100 iterations or centroid shift < 1e-6. Empty clusters are
// repaired by stealing the farthest point from the largest cluster.
// Effective cluster count is min(k, distinct points).
KmeansResult kmeans_partition(const std::vector<std::string>& ids, const EmbeddingStore& store,
                              const RetrieverConfig& config);

// Unified top-k selection for a test input. Random uses a seeded shuffle with
// synthetic scores k..1 (prefix-stable in k); K-Means picks one seeded-random
// member per cluster, cycling clusters until k items are chosen, with
// synthetic descending scores; the scored methods truncate their rankings.
RetrievalRanking select_for_test(const LabeledExample& test, const std::vector<LabeledExample>& pool,
                                 TaskKind kind, const RetrieverConfig& config, size_t k,
                                 const EmbeddingStore* embeddings);

}  // namespace ficl
