#include "ficl/backend.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <semaphore>
#include <set>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace ficl {

using nlohmann::json;

void BackendDescriptor::validate() const {
  if (max_parallel < 1) throw Error(Errc::InvalidConfig, "max_parallel must be >= 1");
  if (kind == Kind::HttpCompletions && endpoint.empty())
    throw Error(Errc::InvalidConfig, "HTTP backend requires an endpoint");
  if (kind == Kind::Scripted && !endpoint.empty())
    throw Error(Errc::InvalidConfig, "scripted backend takes no endpoint");
  if (model.empty()) throw Error(Errc::InvalidConfig, "backend model name is empty");
  if (timeout_s <= 0) throw Error(Errc::InvalidConfig, "timeout must be positive");
}

std::string argmax_label(const LabelScoreMap& scores, const std::vector<std::string>& label_space) {
  if (label_space.empty()) throw Error(Errc::EmptyInput, "argmax over empty label space");
  const std::string* best = nullptr;
  double best_score = 0.0;
  for (const auto& label : label_space) {
    auto it = scores.find(label);
    if (it == scores.end())
      throw Error(Errc::BackendProtocol, "score map missing label '" + label + "'");
    if (best == nullptr || it->second > best_score) {
      best = &label;
      best_score = it->second;
    }
  }
  return *best;
}

void check_label_subtokens(const std::vector<std::string>& labels) {
  std::set<std::string> seen;
  for (const auto& label : labels) {
    std::string sub = label_first_subtoken(label);
    if (!seen.insert(sub).second)
      throw Error(Errc::FirstSubtokenCollision, "labels share first subtoken '" + sub + "'");
  }
}

namespace {

void validate_label_request(const std::vector<std::string>& labels) {
  if (labels.empty()) throw Error(Errc::EmptyInput, "no labels to score");
  std::set<std::string> distinct(labels.begin(), labels.end());
  if (distinct.size() != labels.size())
    throw Error(Errc::InvalidConfig, "duplicate labels in scoring request");
  check_label_subtokens(labels);
}

double hash_unit(const std::string& key) {
  return static_cast<double>(fnv1a64(key) % 100000) / 100000.0;
}

}  // namespace

ScriptedRule ScriptedRule::hash_rule() {
  ScriptedRule rule;
  rule.fallback = [](const std::string& prompt, const std::string& label) {
    return -10.0 * hash_unit(prompt + "\x1f" + label);
  };
  return rule;
}

ScriptedRule ScriptedRule::marker_rule() {
  ScriptedRule rule;
  rule.fallback = [](const std::string& prompt, const std::string& label) {
    double jitter = -hash_unit(prompt + "\x1f" + label);
    static const char* kFeedbackMarks[] = {"You are correct!", "You are wrong!",
                                           "The answer is accurate.", "The answer is incorrect."};
    bool has_feedback = false;
    for (const char* mark : kFeedbackMarks)
      if (prompt.find(mark) != std::string::npos) has_feedback = true;
    if (!has_feedback) return jitter;
    size_t block = prompt.rfind("\n\n");
    std::string tail = block == std::string::npos ? prompt : prompt.substr(block);
    return tail.find("[" + label + "]") != std::string::npos ? 5.0 + jitter : jitter;
  };
  return rule;
}

ScriptedRule ScriptedRule::constant_rule(std::string label) {
  ScriptedRule rule;
  rule.fallback = [label = std::move(label)](const std::string&, const std::string& candidate) {
    return candidate == label ? 0.0 : -100.0;
  };
  return rule;
}

ScriptedBackend::ScriptedBackend(ScriptedRule rule, std::string model_name, int max_parallel)
    : rule_(std::move(rule)) {
  if (!rule_.fallback) rule_ = ScriptedRule::hash_rule();
  descriptor_.kind = BackendDescriptor::Kind::Scripted;
  descriptor_.model = std::move(model_name);
  descriptor_.max_parallel = max_parallel;
  descriptor_.validate();
}

LabelScoreMap ScriptedBackend::score_labels(const std::string& prompt,
                                            const std::vector<std::string>& labels) {
  validate_label_request(labels);
  calls_++;
  LabelScoreMap scores;
  auto mapped = rule_.label_by_fingerprint.find(fingerprint_hex(prompt));
  if (mapped != rule_.label_by_fingerprint.end()) {
    for (const auto& label : labels) scores[label] = label == mapped->second ? 0.0 : -100.0;
    return scores;
  }
  for (const auto& label : labels) {
    double s = rule_.fallback(prompt, label);
    if (!std::isfinite(s))
      throw Error(Errc::BackendProtocol, "scripted rule produced non-finite score");
    scores[label] = s;
  }
  return scores;
}

std::string ScriptedBackend::generate_text(const std::string& prompt, int max_tokens) {
  if (max_tokens < 1) throw Error(Errc::InvalidConfig, "max_tokens must be >= 1");
  (void)prompt;
  calls_++;
  // Token cap approximated by whitespace-delimited words.
  std::string out;
  int words = 0;
  for (size_t i = 0; i < rule_.fixture_text.size() && words < max_tokens; ++i) {
    char c = rule_.fixture_text[i];
    if (c == ' ') {
      if (++words >= max_tokens) break;
    }
    out.push_back(c);
  }
  return out;
}

LabelScoreMap scores_from_top_logprobs(const std::map<std::string, double>& top_logprobs,
                                       const std::vector<std::string>& labels) {
  auto normalize = [](const std::string& token) {
    std::string t = token;
    if (t.rfind("\xC4\xA0", 0) == 0) t = t.substr(2);           // BPE space marker
    else if (t.rfind("\xE2\x96\x81", 0) == 0) t = t.substr(3);  // sentencepiece marker
    else if (!t.empty() && t.front() == ' ') t = t.substr(1);
    return to_lower(t);
  };

  double floor = -1.0e4;
  for (const auto& [_, lp] : top_logprobs) floor = std::min(floor, lp - 10.0);

  LabelScoreMap scores;
  for (const auto& label : labels) {
    double best = floor;
    bool found = false;
    for (const auto& [token, lp] : top_logprobs) {
      std::string norm = normalize(token);
      if (norm.empty() || norm.size() > label.size()) continue;
      if (label.compare(0, norm.size(), norm) == 0) {
        best = found ? std::max(best, lp) : lp;
        found = true;
      }
    }
    scores[label] = best;
  }
  return scores;
}

// ---------------------------------------------------------------------------
// HTTP plumbing

namespace {

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // leading slash
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(Errc::InvalidConfig, "endpoint must include a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.base = url;
    out.path = "/";
  } else {
    out.base = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  return out;
}

std::string bearer_token(const std::string& env_name) {
  if (env_name.empty()) return {};
  const char* value = std::getenv(env_name.c_str());
  return value == nullptr ? std::string() : std::string(value);
}

// Issues a POST with up to 3 attempts and exponential backoff. 4xx statuses
// are protocol errors and do not retry.
std::string post_with_retry(const ParsedUrl& url, const std::string& token, double timeout_s,
                            const std::string& body) {
  std::string last_error;
  for (int attempt = 0; attempt < 3; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(250 << attempt));
    httplib::Client client(url.base);
    client.set_connection_timeout(std::chrono::milliseconds(static_cast<int>(timeout_s * 1000)));
    client.set_read_timeout(std::chrono::milliseconds(static_cast<int>(timeout_s * 1000)));
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) {
      last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    if (res->status >= 400 && res->status < 500)
      throw Error(Errc::BackendProtocol,
                  "status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    last_error = "status " + std::to_string(res->status);
  }
  throw Error(Errc::BackendUnreachable, url.base + url.path + ": " + last_error);
}

}  // namespace

struct HttpBackend::Impl {
  ParsedUrl url;
  std::counting_semaphore<> slots;

  explicit Impl(const BackendDescriptor& d) : url(parse_url(d.endpoint)), slots(d.max_parallel) {}
};

HttpBackend::HttpBackend(BackendDescriptor descriptor) : descriptor_(std::move(descriptor)) {
  descriptor_.kind = BackendDescriptor::Kind::HttpCompletions;
  descriptor_.validate();
  if (descriptor_.endpoint.rfind("https://", 0) == 0)
    throw Error(Errc::InvalidConfig, "https endpoints require a TLS-enabled build; use http");
  impl_ = std::make_unique<Impl>(descriptor_);
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::post_json(const std::string& body) {
  impl_->slots.acquire();
  calls_++;
  std::string token = bearer_token(descriptor_.credential_env);
  try {
    std::string response = post_with_retry(impl_->url, token, descriptor_.timeout_s, body);
    impl_->slots.release();
    return response;
  } catch (...) {
    impl_->slots.release();
    throw;
  }
}

LabelScoreMap HttpBackend::score_labels(const std::string& prompt,
                                        const std::vector<std::string>& labels) {
  validate_label_request(labels);
  json request = {{"model", descriptor_.model},
                  {"prompt", prompt},
                  {"max_tokens", 1},
                  {"temperature", 0},
                  {"logprobs", descriptor_.top_logprobs}};
  std::string body = post_json(request.dump());

  json response;
  try {
    response = json::parse(body);
  } catch (const json::exception& e) {
    throw Error(Errc::BackendProtocol, std::string("bad JSON response: ") + e.what());
  }
  if (!response.contains("choices") || response["choices"].empty())
    throw Error(Errc::BackendProtocol, "response has no choices");
  const json& choice = response["choices"][0];
  if (!choice.contains("logprobs") || choice["logprobs"].is_null() ||
      !choice["logprobs"].contains("top_logprobs") || choice["logprobs"]["top_logprobs"].empty())
    throw Error(Errc::MissingLogprobSupport, "endpoint returned no next-token log-probabilities");

  std::map<std::string, double> top;
  for (const auto& [token, lp] : choice["logprobs"]["top_logprobs"][0].items())
    top[token] = lp.get<double>();
  return scores_from_top_logprobs(top, labels);
}

std::string HttpBackend::generate_text(const std::string& prompt, int max_tokens) {
  if (max_tokens < 1) throw Error(Errc::InvalidConfig, "max_tokens must be >= 1");
  json request = {{"model", descriptor_.model},
                  {"prompt", prompt},
                  {"max_tokens", max_tokens},
                  {"temperature", 0}};
  std::string body = post_json(request.dump());
  try {
    json response = json::parse(body);
    return response.at("choices").at(0).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::BackendProtocol, std::string("bad completion response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Score cache

ScoreCache::ScoreCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

namespace {

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

}  // namespace

std::filesystem::path ScoreCache::key_path(const std::string& model, const std::string& prompt_fp,
                                           const std::string& labels_fp) const {
  return dir_ / sanitize(model) / (prompt_fp + "_" + labels_fp + ".json");
}

std::optional<LabelScoreMap> ScoreCache::get(const std::string& model,
                                             const std::string& prompt_fp,
                                             const std::string& labels_fp) const {
  std::ifstream in(key_path(model, prompt_fp, labels_fp));
  if (!in) return std::nullopt;
  try {
    json doc = json::parse(in);
    LabelScoreMap scores;
    for (const auto& [label, score] : doc.items()) scores[label] = score.get<double>();
    return scores;
  } catch (const json::exception&) {
    return std::nullopt;  // corrupt entry: treat as miss, it will be rewritten
  }
}

void ScoreCache::put(const std::string& model, const std::string& prompt_fp,
                     const std::string& labels_fp, const LabelScoreMap& scores) {
  std::lock_guard<std::mutex> lock(write_mutex_);
  auto path = key_path(model, prompt_fp, labels_fp);
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
    out << json(scores).dump();
  }
  std::filesystem::rename(tmp, path);
}

CachingBackend::CachingBackend(std::shared_ptr<CompletionsBackend> inner,
                               std::filesystem::path cache_dir)
    : inner_(std::move(inner)), cache_(std::move(cache_dir)) {}

LabelScoreMap CachingBackend::score_labels(const std::string& prompt,
                                           const std::vector<std::string>& labels) {
  std::string joined;
  for (const auto& label : labels) joined += label + "\x1f";
  std::string prompt_fp = fingerprint_hex(prompt);
  std::string labels_fp = fingerprint_hex(joined);
  const std::string& model = inner_->descriptor().model;
  if (auto hit = cache_.get(model, prompt_fp, labels_fp)) return *hit;
  LabelScoreMap scores = inner_->score_labels(prompt, labels);
  cache_.put(model, prompt_fp, labels_fp, scores);
  return scores;
}

std::string CachingBackend::generate_text(const std::string& prompt, int max_tokens) {
  return inner_->generate_text(prompt, max_tokens);
}

// ---------------------------------------------------------------------------
// Embeddings

ScriptedEmbeddingBackend::ScriptedEmbeddingBackend(size_t dim, std::string model_name)
    : dim_(dim), model_(std::move(model_name)) {
  if (dim_ == 0) throw Error(Errc::InvalidConfig, "embedding dim must be positive");
}

std::vector<std::vector<double>> ScriptedEmbeddingBackend::embed(
    const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(Errc::EmptyInput, "no texts to embed");
  calls_++;
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    SeededRng rng(fnv1a64(text) ^ (0x9e3779b97f4a7c15ULL * dim_));
    std::vector<double> v(dim_);
    double norm = 0.0;
    for (double& x : v) {
      x = static_cast<double>(rng.next_u64() % 2000001) / 1000000.0 - 1.0;
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      v[0] = 1.0;  // vanishing odds, but keep vectors nonzero
      norm = 1.0;
    }
    for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

struct HttpEmbeddingBackend::Impl {
  ParsedUrl url;
  explicit Impl(const BackendDescriptor& d) : url(parse_url(d.endpoint)) {}
};

HttpEmbeddingBackend::HttpEmbeddingBackend(BackendDescriptor descriptor)
    : descriptor_(std::move(descriptor)) {
  descriptor_.kind = BackendDescriptor::Kind::HttpCompletions;
  descriptor_.validate();
  if (descriptor_.endpoint.rfind("https://", 0) == 0)
    throw Error(Errc::InvalidConfig, "https endpoints require a TLS-enabled build; use http");
  impl_ = std::make_unique<Impl>(descriptor_);
}

HttpEmbeddingBackend::~HttpEmbeddingBackend() = default;

std::vector<std::vector<double>> HttpEmbeddingBackend::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(Errc::EmptyInput, "no texts to embed");
  calls_++;
  json request = {{"model", descriptor_.model}, {"texts", texts}, {"input", texts}};
  std::string body = post_with_retry(impl_->url, bearer_token(descriptor_.credential_env),
                                     descriptor_.timeout_s, request.dump());
  json response;
  try {
    response = json::parse(body);
  } catch (const json::exception& e) {
    throw Error(Errc::BackendProtocol, std::string("bad embedding response: ") + e.what());
  }

  std::vector<std::vector<double>> vectors;
  try {
    if (response.contains("vectors"))
      vectors = response["vectors"].get<std::vector<std::vector<double>>>();
    else if (response.contains("embeddings"))
      vectors = response["embeddings"].get<std::vector<std::vector<double>>>();
    else if (response.contains("data"))
      for (const auto& item : response["data"])
        vectors.push_back(item.at("embedding").get<std::vector<double>>());
    else
      throw Error(Errc::BackendProtocol, "embedding response has no vectors");
  } catch (const json::exception& e) {
    throw Error(Errc::BackendProtocol, std::string("bad embedding payload: ") + e.what());
  }
  if (vectors.size() != texts.size())
    throw Error(Errc::BackendProtocol, "embedding count does not match request");
  for (const auto& v : vectors)
    if (v.size() != vectors.front().size())
      throw Error(Errc::BackendProtocol, "embedding dimensions are ragged");
  return vectors;
}

CachingEmbeddingBackend::CachingEmbeddingBackend(std::shared_ptr<EmbeddingBackend> inner,
                                                 std::filesystem::path cache_file)
    : inner_(std::move(inner)), cache_file_(std::move(cache_file)) {
  load();
}

void CachingEmbeddingBackend::load() {
  std::ifstream in(cache_file_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception&) {
      continue;  // ignore truncated tail lines
    }
    if (row.contains("dim")) {
      dim_ = row["dim"].get<size_t>();
      continue;
    }
    if (row.contains("fp") && row.contains("vector"))
      by_fp_[row["fp"].get<std::string>()] = row["vector"].get<std::vector<double>>();
  }
}

std::vector<std::vector<double>> CachingEmbeddingBackend::embed(
    const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error(Errc::EmptyInput, "no texts to embed");
  std::lock_guard<std::mutex> lock(mutex_);

  std::vector<std::string> missing_texts;
  std::vector<std::string> missing_fps;
  std::set<std::string> queued;
  for (const auto& text : texts) {
    std::string fp = fingerprint_hex(text);
    if (by_fp_.count(fp) == 0 && queued.insert(fp).second) {
      missing_texts.push_back(text);
      missing_fps.push_back(fp);
    }
  }

  if (!missing_texts.empty()) {
    auto fresh = inner_->embed(missing_texts);
    if (dim_ != 0 && !fresh.empty() && fresh.front().size() != dim_)
      throw Error(Errc::DimensionDrift, "cache dim " + std::to_string(dim_) +
                                            " vs backend dim " +
                                            std::to_string(fresh.front().size()));
    if (dim_ == 0 && !fresh.empty()) dim_ = fresh.front().size();
    for (size_t i = 0; i < fresh.size(); ++i) by_fp_[missing_fps[i]] = std::move(fresh[i]);

    std::filesystem::create_directories(cache_file_.parent_path());
    auto tmp = cache_file_;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
      out << json{{"dim", dim_}, {"model", inner_->model()}}.dump() << "\n";
      std::vector<std::string> fps;
      fps.reserve(by_fp_.size());
      for (const auto& [fp, _] : by_fp_) fps.push_back(fp);
      std::sort(fps.begin(), fps.end());
      for (const auto& fp : fps)
        out << json{{"fp", fp}, {"vector", by_fp_.at(fp)}}.dump() << "\n";
    }
    std::filesystem::rename(tmp, cache_file_);
  }

  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    auto it = by_fp_.find(fingerprint_hex(text));
    if (it == by_fp_.end())
      throw Error(Errc::BackendProtocol, "embedding backend returned no vector for a text");
    if (it->second.size() != dim_)
      throw Error(Errc::DimensionDrift, "cached vector dim disagrees for a text");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace ficl
