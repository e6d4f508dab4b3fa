#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace ficl {

enum class Errc {
  MissingFile,
  SchemaViolation,
  UnknownLabel,
  EmptyClass,
  EmptyPool,
  DimensionMismatch,
  DimensionDrift,
  ZeroQueryVector,
  KTooLarge,
  MissingEmbeddings,
  BackendUnreachable,
  BackendProtocol,
  MissingLogprobSupport,
  FirstSubtokenCollision,
  PoolTooSmall,
  MissingRecord,
  BothPoolsEmpty,
  TemplateFieldMissing,
  ZeroShotExplainUnsupported,
  LengthMismatch,
  NotBinary,
  EmptyInput,
  TaskMismatch,
  UnknownToggle,
  InvalidConfig,
  LockHeld,
  IoError,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

// 64-bit FNV-1a. Used for prompt fingerprints, cache keys, and derived seeds.
uint64_t fnv1a64(std::string_view s);

// fnv1a64 rendered as 16 lowercase hex digits.
std::string fingerprint_hex(std::string_view s);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// The scored "first subtoken" of a label word: its first whitespace-delimited
// chunk. HTTP backends may tokenize differently; this is the model-agnostic
// rule used for validation and by the scripted backend.
std::string label_first_subtoken(std::string_view label);

// Deterministic RNG wrapper. std::uniform_int_distribution is
// implementation-defined, so bounded draws use rejection sampling on the raw
// mt19937_64 stream; results are identical across platforms for a given seed.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform draw in [0, n). n must be > 0.
  size_t below(size_t n);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = below(i + 1);
      std::swap(v[i], v[j]);
    }
  }

  // k distinct indices from [0, n), in draw order (prefix-stable: the first
  // m results are the same for any k >= m).
  std::vector<size_t> sample_indices(size_t n, size_t k);

 private:
  std::mt19937_64 gen_;
};

// Runs fn(0..n-1) on up to `workers` threads. The first exception aborts
// remaining work and is rethrown on the calling thread. Results must be
// written to per-index slots by the caller.
template <typename Fn>
void parallel_for(size_t n, int workers, Fn&& fn) {
  int effective = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (effective == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(effective));
  for (int w = 0; w < effective; ++w) {
    threads.emplace_back([&] {
      while (!failed.load()) {
        size_t i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ficl
