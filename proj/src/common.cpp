#include "ficl/common.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace ficl {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::MissingFile: return "MissingFile";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::EmptyPool: return "EmptyPool";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::DimensionDrift: return "DimensionDrift";
    case Errc::ZeroQueryVector: return "ZeroQueryVector";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::MissingEmbeddings: return "MissingEmbeddings";
    case Errc::BackendUnreachable: return "BackendUnreachable";
    case Errc::BackendProtocol: return "BackendProtocol";
    case Errc::MissingLogprobSupport: return "MissingLogprobSupport";
    case Errc::FirstSubtokenCollision: return "FirstSubtokenCollision";
    case Errc::PoolTooSmall: return "PoolTooSmall";
    case Errc::MissingRecord: return "MissingRecord";
    case Errc::BothPoolsEmpty: return "BothPoolsEmpty";
    case Errc::TemplateFieldMissing: return "TemplateFieldMissing";
    case Errc::ZeroShotExplainUnsupported: return "ZeroShotExplainUnsupported";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NotBinary: return "NotBinary";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::TaskMismatch: return "TaskMismatch";
    case Errc::UnknownToggle: return "UnknownToggle";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::LockHeld: return "LockHeld";
    case Errc::IoError: return "IoError";
  }
  return "Error";
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fingerprint_hex(std::string_view s) {
  static const char* digits = "0123456789abcdef";
  uint64_t h = fnv1a64(s);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string label_first_subtoken(std::string_view label) {
  std::string t = trim(label);
  size_t cut = t.find_first_of(" \t\n\r");
  return cut == std::string::npos ? t : t.substr(0, cut);
}

size_t SeededRng::below(size_t n) {
  if (n == 0) throw Error(Errc::InvalidConfig, "SeededRng::below(0)");
  uint64_t bound = static_cast<uint64_t>(n);
  uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return static_cast<size_t>(x % bound);
}

std::vector<size_t> SeededRng::sample_indices(size_t n, size_t k) {
  if (k > n) throw Error(Errc::KTooLarge, "sample of " + std::to_string(k) + " from " + std::to_string(n));
  // Partial Fisher-Yates over an index table; draw order is the result order.
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::vector<size_t> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + below(n - i);
    std::swap(idx[i], idx[j]);
    out.push_back(idx[i]);
  }
  return out;
}

}  // namespace ficl
