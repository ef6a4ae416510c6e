#include "ldb/chunker.hpp"

#include <algorithm>
#include <charconv>

namespace ldb {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv_byte(std::uint64_t h, std::uint8_t b) { return (h ^ b) * kFnvPrime; }

inline std::uint64_t fnv_key(std::uint64_t h, BytesView key) {
  const auto len = static_cast<std::uint32_t>(key.size());
  for (int i = 0; i < 4; ++i) h = fnv_byte(h, static_cast<std::uint8_t>((len >> (8 * i)) & 0xFF));
  for (unsigned char c : key) h = fnv_byte(h, c);
  return h;
}

std::uint32_t parse_u32(std::string_view s, std::string_view what) {
  std::uint32_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorCode::InvalidPolicy, "bad " + std::string(what) + ": " + std::string(s));
  }
  return v;
}

}  // namespace

ChunkingPolicy ChunkingPolicy::content(std::uint32_t target, std::uint32_t window) {
  ChunkingPolicy p;
  p.mode = ChunkMode::Content;
  p.target_entries = target;
  p.window_w = window;
  p.min_entries = std::max<std::uint32_t>(2, target / 4);
  p.max_entries = target * 4;
  return p;
}

ChunkingPolicy ChunkingPolicy::capacity(std::uint32_t target) {
  ChunkingPolicy p;
  p.mode = ChunkMode::Capacity;
  p.target_entries = target;
  p.window_w = 1;
  p.min_entries = target;
  p.max_entries = target;
  return p;
}

void ChunkingPolicy::validate() const {
  if (target_entries < 2) throw Error(ErrorCode::InvalidPolicy, "target_entries must be >= 2");
  if (mode == ChunkMode::Capacity) return;
  if (window_w < 1) throw Error(ErrorCode::InvalidPolicy, "window must be >= 1");
  if (min_entries < 2) throw Error(ErrorCode::InvalidPolicy, "min_entries must be >= 2");
  if (!(min_entries <= target_entries && target_entries <= max_entries)) {
    throw Error(ErrorCode::InvalidPolicy, "need min_entries <= target_entries <= max_entries");
  }
}

std::string ChunkingPolicy::to_string() const {
  if (mode == ChunkMode::Capacity) return "capacity:" + std::to_string(target_entries);
  return "content:" + std::to_string(target_entries) + ":" + std::to_string(window_w) + ":" +
         std::to_string(min_entries) + ":" + std::to_string(max_entries);
}

ChunkingPolicy ChunkingPolicy::parse(std::string_view text) {
  const auto parts = split(text, ':');
  ChunkingPolicy p;
  if (parts[0] == "capacity" && parts.size() == 2) {
    p = capacity(parse_u32(parts[1], "target"));
  } else if (parts[0] == "content" && parts.size() == 5) {
    p.mode = ChunkMode::Content;
    p.target_entries = parse_u32(parts[1], "target");
    p.window_w = parse_u32(parts[2], "window");
    p.min_entries = parse_u32(parts[3], "min");
    p.max_entries = parse_u32(parts[4], "max");
  } else {
    throw Error(ErrorCode::InvalidPolicy, "cannot parse policy '" + std::string(text) + "'");
  }
  p.validate();
  return p;
}

std::uint64_t rolling_hash(std::span<const BytesView> window) {
  std::uint64_t h = kFnvOffset;
  for (BytesView k : window) h = fnv_key(h, k);
  return h;
}

std::uint64_t rolling_hash(std::span<const Bytes> window) {
  std::uint64_t h = kFnvOffset;
  for (const Bytes& k : window) h = fnv_key(h, k);
  return h;
}

BoundaryScanner::BoundaryScanner(const ChunkingPolicy& policy) : policy_(policy) { policy_.validate(); }

void BoundaryScanner::reset() {
  len_ = 0;
  window_.clear();
}

bool BoundaryScanner::push(BytesView key) {
  ++len_;
  if (policy_.mode == ChunkMode::Capacity) {
    if (len_ >= policy_.target_entries) {
      reset();
      return true;
    }
    return false;
  }
  window_.emplace_back(key);
  if (window_.size() > policy_.window_w) window_.pop_front();
  bool close = len_ >= policy_.max_entries;
  if (!close && len_ >= policy_.min_entries) {
    std::uint64_t h = kFnvOffset;
    for (const Bytes& k : window_) h = fnv_key(h, k);
    close = h < ~std::uint64_t{0} / policy_.target_entries;
  }
  if (close) reset();
  return close;
}

std::vector<ChunkSpan> boundaries(std::span<const BytesView> keys, const ChunkingPolicy& policy) {
  std::vector<ChunkSpan> spans;
  BoundaryScanner scanner(policy);
  std::size_t start = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (i > 0 && !(keys[i - 1] < keys[i])) {
      throw Error(ErrorCode::InvalidInput, "keys not strictly increasing at index " + std::to_string(i));
    }
    if (scanner.push(keys[i])) {
      spans.push_back({start, i + 1});
      start = i + 1;
    }
  }
  if (start < keys.size()) spans.push_back({start, keys.size()});
  return spans;
}

std::vector<ChunkSpan> boundaries(std::span<const Entry> entries, const ChunkingPolicy& policy) {
  std::vector<BytesView> keys;
  keys.reserve(entries.size());
  for (const auto& e : entries) keys.emplace_back(e.key);
  return boundaries(std::span<const BytesView>(keys), policy);
}

SpanStats expected_span_stats(std::span<const Entry> entries, const ChunkingPolicy& policy) {
  const auto spans = boundaries(entries, policy);
  SpanStats s;
  s.count = spans.size();
  for (const auto& sp : spans) s.max = std::max(s.max, sp.end_index - sp.start_index);
  s.mean = s.count == 0 ? 0.0 : static_cast<double>(entries.size()) / static_cast<double>(s.count);
  return s;
}

}  // namespace ldb
