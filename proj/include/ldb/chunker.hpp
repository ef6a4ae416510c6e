#pragma once
// Boundary detection over ordered entry sequences.
//
// Capacity mode packs exactly `target_entries` per span from the left.
// Content mode closes a span after position i (1-based within the span) when
//   len >= min_entries && fnv1a(last min(W, i) keys) < (2^64 - 1) / target_entries
// or unconditionally when len == max_entries. The threshold tests the high
// bits of the digest; FNV-1a's low bits only see the low bits of each input
// byte, so a modulus test on power-of-two targets never fires for keys that
// differ in a few low-order bytes. The window never reaches back
// across a span boundary, so every boundary resets the scanner state.

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "ldb/common.hpp"

namespace ldb {

enum class ChunkMode { Capacity, Content };

struct ChunkingPolicy {
  ChunkMode mode = ChunkMode::Content;
  std::uint32_t target_entries = 64;
  std::uint32_t window_w = 4;
  std::uint32_t min_entries = 16;
  std::uint32_t max_entries = 256;

  static ChunkingPolicy content(std::uint32_t target, std::uint32_t window = 4);
  static ChunkingPolicy capacity(std::uint32_t target);

  /// Throws InvalidPolicy when bounds are inconsistent.
  void validate() const;

  /// "content:T:W:MIN:MAX" or "capacity:T".
  std::string to_string() const;
  static ChunkingPolicy parse(std::string_view text);

  bool operator==(const ChunkingPolicy&) const = default;
};

struct Entry {
  Bytes key;
  Bytes value;
  bool operator==(const Entry&) const = default;
};

struct ChunkSpan {
  std::size_t start_index = 0;
  std::size_t end_index = 0;  // exclusive
  bool operator==(const ChunkSpan&) const = default;
};

/// 64-bit FNV-1a over the concatenation of (u32 LE length || key) for each key.
std::uint64_t rolling_hash(std::span<const BytesView> window);
std::uint64_t rolling_hash(std::span<const Bytes> window);

/// Incremental form of `boundaries`: feed keys one by one; `push` returns true
/// when a span closes after that key.
class BoundaryScanner {
 public:
  explicit BoundaryScanner(const ChunkingPolicy& policy);

  bool push(BytesView key);
  std::size_t span_length() const { return len_; }
  void reset();

 private:
  ChunkingPolicy policy_;
  std::size_t len_ = 0;
  std::deque<Bytes> window_;
};

/// Splits `keys` into contiguous spans. Keys must be strictly increasing
/// (InvalidInput otherwise).
std::vector<ChunkSpan> boundaries(std::span<const BytesView> keys, const ChunkingPolicy& policy);
std::vector<ChunkSpan> boundaries(std::span<const Entry> entries, const ChunkingPolicy& policy);

struct SpanStats {
  double mean = 0.0;
  std::size_t max = 0;
  std::size_t count = 0;
};

SpanStats expected_span_stats(std::span<const Entry> entries, const ChunkingPolicy& policy);

}  // namespace ldb
