#pragma once
// Shared primitives: error type, byte helpers, content hashes.

#include <array>
#include <cstdint>
#include <cstring>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ldb {

using Bytes = std::string;  // owned byte sequence
using BytesView = std::string_view;

enum class ErrorCode {
  Io,
  NotFound,
  InvalidInput,
  InvalidRange,
  InvalidRecipe,
  InvalidPolicy,
  MaterializationError,
  ConstraintViolation,
  CorruptTree,
  PolicyMismatch,
  EncodingError,
  DecodingError,
  AssemblyError,
  SchemaError,
  SchemaMismatch,
  NotHead,
  SyncTargetImmutable,
  NameTaken,
  MergeConflict,
  IllegalSyncTopology,
  NotBidirectionallyCompatible,
  DirectionUnavailable,
  ViewError,
  RefusingToOverwrite,
  Usage,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// 32-byte SHA-256 content address.
class ChunkId {
 public:
  static constexpr std::size_t kSize = 32;

  ChunkId() { bytes_.fill(0); }
  explicit ChunkId(const std::array<std::uint8_t, kSize>& b) : bytes_(b) {}

  static ChunkId from_bytes(BytesView raw);
  static ChunkId from_hex(std::string_view hex);

  std::string hex() const;
  BytesView raw() const { return {reinterpret_cast<const char*>(bytes_.data()), kSize}; }
  const std::array<std::uint8_t, kSize>& bytes() const { return bytes_; }

  auto operator<=>(const ChunkId&) const = default;

 private:
  std::array<std::uint8_t, kSize> bytes_;
};

struct ChunkIdHash {
  std::size_t operator()(const ChunkId& id) const noexcept {
    std::size_t h;
    std::memcpy(&h, id.bytes().data(), sizeof(h));
    return h;
  }
};

/// SHA-256 of `prefix || data`.
ChunkId sha256(BytesView data, std::uint8_t prefix);
ChunkId sha256(BytesView data);

std::string to_hex(BytesView bytes);
Bytes from_hex(std::string_view hex);  // throws InvalidInput on malformed input

// Little-endian append/read helpers used by every on-disk format.
inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

/// Bounds-checked cursor over a byte buffer. Throws `code` on underflow.
class ByteReader {
 public:
  ByteReader(BytesView data, ErrorCode code) : data_(data), code_(code) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  BytesView take(std::size_t n) {
    need(n);
    BytesView v = data_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(code_, "truncated buffer");
  }

  BytesView data_;
  std::size_t pos_ = 0;
  ErrorCode code_;
};

/// Escapes tab, newline and backslash so free text fits in one TSV field.
std::string escape_field(std::string_view text);
std::string unescape_field(std::string_view text);

std::vector<std::string> split(std::string_view text, char sep);

}  // namespace ldb
