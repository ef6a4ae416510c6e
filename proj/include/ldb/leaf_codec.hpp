#pragma once

#include <span>
#include <vector>

#include "ldb/chunker.hpp"

namespace ldb {

/// Converts a span of leaf entries to and from a chunk payload. Encodings
/// must be canonical: equal entry lists produce equal bytes.
class LeafCodec {
 public:
  virtual ~LeafCodec() = default;
  virtual Bytes encode(std::span<const Entry> entries) const = 0;
  virtual std::vector<Entry> decode(BytesView payload) const = 0;
};

/// Plain key/value leaves: "LDK1" | count u32 | (klen u32, key, vlen u32, value)*.
class RawLeafCodec final : public LeafCodec {
 public:
  Bytes encode(std::span<const Entry> entries) const override;
  std::vector<Entry> decode(BytesView payload) const override;
};

}  // namespace ldb
