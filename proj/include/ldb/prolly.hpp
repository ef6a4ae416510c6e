#pragma once
// Prolly index: a canonical key-ordered tree of chunks.
//
// Leaves hold entries encoded by a LeafCodec. Interior chunks hold
// (max key of child, child id) pairs:
//   "LDI1" | level u8 | count u32 | (key length u32, key, child id 32 bytes)*
// Level 0 is the leaf level; a tree of height h has its root at level h - 1.
// Every level is chunked with the same policy, so the root id is a function
// of the entry set and the policy alone.

#include <optional>
#include <span>
#include <vector>

#include "ldb/chunk_store.hpp"
#include "ldb/chunker.hpp"
#include "ldb/leaf_codec.hpp"

namespace ldb {

struct TreeRef {
  ChunkId root = empty_chunk_id();
  std::uint32_t height = 0;
  ChunkingPolicy policy;
  std::uint64_t entry_count = 0;

  bool empty() const { return height == 0; }
  bool operator==(const TreeRef&) const = default;
};

enum class MutationOp { Insert, Update, Delete };

struct Mutation {
  MutationOp op = MutationOp::Insert;
  Bytes key;
  Bytes value;  // ignored for Delete

  static Mutation insert(Bytes k, Bytes v) { return {MutationOp::Insert, std::move(k), std::move(v)}; }
  static Mutation update(Bytes k, Bytes v) { return {MutationOp::Update, std::move(k), std::move(v)}; }
  static Mutation erase(Bytes k) { return {MutationOp::Delete, std::move(k), {}}; }
};

struct Modification {
  Bytes key;
  Bytes old_value;
  Bytes new_value;
  bool operator==(const Modification&) const = default;
};

struct Delta {
  std::vector<Entry> added;
  std::vector<Entry> removed;
  std::vector<Modification> modified;

  bool empty() const { return added.empty() && removed.empty() && modified.empty(); }
  std::size_t size() const { return added.size() + removed.size() + modified.size(); }
  bool operator==(const Delta&) const = default;
};

/// One (max key, child id) pair of an interior level.
struct NodeRef {
  Bytes max_key;
  ChunkId id;
};

class ProllyTree {
 public:
  ProllyTree(ChunkStore& store, const LeafCodec& codec) : store_(store), codec_(codec) {}

  TreeRef build(std::span<const Entry> entries, const ChunkingPolicy& policy);

  /// Root id that build() would produce, computed without writing chunks.
  ChunkId compute_root(std::span<const Entry> entries, const ChunkingPolicy& policy) const;

  std::optional<Bytes> lookup(const TreeRef& tree, BytesView key) const;

  /// Batched lookup; `keys` must be sorted ascending. Each chunk is read once.
  std::vector<std::optional<Bytes>> lookup_many(const TreeRef& tree, std::span<const Bytes> keys) const;

  /// Entries with lo <= key < hi; no `hi` means unbounded.
  std::vector<Entry> scan(const TreeRef& tree, BytesView lo, std::optional<BytesView> hi) const;
  std::vector<Entry> scan_all(const TreeRef& tree) const { return scan(tree, {}, std::nullopt); }

  TreeRef apply(const TreeRef& tree, std::span<const Mutation> batch);

  Delta diff(const TreeRef& a, const TreeRef& b) const;

  bool verify_canonical(const TreeRef& tree) const;

  /// Replaces a virtual root by its materialized id (and fills in height).
  TreeRef materialized(const TreeRef& tree) const;

  /// Every chunk id reachable from the root, root first.
  std::vector<ChunkId> reachable(const TreeRef& tree) const;

  /// Number of leaf chunks.
  std::size_t leaf_count(const TreeRef& tree) const;

  const LeafCodec& codec() const { return codec_; }
  ChunkStore& store() const { return store_; }

  // Interior node helpers, exposed for fixtures and tests.
  static Bytes encode_interior(std::uint8_t level, std::span<const NodeRef> children);
  static std::vector<NodeRef> decode_interior(BytesView payload, std::uint8_t* level = nullptr);

 private:
  ChunkId root_id(const TreeRef& tree) const;
  std::shared_ptr<const Bytes> read(const ChunkId& id) const;

  ChunkStore& store_;
  const LeafCodec& codec_;
};

}  // namespace ldb
