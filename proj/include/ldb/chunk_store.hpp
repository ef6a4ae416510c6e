#pragma once
// Content-addressable chunk store.
//
// On-disk layout under <root>:
//   chunks/<2 hex>/<62 hex>   one file per chunk:
//                             "LDC1" | kind u8 | payload length u64 LE | payload
//   redirects                 "<virtual hex>\t<materialized hex>" per line
//
// Materialized ids are SHA-256(0x00 || payload); virtual ids are
// SHA-256(0x01 || serialized recipe). Chunks are never deleted.

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <unordered_set>

#include "ldb/common.hpp"

namespace ldb {

enum class ChunkKind : std::uint8_t { Leaf = 0x00, Interior = 0x01, Virtual = 0x02 };

inline constexpr std::uint8_t kMaterializedNamespace = 0x00;
inline constexpr std::uint8_t kVirtualNamespace = 0x01;

/// Id of the zero-length leaf payload; never stored, stands for an empty tree.
const ChunkId& empty_chunk_id();

/// A lazily computed chunk: `transform` is opaque to the store and is
/// interpreted by whichever RecipeExecutor is installed.
struct Recipe {
  Bytes transform;
  std::vector<ChunkId> sources;
  std::uint32_t group_id = 0;

  Bytes serialize() const;
  static Recipe deserialize(BytesView bytes);
  bool operator==(const Recipe&) const = default;
};

struct StoredChunk {
  ChunkKind kind = ChunkKind::Leaf;
  std::shared_ptr<const Bytes> payload;  // null for Virtual
  std::optional<Recipe> recipe;          // set iff Virtual
};

struct StoreStats {
  std::uint64_t unique_chunks = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t virtual_chunks = 0;
  bool operator==(const StoreStats&) const = default;
};

class ChunkStore;

/// Computes the materialized form of a recipe. Must store every chunk it
/// produces via `store.put` and return the id of the resulting root chunk.
class RecipeExecutor {
 public:
  virtual ~RecipeExecutor() = default;
  virtual ChunkId execute(const Recipe& recipe, ChunkStore& store) = 0;
};

/// Readers may run concurrently; put/put_virtual/materialize serialize on an
/// internal writer lock. Returned payloads are immutable and shareable.
class ChunkStore {
 public:
  explicit ChunkStore(std::filesystem::path root);
  ChunkStore(const ChunkStore&) = delete;
  ChunkStore& operator=(const ChunkStore&) = delete;

  const std::filesystem::path& root() const { return root_; }

  ChunkId put(BytesView payload, ChunkKind kind);
  StoredChunk get(const ChunkId& id) const;
  bool contains(const ChunkId& id) const;
  ChunkId put_virtual(const Recipe& recipe);

  /// Returns the materialized id and payload. Virtual ids are computed via the
  /// installed executor once; later calls follow the redirect.
  std::pair<ChunkId, std::shared_ptr<const Bytes>> materialize(const ChunkId& id);

  /// Resolves redirects without materializing anything.
  ChunkId resolve(const ChunkId& id) const;
  bool is_virtual(const ChunkId& id) const;

  StoreStats stats() const;
  /// Brute-force recount from the directory tree.
  StoreStats recount() const;

  void set_executor(RecipeExecutor* executor) { executor_ = executor; }

  /// Test hook: invoked with every id whose payload is read through get().
  void set_read_observer(std::function<void(const ChunkId&)> observer);

  /// Number of put() calls that actually wrote a new chunk.
  std::uint64_t writes() const { return writes_.load(); }

  std::filesystem::path chunk_path(const ChunkId& id) const;

  /// Drops cached payloads (tests use this to force disk reads).
  void clear_cache();

 private:
  struct Entry {
    ChunkKind kind;
    std::uint64_t size;
  };

  void load_index();
  void write_file(const ChunkId& id, ChunkKind kind, BytesView body);
  StoredChunk read_file(const ChunkId& id) const;
  void cache_insert(const ChunkId& id, std::shared_ptr<const Bytes> payload) const;
  void check_acyclic(const ChunkId& new_id, const Recipe& recipe) const;

  std::filesystem::path root_;
  mutable std::shared_mutex mu_;
  std::mutex write_mu_;
  std::unordered_map<ChunkId, Entry, ChunkIdHash> index_;
  std::unordered_map<ChunkId, ChunkId, ChunkIdHash> redirects_;
  StoreStats stats_;
  std::atomic<std::uint64_t> writes_{0};

  mutable std::mutex cache_mu_;
  mutable std::unordered_map<ChunkId, std::shared_ptr<const Bytes>, ChunkIdHash> cache_;
  mutable std::uint64_t cache_bytes_ = 0;

  std::function<void(const ChunkId&)> observer_;
  RecipeExecutor* executor_ = nullptr;
};

}  // namespace ldb
