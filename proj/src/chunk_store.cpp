#include "ldb/chunk_store.hpp"

#include <fstream>
#include <vector>

namespace ldb {
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'L', 'D', 'C', '1'};
constexpr std::size_t kHeaderSize = 4 + 1 + 8;
constexpr std::uint64_t kCacheLimitBytes = 256ull << 20;

ChunkKind kind_from_byte(std::uint8_t b, const fs::path& path) {
  if (b > 0x02) throw Error(ErrorCode::Io, "bad chunk kind byte in " + path.string());
  return static_cast<ChunkKind>(b);
}

struct FileHeader {
  ChunkKind kind;
  std::uint64_t length;
};

FileHeader read_header(std::istream& in, const fs::path& path) {
  char buf[kHeaderSize];
  if (!in.read(buf, kHeaderSize)) throw Error(ErrorCode::Io, "short chunk file " + path.string());
  if (std::memcmp(buf, kMagic, 4) != 0) throw Error(ErrorCode::Io, "bad chunk magic in " + path.string());
  ByteReader r(BytesView(buf + 4, kHeaderSize - 4), ErrorCode::Io);
  FileHeader h{kind_from_byte(r.u8(), path), 0};
  h.length = r.u64();
  return h;
}

template <typename Fn>
void walk_chunk_files(const fs::path& chunks_dir, Fn&& fn) {
  if (!fs::exists(chunks_dir)) return;
  for (const auto& prefix : fs::directory_iterator(chunks_dir)) {
    if (!prefix.is_directory()) continue;
    const std::string p = prefix.path().filename().string();
    for (const auto& file : fs::directory_iterator(prefix.path())) {
      const std::string name = file.path().filename().string();
      if (name.size() != 62 || p.size() != 2) continue;  // temp files, strays
      fn(ChunkId::from_hex(p + name), file.path());
    }
  }
}

}  // namespace

const ChunkId& empty_chunk_id() {
  static const ChunkId id = sha256(BytesView(), kMaterializedNamespace);
  return id;
}

Bytes Recipe::serialize() const {
  Bytes out;
  put_u32(out, static_cast<std::uint32_t>(transform.size()));
  out += transform;
  put_u32(out, static_cast<std::uint32_t>(sources.size()));
  for (const auto& s : sources) out += s.raw();
  put_u32(out, group_id);
  return out;
}

Recipe Recipe::deserialize(BytesView bytes) {
  ByteReader r(bytes, ErrorCode::InvalidRecipe);
  Recipe rec;
  rec.transform = Bytes(r.take(r.u32()));
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) rec.sources.push_back(ChunkId::from_bytes(r.take(ChunkId::kSize)));
  rec.group_id = r.u32();
  if (!r.done()) throw Error(ErrorCode::InvalidRecipe, "trailing bytes in recipe");
  return rec;
}

ChunkStore::ChunkStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "chunks", ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create store at " + root_.string() + ": " + ec.message());
  load_index();
}

fs::path ChunkStore::chunk_path(const ChunkId& id) const {
  const std::string hex = id.hex();
  return root_ / "chunks" / hex.substr(0, 2) / hex.substr(2);
}

void ChunkStore::load_index() {
  walk_chunk_files(root_ / "chunks", [&](const ChunkId& id, const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    const FileHeader h = read_header(in, path);
    index_[id] = Entry{h.kind, h.length};
    if (h.kind == ChunkKind::Virtual) {
      ++stats_.virtual_chunks;
    } else {
      ++stats_.unique_chunks;
      stats_.total_bytes += h.length;
    }
  });
  std::ifstream in(root_ / "redirects");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(ErrorCode::Io, "malformed redirect line: " + line);
    redirects_[ChunkId::from_hex(line.substr(0, tab))] = ChunkId::from_hex(line.substr(tab + 1));
  }
}

void ChunkStore::write_file(const ChunkId& id, ChunkKind kind, BytesView body) {
  const fs::path path = chunk_path(id);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::Io, "chunk " + id.hex() + ": " + ec.message());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    Bytes header(kMagic, 4);
    header.push_back(static_cast<char>(kind));
    put_u64(header, body.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for chunk " + id.hex());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "rename failed for chunk " + id.hex() + ": " + ec.message());
}

StoredChunk ChunkStore::read_file(const ChunkId& id) const {
  const fs::path path = chunk_path(id);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "chunk " + id.hex());
  const FileHeader h = read_header(in, path);
  auto body = std::make_shared<Bytes>(h.length, '\0');
  if (h.length > 0 && !in.read(body->data(), static_cast<std::streamsize>(h.length))) {
    throw Error(ErrorCode::Io, "truncated chunk " + id.hex());
  }
  StoredChunk c;
  c.kind = h.kind;
  if (h.kind == ChunkKind::Virtual) {
    c.recipe = Recipe::deserialize(*body);
  } else {
    c.payload = std::move(body);
  }
  return c;
}

void ChunkStore::cache_insert(const ChunkId& id, std::shared_ptr<const Bytes> payload) const {
  std::lock_guard lock(cache_mu_);
  if (cache_bytes_ + payload->size() > kCacheLimitBytes) {
    cache_.clear();
    cache_bytes_ = 0;
  }
  if (cache_.emplace(id, payload).second) cache_bytes_ += payload->size();
}

void ChunkStore::clear_cache() {
  std::lock_guard lock(cache_mu_);
  cache_.clear();
  cache_bytes_ = 0;
}

ChunkId ChunkStore::put(BytesView payload, ChunkKind kind) {
  if (payload.empty()) throw Error(ErrorCode::InvalidInput, "chunk payload must be non-empty");
  if (kind == ChunkKind::Virtual) throw Error(ErrorCode::InvalidInput, "use put_virtual for virtual chunks");
  const ChunkId id = sha256(payload, kMaterializedNamespace);
  {
    std::shared_lock lock(mu_);
    if (index_.count(id)) return id;
  }
  std::lock_guard wlock(write_mu_);
  {
    std::shared_lock lock(mu_);
    if (index_.count(id)) return id;
  }
  write_file(id, kind, payload);
  {
    std::unique_lock lock(mu_);
    index_[id] = Entry{kind, payload.size()};
    ++stats_.unique_chunks;
    stats_.total_bytes += payload.size();
  }
  ++writes_;
  cache_insert(id, std::make_shared<const Bytes>(payload));
  return id;
}

bool ChunkStore::contains(const ChunkId& id) const {
  std::shared_lock lock(mu_);
  return index_.count(id) > 0;
}

ChunkId ChunkStore::resolve(const ChunkId& id) const {
  std::shared_lock lock(mu_);
  ChunkId cur = id;
  for (std::size_t hops = 0; hops <= redirects_.size(); ++hops) {
    auto it = redirects_.find(cur);
    if (it == redirects_.end()) return cur;
    cur = it->second;
  }
  throw Error(ErrorCode::InvalidRecipe, "redirect loop at " + id.hex());
}

bool ChunkStore::is_virtual(const ChunkId& id) const {
  const ChunkId r = resolve(id);
  std::shared_lock lock(mu_);
  auto it = index_.find(r);
  return it != index_.end() && it->second.kind == ChunkKind::Virtual;
}

StoredChunk ChunkStore::get(const ChunkId& id) const {
  const ChunkId target = resolve(id);
  ChunkKind kind;
  {
    std::shared_lock lock(mu_);
    auto it = index_.find(target);
    if (it == index_.end()) throw Error(ErrorCode::NotFound, "chunk " + id.hex());
    kind = it->second.kind;
  }
  if (observer_) observer_(target);
  if (kind != ChunkKind::Virtual) {
    std::lock_guard lock(cache_mu_);
    auto it = cache_.find(target);
    if (it != cache_.end()) return StoredChunk{kind, it->second, std::nullopt};
  }
  StoredChunk c = read_file(target);
  if (c.payload) cache_insert(target, c.payload);
  return c;
}

void ChunkStore::check_acyclic(const ChunkId& new_id, const Recipe& recipe) const {
  std::vector<ChunkId> stack(recipe.sources.begin(), recipe.sources.end());
  std::unordered_set<ChunkId, ChunkIdHash> seen;
  while (!stack.empty()) {
    const ChunkId cur = resolve(stack.back());
    stack.pop_back();
    if (cur == new_id) throw Error(ErrorCode::InvalidRecipe, "recipe " + new_id.hex() + " depends on itself");
    if (!seen.insert(cur).second) continue;
    bool virt;
    {
      std::shared_lock lock(mu_);
      auto it = index_.find(cur);
      virt = it != index_.end() && it->second.kind == ChunkKind::Virtual;
    }
    if (virt) {
      const StoredChunk c = read_file(cur);
      stack.insert(stack.end(), c.recipe->sources.begin(), c.recipe->sources.end());
    }
  }
}

ChunkId ChunkStore::put_virtual(const Recipe& recipe) {
  for (const auto& src : recipe.sources) {
    if (!contains(resolve(src))) throw Error(ErrorCode::NotFound, "recipe source " + src.hex());
  }
  const Bytes body = recipe.serialize();
  const ChunkId id = sha256(body, kVirtualNamespace);
  std::lock_guard wlock(write_mu_);
  {
    std::shared_lock lock(mu_);
    if (index_.count(id)) return id;
  }
  check_acyclic(id, recipe);
  write_file(id, ChunkKind::Virtual, body);
  std::unique_lock lock(mu_);
  index_[id] = Entry{ChunkKind::Virtual, body.size()};
  ++stats_.virtual_chunks;
  return id;
}

std::pair<ChunkId, std::shared_ptr<const Bytes>> ChunkStore::materialize(const ChunkId& id) {
  const ChunkId target = resolve(id);
  if (target == empty_chunk_id()) return {target, std::make_shared<const Bytes>()};
  StoredChunk c = get(target);
  if (c.kind != ChunkKind::Virtual) return {target, c.payload};
  if (executor_ == nullptr) {
    throw Error(ErrorCode::MaterializationError, "no recipe executor installed for " + target.hex());
  }
  Recipe recipe = *c.recipe;
  for (auto& src : recipe.sources) src = materialize(src).first;
  ChunkId result;
  try {
    result = executor_->execute(recipe, *this);
  } catch (const Error& e) {
    throw Error(ErrorCode::MaterializationError, "recipe " + target.hex() + ": " + e.what());
  }
  {
    std::lock_guard wlock(write_mu_);
    std::unique_lock lock(mu_);
    if (!redirects_.count(target)) {
      redirects_[target] = result;
      std::ofstream out(root_ / "redirects", std::ios::app);
      out << target.hex() << '\t' << result.hex() << '\n';
      if (!out) throw Error(ErrorCode::Io, "cannot append redirect for " + target.hex());
    }
  }
  if (result == empty_chunk_id()) return {result, std::make_shared<const Bytes>()};
  return {result, get(result).payload};
}

StoreStats ChunkStore::stats() const {
  std::shared_lock lock(mu_);
  return stats_;
}

StoreStats ChunkStore::recount() const {
  StoreStats s;
  walk_chunk_files(root_ / "chunks", [&](const ChunkId&, const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    const FileHeader h = read_header(in, path);
    if (h.kind == ChunkKind::Virtual) {
      ++s.virtual_chunks;
    } else {
      ++s.unique_chunks;
      s.total_bytes += h.length;
    }
  });
  return s;
}

void ChunkStore::set_read_observer(std::function<void(const ChunkId&)> observer) {
  observer_ = std::move(observer);
}

}  // namespace ldb
