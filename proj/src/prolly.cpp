#include "ldb/prolly.hpp"

#include <algorithm>
#include <functional>
#include <unordered_set>

namespace ldb {

namespace {

constexpr char kRawMagic[4] = {'L', 'D', 'K', '1'};
constexpr char kInteriorMagic[4] = {'L', 'D', 'I', '1'};

bool is_interior(BytesView payload) {
  return payload.size() >= 4 && std::memcmp(payload.data(), kInteriorMagic, 4) == 0;
}

std::uint8_t interior_level(BytesView payload) {
  if (payload.size() < 5) throw Error(ErrorCode::CorruptTree, "truncated interior chunk");
  return static_cast<std::uint8_t>(payload[4]);
}

using Sink = std::function<ChunkId(const Bytes&, ChunkKind)>;

// Pending edit at one level. A missing value deletes the key.
struct Edit {
  Bytes key;
  std::optional<Bytes> value;
  enum Check { None, MustExist, MustNotExist } check = None;
};

// Output of re-chunking one level: either an untouched old node or a freshly
// formed span of entries.
struct Piece {
  std::size_t old_index = 0;
  bool keep = false;
  std::vector<Entry> entries;
};

std::vector<Piece> rechunk(const std::vector<NodeRef>& old, const std::vector<Edit>& edits,
                           const std::function<std::vector<Entry>(const NodeRef&)>& load,
                           const ChunkingPolicy& policy, std::vector<Bytes>& violations) {
  std::vector<Piece> pieces;
  BoundaryScanner scanner(policy);
  std::vector<Entry> pending;

  auto emit = [&](Entry e) {
    const bool close = scanner.push(e.key);
    pending.push_back(std::move(e));
    if (close) {
      pieces.push_back({0, false, std::move(pending)});
      pending.clear();
    }
  };

  std::size_t ei = 0;
  if (old.empty()) {
    for (; ei < edits.size(); ++ei) {
      const Edit& ed = edits[ei];
      if (ed.check == Edit::MustExist) violations.push_back(ed.key);
      if (ed.value) emit({ed.key, *ed.value});
    }
    if (!pending.empty()) pieces.push_back({0, false, std::move(pending)});
    return pieces;
  }

  std::size_t i = 0;
  while (ei < edits.size()) {
    auto it = std::lower_bound(old.begin() + static_cast<std::ptrdiff_t>(i), old.end(), edits[ei].key,
                               [](const NodeRef& n, const Bytes& k) { return n.max_key < k; });
    std::size_t j = static_cast<std::size_t>(it - old.begin());
    if (j == old.size()) j = old.size() - 1;
    for (; i < j; ++i) pieces.push_back({i, true, {}});

    scanner.reset();
    std::size_t k = j;
    while (true) {
      const std::vector<Entry> entries = load(old[k]);
      const bool last = k + 1 == old.size();
      std::size_t a = 0;
      while (true) {
        const bool edit_ready = ei < edits.size() && (last || edits[ei].key <= old[k].max_key);
        if (!edit_ready && a == entries.size()) break;
        if (edit_ready && (a == entries.size() || edits[ei].key <= entries[a].key)) {
          const Edit& ed = edits[ei++];
          const bool exists = a < entries.size() && entries[a].key == ed.key;
          if (exists) {
            if (ed.check == Edit::MustNotExist) violations.push_back(ed.key);
            ++a;
          } else if (ed.check == Edit::MustExist) {
            violations.push_back(ed.key);
          }
          if (ed.value) emit({ed.key, *ed.value});
        } else {
          emit(entries[a++]);
        }
      }
      ++k;
      if (k == old.size()) {
        if (!pending.empty()) pieces.push_back({0, false, std::move(pending)});
        pending.clear();
        break;
      }
      // A boundary right at an old node end means the scanner is in the same
      // state as when the old tree was chunked: everything after is unchanged.
      if (pending.empty()) break;
    }
    i = k;
  }
  for (; i < old.size(); ++i) pieces.push_back({i, true, {}});
  return pieces;
}

// Upserts/deletes that turn the parent entries of `before` into those of `after`.
std::vector<Edit> level_edits(const std::vector<NodeRef>& before, const std::vector<NodeRef>& after) {
  std::vector<Edit> out;
  std::size_t a = 0, b = 0;
  while (a < before.size() || b < after.size()) {
    if (b == after.size() || (a < before.size() && before[a].max_key < after[b].max_key)) {
      out.push_back({before[a++].max_key, std::nullopt});
    } else if (a == before.size() || after[b].max_key < before[a].max_key) {
      out.push_back({after[b].max_key, Bytes(after[b].id.raw())});
      ++b;
    } else {
      if (before[a].id != after[b].id) out.push_back({after[b].max_key, Bytes(after[b].id.raw())});
      ++a;
      ++b;
    }
  }
  return out;
}

std::vector<NodeRef> entries_to_refs(std::span<const Entry> entries) {
  std::vector<NodeRef> refs;
  refs.reserve(entries.size());
  for (const auto& e : entries) refs.push_back({e.key, ChunkId::from_bytes(e.value)});
  return refs;
}

// Chunks successive interior levels above `level` until a single root remains.
std::pair<ChunkId, std::uint32_t> build_upper(std::vector<NodeRef> level, std::uint8_t lvl,
                                              const ChunkingPolicy& policy, const Sink& sink) {
  while (level.size() > 1) {
    ++lvl;
    std::vector<BytesView> keys;
    keys.reserve(level.size());
    for (const auto& n : level) keys.emplace_back(n.max_key);
    std::vector<NodeRef> next;
    for (const auto& sp : boundaries(std::span<const BytesView>(keys), policy)) {
      std::span<const NodeRef> children(level.data() + sp.start_index, sp.end_index - sp.start_index);
      const ChunkId id = sink(ProllyTree::encode_interior(lvl, children), ChunkKind::Interior);
      next.push_back({children.back().max_key, id});
    }
    level = std::move(next);
  }
  return {level.front().id, static_cast<std::uint32_t>(lvl) + 1};
}

std::pair<ChunkId, std::uint32_t> build_tree(std::span<const Entry> entries, const ChunkingPolicy& policy,
                                             const LeafCodec& codec, const Sink& sink) {
  if (entries.empty()) return {empty_chunk_id(), 0};
  std::vector<NodeRef> leaves;
  for (const auto& sp : boundaries(entries, policy)) {
    auto span = entries.subspan(sp.start_index, sp.end_index - sp.start_index);
    const ChunkId id = sink(codec.encode(span), ChunkKind::Leaf);
    leaves.push_back({span.back().key, id});
  }
  return build_upper(std::move(leaves), 0, policy, sink);
}

}  // namespace

// ---- RawLeafCodec ----

Bytes RawLeafCodec::encode(std::span<const Entry> entries) const {
  Bytes out(kRawMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.key.size()));
    out += e.key;
    put_u32(out, static_cast<std::uint32_t>(e.value.size()));
    out += e.value;
  }
  return out;
}

std::vector<Entry> RawLeafCodec::decode(BytesView payload) const {
  ByteReader r(payload, ErrorCode::DecodingError);
  if (r.take(4) != BytesView(kRawMagic, 4)) throw Error(ErrorCode::DecodingError, "not a raw leaf chunk");
  const std::uint32_t n = r.u32();
  std::vector<Entry> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Entry e;
    e.key = Bytes(r.take(r.u32()));
    e.value = Bytes(r.take(r.u32()));
    out.push_back(std::move(e));
  }
  if (!r.done()) throw Error(ErrorCode::DecodingError, "trailing bytes in raw leaf chunk");
  return out;
}

// ---- interior codec ----

Bytes ProllyTree::encode_interior(std::uint8_t level, std::span<const NodeRef> children) {
  Bytes out(kInteriorMagic, 4);
  out.push_back(static_cast<char>(level));
  put_u32(out, static_cast<std::uint32_t>(children.size()));
  for (const auto& c : children) {
    put_u32(out, static_cast<std::uint32_t>(c.max_key.size()));
    out += c.max_key;
    out += c.id.raw();
  }
  return out;
}

std::vector<NodeRef> ProllyTree::decode_interior(BytesView payload, std::uint8_t* level) {
  ByteReader r(payload, ErrorCode::CorruptTree);
  if (r.take(4) != BytesView(kInteriorMagic, 4)) throw Error(ErrorCode::CorruptTree, "not an interior chunk");
  const std::uint8_t lvl = r.u8();
  if (level) *level = lvl;
  const std::uint32_t n = r.u32();
  std::vector<NodeRef> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    NodeRef ref;
    ref.max_key = Bytes(r.take(r.u32()));
    ref.id = ChunkId::from_bytes(r.take(ChunkId::kSize));
    if (!out.empty() && !(out.back().max_key < ref.max_key)) {
      throw Error(ErrorCode::CorruptTree, "interior keys not strictly increasing");
    }
    out.push_back(std::move(ref));
  }
  if (n == 0 || lvl == 0) throw Error(ErrorCode::CorruptTree, "malformed interior chunk");
  return out;
}

// ---- ProllyTree ----

ChunkId ProllyTree::root_id(const TreeRef& tree) const {
  if (tree.root == empty_chunk_id()) return tree.root;
  if (store_.is_virtual(tree.root)) return store_.materialize(tree.root).first;
  return store_.resolve(tree.root);
}

std::shared_ptr<const Bytes> ProllyTree::read(const ChunkId& id) const {
  StoredChunk c = store_.get(id);
  if (!c.payload) throw Error(ErrorCode::CorruptTree, "unexpected virtual chunk " + id.hex() + " inside a tree");
  return c.payload;
}

TreeRef ProllyTree::materialized(const TreeRef& tree) const {
  TreeRef out = tree;
  const ChunkId id = root_id(tree);
  if (id == tree.root) return out;
  out.root = id;
  if (id == empty_chunk_id()) {
    out.height = 0;
  } else {
    auto payload = read(id);
    out.height = is_interior(*payload) ? interior_level(*payload) + 1u : 1u;
  }
  return out;
}

TreeRef ProllyTree::build(std::span<const Entry> entries, const ChunkingPolicy& policy) {
  TreeRef t;
  t.policy = policy;
  t.entry_count = entries.size();
  std::tie(t.root, t.height) =
      build_tree(entries, policy, codec_, [this](const Bytes& p, ChunkKind k) { return store_.put(p, k); });
  return t;
}

ChunkId ProllyTree::compute_root(std::span<const Entry> entries, const ChunkingPolicy& policy) const {
  return build_tree(entries, policy, codec_,
                    [](const Bytes& p, ChunkKind) { return sha256(p, kMaterializedNamespace); })
      .first;
}

std::optional<Bytes> ProllyTree::lookup(const TreeRef& tree, BytesView key) const {
  ChunkId id = root_id(tree);
  if (id == empty_chunk_id()) return std::nullopt;
  while (true) {
    auto payload = read(id);
    if (is_interior(*payload)) {
      const auto nodes = decode_interior(*payload);
      auto it = std::lower_bound(nodes.begin(), nodes.end(), key,
                                 [](const NodeRef& n, BytesView k) { return BytesView(n.max_key) < k; });
      if (it == nodes.end()) return std::nullopt;
      id = it->id;
      continue;
    }
    const auto entries = codec_.decode(*payload);
    auto it = std::lower_bound(entries.begin(), entries.end(), key,
                               [](const Entry& e, BytesView k) { return BytesView(e.key) < k; });
    if (it == entries.end() || it->key != key) return std::nullopt;
    return it->value;
  }
}

std::vector<std::optional<Bytes>> ProllyTree::lookup_many(const TreeRef& tree, std::span<const Bytes> keys) const {
  std::vector<std::optional<Bytes>> out(keys.size());
  const ChunkId root = root_id(tree);
  if (root == empty_chunk_id() || keys.empty()) return out;
  std::function<void(const ChunkId&, std::size_t, std::size_t)> walk = [&](const ChunkId& id, std::size_t lo,
                                                                          std::size_t hi) {
    auto payload = read(id);
    if (is_interior(*payload)) {
      std::size_t i = lo;
      for (const auto& n : decode_interior(*payload)) {
        std::size_t j = i;
        while (j < hi && BytesView(keys[j]) <= BytesView(n.max_key)) ++j;
        if (j > i) walk(n.id, i, j);
        i = j;
        if (i == hi) break;
      }
      return;
    }
    const auto entries = codec_.decode(*payload);
    auto it = entries.begin();
    for (std::size_t i = lo; i < hi; ++i) {
      it = std::lower_bound(it, entries.end(), keys[i],
                            [](const Entry& e, const Bytes& k) { return e.key < k; });
      if (it != entries.end() && it->key == keys[i]) out[i] = it->value;
    }
  };
  walk(root, 0, keys.size());
  return out;
}

std::vector<Entry> ProllyTree::scan(const TreeRef& tree, BytesView lo, std::optional<BytesView> hi) const {
  if (hi && lo > *hi) throw Error(ErrorCode::InvalidRange, "scan lower bound exceeds upper bound");
  std::vector<Entry> out;
  const ChunkId root = root_id(tree);
  if (root == empty_chunk_id()) return out;
  std::function<void(const ChunkId&)> walk = [&](const ChunkId& id) {
    auto payload = read(id);
    if (is_interior(*payload)) {
      for (const auto& n : decode_interior(*payload)) {
        if (BytesView(n.max_key) < lo) continue;
        walk(n.id);
        if (hi && BytesView(n.max_key) >= *hi) break;
      }
      return;
    }
    for (auto& e : codec_.decode(*payload)) {
      if (BytesView(e.key) < lo) continue;
      if (hi && BytesView(e.key) >= *hi) break;
      out.push_back(std::move(e));
    }
  };
  walk(root);
  return out;
}

TreeRef ProllyTree::apply(const TreeRef& tree, std::span<const Mutation> batch) {
  if (batch.empty()) return tree;
  for (std::size_t i = 1; i < batch.size(); ++i) {
    if (!(batch[i - 1].key < batch[i].key)) {
      throw Error(ErrorCode::InvalidInput, "mutation batch must be sorted by key with unique keys");
    }
  }
  const ChunkingPolicy& policy = tree.policy;
  const ChunkId root = root_id(tree);

  // levels[l] lists every node of level l in key order.
  std::vector<std::vector<NodeRef>> levels;
  if (root != empty_chunk_id()) {
    auto payload = read(root);
    if (is_interior(*payload)) {
      std::uint8_t top = 0;
      auto children = decode_interior(*payload, &top);
      levels.resize(top + 1u);
      levels[top] = {{children.back().max_key, root}};
      levels[top - 1] = std::move(children);
      for (std::size_t l = top - 1u; l > 0; --l) {
        for (const auto& n : levels[l]) {
          auto sub = decode_interior(*read(n.id));
          levels[l - 1].insert(levels[l - 1].end(), std::make_move_iterator(sub.begin()),
                               std::make_move_iterator(sub.end()));
        }
      }
    } else {
      auto entries = codec_.decode(*payload);
      if (entries.empty()) throw Error(ErrorCode::CorruptTree, "empty leaf chunk as root");
      levels.push_back({{entries.back().key, root}});
    }
  } else {
    levels.emplace_back();
  }

  std::vector<Edit> edits;
  edits.reserve(batch.size());
  std::int64_t count_delta = 0;
  for (const auto& m : batch) {
    switch (m.op) {
      case MutationOp::Insert:
        edits.push_back({m.key, m.value, Edit::MustNotExist});
        ++count_delta;
        break;
      case MutationOp::Update:
        edits.push_back({m.key, m.value, Edit::MustExist});
        break;
      case MutationOp::Delete:
        edits.push_back({m.key, std::nullopt, Edit::MustExist});
        --count_delta;
        break;
    }
  }

  std::vector<Bytes> violations;
  auto leaf_pieces = rechunk(
      levels[0], edits, [this](const NodeRef& n) { return codec_.decode(*read(n.id)); }, policy, violations);
  if (!violations.empty()) {
    std::string msg = "key existence violated for";
    for (const auto& k : violations) msg += " " + to_hex(k);
    throw Error(ErrorCode::ConstraintViolation, msg);
  }

  auto materialize_pieces = [&](std::vector<Piece>& pieces, const std::vector<NodeRef>& old, std::uint8_t lvl) {
    std::vector<NodeRef> out;
    out.reserve(pieces.size());
    for (auto& p : pieces) {
      if (p.keep) {
        out.push_back(old[p.old_index]);
      } else if (lvl == 0) {
        out.push_back({p.entries.back().key, store_.put(codec_.encode(p.entries), ChunkKind::Leaf)});
      } else {
        const auto refs = entries_to_refs(p.entries);
        out.push_back({refs.back().max_key, store_.put(encode_interior(lvl, refs), ChunkKind::Interior)});
      }
    }
    return out;
  };

  TreeRef result;
  result.policy = policy;
  result.entry_count = static_cast<std::uint64_t>(static_cast<std::int64_t>(tree.entry_count) + count_delta);

  std::vector<NodeRef> cur = materialize_pieces(leaf_pieces, levels[0], 0);
  std::uint8_t lvl = 0;
  while (true) {
    if (cur.empty()) {
      result.root = empty_chunk_id();
      result.height = 0;
      return result;
    }
    if (cur.size() == 1) {
      result.root = cur.front().id;
      result.height = lvl + 1u;
      return result;
    }
    if (lvl + 1u >= levels.size()) {
      std::tie(result.root, result.height) = build_upper(
          std::move(cur), lvl, policy, [this](const Bytes& p, ChunkKind k) { return store_.put(p, k); });
      return result;
    }
    const auto up_edits = level_edits(levels[lvl], cur);
    auto pieces = rechunk(
        levels[lvl + 1], up_edits,
        [this](const NodeRef& n) {
          std::vector<Entry> out;
          for (auto& c : decode_interior(*read(n.id))) out.push_back({std::move(c.max_key), Bytes(c.id.raw())});
          return out;
        },
        policy, violations);
    ++lvl;
    cur = materialize_pieces(pieces, levels[lvl], lvl);
  }
}

Delta ProllyTree::diff(const TreeRef& a, const TreeRef& b) const {
  if (!(a.policy == b.policy)) {
    throw Error(ErrorCode::PolicyMismatch, a.policy.to_string() + " vs " + b.policy.to_string());
  }
  const TreeRef ta = materialized(a);
  const TreeRef tb = materialized(b);
  Delta delta;
  if (ta.root == tb.root) return delta;

  const std::size_t top = std::max(ta.height, tb.height);
  std::vector<std::vector<ChunkId>> pa(top), pb(top);
  if (ta.height > 0) pa[ta.height - 1].push_back(ta.root);
  if (tb.height > 0) pb[tb.height - 1].push_back(tb.root);

  std::vector<Entry> la, lb;
  for (std::size_t l = top; l-- > 0;) {
    const std::unordered_set<ChunkId, ChunkIdHash> sa(pa[l].begin(), pa[l].end());
    const std::unordered_set<ChunkId, ChunkIdHash> sb(pb[l].begin(), pb[l].end());
    auto expand = [&](const std::vector<ChunkId>& ids, const std::unordered_set<ChunkId, ChunkIdHash>& other,
                      std::vector<std::vector<ChunkId>>& frontier, std::vector<Entry>& leaves) {
      for (const auto& id : ids) {
        if (other.count(id)) continue;
        auto payload = read(id);
        if (l > 0) {
          for (const auto& c : decode_interior(*payload)) frontier[l - 1].push_back(c.id);
        } else {
          auto entries = codec_.decode(*payload);
          leaves.insert(leaves.end(), std::make_move_iterator(entries.begin()),
                        std::make_move_iterator(entries.end()));
        }
      }
    };
    expand(pa[l], sb, pa, la);
    expand(pb[l], sa, pb, lb);
  }

  std::size_t i = 0, j = 0;
  while (i < la.size() || j < lb.size()) {
    if (j == lb.size() || (i < la.size() && la[i].key < lb[j].key)) {
      delta.removed.push_back(std::move(la[i++]));
    } else if (i == la.size() || lb[j].key < la[i].key) {
      delta.added.push_back(std::move(lb[j++]));
    } else {
      if (la[i].value != lb[j].value) delta.modified.push_back({la[i].key, la[i].value, lb[j].value});
      ++i;
      ++j;
    }
  }
  return delta;
}

bool ProllyTree::verify_canonical(const TreeRef& tree) const {
  try {
    const ChunkId root = root_id(tree);
    const auto entries = scan_all(tree);
    for (std::size_t i = 1; i < entries.size(); ++i) {
      if (!(entries[i - 1].key < entries[i].key)) return false;
    }
    return compute_root(entries, tree.policy) == root;
  } catch (const Error&) {
    return false;
  }
}

std::vector<ChunkId> ProllyTree::reachable(const TreeRef& tree) const {
  std::vector<ChunkId> out;
  const ChunkId root = root_id(tree);
  if (root == empty_chunk_id()) return out;
  out.push_back(root);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto payload = read(out[i]);
    if (!is_interior(*payload)) continue;
    for (const auto& c : decode_interior(*payload)) out.push_back(c.id);
  }
  return out;
}

std::size_t ProllyTree::leaf_count(const TreeRef& tree) const {
  const ChunkId root = root_id(tree);
  if (root == empty_chunk_id()) return 0;
  std::vector<ChunkId> frontier{root};
  std::size_t leaves = 0;
  while (!frontier.empty()) {
    std::vector<ChunkId> next;
    for (const auto& id : frontier) {
      auto payload = read(id);
      if (!is_interior(*payload)) {
        ++leaves;
        continue;
      }
      const auto children = decode_interior(*payload);
      if (interior_level(*payload) == 1) {
        leaves += children.size();
      } else {
        for (const auto& c : children) next.push_back(c.id);
      }
    }
    frontier = std::move(next);
  }
  return leaves;
}

}  // namespace ldb
