#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "ldb/prolly.hpp"
#include "ldb/relation.hpp"
#include "test_util.hpp"

using namespace ldb;
using ldb::test::TempDir;

namespace {

Bytes key_of(std::int64_t i) { return encode_key(Value::int64(i), ColumnType::Int64); }

std::vector<Entry> from_map(const std::map<Bytes, Bytes>& m) {
  std::vector<Entry> out;
  for (const auto& [k, v] : m) out.push_back({k, v});
  return out;
}

std::map<Bytes, Bytes> random_map(std::mt19937_64& rng, std::size_t n, std::int64_t key_space) {
  std::map<Bytes, Bytes> m;
  while (m.size() < n) m[key_of(static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(key_space)))] = std::to_string(rng());
  return m;
}

// Applies a random batch to both the map and the mutation list.
std::vector<Mutation> random_batch(std::mt19937_64& rng, std::map<Bytes, Bytes>& m, std::int64_t key_space,
                                   std::size_t max_ops) {
  std::map<Bytes, Mutation> batch;
  const std::size_t ops = 1 + rng() % max_ops;
  for (std::size_t i = 0; i < ops; ++i) {
    const Bytes k = key_of(static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(key_space)));
    if (batch.count(k)) continue;
    auto it = m.find(k);
    if (it == m.end()) {
      const Bytes v = "n" + std::to_string(rng());
      batch[k] = Mutation::insert(k, v);
      m[k] = v;
    } else if (rng() % 2) {
      const Bytes v = "u" + std::to_string(rng());
      batch[k] = Mutation::update(k, v);
      it->second = v;
    } else {
      batch[k] = Mutation::erase(k);
      m.erase(it);
    }
  }
  std::vector<Mutation> out;
  for (auto& [k, mu] : batch) out.push_back(std::move(mu));
  return out;
}

Delta brute_diff(const std::map<Bytes, Bytes>& a, const std::map<Bytes, Bytes>& b) {
  Delta d;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end()) {
      d.removed.push_back({k, v});
    } else if (it->second != v) {
      d.modified.push_back({k, v, it->second});
    }
  }
  for (const auto& [k, v] : b) {
    if (!a.count(k)) d.added.push_back({k, v});
  }
  return d;
}

struct Fixture {
  TempDir dir;
  ChunkStore store{dir.path()};
  RawLeafCodec codec;
  ProllyTree tree{store, codec};
};

}  // namespace

TEST_CASE("prolly: empty and single-leaf trees") {
  Fixture f;
  const auto empty = f.tree.build({}, ChunkingPolicy::content(64));
  CHECK(empty.height == 0);
  CHECK(empty.root == empty_chunk_id());
  CHECK(empty.entry_count == 0);
  CHECK_FALSE(f.tree.lookup(empty, "x"));
  CHECK(f.tree.scan(empty, "", std::nullopt).empty());
  CHECK(f.tree.verify_canonical(empty));

  std::vector<Entry> three{{key_of(1), "a"}, {key_of(2), "b"}, {key_of(3), "c"}};
  const auto t = f.tree.build(three, ChunkingPolicy::capacity(10));
  CHECK(t.height == 1);
  CHECK(t.entry_count == 3);
  for (const auto& e : three) CHECK(f.tree.lookup(t, e.key) == e.value);
  CHECK(f.tree.leaf_count(t) == 1);
}

TEST_CASE("prolly: 10k sequential keys match the two-pass construction oracle") {
  Fixture f;
  const auto schema = TableSchema::parse("table t (id:int64, v:int64) pk=id");
  const auto group = schema.group_schema(0);
  ColumnarLeafCodec codec(group);
  ProllyTree tree(f.store, codec);
  std::vector<Entry> entries;
  for (std::int64_t i = 0; i < 10000; ++i) entries.push_back(row_to_entry({Value::int64(i), Value::int64(3 * i)}, group));
  const auto t = tree.build(entries, ChunkingPolicy::content(64, 4));
  const std::string golden = ldb::test::oracle_file("prolly_root_10k_content_w4_t64.txt");
  CHECK(t.root.hex() + " " + std::to_string(t.height) + "\n" == golden);
  CHECK(tree.compute_root(entries, t.policy) == t.root);
  CHECK(tree.scan_all(t) == entries);
}

TEST_CASE("prolly: lookup and scan agree with in-memory oracles") {
  Fixture f;
  std::mt19937_64 rng(1);
  const auto m = random_map(rng, 1000, 5000);
  const auto entries = from_map(m);
  for (const auto& policy : {ChunkingPolicy::content(16, 4), ChunkingPolicy::capacity(16)}) {
    const auto t = f.tree.build(entries, policy);
    CHECK(t.height >= 2);
    for (const auto& e : entries) CHECK(f.tree.lookup(t, e.key) == e.value);
    for (std::int64_t i = 0; i < 5000; i += 7) {
      const Bytes k = key_of(i);
      auto it = m.find(k);
      CHECK(f.tree.lookup(t, k) == (it == m.end() ? std::nullopt : std::optional<Bytes>(it->second)));
    }
    CHECK_FALSE(f.tree.lookup(t, key_of(-1)));
    CHECK_FALSE(f.tree.lookup(t, key_of(6000)));
    CHECK(f.tree.scan_all(t) == entries);
    for (int trial = 0; trial < 100; ++trial) {
      std::int64_t lo = static_cast<std::int64_t>(rng() % 5200) - 100;
      std::int64_t hi = lo + static_cast<std::int64_t>(rng() % 1500);
      std::vector<Entry> expected;
      for (auto it = m.lower_bound(key_of(lo)); it != m.end() && it->first < key_of(hi); ++it) {
        expected.push_back({it->first, it->second});
      }
      const auto got = f.tree.scan(t, key_of(lo), BytesView(key_of(hi)));
      CHECK(got == expected);
      for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].key < got[i].key);
    }
    try {
      f.tree.scan(t, key_of(5), BytesView(key_of(4)));
      FAIL("expected InvalidRange");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidRange);
    }
  }
}

TEST_CASE("prolly: apply is canonical under random batches") {
  for (const auto& policy : {ChunkingPolicy::content(16, 4), ChunkingPolicy::capacity(12), ChunkingPolicy::content(4, 2)}) {
    Fixture f;
    std::mt19937_64 rng(42);
    auto m = random_map(rng, 1000, 4000);
    auto t = f.tree.build(from_map(m), policy);
    CHECK(f.tree.apply(t, {}) == t);
    for (int round = 0; round < 200; ++round) {
      const auto batch = random_batch(rng, m, 4000, round % 10 == 0 ? 300 : 20);
      t = f.tree.apply(t, batch);
      const auto rebuilt = f.tree.compute_root(from_map(m), policy);
      REQUIRE(t.root == rebuilt);
      CHECK(t.entry_count == m.size());
    }
    CHECK(f.tree.verify_canonical(t));
    CHECK(f.tree.scan_all(t) == from_map(m));
  }
}

TEST_CASE("prolly: apply grows from empty and shrinks to empty") {
  Fixture f;
  const auto policy = ChunkingPolicy::content(8, 3);
  auto t = f.tree.build({}, policy);
  std::vector<Mutation> ins;
  for (std::int64_t i = 0; i < 3000; ++i) ins.push_back(Mutation::insert(key_of(i), std::to_string(i)));
  t = f.tree.apply(t, ins);
  CHECK(t.height >= 3);
  CHECK(t.root == f.tree.compute_root(f.tree.scan_all(t), policy));
  std::vector<Mutation> del;
  for (std::int64_t i = 0; i < 3000; ++i) {
    if (i != 1234) del.push_back(Mutation::erase(key_of(i)));
  }
  t = f.tree.apply(t, del);
  CHECK(t.height == 1);
  CHECK(t.entry_count == 1);
  t = f.tree.apply(t, std::vector<Mutation>{Mutation::erase(key_of(1234))});
  CHECK(t.height == 0);
  CHECK(t.root == empty_chunk_id());
}

TEST_CASE("prolly: insert then delete restores the root") {
  Fixture f;
  std::mt19937_64 rng(2);
  const auto m = random_map(rng, 2000, 100000);
  const auto t = f.tree.build(from_map(m), ChunkingPolicy::content(32, 4));
  for (int i = 0; i < 50; ++i) {
    Bytes k;
    do {
      k = key_of(static_cast<std::int64_t>(rng() % 100000));
    } while (m.count(k));
    const auto t1 = f.tree.apply(t, std::vector<Mutation>{Mutation::insert(k, "x")});
    CHECK(t1.root != t.root);
    const auto t2 = f.tree.apply(t1, std::vector<Mutation>{Mutation::erase(k)});
    CHECK(t2 == t);
  }
}

TEST_CASE("prolly: history independence over permuted batch orders") {
  std::mt19937_64 rng(8);
  Fixture f;
  const auto policy = ChunkingPolicy::content(16, 4);
  for (int trial = 0; trial < 10; ++trial) {
    std::map<Bytes, Bytes> target = random_map(rng, 800, 3000);
    std::vector<Entry> all = from_map(target);
    std::shuffle(all.begin(), all.end(), rng);
    // Insert in a random partition into sorted batches.
    auto t = f.tree.build({}, policy);
    std::size_t at = 0;
    while (at < all.size()) {
      const std::size_t n = std::min<std::size_t>(all.size() - at, 1 + rng() % 150);
      std::vector<Entry> chunk(all.begin() + static_cast<std::ptrdiff_t>(at), all.begin() + static_cast<std::ptrdiff_t>(at + n));
      std::sort(chunk.begin(), chunk.end(), [](const Entry& a, const Entry& b) { return a.key < b.key; });
      std::vector<Mutation> batch;
      for (auto& e : chunk) batch.push_back(Mutation::insert(e.key, e.value));
      t = f.tree.apply(t, batch);
      at += n;
    }
    CHECK(t.root == f.tree.build(from_map(target), policy).root);
  }
}

TEST_CASE("prolly: constraint violations list offending keys and change nothing") {
  Fixture f;
  std::vector<Entry> e{{key_of(1), "a"}, {key_of(2), "b"}, {key_of(3), "c"}};
  const auto t = f.tree.build(e, ChunkingPolicy::capacity(2));
  const auto writes = f.store.writes();
  std::vector<Mutation> bad{Mutation::insert(key_of(1), "z"), Mutation::update(key_of(5), "q"), Mutation::erase(key_of(6))};
  try {
    f.tree.apply(t, bad);
    FAIL("expected ConstraintViolation");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::ConstraintViolation);
    const std::string msg = err.what();
    for (int k : {1, 5, 6}) CHECK(msg.find(to_hex(key_of(k))) != std::string::npos);
  }
  CHECK(f.store.writes() == writes);
  std::vector<Mutation> unsorted{Mutation::erase(key_of(2)), Mutation::erase(key_of(1))};
  CHECK_THROWS_AS(f.tree.apply(t, unsorted), Error);
  auto empty = f.tree.build({}, ChunkingPolicy::capacity(2));
  CHECK_THROWS_AS(f.tree.apply(empty, std::vector<Mutation>{Mutation::erase(key_of(1))}), Error);
}

TEST_CASE("prolly: single-key update writes a bounded number of chunks") {
  Fixture f;
  std::mt19937_64 rng(4);
  const auto policy = ChunkingPolicy::content(32, 4);
  auto m = random_map(rng, 20000, 1000000);
  auto t = f.tree.build(from_map(m), policy);
  const std::size_t bound = t.height + (policy.max_entries + policy.min_entries - 1) / policy.min_entries + 1;
  for (int i = 0; i < 100; ++i) {
    auto it = m.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng() % m.size()));
    std::vector<Mutation> batch;
    if (i % 3 == 0) {
      batch.push_back(Mutation::erase(it->first));
      m.erase(it);
    } else {
      batch.push_back(Mutation::update(it->first, "changed" + std::to_string(i)));
      it->second = "changed" + std::to_string(i);
    }
    const auto before = f.store.stats().unique_chunks;
    t = f.tree.apply(t, batch);
    CHECK(f.store.stats().unique_chunks - before <= bound);
  }
  CHECK(t.root == f.tree.compute_root(from_map(m), policy));
}

TEST_CASE("prolly: diff") {
  Fixture f;
  std::mt19937_64 rng(13);
  const auto policy = ChunkingPolicy::content(16, 4);
  auto m = random_map(rng, 1500, 6000);
  const auto t = f.tree.build(from_map(m), policy);
  CHECK(f.tree.diff(t, t).empty());

  Bytes x;
  do {
    x = key_of(static_cast<std::int64_t>(rng() % 6000));
  } while (m.count(x));
  auto mx = m;
  mx[x] = "new";
  const auto tx = f.tree.build(from_map(mx), policy);
  const auto d = f.tree.diff(t, tx);
  CHECK(d.added == std::vector<Entry>{{x, "new"}});
  CHECK(d.removed.empty());
  CHECK(d.modified.empty());
  CHECK(f.tree.diff(tx, t).removed == std::vector<Entry>{{x, "new"}});

  for (int trial = 0; trial < 100; ++trial) {
    auto a = m;
    auto b = m;
    const std::size_t rounds = 1 + rng() % 3;
    for (std::size_t r = 0; r < rounds; ++r) {
      random_batch(rng, a, 6000, trial % 4 == 0 ? 400 : 10);
      random_batch(rng, b, 6000, 10);
    }
    const auto ta = f.tree.build(from_map(a), policy);
    const auto tb = f.tree.build(from_map(b), policy);

    // Chunks reachable from both trees must never be read.
    const auto ra = f.tree.reachable(ta);
    const auto rb = f.tree.reachable(tb);
    std::set<ChunkId> shared;
    const std::set<ChunkId> sa(ra.begin(), ra.end());
    for (const auto& id : rb) {
      if (sa.count(id)) shared.insert(id);
    }
    std::size_t shared_reads = 0;
    f.store.set_read_observer([&](const ChunkId& id) { shared_reads += shared.count(id); });
    const auto got = f.tree.diff(ta, tb);
    f.store.set_read_observer(nullptr);
    CHECK(shared_reads == 0);
    CHECK(got == brute_diff(a, b));
  }

  const auto cap = f.tree.build(from_map(m), ChunkingPolicy::capacity(16));
  try {
    f.tree.diff(t, cap);
    FAIL("expected PolicyMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PolicyMismatch);
  }
}

TEST_CASE("prolly: verify_canonical rejects a hand-assembled split") {
  Fixture f;
  const auto policy = ChunkingPolicy::capacity(50);
  std::vector<Entry> e;
  for (std::int64_t i = 0; i < 100; ++i) e.push_back({key_of(i), "v"});
  const auto good = f.tree.build(e, policy);
  CHECK(good.height == 2);
  CHECK(f.tree.verify_canonical(good));

  // Split at 30/70 instead of 50/50.
  const ChunkId l0 = f.store.put(f.codec.encode(std::span<const Entry>(e).subspan(0, 30)), ChunkKind::Leaf);
  const ChunkId l1 = f.store.put(f.codec.encode(std::span<const Entry>(e).subspan(30)), ChunkKind::Leaf);
  std::vector<NodeRef> kids{{e[29].key, l0}, {e[99].key, l1}};
  const ChunkId root = f.store.put(ProllyTree::encode_interior(1, kids), ChunkKind::Interior);
  TreeRef bad{root, 2, policy, 100};
  CHECK(f.tree.scan_all(bad) == e);
  CHECK_FALSE(f.tree.verify_canonical(bad));

  // Out-of-order interior keys are reported as corruption.
  Bytes corrupt = ProllyTree::encode_interior(1, std::vector<NodeRef>{{e[99].key, l1}, {e[29].key, l0}});
  TreeRef broken{f.store.put(corrupt, ChunkKind::Interior), 2, policy, 100};
  try {
    f.tree.lookup(broken, e[5].key);
    FAIL("expected CorruptTree");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::CorruptTree);
  }
  CHECK_FALSE(f.tree.verify_canonical(broken));
}
