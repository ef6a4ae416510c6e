#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "ldb/chunk_store.hpp"
#include "test_util.hpp"

using namespace ldb;
using ldb::test::TempDir;

namespace {

// Uppercases the concatenation of its sources.
class UpperExecutor : public RecipeExecutor {
 public:
  ChunkId execute(const Recipe& recipe, ChunkStore& store) override {
    ++calls;
    Bytes out;
    for (const auto& s : recipe.sources) out += *store.get(s).payload;
    if (out.find('!') != Bytes::npos) throw Error(ErrorCode::InvalidInput, "bang in row 7");
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return store.put(out, ChunkKind::Leaf);
  }
  int calls = 0;
};

}  // namespace

TEST_CASE("chunk store: put is deduplicated and content addressed") {
  TempDir dir;
  ChunkStore store(dir.path());
  CHECK(store.stats() == StoreStats{});
  const ChunkId a = store.put("payload", ChunkKind::Leaf);
  const ChunkId b = store.put("payload", ChunkKind::Leaf);
  CHECK(a == b);
  CHECK(store.stats().unique_chunks == 1);
  CHECK(store.put("payloae", ChunkKind::Leaf) != a);
  CHECK(a == sha256("payload", kMaterializedNamespace));
}

TEST_CASE("chunk store: id of \"abc\" matches an independent SHA-256") {
  TempDir dir;
  ChunkStore store(dir.path());
  std::string expected = ldb::test::oracle_file("sha256_leaf_abc.txt");
  expected.erase(expected.find_last_not_of("\n") + 1);
  CHECK(store.put("abc", ChunkKind::Leaf).hex() == expected);
}

TEST_CASE("chunk store: file layout is bit exact") {
  TempDir dir;
  ChunkStore store(dir.path());
  const ChunkId id = store.put("xyz", ChunkKind::Interior);
  const auto hex = id.hex();
  const auto path = dir.path() / "chunks" / hex.substr(0, 2) / hex.substr(2);
  REQUIRE(std::filesystem::exists(path));
  std::ifstream in(path, std::ios::binary);
  std::string file((std::istreambuf_iterator<char>(in)), {});
  CHECK(file == std::string("LDC1\x01\x03\0\0\0\0\0\0\0xyz", 16));
}

TEST_CASE("chunk store: get round trips and reports unknown ids") {
  TempDir dir;
  ChunkStore store(dir.path());
  const ChunkId id = store.put("hello", ChunkKind::Leaf);
  auto c = store.get(id);
  CHECK(c.kind == ChunkKind::Leaf);
  CHECK(*c.payload == "hello");
  CHECK_FALSE(c.recipe.has_value());
  try {
    store.get(sha256("never stored"));
    FAIL("expected NotFound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotFound);
  }
}

TEST_CASE("chunk store: stats count payload bytes only and match a recount") {
  TempDir dir;
  ChunkStore store(dir.path());
  for (char c : {'a', 'b', 'c'}) store.put(Bytes(100, c), ChunkKind::Leaf);
  CHECK(store.stats().unique_chunks == 3);
  CHECK(store.stats().total_bytes == 300);
  CHECK(store.stats() == store.recount());
  ChunkStore reopened(dir.path());
  CHECK(reopened.stats() == store.stats());
}

TEST_CASE("chunk store: virtual chunks") {
  TempDir dir;
  ChunkStore store(dir.path());
  UpperExecutor exec;
  store.set_executor(&exec);
  const ChunkId src = store.put("abc", ChunkKind::Leaf);
  const auto before = store.stats();

  Recipe r{"upper", {src}, 3};
  const ChunkId v = store.put_virtual(r);
  CHECK(store.put_virtual(r) == v);
  CHECK(store.stats().virtual_chunks == 1);
  CHECK(store.stats().total_bytes == before.total_bytes);
  CHECK(v == sha256(r.serialize(), kVirtualNamespace));

  auto got = store.get(v);
  CHECK(got.kind == ChunkKind::Virtual);
  CHECK_FALSE(got.payload);
  REQUIRE(got.recipe.has_value());
  CHECK(*got.recipe == r);

  SUBCASE("materialize is idempotent") {
    auto [id1, p1] = store.materialize(v);
    CHECK(*p1 == "ABC");
    CHECK(id1 == sha256("ABC", kMaterializedNamespace));
    const auto stats = store.stats();
    auto [id2, p2] = store.materialize(v);
    CHECK(id1 == id2);
    CHECK(*p1 == *p2);
    CHECK(store.stats() == stats);
    CHECK(exec.calls == 1);
    CHECK(store.resolve(v) == id1);
    CHECK(*store.get(v).payload == "ABC");
    CHECK(store.stats() == store.recount());

    ChunkStore reopened(dir.path());
    CHECK(reopened.resolve(v) == id1);
  }

  SUBCASE("materialize of a leaf is identity") {
    auto [id, p] = store.materialize(src);
    CHECK(id == src);
    CHECK(*p == "abc");
  }

  SUBCASE("recipes over virtual sources materialize recursively") {
    const ChunkId v2 = store.put_virtual(Recipe{"upper", {v, src}, 0});
    auto [id, p] = store.materialize(v2);
    CHECK(*p == "ABCABC");
  }
}

TEST_CASE("chunk store: recipe errors") {
  TempDir dir;
  ChunkStore store(dir.path());
  UpperExecutor exec;
  store.set_executor(&exec);
  try {
    store.put_virtual(Recipe{"upper", {sha256("missing")}, 0});
    FAIL("expected NotFound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotFound);
  }
  const ChunkId bad = store.put_virtual(Recipe{"upper", {store.put("oops!", ChunkKind::Leaf)}, 0});
  try {
    store.materialize(bad);
    FAIL("expected MaterializationError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MaterializationError);
    CHECK(std::string(e.what()).find(bad.hex()) != std::string::npos);
    CHECK(std::string(e.what()).find("row 7") != std::string::npos);
  }
}

TEST_CASE("chunk store: read observer sees every payload read") {
  TempDir dir;
  ChunkStore store(dir.path());
  const ChunkId a = store.put("a", ChunkKind::Leaf);
  std::vector<ChunkId> seen;
  store.set_read_observer([&](const ChunkId& id) { seen.push_back(id); });
  store.get(a);
  store.clear_cache();
  store.get(a);
  CHECK(seen == std::vector<ChunkId>{a, a});
}
