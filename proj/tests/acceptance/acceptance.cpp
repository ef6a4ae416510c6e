// Acceptance checks: one PASS/FAIL line per criterion, with runtime.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "ldb/bench.hpp"
#include "ldb/database.hpp"
#include "ldb/prolly.hpp"

using namespace ldb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Scratch {
 public:
  Scratch() {
    std::string tmpl = (fs::temp_directory_path() / "ldb-acceptance-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    root_ = tmpl;
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(root_, ec);
  }
  fs::path dir(const std::string& name) const { return root_ / name; }

 private:
  fs::path root_;
};

std::string ratio(double a, double b) {
  std::ostringstream o;
  o.precision(3);
  o << a / b;
  return o.str();
}

std::string pct(double v) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << v << "%";
  return o.str();
}

// ---------------------------------------------------------------- storage ----

bench::ExperimentReport e1(const Scratch& s, bench::WorkloadKind kind, const std::string& name) {
  bench::ExperimentOptions o;
  o.workloads = {kind};
  return bench::run_experiment("E1", s.dir(name), o);
}

Outcome c1(const Scratch& s) {
  const auto r = e1(s, bench::WorkloadKind::LocalizedUpdate, "c1");
  const auto& c = r.line("localized-update", "content");
  const auto& p = r.line("localized-update", "capacity");
  const bool ok = static_cast<double>(c.unique_chunks) <= 0.8 * static_cast<double>(p.unique_chunks);
  return {ok, "content " + std::to_string(c.unique_chunks) + " vs capacity " + std::to_string(p.unique_chunks) +
                  " unique chunks (ratio " + ratio(c.unique_chunks, p.unique_chunks) + ", need <= 0.8); mean entries " +
                  std::to_string(c.mean_chunk_entries) + " vs " + std::to_string(p.mean_chunk_entries)};
}

Outcome c2(const Scratch& s) {
  const auto r = e1(s, bench::WorkloadKind::UniformUpdate, "c2");
  const auto& c = r.line("uniform-update", "content");
  const auto& p = r.line("uniform-update", "capacity");
  return {c.total_bytes >= p.total_bytes, "content " + std::to_string(c.total_bytes) + " vs capacity " +
                                              std::to_string(p.total_bytes) + " bytes (ratio " +
                                              ratio(c.total_bytes, p.total_bytes) + ", need >= 1)"};
}

Outcome c3(const Scratch& s) {
  const auto r = e1(s, bench::WorkloadKind::AppendOnly, "c3");
  const auto& c = r.line("append-only", "content");
  return {c.total_bytes <= 3 * c.head_bytes, "content total " + std::to_string(c.total_bytes) + " bytes vs final " +
                                                 std::to_string(c.head_bytes) + " (ratio " +
                                                 ratio(c.total_bytes, c.head_bytes) + ", need <= 3)"};
}

Outcome c4(const Scratch& s) {
  const auto r = bench::run_experiment("E2", s.dir("c4"));
  const auto& c = r.line("mixed", "content");
  const auto& p = r.line("mixed", "capacity");
  const bool ok = c.branches == 5 && p.branches == 5 &&
                  static_cast<double>(c.unique_chunks) <= 0.75 * static_cast<double>(p.unique_chunks) &&
                  static_cast<double>(c.total_bytes) <= 0.75 * static_cast<double>(p.total_bytes);
  return {ok, "chunks ratio " + ratio(c.unique_chunks, p.unique_chunks) + ", bytes ratio " +
                  ratio(c.total_bytes, p.total_bytes) + " (need <= 0.75 each; 5 branches)"};
}

Outcome c5(const Scratch& s) {
  const auto r = bench::run_experiment("E3", s.dir("c5"));
  auto reduction = [&](const char* policy) {
    const double row = static_cast<double>(r.line("alternating-columns", policy, "row").total_bytes);
    const double grouped = static_cast<double>(r.line("alternating-columns", policy, "grouped").total_bytes);
    return 100.0 * (row - grouped) / row;
  };
  const double content = reduction("content"), capacity = reduction("capacity");
  const bool ok = capacity >= 5.0 && content >= 15.0 && content > capacity;
  return {ok, "reduction content " + pct(content) + " (need >= 15%), capacity " + pct(capacity) +
                  " (need >= 5%), content > capacity"};
}

// ------------------------------------------------------ history independence --

Bytes key_of(std::int64_t i) { return encode_key(Value::int64(i), ColumnType::Int64); }

std::vector<Entry> entries_of(const std::map<Bytes, Bytes>& m) {
  std::vector<Entry> out;
  for (const auto& [k, v] : m) out.push_back({k, v});
  return out;
}

Outcome c6(const Scratch& s) {
  std::size_t checks = 0;
  for (const auto& policy : {ChunkingPolicy::content(16), ChunkingPolicy::capacity(20)}) {
    ChunkStore store(s.dir("c6-" + policy.to_string()));
    RawLeafCodec codec;
    ProllyTree tree(store, codec);
    std::mt19937_64 rng(6);
    std::map<Bytes, Bytes> m;
    while (m.size() < 1000) m[key_of(static_cast<std::int64_t>(rng() % 5000))] = std::to_string(rng());
    TreeRef t = tree.build(entries_of(m), policy);
    for (int b = 0; b < 200; ++b) {
      std::map<Bytes, Mutation> batch;
      const std::size_t n = 1 + rng() % 60;
      for (std::size_t i = 0; i < n; ++i) {
        const Bytes k = key_of(static_cast<std::int64_t>(rng() % 5000));
        if (batch.count(k)) continue;
        const int roll = static_cast<int>(rng() % 3);
        if (!m.count(k)) {
          batch[k] = Mutation::insert(k, std::to_string(rng()));
          m[k] = batch[k].value;
        } else if (roll == 0) {
          batch[k] = Mutation::erase(k);
          m.erase(k);
        } else {
          batch[k] = Mutation::update(k, std::to_string(rng()));
          m[k] = batch[k].value;
        }
      }
      std::vector<Mutation> ops;
      for (auto& [k, mu] : batch) ops.push_back(mu);
      t = tree.apply(t, ops);
      if (t.root != tree.compute_root(entries_of(m), policy)) {
        return {false, policy.to_string() + ": batch " + std::to_string(b) + " root differs from rebuild"};
      }
      ++checks;
    }
    // One logical edit set applied under two random partitions into batches.
    std::vector<Mutation> edits;
    std::map<Bytes, Bytes> goal = m;
    std::set<Bytes> touched;
    while (edits.size() < 400) {
      const Bytes k = key_of(static_cast<std::int64_t>(rng() % 5000));
      if (!touched.insert(k).second) continue;
      if (!goal.count(k)) {
        edits.push_back(Mutation::insert(k, "n" + std::to_string(rng())));
        goal[k] = edits.back().value;
      } else if (rng() % 2) {
        edits.push_back(Mutation::erase(k));
        goal.erase(k);
      } else {
        edits.push_back(Mutation::update(k, "u" + std::to_string(rng())));
        goal[k] = edits.back().value;
      }
    }
    std::vector<ChunkId> finals;
    for (int perm = 0; perm < 2; ++perm) {
      std::vector<Mutation> order = edits;
      std::shuffle(order.begin(), order.end(), rng);
      TreeRef cur = t;
      for (std::size_t i = 0; i < order.size();) {
        const std::size_t len = std::min<std::size_t>(order.size() - i, 1 + rng() % 40);
        std::vector<Mutation> part(order.begin() + static_cast<std::ptrdiff_t>(i),
                                   order.begin() + static_cast<std::ptrdiff_t>(i + len));
        std::sort(part.begin(), part.end(), [](const Mutation& x, const Mutation& y) { return x.key < y.key; });
        cur = tree.apply(cur, part);
        i += len;
      }
      finals.push_back(cur.root);
    }
    if (finals[0] != finals[1] || finals[0] != tree.compute_root(entries_of(goal), policy)) {
      return {false, policy.to_string() + ": batch partitions disagree"};
    }
  }
  return {true, std::to_string(checks) + " batch roots equal rebuilds; repartitioned edit sets agree (both policies)"};
}

// ---------------------------------------------------------- zero-cost clone --

DatabaseSchema wide_schema() {
  return DatabaseSchema::parse(
      "table t (id:int64, a:int64, b:utf8:nullable, c:float64:default=0) pk=id groups=[a|b,c]\n"
      "table u (k:utf8, v:int64:nullable) pk=k\n");
}

RowOp t_insert(std::int64_t id, std::int64_t a, const std::string& b) {
  return RowOp::insert("t", Value::int64(id), {{"a", Value::int64(a)}, {"b", Value::utf8(b)}});
}

std::unique_ptr<Database> seeded(const fs::path& root, std::size_t rows, std::uint64_t seed) {
  auto db = Database::init(root, wide_schema(), ChunkingPolicy::content(16));
  std::mt19937_64 rng(seed);
  std::vector<RowOp> ops;
  for (std::size_t i = 0; i < rows; ++i) {
    ops.push_back(t_insert(static_cast<std::int64_t>(i), static_cast<std::int64_t>(rng() % 1000),
                           "s" + std::to_string(rng() % 97)));
  }
  db->commit("main", ops);
  return db;
}

Outcome c7(const Scratch& s) {
  auto db = seeded(s.dir("c7"), 3000, 7);
  const StoreStats before = db->stats();
  for (int i = 0; i < 5; ++i) db->create_branch("clone" + std::to_string(i), i ? "clone" + std::to_string(i - 1) : "main");
  if (!(db->stats() == before)) return {false, "create_branch wrote chunks"};
  const char* ops[] = {"add-column t d:int64:default=7", "add-column t e:utf8:nullable", "drop-column t b",
                       "drop-column t a", "rename-column t a aa", "regroup t groups=[a,b,c]", "regroup t groups=[c|a|b]"};
  int i = 0;
  for (const char* text : ops) {
    const SchemaChangeOp op = SchemaChangeOp::parse(text);
    auto lazy_db = seeded(s.dir("c7-lazy" + std::to_string(i)), 3000, 7);
    auto eager_db = seeded(s.dir("c7-eager" + std::to_string(i)), 3000, 7);
    ++i;
    const StoreStats pre = lazy_db->stats();
    SchemaChangeOptions o;
    o.lazy = true;
    const auto lr = lazy_db->apply_schema_change("main", op, o);
    const StoreStats post = lazy_db->stats();
    if (post.unique_chunks != pre.unique_chunks || post.total_bytes != pre.total_bytes) {
      return {false, std::string(text) + ": lazy change wrote data chunks"};
    }
    const auto er = eager_db->apply_schema_change("main", op);
    const auto lt = lazy_db->table_trees(lr.snapshot, "t");
    const auto et = eager_db->table_trees(er.snapshot, "t");
    if (lt.size() != et.size()) return {false, std::string(text) + ": group count differs"};
    for (std::size_t g = 0; g < lt.size(); ++g) {
      if (lt[g].root != et[g].root) return {false, std::string(text) + ": lazy root differs from eager"};
    }
    if (lazy_db->scan(lr.branch, "t") != eager_db->scan(er.branch, "t")) {
      return {false, std::string(text) + ": rows differ"};
    }
  }
  return {true, "5 clones wrote 0 chunks; 7 lazy schema changes wrote 0 data chunks and materialize to eager ids"};
}

// -------------------------------------------------------- correctness rules --

struct EdgeModel {
  std::string id;
  int s, t;
  bool bi;
  bool active = true;
};

Outcome c8(const Scratch& s) {
  std::size_t rejected_head = 0, rejected_target = 0, rejected_bi = 0, accepted = 0;
  std::size_t admitted = 0, false_rejections = 0;
  std::string first_problem;
  auto note = [&](const std::string& what) {
    if (first_problem.empty()) first_problem = what;
  };
  std::int64_t next_key = 0;
  for (int seq = 0; seq < 100; ++seq) {
    auto db = Database::init(s.dir("c8-" + std::to_string(seq)), wide_schema(), ChunkingPolicy::content(16));
    std::mt19937_64 rng(static_cast<std::uint64_t>(seq) * 31 + 1);
    const int nb = 5;
    std::vector<std::string> names{"main"};
    for (int b = 1; b < nb; ++b) {
      names.push_back("b" + std::to_string(b));
      db->create_branch(names.back(), "main");
    }
    std::vector<EdgeModel> edges;
    auto uni_target = [&](int b) {
      return std::any_of(edges.begin(), edges.end(), [&](const EdgeModel& e) { return e.active && !e.bi && e.t == b; });
    };
    auto bi_peer = [&](int b) {
      return std::any_of(edges.begin(), edges.end(),
                         [&](const EdgeModel& e) { return e.active && e.bi && (e.s == b || e.t == b); });
    };
    auto connected = [&](int a, int b) {
      std::vector<int> parent(nb);
      for (int i = 0; i < nb; ++i) parent[i] = i;
      std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
      for (const auto& e : edges) {
        if (e.active) parent[find(e.s)] = find(e.t);
      }
      return find(a) == find(b);
    };
    for (int step = 0; step < 30; ++step) {
      const int kind = static_cast<int>(rng() % 10);
      if (kind < 5) {
        const int b = static_cast<int>(rng() % nb);
        const bool stale = rng() % 5 == 0;
        CommitOptions o;
        o.expected_head = db->branch(names[b]).head;
        if (stale) o.expected_head = db->log(names[b]).front().id;
        const bool really_stale = stale && *o.expected_head != db->branch(names[b]).head;
        const bool legal = !uni_target(b) && !really_stale;
        std::vector<RowOp> ops{t_insert(next_key++, 1, "x")};
        try {
          db->commit(names[b], ops, o);
          if (!legal) {
            ++admitted;
            note("commit to " + names[b] + " admitted");
          } else {
            ++accepted;
          }
        } catch (const Error& e) {
          if (legal) {
            ++false_rejections;
            note(std::string("legal commit rejected: ") + e.what());
          } else if (e.code() == ErrorCode::SyncTargetImmutable && uni_target(b)) {
            ++rejected_target;
          } else if (e.code() == ErrorCode::NotHead && really_stale) {
            ++rejected_head;
          } else {
            ++false_rejections;
            note(std::string("wrong rejection code: ") + e.what());
          }
        }
      } else if (kind < 9) {
        const int a = static_cast<int>(rng() % nb), b = static_cast<int>(rng() % nb);
        const bool bi = rng() % 2 == 0;
        const bool legal = a != b && !uni_target(b) && !(bi && uni_target(a)) && !(!bi && bi_peer(b)) &&
                           !connected(a, b);
        try {
          const std::string id =
              db->attach_sync(names[a], names[b], bi ? SyncDirection::Bidirectional : SyncDirection::Unidirectional);
          edges.push_back({id, a, b, bi});
          if (!legal) {
            ++admitted;
            note("attach " + names[a] + "->" + names[b] + " admitted");
          } else {
            ++accepted;
          }
        } catch (const Error& e) {
          if (legal) {
            ++false_rejections;
            note(std::string("legal attach rejected: ") + e.what());
          } else if (e.code() != ErrorCode::IllegalSyncTopology) {
            ++false_rejections;
            note(std::string("wrong rejection code: ") + e.what());
          } else if (bi && (uni_target(b) || uni_target(a))) {
            ++rejected_bi;
          }
        }
      } else {
        std::vector<EdgeModel*> live;
        for (auto& e : edges) {
          if (e.active) live.push_back(&e);
        }
        if (live.empty()) continue;
        EdgeModel* e = live[rng() % live.size()];
        db->disassociate(e->id, "test");
        e->active = false;
      }
    }
  }
  const bool ok = admitted == 0 && false_rejections == 0 && rejected_head > 0 && rejected_target > 0 && rejected_bi > 0;
  return {ok, "100 sequences: " + std::to_string(accepted) + " legal ops accepted; rejected " +
                  std::to_string(rejected_head) + " non-head commits, " + std::to_string(rejected_target) +
                  " target commits, " + std::to_string(rejected_bi) + " bi-onto-uni attaches; " +
                  std::to_string(admitted) + " violations admitted, " + std::to_string(false_rejections) +
                  " false rejections" + (first_problem.empty() ? "" : " (" + first_problem + ")")};
}

// ------------------------------------------------------------------- sync ---

// In-memory model of table t for random commit scripts.
struct TModel {
  std::map<std::int64_t, std::int64_t> rows;  // id -> a

  std::vector<RowOp> batch(std::mt19937_64& rng, std::size_t n, std::int64_t space) {
    std::vector<RowOp> ops;
    std::set<std::int64_t> used;
    while (ops.size() < n) {
      const std::int64_t id = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(space));
      if (!used.insert(id).second) continue;
      auto it = rows.find(id);
      if (it == rows.end()) {
        const std::int64_t a = static_cast<std::int64_t>(rng() % 100);
        ops.push_back(t_insert(id, a, "x"));
        rows[id] = a;
      } else if (rng() % 3 == 0) {
        ops.push_back(RowOp::erase("t", Value::int64(id)));
        rows.erase(it);
      } else {
        const std::int64_t a = it->second + 1 + static_cast<std::int64_t>(rng() % 100);
        ops.push_back(RowOp::update("t", Value::int64(id), {{"a", Value::int64(a)}}));
        it->second = a;
      }
    }
    return ops;
  }
};

std::map<std::int64_t, std::int64_t> t_state(Database& db, const std::string& target) {
  std::map<std::int64_t, std::int64_t> out;
  for (const auto& r : db.scan(target, "t")) out[r[0].as_int64()] = r[1].as_int64();
  return out;
}

Outcome c9(const Scratch& s) {
  // Frequency equivalence.
  for (int trial = 0; trial < 50; ++trial) {
    auto db = Database::init(s.dir("c9f-" + std::to_string(trial)), wide_schema(), ChunkingPolicy::content(8));
    const char* names[] = {"imm", "def", "ond", "per"};
    for (const char* n : names) db->create_branch(n, "main");
    db->attach_sync("main", "imm", SyncDirection::Unidirectional);
    db->attach_sync("main", "def", SyncDirection::Unidirectional, Transform::identity(), {}, Frequency::deferred());
    const std::string eo = db->attach_sync("main", "ond", SyncDirection::Unidirectional, Transform::identity(), {},
                                           Frequency::on_demand());
    const std::uint64_t period = 2 + static_cast<std::uint64_t>(trial % 5);
    db->attach_sync("main", "per", SyncDirection::Unidirectional, Transform::identity(), {},
                    Frequency::periodic(period));
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial) + 900);
    TModel m;
    for (std::uint64_t t = 1; t <= 12; ++t) {
      db->commit("main", m.batch(rng, 1 + rng() % 10, 80));
      db->tick(t);
      if (rng() % 3 == 0) db->sync_now(eo);
    }
    db->sync_now(eo);
    db->tick(db->now() + period);
    const auto reference = t_state(*db, "imm");
    if (reference != m.rows) return {false, "trial " + std::to_string(trial) + ": immediate target diverged"};
    for (const char* n : names) {
      if (t_state(*db, n) != reference) {
        return {false, "trial " + std::to_string(trial) + ": " + n + " differs from the immediate reference"};
      }
    }
  }
  // Blocking conditions.
  std::size_t blocked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto db = Database::init(s.dir("c9c-" + std::to_string(trial)), wide_schema(), ChunkingPolicy::content(8));
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial) + 5000);
    TModel m;
    db->commit("main", m.batch(rng, 20, 60));
    db->create_branch("tgt", "main");
    const int which = trial % 3;
    const std::uint64_t max_rows = 3 + rng() % 6;
    const double fraction = 0.2 + 0.1 * static_cast<double>(rng() % 4);
    Condition cond = which == 0   ? Condition::tables_touched({"u"})
                     : which == 1 ? Condition::rows_changed(max_rows)
                                  : Condition::fraction_changed(fraction);
    const Frequency freq = trial % 2 ? Frequency::deferred() : Frequency::immediate();
    const std::string e = db->attach_sync("main", "tgt", SyncDirection::Unidirectional, Transform::identity(), {cond}, freq);
    bool expect_active = true;
    for (int c = 0; c < 15 && expect_active; ++c) {
      const std::size_t before_rows = m.rows.size();
      bool touches_u = which == 0 && rng() % 5 == 0;
      std::vector<RowOp> ops = m.batch(rng, 1 + rng() % 8, 60);
      const std::size_t t_changed = ops.size();
      if (touches_u) ops.push_back(RowOp::insert("u", Value::utf8("k" + std::to_string(c)), {}));
      const std::size_t total = ops.size();
      bool block = false;
      if (which == 0) block = touches_u;
      if (which == 1) block = total > max_rows;
      if (which == 2) block = static_cast<double>(t_changed) / static_cast<double>(std::max<std::size_t>(1, before_rows)) >= fraction;
      const auto tgt_before = t_state(*db, "tgt");
      const std::size_t alerts_before = db->alerts().size();
      db->commit("main", ops);
      if (block) {
        if (db->edge(e).active) return {false, "condition " + cond.to_text() + " did not block"};
        if (db->alerts().size() != alerts_before + 1) return {false, "blocked commit raised != 1 alert"};
        if (t_state(*db, "tgt") != tgt_before) return {false, "blocked change reached the target"};
        ++blocked;
        expect_active = false;
        // Later commits never alert again and never reach the target.
        db->commit("main", m.batch(rng, 3, 60));
        if (db->alerts().size() != alerts_before + 1 || t_state(*db, "tgt") != tgt_before) {
          return {false, "disassociated edge kept acting"};
        }
      } else if (!db->edge(e).active) {
        return {false, "condition " + cond.to_text() + " blocked a passing commit"};
      }
    }
  }
  // Bidirectional identity convergence without echo.
  for (int trial = 0; trial < 20; ++trial) {
    auto db = Database::init(s.dir("c9b-" + std::to_string(trial)), wide_schema(), ChunkingPolicy::content(8));
    db->create_branch("peer", "main");
    db->attach_sync("main", "peer", SyncDirection::Bidirectional);
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial) + 777);
    TModel m;
    for (int c = 0; c < 20; ++c) {
      const std::string side = rng() % 2 ? "main" : "peer";
      const std::size_t before = db->snapshots().size();
      db->commit(side, m.batch(rng, 1 + rng() % 6, 50));
      if (db->snapshots().size() != before + 2) return {false, "bidirectional commit did not produce exactly 2 snapshots"};
      if (t_state(*db, "main") != m.rows || t_state(*db, "peer") != m.rows) {
        return {false, "bidirectional peers diverged"};
      }
    }
  }
  return {blocked >= 30, "50 frequency trials match immediate; " + std::to_string(blocked) +
                             " blocked commits each raised one alert; 20 bi trials converge with 2 snapshots per commit"};
}

// ------------------------------------------------------------------ views ---

struct Pred {
  std::string col;
  std::string op;
  Value lit;
};

bool eval(const Value& v, const Pred& p) {
  if (v.is_null()) return false;
  int c;
  if (v.is_int64()) c = v.as_int64() < p.lit.as_int64() ? -1 : v.as_int64() > p.lit.as_int64();
  else if (v.is_float64()) c = v.as_float64() < p.lit.as_float64() ? -1 : v.as_float64() > p.lit.as_float64();
  else c = v.as_utf8() < p.lit.as_utf8() ? -1 : v.as_utf8() > p.lit.as_utf8();
  if (p.op == "=") return c == 0;
  if (p.op == "!=") return c != 0;
  if (p.op == "<") return c < 0;
  if (p.op == "<=") return c <= 0;
  if (p.op == ">") return c > 0;
  return c >= 0;
}

Outcome c10(const Scratch& s) {
  const std::vector<std::string> all_cols{"id", "a", "b", "c"};
  const char* ops[] = {"=", "!=", "<", "<=", ">", ">="};
  std::size_t commits_checked = 0, history_checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial) + 4242);
    auto db = Database::init(s.dir("c10-" + std::to_string(trial)), wide_schema(), ChunkingPolicy::content(8));
    std::vector<RowOp> seed;
    std::map<std::int64_t, Tuple> base;
    auto random_row = [&](std::int64_t id) {
      Tuple r{Value::int64(id), Value::int64(static_cast<std::int64_t>(rng() % 100)),
              rng() % 6 ? Value::utf8("s" + std::to_string(rng() % 10)) : Value::null(),
              Value::float64(static_cast<double>(rng() % 40) / 4.0)};
      return r;
    };
    auto as_insert = [](const Tuple& r) {
      return RowOp::insert("t", r[0], {{"a", r[1]}, {"b", r[2]}, {"c", r[3]}});
    };
    for (std::int64_t id = 0; id < 60; ++id) {
      base[id] = random_row(id);
      seed.push_back(as_insert(base[id]));
    }
    db->commit("main", seed);

    std::vector<std::string> cols;
    for (const auto& c : all_cols) {
      if (c == "id" || rng() % 2) cols.push_back(c);
    }
    std::shuffle(cols.begin(), cols.end(), rng);
    std::vector<std::string> stored{"id"};
    for (const auto& c : cols) {
      if (c != "id") stored.push_back(c);
    }
    std::vector<Pred> preds;
    const int npred = static_cast<int>(rng() % 3);
    for (int i = 0; i < npred; ++i) {
      const std::string col = all_cols[rng() % all_cols.size()];
      Value lit = col == "b"   ? Value::utf8("s" + std::to_string(rng() % 10))
                  : col == "c" ? Value::float64(static_cast<double>(rng() % 40) / 4.0)
                               : Value::int64(static_cast<std::int64_t>(rng() % 100));
      preds.push_back({col, ops[rng() % 6], lit});
    }
    std::string where;
    for (const auto& p : preds) {
      std::string lit = p.lit.is_utf8() ? "'" + p.lit.as_utf8() + "'" : p.lit.to_text();
      if (p.lit.is_float64() && lit.find('.') == std::string::npos) lit += ".0";
      where += (where.empty() ? "" : " and ") + p.col + " " + p.op + " " + lit;
    }
    std::string col_text;
    for (const auto& c : cols) col_text += (col_text.empty() ? "" : ",") + c;
    const ViewDef def = ViewDef::parse("v|t|" + col_text + "|" + where);
    ViewOptions vo;
    const int fmode = trial % 3;
    vo.frequency = fmode == 0 ? Frequency::immediate() : fmode == 1 ? Frequency::deferred() : Frequency::on_demand();
    db->create_view("main", def, vo);

    auto expected = [&] {
      std::vector<Tuple> out;
      for (const auto& [id, r] : base) {
        bool ok = true;
        for (const auto& p : preds) {
          const auto idx = std::find(all_cols.begin(), all_cols.end(), p.col) - all_cols.begin();
          ok = ok && eval(r[static_cast<std::size_t>(idx)], p);
        }
        if (!ok) continue;
        Tuple proj;
        for (const auto& c : stored) {
          proj.push_back(r[static_cast<std::size_t>(std::find(all_cols.begin(), all_cols.end(), c) - all_cols.begin())]);
        }
        out.push_back(proj);
      }
      return out;
    };
    if (db->scan("v", "v") != expected()) {
      return {false, "trial " + std::to_string(trial) + ": initial view differs for " + def.to_text()};
    }
    std::vector<std::pair<SnapshotId, std::vector<Tuple>>> history;
    std::vector<std::vector<ChunkId>> history_roots;
    for (int c = 0; c < 6; ++c) {
      std::vector<RowOp> batch;
      std::set<std::int64_t> used;
      for (int i = 0; i < 8; ++i) {
        const std::int64_t id = static_cast<std::int64_t>(rng() % 80);
        if (!used.insert(id).second) continue;
        if (!base.count(id)) {
          base[id] = random_row(id);
          batch.push_back(as_insert(base[id]));
        } else if (rng() % 4 == 0) {
          base.erase(id);
          batch.push_back(RowOp::erase("t", Value::int64(id)));
        } else {
          Tuple r = random_row(id);
          base[id] = r;
          batch.push_back(RowOp::update("t", r[0], {{"a", r[1]}, {"b", r[2]}, {"c", r[3]}}));
        }
      }
      db->commit("main", batch);
      if (fmode == 2) db->sync_now(db->edges()[0].id);
      const auto got = db->scan("v", "v");
      if (got != expected()) {
        return {false, "trial " + std::to_string(trial) + " commit " + std::to_string(c) + ": view differs for " +
                           def.to_text()};
      }
      ++commits_checked;
      const SnapshotId head = db->branch("v").head;
      history.emplace_back(head, got);
      std::vector<ChunkId> roots;
      for (const auto& t : db->table_trees(head, "v")) roots.push_back(t.root);
      history_roots.push_back(roots);
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      std::vector<ChunkId> roots;
      for (const auto& t : db->table_trees(history[i].first, "v")) roots.push_back(t.root);
      if (roots != history_roots[i] || db->scan(history[i].first.hex(), "v") != history[i].second) {
        return {false, "historical view snapshot changed"};
      }
      ++history_checked;
    }
  }
  return {true, "100 random views matched brute-force recomputation after " + std::to_string(commits_checked) +
                    " commits; " + std::to_string(history_checked) + " historical snapshots stable"};
}

// ----------------------------------------------------------------- schema ---

Outcome c11(const Scratch& s) {
  const TableSchema old_t = wide_schema().table("t");
  const char* catalog[] = {"add-column t d:int64:default=7", "add-column t e:utf8:nullable",
                           "add-column t f:float64:nullable:default=1.5", "drop-column t b", "drop-column t c",
                           "rename-column t a alpha", "rename-column t b beta", "regroup t groups=[a,b,c]",
                           "regroup t groups=[b|a,c]", "regroup t groups=[c|b|a]"};
  std::mt19937_64 rng(11);
  std::size_t ops_checked = 0;
  for (const char* text : catalog) {
    const SchemaChangeOp op = SchemaChangeOp::parse(text);
    if (classify(op, old_t) != SyncCapability::Bidirectional) {
      return {false, std::string(text) + " is not classified Bidirectional"};
    }
    const TableSchema new_t = apply_op(op, old_t);
    for (int i = 0; i < 1000; ++i) {
      const bool null_b = rng() % 3 == 0;
      const Tuple row{Value::int64(static_cast<std::int64_t>(rng())), Value::int64(static_cast<std::int64_t>(rng())),
                      null_b ? Value::null() : Value::utf8("v" + std::to_string(rng())),
                      Value::float64(static_cast<double>(rng() % 1000) / 8.0)};
      if (op.kind == SchemaChangeOp::Kind::DropColumn) {
        // Dropping loses the value; the lossless composition runs the other way.
        const Tuple narrow = forward_row(op, old_t, row);
        new_t.check_tuple(narrow);
        if (forward_row(op, old_t, reverse_row(op, old_t, narrow)) != narrow) {
          return {false, std::string(text) + ": forward after reverse changed a row"};
        }
      } else if (reverse_row(op, old_t, forward_row(op, old_t, row)) != row) {
        return {false, std::string(text) + ": reverse after forward changed a row"};
      }
    }
    ++ops_checked;
  }

  // Bidirectional visibility.
  auto db = seeded(s.dir("c11-bi"), 200, 3);
  SchemaChangeOptions bi;
  bi.sync = SyncRequest::Bidirectional;
  bi.lazy = true;
  const auto r = db->apply_schema_change("main", SchemaChangeOp::parse("add-column t d:int64:default=7"), bi);
  db->commit("main", std::vector<RowOp>{t_insert(1000, 5, "new")});
  const auto on_new = db->get(r.branch, "t", Value::int64(1000));
  if (!on_new || on_new->size() != 5 || (*on_new)[4] != Value::int64(7)) {
    return {false, "old-chain commit not visible on the new chain with the default"};
  }
  db->commit(r.branch, std::vector<RowOp>{RowOp::insert("t", Value::int64(2000),
                                                         {{"a", Value::int64(1)}, {"d", Value::int64(9)}})});
  const auto on_old = db->get("main", "t", Value::int64(2000));
  if (!on_old || on_old->size() != 4) return {false, "new-chain commit not visible on the old chain"};
  if (db->scan("main", "t").size() != db->scan(r.branch, "t").size()) return {false, "chains differ in row count"};

  // ReverseOnly visibility.
  auto db2 = Database::init(s.dir("c11-rev"), wide_schema());
  const SchemaChangeOp rev_op = SchemaChangeOp::parse("add-column t d:int64");
  if (classify(rev_op, old_t) != SyncCapability::ReverseOnly) return {false, "non-fillable add not ReverseOnly"};
  SchemaChangeOptions want_bi;
  want_bi.sync = SyncRequest::Bidirectional;
  try {
    db2->apply_schema_change("main", rev_op, want_bi);
    return {false, "bidirectional sync accepted for a ReverseOnly change"};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotBidirectionallyCompatible) return {false, e.what()};
  }
  SchemaChangeOptions rev;
  rev.sync = SyncRequest::Reverse;
  const auto rr = db2->apply_schema_change("main", rev_op, rev);
  db2->commit(rr.branch, std::vector<RowOp>{RowOp::insert("t", Value::int64(1), {{"a", Value::int64(3)},
                                                                                  {"d", Value::int64(4)}})});
  const auto back = db2->get("main", "t", Value::int64(1));
  if (!back || back->size() != 4 || (*back)[1] != Value::int64(3)) {
    return {false, "ReverseOnly new-chain commit not visible on the old chain"};
  }
  try {
    db2->commit("main", std::vector<RowOp>{t_insert(2, 2, "x")});
    return {false, "old chain accepted a direct commit under a ReverseOnly sync"};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SyncTargetImmutable) return {false, e.what()};
  }
  return {true, std::to_string(ops_checked) + " Bidirectional ops round-trip 1000 rows each; Bi and ReverseOnly "
                                              "cross-branch visibility hold"};
}

// ------------------------------------------------------------ persistence ---

struct Answers {
  std::string state;
  StoreStats stats;
  std::vector<std::vector<LogEntry>> logs;
  std::vector<LogEntry> blames;
  std::vector<DbDelta> diffs;
  std::vector<Alert> alerts;
  bool operator==(const Answers&) const = default;
};

Answers answers(Database& db, const std::string& table, const std::vector<Value>& keys) {
  Answers a;
  a.state = db.state_text();
  a.stats = db.stats();
  std::vector<std::string> names;
  for (const auto& b : db.branches()) names.push_back(b.name);
  for (const auto& n : names) a.logs.push_back(db.log(n));
  for (const auto& k : keys) {
    try {
      a.blames.push_back(db.blame(names.front(), table, k));
    } catch (const Error&) {
      a.blames.push_back(LogEntry{});
    }
  }
  const auto snaps = db.snapshots();
  a.diffs.push_back(db.diff(snaps.front().id.hex(), names.front()));
  if (names.size() > 1) a.diffs.push_back(db.diff(names[0], names[1]));
  a.alerts = db.alerts();
  return a;
}

Outcome c12(const Scratch& s) {
  std::vector<std::string> checked;
  // Stores left by the experiments above.
  for (const auto& dir : {s.dir("c3") / "append-only-content-row", s.dir("c4") / "mixed-content-row",
                          s.dir("c5") / "alternating-columns-capacity-grouped"}) {
    if (!fs::exists(dir)) return {false, "missing experiment store " + dir.string()};
    std::vector<Value> keys;
    for (std::int64_t k = 0; k < 50; ++k) keys.push_back(Value::int64(k * 97 * bench::kKeyStride));
    Answers before;
    {
      auto db = Database::open(dir);
      before = answers(*db, "r", keys);
    }
    auto db = Database::open(dir);
    if (!(answers(*db, "r", keys) == before)) return {false, "reopen changed answers for " + dir.string()};
    if (!(db->store().recount() == before.stats)) return {false, "recount differs for " + dir.string()};
    checked.push_back(dir.filename().string());
  }
  // A graph with every record kind.
  const fs::path dir = s.dir("c12-graph");
  std::vector<Value> keys;
  for (std::int64_t k = 0; k < 40; ++k) keys.push_back(Value::int64(k));
  Answers before;
  {
    auto db = seeded(dir, 300, 12);
    db->create_branch("dev", "main");
    db->create_branch("mirror", "main");
    db->create_branch("peer", "main");
    db->attach_sync("main", "mirror", SyncDirection::Unidirectional, Transform::identity(), {Condition::rows_changed(50)},
                    Frequency::deferred());
    db->attach_sync("dev", "peer", SyncDirection::Bidirectional, Transform::identity(), {}, Frequency::periodic(3));
    std::mt19937_64 rng(12);
    TModel m;
    m.rows = t_state(*db, "dev");
    for (int c = 0; c < 10; ++c) {
      db->commit("dev", m.batch(rng, 5, 400));
      db->tick(static_cast<std::uint64_t>(c + 1));
    }
    db->commit("main", std::vector<RowOp>{t_insert(5000, 1, "m")});
    db->merge("dev", "main");
    std::vector<RowOp> big;
    for (int i = 0; i < 60; ++i) big.push_back(t_insert(6000 + i, i, "big"));
    db->commit("main", big);
    db->create_view("main", ViewDef::parse("small|t|id,a|a < 10"));
    SchemaChangeOptions o;
    o.lazy = true;
    o.carry_name = true;
    o.sync = SyncRequest::Forward;
    db->apply_schema_change("main", SchemaChangeOp::parse("add-column t z:int64:default=0"), o);
    db->commit("main@pre-1", std::vector<RowOp>{t_insert(7000, 3, "after")});
    before = answers(*db, "t", keys);
  }
  auto db = Database::open(dir);
  if (!(answers(*db, "t", keys) == before)) return {false, "reopen changed answers for the mixed graph"};
  checked.push_back("mixed graph");
  std::string list;
  for (const auto& c : checked) list += (list.empty() ? "" : ", ") + c;
  return {true, "identical state, stats, log, blame, diff and alerts after reopen: " + list};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit;
    std::function<Outcome(const Scratch&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "E1 localized-update sharing", 60, c1},
      {2, "E1 uniform-update storage direction", 60, c2},
      {3, "E1 append-only sharing", 60, c3},
      {4, "E2 multi-branch sharing", 120, c4},
      {5, "E3 attribute grouping", 60, c5},
      {6, "history independence", 30, c6},
      {7, "zero-cost branch and lazy schema change", 10, c7},
      {8, "correctness rules", 30, c8},
      {9, "sync semantics", 60, c9},
      {10, "view equivalence", 60, c10},
      {11, "schema evolution round trip", 30, c11},
      {12, "persistence replay", 30, c12},
  };
  Scratch scratch;
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(scratch);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= c.limit) {
      o.pass = false;
      o.detail += "; runtime over the " + std::to_string(static_cast<int>(c.limit)) + " s limit";
    }
    failed += !o.pass;
    std::printf("%s  criterion %2d  %-40s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
