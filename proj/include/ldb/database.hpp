#pragma once
// A versioned relational database: snapshot graph, branches, sync edges,
// schema evolution and views over one chunk store.
//
// Everything except chunk payloads lives in <root>/manifest.log, one
// tab-separated record per event:
//   CONFIG  policy <policy>
//   SCHEMA  <digest> <schema text>
//   SNAPSHOT <id> <schema digest> <created_at> <parent count> <table count>
//            (<table> <group count> (<root> <height> <policy> <entries>)*)*
//   EDGE    <child> <parent> <kind> <ts> <branch> <actor> <description>
//           <summary|-> <source snapshot|->
//   BRANCH  CREATE <id> <name> <head> | HEAD <id> <head> | RENAME <id> <name>
//   SYNC    ATTACH <edge> <source> <target> <uni|bi> <frequency> <conditions>
//           <forward> <reverse|-> <tick>
//           | ENQUEUE <edge> <fwd|rev> <parent> <snapshot>
//           | FLUSH <edge> <fwd|rev> <tick> | DISASSOC <edge> <reason>
//           | REPOINT <edge> <source> <target>
//   ALERT   <tick> <edge> <reason> <summary>
//   TICK    <now>
// Opening a database replays the log; the in-memory state is only ever
// changed by applying records, so a replay reproduces it exactly.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ldb/chunk_store.hpp"
#include "ldb/prolly.hpp"
#include "ldb/relation.hpp"
#include "ldb/row_delta.hpp"
#include "ldb/sync.hpp"

namespace ldb {

enum class EdgeKind { Dml, SchemaChange, ViewDefinition, Clone, Merge, AutoPropagation };

const char* edge_kind_name(EdgeKind k);

struct Provenance {
  std::string branch;
  std::string actor;
  std::uint64_t logical_ts = 0;
  bool operator==(const Provenance&) const = default;
};

struct EdgeAnnotation {
  EdgeKind kind = EdgeKind::Dml;
  std::string description;
  Provenance provenance;
  std::optional<ChangeSummary> summary;  // Dml, Merge, AutoPropagation
  std::optional<SnapshotId> source;      // AutoPropagation: the source snapshot
  bool operator==(const EdgeAnnotation&) const = default;
};

struct ParentEdge {
  SnapshotId parent;
  EdgeAnnotation annotation;
  bool operator==(const ParentEdge&) const = default;
};

struct TableState {
  std::string name;
  std::vector<TreeRef> groups;  // aligned with the table's attribute groups
  bool operator==(const TableState&) const = default;
};

struct Snapshot {
  SnapshotId id;
  ChunkId schema;
  std::vector<TableState> tables;  // schema table order
  std::vector<ParentEdge> parents;
  std::uint64_t created_at = 0;

  const TableState* table(std::string_view name) const;
  bool operator==(const Snapshot&) const = default;
};

enum class SyncRole { Free, UniTarget, BiPeer };

const char* sync_role_name(SyncRole r);

struct BranchInfo {
  std::uint64_t id = 0;
  std::string name;
  SnapshotId head;
  SyncRole role = SyncRole::Free;
  std::vector<std::string> edges;  // active edges touching the branch
};

struct RowOp {
  enum class Kind { Insert, Update, Delete };
  Kind kind = Kind::Insert;
  std::string table;
  Value key;
  std::vector<std::pair<std::string, Value>> values;  // column = value; updates may be partial

  static RowOp insert(std::string table, Value key, std::vector<std::pair<std::string, Value>> values);
  static RowOp update(std::string table, Value key, std::vector<std::pair<std::string, Value>> values);
  static RowOp erase(std::string table, Value key);
};

struct CommitOptions {
  std::optional<SnapshotId> expected_head;  // rule 1: must equal the branch head
  std::string actor = "user";
  std::string description;
};

struct LogEntry {
  SnapshotId id;
  std::uint64_t created_at = 0;
  std::optional<EdgeAnnotation> edge;  // edge to the first parent; absent for the root
  bool operator==(const LogEntry&) const = default;
};

enum class SyncRequest { None, Forward, Reverse, Bidirectional };

struct SchemaChangeOptions {
  bool carry_name = false;
  SyncRequest sync = SyncRequest::None;
  bool lazy = false;
  std::string new_branch;  // default "<branch>@schema-<n>"
  Frequency frequency;
  std::vector<Condition> conditions;
};

struct SchemaChangeResult {
  std::string branch;      // name of the new chain
  std::string old_branch;  // name of the old chain afterwards
  SnapshotId snapshot;
  std::optional<std::string> edge;
};

struct ViewOptions {
  Frequency frequency;
  std::vector<Condition> conditions;
};

class Database {
 public:
  static std::unique_ptr<Database> init(const std::filesystem::path& root, const DatabaseSchema& schema,
                                        const ChunkingPolicy& policy = ChunkingPolicy::content(64, 4));
  static std::unique_ptr<Database> open(const std::filesystem::path& root);
  ~Database();
  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;

  // ---- snapshot graph ----
  SnapshotId commit(const std::string& branch, std::span<const RowOp> ops, const CommitOptions& options = {});
  BranchInfo create_branch(const std::string& name, const std::string& from);
  SnapshotId merge(const std::string& src, const std::string& dst_branch, const std::string& actor = "user");
  DbDelta diff(const std::string& a, const std::string& b);
  std::vector<LogEntry> log(const std::string& branch) const;
  LogEntry blame(const std::string& branch, const std::string& table, const Value& key);
  std::optional<Tuple> get(const std::string& target, const std::string& table, const Value& key);
  std::vector<Tuple> scan(const std::string& target, const std::string& table, const std::optional<Value>& lo = {},
                          const std::optional<Value>& hi = {});

  /// Branch name, full snapshot hex or unique hex prefix (>= 8 digits).
  SnapshotId resolve(const std::string& target) const;
  Snapshot snapshot(const SnapshotId& id) const;
  std::vector<Snapshot> snapshots() const;  // creation order
  DatabaseSchema schema_of(const std::string& target) const;
  DatabaseSchema schema(const ChunkId& digest) const;
  BranchInfo branch(const std::string& name) const;
  std::vector<BranchInfo> branches() const;

  // ---- sync ----
  std::string attach_sync(const std::string& source, const std::string& target, SyncDirection direction,
                          const Transform& forward = Transform::identity(), std::vector<Condition> conditions = {},
                          Frequency frequency = Frequency::immediate());
  void sync_now(const std::string& edge_id);
  void tick(std::uint64_t now);
  std::uint64_t now() const;
  void flush_before_read(const std::string& branch);
  void disassociate(const std::string& edge_id, const std::string& reason);
  SyncEdge edge(const std::string& id) const;
  std::vector<SyncEdge> edges() const;
  std::vector<Alert> alerts() const;

  // ---- schema evolution and views ----
  SchemaChangeResult apply_schema_change(const std::string& branch, const SchemaChangeOp& op,
                                         const SchemaChangeOptions& options = {});
  BranchInfo create_view(const std::string& base_branch, const ViewDef& def, const ViewOptions& options = {});

  // ---- storage ----
  ChunkStore& store() { return store_; }
  StoreStats stats() const { return store_.stats(); }
  const ChunkingPolicy& policy() const { return policy_; }
  const std::filesystem::path& root() const { return root_; }

  /// Canonical dump of the whole graph state (for persistence checks).
  std::string state_text() const;

  /// Per-group trees of a table at a snapshot, with lazy roots materialized.
  std::vector<TreeRef> table_trees(const SnapshotId& id, const std::string& table);

 private:
  struct Branch {
    std::uint64_t id = 0;
    std::string name;
    SnapshotId head;
  };
  struct PendingSnapshot {
    Snapshot snap;
    std::size_t parents_expected = 0;
  };
  class Executor;
  friend class Executor;

  explicit Database(const std::filesystem::path& root);
  void install_executor();

  // manifest; every state change goes through emit -> apply_record
  void emit(std::vector<std::string> fields);
  void apply_record(const std::vector<std::string>& f);
  void apply_sync_record(const std::vector<std::string>& f);
  void replay();

  // graph internals; callers hold the writer lock unless a method is const
  Branch& branch_ref(const std::string& name);
  const Branch& branch_ref(const std::string& name) const;
  Branch& branch_by_id(std::uint64_t id);
  const Branch& branch_by_id(std::uint64_t id) const;
  const Snapshot& snap(const SnapshotId& id) const;
  const DatabaseSchema& schema_ref(const ChunkId& digest) const;
  SnapshotId resolve_locked(const std::string& target) const;
  SyncRole role_of(std::uint64_t branch) const;
  BranchInfo info(const Branch& b) const;
  void check_branch_name(const std::string& name) const;
  void check_committable(const Branch& b) const;
  std::uint64_t create_branch_record(const std::string& name, const SnapshotId& head);
  ChunkId ensure_schema(const DatabaseSchema& schema);
  SnapshotId new_snapshot(const ChunkId& schema, std::vector<TableState> tables, std::vector<ParentEdge> parents);
  std::optional<SnapshotId> lca(const SnapshotId& a, const SnapshotId& b) const;

  TreeRef live(const TreeRef& t) const;
  std::vector<std::optional<Tuple>> read_rows(const Snapshot& s, const TableSchema& t,
                                              std::span<const Bytes> keys) const;
  std::optional<Tuple> read_row(const Snapshot& s, const TableSchema& t, const Bytes& key) const;
  std::vector<Tuple> scan_rows(const Snapshot& s, const TableSchema& t, const std::optional<Bytes>& lo,
                               const std::optional<Bytes>& hi) const;
  DbDelta diff_locked(const SnapshotId& a, const SnapshotId& b) const;
  TableState apply_table(const TableState& ts, const TableSchema& t, const TableDelta& changes);
  std::vector<TreeRef> build_table(const TableSchema& t, const std::vector<Tuple>& rows);
  /// Upsert semantics: the changes that bring `head` to the wanted after images.
  DbDelta reconcile(const Snapshot& head, const DbDelta& wanted) const;
  ChangeSummary summarize(const Snapshot& head, const DbDelta& net) const;
  SnapshotId write_commit(Branch& b, const DbDelta& net, EdgeAnnotation annotation,
                          const std::vector<SnapshotId>& extra_parents, const std::optional<std::string>& via_edge);

  // sync internals
  SyncEdge& edge_ref(const std::string& id);
  std::string attach_locked(std::uint64_t source, std::uint64_t target, SyncDirection direction,
                            const Transform& forward, std::vector<Condition> conditions, Frequency frequency);
  void on_commit(std::uint64_t branch, const SnapshotId& parent, const SnapshotId& child, const DbDelta& delta,
                 const ChangeSummary& summary, const std::optional<std::string>& via_edge);
  void notify_schema_change(std::uint64_t branch, const std::optional<std::string>& skip_edge);
  void propagate(SyncEdge& e, bool forward, const DbDelta& delta, const SnapshotId& source_snapshot,
                 const ChangeSummary& summary);
  void flush(SyncEdge& e, bool forward, bool record_empty);
  bool needs_flush(std::uint64_t branch, std::set<std::uint64_t>& seen) const;
  void flush_deferred_into(std::uint64_t branch, std::set<std::uint64_t>& seen);
  /// Flushes deferred edges into `target` when it names a branch (takes the lock).
  void flush_for(const std::string& target);
  void disassociate_locked(SyncEdge& e, const std::string& reason, const ChangeSummary& summary);

  TreeRef lazy_tree(const Transform& transform, const TableSchema& source, const TableState& source_state,
                    const TableSchema& target, std::size_t group);

  std::filesystem::path root_;
  mutable ChunkStore store_;
  std::unique_ptr<Executor> executor_;
  mutable std::shared_mutex mu_;
  ChunkingPolicy policy_;

  std::unordered_map<SnapshotId, Snapshot, ChunkIdHash> snapshots_;
  std::vector<SnapshotId> order_;
  std::unordered_map<ChunkId, DatabaseSchema, ChunkIdHash> schemas_;
  std::map<std::uint64_t, Branch> branches_;
  std::map<std::string, std::uint64_t> names_;
  std::vector<SyncEdge> edges_;
  std::vector<Alert> alerts_;
  std::uint64_t clock_ = 0;
  std::uint64_t now_ = 0;
  std::uint64_t next_branch_ = 1;
  std::uint64_t schema_changes_ = 0;
  std::optional<PendingSnapshot> pending_;

  std::ofstream manifest_;
  bool replaying_ = false;

  mutable std::mutex live_mu_;
  mutable std::unordered_map<ChunkId, TreeRef, ChunkIdHash> live_cache_;
};

}  // namespace ldb
