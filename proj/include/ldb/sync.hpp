#pragma once
// Sync edge vocabulary: frequencies, blocking conditions, change summaries,
// alerts and the delta transforms carried by edges and recipes.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ldb/chunk_store.hpp"
#include "ldb/row_delta.hpp"
#include "ldb/schema_evolution.hpp"
#include "ldb/views.hpp"

namespace ldb {

using SnapshotId = ChunkId;

enum class SyncDirection { Unidirectional, Bidirectional };

struct Frequency {
  enum class Kind { Immediate, Deferred, OnDemand, Periodic };
  Kind kind = Kind::Immediate;
  std::uint64_t period = 0;  // ticks, Periodic only

  static Frequency immediate() { return {}; }
  static Frequency deferred() { return {Kind::Deferred, 0}; }
  static Frequency on_demand() { return {Kind::OnDemand, 0}; }
  static Frequency periodic(std::uint64_t n) { return {Kind::Periodic, n}; }

  /// "immediate", "deferred", "ondemand", "periodic:N".
  std::string to_text() const;
  static Frequency parse(std::string_view text);
  bool operator==(const Frequency&) const = default;
};

struct TableCounts {
  std::uint64_t inserted = 0;
  std::uint64_t updated = 0;
  std::uint64_t deleted = 0;
  std::uint64_t rows_before = 0;

  std::uint64_t touched() const { return inserted + updated + deleted; }
  bool operator==(const TableCounts&) const = default;
};

struct ChangeSummary {
  std::map<std::string, TableCounts> tables;  // only tables with changes
  bool is_schema_change = false;

  std::set<std::string> tables_touched() const;
  std::uint64_t rows_changed() const;
  /// touched rows / max(1, rows before the commit); may exceed 1.
  double fraction_changed(const std::string& table) const;

  std::string to_text() const;
  static ChangeSummary parse(std::string_view text);
  bool operator==(const ChangeSummary&) const = default;
};

struct Condition {
  enum class Kind { TablesTouched, FractionChanged, RowsChanged, SchemaChangeInvolved };
  Kind kind = Kind::TablesTouched;
  std::set<std::string> tables;
  double threshold = 0.0;
  std::uint64_t max_rows = 0;

  static Condition tables_touched(std::set<std::string> t);
  static Condition fraction_changed(double threshold);
  static Condition rows_changed(std::uint64_t max_rows);
  static Condition schema_change();

  /// "tables=a,b", "fraction=0.5", "rows=N", "schemachange".
  std::string to_text() const;
  static Condition parse(std::string_view text);
  bool operator==(const Condition&) const = default;
};

/// Reason text when any condition blocks, nullopt when the change may pass.
std::optional<std::string> evaluate_conditions(const std::vector<Condition>& conditions, const ChangeSummary& summary);

/// Row mapping attached to a sync edge direction or a lazy recipe.
struct Transform {
  enum class Kind { Identity, SchemaForward, SchemaReverse, View };
  Kind kind = Kind::Identity;
  SchemaChangeOp op;      // schema kinds
  TableSchema old_table;  // schema kinds: the table before the op
  ViewDef view;           // View

  static Transform identity() { return {}; }
  static Transform schema_forward(SchemaChangeOp op, TableSchema old_table);
  static Transform schema_reverse(SchemaChangeOp op, TableSchema old_table);
  static Transform of_view(ViewDef def);

  /// The transform for the opposite direction; nullopt when none exists.
  std::optional<Transform> inverse() const;
  /// Whether this direction may run at all (schema capability).
  bool permitted() const;

  /// Maps one row of `table` (in `table_schema`); nullopt drops the row.
  std::optional<std::pair<std::string, Tuple>> map_row(const std::string& table, const TableSchema& table_schema,
                                                       const Tuple& row) const;
  DbDelta apply(const DbDelta& delta, const DatabaseSchema& source_schema) const;

  std::string to_text() const;
  static Transform parse(std::string_view text);
  bool operator==(const Transform&) const = default;
};

struct Alert {
  std::uint64_t tick = 0;
  std::string edge_id;
  std::string reason;
  ChangeSummary summary;
  bool operator==(const Alert&) const = default;
};

/// One queued change: the commit `snapshot` on top of `parent`.
struct QueuedChange {
  SnapshotId parent;
  SnapshotId snapshot;
  bool operator==(const QueuedChange&) const = default;
};

struct SyncEdge {
  std::string id;
  std::uint64_t source = 0;  // branch ids
  std::uint64_t target = 0;
  SyncDirection direction = SyncDirection::Unidirectional;
  Transform forward;                 // source -> target
  std::optional<Transform> reverse;  // target -> source, bidirectional only
  std::vector<Condition> conditions;
  Frequency frequency;
  bool active = true;
  std::string reason;  // why it was disassociated
  std::deque<QueuedChange> pending_forward;
  std::deque<QueuedChange> pending_reverse;
  std::uint64_t last_fired_tick = 0;

  bool touches(std::uint64_t branch) const { return source == branch || target == branch; }
};

}  // namespace ldb
