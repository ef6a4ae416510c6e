#pragma once
// Schema-change catalog, sync capability classification and the row-level
// forward (old -> new schema) and reverse (new -> old) transforms.

#include <string>
#include <vector>

#include "ldb/relation.hpp"

namespace ldb {

enum class SyncCapability { Bidirectional, ForwardOnly, ReverseOnly, None };

const char* capability_name(SyncCapability c);

struct SchemaChangeOp {
  enum class Kind { AddColumn, DropColumn, RenameColumn, RegroupAttributes };

  Kind kind = Kind::AddColumn;
  std::string table;
  Column column;                       // AddColumn
  std::string name;                    // DropColumn, RenameColumn (old name)
  std::string new_name;                // RenameColumn
  std::vector<AttributeGroup> groups;  // RegroupAttributes; the PK may be omitted

  static SchemaChangeOp add_column(std::string table, Column c);
  static SchemaChangeOp drop_column(std::string table, std::string name);
  static SchemaChangeOp rename_column(std::string table, std::string from, std::string to);
  static SchemaChangeOp regroup(std::string table, std::vector<AttributeGroup> groups);

  /// "add-column t c:int64:default=0", "drop-column t c", "rename-column t a b",
  /// "regroup t groups=[a,b|c]".
  std::string to_text() const;
  static SchemaChangeOp parse(std::string_view text);
  bool operator==(const SchemaChangeOp&) const = default;
};

/// Capability of an op against the table it modifies. Throws SchemaError if
/// the op does not apply to `old_table`.
SyncCapability classify(const SchemaChangeOp& op, const TableSchema& old_table);

/// The table schema after the op. AddColumn appends to the table and to its
/// last attribute group; DropColumn removes the column and any group left
/// holding only the primary key.
TableSchema apply_op(const SchemaChangeOp& op, const TableSchema& old_table);
DatabaseSchema apply_op(const SchemaChangeOp& op, const DatabaseSchema& old_schema);

bool forward_allowed(SyncCapability c);
bool reverse_allowed(SyncCapability c);

/// Full-tuple transforms. Forbidden directions throw DirectionUnavailable;
/// the message names the row key.
Tuple forward_row(const SchemaChangeOp& op, const TableSchema& old_table, const Tuple& row);
Tuple reverse_row(const SchemaChangeOp& op, const TableSchema& old_table, const Tuple& row);

}  // namespace ldb
