#pragma once
// Single-table select/project views and their incremental maintenance.

#include <string>
#include <vector>

#include "ldb/row_delta.hpp"

namespace ldb {

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

struct Predicate {
  std::string column;
  CmpOp op = CmpOp::Eq;
  Value constant;
  bool operator==(const Predicate&) const = default;
};

struct ViewDef {
  std::string name;
  std::string base_table;
  std::vector<std::string> columns;  // projected, must include the primary key
  std::vector<Predicate> where;      // conjunction; empty means every row

  /// Throws ViewError when the definition does not fit `base`.
  void validate(const TableSchema& base) const;

  /// Schema of the view relation: one table named after the view, primary key
  /// first, a single attribute group.
  TableSchema view_schema(const TableSchema& base) const;

  bool matches(const Tuple& row, const TableSchema& base) const;
  Tuple project(const Tuple& row, const TableSchema& base) const;

  /// "name|base|pk,a,b|a > 10 and b != 'x'".
  std::string to_text() const;
  static ViewDef parse(std::string_view text);
  /// Parses a "where" clause: comparisons joined by "and".
  static std::vector<Predicate> parse_where(std::string_view text, const TableSchema* base);
  bool operator==(const ViewDef&) const = default;
};

/// Maps a base-table delta (full old/new images) to the view delta: rows
/// entering the predicate are added, rows leaving are removed, rows staying in
/// are modified when their projection changes, everything else drops out.
TableDelta view_delta(const ViewDef& def, const TableSchema& base, const TableDelta& base_delta);

}  // namespace ldb
