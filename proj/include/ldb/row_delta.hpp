#pragma once
// Whole-row change sets exchanged between commits, diffs, merges and sync
// edges. Rows are keyed by their encoded primary key, so iteration order is
// key order.

#include <map>
#include <optional>
#include <string>

#include "ldb/relation.hpp"

namespace ldb {

struct RowChange {
  std::optional<Tuple> before;  // absent: row inserted
  std::optional<Tuple> after;   // absent: row deleted

  bool is_insert() const { return !before && after; }
  bool is_delete() const { return before && !after; }
  bool is_update() const { return before && after; }
  bool operator==(const RowChange&) const = default;
};

using TableDelta = std::map<Bytes, RowChange>;
using DbDelta = std::map<std::string, TableDelta>;

/// Number of changed rows over all tables.
std::size_t delta_rows(const DbDelta& d);

/// Appends `next` to `acc` per key: the earliest before image and the latest
/// after image survive; keys that end where they started drop out.
void compose_into(DbDelta& acc, const DbDelta& next);

}  // namespace ldb
