#include "ldb/row_delta.hpp"

namespace ldb {

std::size_t delta_rows(const DbDelta& d) {
  std::size_t n = 0;
  for (const auto& [table, rows] : d) n += rows.size();
  return n;
}

void compose_into(DbDelta& acc, const DbDelta& next) {
  for (const auto& [table, rows] : next) {
    TableDelta& into = acc[table];
    for (const auto& [key, change] : rows) {
      auto it = into.find(key);
      if (it == into.end()) {
        into.emplace(key, change);
        continue;
      }
      it->second.after = change.after;
      if (it->second.before == it->second.after) into.erase(it);
    }
    if (into.empty()) acc.erase(table);
  }
}

}  // namespace ldb
