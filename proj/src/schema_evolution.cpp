#include "ldb/schema_evolution.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace ldb {

namespace {

std::string key_text(const TableSchema& t, const Tuple& row) {
  const std::size_t pk = t.pk_index();
  return pk < row.size() ? row[pk].to_text() : "?";
}

void check_arity(const TableSchema& t, const Tuple& row) {
  if (row.size() != t.columns.size()) {
    throw Error(ErrorCode::SchemaError, "row for " + t.name + " has " + std::to_string(row.size()) +
                                            " values, expected " + std::to_string(t.columns.size()));
  }
}

std::string groups_text(const std::vector<AttributeGroup>& groups) {
  std::string s = "groups=[";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g) s += "|";
    for (std::size_t i = 0; i < groups[g].columns.size(); ++i) {
      if (i) s += ",";
      s += groups[g].columns[i];
    }
  }
  return s + "]";
}

std::vector<AttributeGroup> parse_groups(std::string_view text) {
  if (text.rfind("groups=[", 0) != 0 || text.back() != ']') {
    throw Error(ErrorCode::SchemaError, "groups must look like groups=[a,b|c]");
  }
  std::vector<AttributeGroup> out;
  const std::string_view body = text.substr(8, text.size() - 9);
  for (const auto& part : split(body, '|')) {
    AttributeGroup g{static_cast<std::uint32_t>(out.size()), {}};
    for (const auto& c : split(part, ',')) {
      if (!c.empty()) g.columns.push_back(c);
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

const char* capability_name(SyncCapability c) {
  switch (c) {
    case SyncCapability::Bidirectional: return "bidirectional";
    case SyncCapability::ForwardOnly: return "forward-only";
    case SyncCapability::ReverseOnly: return "reverse-only";
    case SyncCapability::None: return "none";
  }
  return "?";
}

SchemaChangeOp SchemaChangeOp::add_column(std::string table, Column c) {
  SchemaChangeOp op;
  op.kind = Kind::AddColumn;
  op.table = std::move(table);
  op.column = std::move(c);
  return op;
}

SchemaChangeOp SchemaChangeOp::drop_column(std::string table, std::string name) {
  SchemaChangeOp op;
  op.kind = Kind::DropColumn;
  op.table = std::move(table);
  op.name = std::move(name);
  return op;
}

SchemaChangeOp SchemaChangeOp::rename_column(std::string table, std::string from, std::string to) {
  SchemaChangeOp op;
  op.kind = Kind::RenameColumn;
  op.table = std::move(table);
  op.name = std::move(from);
  op.new_name = std::move(to);
  return op;
}

SchemaChangeOp SchemaChangeOp::regroup(std::string table, std::vector<AttributeGroup> groups) {
  SchemaChangeOp op;
  op.kind = Kind::RegroupAttributes;
  op.table = std::move(table);
  op.groups = std::move(groups);
  return op;
}

std::string SchemaChangeOp::to_text() const {
  switch (kind) {
    case Kind::AddColumn: return "add-column " + table + " " + column.to_text();
    case Kind::DropColumn: return "drop-column " + table + " " + name;
    case Kind::RenameColumn: return "rename-column " + table + " " + name + " " + new_name;
    case Kind::RegroupAttributes: return "regroup " + table + " " + groups_text(groups);
  }
  return {};
}

SchemaChangeOp SchemaChangeOp::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<std::string> tok;
  for (std::string t; in >> t;) tok.push_back(t);
  auto need = [&](std::size_t n) {
    if (tok.size() != n) throw Error(ErrorCode::SchemaError, "malformed schema change: " + std::string(text));
  };
  if (tok.empty()) throw Error(ErrorCode::SchemaError, "empty schema change");
  if (tok[0] == "add-column") {
    need(3);
    return add_column(tok[1], Column::parse(tok[2]));
  }
  if (tok[0] == "drop-column") {
    need(3);
    return drop_column(tok[1], tok[2]);
  }
  if (tok[0] == "rename-column") {
    need(4);
    return rename_column(tok[1], tok[2], tok[3]);
  }
  if (tok[0] == "regroup") {
    need(3);
    return regroup(tok[1], parse_groups(tok[2]));
  }
  throw Error(ErrorCode::SchemaError, "unknown schema change '" + tok[0] + "'");
}

SyncCapability classify(const SchemaChangeOp& op, const TableSchema& old_table) {
  if (op.table != old_table.name) {
    throw Error(ErrorCode::SchemaError, "op targets " + op.table + ", not " + old_table.name);
  }
  apply_op(op, old_table);  // validates the op
  switch (op.kind) {
    case SchemaChangeOp::Kind::AddColumn:
      return op.column.fillable() ? SyncCapability::Bidirectional : SyncCapability::ReverseOnly;
    case SchemaChangeOp::Kind::DropColumn:
      return old_table.columns[old_table.column_index(op.name)].fillable() ? SyncCapability::Bidirectional
                                                                            : SyncCapability::ForwardOnly;
    case SchemaChangeOp::Kind::RenameColumn:
    case SchemaChangeOp::Kind::RegroupAttributes:
      return SyncCapability::Bidirectional;
  }
  return SyncCapability::None;
}

TableSchema apply_op(const SchemaChangeOp& op, const TableSchema& old_table) {
  if (op.table != old_table.name) {
    throw Error(ErrorCode::SchemaError, "op targets " + op.table + ", not " + old_table.name);
  }
  TableSchema t = old_table;
  switch (op.kind) {
    case SchemaChangeOp::Kind::AddColumn: {
      if (t.find_column(op.column.name)) {
        throw Error(ErrorCode::SchemaError, "column " + op.column.name + " already exists in " + t.name);
      }
      t.columns.push_back(op.column);
      t.groups.back().columns.push_back(op.column.name);
      break;
    }
    case SchemaChangeOp::Kind::DropColumn: {
      const std::size_t idx = t.column_index(op.name);
      if (op.name == t.primary_key) throw Error(ErrorCode::SchemaError, "cannot drop the primary key");
      t.columns.erase(t.columns.begin() + static_cast<std::ptrdiff_t>(idx));
      for (auto& g : t.groups) std::erase(g.columns, op.name);
      if (t.columns.size() > 1) {
        std::erase_if(t.groups, [](const AttributeGroup& g) { return g.columns.size() == 1; });
      } else {
        t.groups.resize(1);
      }
      for (std::size_t g = 0; g < t.groups.size(); ++g) t.groups[g].group_id = static_cast<std::uint32_t>(g);
      break;
    }
    case SchemaChangeOp::Kind::RenameColumn: {
      const std::size_t idx = t.column_index(op.name);
      if (op.new_name.empty() || t.find_column(op.new_name)) {
        throw Error(ErrorCode::SchemaError, "cannot rename " + op.name + " to '" + op.new_name + "'");
      }
      t.columns[idx].name = op.new_name;
      if (t.primary_key == op.name) t.primary_key = op.new_name;
      for (auto& g : t.groups) std::replace(g.columns.begin(), g.columns.end(), op.name, op.new_name);
      break;
    }
    case SchemaChangeOp::Kind::RegroupAttributes: {
      if (op.groups.empty()) throw Error(ErrorCode::SchemaError, "regroup needs at least one group");
      t.groups.clear();
      for (const auto& g : op.groups) {
        AttributeGroup ng{static_cast<std::uint32_t>(t.groups.size()), {t.primary_key}};
        for (const auto& c : g.columns) {
          if (c != t.primary_key) ng.columns.push_back(c);
        }
        t.groups.push_back(std::move(ng));
      }
      break;
    }
  }
  t.validate();
  return t;
}

DatabaseSchema apply_op(const SchemaChangeOp& op, const DatabaseSchema& old_schema) {
  DatabaseSchema s = old_schema;
  bool found = false;
  for (auto& t : s.tables) {
    if (t.name == op.table) {
      t = apply_op(op, t);
      found = true;
    }
  }
  if (!found) throw Error(ErrorCode::SchemaError, "unknown table '" + op.table + "'");
  return s;
}

bool forward_allowed(SyncCapability c) {
  return c == SyncCapability::Bidirectional || c == SyncCapability::ForwardOnly;
}

bool reverse_allowed(SyncCapability c) {
  return c == SyncCapability::Bidirectional || c == SyncCapability::ReverseOnly;
}

Tuple forward_row(const SchemaChangeOp& op, const TableSchema& old_table, const Tuple& row) {
  check_arity(old_table, row);
  if (!forward_allowed(classify(op, old_table))) {
    throw Error(ErrorCode::DirectionUnavailable,
                "no forward value for " + op.to_text() + " at key " + key_text(old_table, row));
  }
  Tuple out = row;
  switch (op.kind) {
    case SchemaChangeOp::Kind::AddColumn:
      out.push_back(op.column.fill_value());
      break;
    case SchemaChangeOp::Kind::DropColumn:
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(old_table.column_index(op.name)));
      break;
    case SchemaChangeOp::Kind::RenameColumn:
    case SchemaChangeOp::Kind::RegroupAttributes:
      break;
  }
  return out;
}

Tuple reverse_row(const SchemaChangeOp& op, const TableSchema& old_table, const Tuple& row) {
  const TableSchema new_table = apply_op(op, old_table);
  check_arity(new_table, row);
  if (!reverse_allowed(classify(op, old_table))) {
    throw Error(ErrorCode::DirectionUnavailable,
                "no reverse value for " + op.to_text() + " at key " + key_text(new_table, row));
  }
  Tuple out = row;
  switch (op.kind) {
    case SchemaChangeOp::Kind::AddColumn:
      out.pop_back();
      break;
    case SchemaChangeOp::Kind::DropColumn: {
      const std::size_t idx = old_table.column_index(op.name);
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(idx), old_table.columns[idx].fill_value());
      break;
    }
    case SchemaChangeOp::Kind::RenameColumn:
    case SchemaChangeOp::Kind::RegroupAttributes:
      break;
  }
  return out;
}

}  // namespace ldb
