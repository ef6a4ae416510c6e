#include <charconv>
#include <sstream>

#include "ldb/sync.hpp"

namespace ldb {

namespace {

std::uint64_t parse_u64(std::string_view text, const char* what) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidInput, std::string("bad ") + what + " '" + std::string(text) + "'");
  }
  return v;
}

double parse_double(std::string_view text, const char* what) {
  double v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidInput, std::string("bad ") + what + " '" + std::string(text) + "'");
  }
  return v;
}

std::string double_text(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string join(const std::set<std::string>& s) {
  std::string out;
  for (const auto& t : s) {
    if (!out.empty()) out += ",";
    out += t;
  }
  return out;
}

}  // namespace

// ---- Frequency ----

std::string Frequency::to_text() const {
  switch (kind) {
    case Kind::Immediate: return "immediate";
    case Kind::Deferred: return "deferred";
    case Kind::OnDemand: return "ondemand";
    case Kind::Periodic: return "periodic:" + std::to_string(period);
  }
  return "?";
}

Frequency Frequency::parse(std::string_view text) {
  if (text == "immediate") return immediate();
  if (text == "deferred") return deferred();
  if (text == "ondemand") return on_demand();
  if (text.rfind("periodic:", 0) == 0) {
    const std::uint64_t n = parse_u64(text.substr(9), "period");
    if (n == 0) throw Error(ErrorCode::InvalidInput, "period must be positive");
    return periodic(n);
  }
  throw Error(ErrorCode::InvalidInput, "unknown frequency '" + std::string(text) + "'");
}

// ---- ChangeSummary ----

std::set<std::string> ChangeSummary::tables_touched() const {
  std::set<std::string> out;
  for (const auto& [t, c] : tables) {
    if (c.touched()) out.insert(t);
  }
  return out;
}

std::uint64_t ChangeSummary::rows_changed() const {
  std::uint64_t n = 0;
  for (const auto& [t, c] : tables) n += c.touched();
  return n;
}

double ChangeSummary::fraction_changed(const std::string& table) const {
  auto it = tables.find(table);
  if (it == tables.end()) return 0.0;
  const double before = static_cast<double>(std::max<std::uint64_t>(1, it->second.rows_before));
  return static_cast<double>(it->second.touched()) / before;
}

std::string ChangeSummary::to_text() const {
  std::string s = is_schema_change ? "schema=1" : "schema=0";
  for (const auto& [t, c] : tables) {
    s += " " + t + "=" + std::to_string(c.inserted) + "," + std::to_string(c.updated) + "," +
         std::to_string(c.deleted) + "," + std::to_string(c.rows_before);
  }
  return s;
}

ChangeSummary ChangeSummary::parse(std::string_view text) {
  ChangeSummary s;
  std::istringstream in{std::string(text)};
  std::string tok;
  if (!(in >> tok) || (tok != "schema=0" && tok != "schema=1")) {
    throw Error(ErrorCode::InvalidInput, "bad change summary '" + std::string(text) + "'");
  }
  s.is_schema_change = tok == "schema=1";
  while (in >> tok) {
    const auto eq = tok.rfind('=');
    const auto parts = split(std::string_view(tok).substr(eq == std::string::npos ? tok.size() : eq + 1), ',');
    if (eq == std::string::npos || parts.size() != 4) {
      throw Error(ErrorCode::InvalidInput, "bad change summary entry '" + tok + "'");
    }
    TableCounts c{parse_u64(parts[0], "count"), parse_u64(parts[1], "count"), parse_u64(parts[2], "count"),
                  parse_u64(parts[3], "count")};
    s.tables[tok.substr(0, eq)] = c;
  }
  return s;
}

// ---- Condition ----

Condition Condition::tables_touched(std::set<std::string> t) {
  if (t.empty()) throw Error(ErrorCode::InvalidInput, "table condition needs at least one table");
  Condition c;
  c.kind = Kind::TablesTouched;
  c.tables = std::move(t);
  return c;
}

Condition Condition::fraction_changed(double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidInput, "fraction threshold must be in [0, 1]");
  }
  Condition c;
  c.kind = Kind::FractionChanged;
  c.threshold = threshold;
  return c;
}

Condition Condition::rows_changed(std::uint64_t max_rows) {
  Condition c;
  c.kind = Kind::RowsChanged;
  c.max_rows = max_rows;
  return c;
}

Condition Condition::schema_change() {
  Condition c;
  c.kind = Kind::SchemaChangeInvolved;
  return c;
}

std::string Condition::to_text() const {
  switch (kind) {
    case Kind::TablesTouched: return "tables=" + join(tables);
    case Kind::FractionChanged: return "fraction=" + double_text(threshold);
    case Kind::RowsChanged: return "rows=" + std::to_string(max_rows);
    case Kind::SchemaChangeInvolved: return "schemachange";
  }
  return "?";
}

Condition Condition::parse(std::string_view text) {
  if (text == "schemachange") return schema_change();
  if (text.rfind("tables=", 0) == 0) {
    std::set<std::string> t;
    for (const auto& name : split(text.substr(7), ',')) {
      if (!name.empty()) t.insert(name);
    }
    return tables_touched(std::move(t));
  }
  if (text.rfind("fraction=", 0) == 0) return fraction_changed(parse_double(text.substr(9), "fraction"));
  if (text.rfind("rows=", 0) == 0) return rows_changed(parse_u64(text.substr(5), "row count"));
  throw Error(ErrorCode::InvalidInput, "unknown condition '" + std::string(text) + "'");
}

std::optional<std::string> evaluate_conditions(const std::vector<Condition>& conditions, const ChangeSummary& summary) {
  for (const auto& c : conditions) {
    switch (c.kind) {
      case Condition::Kind::TablesTouched:
        for (const auto& t : summary.tables_touched()) {
          if (c.tables.count(t)) return c.to_text() + ": commit touched " + t;
        }
        break;
      case Condition::Kind::FractionChanged:
        for (const auto& [t, counts] : summary.tables) {
          const double f = summary.fraction_changed(t);
          if (counts.touched() && f >= c.threshold) {
            return c.to_text() + ": " + t + " changed by fraction " + double_text(f);
          }
        }
        break;
      case Condition::Kind::RowsChanged:
        if (summary.rows_changed() > c.max_rows) {
          return c.to_text() + ": " + std::to_string(summary.rows_changed()) + " rows changed";
        }
        break;
      case Condition::Kind::SchemaChangeInvolved:
        if (summary.is_schema_change) return c.to_text() + ": schema change";
        break;
    }
  }
  return std::nullopt;
}

// ---- Transform ----

Transform Transform::schema_forward(SchemaChangeOp op, TableSchema old_table) {
  Transform t;
  t.kind = Kind::SchemaForward;
  t.op = std::move(op);
  t.old_table = std::move(old_table);
  return t;
}

Transform Transform::schema_reverse(SchemaChangeOp op, TableSchema old_table) {
  Transform t = schema_forward(std::move(op), std::move(old_table));
  t.kind = Kind::SchemaReverse;
  return t;
}

Transform Transform::of_view(ViewDef def) {
  Transform t;
  t.kind = Kind::View;
  t.view = std::move(def);
  return t;
}

std::optional<Transform> Transform::inverse() const {
  switch (kind) {
    case Kind::Identity: return identity();
    case Kind::View: return std::nullopt;
    case Kind::SchemaForward:
    case Kind::SchemaReverse: {
      Transform t = *this;
      t.kind = kind == Kind::SchemaForward ? Kind::SchemaReverse : Kind::SchemaForward;
      if (!t.permitted()) return std::nullopt;
      return t;
    }
  }
  return std::nullopt;
}

bool Transform::permitted() const {
  switch (kind) {
    case Kind::SchemaForward: return forward_allowed(classify(op, old_table));
    case Kind::SchemaReverse: return reverse_allowed(classify(op, old_table));
    default: return true;
  }
}

std::optional<std::pair<std::string, Tuple>> Transform::map_row(const std::string& table,
                                                                const TableSchema& table_schema,
                                                                const Tuple& row) const {
  switch (kind) {
    case Kind::Identity: return std::make_pair(table, row);
    case Kind::SchemaForward:
      if (table != op.table) return std::make_pair(table, row);
      return std::make_pair(table, forward_row(op, old_table, row));
    case Kind::SchemaReverse:
      if (table != op.table) return std::make_pair(table, row);
      return std::make_pair(table, reverse_row(op, old_table, row));
    case Kind::View:
      if (table != view.base_table || !view.matches(row, table_schema)) return std::nullopt;
      return std::make_pair(view.name, view.project(row, table_schema));
  }
  return std::nullopt;
}

DbDelta Transform::apply(const DbDelta& delta, const DatabaseSchema& source_schema) const {
  switch (kind) {
    case Kind::Identity: return delta;
    case Kind::View: {
      DbDelta out;
      auto it = delta.find(view.base_table);
      if (it == delta.end()) return out;
      TableDelta vd = view_delta(view, source_schema.table(view.base_table), it->second);
      if (!vd.empty()) out[view.name] = std::move(vd);
      return out;
    }
    case Kind::SchemaForward:
    case Kind::SchemaReverse: {
      DbDelta out = delta;
      auto it = out.find(op.table);
      if (it == out.end()) return out;
      const TableSchema& ts = source_schema.table(op.table);
      for (auto& [key, change] : it->second) {
        if (change.before) change.before = map_row(op.table, ts, *change.before)->second;
        if (change.after) change.after = map_row(op.table, ts, *change.after)->second;
      }
      return out;
    }
  }
  return delta;
}

std::string Transform::to_text() const {
  switch (kind) {
    case Kind::Identity: return "identity";
    case Kind::SchemaForward: return "forward\n" + op.to_text() + "\n" + old_table.to_text();
    case Kind::SchemaReverse: return "reverse\n" + op.to_text() + "\n" + old_table.to_text();
    case Kind::View: return "view\n" + view.to_text();
  }
  return "?";
}

Transform Transform::parse(std::string_view text) {
  const auto lines = split(text, '\n');
  if (lines.size() == 1 && lines[0] == "identity") return identity();
  if (lines.size() == 2 && lines[0] == "view") return of_view(ViewDef::parse(lines[1]));
  if (lines.size() == 3 && (lines[0] == "forward" || lines[0] == "reverse")) {
    SchemaChangeOp op = SchemaChangeOp::parse(lines[1]);
    TableSchema old = TableSchema::parse(lines[2]);
    return lines[0] == "forward" ? schema_forward(std::move(op), std::move(old))
                                 : schema_reverse(std::move(op), std::move(old));
  }
  throw Error(ErrorCode::InvalidInput, "unknown transform '" + std::string(text) + "'");
}

}  // namespace ldb
