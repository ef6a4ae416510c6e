#include "ldb/views.hpp"

#include <cctype>
#include <charconv>
#include <set>

namespace ldb {

namespace {

const char* op_text(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

// Literals carry their type in the text: 'quoted' is utf8, a number with a
// '.' or exponent is float64, any other number is int64.
std::string literal_text(const Value& v) {
  if (v.is_utf8()) {
    std::string s = "'";
    for (char c : v.as_utf8()) {
      if (c == '\'') s += "''";
      else s.push_back(c);
    }
    return s + "'";
  }
  std::string s = v.to_text();
  if (v.is_float64() && s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

class WhereParser {
 public:
  WhereParser(std::string_view text, const TableSchema* base) : s_(text), base_(base) {}

  std::vector<Predicate> run() {
    std::vector<Predicate> out;
    skip_ws();
    if (pos_ == s_.size()) return out;
    for (;;) {
      out.push_back(predicate());
      skip_ws();
      if (pos_ == s_.size()) break;
      const std::string word = ident();
      if (word != "and" && word != "AND") fail("expected 'and'");
    }
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::ViewError, why + " at offset " + std::to_string(pos_) + " in '" + std::string(s_) + "'");
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  std::string ident() {
    skip_ws();
    const std::size_t b = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    if (b == pos_) fail("expected a column name");
    return std::string(s_.substr(b, pos_ - b));
  }

  CmpOp op() {
    skip_ws();
    auto starts = [&](std::string_view t) { return s_.substr(pos_, t.size()) == t; };
    struct Tok {
      std::string_view text;
      CmpOp op;
    };
    static constexpr Tok kToks[] = {{"<=", CmpOp::Le}, {">=", CmpOp::Ge}, {"!=", CmpOp::Ne}, {"<>", CmpOp::Ne},
                                    {"==", CmpOp::Eq}, {"<", CmpOp::Lt},  {">", CmpOp::Gt},  {"=", CmpOp::Eq}};
    for (const auto& t : kToks) {
      if (starts(t.text)) {
        pos_ += t.text.size();
        return t.op;
      }
    }
    fail("expected a comparison operator");
  }

  Value literal(const std::string& column) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '\'') {
      std::string v;
      for (++pos_;; ++pos_) {
        if (pos_ >= s_.size()) fail("unterminated string literal");
        if (s_[pos_] == '\'') {
          if (pos_ + 1 < s_.size() && s_[pos_ + 1] == '\'') {
            v.push_back('\'');
            ++pos_;
            continue;
          }
          ++pos_;
          break;
        }
        v.push_back(s_[pos_]);
      }
      return Value::utf8(std::move(v));
    }
    const std::size_t b = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    const std::string text(s_.substr(b, pos_ - b));
    if (text.empty()) fail("expected a literal");
    ColumnType type = text.find_first_of(".eE") != std::string::npos ? ColumnType::Float64 : ColumnType::Int64;
    if (text == "inf" || text == "-inf" || text == "nan") type = ColumnType::Float64;
    if (base_) {
      if (auto idx = base_->find_column(column); idx && base_->columns[*idx].type == ColumnType::Float64) {
        type = ColumnType::Float64;
      }
    }
    try {
      return Value::parse(text, type);
    } catch (const Error&) {
      fail("bad literal '" + text + "'");
    }
  }

  Predicate predicate() {
    Predicate p;
    p.column = ident();
    p.op = op();
    p.constant = literal(p.column);
    return p;
  }

  std::string_view s_;
  const TableSchema* base_;
  std::size_t pos_ = 0;
};

bool holds(CmpOp op, int c) {
  switch (op) {
    case CmpOp::Eq: return c == 0;
    case CmpOp::Ne: return c != 0;
    case CmpOp::Lt: return c < 0;
    case CmpOp::Le: return c <= 0;
    case CmpOp::Gt: return c > 0;
    case CmpOp::Ge: return c >= 0;
  }
  return false;
}

}  // namespace

void ViewDef::validate(const TableSchema& base) const {
  auto bad = [&](const std::string& why) { throw Error(ErrorCode::ViewError, "view " + name + ": " + why); };
  if (name.empty()) throw Error(ErrorCode::ViewError, "view needs a name");
  if (base_table != base.name) bad("base table is " + base_table + ", not " + base.name);
  if (columns.empty()) bad("no projected columns");
  std::set<std::string> seen;
  for (const auto& c : columns) {
    if (!base.find_column(c)) bad("unknown column " + c);
    if (!seen.insert(c).second) bad("column " + c + " projected twice");
  }
  if (!seen.count(base.primary_key)) bad("primary key " + base.primary_key + " must be projected");
  for (const auto& p : where) {
    auto idx = base.find_column(p.column);
    if (!idx) bad("predicate on unknown column " + p.column);
    if (p.constant.is_null() || !p.constant.matches(base.columns[*idx].type)) {
      bad("constant " + literal_text(p.constant) + " does not match the type of " + p.column);
    }
  }
}

TableSchema ViewDef::view_schema(const TableSchema& base) const {
  TableSchema t;
  t.name = name;
  t.primary_key = base.primary_key;
  t.columns.push_back(base.pk_column());
  for (const auto& c : columns) {
    if (c != base.primary_key) t.columns.push_back(base.columns[base.column_index(c)]);
  }
  AttributeGroup g{0, {}};
  for (const auto& c : t.columns) g.columns.push_back(c.name);
  t.groups.push_back(std::move(g));
  return t;
}

bool ViewDef::matches(const Tuple& row, const TableSchema& base) const {
  for (const auto& p : where) {
    const Value& v = row.at(base.column_index(p.column));
    if (v.is_null()) return false;
    if (!holds(p.op, v.compare(p.constant))) return false;
  }
  return true;
}

Tuple ViewDef::project(const Tuple& row, const TableSchema& base) const {
  Tuple out;
  out.reserve(columns.size());
  out.push_back(row.at(base.pk_index()));
  for (const auto& c : columns) {
    if (c != base.primary_key) out.push_back(row.at(base.column_index(c)));
  }
  return out;
}

std::string ViewDef::to_text() const {
  std::string s = name + "|" + base_table + "|";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) s += ",";
    s += columns[i];
  }
  s += "|";
  for (std::size_t i = 0; i < where.size(); ++i) {
    if (i) s += " and ";
    s += where[i].column + " " + op_text(where[i].op) + " " + literal_text(where[i].constant);
  }
  return s;
}

ViewDef ViewDef::parse(std::string_view text) {
  std::size_t cut[3];
  std::size_t from = 0;
  for (auto& c : cut) {
    c = text.find('|', from);
    if (c == std::string_view::npos) throw Error(ErrorCode::ViewError, "view text needs name|base|cols|where");
    from = c + 1;
  }
  ViewDef d;
  d.name = std::string(text.substr(0, cut[0]));
  d.base_table = std::string(text.substr(cut[0] + 1, cut[1] - cut[0] - 1));
  for (const auto& c : split(text.substr(cut[1] + 1, cut[2] - cut[1] - 1), ',')) {
    if (!c.empty()) d.columns.push_back(c);
  }
  d.where = parse_where(text.substr(cut[2] + 1), nullptr);
  return d;
}

std::vector<Predicate> ViewDef::parse_where(std::string_view text, const TableSchema* base) {
  return WhereParser(text, base).run();
}

TableDelta view_delta(const ViewDef& def, const TableSchema& base, const TableDelta& base_delta) {
  TableDelta out;
  for (const auto& [key, change] : base_delta) {
    const bool was_in = change.before && def.matches(*change.before, base);
    const bool is_in = change.after && def.matches(*change.after, base);
    RowChange vc;
    if (was_in) vc.before = def.project(*change.before, base);
    if (is_in) vc.after = def.project(*change.after, base);
    if (vc.before == vc.after) continue;
    out.emplace(key, std::move(vc));
  }
  return out;
}

}  // namespace ldb
