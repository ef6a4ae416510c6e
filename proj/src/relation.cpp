#include "ldb/relation.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

namespace ldb {

namespace {

constexpr char kLeafMagic[4] = {'L', 'D', 'L', '1'};

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

ColumnType parse_type(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "int64") return ColumnType::Int64;
  if (lower == "float64") return ColumnType::Float64;
  if (lower == "utf8") return ColumnType::Utf8;
  throw Error(ErrorCode::SchemaError, "unknown column type '" + std::string(s) + "'");
}

void put_be64(Bytes& out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_be64(BytesView b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | static_cast<std::uint8_t>(b[i]);
  return v;
}

void put_value_bits(Bytes& out, const Value& v, ColumnType type) {
  switch (type) {
    case ColumnType::Int64:
      put_u64(out, v.is_null() ? 0 : static_cast<std::uint64_t>(v.as_int64()));
      break;
    case ColumnType::Float64:
      put_u64(out, v.is_null() ? 0 : std::bit_cast<std::uint64_t>(v.as_float64()));
      break;
    case ColumnType::Utf8:
      break;
  }
}

}  // namespace

const char* column_type_name(ColumnType t) {
  switch (t) {
    case ColumnType::Int64: return "int64";
    case ColumnType::Float64: return "float64";
    case ColumnType::Utf8: return "utf8";
  }
  return "?";
}

// ---- Value ----

bool Value::matches(ColumnType t) const {
  switch (t) {
    case ColumnType::Int64: return is_int64();
    case ColumnType::Float64: return is_float64();
    case ColumnType::Utf8: return is_utf8();
  }
  return false;
}

bool Value::operator==(const Value& other) const {
  if (data_.index() != other.data_.index()) return false;
  if (is_float64()) return std::bit_cast<std::uint64_t>(as_float64()) == std::bit_cast<std::uint64_t>(other.as_float64());
  return data_ == other.data_;
}

int Value::compare(const Value& other) const {
  if (is_null() || other.is_null()) return int(!is_null()) - int(!other.is_null());
  if (data_.index() != other.data_.index()) {
    return data_.index() < other.data_.index() ? -1 : 1;
  }
  if (is_int64()) return as_int64() < other.as_int64() ? -1 : (as_int64() > other.as_int64() ? 1 : 0);
  if (is_float64()) return as_float64() < other.as_float64() ? -1 : (as_float64() > other.as_float64() ? 1 : 0);
  const int c = as_utf8().compare(other.as_utf8());
  return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

std::string Value::to_text() const {
  if (is_null()) return "\\N";
  if (is_int64()) return std::to_string(as_int64());
  if (is_float64()) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), as_float64());
    return std::string(buf, p);
  }
  return as_utf8();
}

Value Value::parse(std::string_view text, ColumnType type) {
  if (text == "\\N") return null();
  switch (type) {
    case ColumnType::Int64: {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) {
        throw Error(ErrorCode::InvalidInput, "not an int64: '" + std::string(text) + "'");
      }
      return int64(v);
    }
    case ColumnType::Float64: {
      double v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size()) {
        throw Error(ErrorCode::InvalidInput, "not a float64: '" + std::string(text) + "'");
      }
      return float64(v);
    }
    case ColumnType::Utf8:
      return utf8(std::string(text));
  }
  return null();
}

std::string tuple_to_text(const Tuple& t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) out.push_back('\t');
    out += escape_field(t[i].to_text());
  }
  return out;
}

// ---- Column / schemas ----

std::string Column::to_text() const {
  std::string s = name + ":" + column_type_name(type);
  if (nullable) s += ":nullable";
  if (default_value) s += ":default=" + default_value->to_text();
  return s;
}

Column Column::parse(std::string_view text) {
  const auto parts = split(text, ':');
  if (parts.size() < 2 || parts[0].empty()) {
    throw Error(ErrorCode::SchemaError, "column must be name:type, got '" + std::string(text) + "'");
  }
  Column c;
  c.name = parts[0];
  c.type = parse_type(parts[1]);
  for (std::size_t i = 2; i < parts.size(); ++i) {
    if (parts[i] == "nullable") {
      c.nullable = true;
    } else if (parts[i].rfind("default=", 0) == 0) {
      try {
        c.default_value = Value::parse(std::string_view(parts[i]).substr(8), c.type);
      } catch (const Error& e) {
        throw Error(ErrorCode::SchemaError, "column " + c.name + ": bad default: " + e.what());
      }
    } else {
      throw Error(ErrorCode::SchemaError, "column " + c.name + ": unknown attribute '" + parts[i] + "'");
    }
  }
  return c;
}

std::optional<std::size_t> TableSchema::find_column(std::string_view col) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == col) return i;
  }
  return std::nullopt;
}

std::size_t TableSchema::column_index(std::string_view col) const {
  auto i = find_column(col);
  if (!i) throw Error(ErrorCode::SchemaError, "table " + name + " has no column '" + std::string(col) + "'");
  return *i;
}

std::size_t TableSchema::pk_index() const { return column_index(primary_key); }

void TableSchema::validate() const {
  if (name.empty()) throw Error(ErrorCode::SchemaError, "empty table name");
  std::set<std::string> names;
  for (const auto& c : columns) {
    if (c.name.empty()) throw Error(ErrorCode::SchemaError, "empty column name in " + name);
    if (!names.insert(c.name).second) throw Error(ErrorCode::SchemaError, "duplicate column " + c.name + " in " + name);
    if (c.default_value && !c.default_value->is_null() && !c.default_value->matches(c.type)) {
      throw Error(ErrorCode::SchemaError, "default of " + c.name + " does not match its type");
    }
    if (c.default_value && c.default_value->is_null() && !c.nullable) {
      throw Error(ErrorCode::SchemaError, "null default on non-nullable column " + c.name);
    }
  }
  const std::size_t pk = pk_index();
  if (columns[pk].nullable) throw Error(ErrorCode::SchemaError, "primary key " + primary_key + " must be non-nullable");
  if (groups.empty()) throw Error(ErrorCode::SchemaError, "table " + name + " has no attribute groups");
  std::set<std::string> covered;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    if (grp.group_id != g) throw Error(ErrorCode::SchemaError, "group ids must be 0..n-1");
    if (grp.columns.empty() || grp.columns.front() != primary_key) {
      throw Error(ErrorCode::SchemaError, "every group must start with the primary key");
    }
    if (grp.columns.size() == 1 && columns.size() > 1) {
      throw Error(ErrorCode::SchemaError, "group " + std::to_string(g) + " of " + name + " has no value columns");
    }
    for (std::size_t i = 1; i < grp.columns.size(); ++i) {
      column_index(grp.columns[i]);
      if (grp.columns[i] == primary_key) throw Error(ErrorCode::SchemaError, "primary key listed twice in a group");
      if (!covered.insert(grp.columns[i]).second) {
        throw Error(ErrorCode::SchemaError, "column " + grp.columns[i] + " appears in two groups");
      }
    }
  }
  if (covered.size() + 1 != columns.size()) {
    throw Error(ErrorCode::SchemaError, "groups of " + name + " must partition the non-key columns");
  }
}

GroupSchema TableSchema::group_schema(std::size_t g) const {
  GroupSchema gs;
  gs.group_id = groups.at(g).group_id;
  for (const auto& col : groups[g].columns) {
    const std::size_t idx = column_index(col);
    gs.columns.push_back(columns[idx]);
    gs.table_index.push_back(idx);
  }
  return gs;
}

std::vector<GroupSchema> TableSchema::group_schemas() const {
  std::vector<GroupSchema> out;
  for (std::size_t g = 0; g < groups.size(); ++g) out.push_back(group_schema(g));
  return out;
}

void TableSchema::check_tuple(const Tuple& t) const {
  if (t.size() != columns.size()) {
    throw Error(ErrorCode::SchemaError, "tuple for " + name + " has " + std::to_string(t.size()) + " values, expected " +
                                            std::to_string(columns.size()));
  }
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (t[i].is_null()) {
      if (!columns[i].nullable) throw Error(ErrorCode::SchemaError, "null in non-nullable column " + columns[i].name);
    } else if (!t[i].matches(columns[i].type)) {
      throw Error(ErrorCode::SchemaError, "type mismatch in column " + columns[i].name);
    }
  }
}

std::string TableSchema::to_text() const {
  std::string s = "table " + name + " (";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) s += ", ";
    s += columns[i].to_text();
  }
  s += ") pk=" + primary_key + " groups=[";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g) s += "|";
    for (std::size_t i = 1; i < groups[g].columns.size(); ++i) {
      if (i > 1) s += ",";
      s += groups[g].columns[i];
    }
  }
  return s + "]";
}

TableSchema TableSchema::parse(std::string_view line) {
  std::string text = trim(line);
  if (text.rfind("table ", 0) != 0) throw Error(ErrorCode::SchemaError, "expected 'table', got: " + text);
  const auto open = text.find('(');
  const auto close = text.find(')', open == std::string::npos ? 0 : open);
  if (open == std::string::npos || close == std::string::npos) {
    throw Error(ErrorCode::SchemaError, "missing column list in: " + text);
  }
  TableSchema t;
  t.name = trim(std::string_view(text).substr(6, open - 6));
  std::string cols = text.substr(open + 1, close - open - 1);
  std::replace(cols.begin(), cols.end(), ',', ' ');
  std::istringstream cs(cols);
  for (std::string tok; cs >> tok;) t.columns.push_back(Column::parse(tok));

  std::istringstream rest(text.substr(close + 1));
  std::optional<std::string> groups_text;
  for (std::string tok; rest >> tok;) {
    if (tok.rfind("pk=", 0) == 0) {
      t.primary_key = tok.substr(3);
    } else if (tok.rfind("groups=", 0) == 0) {
      groups_text = tok.substr(7);
    } else {
      throw Error(ErrorCode::SchemaError, "unexpected token '" + tok + "' in table " + t.name);
    }
  }
  if (t.primary_key.empty()) throw Error(ErrorCode::SchemaError, "table " + t.name + " needs pk=<col>");
  if (groups_text) {
    std::string g = *groups_text;
    if (g.size() < 2 || g.front() != '[' || g.back() != ']') {
      throw Error(ErrorCode::SchemaError, "groups must look like [a,b|c,d]");
    }
    g = g.substr(1, g.size() - 2);
    if (g.empty()) {
      t.groups.push_back({0, {t.primary_key}});
    } else {
      for (const auto& part : split(g, '|')) {
        AttributeGroup grp{static_cast<std::uint32_t>(t.groups.size()), {t.primary_key}};
        for (const auto& c : split(part, ',')) {
          if (!c.empty()) grp.columns.push_back(c);
        }
        t.groups.push_back(std::move(grp));
      }
    }
  } else {
    AttributeGroup grp{0, {t.primary_key}};
    for (const auto& c : t.columns) {
      if (c.name != t.primary_key) grp.columns.push_back(c.name);
    }
    t.groups.push_back(std::move(grp));
  }
  t.validate();
  return t;
}

const TableSchema* DatabaseSchema::find(std::string_view name) const {
  for (const auto& t : tables) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const TableSchema& DatabaseSchema::table(std::string_view name) const {
  const TableSchema* t = find(name);
  if (!t) throw Error(ErrorCode::SchemaError, "unknown table '" + std::string(name) + "'");
  return *t;
}

std::string DatabaseSchema::to_text() const {
  std::string s;
  for (const auto& t : tables) s += t.to_text() + "\n";
  return s;
}

DatabaseSchema DatabaseSchema::parse(std::string_view text) {
  DatabaseSchema db;
  for (const auto& raw : split(text, '\n')) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    db.tables.push_back(TableSchema::parse(line));
  }
  db.validate();
  return db;
}

void DatabaseSchema::validate() const {
  if (tables.empty()) throw Error(ErrorCode::SchemaError, "schema declares no tables");
  std::set<std::string> names;
  for (const auto& t : tables) {
    t.validate();
    if (!names.insert(t.name).second) throw Error(ErrorCode::SchemaError, "duplicate table " + t.name);
  }
}

ChunkId DatabaseSchema::digest() const { return sha256(to_text()); }

// ---- key and value encodings ----

Bytes encode_key(const Value& v, ColumnType type) {
  if (v.is_null() || !v.matches(type)) throw Error(ErrorCode::EncodingError, "primary key value has wrong type");
  Bytes out;
  switch (type) {
    case ColumnType::Int64:
      put_be64(out, static_cast<std::uint64_t>(v.as_int64()) ^ 0x8000000000000000ull);
      break;
    case ColumnType::Float64: {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v.as_float64());
      bits = (bits & 0x8000000000000000ull) ? ~bits : (bits | 0x8000000000000000ull);
      put_be64(out, bits);
      break;
    }
    case ColumnType::Utf8:
      out = v.as_utf8();
      break;
  }
  return out;
}

Value decode_key(BytesView key, ColumnType type) {
  switch (type) {
    case ColumnType::Int64:
      if (key.size() != 8) throw Error(ErrorCode::DecodingError, "int64 key must be 8 bytes");
      return Value::int64(static_cast<std::int64_t>(get_be64(key) ^ 0x8000000000000000ull));
    case ColumnType::Float64: {
      if (key.size() != 8) throw Error(ErrorCode::DecodingError, "float64 key must be 8 bytes");
      std::uint64_t bits = get_be64(key);
      bits = (bits & 0x8000000000000000ull) ? (bits & ~0x8000000000000000ull) : ~bits;
      return Value::float64(std::bit_cast<double>(bits));
    }
    case ColumnType::Utf8:
      return Value::utf8(std::string(key));
  }
  return Value::null();
}

Bytes encode_values(std::span<const Value> values, std::span<const Column> columns) {
  Bytes out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const Value& v = values[i];
    if (v.is_null()) {
      out.push_back(0);
      continue;
    }
    out.push_back(1);
    if (columns[i].type == ColumnType::Utf8) {
      put_u32(out, static_cast<std::uint32_t>(v.as_utf8().size()));
      out += v.as_utf8();
    } else {
      put_value_bits(out, v, columns[i].type);
    }
  }
  return out;
}

Tuple decode_values(BytesView bytes, std::span<const Column> columns) {
  ByteReader r(bytes, ErrorCode::DecodingError);
  Tuple t;
  t.reserve(columns.size());
  for (const auto& c : columns) {
    if (r.u8() == 0) {
      t.push_back(Value::null());
      continue;
    }
    switch (c.type) {
      case ColumnType::Int64: t.push_back(Value::int64(static_cast<std::int64_t>(r.u64()))); break;
      case ColumnType::Float64: t.push_back(Value::float64(std::bit_cast<double>(r.u64()))); break;
      case ColumnType::Utf8: t.push_back(Value::utf8(std::string(r.take(r.u32())))); break;
    }
  }
  if (!r.done()) throw Error(ErrorCode::DecodingError, "trailing bytes in row value");
  return t;
}

// ---- columnar chunks ----

Bytes encode_chunk(const GroupSchema& group, std::span<const Tuple> rows) {
  const std::size_t ncols = group.columns.size();
  const std::size_t nrows = rows.size();
  for (const auto& row : rows) {
    const std::string pk = row.empty() ? "?" : row[0].to_text();
    if (row.size() != ncols) throw Error(ErrorCode::EncodingError, "row " + pk + " has wrong arity");
    for (std::size_t c = 0; c < ncols; ++c) {
      if (row[c].is_null()) {
        if (!group.columns[c].nullable) {
          throw Error(ErrorCode::EncodingError, "row " + pk + ": null in non-nullable column " + group.columns[c].name);
        }
      } else if (!row[c].matches(group.columns[c].type)) {
        throw Error(ErrorCode::EncodingError, "row " + pk + ": type mismatch in column " + group.columns[c].name);
      }
    }
  }
  Bytes out(kLeafMagic, 4);
  put_u32(out, group.group_id);
  put_u32(out, static_cast<std::uint32_t>(nrows));
  put_u32(out, static_cast<std::uint32_t>(ncols));
  const std::size_t bitmap_bytes = (nrows + 7) / 8;
  for (std::size_t c = 0; c < ncols; ++c) {
    Bytes bitmap(bitmap_bytes, '\0');
    for (std::size_t r = 0; r < nrows; ++r) {
      if (rows[r][c].is_null()) bitmap[r / 8] = static_cast<char>(bitmap[r / 8] | (1 << (r % 8)));
    }
    out += bitmap;
  }
  for (std::size_t c = 0; c < ncols; ++c) {
    const ColumnType type = group.columns[c].type;
    if (type != ColumnType::Utf8) {
      for (std::size_t r = 0; r < nrows; ++r) put_value_bits(out, rows[r][c], type);
      continue;
    }
    Bytes data;
    std::vector<std::uint32_t> offsets;
    offsets.reserve(nrows + 1);
    for (std::size_t r = 0; r < nrows; ++r) {
      offsets.push_back(static_cast<std::uint32_t>(data.size()));
      const Value& v = rows[r][c];
      const std::size_t len = v.is_null() ? 0 : v.as_utf8().size();
      put_u32(data, static_cast<std::uint32_t>(len));
      if (!v.is_null()) data += v.as_utf8();
    }
    offsets.push_back(static_cast<std::uint32_t>(data.size()));
    for (auto o : offsets) put_u32(out, o);
    out += data;
  }
  return out;
}

std::vector<Tuple> decode_chunk(BytesView bytes, const GroupSchema& group) {
  ByteReader r(bytes, ErrorCode::DecodingError);
  if (r.take(4) != BytesView(kLeafMagic, 4)) throw Error(ErrorCode::DecodingError, "bad leaf magic");
  const std::uint32_t gid = r.u32();
  const std::uint32_t nrows = r.u32();
  const std::uint32_t ncols = r.u32();
  if (gid != group.group_id || ncols != group.columns.size()) {
    throw Error(ErrorCode::DecodingError, "chunk shape (group " + std::to_string(gid) + ", " + std::to_string(ncols) +
                                              " columns) does not match group " + std::to_string(group.group_id));
  }
  const std::size_t bitmap_bytes = (nrows + 7) / 8;
  std::vector<BytesView> bitmaps;
  for (std::size_t c = 0; c < ncols; ++c) bitmaps.push_back(r.take(bitmap_bytes));
  std::vector<Tuple> rows(nrows, Tuple(ncols));
  for (std::size_t c = 0; c < ncols; ++c) {
    const Column& col = group.columns[c];
    auto is_null = [&](std::size_t row) { return (static_cast<std::uint8_t>(bitmaps[c][row / 8]) >> (row % 8)) & 1; };
    if (col.type != ColumnType::Utf8) {
      for (std::size_t i = 0; i < nrows; ++i) {
        const std::uint64_t bits = r.u64();
        if (is_null(i)) {
          if (!col.nullable) throw Error(ErrorCode::DecodingError, "null in non-nullable column " + col.name);
          continue;
        }
        rows[i][c] = col.type == ColumnType::Int64 ? Value::int64(static_cast<std::int64_t>(bits))
                                                   : Value::float64(std::bit_cast<double>(bits));
      }
      continue;
    }
    std::vector<std::uint32_t> offsets(nrows + 1);
    for (auto& o : offsets) o = r.u32();
    const BytesView data = r.take(offsets.back());
    for (std::size_t i = 0; i < nrows; ++i) {
      if (offsets[i] + 4 > data.size()) throw Error(ErrorCode::DecodingError, "utf8 offset out of range");
      ByteReader item(data.substr(offsets[i]), ErrorCode::DecodingError);
      const std::uint32_t len = item.u32();
      const BytesView s = item.take(len);
      if (is_null(i)) {
        if (!col.nullable) throw Error(ErrorCode::DecodingError, "null in non-nullable column " + col.name);
        continue;
      }
      rows[i][c] = Value::utf8(std::string(s));
    }
  }
  if (!r.done()) throw Error(ErrorCode::DecodingError, "trailing bytes in leaf chunk");
  return rows;
}

// ---- vertical partitioning ----

std::vector<Tuple> split_tuple(const Tuple& t, const TableSchema& schema) {
  std::vector<Tuple> slices;
  slices.reserve(schema.groups.size());
  for (const auto& grp : schema.groups) {
    Tuple s;
    s.reserve(grp.columns.size());
    for (const auto& col : grp.columns) s.push_back(t.at(schema.column_index(col)));
    slices.push_back(std::move(s));
  }
  return slices;
}

Tuple assemble_tuple(std::span<const Tuple> slices, const TableSchema& schema) {
  if (slices.size() != schema.groups.size()) {
    throw Error(ErrorCode::AssemblyError, "expected " + std::to_string(schema.groups.size()) + " slices");
  }
  Tuple t(schema.columns.size());
  for (std::size_t g = 0; g < slices.size(); ++g) {
    const auto& cols = schema.groups[g].columns;
    if (slices[g].size() != cols.size()) throw Error(ErrorCode::AssemblyError, "slice arity mismatch");
    if (!(slices[g][0] == slices[0][0])) {
      throw Error(ErrorCode::AssemblyError,
                  "primary key mismatch: " + slices[0][0].to_text() + " vs " + slices[g][0].to_text());
    }
    for (std::size_t i = 0; i < cols.size(); ++i) t[schema.column_index(cols[i])] = slices[g][i];
  }
  return t;
}

Entry row_to_entry(const Tuple& slice, const GroupSchema& group) {
  return Entry{encode_key(slice.at(0), group.columns[0].type),
               encode_values(std::span<const Value>(slice).subspan(1), std::span<const Column>(group.columns).subspan(1))};
}

Tuple entry_to_row(const Entry& e, const GroupSchema& group) {
  Tuple rest = decode_values(e.value, std::span<const Column>(group.columns).subspan(1));
  Tuple row;
  row.reserve(group.columns.size());
  row.push_back(decode_key(e.key, group.columns[0].type));
  for (auto& v : rest) row.push_back(std::move(v));
  return row;
}

Bytes ColumnarLeafCodec::encode(std::span<const Entry> entries) const {
  std::vector<Tuple> rows;
  rows.reserve(entries.size());
  for (const auto& e : entries) rows.push_back(entry_to_row(e, group_));
  return encode_chunk(group_, rows);
}

std::vector<Entry> ColumnarLeafCodec::decode(BytesView payload) const {
  const auto rows = decode_chunk(payload, group_);
  std::vector<Entry> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(row_to_entry(r, group_));
  return out;
}

}  // namespace ldb
