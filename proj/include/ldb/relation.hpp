#pragma once
// Relations: typed values, schemas with attribute groups, and the canonical
// columnar chunk encoding.
//
// Leaf chunk layout ("LDL1"), all integers little-endian:
//   magic "LDL1" | group_id u32 | row_count u32 | column_count u32
//   null bitmap per column, ceil(rows/8) bytes each, bit i set = row i null
//   value array per column:
//     Int64/Float64  row_count x 8 bytes (nulls encode as zero)
//     Utf8           (row_count + 1) u32 offsets into the data area, then the
//                    data area: per row u32 length | bytes (nulls are length 0)

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ldb/chunker.hpp"
#include "ldb/common.hpp"
#include "ldb/leaf_codec.hpp"

namespace ldb {

enum class ColumnType : std::uint8_t { Int64 = 0, Float64 = 1, Utf8 = 2 };

const char* column_type_name(ColumnType t);

class Value {
 public:
  Value() = default;
  static Value null() { return Value(); }
  static Value int64(std::int64_t v) { return Value(Data(v)); }
  static Value float64(double v) { return Value(Data(v)); }
  static Value utf8(std::string v) { return Value(Data(std::move(v))); }

  bool is_null() const { return std::holds_alternative<std::monostate>(data_); }
  bool is_int64() const { return std::holds_alternative<std::int64_t>(data_); }
  bool is_float64() const { return std::holds_alternative<double>(data_); }
  bool is_utf8() const { return std::holds_alternative<std::string>(data_); }
  std::int64_t as_int64() const { return std::get<std::int64_t>(data_); }
  double as_float64() const { return std::get<double>(data_); }
  const std::string& as_utf8() const { return std::get<std::string>(data_); }

  bool matches(ColumnType t) const;

  /// Doubles compare by bit pattern so equality agrees with byte encoding.
  bool operator==(const Value& other) const;

  /// Total order within one type (used by view predicates): nulls sort first.
  int compare(const Value& other) const;

  /// Text form used by the CLI; null is "\N".
  std::string to_text() const;
  static Value parse(std::string_view text, ColumnType type);

 private:
  using Data = std::variant<std::monostate, std::int64_t, double, std::string>;
  explicit Value(Data d) : data_(std::move(d)) {}
  Data data_;
};

using Tuple = std::vector<Value>;

std::string tuple_to_text(const Tuple& t);

struct Column {
  std::string name;
  ColumnType type = ColumnType::Int64;
  bool nullable = false;
  std::optional<Value> default_value;

  /// A non-nullable column with no default cannot be back-filled.
  bool fillable() const { return nullable || default_value.has_value(); }
  Value fill_value() const { return default_value ? *default_value : Value::null(); }
  std::string to_text() const;  // name:type[:nullable][:default=v]
  static Column parse(std::string_view text);
  bool operator==(const Column&) const = default;
};

struct AttributeGroup {
  std::uint32_t group_id = 0;
  std::vector<std::string> columns;  // primary key first
  bool operator==(const AttributeGroup&) const = default;
};

/// Column definitions of one attribute group, in group order (PK first).
struct GroupSchema {
  std::uint32_t group_id = 0;
  std::vector<Column> columns;
  std::vector<std::size_t> table_index;  // position of each column in the table
};

struct TableSchema {
  std::string name;
  std::vector<Column> columns;
  std::string primary_key;
  std::vector<AttributeGroup> groups;

  void validate() const;  // throws SchemaError
  std::size_t pk_index() const;
  std::optional<std::size_t> find_column(std::string_view name) const;
  std::size_t column_index(std::string_view name) const;  // throws SchemaError
  const Column& pk_column() const { return columns[pk_index()]; }
  GroupSchema group_schema(std::size_t g) const;
  std::vector<GroupSchema> group_schemas() const;

  /// Throws SchemaError if `t` does not fit the schema.
  void check_tuple(const Tuple& t) const;

  std::string to_text() const;
  static TableSchema parse(std::string_view line);
  bool operator==(const TableSchema&) const = default;
};

struct DatabaseSchema {
  std::vector<TableSchema> tables;

  const TableSchema* find(std::string_view table) const;
  const TableSchema& table(std::string_view name) const;  // throws SchemaError
  std::string to_text() const;
  static DatabaseSchema parse(std::string_view text);
  ChunkId digest() const;
  void validate() const;
  bool operator==(const DatabaseSchema&) const = default;
};

/// Order-preserving key encoding: byte-wise comparison of encodings matches
/// value order.
Bytes encode_key(const Value& v, ColumnType type);
Value decode_key(BytesView key, ColumnType type);

/// Canonical encoding of non-key group values (the prolly Entry value).
Bytes encode_values(std::span<const Value> values, std::span<const Column> columns);
Tuple decode_values(BytesView bytes, std::span<const Column> columns);

Bytes encode_chunk(const GroupSchema& group, std::span<const Tuple> rows);
std::vector<Tuple> decode_chunk(BytesView bytes, const GroupSchema& group);

std::vector<Tuple> split_tuple(const Tuple& t, const TableSchema& schema);
Tuple assemble_tuple(std::span<const Tuple> slices, const TableSchema& schema);

Entry row_to_entry(const Tuple& slice, const GroupSchema& group);
Tuple entry_to_row(const Entry& e, const GroupSchema& group);

/// Stores group rows as columnar leaf chunks.
class ColumnarLeafCodec final : public LeafCodec {
 public:
  explicit ColumnarLeafCodec(GroupSchema group) : group_(std::move(group)) {}
  Bytes encode(std::span<const Entry> entries) const override;
  std::vector<Entry> decode(BytesView payload) const override;
  const GroupSchema& group() const { return group_; }

 private:
  GroupSchema group_;
};

}  // namespace ldb
