#include <algorithm>
#include <charconv>
#include <fstream>
#include <queue>
#include <set>

#include "ldb/database.hpp"

namespace ldb {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.log";

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorCode::DecodingError, "manifest: bad number '" + s + "'");
  }
  return v;
}

EdgeKind parse_edge_kind(const std::string& s) {
  for (auto k : {EdgeKind::Dml, EdgeKind::SchemaChange, EdgeKind::ViewDefinition, EdgeKind::Clone, EdgeKind::Merge,
                 EdgeKind::AutoPropagation}) {
    if (s == edge_kind_name(k)) return k;
  }
  throw Error(ErrorCode::DecodingError, "manifest: unknown edge kind '" + s + "'");
}

std::vector<std::string> annotation_fields(const EdgeAnnotation& a) {
  return {edge_kind_name(a.kind),
          std::to_string(a.provenance.logical_ts),
          a.provenance.branch,
          a.provenance.actor,
          a.description,
          a.summary ? a.summary->to_text() : "-",
          a.source ? a.source->hex() : "-"};
}

EdgeAnnotation parse_annotation(const std::vector<std::string>& f, std::size_t at) {
  EdgeAnnotation a;
  a.kind = parse_edge_kind(f.at(at));
  a.provenance.logical_ts = to_u64(f.at(at + 1));
  a.provenance.branch = f.at(at + 2);
  a.provenance.actor = f.at(at + 3);
  a.description = f.at(at + 4);
  if (f.at(at + 5) != "-") a.summary = ChangeSummary::parse(f[at + 5]);
  if (f.at(at + 6) != "-") a.source = ChunkId::from_hex(f[at + 6]);
  return a;
}

std::string tree_text(const TreeRef& t) {
  return t.root.hex() + " " + std::to_string(t.height) + " " + t.policy.to_string() + " " +
         std::to_string(t.entry_count);
}

// Canonical text hashed into the snapshot id.
std::string snapshot_text(const Snapshot& s) {
  std::string out = "LDS1\nschema " + s.schema.hex() + "\ncreated " + std::to_string(s.created_at) + "\n";
  for (const auto& t : s.tables) {
    out += "table " + escape_field(t.name) + "\n";
    for (const auto& g : t.groups) out += "group " + tree_text(g) + "\n";
  }
  for (const auto& p : s.parents) {
    out += "parent " + p.parent.hex();
    for (const auto& f : annotation_fields(p.annotation)) out += "\t" + escape_field(f);
    out += "\n";
  }
  return out;
}

bool is_hex(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

std::uint32_t leaf_count_field(BytesView payload) {
  std::size_t at = 0;
  if (payload.substr(0, 4) == "LDL1") at = 8;
  else if (payload.substr(0, 4) == "LDK1") at = 4;
  else throw Error(ErrorCode::CorruptTree, "unknown leaf format");
  ByteReader r(payload.substr(at), ErrorCode::CorruptTree);
  return r.u32();
}

}  // namespace

const char* edge_kind_name(EdgeKind k) {
  switch (k) {
    case EdgeKind::Dml: return "dml";
    case EdgeKind::SchemaChange: return "schema-change";
    case EdgeKind::ViewDefinition: return "view-definition";
    case EdgeKind::Clone: return "clone";
    case EdgeKind::Merge: return "merge";
    case EdgeKind::AutoPropagation: return "auto-propagation";
  }
  return "?";
}

const char* sync_role_name(SyncRole r) {
  switch (r) {
    case SyncRole::Free: return "free";
    case SyncRole::UniTarget: return "uni-target";
    case SyncRole::BiPeer: return "bi-peer";
  }
  return "?";
}

const TableState* Snapshot::table(std::string_view name) const {
  for (const auto& t : tables) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

RowOp RowOp::insert(std::string table, Value key, std::vector<std::pair<std::string, Value>> values) {
  return {Kind::Insert, std::move(table), std::move(key), std::move(values)};
}

RowOp RowOp::update(std::string table, Value key, std::vector<std::pair<std::string, Value>> values) {
  return {Kind::Update, std::move(table), std::move(key), std::move(values)};
}

RowOp RowOp::erase(std::string table, Value key) { return {Kind::Delete, std::move(table), std::move(key), {}}; }

// ---- lifecycle and manifest ----

std::unique_ptr<Database> Database::init(const fs::path& root, const DatabaseSchema& schema,
                                         const ChunkingPolicy& policy) {
  if (fs::exists(root / kManifest)) {
    throw Error(ErrorCode::RefusingToOverwrite, "a database already exists at " + root.string());
  }
  schema.validate();
  policy.validate();
  fs::create_directories(root);
  std::unique_ptr<Database> db(new Database(root));
  db->install_executor();
  db->manifest_.open(root / kManifest, std::ios::app);
  if (!db->manifest_) throw Error(ErrorCode::Io, "cannot create " + (root / kManifest).string());
  std::unique_lock lock(db->mu_);
  db->emit({"CONFIG", "policy", policy.to_string()});
  const ChunkId digest = db->ensure_schema(schema);
  std::vector<TableState> tables;
  for (const auto& t : schema.tables) {
    TableState ts{t.name, {}};
    for (std::size_t g = 0; g < t.groups.size(); ++g) ts.groups.push_back(TreeRef{empty_chunk_id(), 0, policy, 0});
    tables.push_back(std::move(ts));
  }
  const SnapshotId root_id = db->new_snapshot(digest, std::move(tables), {});
  db->create_branch_record("main", root_id);
  return db;
}

std::unique_ptr<Database> Database::open(const fs::path& root) {
  if (!fs::exists(root / kManifest)) throw Error(ErrorCode::NotFound, "no database at " + root.string());
  std::unique_ptr<Database> db(new Database(root));
  db->install_executor();
  {
    std::unique_lock lock(db->mu_);
    db->replay();
  }
  db->manifest_.open(root / kManifest, std::ios::app);
  if (!db->manifest_) throw Error(ErrorCode::Io, "cannot append to " + (root / kManifest).string());
  return db;
}

void Database::replay() {
  std::ifstream in(root_ / kManifest);
  replaying_ = true;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> fields = split(line, '\t');
    for (auto& f : fields) f = unescape_field(f);
    try {
      apply_record(fields);
    } catch (const Error& e) {
      throw Error(ErrorCode::DecodingError, "manifest line " + std::to_string(n) + ": " + e.what());
    }
  }
  if (pending_) throw Error(ErrorCode::DecodingError, "manifest ends inside a snapshot record");
  replaying_ = false;
}

void Database::emit(std::vector<std::string> fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line.push_back('\t');
    line += escape_field(fields[i]);
  }
  apply_record(fields);
  manifest_ << line << '\n';
  manifest_.flush();
  if (!manifest_) throw Error(ErrorCode::Io, "cannot append to the manifest");
}

void Database::apply_record(const std::vector<std::string>& f) {
  auto need = [&](std::size_t n) {
    if (f.size() < n) throw Error(ErrorCode::DecodingError, "manifest: short " + f.at(0) + " record");
  };
  const std::string& type = f.at(0);
  if (pending_ && type != "EDGE") throw Error(ErrorCode::DecodingError, "manifest: snapshot is missing edges");

  if (type == "CONFIG") {
    need(3);
    if (f[1] == "policy") policy_ = ChunkingPolicy::parse(f[2]);
  } else if (type == "SCHEMA") {
    need(3);
    DatabaseSchema s = DatabaseSchema::parse(f[2]);
    if (s.digest().hex() != f[1]) throw Error(ErrorCode::DecodingError, "manifest: schema digest mismatch");
    schemas_.emplace(s.digest(), std::move(s));
  } else if (type == "SNAPSHOT") {
    need(6);
    PendingSnapshot p;
    p.snap.id = ChunkId::from_hex(f[1]);
    p.snap.schema = ChunkId::from_hex(f[2]);
    p.snap.created_at = to_u64(f[3]);
    p.parents_expected = to_u64(f[4]);
    const std::uint64_t ntables = to_u64(f[5]);
    std::size_t at = 6;
    for (std::uint64_t t = 0; t < ntables; ++t) {
      need(at + 2);
      TableState ts{f[at], {}};
      const std::uint64_t ngroups = to_u64(f[at + 1]);
      at += 2;
      for (std::uint64_t g = 0; g < ngroups; ++g) {
        need(at + 4);
        ts.groups.push_back(TreeRef{ChunkId::from_hex(f[at]), static_cast<std::uint32_t>(to_u64(f[at + 1])),
                                    ChunkingPolicy::parse(f[at + 2]), to_u64(f[at + 3])});
        at += 4;
      }
      p.snap.tables.push_back(std::move(ts));
    }
    pending_ = std::move(p);
  } else if (type == "EDGE") {
    need(10);
    if (!pending_ || pending_->snap.id.hex() != f[1]) throw Error(ErrorCode::DecodingError, "manifest: stray edge");
    pending_->snap.parents.push_back({ChunkId::from_hex(f[2]), parse_annotation(f, 3)});
  } else if (type == "BRANCH") {
    need(4);
    if (f[1] == "CREATE") {
      need(5);
      Branch b{to_u64(f[2]), f[3], ChunkId::from_hex(f[4])};
      snap(b.head);
      names_[b.name] = b.id;
      next_branch_ = std::max(next_branch_, b.id + 1);
      branches_[b.id] = std::move(b);
    } else if (f[1] == "HEAD") {
      Branch& b = branch_by_id(to_u64(f[2]));
      b.head = ChunkId::from_hex(f[3]);
      snap(b.head);
    } else if (f[1] == "RENAME") {
      Branch& b = branch_by_id(to_u64(f[2]));
      names_.erase(b.name);
      b.name = f[3];
      names_[b.name] = b.id;
    } else {
      throw Error(ErrorCode::DecodingError, "manifest: unknown branch record " + f[1]);
    }
  } else if (type == "SYNC") {
    apply_sync_record(f);
  } else if (type == "ALERT") {
    need(5);
    Alert a{to_u64(f[1]), f[2], f[3], ChangeSummary::parse(f[4])};
    if (!replaying_) {
      std::ofstream out(root_ / "alerts.log", std::ios::app);
      out << a.tick << '\t' << escape_field(a.edge_id) << '\t' << escape_field(a.reason) << '\t'
          << escape_field(a.summary.to_text()) << '\n';
      if (!out) throw Error(ErrorCode::Io, "cannot append to alerts.log");
    }
    alerts_.push_back(std::move(a));
  } else if (type == "TICK") {
    need(2);
    now_ = to_u64(f[1]);
  } else {
    throw Error(ErrorCode::DecodingError, "manifest: unknown record " + type);
  }

  if (pending_ && pending_->snap.parents.size() == pending_->parents_expected) {
    Snapshot s = std::move(pending_->snap);
    pending_.reset();
    if (sha256(snapshot_text(s)) != s.id) {
      throw Error(ErrorCode::DecodingError, "manifest: snapshot " + s.id.hex() + " does not match its content");
    }
    if (!schemas_.count(s.schema)) throw Error(ErrorCode::DecodingError, "manifest: unknown schema");
    for (const auto& p : s.parents) snap(p.parent);
    clock_ = std::max(clock_, s.created_at);
    if (!s.parents.empty() && s.parents[0].annotation.kind == EdgeKind::SchemaChange) ++schema_changes_;
    order_.push_back(s.id);
    const SnapshotId id = s.id;
    snapshots_.emplace(id, std::move(s));
  }
}

ChunkId Database::ensure_schema(const DatabaseSchema& schema) {
  const ChunkId d = schema.digest();
  if (!schemas_.count(d)) emit({"SCHEMA", d.hex(), schema.to_text()});
  return d;
}

SnapshotId Database::new_snapshot(const ChunkId& schema, std::vector<TableState> tables,
                                  std::vector<ParentEdge> parents) {
  Snapshot s;
  s.schema = schema;
  s.tables = std::move(tables);
  s.parents = std::move(parents);
  s.created_at = clock_ + 1;
  for (auto& p : s.parents) p.annotation.provenance.logical_ts = s.created_at;
  s.id = sha256(snapshot_text(s));
  if (snapshots_.count(s.id)) return s.id;

  std::vector<std::string> f = {"SNAPSHOT", s.id.hex(), s.schema.hex(), std::to_string(s.created_at),
                                std::to_string(s.parents.size()), std::to_string(s.tables.size())};
  for (const auto& t : s.tables) {
    f.push_back(t.name);
    f.push_back(std::to_string(t.groups.size()));
    for (const auto& g : t.groups) {
      f.push_back(g.root.hex());
      f.push_back(std::to_string(g.height));
      f.push_back(g.policy.to_string());
      f.push_back(std::to_string(g.entry_count));
    }
  }
  emit(std::move(f));
  for (const auto& p : s.parents) {
    std::vector<std::string> e = {"EDGE", s.id.hex(), p.parent.hex()};
    for (auto& a : annotation_fields(p.annotation)) e.push_back(std::move(a));
    emit(std::move(e));
  }
  return s.id;
}

std::uint64_t Database::create_branch_record(const std::string& name, const SnapshotId& head) {
  const std::uint64_t id = next_branch_;
  emit({"BRANCH", "CREATE", std::to_string(id), name, head.hex()});
  return id;
}

// ---- lookups ----

Database::Branch& Database::branch_ref(const std::string& name) {
  auto it = names_.find(name);
  if (it == names_.end()) throw Error(ErrorCode::NotFound, "no branch named '" + name + "'");
  return branches_.at(it->second);
}

const Database::Branch& Database::branch_ref(const std::string& name) const {
  auto it = names_.find(name);
  if (it == names_.end()) throw Error(ErrorCode::NotFound, "no branch named '" + name + "'");
  return branches_.at(it->second);
}

Database::Branch& Database::branch_by_id(std::uint64_t id) {
  auto it = branches_.find(id);
  if (it == branches_.end()) throw Error(ErrorCode::NotFound, "no branch with id " + std::to_string(id));
  return it->second;
}

const Database::Branch& Database::branch_by_id(std::uint64_t id) const {
  auto it = branches_.find(id);
  if (it == branches_.end()) throw Error(ErrorCode::NotFound, "no branch with id " + std::to_string(id));
  return it->second;
}

const Snapshot& Database::snap(const SnapshotId& id) const {
  auto it = snapshots_.find(id);
  if (it == snapshots_.end()) throw Error(ErrorCode::NotFound, "no snapshot " + id.hex());
  return it->second;
}

const DatabaseSchema& Database::schema_ref(const ChunkId& digest) const {
  auto it = schemas_.find(digest);
  if (it == schemas_.end()) throw Error(ErrorCode::NotFound, "no schema " + digest.hex());
  return it->second;
}

SnapshotId Database::resolve_locked(const std::string& target) const {
  if (auto it = names_.find(target); it != names_.end()) return branches_.at(it->second).head;
  if (target.size() >= 8 && target.size() <= 64 && is_hex(target)) {
    std::string lower = target;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    std::optional<SnapshotId> found;
    for (const auto& id : order_) {
      if (id.hex().compare(0, lower.size(), lower) == 0) {
        if (found) throw Error(ErrorCode::NotFound, "snapshot prefix " + target + " is ambiguous");
        found = id;
      }
    }
    if (found) return *found;
  }
  throw Error(ErrorCode::NotFound, "no branch or snapshot '" + target + "'");
}

SnapshotId Database::resolve(const std::string& target) const {
  std::shared_lock lock(mu_);
  return resolve_locked(target);
}

Snapshot Database::snapshot(const SnapshotId& id) const {
  std::shared_lock lock(mu_);
  return snap(id);
}

std::vector<Snapshot> Database::snapshots() const {
  std::shared_lock lock(mu_);
  std::vector<Snapshot> out;
  for (const auto& id : order_) out.push_back(snap(id));
  return out;
}

DatabaseSchema Database::schema_of(const std::string& target) const {
  std::shared_lock lock(mu_);
  return schema_ref(snap(resolve_locked(target)).schema);
}

DatabaseSchema Database::schema(const ChunkId& digest) const {
  std::shared_lock lock(mu_);
  return schema_ref(digest);
}

BranchInfo Database::info(const Branch& b) const {
  BranchInfo i{b.id, b.name, b.head, role_of(b.id), {}};
  for (const auto& e : edges_) {
    if (e.active && e.touches(b.id)) i.edges.push_back(e.id);
  }
  return i;
}

BranchInfo Database::branch(const std::string& name) const {
  std::shared_lock lock(mu_);
  return info(branch_ref(name));
}

std::vector<BranchInfo> Database::branches() const {
  std::shared_lock lock(mu_);
  std::vector<BranchInfo> out;
  for (const auto& [id, b] : branches_) out.push_back(info(b));
  return out;
}

void Database::check_committable(const Branch& b) const {
  for (const auto& e : edges_) {
    if (e.active && e.direction == SyncDirection::Unidirectional && e.target == b.id) {
      throw Error(ErrorCode::SyncTargetImmutable,
                  "branch " + b.name + " is the target of sync edge " + e.id + "; disassociate it first");
    }
  }
}

// ---- trees and rows ----

TreeRef Database::live(const TreeRef& t) const {
  if (t.root == empty_chunk_id()) return t;
  if (store_.resolve(t.root) == t.root && !store_.is_virtual(t.root)) return t;
  {
    std::lock_guard lock(live_mu_);
    if (auto it = live_cache_.find(t.root); it != live_cache_.end()) return it->second;
  }
  RawLeafCodec codec;
  ProllyTree tree(store_, codec);
  TreeRef m = tree.materialized(t);
  std::uint64_t count = 0;
  std::function<void(const ChunkId&)> walk = [&](const ChunkId& id) {
    if (id == empty_chunk_id()) return;
    auto payload = store_.get(id).payload;
    if (payload->substr(0, 4) == "LDI1") {
      for (const auto& n : ProllyTree::decode_interior(*payload)) walk(n.id);
    } else {
      count += leaf_count_field(*payload);
    }
  };
  walk(m.root);
  m.entry_count = count;
  std::lock_guard lock(live_mu_);
  live_cache_[t.root] = m;
  return m;
}

std::vector<TreeRef> Database::table_trees(const SnapshotId& id, const std::string& table) {
  std::shared_lock lock(mu_);
  const TableState* ts = snap(id).table(table);
  if (!ts) throw Error(ErrorCode::NotFound, "no table " + table + " at " + id.hex());
  std::vector<TreeRef> out;
  for (const auto& g : ts->groups) out.push_back(live(g));
  return out;
}

std::vector<std::optional<Tuple>> Database::read_rows(const Snapshot& s, const TableSchema& t,
                                                      std::span<const Bytes> keys) const {
  std::vector<std::optional<Tuple>> out(keys.size());
  const TableState* ts = s.table(t.name);
  if (!ts) throw Error(ErrorCode::SchemaError, "no table " + t.name + " at snapshot " + s.id.hex());
  std::vector<std::vector<Tuple>> slices(keys.size());
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    ColumnarLeafCodec codec(t.group_schema(g));
    ProllyTree tree(store_, codec);
    const auto values = tree.lookup_many(live(ts->groups[g]), keys);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (!values[i]) {
        if (g > 0 && !slices[i].empty()) {
          throw Error(ErrorCode::AssemblyError, "group " + std::to_string(g) + " lacks a row present in group 0");
        }
        continue;
      }
      slices[i].push_back(entry_to_row(Entry{keys[i], *values[i]}, codec.group()));
    }
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (slices[i].empty()) continue;
    if (slices[i].size() != t.groups.size()) {
      throw Error(ErrorCode::AssemblyError, "row missing from some attribute group of " + t.name);
    }
    out[i] = assemble_tuple(slices[i], t);
  }
  return out;
}

std::optional<Tuple> Database::read_row(const Snapshot& s, const TableSchema& t, const Bytes& key) const {
  return read_rows(s, t, std::span<const Bytes>(&key, 1))[0];
}

std::vector<Tuple> Database::scan_rows(const Snapshot& s, const TableSchema& t, const std::optional<Bytes>& lo,
                                       const std::optional<Bytes>& hi) const {
  const TableState* ts = s.table(t.name);
  if (!ts) throw Error(ErrorCode::SchemaError, "no table " + t.name + " at snapshot " + s.id.hex());
  std::vector<std::vector<Entry>> per_group;
  std::vector<GroupSchema> groups = t.group_schemas();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    ColumnarLeafCodec codec(groups[g]);
    ProllyTree tree(store_, codec);
    per_group.push_back(tree.scan(live(ts->groups[g]), lo ? BytesView(*lo) : BytesView(),
                                  hi ? std::optional<BytesView>(*hi) : std::nullopt));
  }
  std::vector<Tuple> rows;
  rows.reserve(per_group[0].size());
  for (std::size_t i = 0; i < per_group[0].size(); ++i) {
    std::vector<Tuple> slices;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (per_group[g].size() != per_group[0].size() || per_group[g][i].key != per_group[0][i].key) {
        throw Error(ErrorCode::AssemblyError, "attribute groups of " + t.name + " hold different key sets");
      }
      slices.push_back(entry_to_row(per_group[g][i], groups[g]));
    }
    rows.push_back(assemble_tuple(slices, t));
  }
  return rows;
}

TableState Database::apply_table(const TableState& ts, const TableSchema& t, const TableDelta& changes) {
  TableState out = ts;
  std::vector<std::vector<Mutation>> muts(t.groups.size());
  for (const auto& [key, ch] : changes) {
    std::vector<Tuple> before, after;
    if (ch.before) before = split_tuple(*ch.before, t);
    if (ch.after) after = split_tuple(*ch.after, t);
    for (std::size_t g = 0; g < t.groups.size(); ++g) {
      const GroupSchema gs = t.group_schema(g);
      if (!ch.before) {
        muts[g].push_back(Mutation::insert(key, row_to_entry(after[g], gs).value));
      } else if (!ch.after) {
        muts[g].push_back(Mutation::erase(key));
      } else if (!(before[g] == after[g])) {
        muts[g].push_back(Mutation::update(key, row_to_entry(after[g], gs).value));
      }
    }
  }
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    if (muts[g].empty()) continue;
    ColumnarLeafCodec codec(t.group_schema(g));
    ProllyTree tree(store_, codec);
    out.groups[g] = tree.apply(live(ts.groups[g]), muts[g]);
  }
  return out;
}

ChangeSummary Database::summarize(const Snapshot& head, const DbDelta& net) const {
  ChangeSummary s;
  for (const auto& [table, rows] : net) {
    if (rows.empty()) continue;
    TableCounts c;
    for (const auto& [key, ch] : rows) {
      if (ch.is_insert()) ++c.inserted;
      else if (ch.is_delete()) ++c.deleted;
      else ++c.updated;
    }
    if (const TableState* ts = head.table(table)) c.rows_before = live(ts->groups[0]).entry_count;
    s.tables[table] = c;
  }
  return s;
}

DbDelta Database::reconcile(const Snapshot& head, const DbDelta& wanted) const {
  const DatabaseSchema& schema = schema_ref(head.schema);
  DbDelta net;
  for (const auto& [table, rows] : wanted) {
    const TableSchema* t = schema.find(table);
    if (!t) throw Error(ErrorCode::SchemaError, "target has no table " + table);
    std::vector<Bytes> keys;
    for (const auto& [key, ch] : rows) {
      if (ch.after) t->check_tuple(*ch.after);
      keys.push_back(key);
    }
    const auto current = read_rows(head, *t, keys);
    std::size_t i = 0;
    for (const auto& [key, ch] : rows) {
      const auto& cur = current[i++];
      if (cur == ch.after) continue;
      net[table].emplace(key, RowChange{cur, ch.after});
    }
  }
  return net;
}

SnapshotId Database::write_commit(Branch& b, const DbDelta& net, EdgeAnnotation annotation,
                                  const std::vector<SnapshotId>& extra_parents,
                                  const std::optional<std::string>& via_edge) {
  const Snapshot& head = snap(b.head);
  const DatabaseSchema& schema = schema_ref(head.schema);
  std::vector<TableState> tables;
  for (const auto& ts : head.tables) {
    auto it = net.find(ts.name);
    if (it == net.end() || it->second.empty()) {
      tables.push_back(ts);
    } else {
      tables.push_back(apply_table(ts, schema.table(ts.name), it->second));
    }
  }
  const ChangeSummary summary = summarize(head, net);
  annotation.summary = summary;
  if (annotation.provenance.branch.empty()) annotation.provenance.branch = b.name;
  std::vector<ParentEdge> parents{{head.id, annotation}};
  for (const auto& p : extra_parents) parents.push_back({p, annotation});
  const SnapshotId parent = head.id;
  const SnapshotId id = new_snapshot(head.schema, std::move(tables), std::move(parents));
  emit({"BRANCH", "HEAD", std::to_string(b.id), id.hex()});
  on_commit(b.id, parent, id, net, summary, via_edge);
  return id;
}

// ---- graph operations ----

SnapshotId Database::commit(const std::string& branch, std::span<const RowOp> ops, const CommitOptions& options) {
  std::unique_lock lock(mu_);
  Branch& b = branch_ref(branch);
  if (options.expected_head && *options.expected_head != b.head) {
    throw Error(ErrorCode::NotHead, "snapshot " + options.expected_head->hex() + " is not the head of " + branch);
  }
  check_committable(b);
  const Snapshot& head = snap(b.head);
  const DatabaseSchema& schema = schema_ref(head.schema);

  // Original rows of every addressed key, read in one batch per table.
  std::map<std::string, std::map<Bytes, std::optional<Tuple>>> original;
  for (const auto& op : ops) {
    const TableSchema& t = schema.table(op.table);
    const Column& pk = t.pk_column();
    if (op.key.is_null() || !op.key.matches(pk.type)) {
      throw Error(ErrorCode::SchemaError, "key " + op.key.to_text() + " does not fit " + t.name + "." + pk.name);
    }
    original[op.table].emplace(encode_key(op.key, pk.type), std::nullopt);
  }
  for (auto& [table, rows] : original) {
    std::vector<Bytes> keys;
    for (const auto& [k, v] : rows) keys.push_back(k);
    const auto found = read_rows(head, schema.table(table), keys);
    std::size_t i = 0;
    for (auto& [k, v] : rows) v = found[i++];
  }

  auto working = original;
  std::vector<std::string> violations;
  std::string description;
  for (std::size_t n = 0; n < ops.size(); ++n) {
    const RowOp& op = ops[n];
    const TableSchema& t = schema.table(op.table);
    const std::size_t pk = t.pk_index();
    const Bytes key = encode_key(op.key, t.columns[pk].type);
    std::optional<Tuple>& cur = working[op.table][key];
    const std::string where = op.table + ":" + op.key.to_text();
    const char* verb = op.kind == RowOp::Kind::Insert ? "insert" : op.kind == RowOp::Kind::Update ? "update" : "delete";
    if (n < 16) description += std::string(n ? "; " : "") + verb + " " + where;

    if (op.kind == RowOp::Kind::Delete) {
      if (!cur) violations.push_back("delete of missing key " + where);
      cur.reset();
      continue;
    }
    Tuple row;
    std::vector<bool> given(t.columns.size(), false);
    if (op.kind == RowOp::Kind::Insert) {
      if (cur) {
        violations.push_back("insert of existing key " + where);
        continue;
      }
      row.resize(t.columns.size());
      for (std::size_t i = 0; i < t.columns.size(); ++i) row[i] = t.columns[i].fill_value();
    } else {
      if (!cur) {
        violations.push_back("update of missing key " + where);
        continue;
      }
      row = *cur;
      std::fill(given.begin(), given.end(), true);
    }
    row[pk] = op.key;
    given[pk] = true;
    bool ok = true;
    for (const auto& [col, val] : op.values) {
      const std::size_t i = t.column_index(col);
      if (i == pk && !(val == op.key)) {
        violations.push_back("primary key of " + where + " cannot change");
        ok = false;
        break;
      }
      row[i] = val;
      given[i] = true;
    }
    if (!ok) continue;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      if (!given[i] && !t.columns[i].fillable()) {
        violations.push_back("no value for non-nullable column " + t.columns[i].name + " in " + where);
        ok = false;
      }
    }
    if (!ok) continue;
    try {
      t.check_tuple(row);
    } catch (const Error& e) {
      violations.push_back(where + ": " + e.what());
      continue;
    }
    cur = std::move(row);
  }
  if (ops.size() > 16) description += "; ... (" + std::to_string(ops.size()) + " ops)";
  if (!violations.empty()) {
    std::string msg;
    for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v;
    throw Error(ErrorCode::ConstraintViolation, msg);
  }

  DbDelta net;
  for (const auto& [table, rows] : working) {
    const auto& orig = original.at(table);
    for (const auto& [key, after] : rows) {
      const auto& before = orig.at(key);
      if (before == after) continue;
      net[table].emplace(key, RowChange{before, after});
    }
  }
  EdgeAnnotation ann;
  ann.kind = EdgeKind::Dml;
  ann.description = options.description.empty() ? description : options.description;
  ann.provenance = Provenance{b.name, options.actor, 0};
  return write_commit(b, net, ann, {}, std::nullopt);
}

BranchInfo Database::create_branch(const std::string& name, const std::string& from) {
  flush_for(from);
  std::unique_lock lock(mu_);
  check_branch_name(name);
  const SnapshotId src = resolve_locked(from);
  const Snapshot& s = snap(src);
  EdgeAnnotation ann;
  ann.kind = EdgeKind::Clone;
  ann.description = "clone " + from + " as " + name;
  ann.provenance = Provenance{name, "user", 0};
  const SnapshotId id = new_snapshot(s.schema, s.tables, {{src, ann}});
  const std::uint64_t bid = create_branch_record(name, id);
  return info(branch_by_id(bid));
}

void Database::check_branch_name(const std::string& name) const {
  if (name.empty() || name.find_first_of(" \t\n\r") != std::string::npos) {
    throw Error(ErrorCode::InvalidInput, "bad branch name '" + name + "'");
  }
  if (names_.count(name)) throw Error(ErrorCode::NameTaken, "branch " + name + " already exists");
}

std::optional<SnapshotId> Database::lca(const SnapshotId& a, const SnapshotId& b) const {
  auto ancestors = [&](const SnapshotId& start) {
    std::set<SnapshotId> seen{start};
    std::vector<SnapshotId> stack{start};
    while (!stack.empty()) {
      const SnapshotId cur = stack.back();
      stack.pop_back();
      for (const auto& p : snap(cur).parents) {
        if (seen.insert(p.parent).second) stack.push_back(p.parent);
      }
    }
    return seen;
  };
  const auto sa = ancestors(a);
  const auto sb = ancestors(b);
  std::optional<SnapshotId> best;
  for (const auto& id : sa) {
    if (!sb.count(id)) continue;
    if (!best || snap(id).created_at > snap(*best).created_at ||
        (snap(id).created_at == snap(*best).created_at && id < *best)) {
      best = id;
    }
  }
  return best;
}

SnapshotId Database::merge(const std::string& src, const std::string& dst_branch, const std::string& actor) {
  flush_for(src);
  flush_for(dst_branch);
  std::unique_lock lock(mu_);
  Branch& d = branch_ref(dst_branch);
  check_committable(d);
  const SnapshotId src_id = resolve_locked(src);
  const SnapshotId dst_id = d.head;
  if (snap(src_id).schema != snap(dst_id).schema) {
    throw Error(ErrorCode::SchemaMismatch, "cannot merge snapshots with different schemas");
  }
  const auto base = lca(src_id, dst_id);
  if (!base) throw Error(ErrorCode::InvalidInput, "no common ancestor between " + src + " and " + dst_branch);
  const DbDelta ds = diff_locked(*base, src_id);
  const DbDelta dd = diff_locked(*base, dst_id);
  const DatabaseSchema& schema = schema_ref(snap(dst_id).schema);

  auto text = [](const std::optional<Tuple>& t) { return t ? "(" + tuple_to_text(*t) + ")" : std::string("<deleted>"); };
  std::vector<std::string> conflicts;
  DbDelta net;
  for (const auto& [table, rows] : ds) {
    const TableSchema& t = schema.table(table);
    auto dt = dd.find(table);
    for (const auto& [key, ch] : rows) {
      if (dt != dd.end()) {
        if (auto it = dt->second.find(key); it != dt->second.end()) {
          if (!(it->second.after == ch.after)) {
            conflicts.push_back(table + " key " + decode_key(key, t.pk_column().type).to_text() + ": src " +
                                text(ch.after) + " vs dst " + text(it->second.after));
          }
          continue;
        }
      }
      net[table].emplace(key, ch);
    }
  }
  if (!conflicts.empty()) {
    std::string msg = std::to_string(conflicts.size()) + " conflicting keys: ";
    for (std::size_t i = 0; i < conflicts.size(); ++i) msg += (i ? "; " : "") + conflicts[i];
    throw Error(ErrorCode::MergeConflict, msg);
  }
  EdgeAnnotation ann;
  ann.kind = EdgeKind::Merge;
  ann.description = "merge " + src + " into " + dst_branch;
  ann.provenance = Provenance{d.name, actor, 0};
  return write_commit(d, net, ann, {src_id}, std::nullopt);
}

DbDelta Database::diff_locked(const SnapshotId& a, const SnapshotId& b) const {
  const Snapshot& sa = snap(a);
  const Snapshot& sb = snap(b);
  if (sa.schema != sb.schema) {
    throw Error(ErrorCode::SchemaMismatch, "snapshots " + a.hex().substr(0, 12) + " and " + b.hex().substr(0, 12) +
                                               " have different schemas");
  }
  const DatabaseSchema& schema = schema_ref(sa.schema);
  DbDelta out;
  for (const auto& t : schema.tables) {
    const TableState* ta = sa.table(t.name);
    const TableState* tb = sb.table(t.name);
    std::set<Bytes> keys;
    for (std::size_t g = 0; g < t.groups.size(); ++g) {
      if (ta->groups[g].root == tb->groups[g].root) continue;
      ColumnarLeafCodec codec(t.group_schema(g));
      ProllyTree tree(store_, codec);
      const Delta d = tree.diff(live(ta->groups[g]), live(tb->groups[g]));
      for (const auto& e : d.added) keys.insert(e.key);
      for (const auto& e : d.removed) keys.insert(e.key);
      for (const auto& m : d.modified) keys.insert(m.key);
    }
    if (keys.empty()) continue;
    const std::vector<Bytes> sorted(keys.begin(), keys.end());
    const auto before = read_rows(sa, t, sorted);
    const auto after = read_rows(sb, t, sorted);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (before[i] == after[i]) continue;
      out[t.name].emplace(sorted[i], RowChange{before[i], after[i]});
    }
  }
  return out;
}

DbDelta Database::diff(const std::string& a, const std::string& b) {
  flush_for(a);
  flush_for(b);
  std::shared_lock lock(mu_);
  return diff_locked(resolve_locked(a), resolve_locked(b));
}

std::vector<LogEntry> Database::log(const std::string& branch) const {
  std::shared_lock lock(mu_);
  std::vector<LogEntry> out;
  SnapshotId cur = branch_ref(branch).head;
  for (;;) {
    const Snapshot& s = snap(cur);
    LogEntry e{s.id, s.created_at, std::nullopt};
    if (!s.parents.empty()) e.edge = s.parents[0].annotation;
    out.push_back(std::move(e));
    if (s.parents.empty()) break;
    cur = s.parents[0].parent;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

LogEntry Database::blame(const std::string& branch, const std::string& table, const Value& key) {
  flush_for(branch);
  std::shared_lock lock(mu_);
  const Snapshot* cur = &snap(branch_ref(branch).head);
  const TableSchema& t = schema_ref(cur->schema).table(table);
  if (key.is_null() || !key.matches(t.pk_column().type)) {
    throw Error(ErrorCode::SchemaError, "key " + key.to_text() + " does not fit " + table);
  }
  const Bytes k = encode_key(key, t.pk_column().type);
  std::optional<Tuple> row = read_row(*cur, t, k);
  if (!row) throw Error(ErrorCode::NotFound, "no row " + key.to_text() + " in " + table + " on " + branch);
  auto entry = [](const Snapshot& s) {
    LogEntry e{s.id, s.created_at, std::nullopt};
    if (!s.parents.empty()) e.edge = s.parents[0].annotation;
    return e;
  };
  while (!cur->parents.empty()) {
    const Snapshot& parent = snap(cur->parents[0].parent);
    if (parent.schema != cur->schema) return entry(*cur);
    const TableState* a = parent.table(table);
    const TableState* b = cur->table(table);
    if (!(a->groups == b->groups)) {
      const std::optional<Tuple> prev = read_row(parent, t, k);
      if (prev != row) return entry(*cur);
    }
    cur = &parent;
  }
  return entry(*cur);
}

std::optional<Tuple> Database::get(const std::string& target, const std::string& table, const Value& key) {
  flush_for(target);
  std::shared_lock lock(mu_);
  const Snapshot& s = snap(resolve_locked(target));
  const TableSchema& t = schema_ref(s.schema).table(table);
  if (key.is_null() || !key.matches(t.pk_column().type)) {
    throw Error(ErrorCode::SchemaError, "key " + key.to_text() + " does not fit " + table);
  }
  return read_row(s, t, encode_key(key, t.pk_column().type));
}

std::vector<Tuple> Database::scan(const std::string& target, const std::string& table, const std::optional<Value>& lo,
                                  const std::optional<Value>& hi) {
  flush_for(target);
  std::shared_lock lock(mu_);
  const Snapshot& s = snap(resolve_locked(target));
  const TableSchema& t = schema_ref(s.schema).table(table);
  auto enc = [&](const std::optional<Value>& v) -> std::optional<Bytes> {
    if (!v) return std::nullopt;
    if (v->is_null() || !v->matches(t.pk_column().type)) {
      throw Error(ErrorCode::SchemaError, "bound " + v->to_text() + " does not fit " + table);
    }
    return encode_key(*v, t.pk_column().type);
  };
  return scan_rows(s, t, enc(lo), enc(hi));
}

std::string Database::state_text() const {
  std::shared_lock lock(mu_);
  std::string out = "clock " + std::to_string(clock_) + "\nnow " + std::to_string(now_) + "\npolicy " +
                    policy_.to_string() + "\n";
  for (const auto& id : order_) out += "snapshot " + id.hex() + "\n" + snapshot_text(snap(id));
  for (const auto& [id, b] : branches_) {
    out += "branch " + std::to_string(id) + " " + b.name + " " + b.head.hex() + " " + sync_role_name(role_of(id)) + "\n";
  }
  for (const auto& e : edges_) {
    out += "edge " + e.id + " " + std::to_string(e.source) + " " + std::to_string(e.target) + " " +
           (e.direction == SyncDirection::Bidirectional ? "bi" : "uni") + " " + e.frequency.to_text() + " " +
           (e.active ? "active" : "disassociated:" + escape_field(e.reason)) + " fired=" +
           std::to_string(e.last_fired_tick) + "\n  forward " + escape_field(e.forward.to_text()) + "\n";
    if (e.reverse) out += "  reverse " + escape_field(e.reverse->to_text()) + "\n";
    for (const auto& c : e.conditions) out += "  cond " + c.to_text() + "\n";
    for (const auto& q : e.pending_forward) out += "  fwd " + q.parent.hex() + " " + q.snapshot.hex() + "\n";
    for (const auto& q : e.pending_reverse) out += "  rev " + q.parent.hex() + " " + q.snapshot.hex() + "\n";
  }
  for (const auto& a : alerts_) {
    out += "alert " + std::to_string(a.tick) + " " + a.edge_id + " " + escape_field(a.reason) + " " +
           a.summary.to_text() + "\n";
  }
  return out;
}

}  // namespace ldb
