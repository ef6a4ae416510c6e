// Branch-creating operations: schema changes and views, plus the executor
// that materializes their lazy trees.
//
// A lazy tree is a virtual chunk whose recipe reads every attribute group of
// a source table, maps each row through a Transform and builds one group of
// the target table. The recipe transform blob is a list of lines
// "<field>\t<escaped value>" for policy, group, source, target and transform.

#include "ldb/database.hpp"

namespace ldb {

namespace {

struct RecipeSpec {
  ChunkingPolicy policy;
  std::uint32_t group = 0;
  TableSchema source;
  TableSchema target;
  Transform transform;

  Bytes encode() const {
    return "policy\t" + escape_field(policy.to_string()) + "\ngroup\t" + std::to_string(group) + "\nsource\t" +
           escape_field(source.to_text()) + "\ntarget\t" + escape_field(target.to_text()) + "\ntransform\t" +
           escape_field(transform.to_text()) + "\n";
  }

  static RecipeSpec decode(BytesView blob) {
    RecipeSpec r;
    int seen = 0;
    for (const auto& line : split(blob, '\n')) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw Error(ErrorCode::InvalidRecipe, "malformed recipe line");
      const std::string key = line.substr(0, tab);
      const std::string val = unescape_field(std::string_view(line).substr(tab + 1));
      if (key == "policy") r.policy = ChunkingPolicy::parse(val);
      else if (key == "group") r.group = static_cast<std::uint32_t>(std::stoul(val));
      else if (key == "source") r.source = TableSchema::parse(val);
      else if (key == "target") r.target = TableSchema::parse(val);
      else if (key == "transform") r.transform = Transform::parse(val);
      else throw Error(ErrorCode::InvalidRecipe, "unknown recipe field " + key);
      ++seen;
    }
    if (seen != 5) throw Error(ErrorCode::InvalidRecipe, "incomplete recipe");
    return r;
  }
};

std::vector<Tuple> read_table(ChunkStore& store, const TableSchema& t, const std::vector<ChunkId>& roots) {
  if (roots.size() != t.groups.size()) throw Error(ErrorCode::InvalidRecipe, "recipe source count mismatch");
  std::vector<std::vector<Entry>> per_group;
  std::vector<GroupSchema> groups = t.group_schemas();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    ColumnarLeafCodec codec(groups[g]);
    ProllyTree tree(store, codec);
    TreeRef ref;
    ref.root = roots[g];
    per_group.push_back(tree.scan_all(ref));
  }
  std::vector<Tuple> rows;
  for (std::size_t i = 0; i < per_group[0].size(); ++i) {
    std::vector<Tuple> slices;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (per_group[g].size() != per_group[0].size()) {
        throw Error(ErrorCode::AssemblyError, "attribute groups of " + t.name + " differ in size");
      }
      slices.push_back(entry_to_row(per_group[g][i], groups[g]));
    }
    rows.push_back(assemble_tuple(slices, t));
  }
  return rows;
}

std::vector<Tuple> map_rows(const Transform& tr, const TableSchema& source, const std::vector<Tuple>& rows) {
  std::vector<Tuple> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (auto m = tr.map_row(source.name, source, r)) out.push_back(std::move(m->second));
  }
  return out;
}

TreeRef build_group(ChunkStore& store, const TableSchema& t, std::size_t g, const std::vector<Tuple>& rows,
                    const ChunkingPolicy& policy) {
  const GroupSchema gs = t.group_schema(g);
  std::vector<Entry> entries;
  entries.reserve(rows.size());
  for (const auto& r : rows) entries.push_back(row_to_entry(split_tuple(r, t)[g], gs));
  ColumnarLeafCodec codec(gs);
  ProllyTree tree(store, codec);
  return tree.build(entries, policy);
}

}  // namespace

class Database::Executor final : public RecipeExecutor {
 public:
  ChunkId execute(const Recipe& recipe, ChunkStore& store) override {
    const RecipeSpec spec = RecipeSpec::decode(recipe.transform);
    const auto rows = map_rows(spec.transform, spec.source, read_table(store, spec.source, recipe.sources));
    return build_group(store, spec.target, spec.group, rows, spec.policy).root;
  }
};

Database::Database(const std::filesystem::path& root) : root_(root), store_(root) {}

Database::~Database() = default;

void Database::install_executor() {
  executor_ = std::make_unique<Executor>();
  store_.set_executor(executor_.get());
}

std::vector<TreeRef> Database::build_table(const TableSchema& t, const std::vector<Tuple>& rows) {
  std::vector<TreeRef> out;
  for (std::size_t g = 0; g < t.groups.size(); ++g) out.push_back(build_group(store_, t, g, rows, policy_));
  return out;
}

TreeRef Database::lazy_tree(const Transform& transform, const TableSchema& source, const TableState& source_state,
                            const TableSchema& target, std::size_t group) {
  if (source_state.groups[0].root == empty_chunk_id()) return TreeRef{empty_chunk_id(), 0, policy_, 0};
  RecipeSpec spec{policy_, static_cast<std::uint32_t>(group), source, target, transform};
  Recipe r;
  r.transform = spec.encode();
  r.group_id = static_cast<std::uint32_t>(group);
  for (const auto& g : source_state.groups) r.sources.push_back(g.root);
  return TreeRef{store_.put_virtual(r), 0, policy_, 0};
}

SchemaChangeResult Database::apply_schema_change(const std::string& branch, const SchemaChangeOp& op,
                                                 const SchemaChangeOptions& options) {
  flush_for(branch);
  std::unique_lock lock(mu_);
  Branch& b = branch_ref(branch);
  check_committable(b);
  const Snapshot& head = snap(b.head);
  const DatabaseSchema& old_schema = schema_ref(head.schema);
  const TableSchema& old_t = old_schema.table(op.table);
  const SyncCapability cap = classify(op, old_t);
  const bool compatible = options.sync == SyncRequest::None ||
                          (options.sync == SyncRequest::Bidirectional && cap == SyncCapability::Bidirectional) ||
                          (options.sync == SyncRequest::Forward && forward_allowed(cap)) ||
                          (options.sync == SyncRequest::Reverse && reverse_allowed(cap));
  if (!compatible) {
    throw Error(ErrorCode::NotBidirectionallyCompatible,
                op.to_text() + " is " + capability_name(cap) + " and cannot carry the requested sync");
  }
  const DatabaseSchema new_schema = apply_op(op, old_schema);
  const TableSchema& new_t = new_schema.table(op.table);
  const std::uint64_t n = schema_changes_ + 1;
  const std::string old_name = b.name;
  const std::string new_name = options.carry_name          ? b.name
                               : options.new_branch.empty() ? b.name + "@schema-" + std::to_string(n)
                                                            : options.new_branch;
  const std::string renamed = options.carry_name ? b.name + "@pre-" + std::to_string(n) : b.name;
  if (options.carry_name) check_branch_name(renamed);
  else check_branch_name(new_name);

  const Transform fwd = Transform::schema_forward(op, old_t);
  std::vector<TableState> tables;
  for (const auto& ts : head.tables) {
    if (ts.name != op.table || op.kind == SchemaChangeOp::Kind::RenameColumn) {
      tables.push_back(ts);
      continue;
    }
    TableState out{ts.name, {}};
    std::optional<std::vector<TreeRef>> eager;
    for (std::size_t g = 0; g < new_t.groups.size(); ++g) {
      const bool same_layout = g < old_t.groups.size() && old_t.groups[g] == new_t.groups[g] &&
                               old_t.group_schema(g).columns == new_t.group_schema(g).columns;
      if (same_layout) {
        out.groups.push_back(ts.groups[g]);
      } else if (options.lazy) {
        out.groups.push_back(lazy_tree(fwd, old_t, ts, new_t, g));
      } else {
        if (!eager) eager = build_table(new_t, map_rows(fwd, old_t, scan_rows(head, old_t, {}, {})));
        out.groups.push_back((*eager)[g]);
      }
    }
    tables.push_back(std::move(out));
  }

  const ChunkId digest = ensure_schema(new_schema);
  EdgeAnnotation ann;
  ann.kind = EdgeKind::SchemaChange;
  ann.description = op.to_text();
  ann.provenance = Provenance{old_name, "user", 0};
  const SnapshotId id = new_snapshot(digest, std::move(tables), {{b.head, ann}});
  const std::uint64_t old_id = b.id;
  if (options.carry_name) emit({"BRANCH", "RENAME", std::to_string(old_id), renamed});
  const std::uint64_t new_id = create_branch_record(new_name, id);

  SchemaChangeResult result{new_name, renamed, id, std::nullopt};
  switch (options.sync) {
    case SyncRequest::None: break;
    case SyncRequest::Forward:
      result.edge = attach_locked(old_id, new_id, SyncDirection::Unidirectional, fwd, options.conditions,
                                  options.frequency);
      break;
    case SyncRequest::Reverse:
      result.edge = attach_locked(new_id, old_id, SyncDirection::Unidirectional,
                                  Transform::schema_reverse(op, old_t), options.conditions, options.frequency);
      break;
    case SyncRequest::Bidirectional:
      result.edge = attach_locked(old_id, new_id, SyncDirection::Bidirectional, fwd, options.conditions,
                                  options.frequency);
      break;
  }

  notify_schema_change(old_id, result.edge);
  if (options.carry_name) {
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      SyncEdge& e = edges_[i];
      if (!e.active || e.source != old_id || e.forward.kind != Transform::Kind::View) continue;
      const TableSchema* base = new_schema.find(e.forward.view.base_table);
      bool ok = base != nullptr;
      if (ok) {
        try {
          e.forward.view.validate(*base);
        } catch (const Error&) {
          ok = false;
        }
      }
      if (ok) {
        emit({"SYNC", "REPOINT", e.id, std::to_string(new_id), std::to_string(e.target)});
      } else {
        ChangeSummary s;
        s.is_schema_change = true;
        disassociate_locked(e, "view definition no longer fits the schema of " + new_name, s);
      }
    }
  }
  return result;
}

BranchInfo Database::create_view(const std::string& base_branch, const ViewDef& def, const ViewOptions& options) {
  flush_for(base_branch);
  std::unique_lock lock(mu_);
  Branch& b = branch_ref(base_branch);
  const Snapshot& head = snap(b.head);
  const DatabaseSchema& schema = schema_ref(head.schema);
  const TableSchema* base = schema.find(def.base_table);
  if (!base) throw Error(ErrorCode::ViewError, "base branch has no table " + def.base_table);
  def.validate(*base);
  check_branch_name(def.name);
  const TableSchema vt = def.view_schema(*base);
  vt.validate();
  const ChunkId digest = ensure_schema(DatabaseSchema{{vt}});
  TableState ts{vt.name, {lazy_tree(Transform::of_view(def), *base, *head.table(def.base_table), vt, 0)}};
  EdgeAnnotation ann;
  ann.kind = EdgeKind::ViewDefinition;
  ann.description = def.to_text();
  ann.provenance = Provenance{b.name, "user", 0};
  const std::uint64_t base_id = b.id;
  const SnapshotId id = new_snapshot(digest, {std::move(ts)}, {{b.head, ann}});
  const std::uint64_t view_id = create_branch_record(def.name, id);
  attach_locked(base_id, view_id, SyncDirection::Unidirectional, Transform::of_view(def), options.conditions,
                options.frequency);
  return info(branch_by_id(view_id));
}

}  // namespace ldb
