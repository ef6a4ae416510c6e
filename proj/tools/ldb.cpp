// ldb: command-line front end over a database directory.
//
// Exit codes: 0 success, 1 domain error (message on stderr), 2 usage error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "ldb/bench.hpp"
#include "ldb/database.hpp"

using namespace ldb;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Splits on unescaped `sep`; "\<sep>" and "\\" are literal, other escapes stay.
std::vector<std::string> split_escaped(std::string_view text, char sep) {
  std::vector<std::string> out(1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\' && i + 1 < text.size() && (text[i + 1] == sep || text[i + 1] == '\\' || text[i + 1] == '=')) {
      out.back().push_back(text[++i]);
    } else if (c == sep) {
      out.emplace_back();
    } else {
      out.back().push_back(c);
    }
  }
  return out;
}

std::vector<RowOp> parse_ops(const std::string& text, const DatabaseSchema& schema) {
  std::vector<RowOp> ops;
  std::size_t lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    std::string line = raw;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, '\t');
    const std::string where = "ops line " + std::to_string(lineno);
    if (f.size() < 3 || f.size() > 4) throw Error(ErrorCode::InvalidInput, where + ": expected 3 or 4 fields");
    const TableSchema& t = schema.table(f[1]);
    const Value key = Value::parse(f[2], t.pk_column().type);
    std::vector<std::pair<std::string, Value>> values;
    if (f.size() == 4 && !f[3].empty()) {
      for (const auto& part : split_escaped(f[3], ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::InvalidInput, where + ": expected col=val in '" + part + "'");
        const std::string col = part.substr(0, eq);
        values.emplace_back(col, Value::parse(part.substr(eq + 1), t.columns[t.column_index(col)].type));
      }
    }
    if (f[0] == "insert") ops.push_back(RowOp::insert(f[1], key, std::move(values)));
    else if (f[0] == "update") ops.push_back(RowOp::update(f[1], key, std::move(values)));
    else if (f[0] == "delete") ops.push_back(RowOp::erase(f[1], key));
    else throw Error(ErrorCode::InvalidInput, where + ": unknown op '" + f[0] + "'");
  }
  return ops;
}

Value parse_key(Database& db, const std::string& target, const std::string& table, const std::string& text) {
  return Value::parse(text, db.schema_of(target).table(table).pk_column().type);
}

std::string entry_line(const LogEntry& e) {
  std::string out = e.id.hex() + "\t" + std::to_string(e.created_at);
  if (!e.edge) return out + "\troot\t-\t-";
  return out + "\t" + edge_kind_name(e.edge->kind) + "\t" + escape_field(e.edge->provenance.actor) + "\t" +
         escape_field(e.edge->description);
}

ChunkingPolicy policy_from(const std::string& mode, std::uint32_t target, std::uint32_t window,
                           std::optional<std::uint32_t> min, std::optional<std::uint32_t> max) {
  ChunkingPolicy p;
  if (mode == "content") p = ChunkingPolicy::content(target, window);
  else if (mode == "capacity") p = ChunkingPolicy::capacity(target);
  else throw Error(ErrorCode::Usage, "--policy must be content or capacity");
  if (min) p.min_entries = *min;
  if (max) p.max_entries = *max;
  p.validate();
  return p;
}

std::vector<Condition> parse_conditions(const std::vector<std::string>& texts) {
  std::vector<Condition> out;
  for (const auto& t : texts) out.push_back(Condition::parse(t));
  return out;
}

SyncRequest parse_sync_request(const std::string& s) {
  if (s == "none") return SyncRequest::None;
  if (s == "forward") return SyncRequest::Forward;
  if (s == "reverse") return SyncRequest::Reverse;
  if (s == "bi") return SyncRequest::Bidirectional;
  throw Error(ErrorCode::Usage, "--sync must be none, forward, reverse or bi");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ldb: versioned branching table store"};
  app.require_subcommand(1);
  std::string root = ".ldb";
  if (const char* env = std::getenv("LDB_ROOT")) root = env;
  app.add_option("-C,--root", root, "database directory (default $LDB_ROOT or .ldb)");

  // init
  auto* init = app.add_subcommand("init", "create a database from a schema file");
  std::string schema_file, policy_mode = "content";
  std::uint32_t target_entries = 64, window = 4;
  std::optional<std::uint32_t> min_entries, max_entries;
  init->add_option("--schema", schema_file, "schema file")->required();
  init->add_option("--policy", policy_mode, "content or capacity");
  init->add_option("--target-entries", target_entries);
  init->add_option("--window", window);
  init->add_option("--min-entries", min_entries);
  init->add_option("--max-entries", max_entries);

  // branch
  auto* branch = app.add_subcommand("branch", "create or list branches");
  std::string branch_name, from = "main";
  branch->add_option("name", branch_name, "new branch name");
  branch->add_option("--from", from, "branch or snapshot to start from");

  // commit
  auto* commit = app.add_subcommand("commit", "apply an ops file to a branch head");
  std::string commit_branch, ops_file, actor = "user", message, expect;
  commit->add_option("branch", commit_branch)->required();
  commit->add_option("--ops", ops_file, "TSV: op<TAB>table<TAB>key<TAB>col=val,...")->required();
  commit->add_option("--actor", actor);
  commit->add_option("-m,--message", message);
  commit->add_option("--expect-head", expect);

  // get / scan
  auto* get = app.add_subcommand("get", "read one row");
  std::string target, table, key;
  get->add_option("target", target)->required();
  get->add_option("table", table)->required();
  get->add_option("key", key)->required();
  auto* scan = app.add_subcommand("scan", "read rows in key order");
  std::optional<std::string> lo, hi;
  scan->add_option("target", target)->required();
  scan->add_option("table", table)->required();
  scan->add_option("--lo", lo);
  scan->add_option("--hi", hi);

  // diff / log / blame / merge
  auto* diff = app.add_subcommand("diff", "row changes between two snapshots");
  std::string a, b;
  diff->add_option("a", a)->required();
  diff->add_option("b", b)->required();
  auto* log = app.add_subcommand("log", "first-parent history of a branch");
  log->add_option("branch", target)->required();
  auto* blame = app.add_subcommand("blame", "last snapshot that changed a row");
  blame->add_option("branch", target)->required();
  blame->add_option("table", table)->required();
  blame->add_option("key", key)->required();
  auto* merge = app.add_subcommand("merge", "merge a branch or snapshot into a branch");
  merge->add_option("src", a)->required();
  merge->add_option("dst", b)->required();
  merge->add_option("--actor", actor);

  // schema
  auto* schema = app.add_subcommand("schema", "show or change schemas");
  schema->require_subcommand(1);
  auto* schema_show = schema->add_subcommand("show", "print the schema of a branch or snapshot");
  schema_show->add_option("target", target)->required();
  auto* schema_change = schema->add_subcommand("change", "apply a schema change, creating a new branch");
  std::string op_text, sync_req = "none", new_branch, freq = "immediate";
  std::vector<std::string> conds;
  bool carry = false, lazy = false;
  schema_change->add_option("branch", target)->required();
  schema_change->add_option("op", op_text, "e.g. \"add-column t c:int64:default=0\"")->required();
  schema_change->add_flag("--carry-name", carry);
  schema_change->add_flag("--lazy", lazy);
  schema_change->add_option("--sync", sync_req, "none, forward, reverse or bi");
  schema_change->add_option("--new-branch", new_branch);
  schema_change->add_option("--freq", freq);
  schema_change->add_option("--cond", conds);

  // view
  auto* view = app.add_subcommand("view", "derived views");
  view->require_subcommand(1);
  auto* view_create = view->add_subcommand("create", "create a select/project view branch");
  std::string view_name, cols, where;
  view_create->add_option("name", view_name)->required();
  view_create->add_option("--base", target)->required();
  view_create->add_option("--table", table)->required();
  view_create->add_option("--cols", cols)->required();
  view_create->add_option("--where", where);
  view_create->add_option("--freq", freq);
  view_create->add_option("--cond", conds);

  // sync
  auto* sync = app.add_subcommand("sync", "sync edges between branches");
  sync->require_subcommand(1);
  auto* sync_attach = sync->add_subcommand("attach", "attach an identity sync edge");
  bool bi = false;
  sync_attach->add_option("source", a)->required();
  sync_attach->add_option("target", b)->required();
  sync_attach->add_flag("--bi", bi);
  sync_attach->add_option("--freq", freq);
  sync_attach->add_option("--cond", conds);
  auto* sync_now = sync->add_subcommand("now", "flush an edge");
  std::string edge_id, reason = "detached by user";
  sync_now->add_option("edge", edge_id)->required();
  auto* sync_detach = sync->add_subcommand("detach", "disassociate an edge");
  sync_detach->add_option("edge", edge_id)->required();
  sync_detach->add_option("--reason", reason);
  auto* sync_list = sync->add_subcommand("list", "list edges");

  // tick / alerts / stats
  auto* tick = app.add_subcommand("tick", "advance the logical clock (+N relative, N absolute)");
  std::string tick_arg;
  tick->add_option("ticks", tick_arg)->required();
  auto* alerts = app.add_subcommand("alerts", "list disassociation alerts");
  auto* stats = app.add_subcommand("stats", "chunk store statistics");
  bool recount = false;
  stats->add_flag("--recount", recount, "recount from the directory tree");

  // bench
  auto* bench = app.add_subcommand("bench", "run a storage experiment (E1, E2, E3)");
  std::string experiment, out_dir;
  bool full = false;
  std::uint64_t seed = 42;
  std::vector<std::string> workloads;
  bench->add_option("experiment", experiment)->required();
  bench->add_option("--out", out_dir, "fresh output directory")->required();
  bench->add_flag("--full", full, "full scale (50k rows, 500 commits)");
  bench->add_option("--seed", seed);
  bench->add_option("--workload", workloads, "E1 workloads to run");
  bench->add_option("--target-entries", target_entries, "content-mode target");
  bench->add_option("--window", window);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (init->parsed()) {
      const auto s = DatabaseSchema::parse(read_file(schema_file));
      auto db = Database::init(root, s, policy_from(policy_mode, target_entries, window, min_entries, max_entries));
      std::cout << db->branch("main").head.hex() << "\n";
      return 0;
    }
    if (bench->parsed()) {
      bench::ExperimentOptions o;
      o.scale = full ? bench::Scale::Full : bench::Scale::Desk;
      o.seed = seed;
      if (bench->count("--target-entries")) o.content_target = target_entries;
      o.window = window;
      for (const auto& w : workloads) o.workloads.push_back(bench::parse_workload(w));
      std::cout << bench::run_experiment(experiment, out_dir, o).to_table();
      return 0;
    }

    auto db = Database::open(root);
    if (branch->parsed()) {
      if (branch_name.empty()) {
        for (const auto& bi : db->branches()) {
          std::cout << bi.name << "\t" << bi.head.hex() << "\t" << sync_role_name(bi.role) << "\n";
        }
      } else {
        std::cout << db->create_branch(branch_name, from).head.hex() << "\n";
      }
    } else if (commit->parsed()) {
      const auto ops = parse_ops(read_file(ops_file), db->schema_of(commit_branch));
      CommitOptions o;
      o.actor = actor;
      o.description = message;
      if (!expect.empty()) o.expected_head = db->resolve(expect);
      std::cout << db->commit(commit_branch, ops, o).hex() << "\n";
    } else if (get->parsed()) {
      const auto row = db->get(target, table, parse_key(*db, target, table, key));
      if (!row) throw Error(ErrorCode::NotFound, "no row " + key + " in " + table + " at " + target);
      std::cout << tuple_to_text(*row) << "\n";
    } else if (scan->parsed()) {
      const ColumnType kt = db->schema_of(target).table(table).pk_column().type;
      std::optional<Value> vlo, vhi;
      if (lo) vlo = Value::parse(*lo, kt);
      if (hi) vhi = Value::parse(*hi, kt);
      for (const auto& r : db->scan(target, table, vlo, vhi)) std::cout << tuple_to_text(r) << "\n";
    } else if (diff->parsed()) {
      const DbDelta d = db->diff(a, b);
      const DatabaseSchema sb = db->schema_of(b);
      for (const auto& [t, rows] : d) {
        const ColumnType kt = sb.table(t).pk_column().type;
        for (const auto& [k, ch] : rows) {
          const char* kind = !ch.before ? "insert" : !ch.after ? "delete" : "update";
          std::cout << kind << "\t" << t << "\t" << escape_field(decode_key(k, kt).to_text()) << "\t"
                    << (ch.after ? tuple_to_text(*ch.after) : tuple_to_text(*ch.before)) << "\n";
        }
      }
    } else if (log->parsed()) {
      for (const auto& e : db->log(target)) std::cout << entry_line(e) << "\n";
    } else if (blame->parsed()) {
      std::cout << entry_line(db->blame(target, table, parse_key(*db, target, table, key))) << "\n";
    } else if (merge->parsed()) {
      std::cout << db->merge(a, b, actor).hex() << "\n";
    } else if (schema_show->parsed()) {
      std::cout << db->schema_of(target).to_text();
    } else if (schema_change->parsed()) {
      SchemaChangeOptions o;
      o.carry_name = carry;
      o.lazy = lazy;
      o.sync = parse_sync_request(sync_req);
      o.new_branch = new_branch;
      o.frequency = Frequency::parse(freq);
      o.conditions = parse_conditions(conds);
      const auto r = db->apply_schema_change(target, SchemaChangeOp::parse(op_text), o);
      std::cout << r.branch << "\t" << r.snapshot.hex() << "\t" << r.old_branch << "\t" << r.edge.value_or("-")
                << "\n";
    } else if (view_create->parsed()) {
      ViewOptions o;
      o.frequency = Frequency::parse(freq);
      o.conditions = parse_conditions(conds);
      const ViewDef def = ViewDef::parse(view_name + "|" + table + "|" + cols + "|" + where);
      std::cout << db->create_view(target, def, o).head.hex() << "\n";
    } else if (sync_attach->parsed()) {
      std::cout << db->attach_sync(a, b, bi ? SyncDirection::Bidirectional : SyncDirection::Unidirectional,
                                   Transform::identity(), parse_conditions(conds), Frequency::parse(freq))
                << "\n";
    } else if (sync_now->parsed()) {
      db->sync_now(edge_id);
    } else if (sync_detach->parsed()) {
      db->disassociate(edge_id, reason);
    } else if (sync_list->parsed()) {
      std::map<std::uint64_t, std::string> names;
      for (const auto& bi : db->branches()) names[bi.id] = bi.name;
      for (const auto& e : db->edges()) {
        std::cout << e.id << "\t" << names[e.source] << "\t" << names[e.target] << "\t"
                  << (e.direction == SyncDirection::Bidirectional ? "bi" : "uni") << "\t" << e.frequency.to_text()
                  << "\t" << (e.active ? "active" : "disassociated: " + e.reason) << "\n";
      }
    } else if (tick->parsed()) {
      std::uint64_t now = 0;
      try {
        now = tick_arg.starts_with("+") ? db->now() + std::stoull(tick_arg.substr(1)) : std::stoull(tick_arg);
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::Usage, "tick expects +N or N");
      }
      db->tick(now);
      std::cout << now << "\n";
    } else if (alerts->parsed()) {
      for (const auto& al : db->alerts()) {
        std::cout << al.tick << "\t" << al.edge_id << "\t" << escape_field(al.reason) << "\t" << al.summary.to_text()
                  << "\n";
      }
    } else if (stats->parsed()) {
      const StoreStats s = recount ? db->store().recount() : db->stats();
      std::cout << "unique_chunks\t" << s.unique_chunks << "\ntotal_bytes\t" << s.total_bytes << "\nvirtual_chunks\t"
                << s.virtual_chunks << "\n";
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "ldb: " << e.what() << "\n";
    return e.code() == ErrorCode::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "ldb: " << e.what() << "\n";
    return 1;
  }
}
