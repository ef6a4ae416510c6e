#include "ldb/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_set>

namespace ldb::bench {

namespace fs = std::filesystem;

namespace {

constexpr const char* kTable = "r";

std::vector<std::pair<std::string, Value>> random_values(SplitMix64& rng, bool first_pair, bool second_pair) {
  std::vector<std::pair<std::string, Value>> v;
  if (first_pair) {
    v.emplace_back("c1", Value::int64(static_cast<std::int64_t>(rng.below(1000000000))));
    v.emplace_back("c2", Value::int64(static_cast<std::int64_t>(rng.below(1000000000))));
  }
  if (second_pair) {
    std::string s(kPayloadChars, 'a');
    for (auto& ch : s) ch = static_cast<char>('a' + rng.below(26));
    v.emplace_back("c3", Value::utf8(std::move(s)));
    v.emplace_back("c4", Value::float64(std::round(rng.unit() * 1e6) / 1e3));
  }
  return v;
}

RowOp insert_row(SplitMix64& rng, std::int64_t key) {
  return RowOp::insert(kTable, Value::int64(key), random_values(rng, true, true));
}

// Distinct positions in [lo, lo + width), `count` of them, in random order.
std::vector<std::size_t> sample_positions(SplitMix64& rng, std::size_t lo, std::size_t width, std::size_t count) {
  count = std::min(count, width);
  std::vector<std::size_t> out;
  if (count * 4 >= width) {
    std::vector<std::size_t> all(width);
    for (std::size_t i = 0; i < width; ++i) all[i] = lo + i;
    for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.below(width - i)]);
    all.resize(count);
    return all;
  }
  std::unordered_set<std::size_t> seen;
  while (out.size() < count) {
    const std::size_t p = lo + rng.below(width);
    if (seen.insert(p).second) out.push_back(p);
  }
  return out;
}

class Generator {
 public:
  explicit Generator(const WorkloadSpec& spec) : spec_(spec), rng_(spec.seed) {}

  Workload run() {
    Workload w;
    for (std::size_t i = 0; i < spec_.initial_rows; ++i) {
      const std::int64_t k = static_cast<std::int64_t>(i) * kKeyStride;
      w.initial.push_back(insert_row(rng_, k));
      keys_.push_back(k);
    }
    rng_ = SplitMix64(spec_.seed ^ (0xD1B54A32D192ED03ULL * (spec_.stream + 1)));
    for (std::size_t c = 1; c <= spec_.commits; ++c) w.batches.push_back(batch(c));
    return w;
  }

 private:
  std::int64_t max_key() const { return keys_.empty() ? -kKeyStride : keys_.back(); }

  std::vector<RowOp> updates(const std::vector<std::size_t>& positions, bool first, bool second) {
    std::vector<RowOp> ops;
    for (std::size_t p : positions) {
      ops.push_back(RowOp::update(kTable, Value::int64(keys_[p]), random_values(rng_, first, second)));
    }
    return ops;
  }

  std::vector<RowOp> batch(std::size_t commit) {
    const std::size_t n = spec_.ops_per_commit;
    switch (spec_.kind) {
      case WorkloadKind::AppendOnly: {
        std::vector<RowOp> ops;
        for (std::size_t i = 0; i < n; ++i) {
          const std::int64_t k = max_key() + kKeyStride;
          ops.push_back(insert_row(rng_, k));
          keys_.push_back(k);
        }
        return ops;
      }
      case WorkloadKind::LocalizedUpdate: {
        const std::size_t span = std::min(spec_.locality_span, keys_.size());
        const std::size_t anchor = rng_.below(keys_.size() - span + 1);
        return updates(sample_positions(rng_, anchor, span, n), true, true);
      }
      case WorkloadKind::UniformUpdate:
        return updates(sample_positions(rng_, 0, keys_.size(), n), true, true);
      case WorkloadKind::AlternatingColumns: {
        const bool odd = commit % 2 == 1;
        return updates(sample_positions(rng_, 0, keys_.size(), n), odd, !odd);
      }
      case WorkloadKind::Mixed: return mixed(n);
    }
    return {};
  }

  std::vector<RowOp> mixed(std::size_t n) {
    std::vector<RowOp> ops;
    std::set<std::int64_t> used;
    auto pick_existing = [&]() -> std::optional<std::size_t> {
      if (used.size() >= keys_.size()) return std::nullopt;
      for (;;) {
        const std::size_t p = rng_.below(keys_.size());
        if (!used.count(keys_[p])) return p;
      }
    };
    while (ops.size() < n) {
      const double r = rng_.unit();
      std::optional<std::size_t> p;
      if (r >= spec_.insert_ratio) p = pick_existing();
      if (!p) {
        // Insert at a free key anywhere below the current maximum plus one stride.
        const std::uint64_t range = static_cast<std::uint64_t>(max_key() + 2 * kKeyStride);
        std::int64_t k;
        do {
          k = static_cast<std::int64_t>(rng_.below(range));
        } while (used.count(k) || std::binary_search(keys_.begin(), keys_.end(), k));
        ops.push_back(insert_row(rng_, k));
        keys_.insert(std::lower_bound(keys_.begin(), keys_.end(), k), k);
        used.insert(k);
      } else if (r < spec_.insert_ratio + spec_.update_ratio) {
        used.insert(keys_[*p]);
        ops.push_back(RowOp::update(kTable, Value::int64(keys_[*p]), random_values(rng_, true, true)));
      } else {
        used.insert(keys_[*p]);
        ops.push_back(RowOp::erase(kTable, Value::int64(keys_[*p])));
        keys_.erase(keys_.begin() + static_cast<std::ptrdiff_t>(*p));
      }
    }
    return ops;
  }

  WorkloadSpec spec_;
  SplitMix64 rng_;
  std::vector<std::int64_t> keys_;  // sorted
};

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string policy_label(const ChunkingPolicy& p) { return p.mode == ChunkMode::Content ? "content" : "capacity"; }

struct Sizes {
  std::size_t rows;
  std::size_t commits;
  std::size_t branch_commits;
  std::uint32_t content_target;
};

Sizes sizes(Scale s) { return s == Scale::Full ? Sizes{50000, 500, 250, 64} : Sizes{10000, 100, 50, 16}; }

void commit_all(Database& db, const std::string& branch, const Workload& w, bool with_initial) {
  if (with_initial) db.commit(branch, w.initial);
  for (const auto& b : w.batches) db.commit(branch, b);
}

ReportLine measure(Database& db, const std::string& experiment, const std::string& workload, Layout layout,
                   const std::vector<SnapshotId>& heads, double seconds) {
  ReportLine line;
  line.experiment = experiment;
  line.workload = workload;
  line.policy = policy_label(db.policy());
  line.layout = layout_name(layout);
  const StoreStats s = db.stats();
  line.unique_chunks = s.unique_chunks;
  line.total_bytes = s.total_bytes;
  double sum = 0;
  for (const auto& h : heads) sum += mean_leaf_entries(db, h, kTable);
  line.mean_chunk_entries = heads.empty() ? 0.0 : sum / static_cast<double>(heads.size());
  line.seconds = seconds;
  line.head_bytes = reachable_bytes(db, heads);
  line.branches = heads.size();
  return line;
}

void finish_store(std::unique_ptr<Database>& db, const fs::path& dir, bool keep) {
  db.reset();
  if (!keep) fs::remove_all(dir);
}

}  // namespace

const char* workload_name(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::AppendOnly: return "append-only";
    case WorkloadKind::LocalizedUpdate: return "localized-update";
    case WorkloadKind::UniformUpdate: return "uniform-update";
    case WorkloadKind::Mixed: return "mixed";
    case WorkloadKind::AlternatingColumns: return "alternating-columns";
  }
  return "?";
}

WorkloadKind parse_workload(std::string_view text) {
  for (auto k : {WorkloadKind::AppendOnly, WorkloadKind::LocalizedUpdate, WorkloadKind::UniformUpdate,
                 WorkloadKind::Mixed, WorkloadKind::AlternatingColumns}) {
    if (text == workload_name(k)) return k;
  }
  throw Error(ErrorCode::InvalidInput, "unknown workload '" + std::string(text) + "'");
}

const char* layout_name(Layout l) { return l == Layout::Row ? "row" : "grouped"; }

void WorkloadSpec::validate() const {
  if (initial_rows == 0 && kind != WorkloadKind::AppendOnly && kind != WorkloadKind::Mixed) {
    throw Error(ErrorCode::InvalidInput, "update workloads need initial rows");
  }
  if (commits == 0 || ops_per_commit == 0 || locality_span == 0) {
    throw Error(ErrorCode::InvalidInput, "workload counts must be positive");
  }
  if (insert_ratio < 0 || update_ratio < 0 || delete_ratio < 0 ||
      std::abs(insert_ratio + update_ratio + delete_ratio - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidInput, "mix ratios must be non-negative and sum to 1");
  }
  if (kind != WorkloadKind::Mixed && kind != WorkloadKind::AppendOnly && ops_per_commit > initial_rows) {
    throw Error(ErrorCode::InvalidInput, "more updates per commit than rows");
  }
}

Workload gen_workload(const WorkloadSpec& spec) {
  spec.validate();
  return Generator(spec).run();
}

DatabaseSchema bench_schema(Layout layout) {
  const std::string groups = layout == Layout::Row ? "" : " groups=[c1,c2|c3,c4]";
  return DatabaseSchema::parse("table r (id:int64, c1:int64, c2:int64, c3:utf8, c4:float64) pk=id" + groups + "\n");
}

const ReportLine& ExperimentReport::line(std::string_view workload, std::string_view policy,
                                         std::string_view layout) const {
  for (const auto& l : lines) {
    if (l.workload == workload && l.policy == policy && l.layout == layout) return l;
  }
  throw Error(ErrorCode::NotFound, "no report line for " + std::string(workload) + "/" + std::string(policy) + "/" +
                                       std::string(layout));
}

std::string ExperimentReport::to_tsv() const {
  std::string out = "experiment\tworkload\tpolicy\tlayout\tunique_chunks\ttotal_bytes\tmean_chunk_entries\tseconds\n";
  for (const auto& l : lines) {
    out += l.experiment + "\t" + l.workload + "\t" + l.policy + "\t" + l.layout + "\t" +
           std::to_string(l.unique_chunks) + "\t" + std::to_string(l.total_bytes) + "\t" +
           fixed(l.mean_chunk_entries, 2) + "\t" + fixed(l.seconds, 3) + "\n";
  }
  return out;
}

std::string ExperimentReport::to_table() const {
  std::ostringstream o;
  o << std::left << std::setw(4) << "exp" << std::setw(21) << "workload" << std::setw(10) << "policy"
    << std::setw(9) << "layout" << std::right << std::setw(9) << "branches" << std::setw(14) << "unique_chunks"
    << std::setw(14) << "total_bytes" << std::setw(12) << "head_bytes" << std::setw(14) << "mean_entries"
    << std::setw(9) << "seconds" << "\n";
  for (const auto& l : lines) {
    o << std::left << std::setw(4) << l.experiment << std::setw(21) << l.workload << std::setw(10) << l.policy
      << std::setw(9) << l.layout << std::right << std::setw(9) << l.branches << std::setw(14) << l.unique_chunks
      << std::setw(14) << l.total_bytes << std::setw(12) << l.head_bytes << std::setw(14)
      << fixed(l.mean_chunk_entries, 2) << std::setw(9) << fixed(l.seconds, 2) << "\n";
  }
  for (const auto& n : notes) o << n << "\n";
  return o.str();
}

std::uint32_t calibrate_capacity(const WorkloadSpec& spec, const ChunkingPolicy& content) {
  std::vector<Entry> entries;
  entries.reserve(spec.initial_rows);
  for (std::size_t i = 0; i < spec.initial_rows; ++i) {
    entries.push_back({encode_key(Value::int64(static_cast<std::int64_t>(i) * kKeyStride), ColumnType::Int64), {}});
  }
  const SpanStats s = expected_span_stats(entries, content);
  return std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(s.mean)));
}

double mean_leaf_entries(Database& db, const SnapshotId& id, const std::string& table) {
  const TableSchema t = db.schema(db.snapshot(id).schema).table(table);
  const auto trees = db.table_trees(id, table);
  std::uint64_t entries = 0, leaves = 0;
  for (std::size_t g = 0; g < trees.size(); ++g) {
    ColumnarLeafCodec codec(t.group_schema(g));
    ProllyTree tree(db.store(), codec);
    entries += trees[g].entry_count;
    leaves += tree.leaf_count(trees[g]);
  }
  return leaves ? static_cast<double>(entries) / static_cast<double>(leaves) : 0.0;
}

std::uint64_t reachable_bytes(Database& db, const std::vector<SnapshotId>& ids) {
  std::unordered_set<ChunkId, ChunkIdHash> seen;
  std::uint64_t bytes = 0;
  for (const auto& id : ids) {
    const Snapshot s = db.snapshot(id);
    const DatabaseSchema schema = db.schema(s.schema);
    for (const auto& ts : s.tables) {
      const TableSchema& t = schema.table(ts.name);
      const auto trees = db.table_trees(id, ts.name);
      for (std::size_t g = 0; g < trees.size(); ++g) {
        ColumnarLeafCodec codec(t.group_schema(g));
        ProllyTree tree(db.store(), codec);
        for (const auto& c : tree.reachable(trees[g])) {
          if (seen.insert(c).second) bytes += db.store().get(c).payload->size();
        }
      }
    }
  }
  return bytes;
}

ExperimentReport run_experiment(const std::string& name, const fs::path& root, const ExperimentOptions& options) {
  if (name != "E1" && name != "E2" && name != "E3") {
    throw Error(ErrorCode::InvalidInput, "unknown experiment '" + name + "' (expected E1, E2 or E3)");
  }
  if (fs::exists(root) && !(fs::is_directory(root) && fs::is_empty(root))) {
    throw Error(ErrorCode::RefusingToOverwrite, root.string() + " is not empty");
  }
  fs::create_directories(root);
  const Sizes sz = sizes(options.scale);
  const std::uint32_t target = options.content_target ? options.content_target : sz.content_target;
  const ChunkingPolicy content = ChunkingPolicy::content(target, options.window);

  WorkloadSpec base;
  base.initial_rows = sz.rows;
  base.commits = sz.commits;
  base.seed = options.seed;
  const ChunkingPolicy capacity = ChunkingPolicy::capacity(calibrate_capacity(base, content));

  ExperimentReport report;
  report.experiment = name;
  report.notes.push_back("calibration: " + content.to_string() + " -> " + capacity.to_string());

  auto run_one = [&](const std::string& workload, Layout layout, const ChunkingPolicy& policy,
                     const std::function<std::vector<SnapshotId>(Database&)>& body) {
    const fs::path dir = root / (workload + "-" + policy_label(policy) + "-" + layout_name(layout));
    const auto t0 = std::chrono::steady_clock::now();
    auto db = Database::init(dir, bench_schema(layout), policy);
    const auto heads = body(*db);
    const double secs = seconds_since(t0);
    report.lines.push_back(measure(*db, name, workload, layout, heads, secs));
    finish_store(db, dir, options.keep_stores);
  };

  if (name == "E1") {
    std::vector<WorkloadKind> kinds = options.workloads;
    if (kinds.empty()) {
      kinds = {WorkloadKind::AppendOnly, WorkloadKind::LocalizedUpdate, WorkloadKind::UniformUpdate,
               WorkloadKind::Mixed};
    }
    for (auto kind : kinds) {
      WorkloadSpec spec = base;
      spec.kind = kind;
      const Workload w = gen_workload(spec);
      for (const auto& policy : {content, capacity}) {
        run_one(workload_name(kind), Layout::Row, policy, [&](Database& db) {
          commit_all(db, "main", w, true);
          return std::vector<SnapshotId>{db.branch("main").head};
        });
      }
    }
  } else if (name == "E2") {
    constexpr std::size_t kBranches = 5;
    std::vector<Workload> per_branch;
    for (std::size_t b = 0; b < kBranches; ++b) {
      WorkloadSpec spec = base;
      spec.kind = WorkloadKind::Mixed;
      spec.commits = sz.branch_commits;
      spec.stream = b + 1;
      per_branch.push_back(gen_workload(spec));
    }
    for (const auto& policy : {content, capacity}) {
      run_one("mixed", Layout::Row, policy, [&](Database& db) {
        db.commit("main", per_branch[0].initial);
        std::vector<SnapshotId> heads;
        for (std::size_t b = 0; b < kBranches; ++b) {
          const std::string branch = "b" + std::to_string(b + 1);
          db.create_branch(branch, "main");
          commit_all(db, branch, per_branch[b], false);
          heads.push_back(db.branch(branch).head);
        }
        return heads;
      });
    }
  } else {
    WorkloadSpec spec = base;
    spec.kind = WorkloadKind::AlternatingColumns;
    const Workload w = gen_workload(spec);
    for (const auto& policy : {content, capacity}) {
      for (auto layout : {Layout::Row, Layout::Grouped}) {
        run_one(workload_name(spec.kind), layout, policy, [&](Database& db) {
          commit_all(db, "main", w, true);
          return std::vector<SnapshotId>{db.branch("main").head};
        });
      }
    }
    for (const char* p : {"content", "capacity"}) {
      const double row = static_cast<double>(report.line(workload_name(spec.kind), p, "row").total_bytes);
      const double grouped = static_cast<double>(report.line(workload_name(spec.kind), p, "grouped").total_bytes);
      report.notes.push_back(std::string("reduction ") + p + ": " + fixed(100.0 * (row - grouped) / row, 2) + "%");
    }
  }

  std::ofstream out(root / "report.tsv", std::ios::binary | std::ios::trunc);
  out << report.to_tsv();
  if (!out) throw Error(ErrorCode::Io, "cannot write " + (root / "report.tsv").string());
  return report;
}

}  // namespace ldb::bench
