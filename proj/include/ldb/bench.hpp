#pragma once
// Deterministic workload generators and the storage experiments run on them.
//
// Every workload targets table "r" (id int64 key, c1 int64, c2 int64,
// c3 utf8 of 16 characters, c4 float64). Initial keys are spaced by
// kKeyStride so that mixed workloads can insert between existing rows.

#include <filesystem>
#include <string>
#include <vector>

#include "ldb/database.hpp"

namespace ldb::bench {

inline constexpr std::int64_t kKeyStride = 8;
inline constexpr std::size_t kPayloadChars = 16;

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  std::uint64_t below(std::uint64_t n) { return next() % n; }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

enum class WorkloadKind { AppendOnly, LocalizedUpdate, UniformUpdate, Mixed, AlternatingColumns };
enum class Layout { Row, Grouped };

const char* workload_name(WorkloadKind k);
WorkloadKind parse_workload(std::string_view text);
const char* layout_name(Layout l);

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::AppendOnly;
  std::size_t initial_rows = 10000;
  std::size_t commits = 100;
  std::size_t ops_per_commit = 200;
  std::size_t locality_span = 500;
  double insert_ratio = 0.4;
  double update_ratio = 0.4;
  double delete_ratio = 0.2;
  std::uint64_t seed = 42;
  // Batches are drawn from stream `stream`; specs sharing a seed share their
  // initial rows whatever the stream.
  std::uint64_t stream = 0;

  void validate() const;  // InvalidInput
};

struct Workload {
  std::vector<RowOp> initial;
  std::vector<std::vector<RowOp>> batches;
};

Workload gen_workload(const WorkloadSpec& spec);

/// Schema of table "r" in the given layout. Grouped splits c1,c2 from c3,c4.
DatabaseSchema bench_schema(Layout layout);

struct ReportLine {
  std::string experiment;
  std::string workload;
  std::string policy;  // "content" or "capacity"
  std::string layout;
  std::uint64_t unique_chunks = 0;
  std::uint64_t total_bytes = 0;
  double mean_chunk_entries = 0.0;
  double seconds = 0.0;
  std::uint64_t head_bytes = 0;  // bytes reachable from the final head(s)
  std::size_t branches = 1;
};

struct ExperimentReport {
  std::string experiment;
  std::vector<ReportLine> lines;
  std::vector<std::string> notes;

  const ReportLine& line(std::string_view workload, std::string_view policy, std::string_view layout = "row") const;
  /// Header plus one tab-separated line per configuration.
  std::string to_tsv() const;
  std::string to_table() const;
};

enum class Scale { Desk, Full };

struct ExperimentOptions {
  Scale scale = Scale::Desk;
  std::uint64_t seed = 42;
  // Content-mode target; 0 picks the scale default (desk 16, full 64). Desk
  // scale shrinks the table fivefold but keeps 200 ops per commit, so the
  // smaller target keeps the share of leaves touched per commit near the
  // full-scale share.
  std::uint32_t content_target = 0;
  std::uint32_t window = 4;
  std::vector<WorkloadKind> workloads;  // E1 only; empty runs all four
  bool keep_stores = true;              // false removes each store after measuring
};

/// Runs "E1", "E2" or "E3" under `root`, which must be absent or empty
/// (RefusingToOverwrite otherwise). Writes `root/report.tsv`.
ExperimentReport run_experiment(const std::string& name, const std::filesystem::path& root,
                                const ExperimentOptions& options = {});

/// Capacity target matching the realized mean span of `content` over the
/// initial rows of `spec`.
std::uint32_t calibrate_capacity(const WorkloadSpec& spec, const ChunkingPolicy& content);

/// Mean entries per leaf chunk over every group tree of `table` at `id`.
double mean_leaf_entries(Database& db, const SnapshotId& id, const std::string& table);

/// Payload bytes of the distinct chunks reachable from the given snapshots.
std::uint64_t reachable_bytes(Database& db, const std::vector<SnapshotId>& ids);

}  // namespace ldb::bench
