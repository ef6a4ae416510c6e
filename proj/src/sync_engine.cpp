#include <charconv>
#include <numeric>

#include "ldb/database.hpp"

namespace ldb {

namespace {

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error(ErrorCode::DecodingError, "manifest: bad number '" + s + "'");
  }
  return v;
}

const char* dir_text(bool forward) { return forward ? "fwd" : "rev"; }

}  // namespace

void Database::apply_sync_record(const std::vector<std::string>& f) {
  auto need = [&](std::size_t n) {
    if (f.size() < n) throw Error(ErrorCode::DecodingError, "manifest: short SYNC record");
  };
  need(3);
  if (f[1] == "ATTACH") {
    need(11);
    SyncEdge e;
    e.id = f[2];
    if (e.id != "e" + std::to_string(edges_.size() + 1)) {
      throw Error(ErrorCode::DecodingError, "manifest: edge ids out of order at " + e.id);
    }
    e.source = to_u64(f[3]);
    e.target = to_u64(f[4]);
    branch_by_id(e.source);
    branch_by_id(e.target);
    e.direction = f[5] == "bi" ? SyncDirection::Bidirectional : SyncDirection::Unidirectional;
    e.frequency = Frequency::parse(f[6]);
    if (f[7] != "-") {
      for (const auto& c : split(f[7], ';')) e.conditions.push_back(Condition::parse(c));
    }
    e.forward = Transform::parse(f[8]);
    if (f[9] != "-") e.reverse = Transform::parse(f[9]);
    e.last_fired_tick = to_u64(f[10]);
    edges_.push_back(std::move(e));
    return;
  }
  SyncEdge& e = edge_ref(f[2]);
  if (f[1] == "ENQUEUE") {
    need(6);
    QueuedChange q{ChunkId::from_hex(f[4]), ChunkId::from_hex(f[5])};
    (f[3] == "fwd" ? e.pending_forward : e.pending_reverse).push_back(q);
  } else if (f[1] == "FLUSH") {
    need(5);
    (f[3] == "fwd" ? e.pending_forward : e.pending_reverse).clear();
    e.last_fired_tick = to_u64(f[4]);
  } else if (f[1] == "DISASSOC") {
    need(4);
    e.active = false;
    e.reason = f[3];
    e.pending_forward.clear();
    e.pending_reverse.clear();
  } else if (f[1] == "REPOINT") {
    need(5);
    e.source = to_u64(f[3]);
    e.target = to_u64(f[4]);
    branch_by_id(e.source);
    branch_by_id(e.target);
  } else {
    throw Error(ErrorCode::DecodingError, "manifest: unknown SYNC record " + f[1]);
  }
}

SyncEdge& Database::edge_ref(const std::string& id) {
  for (auto& e : edges_) {
    if (e.id == id) return e;
  }
  throw Error(ErrorCode::NotFound, "no sync edge '" + id + "'");
}

SyncRole Database::role_of(std::uint64_t branch) const {
  SyncRole r = SyncRole::Free;
  for (const auto& e : edges_) {
    if (!e.active) continue;
    if (e.direction == SyncDirection::Unidirectional && e.target == branch) return SyncRole::UniTarget;
    if (e.direction == SyncDirection::Bidirectional && e.touches(branch)) r = SyncRole::BiPeer;
  }
  return r;
}

std::string Database::attach_sync(const std::string& source, const std::string& target, SyncDirection direction,
                                  const Transform& forward, std::vector<Condition> conditions, Frequency frequency) {
  std::unique_lock lock(mu_);
  const std::uint64_t s = branch_ref(source).id;
  const std::uint64_t t = branch_ref(target).id;
  return attach_locked(s, t, direction, forward, std::move(conditions), frequency);
}

std::string Database::attach_locked(std::uint64_t source, std::uint64_t target, SyncDirection direction,
                                    const Transform& forward, std::vector<Condition> conditions,
                                    Frequency frequency) {
  const Branch& s = branch_by_id(source);
  const Branch& t = branch_by_id(target);
  if (source == target) throw Error(ErrorCode::IllegalSyncTopology, "a branch cannot sync with itself");
  const bool bi = direction == SyncDirection::Bidirectional;
  if (role_of(target) == SyncRole::UniTarget) {
    throw Error(ErrorCode::IllegalSyncTopology,
                "branch " + t.name + " is already a unidirectional sync target" +
                    (bi ? " and cannot join a bidirectional sync" : " and accepts only one incoming edge"));
  }
  if (bi && role_of(source) == SyncRole::UniTarget) {
    throw Error(ErrorCode::IllegalSyncTopology,
                "branch " + s.name + " is a unidirectional sync target and cannot join a bidirectional sync");
  }
  if (!bi && role_of(target) == SyncRole::BiPeer) {
    throw Error(ErrorCode::IllegalSyncTopology,
                "branch " + t.name + " is a bidirectional peer and cannot become a unidirectional target");
  }
  // Reject edges that would close a cycle among active edges.
  std::map<std::uint64_t, std::uint64_t> parent;
  std::function<std::uint64_t(std::uint64_t)> find = [&](std::uint64_t x) {
    auto it = parent.find(x);
    if (it == parent.end() || it->second == x) return x;
    return it->second = find(it->second);
  };
  for (const auto& e : edges_) {
    if (e.active) parent[find(e.source)] = find(e.target);
  }
  if (find(source) == find(target)) {
    throw Error(ErrorCode::IllegalSyncTopology,
                "an edge between " + s.name + " and " + t.name + " would close a cycle of sync edges");
  }

  std::optional<Transform> reverse;
  if (bi) {
    if (!forward.permitted()) {
      throw Error(ErrorCode::NotBidirectionallyCompatible, "the forward transform is not available");
    }
    reverse = forward.inverse();
    if (!reverse) throw Error(ErrorCode::NotBidirectionallyCompatible, "the transform has no inverse");
  } else if (!forward.permitted()) {
    throw Error(ErrorCode::DirectionUnavailable, "the forward transform is not available");
  }
  const DatabaseSchema& src_schema = schema_ref(snap(s.head).schema);
  if (forward.kind == Transform::Kind::View) {
    const TableSchema* base = src_schema.find(forward.view.base_table);
    if (!base) throw Error(ErrorCode::ViewError, "source has no table " + forward.view.base_table);
    forward.view.validate(*base);
  }

  std::string conds;
  for (const auto& c : conditions) conds += (conds.empty() ? "" : ";") + c.to_text();
  const std::string id = "e" + std::to_string(edges_.size() + 1);
  emit({"SYNC", "ATTACH", id, std::to_string(source), std::to_string(target), bi ? "bi" : "uni", frequency.to_text(),
        conds.empty() ? "-" : conds, forward.to_text(), reverse ? reverse->to_text() : "-", std::to_string(now_)});
  return id;
}

void Database::on_commit(std::uint64_t branch, const SnapshotId& parent, const SnapshotId& child,
                         const DbDelta& delta, const ChangeSummary& summary,
                         const std::optional<std::string>& via_edge) {
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    SyncEdge& e = edges_[i];
    if (!e.active || !e.touches(branch)) continue;
    if (via_edge && e.id == *via_edge) continue;  // echo suppression
    const bool forward = e.source == branch;
    if (!forward && e.direction != SyncDirection::Bidirectional) continue;
    if (auto reason = evaluate_conditions(e.conditions, summary)) {
      disassociate_locked(e, *reason, summary);
      continue;
    }
    if (delta.empty()) continue;
    if (e.frequency.kind == Frequency::Kind::Immediate) {
      propagate(e, forward, delta, child, summary);
    } else {
      emit({"SYNC", "ENQUEUE", e.id, dir_text(forward), parent.hex(), child.hex()});
    }
  }
}

void Database::notify_schema_change(std::uint64_t branch, const std::optional<std::string>& skip_edge) {
  ChangeSummary summary;
  summary.is_schema_change = true;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    SyncEdge& e = edges_[i];
    if (!e.active || !e.touches(branch) || (skip_edge && e.id == *skip_edge)) continue;
    const bool forward = e.source == branch;
    if (!forward && e.direction != SyncDirection::Bidirectional) continue;
    if (auto reason = evaluate_conditions(e.conditions, summary)) disassociate_locked(e, *reason, summary);
  }
}

void Database::propagate(SyncEdge& e, bool forward, const DbDelta& delta, const SnapshotId& source_snapshot,
                         const ChangeSummary& summary) {
  try {
    const Transform& tr = forward ? e.forward : *e.reverse;
    const Snapshot& src = snap(source_snapshot);
    const DbDelta mapped = tr.apply(delta, schema_ref(src.schema));
    Branch& target = branch_by_id(forward ? e.target : e.source);
    const DbDelta net = reconcile(snap(target.head), mapped);
    if (net.empty()) return;
    EdgeAnnotation ann;
    ann.kind = EdgeKind::AutoPropagation;
    ann.description = "sync " + e.id + " " + dir_text(forward) + " from " + source_snapshot.hex();
    ann.provenance = Provenance{branch_by_id(forward ? e.source : e.target).name, "sync:" + e.id, 0};
    ann.source = source_snapshot;
    write_commit(target, net, ann, {}, e.id);
  } catch (const Error& err) {
    if (e.active) disassociate_locked(e, std::string("propagation failed: ") + err.what(), summary);
  }
}

void Database::flush(SyncEdge& e, bool forward, bool record_empty) {
  auto& queue = forward ? e.pending_forward : e.pending_reverse;
  if (queue.empty() && !record_empty) return;
  const std::vector<QueuedChange> items(queue.begin(), queue.end());
  DbDelta acc;
  ChangeSummary summary;
  if (!items.empty()) {
    for (const auto& q : items) compose_into(acc, diff_locked(q.parent, q.snapshot));
    summary = summarize(snap(items.front().parent), acc);
  }
  emit({"SYNC", "FLUSH", e.id, dir_text(forward), std::to_string(now_)});
  if (!acc.empty() && e.active) propagate(e, forward, acc, items.back().snapshot, summary);
}

void Database::sync_now(const std::string& edge_id) {
  std::unique_lock lock(mu_);
  SyncEdge& e = edge_ref(edge_id);
  if (!e.active) throw Error(ErrorCode::InvalidInput, "edge " + edge_id + " is disassociated: " + e.reason);
  flush(e, true, false);
  if (e.direction == SyncDirection::Bidirectional) flush(e, false, false);
}

void Database::tick(std::uint64_t now) {
  std::unique_lock lock(mu_);
  if (now < now_) throw Error(ErrorCode::InvalidInput, "ticks must not go backwards");
  emit({"TICK", std::to_string(now)});
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    SyncEdge& e = edges_[i];
    if (!e.active || e.frequency.kind != Frequency::Kind::Periodic) continue;
    if (now - e.last_fired_tick < e.frequency.period) continue;
    flush(e, true, true);
    if (e.direction == SyncDirection::Bidirectional && e.active) flush(e, false, true);
  }
}

std::uint64_t Database::now() const {
  std::shared_lock lock(mu_);
  return now_;
}

bool Database::needs_flush(std::uint64_t branch, std::set<std::uint64_t>& seen) const {
  if (!seen.insert(branch).second) return false;
  for (const auto& e : edges_) {
    if (!e.active || e.frequency.kind != Frequency::Kind::Deferred) continue;
    if (e.target == branch) {
      if (!e.pending_forward.empty() || needs_flush(e.source, seen)) return true;
    } else if (e.source == branch && e.direction == SyncDirection::Bidirectional) {
      if (!e.pending_reverse.empty() || needs_flush(e.target, seen)) return true;
    }
  }
  return false;
}

void Database::flush_deferred_into(std::uint64_t branch, std::set<std::uint64_t>& seen) {
  if (!seen.insert(branch).second) return;
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    SyncEdge& e = edges_[i];
    if (!e.active || e.frequency.kind != Frequency::Kind::Deferred) continue;
    if (e.target == branch) {
      flush_deferred_into(e.source, seen);
      flush(e, true, false);
    } else if (e.source == branch && e.direction == SyncDirection::Bidirectional) {
      flush_deferred_into(e.target, seen);
      flush(e, false, false);
    }
  }
}

void Database::flush_for(const std::string& target) {
  {
    std::shared_lock lock(mu_);
    auto it = names_.find(target);
    if (it == names_.end()) return;
    std::set<std::uint64_t> seen;
    if (!needs_flush(it->second, seen)) return;
  }
  std::unique_lock lock(mu_);
  auto it = names_.find(target);
  if (it == names_.end()) return;
  std::set<std::uint64_t> seen;
  flush_deferred_into(it->second, seen);
}

void Database::flush_before_read(const std::string& branch) {
  {
    std::shared_lock lock(mu_);
    branch_ref(branch);
  }
  flush_for(branch);
}

void Database::disassociate_locked(SyncEdge& e, const std::string& reason, const ChangeSummary& summary) {
  emit({"SYNC", "DISASSOC", e.id, reason});
  emit({"ALERT", std::to_string(now_), e.id, reason, summary.to_text()});
}

void Database::disassociate(const std::string& edge_id, const std::string& reason) {
  std::unique_lock lock(mu_);
  SyncEdge& e = edge_ref(edge_id);
  if (!e.active) throw Error(ErrorCode::InvalidInput, "edge " + edge_id + " is already disassociated");
  disassociate_locked(e, reason, ChangeSummary{});
}

SyncEdge Database::edge(const std::string& id) const {
  std::shared_lock lock(mu_);
  for (const auto& e : edges_) {
    if (e.id == id) return e;
  }
  throw Error(ErrorCode::NotFound, "no sync edge '" + id + "'");
}

std::vector<SyncEdge> Database::edges() const {
  std::shared_lock lock(mu_);
  return edges_;
}

std::vector<Alert> Database::alerts() const {
  std::shared_lock lock(mu_);
  return alerts_;
}

}  // namespace ldb
