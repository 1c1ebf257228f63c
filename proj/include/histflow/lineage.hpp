#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "histflow/error.hpp"
#include "histflow/trait_space.hpp"

namespace histflow {

struct Record {
  double time = 0.0;
  Trait trait;

  friend bool operator==(const Record&, const Record&) = default;
};

/// One birth record in a persistent ancestry chain. Children hold their
/// parent, so lineages of relatives share their common prefix.
struct LineageNode {
  double time = 0.0;
  Trait trait;
  /// First node of the constant piece this node belongs to. Walking
  /// piece starts visits only the jumps of the value function.
  const LineageNode* piece_start = nullptr;
  std::uint32_t depth = 1;
  mutable std::shared_ptr<const LineageNode> parent;

  LineageNode(double t, Trait x, std::shared_ptr<const LineageNode> up)
      : time(t), trait(std::move(x)), parent(std::move(up)) {
    if (parent) depth = parent->depth + 1;
    piece_start = (parent && parent->trait == trait) ? parent->piece_start : this;
  }

  LineageNode(const LineageNode&) = delete;
  LineageNode& operator=(const LineageNode&) = delete;

  // Unlink long chains iteratively so releasing a deep lineage does not
  // recurse once per ancestor.
  ~LineageNode() {
    auto up = std::move(parent);
    while (up && up.use_count() == 1) {
      auto next = std::move(up->parent);
      up = std::move(next);
    }
  }
};

/// Right-continuous step path in trait space, stored as birth records
/// (time, trait) with strictly increasing times starting at 0, plus an
/// optional stop time. Lineages are immutable values.
class Lineage {
 public:
  Lineage() = default;

  static Lineage constant(Trait x) {
    Lineage y;
    y.tip_ = std::make_shared<const LineageNode>(0.0, std::move(x), nullptr);
    return y;
  }

  static Lineage from_records(std::span<const Record> records,
                              std::optional<double> stop_time = std::nullopt) {
    if (records.empty() || records.front().time != 0.0)
      fail(ErrorKind::domain, "lineage records must start at time 0");
    Lineage y = constant(records.front().trait);
    for (std::size_t i = 1; i < records.size(); ++i)
      y = y.extended(records[i].time, records[i].trait);
    if (stop_time) {
      if (!(*stop_time >= 0.0)) fail(ErrorKind::domain, "stop time must be nonnegative");
      y = y.stopped(*stop_time);
    }
    return y;
  }

  bool empty() const noexcept { return !tip_; }
  const LineageNode* tip() const noexcept { return tip_.get(); }
  std::optional<double> stop_time() const noexcept { return stop_; }
  double last_time() const noexcept { return tip_->time; }
  const Trait& tip_trait() const noexcept { return tip_->trait; }
  std::size_t record_count() const noexcept { return tip_ ? tip_->depth : 0; }

  /// Start of the constant piece the path is in after its last record.
  double value_since() const noexcept { return tip_->piece_start->time; }

  /// Appends a birth record. Requires time > last_time() and an unstopped
  /// lineage.
  Lineage extended(double time, Trait trait) const {
    if (stop_) fail(ErrorKind::domain, "cannot extend a stopped lineage");
    if (!(time > tip_->time)) fail(ErrorKind::domain, "record times must be strictly increasing");
    Lineage y;
    y.tip_ = std::make_shared<const LineageNode>(time, std::move(trait), tip_);
    return y;
  }

  const Trait& eval(double t) const noexcept {
    const double s = stop_ ? std::min(t, *stop_) : t;
    const LineageNode* node = tip_.get();
    while (node->time > s) node = node->parent.get();
    return node->trait;
  }

  const Trait& left_limit(double t) const {
    if (!(t > 0.0)) fail(ErrorKind::domain, "left limit needs t > 0");
    if (stop_ && *stop_ < t) return eval(*stop_);
    const LineageNode* node = tip_.get();
    while (node->time >= t) node = node->parent.get();
    return node->trait;
  }

  Lineage stopped(double t) const {
    if (!(t >= 0.0)) fail(ErrorKind::domain, "stop time must be nonnegative");
    Lineage y;
    y.stop_ = stop_ ? std::min(*stop_, t) : t;
    y.tip_ = ancestor_at(*y.stop_);
    return y;
  }

  std::vector<Record> records() const {
    std::vector<Record> out;
    out.reserve(record_count());
    for (const LineageNode* n = tip_.get(); n; n = n->parent.get())
      out.push_back({n->time, n->trait});
    std::reverse(out.begin(), out.end());
    return out;
  }

  /// Deepest record at time <= t, shared with this lineage.
  std::shared_ptr<const LineageNode> ancestor_at(double t) const {
    std::shared_ptr<const LineageNode> node = tip_;
    while (node->time > t) node = node->parent;
    return node;
  }

  bool shares_storage_with(const Lineage& other) const noexcept {
    return tip_ == other.tip_ && stop_ == other.stop_;
  }

  /// Record-wise equality (clone records are significant).
  friend bool operator==(const Lineage& a, const Lineage& b) {
    if (a.stop_ != b.stop_) return false;
    const LineageNode* x = a.tip_.get();
    const LineageNode* y = b.tip_.get();
    while (x && y) {
      if (x == y) return true;
      if (x->time != y->time || !(x->trait == y->trait)) return false;
      x = x->parent.get();
      y = y->parent.get();
    }
    return x == y;
  }

 private:
  friend Lineage concat(const Lineage& y, double t, const Lineage& w);

  std::shared_ptr<const LineageNode> tip_;
  std::optional<double> stop_;
};

inline Lineage stop(const Lineage& y, double t) { return y.stopped(t); }

/// (y|t|w): y before t, then w shifted to start at t.
inline Lineage concat(const Lineage& y, double t, const Lineage& w) {
  if (!(t >= 0.0)) fail(ErrorKind::domain, "concatenation time must be nonnegative");
  auto records = w.records();
  Lineage out;
  if (t > 0.0) {
    const double limit = y.stop_time() ? std::min(*y.stop_time(), std::nextafter(t, 0.0))
                                       : std::nextafter(t, 0.0);
    out.tip_ = y.ancestor_at(limit);
    for (const auto& r : records) out = out.extended(r.time + t, r.trait);
  } else {
    out = Lineage::constant(records.front().trait);
    for (std::size_t i = 1; i < records.size(); ++i)
      out = out.extended(records[i].time, records[i].trait);
  }
  if (w.stop_time()) out = out.stopped(*w.stop_time() + t);
  return out;
}

inline Lineage concat(const Lineage& y, double t, const Trait& h) {
  return concat(y, t, Lineage::constant(h));
}

}  // namespace histflow
