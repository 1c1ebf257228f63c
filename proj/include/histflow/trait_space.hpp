#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <boost/container/small_vector.hpp>

#include "histflow/error.hpp"

namespace histflow {

/// A point of a trait space. Euclidean and interval points store their
/// coordinates; points of a finite space store the label index as a
/// single coordinate.
class Trait {
 public:
  using Storage = boost::container::small_vector<double, 3>;

  Trait() = default;
  explicit Trait(double x) : c_{x} {}
  Trait(std::initializer_list<double> xs) : c_(xs) {}
  explicit Trait(std::span<const double> xs) : c_(xs.begin(), xs.end()) {}

  static Trait label(std::size_t index) {
    return Trait(static_cast<double>(index));
  }

  std::size_t dim() const noexcept { return c_.size(); }
  double operator[](std::size_t i) const { return c_[i]; }
  double& operator[](std::size_t i) { return c_[i]; }
  std::span<const double> coords() const noexcept { return {c_.data(), c_.size()}; }
  std::size_t label_index() const { return static_cast<std::size_t>(c_.at(0)); }

  friend bool operator==(const Trait& a, const Trait& b) { return a.c_ == b.c_; }

 private:
  Storage c_;
};

enum class SpaceKind { euclidean, finite, interval };

/// Metric trait space: R^d, a closed interval, or a finite set with an
/// explicit symmetric distance table. Immutable after construction.
class TraitSpace {
 public:
  static TraitSpace euclidean(std::size_t dim) {
    if (dim == 0) fail(ErrorKind::invalid_config, "euclidean dimension must be positive", "space.dim");
    TraitSpace s;
    s.kind_ = SpaceKind::euclidean;
    s.dim_ = dim;
    return s;
  }

  static TraitSpace interval(double lo, double hi) {
    if (!(lo < hi)) fail(ErrorKind::invalid_config, "interval requires lo < hi", "space.lo");
    TraitSpace s;
    s.kind_ = SpaceKind::interval;
    s.dim_ = 1;
    s.lo_ = lo;
    s.hi_ = hi;
    return s;
  }

  /// `table` is row-major, size labels.size()^2.
  static TraitSpace finite(std::vector<std::string> labels,
                           std::vector<double> table) {
    const auto m = labels.size();
    if (m == 0) fail(ErrorKind::invalid_config, "finite space needs at least one point", "space.labels");
    if (table.size() != m * m)
      fail(ErrorKind::invalid_config, "distance table must be square with one row per label",
           "space.distances");
    TraitSpace s;
    s.kind_ = SpaceKind::finite;
    s.dim_ = 1;
    s.labels_ = std::move(labels);
    s.table_ = std::move(table);
    if (auto bad = s.metric_violation(); !bad.empty())
      fail(ErrorKind::invalid_config, "distance table is not a metric: " + bad, "space.distances");
    return s;
  }

  SpaceKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  /// True for spaces whose points are single real numbers, where the
  /// diameter of a set is max - min.
  bool is_scalar() const noexcept {
    return kind_ == SpaceKind::interval || (kind_ == SpaceKind::euclidean && dim_ == 1);
  }

  bool contains(const Trait& x) const noexcept {
    if (x.dim() != dim_) return false;
    switch (kind_) {
      case SpaceKind::euclidean:
        return std::all_of(x.coords().begin(), x.coords().end(),
                           [](double v) { return std::isfinite(v); });
      case SpaceKind::interval:
        return x[0] >= lo_ && x[0] <= hi_;
      case SpaceKind::finite: {
        const double v = x[0];
        return v >= 0 && v == std::floor(v) && v < static_cast<double>(labels_.size());
      }
    }
    return false;
  }

  void validate(const Trait& x) const {
    if (!contains(x)) fail(ErrorKind::invalid_point, "trait point does not belong to the space");
  }

  std::size_t label_index(const std::string& name) const {
    auto it = std::find(labels_.begin(), labels_.end(), name);
    if (it == labels_.end()) fail(ErrorKind::invalid_point, "unknown label '" + name + "'");
    return static_cast<std::size_t>(it - labels_.begin());
  }

  /// Distance without validation; callers inside hot loops use this.
  double distance_unchecked(const Trait& a, const Trait& b) const noexcept {
    switch (kind_) {
      case SpaceKind::finite:
        return table_[a.label_index() * labels_.size() + b.label_index()];
      case SpaceKind::interval:
        return std::abs(a[0] - b[0]);
      case SpaceKind::euclidean: {
        if (dim_ == 1) return std::abs(a[0] - b[0]);
        double acc = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
          const double d = a[i] - b[i];
          acc += d * d;
        }
        return std::sqrt(acc);
      }
    }
    return 0.0;
  }

  double distance(const Trait& a, const Trait& b) const {
    validate(a);
    validate(b);
    return distance_unchecked(a, b);
  }

  /// Describes the first metric axiom failure of a finite table, or
  /// returns an empty string. Checked exhaustively over all triples.
  std::string metric_violation() const {
    if (kind_ != SpaceKind::finite) return {};
    const auto m = labels_.size();
    auto d = [&](std::size_t i, std::size_t j) { return table_[i * m + j]; };
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (!(d(i, j) >= 0.0)) return "negative entry";
        if (d(i, j) != d(j, i)) return "asymmetric entry";
        if ((d(i, j) == 0.0) != (i == j)) return "zero off the diagonal or nonzero on it";
        for (std::size_t k = 0; k < m; ++k)
          if (d(i, k) > d(i, j) + d(j, k)) return "triangle inequality";
      }
    }
    return {};
  }

 private:
  TraitSpace() = default;

  SpaceKind kind_ = SpaceKind::euclidean;
  std::size_t dim_ = 1;
  double lo_ = 0.0;
  double hi_ = 0.0;
  std::vector<std::string> labels_;
  std::vector<double> table_;
};

enum class RegionKind { ball, box, all_points };

/// Closed compact region of a trait space.
struct CompactRegion {
  RegionKind kind = RegionKind::ball;
  Trait center;
  double radius = 0.0;
  std::vector<double> lo;
  std::vector<double> hi;

  static CompactRegion ball(Trait center, double radius) {
    if (!(radius >= 0.0)) fail(ErrorKind::domain, "ball radius must be nonnegative");
    CompactRegion r;
    r.kind = RegionKind::ball;
    r.center = std::move(center);
    r.radius = radius;
    return r;
  }

  static CompactRegion box(std::vector<double> lo, std::vector<double> hi) {
    if (lo.size() != hi.size() || lo.empty())
      fail(ErrorKind::domain, "box bounds must have matching nonzero length");
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (!(lo[i] <= hi[i])) fail(ErrorKind::domain, "box requires lo <= hi per coordinate");
    CompactRegion r;
    r.kind = RegionKind::box;
    r.lo = std::move(lo);
    r.hi = std::move(hi);
    return r;
  }

  static CompactRegion all_points() {
    CompactRegion r;
    r.kind = RegionKind::all_points;
    return r;
  }

  /// Membership with no validation of `x`.
  bool contains_unchecked(const TraitSpace& space, const Trait& x) const noexcept {
    switch (kind) {
      case RegionKind::ball:
        return space.distance_unchecked(center, x) <= radius;
      case RegionKind::box:
        for (std::size_t i = 0; i < lo.size(); ++i)
          if (x[i] < lo[i] || x[i] > hi[i]) return false;
        return true;
      case RegionKind::all_points:
        return true;
    }
    return false;
  }

  void check_compatible(const TraitSpace& space) const {
    switch (kind) {
      case RegionKind::ball:
        space.validate(center);
        break;
      case RegionKind::box:
        if (space.kind() == SpaceKind::finite || lo.size() != space.dim())
          fail(ErrorKind::invalid_point, "box region does not match the space");
        break;
      case RegionKind::all_points:
        if (space.kind() != SpaceKind::finite)
          fail(ErrorKind::invalid_point, "all-points region is only compact on finite spaces");
        break;
    }
  }
};

inline bool region_contains(const TraitSpace& space, const CompactRegion& region,
                            const Trait& x) {
  space.validate(x);
  region.check_compatible(space);
  return region.contains_unchecked(space, x);
}

}  // namespace histflow
