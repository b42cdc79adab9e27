#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rssp/error.hpp"
#include "rssp/instance.hpp"
#include "rssp/mitm.hpp"
#include "rssp/rng.hpp"

namespace rssp {

// ---------------------------------------------------------------------------
// Bounded taking

struct BoundedOptions {
  SplitRule split = SplitRule::log_width(4.0);
  PhaseAVariant variant = PhaseAVariant::bucket_random;
  bool reconstruct = false;
};

struct BoundedResult {
  MitmResult result;
  std::uint32_t cardinality = 0;
  std::optional<IndexSet> subset;
};

/// MITM restricted to subsets of at most k items. Every candidate carries its
/// cardinality and include branches past k are dropped. With T = 0 the empty
/// subset is not an answer. No symmetrization is applied, since sign flips
/// would change which items count toward k. For k >= n the constraint is slack
/// and the unconstrained engine runs unchanged.
inline BoundedResult bounded_mitm_solve(const Instance& inst, std::size_t w, std::uint32_t k, std::uint64_t seed,
                                        const BoundedOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  if (k < 1) throw invalid_argument("infeasible: cardinality budget k must be >= 1");
  if (inst.size() < 2) throw invalid_argument("bounded_mitm_solve needs n >= 2");

  detail::EngineOptions eo;
  eo.variant = opt.variant;
  eo.reconstruct = opt.reconstruct;
  eo.require_nonempty = inst.T == 0;
  if (k < inst.size()) {
    eo.budget = k;
    eo.card_aware = true;
  }
  const std::size_t n_left = split_point(inst.size(), w, opt.split);

  BoundedResult out;
  out.result = detail::run_mitm_engine(inst.items, inst.T, inst.B, w, n_left, seed, eo);
  out.cardinality = out.result.cardinality;
  if (opt.reconstruct) {
    out.subset = mitm_reconstruct(inst, out.result);
    if (out.subset->size() != out.cardinality) {
      throw unreachable_sum("reconstructed cardinality differs from the tracked one");
    }
  }
  out.result.elapsed_ns =
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Vector subset sum

inline constexpr std::size_t max_dimension = 8;

/// Integer point; coordinates past the instance dimension stay zero.
struct Point {
  std::array<std::int64_t, max_dimension> c{};

  friend bool operator==(const Point&, const Point&) = default;
  friend auto operator<=>(const Point&, const Point&) = default;
};

using u128 = unsigned __int128;

namespace detail {

inline Point add(const Point& a, const Point& b, std::size_t d) {
  Point out;
  for (std::size_t j = 0; j < d; ++j) out.c[j] = checked_add(a.c[j], b.c[j]);
  return out;
}

inline Point sub(const Point& a, const Point& b, std::size_t d) {
  Point out;
  for (std::size_t j = 0; j < d; ++j) out.c[j] = checked_sub(a.c[j], b.c[j]);
  return out;
}

inline u128 squared_distance(const Point& a, const Point& b, std::size_t d) {
  constexpr __int128 limit = static_cast<__int128>(1) << 62;
  u128 total = 0;
  for (std::size_t j = 0; j < d; ++j) {
    const __int128 diff = static_cast<__int128>(a.c[j]) - b.c[j];
    if (diff >= limit || diff <= -limit) throw overflow_error("squared distance overflow");
    const auto ad = static_cast<u128>(diff < 0 ? -diff : diff);
    total += ad * ad;
  }
  return total;
}

inline std::string to_decimal(u128 v) {
  if (v == 0) return "0";
  std::string s;
  while (v > 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  return {s.rbegin(), s.rend()};
}

}  // namespace detail

struct VectorInstance {
  std::size_t d = 1;
  std::int64_t B = 1;
  std::vector<Point> vectors;
  Point target;
  std::optional<IndexSet> planted;

  std::size_t size() const { return vectors.size(); }

  void validate() const {
    if (d == 0) throw invalid_argument("vector dimension d must be >= 1");
    if (d > max_dimension) throw invalid_argument("vector dimension d must be <= 8");
    if (B < 1) throw invalid_argument("bound B must be >= 1");
    for (const auto& v : vectors) {
      for (std::size_t j = 0; j < max_dimension; ++j) {
        if (j >= d ? v.c[j] != 0 : (v.c[j] > B || v.c[j] < -B)) {
          throw invalid_argument("vector coordinate outside [-B, B]");
        }
      }
    }
    if (planted) {
      Point s;
      for (std::size_t i : *planted) s = detail::add(s, vectors.at(i), d);
      if (s != target) throw invalid_argument("planted subset does not sum to the target");
    }
  }
};

inline void to_json(nlohmann::json& j, const VectorInstance& v) {
  auto row = [&v](const Point& p) { return std::vector<std::int64_t>(p.c.begin(), p.c.begin() + static_cast<std::ptrdiff_t>(v.d)); };
  nlohmann::json vecs = nlohmann::json::array();
  for (const auto& p : v.vectors) vecs.push_back(row(p));
  j = nlohmann::json{{"d", v.d}, {"B", v.B}, {"target", row(v.target)}, {"vectors", std::move(vecs)}};
  if (v.planted) j["planted"] = *v.planted;
}

inline void from_json(const nlohmann::json& j, VectorInstance& v) {
  v = VectorInstance{};
  v.d = j.at("d").get<std::size_t>();
  v.B = j.at("B").get<std::int64_t>();
  if (v.d == 0 || v.d > max_dimension) throw invalid_argument("vector dimension d must be in [1, 8]");
  auto point = [&v](const nlohmann::json& a) {
    const auto xs = a.get<std::vector<std::int64_t>>();
    if (xs.size() != v.d) throw invalid_argument("vector arity does not match d");
    Point p;
    std::copy(xs.begin(), xs.end(), p.c.begin());
    return p;
  };
  v.target = point(j.at("target"));
  for (const auto& a : j.at("vectors")) v.vectors.push_back(point(a));
  if (j.contains("planted") && !j.at("planted").is_null()) v.planted = j.at("planted").get<IndexSet>();
  v.validate();
}

/// n vectors with i.i.d. coordinates from `spec` and a planted random-subset
/// target. For d = 1 this reproduces generate_instance on the same seed.
inline VectorInstance make_vector_instance(const DistributionSpec& spec, std::size_t n, std::size_t d,
                                           std::uint64_t seed) {
  if (d == 0 || d > max_dimension) throw invalid_argument("vector dimension d must be in [1, 8]");
  VectorInstance v;
  v.d = d;
  v.B = spec.B;
  const auto coords = sample_items(spec, n * d, derive_seed(seed, stream::instance));
  v.vectors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) v.vectors[i].c[j] = coords[i * d + j];
  }
  Rng rng(derive_seed(seed, stream::target));
  IndexSet planted;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.coin()) {
      planted.push_back(i);
      v.target = detail::add(v.target, v.vectors[i], d);
    }
  }
  v.planted = std::move(planted);
  return v;
}

enum class NearestIndexKind { automatic, linear, grid, kdtree };

inline NearestIndexKind parse_nearest_index(std::string_view s) {
  if (s == "auto") return NearestIndexKind::automatic;
  if (s == "linear") return NearestIndexKind::linear;
  if (s == "grid") return NearestIndexKind::grid;
  if (s == "kdtree") return NearestIndexKind::kdtree;
  throw invalid_argument("unknown nearest-residual index '" + std::string(s) + "'");
}

/// Exact nearest-point queries in squared Euclidean distance. Equidistant
/// points resolve to the lexicographically smaller one.
class PointIndex {
 public:
  struct Hit {
    u128 dist2 = ~u128{0};
    std::size_t id = 0;
    Point point;
    bool found = false;
  };

  PointIndex(std::vector<Point> points, std::size_t d, NearestIndexKind kind, std::int64_t cell_hint)
      : pts_(std::move(points)), d_(d), kind_(kind) {
    if (kind_ == NearestIndexKind::automatic) kind_ = pts_.size() > 32 ? NearestIndexKind::grid : NearestIndexKind::linear;
    if (kind_ == NearestIndexKind::grid) build_grid(cell_hint);
    if (kind_ == NearestIndexKind::kdtree) build_kdtree();
  }

  std::size_t size() const { return pts_.size(); }
  NearestIndexKind kind() const { return kind_; }

  Hit nearest(const Point& q) const {
    switch (kind_) {
      case NearestIndexKind::grid: return nearest_grid(q);
      case NearestIndexKind::kdtree: {
        Hit h;
        if (!pts_.empty()) kd_search(root_, q, h);
        return h;
      }
      default: return nearest_linear(q);
    }
  }

  Hit nearest_linear(const Point& q) const {
    Hit h;
    for (std::size_t i = 0; i < pts_.size(); ++i) consider(i, q, h);
    return h;
  }

 private:
  void consider(std::size_t i, const Point& q, Hit& h) const {
    const u128 d2 = detail::squared_distance(pts_[i], q, d_);
    if (!h.found || d2 < h.dist2 || (d2 == h.dist2 && pts_[i] < h.point)) h = {d2, i, pts_[i], true};
  }

  // Dense uniform grid over the bounding box, about one point per cell.
  void build_grid(std::int64_t cell_hint) {
    if (pts_.empty()) return;
    lo_ = hi_ = pts_.front();
    for (const auto& p : pts_) {
      for (std::size_t j = 0; j < d_; ++j) {
        lo_.c[j] = std::min(lo_.c[j], p.c[j]);
        hi_.c[j] = std::max(hi_.c[j], p.c[j]);
      }
    }
    std::int64_t extent = 1;
    for (std::size_t j = 0; j < d_; ++j) extent = std::max(extent, hi_.c[j] - lo_.c[j] + 1);
    const auto per_axis = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::ceil(std::pow(static_cast<double>(pts_.size()), 1.0 / static_cast<double>(d_)))));
    cell_ = std::max<std::int64_t>({1, cell_hint, (extent + per_axis - 1) / per_axis});
    std::size_t total = 1;
    for (std::size_t j = 0; j < d_; ++j) {
      dims_[j] = (hi_.c[j] - lo_.c[j]) / cell_ + 1;
      stride_[j] = total;
      total *= static_cast<std::size_t>(dims_[j]);
    }
    cell_start_.assign(total + 1, 0);
    std::vector<std::size_t> flat(pts_.size());
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      std::size_t f = 0;
      for (std::size_t j = 0; j < d_; ++j) f += static_cast<std::size_t>((pts_[i].c[j] - lo_.c[j]) / cell_) * stride_[j];
      flat[i] = f;
      ++cell_start_[f + 1];
    }
    for (std::size_t c = 0; c < total; ++c) cell_start_[c + 1] += cell_start_[c];
    cell_ids_.resize(pts_.size());
    std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
    for (std::size_t i = 0; i < pts_.size(); ++i) cell_ids_[fill[flat[i]]++] = i;
  }

  // Rings of cells around the query's (clamped) home cell. After ring r every
  // unvisited point is at least `bound` away; stop once that exceeds the best.
  Hit nearest_grid(const Point& q) const {
    Hit h;
    if (pts_.empty()) return h;
    std::array<std::int64_t, max_dimension> home{};
    std::array<u128, max_dimension> out2{};
    u128 base = 0;
    std::int64_t max_r = 0;
    for (std::size_t j = 0; j < d_; ++j) {
      const __int128 off = static_cast<__int128>(q.c[j]) - lo_.c[j];
      home[j] = static_cast<std::int64_t>(std::clamp<__int128>(off < 0 ? -1 : off / cell_, 0, dims_[j] - 1));
      __int128 gap = 0;
      if (q.c[j] < lo_.c[j]) gap = static_cast<__int128>(lo_.c[j]) - q.c[j];
      if (q.c[j] > hi_.c[j]) gap = static_cast<__int128>(q.c[j]) - hi_.c[j];
      out2[j] = static_cast<u128>(gap) * static_cast<u128>(gap);
      base += out2[j];
      max_r = std::max({max_r, home[j], dims_[j] - 1 - home[j]});
    }
    std::array<std::int64_t, max_dimension> cur{};
    for (std::int64_t r = 0; r <= max_r; ++r) {
      visit_ring(home, r, 0, false, 0, cur, q, h);
      bool remaining = false;
      u128 bound = ~u128{0};
      for (std::size_t j = 0; j < d_; ++j) {
        std::optional<u128> g2;
        if (home[j] - r - 1 >= 0) {
          const __int128 top = static_cast<__int128>(lo_.c[j]) + static_cast<__int128>(home[j] - r) * cell_ - 1;
          const auto g = static_cast<u128>(q.c[j] - top);
          g2 = g * g;
        }
        if (home[j] + r + 1 <= dims_[j] - 1) {
          const __int128 bottom = static_cast<__int128>(lo_.c[j]) + static_cast<__int128>(home[j] + r + 1) * cell_;
          const auto g = static_cast<u128>(bottom - q.c[j]);
          g2 = std::min(g2.value_or(~u128{0}), g * g);
        }
        if (!g2) continue;
        remaining = true;
        bound = std::min(bound, base - out2[j] + *g2);
      }
      if (!remaining || (h.found && bound > h.dist2)) break;
    }
    return h;
  }

  void visit_ring(const std::array<std::int64_t, max_dimension>& home, std::int64_t r, std::size_t axis,
                  bool on_ring, std::size_t flat, std::array<std::int64_t, max_dimension>& cur, const Point& q,
                  Hit& h) const {
    if (axis == d_) {
      if (!on_ring && r > 0) return;
      for (std::size_t k = cell_start_[flat]; k < cell_start_[flat + 1]; ++k) consider(cell_ids_[k], q, h);
      return;
    }
    const std::int64_t from = std::max<std::int64_t>(0, home[axis] - r);
    const std::int64_t to = std::min<std::int64_t>(dims_[axis] - 1, home[axis] + r);
    for (std::int64_t c = from; c <= to; ++c) {
      const bool edge = c == home[axis] - r || c == home[axis] + r;
      // Interior offsets on the last axis can only matter if an earlier axis is on the ring.
      if (!edge && !on_ring && axis + 1 == d_ && r > 0) continue;
      cur[axis] = c;
      visit_ring(home, r, axis + 1, on_ring || edge, flat + static_cast<std::size_t>(c) * stride_[axis], cur, q, h);
    }
  }

  struct KdNode {
    std::size_t point;
    std::size_t axis;
    int left = -1, right = -1;
  };

  void build_kdtree() {
    std::vector<std::size_t> ids(pts_.size());
    std::iota(ids.begin(), ids.end(), 0);
    nodes_.reserve(pts_.size());
    root_ = kd_build(ids, 0, ids.size(), 0);
  }

  int kd_build(std::vector<std::size_t>& ids, std::size_t lo, std::size_t hi, std::size_t depth) {
    if (lo >= hi) return -1;
    const std::size_t axis = depth % d_;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(ids.begin() + static_cast<std::ptrdiff_t>(lo), ids.begin() + static_cast<std::ptrdiff_t>(mid),
                     ids.begin() + static_cast<std::ptrdiff_t>(hi),
                     [&](std::size_t a, std::size_t b) { return pts_[a].c[axis] < pts_[b].c[axis]; });
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back({ids[mid], axis});
    const int l = kd_build(ids, lo, mid, depth + 1);
    const int r = kd_build(ids, mid + 1, hi, depth + 1);
    nodes_[static_cast<std::size_t>(self)].left = l;
    nodes_[static_cast<std::size_t>(self)].right = r;
    return self;
  }

  void kd_search(int node, const Point& q, Hit& h) const {
    if (node < 0) return;
    const KdNode& n = nodes_[static_cast<std::size_t>(node)];
    consider(n.point, q, h);
    const std::int64_t split = pts_[n.point].c[n.axis];
    const bool go_left = q.c[n.axis] < split;
    kd_search(go_left ? n.left : n.right, q, h);
    const __int128 diff = static_cast<__int128>(q.c[n.axis]) - split;
    const auto ad = static_cast<u128>(diff < 0 ? -diff : diff);
    if (ad * ad <= h.dist2) kd_search(go_left ? n.right : n.left, q, h);
  }

  std::vector<Point> pts_;
  std::size_t d_;
  NearestIndexKind kind_;
  Point lo_, hi_;
  std::int64_t cell_ = 1;
  std::array<std::int64_t, max_dimension> dims_{};
  std::array<std::size_t, max_dimension> stride_{};
  std::vector<std::size_t> cell_start_, cell_ids_;
  std::vector<KdNode> nodes_;
  int root_ = -1;
};

/// Hypercube-cell anchor mesh: g cells per axis over [-half, half]^d.
struct VectorAnchorMesh {
  std::size_t d = 1;
  std::size_t cells_per_axis = 1;
  std::int64_t delta = 1;
  std::int64_t half = 0;
  std::vector<Point> anchors;  // ascending
  std::vector<std::array<std::size_t, max_dimension>> cells;
  std::vector<Point> residuals;
  std::size_t cells_filled = 0;

  std::array<std::size_t, max_dimension> cell_of(const Point& p) const {
    std::array<std::size_t, max_dimension> out{};
    for (std::size_t j = 0; j < d; ++j) {
      const auto off = static_cast<std::uint64_t>(p.c[j] + half) / static_cast<std::uint64_t>(delta);
      out[j] = static_cast<std::size_t>(std::min<std::uint64_t>(off, cells_per_axis - 1));
    }
    return out;
  }

  std::uint64_t cell_id(const Point& p) const {
    const auto c = cell_of(p);
    std::uint64_t id = 0;
    for (std::size_t j = d; j-- > 0;) id = id * cells_per_axis + c[j];
    return id;
  }

  /// Per-axis interval [lo, hi] of a cell; the last cell runs up to +half.
  std::pair<std::int64_t, std::int64_t> cell_bounds(std::size_t index) const {
    const std::int64_t lo = -half + static_cast<std::int64_t>(index) * delta;
    const std::int64_t hi = index + 1 == cells_per_axis ? half : lo + delta - 1;
    return {lo, hi};
  }
};

/// floor(w^(1/d)) computed exactly.
inline std::size_t integer_root(std::uint64_t w, std::size_t d) {
  auto pow_le = [&](std::uint64_t g) {
    u128 p = 1;
    for (std::size_t j = 0; j < d; ++j) {
      p *= g;
      if (p > w) return false;
    }
    return true;
  };
  auto g = static_cast<std::uint64_t>(std::pow(static_cast<double>(w), 1.0 / static_cast<double>(d)));
  while (g > 1 && !pow_le(g)) --g;
  while (pow_le(g + 1)) ++g;
  return static_cast<std::size_t>(std::max<std::uint64_t>(g, 1));
}

/// Phase A over vectors. For d = 1 the deletion keeps sorted positions
/// 1, 3, 5, ... exactly like the scalar mesh; for d >= 2 it removes the
/// cells whose 1-based per-axis index sum is even.
inline VectorAnchorMesh vector_phase_a_build_mesh(std::span<const Point> left, std::size_t d, const Point& T,
                                                  std::size_t w, std::int64_t B, std::uint64_t seed) {
  if (w < 4) throw invalid_argument("phase A needs w >= 4");
  if (left.empty()) throw invalid_argument("phase A needs at least one left vector");
  VectorAnchorMesh mesh;
  mesh.d = d;
  mesh.cells_per_axis = integer_root(w, d);
  mesh.delta = std::max<std::int64_t>(1, B / static_cast<std::int64_t>(mesh.cells_per_axis));
  mesh.half = B / 2;

  Rng rng(seed);
  std::vector<Point> beam{Point{}}, shifted, expanded;
  std::vector<std::pair<std::uint64_t, Point>> binned;
  for (const Point& s : left) {
    shifted.clear();
    for (const auto& p : beam) shifted.push_back(detail::add(p, s, d));
    expanded.clear();
    std::merge(beam.begin(), beam.end(), shifted.begin(), shifted.end(), std::back_inserter(expanded));
    expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());

    binned.clear();
    for (const auto& p : expanded) {
      bool inside = true;
      for (std::size_t j = 0; j < d; ++j) inside = inside && p.c[j] >= -mesh.half && p.c[j] <= mesh.half;
      if (inside) binned.emplace_back(mesh.cell_id(p), p);
    }
    std::sort(binned.begin(), binned.end());
    beam.clear();
    for (std::size_t r0 = 0; r0 < binned.size();) {
      std::size_t r1 = r0 + 1;
      while (r1 < binned.size() && binned[r1].first == binned[r0].first) ++r1;
      const std::size_t pick = r1 - r0 == 1 ? r0 : r0 + rng.uniform_index(r1 - r0);
      beam.push_back(binned[pick].second);
      r0 = r1;
    }
    mesh.cells_filled = beam.size();
    std::sort(beam.begin(), beam.end());
  }

  for (std::size_t pos = 0; pos < beam.size(); ++pos) {
    const auto cell = mesh.cell_of(beam[pos]);
    bool keep;
    if (d == 1) {
      keep = pos % 2 == 0;
    } else {
      std::size_t sum = 0;
      for (std::size_t j = 0; j < d; ++j) sum += cell[j] + 1;
      keep = sum % 2 == 1;
    }
    if (!keep) continue;
    mesh.anchors.push_back(beam[pos]);
    mesh.cells.push_back(cell);
    mesh.residuals.push_back(detail::sub(T, beam[pos], d));
  }
  return mesh;
}

struct VectorMitmOptions {
  NearestIndexKind index = NearestIndexKind::automatic;
  bool symmetrize = true;
};

struct VectorMitmResult {
  Point best_total;
  u128 error_sq = 0;
  double error = 0.0;  // Euclidean
  std::size_t n_left = 0;
  std::size_t cells_per_axis = 0;
  std::size_t anchors_kept = 0;
  bool fallback = false;
  std::optional<std::size_t> t_hit;
  std::int64_t elapsed_ns = 0;
};

/// MITM beam for d-dimensional vectors: hypercube Phase A cells, Euclidean
/// residual scoring and one representative per residual Voronoi cell after
/// the first hit.
inline VectorMitmResult vector_mitm_solve(const VectorInstance& vinst, std::size_t w, const SplitRule& rule,
                                          std::uint64_t seed, const VectorMitmOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t d = vinst.d;
  if (d == 0) throw invalid_argument("vector dimension d must be >= 1");
  if (d > max_dimension) throw invalid_argument("vector dimension d must be <= 8");
  if (vinst.size() < 2) throw invalid_argument("vector_mitm_solve needs n >= 2");
  if (w < 4) throw invalid_argument("vector_mitm_solve needs w >= 4");

  std::vector<Point> items = vinst.vectors;
  Point T = vinst.target;
  if (opt.symmetrize) {
    Rng rng(derive_seed(seed, stream::symmetrize));
    for (auto& v : items) {
      if (!rng.coin()) continue;
      T = detail::sub(T, v, d);
      v = detail::sub(Point{}, v, d);
    }
  }

  VectorMitmResult out;
  out.n_left = split_point(items.size(), w, rule);
  const std::span<const Point> all(items);
  VectorAnchorMesh mesh =
      vector_phase_a_build_mesh(all.first(out.n_left), d, T, w, vinst.B, derive_seed(seed, stream::phase_a));
  out.cells_per_axis = mesh.cells_per_axis;
  std::span<const Point> right = all.subspan(out.n_left);
  bool force_pre_hit = false;
  if (mesh.anchors.size() < 2) {
    mesh.anchors = {Point{}};
    mesh.residuals = {T};
    right = all;
    out.n_left = 0;
    out.fallback = true;
    force_pre_hit = true;
  }
  out.anchors_kept = mesh.anchors.size();

  const PointIndex index(mesh.residuals, d, opt.index, mesh.delta);
  const u128 delta2 = static_cast<u128>(mesh.delta) * static_cast<u128>(mesh.delta);

  struct Scored {
    Point p;
    u128 dist2;
    std::size_t anchor;
  };
  auto better = [](const Scored& a, const Scored& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.p < b.p;
  };

  std::vector<Point> beam{Point{}}, shifted, expanded;
  std::vector<Scored> scored;
  std::vector<std::size_t> cell_best(mesh.anchors.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < right.size(); ++i) {
    shifted.clear();
    for (const auto& p : beam) shifted.push_back(detail::add(p, right[i], d));
    expanded.clear();
    std::merge(beam.begin(), beam.end(), shifted.begin(), shifted.end(), std::back_inserter(expanded));
    expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());

    scored.clear();
    bool hit = false;
    for (const auto& p : expanded) {
      const auto h = index.nearest(p);
      scored.push_back({p, h.dist2, h.id});
      hit = hit || h.dist2 <= delta2;
    }
    beam.clear();
    if (!hit || force_pre_hit) {
      if (scored.size() > w) {
        std::nth_element(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(w - 1), scored.end(), better);
        scored.resize(w);
      }
      for (const auto& s : scored) beam.push_back(s.p);
    } else {
      if (!out.t_hit) out.t_hit = i + 1;
      std::vector<std::size_t> touched;
      for (std::size_t k = 0; k < scored.size(); ++k) {
        auto& slot = cell_best[scored[k].anchor];
        if (slot == std::numeric_limits<std::size_t>::max()) {
          slot = k;
          touched.push_back(scored[k].anchor);
        } else if (better(scored[k], scored[slot])) {
          slot = k;
        }
      }
      for (std::size_t a : touched) {
        beam.push_back(scored[cell_best[a]].p);
        cell_best[a] = std::numeric_limits<std::size_t>::max();
      }
    }
    std::sort(beam.begin(), beam.end());
  }

  Scored best{beam.front(), ~u128{0}, 0};
  bool found = false;
  for (const auto& p : beam) {
    const auto h = index.nearest(p);
    Scored s{p, h.dist2, h.id};
    if (!found || better(s, best)) {
      best = s;
      found = true;
    }
  }
  out.best_total = detail::add(mesh.anchors[best.anchor], best.p, d);
  out.error_sq = detail::squared_distance(out.best_total, T, d);
  out.error = std::sqrt(static_cast<long double>(out.error_sq));
  out.elapsed_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace rssp
