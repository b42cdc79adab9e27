#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rssp/beam.hpp"
#include "rssp/error.hpp"
#include "rssp/instance.hpp"
#include "rssp/reconstruct.hpp"
#include "rssp/rng.hpp"

namespace rssp {

// ---------------------------------------------------------------------------
// Split policy

/// How many leading items feed Phase A.
struct SplitRule {
  enum class Kind { half, fixed, log_width };
  Kind kind = Kind::log_width;
  std::size_t k = 1;  // Fixed
  double c = 4.0;     // LogWidth: floor(c * log2 w)

  static SplitRule half() { return {Kind::half, 0, 0.0}; }
  static SplitRule fixed(std::size_t k) { return {Kind::fixed, k, 0.0}; }
  static SplitRule log_width(double c = 4.0) { return {Kind::log_width, 0, c}; }

  std::string tag() const {
    switch (kind) {
      case Kind::half: return "half";
      case Kind::fixed: return "fixed:" + std::to_string(k);
      case Kind::log_width: {
        std::string s = std::to_string(c);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return "logw:" + s;
      }
    }
    return "half";
  }
};

/// Parses "half", "fixed:K" or "logw:C".
inline SplitRule parse_split_rule(std::string_view s) {
  try {
    if (s == "half") return SplitRule::half();
    if (s.starts_with("fixed:")) {
      const long long k = std::stoll(std::string(s.substr(6)));
      if (k < 0) throw invalid_argument("negative split");
      return SplitRule::fixed(static_cast<std::size_t>(k));
    }
    if (s.starts_with("logw:")) {
      const double c = std::stod(std::string(s.substr(5)));
      if (!(c > 0.0)) throw invalid_argument("non-positive split constant");
      return SplitRule::log_width(c);
    }
  } catch (const std::logic_error&) {
  }
  throw invalid_argument("invalid split rule '" + std::string(s) + "' (expected half|fixed:K|logw:C)");
}

/// Resolved left size n_L, clamped to [1, n-1].
inline std::size_t split_point(std::size_t n, std::uint64_t w, const SplitRule& rule) {
  if (n < 2) throw invalid_argument("split_point needs n >= 2");
  if (w < 1) throw invalid_argument("split_point needs w >= 1");
  double raw = 0.0;
  switch (rule.kind) {
    case SplitRule::Kind::half: raw = static_cast<double>(n / 2); break;
    case SplitRule::Kind::fixed: raw = static_cast<double>(rule.k); break;
    case SplitRule::Kind::log_width: raw = std::floor(rule.c * std::log2(static_cast<double>(w))); break;
  }
  const double hi = static_cast<double>(n - 1);
  return static_cast<std::size_t>(std::clamp(raw, 1.0, hi));
}

// ---------------------------------------------------------------------------
// Phase A

enum class PhaseAVariant { bucket_random, equi_sample };

inline std::string_view to_string(PhaseAVariant v) {
  return v == PhaseAVariant::bucket_random ? "bucket" : "equi";
}

/// Anchors built from the left items. The domain is [-half, half] cut into
/// `buckets` half-open buckets of width delta; the last bucket also takes
/// the remainder up to +half.
struct AnchorMesh {
  std::int64_t delta = 1;
  std::int64_t half = 0;
  std::size_t buckets = 0;
  std::size_t left_count = 0;
  std::vector<std::int64_t> anchors;  // ascending, after even-position deletion
  std::vector<std::int64_t> residuals;  // T - anchors[i]
  std::vector<std::vector<bool>> decision_masks;
  std::vector<std::uint32_t> cardinalities;
  std::size_t buckets_filled = 0;  // before deletion
  std::optional<std::size_t> full_at_layer;
  bool sparse = false;

  /// Zero-based bucket index of x in [-half, half].
  std::size_t bucket_of(std::int64_t x) const {
    const auto off = static_cast<std::uint64_t>(x + half) / static_cast<std::uint64_t>(delta);
    return static_cast<std::size_t>(std::min<std::uint64_t>(off, buckets - 1));
  }

  IndexSet left_indices(std::size_t anchor) const {
    IndexSet out;
    const auto& mask = decision_masks.at(anchor);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) out.push_back(i);
    }
    return out;
  }
};

struct PhaseAOptions {
  PhaseAVariant variant = PhaseAVariant::bucket_random;
  std::optional<std::uint32_t> budget;  // max cardinality of an anchor
  bool min_cardinality = false;         // bucket pick restricted to its sparsest members
};

namespace detail {

struct AnchorCandidate {
  std::int64_t sum;
  std::uint32_t card;
  std::uint32_t parent;
  bool took;
};

// Sorted union of prev and prev + s, deduplicated by sum. Among equal sums
// the lower cardinality wins, then the not-taken entry.
inline void expand_anchor_layer(const std::vector<AnchorCandidate>& prev, std::int64_t s,
                                std::optional<std::uint32_t> budget, std::vector<AnchorCandidate>& out) {
  out.clear();
  out.reserve(2 * prev.size());
  std::vector<AnchorCandidate> taken;
  taken.reserve(prev.size());
  for (std::uint32_t i = 0; i < prev.size(); ++i) {
    if (budget && prev[i].card + 1 > *budget) continue;
    taken.push_back({checked_add(prev[i].sum, s), prev[i].card + 1, i, true});
  }
  std::size_t a = 0, b = 0;
  auto push = [&out](const AnchorCandidate& c) {
    if (!out.empty() && out.back().sum == c.sum) return;
    out.push_back(c);
  };
  while (a < prev.size() || b < taken.size()) {
    bool from_prev;
    if (b >= taken.size()) {
      from_prev = true;
    } else if (a >= prev.size()) {
      from_prev = false;
    } else if (prev[a].sum != taken[b].sum) {
      from_prev = prev[a].sum < taken[b].sum;
    } else {
      from_prev = prev[a].card <= taken[b].card;
    }
    if (from_prev) {
      push({prev[a].sum, prev[a].card, static_cast<std::uint32_t>(a), false});
      ++a;
    } else {
      push(taken[b++]);
    }
  }
}

}  // namespace detail

/// Builds the Phase A anchor mesh over `left`.
///
/// Each layer expands with the next item. The bucketed variant drops sums
/// outside [-B/2, B/2] and keeps one uniformly random candidate per bucket;
/// equi-sampling keeps w rank-equispaced candidates out of all unique sums.
/// Afterwards anchors at even
/// 1-based positions in sorted order are deleted and residuals T - a are
/// computed for the survivors.
inline AnchorMesh phase_a_build_mesh(std::span<const std::int64_t> left, std::int64_t T, std::size_t w,
                                     std::int64_t B, std::uint64_t seed, const PhaseAOptions& opt = {}) {
  if (w < 4) throw invalid_argument("phase A needs w >= 4");
  if (left.empty()) throw invalid_argument("phase A needs at least one left item");
  if (B < 1) throw invalid_argument("phase A needs B >= 1");

  AnchorMesh mesh;
  mesh.delta = std::max<std::int64_t>(1, B / static_cast<std::int64_t>(w));
  mesh.half = B / 2;
  mesh.buckets = w;
  mesh.left_count = left.size();

  Rng rng(seed);
  std::vector<std::vector<detail::AnchorCandidate>> layers;
  layers.reserve(left.size() + 1);
  layers.push_back({{0, 0, 0, false}});

  std::vector<detail::AnchorCandidate> expanded;
  std::vector<std::size_t> pool;
  std::vector<bool> seen(w);
  for (std::size_t i = 0; i < left.size(); ++i) {
    detail::expand_anchor_layer(layers.back(), left[i], opt.budget, expanded);
    // Buckets partition the fixed domain; equi-sampling spans every unique candidate.
    if (opt.variant == PhaseAVariant::bucket_random) {
      std::erase_if(expanded, [&](const auto& c) { return c.sum < -mesh.half || c.sum > mesh.half; });
    }

    std::vector<detail::AnchorCandidate> kept;
    if (opt.variant == PhaseAVariant::bucket_random) {
      for (std::size_t r0 = 0; r0 < expanded.size();) {
        const std::size_t bucket = mesh.bucket_of(expanded[r0].sum);
        std::size_t r1 = r0 + 1;
        while (r1 < expanded.size() && mesh.bucket_of(expanded[r1].sum) == bucket) ++r1;
        pool.clear();
        std::uint32_t min_card = std::numeric_limits<std::uint32_t>::max();
        if (opt.min_cardinality) {
          for (std::size_t k = r0; k < r1; ++k) min_card = std::min(min_card, expanded[k].card);
        }
        for (std::size_t k = r0; k < r1; ++k) {
          if (!opt.min_cardinality || expanded[k].card == min_card) pool.push_back(k);
        }
        const std::size_t pick = pool.size() == 1 ? pool[0] : pool[rng.uniform_index(pool.size())];
        kept.push_back(expanded[pick]);
        r0 = r1;
      }
    } else if (expanded.size() <= w) {
      kept = expanded;
    } else {
      const auto count = static_cast<unsigned __int128>(expanded.size() - 1);
      for (std::size_t k = 0; k < w; ++k) {
        kept.push_back(expanded[static_cast<std::size_t>(count * k / (w - 1))]);
      }
    }

    std::fill(seen.begin(), seen.end(), false);
    std::size_t filled = 0;
    for (const auto& c : kept) {
      if (c.sum < -mesh.half || c.sum > mesh.half) continue;
      const std::size_t b = mesh.bucket_of(c.sum);
      if (!seen[b]) {
        seen[b] = true;
        ++filled;
      }
    }
    mesh.buckets_filled = filled;
    if (filled == w && !mesh.full_at_layer) mesh.full_at_layer = i + 1;
    layers.push_back(std::move(kept));
  }

  const auto& last = layers.back();
  for (std::size_t pos = 0; pos < last.size(); pos += 2) {
    std::vector<bool> mask(left.size(), false);
    std::size_t idx = pos;
    for (std::size_t layer = left.size(); layer > 0; --layer) {
      const auto& c = layers[layer][idx];
      if (c.took) mask[layer - 1] = true;
      idx = c.parent;
    }
    mesh.anchors.push_back(last[pos].sum);
    mesh.residuals.push_back(detail::checked_sub(T, last[pos].sum));
    mesh.decision_masks.push_back(std::move(mask));
    mesh.cardinalities.push_back(last[pos].card);
  }
  mesh.sparse = mesh.anchors.size() < 2;
  return mesh;
}

inline AnchorMesh phase_a_build_mesh(std::span<const std::int64_t> left, std::int64_t T, std::size_t w,
                                     std::int64_t B, std::uint64_t seed, PhaseAVariant variant) {
  return phase_a_build_mesh(left, T, w, B, seed, PhaseAOptions{variant, std::nullopt, false});
}

// ---------------------------------------------------------------------------
// Residual lookup

/// Sorted residual values with nearest-neighbour queries by binary search.
/// Equidistant queries resolve to the smaller residual.
class ResidualIndex {
 public:
  struct Hit {
    std::uint64_t distance = std::numeric_limits<std::uint64_t>::max();
    std::size_t anchor = 0;
    std::int64_t residual = 0;
  };

  ResidualIndex() = default;

  /// `entries` are (residual value, anchor index) pairs.
  explicit ResidualIndex(std::vector<std::pair<std::int64_t, std::size_t>> entries) {
    std::sort(entries.begin(), entries.end());
    values_.reserve(entries.size());
    anchors_.reserve(entries.size());
    for (auto& [v, a] : entries) {
      values_.push_back(v);
      anchors_.push_back(a);
    }
  }

  bool empty() const { return values_.empty(); }
  std::size_t size() const { return values_.size(); }

  Hit nearest(std::int64_t x) const {
    Hit hit;
    if (values_.empty()) return hit;
    const auto it = std::lower_bound(values_.begin(), values_.end(), x);
    const auto pos = static_cast<std::size_t>(it - values_.begin());
    if (pos < values_.size()) hit = {detail::abs_diff(values_[pos], x), anchors_[pos], values_[pos]};
    if (pos > 0) {
      const std::uint64_t d = detail::abs_diff(values_[pos - 1], x);
      if (d <= hit.distance) hit = {d, anchors_[pos - 1], values_[pos - 1]};
    }
    return hit;
  }

  /// Reference linear scan with the same tie rule.
  Hit nearest_linear(std::int64_t x) const {
    Hit hit;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const std::uint64_t d = detail::abs_diff(values_[i], x);
      if (d < hit.distance || (d == hit.distance && values_[i] < hit.residual)) {
        hit = {d, anchors_[i], values_[i]};
      }
    }
    return hit;
  }

 private:
  std::vector<std::int64_t> values_;
  std::vector<std::size_t> anchors_;
};

/// Residuals a Phase B candidate may pair with, by the candidate's own
/// cardinality c: anchor cardinality a must satisfy min_total <= a + c and,
/// under a budget k, a + c <= k.
class EligibleResiduals {
 public:
  EligibleResiduals(const AnchorMesh& mesh, std::optional<std::uint32_t> budget, bool require_nonempty,
                    std::size_t max_right_card) {
    if (mesh.anchors.empty()) {
      by_card_.assign(max_right_card + 1, -1);
      return;
    }
    const auto [mn, mx] = std::minmax_element(mesh.cardinalities.begin(), mesh.cardinalities.end());
    const std::int64_t min_a = *mn, max_a = *mx;
    const std::int64_t min_total = require_nonempty ? 1 : 0;
    std::map<std::pair<std::int64_t, std::int64_t>, int> cache;
    by_card_.reserve(max_right_card + 1);
    for (std::size_t c = 0; c <= max_right_card; ++c) {
      const auto cc = static_cast<std::int64_t>(c);
      const std::int64_t lo = std::max(min_a, min_total - cc);
      const std::int64_t hi = budget ? std::min(max_a, static_cast<std::int64_t>(*budget) - cc) : max_a;
      if (lo > hi) {
        by_card_.push_back(-1);
        continue;
      }
      auto [it, inserted] = cache.try_emplace({lo, hi}, static_cast<int>(lists_.size()));
      if (inserted) {
        std::vector<std::pair<std::int64_t, std::size_t>> entries;
        for (std::size_t a = 0; a < mesh.anchors.size(); ++a) {
          const std::int64_t card = mesh.cardinalities[a];
          if (card >= lo && card <= hi) entries.emplace_back(mesh.residuals[a], a);
        }
        lists_.emplace_back(std::move(entries));
      }
      by_card_.push_back(it->second);
    }
  }

  /// nullptr when no anchor is compatible with cardinality c.
  const ResidualIndex* for_card(std::uint32_t c) const {
    if (c >= by_card_.size() || by_card_[c] < 0) return nullptr;
    return &lists_[static_cast<std::size_t>(by_card_[c])];
  }

  std::size_t list_count() const { return lists_.size(); }

 private:
  std::vector<ResidualIndex> lists_;
  std::vector<int> by_card_;
};

// ---------------------------------------------------------------------------
// Phase B

struct PhaseBCandidate {
  std::int64_t sum = 0;
  std::uint32_t card = 0;

  friend bool operator==(const PhaseBCandidate&, const PhaseBCandidate&) = default;
  friend auto operator<=>(const PhaseBCandidate&, const PhaseBCandidate&) = default;
};

struct PhaseBConfig {
  std::size_t w = 1;
  std::int64_t delta = 1;
  bool force_pre_hit = false;  // plain beam toward the residuals
  bool card_tiebreak = false;  // equal distance: lower cardinality first
  std::optional<std::uint32_t> budget;
};

/// Per-layer diagnostics. Layer t (1-based) is entry t-1.
struct PhaseBTrace {
  std::optional<std::size_t> t_hit;
  std::vector<std::size_t> cells_filled;
  std::vector<std::uint64_t> gap_history;
  std::vector<bool> post_hit;
};

/// Writes one JSON object per layer: {"layer","regime","cells","gap"}.
inline void write_trace_jsonl(std::ostream& os, const PhaseBTrace& trace) {
  for (std::size_t i = 0; i < trace.cells_filled.size(); ++i) {
    nlohmann::json j{{"layer", i + 1},
                     {"regime", trace.post_hit[i] ? "post" : "pre"},
                     {"cells", trace.cells_filled[i]},
                     {"gap", trace.gap_history[i]}};
    os << j.dump() << '\n';
  }
}

/// One Phase B layer as a pure function of (layer, previous beam). The
/// forward pass and the checkpoint recomputation share it.
class PhaseBStepper {
 public:
  struct Score {
    std::uint64_t distance = std::numeric_limits<std::uint64_t>::max();
    std::size_t anchor = 0;
    bool feasible() const { return distance != std::numeric_limits<std::uint64_t>::max(); }
  };

  struct LayerStats {
    bool post_hit = false;
    std::size_t cells = 0;
    std::uint64_t gap = std::numeric_limits<std::uint64_t>::max();
  };

  PhaseBStepper(std::span<const std::int64_t> right, const EligibleResiduals& residuals, std::size_t anchor_count,
                PhaseBConfig cfg)
      : right_(right), residuals_(&residuals), anchor_count_(anchor_count), cfg_(cfg), cell_best_(anchor_count, npos) {
    if (cfg_.w == 0) throw invalid_argument("beam width must be >= 1");
  }

  Score score(const PhaseBCandidate& c) const {
    const ResidualIndex* list = residuals_->for_card(c.card);
    if (!list) return {};
    const auto hit = list->nearest(c.sum);
    return {hit.distance, hit.anchor};
  }

  /// Strict ranking: distance, then (optionally) cardinality, then sum.
  bool better(const PhaseBCandidate& a, const Score& sa, const PhaseBCandidate& b, const Score& sb) const {
    if (sa.distance != sb.distance) return sa.distance < sb.distance;
    if (cfg_.card_tiebreak && a.card != b.card) return a.card < b.card;
    return a.sum < b.sum;
  }

  std::vector<PhaseBCandidate> operator()(std::size_t layer, const std::vector<PhaseBCandidate>& prev) {
    expand(prev, right_[layer]);
    scores_.resize(expanded_.size());
    bool hit = false;
    for (std::size_t i = 0; i < expanded_.size(); ++i) {
      scores_[i] = score(expanded_[i]);
      if (scores_[i].distance <= static_cast<std::uint64_t>(cfg_.delta)) hit = true;
    }
    const bool post = hit && !cfg_.force_pre_hit;
    keep_.assign(expanded_.size(), false);

    if (!post) {
      order_.clear();
      for (std::size_t i = 0; i < expanded_.size(); ++i) {
        if (scores_[i].feasible()) order_.push_back(i);
      }
      auto cmp = [this](std::size_t a, std::size_t b) {
        return better(expanded_[a], scores_[a], expanded_[b], scores_[b]);
      };
      if (order_.size() > cfg_.w) {
        std::nth_element(order_.begin(), order_.begin() + static_cast<std::ptrdiff_t>(cfg_.w - 1), order_.end(), cmp);
        order_.resize(cfg_.w);
      }
      for (std::size_t i : order_) keep_[i] = true;
    } else {
      touched_.clear();
      for (std::size_t i = 0; i < expanded_.size(); ++i) {
        if (!scores_[i].feasible()) continue;
        std::size_t& slot = cell_best_[scores_[i].anchor];
        if (slot == npos) {
          touched_.push_back(scores_[i].anchor);
          slot = i;
        } else if (better(expanded_[i], scores_[i], expanded_[slot], scores_[slot])) {
          slot = i;
        }
      }
      for (std::size_t a : touched_) {
        keep_[cell_best_[a]] = true;
        cell_best_[a] = npos;
      }
    }

    std::vector<PhaseBCandidate> next;
    stats_ = LayerStats{post, 0, std::numeric_limits<std::uint64_t>::max()};
    for (std::size_t i = 0; i < expanded_.size(); ++i) {
      if (!keep_[i]) continue;
      next.push_back(expanded_[i]);
      stats_.gap = std::min(stats_.gap, scores_[i].distance);
      std::size_t& slot = cell_best_[scores_[i].anchor];
      if (slot == npos) {
        slot = 0;
        ++stats_.cells;
      }
    }
    for (std::size_t i = 0; i < expanded_.size(); ++i) {
      if (keep_[i]) cell_best_[scores_[i].anchor] = npos;
    }
    return next;
  }

  const LayerStats& last_stats() const { return stats_; }
  std::size_t anchor_count() const { return anchor_count_; }

 private:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  // Sorted union of prev and prev + s by (sum, card), one entry per sum.
  void expand(const std::vector<PhaseBCandidate>& prev, std::int64_t s) {
    taken_.clear();
    for (const auto& c : prev) {
      if (!residuals_->for_card(c.card + 1)) continue;
      taken_.push_back({detail::checked_add(c.sum, s), c.card + 1});
    }
    expanded_.clear();
    expanded_.reserve(prev.size() + taken_.size());
    std::merge(prev.begin(), prev.end(), taken_.begin(), taken_.end(), std::back_inserter(expanded_));
    auto last = std::unique(expanded_.begin(), expanded_.end(),
                            [](const PhaseBCandidate& a, const PhaseBCandidate& b) { return a.sum == b.sum; });
    expanded_.erase(last, expanded_.end());
  }

  std::span<const std::int64_t> right_;
  const EligibleResiduals* residuals_;
  std::size_t anchor_count_;
  PhaseBConfig cfg_;
  std::vector<PhaseBCandidate> expanded_, taken_;
  std::vector<Score> scores_;
  std::vector<std::size_t> order_, touched_, cell_best_;
  std::vector<bool> keep_;
  LayerStats stats_;
};

struct PhaseBResult {
  PhaseBCandidate best;
  std::uint64_t distance = 0;
  std::size_t anchor = 0;
  std::vector<PhaseBCandidate> beam;
  PhaseBTrace trace;
  std::optional<CheckpointLog<PhaseBCandidate>> log;
};

struct PhaseBOptions {
  bool force_pre_hit = false;
  bool card_tiebreak = false;
  bool require_nonempty = false;
  std::optional<std::uint32_t> budget;
  bool checkpoints = false;
};

/// Residual-guided beam over the right items. Before any candidate is within
/// delta of a residual the w closest candidates survive; afterwards one
/// representative per residual Voronoi cell survives.
inline PhaseBResult phase_b_search(std::span<const std::int64_t> right, const AnchorMesh& mesh, std::size_t w,
                                   const PhaseBOptions& opt = {}) {
  if (mesh.residuals.empty()) throw invalid_argument("phase B needs at least one residual");
  EligibleResiduals eligible(mesh, opt.budget, opt.require_nonempty, right.size() + 1);
  PhaseBStepper stepper(right, eligible, mesh.anchors.size(),
                        PhaseBConfig{w, mesh.delta, opt.force_pre_hit, opt.card_tiebreak, opt.budget});

  PhaseBResult out;
  std::vector<PhaseBCandidate> beam{{0, 0}};
  std::optional<CheckpointRecorder<PhaseBCandidate>> recorder;
  if (opt.checkpoints && !right.empty()) recorder.emplace(right.size(), beam);

  for (std::size_t i = 0; i < right.size(); ++i) {
    beam = stepper(i, beam);
    const auto& st = stepper.last_stats();
    if (st.post_hit && !out.trace.t_hit) out.trace.t_hit = i + 1;
    out.trace.post_hit.push_back(st.post_hit);
    out.trace.cells_filled.push_back(st.cells);
    out.trace.gap_history.push_back(st.gap);
    if (recorder) recorder->on_layer(i + 1, beam);
  }

  bool found = false;
  PhaseBStepper::Score best_score;
  for (const auto& c : beam) {
    const auto sc = stepper.score(c);
    if (!sc.feasible()) continue;
    if (!found || stepper.better(c, sc, out.best, best_score)) {
      out.best = c;
      best_score = sc;
      found = true;
    }
  }
  if (!found) throw invalid_argument("phase B found no candidate compatible with any anchor");
  out.distance = best_score.distance;
  out.anchor = best_score.anchor;
  out.beam = std::move(beam);
  if (recorder) out.log = std::move(*recorder).log();
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end solve

struct MitmWitness {
  AnchorMesh mesh;
  std::optional<CheckpointLog<PhaseBCandidate>> log;
  PhaseBCandidate phase_b_best;
  std::size_t anchor_index = 0;
  std::optional<SymmetrizationRecord> symmetrization;
  PhaseBOptions phase_b_options;
  std::size_t w = 1;
};

struct MitmResult {
  std::int64_t best_total = 0;     // a* + x*, in the solver's frame
  std::int64_t original_total = 0; // the same subset summed over the caller's items
  std::uint64_t error = 0;
  std::int64_t phase_b_best = 0;  // x*
  std::int64_t anchor = 0;        // a*
  std::uint32_t cardinality = 0;  // in the solver's (possibly symmetrized) space
  std::uint32_t phase_b_cardinality = 0;
  std::size_t n_left = 0;
  std::size_t anchors_kept = 0;
  bool fallback = false;  // mesh too sparse, plain beam over all items
  PhaseBTrace trace;
  std::int64_t elapsed_ns = 0;
  std::optional<MitmWitness> witness;
};

struct MitmOptions {
  PhaseAVariant variant = PhaseAVariant::bucket_random;
  bool symmetrize = true;
  bool reconstruct = false;
};

namespace detail {

struct EngineOptions {
  PhaseAVariant variant = PhaseAVariant::bucket_random;
  std::optional<std::uint32_t> budget;
  bool require_nonempty = false;
  bool card_aware = false;  // sparsest bucket picks and cardinality tie-breaks
  bool reconstruct = false;
};

inline MitmResult run_mitm_engine(std::span<const std::int64_t> items, std::int64_t T, std::int64_t B, std::size_t w,
                                  std::size_t n_left, std::uint64_t seed, const EngineOptions& opt) {
  if (items.size() < 2) throw invalid_argument("MITM needs n >= 2");
  if (w < 4) throw invalid_argument("MITM needs w >= 4");

  AnchorMesh mesh = phase_a_build_mesh(items.first(n_left), T, w, B, derive_seed(seed, stream::phase_a),
                                       PhaseAOptions{opt.variant, opt.budget, opt.card_aware});
  MitmResult out;
  out.n_left = n_left;
  std::span<const std::int64_t> right = items.subspan(n_left);
  PhaseBOptions pb{false, opt.card_aware, opt.require_nonempty, opt.budget, opt.reconstruct};
  if (mesh.sparse) {
    // A single residual cannot carry the post-hit regime: run a plain beam
    // over every item toward T instead.
    const std::int64_t delta = mesh.delta;
    mesh = AnchorMesh{};
    mesh.delta = delta;
    mesh.half = B / 2;
    mesh.buckets = w;
    mesh.anchors = {0};
    mesh.residuals = {T};
    mesh.decision_masks = {{}};
    mesh.cardinalities = {0};
    mesh.sparse = true;
    right = items;
    out.n_left = 0;
    out.fallback = true;
    pb.force_pre_hit = true;
  }
  out.anchors_kept = mesh.anchors.size();

  PhaseBResult b = phase_b_search(right, mesh, w, pb);
  out.phase_b_best = b.best.sum;
  out.anchor = mesh.anchors[b.anchor];
  out.best_total = checked_add(out.anchor, out.phase_b_best);
  out.original_total = out.best_total;
  out.error = abs_diff(out.best_total, T);
  out.cardinality = mesh.cardinalities[b.anchor] + b.best.card;
  out.phase_b_cardinality = b.best.card;
  out.trace = std::move(b.trace);
  if (opt.reconstruct) {
    out.witness = MitmWitness{std::move(mesh), std::move(b.log), b.best, b.anchor, std::nullopt, pb, w};
  }
  return out;
}

}  // namespace detail

/// Meet-in-the-middle beam search: symmetrize, split, build the anchor mesh
/// from the left items, then run the residual-guided beam on the rest.
inline MitmResult mitm_solve(const Instance& inst, std::size_t w, const SplitRule& rule, std::uint64_t seed,
                             const MitmOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  if (inst.size() < 2) throw invalid_argument("mitm_solve needs n >= 2");
  if (w < 4) throw invalid_argument("mitm_solve needs w >= 4");

  std::optional<SymmetrizationRecord> record;
  const Instance* work = &inst;
  Instance transformed;
  if (opt.symmetrize) {
    auto [t, rec] = symmetrize(inst, derive_seed(seed, stream::symmetrize));
    transformed = std::move(t);
    record = std::move(rec);
    work = &transformed;
  }
  const std::size_t n_left = split_point(inst.size(), w, rule);
  detail::EngineOptions eo;
  eo.variant = opt.variant;
  eo.reconstruct = opt.reconstruct;
  MitmResult out = detail::run_mitm_engine(work->items, work->T, inst.B, w, n_left, seed, eo);
  // Sign flips shift every subset sum and the target by the same amount.
  out.original_total = detail::checked_add(detail::checked_sub(out.best_total, work->T), inst.T);
  if (out.witness) out.witness->symmetrization = std::move(record);
  out.elapsed_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Rebuilds the chosen subset of the original instance: left indices from
/// the anchor's decision mask, right indices by checkpointed backtracking,
/// then mapped back through the symmetrization record.
inline IndexSet mitm_reconstruct(const Instance& inst, const MitmResult& result) {
  if (!result.witness) throw invalid_argument("result was produced without reconstruction enabled");
  const MitmWitness& wit = *result.witness;

  std::vector<std::int64_t> items = inst.items;
  if (wit.symmetrization) {
    if (wit.symmetrization->flipped.size() != items.size()) throw invalid_argument("instance size mismatch");
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (wit.symmetrization->flipped[i]) items[i] = detail::checked_neg(items[i]);
    }
  }

  IndexSet subset = wit.mesh.decision_masks.empty() ? IndexSet{} : wit.mesh.left_indices(wit.anchor_index);
  const std::size_t offset = result.n_left;
  std::span<const std::int64_t> right = std::span<const std::int64_t>(items).subspan(offset);
  if (!right.empty()) {
    if (!wit.log) throw invalid_argument("missing Phase B checkpoints");
    EligibleResiduals eligible(wit.mesh, wit.phase_b_options.budget, wit.phase_b_options.require_nonempty,
                               right.size() + 1);
    PhaseBStepper stepper(right, eligible, wit.mesh.anchors.size(),
                          PhaseBConfig{wit.w, wit.mesh.delta, wit.phase_b_options.force_pre_hit,
                                       wit.phase_b_options.card_tiebreak, wit.phase_b_options.budget});
    auto untake = [&](const PhaseBCandidate& c, std::size_t i) {
      return PhaseBCandidate{detail::checked_sub(c.sum, right[i]), c.card - 1};
    };
    for (std::size_t layer : backtrack_checkpoints(*wit.log, wit.phase_b_best, stepper, untake)) {
      subset.push_back(offset + layer);
    }
  }
  std::sort(subset.begin(), subset.end());

  if (subset_sum(items, subset) != result.best_total) {
    throw unreachable_sum("reconstructed subset does not reproduce the reported total");
  }
  if (wit.symmetrization) subset = desymmetrize_subset(*wit.symmetrization, subset);
  if (subset_sum(inst.items, subset) != result.original_total ||
      detail::abs_diff(subset_sum(inst.items, subset), inst.T) != result.error) {
    throw unreachable_sum("reconstructed subset does not reproduce the reported error");
  }
  return subset;
}

}  // namespace rssp
