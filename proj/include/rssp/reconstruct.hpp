#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <span>
#include <vector>

#include "rssp/beam.hpp"
#include "rssp/error.hpp"
#include "rssp/instance.hpp"

namespace rssp {

inline std::size_t isqrt(std::size_t n) {
  auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

/// Beams stored at layers {0, m, 2m, ...} and at the final layer n, with
/// m = floor(sqrt(n)). Each stored beam is sorted ascending.
template <class C>
struct CheckpointLog {
  std::size_t interval = 1;
  std::size_t layers = 0;
  std::map<std::size_t, std::vector<C>> snapshots;

  std::size_t snapshot_count() const { return snapshots.size(); }
  const std::vector<C>& final_beam() const { return snapshots.at(layers); }
};

/// Collects checkpoints while a forward pass runs. `layer` counts processed
/// items, so layer 0 is the initial beam.
template <class C>
class CheckpointRecorder {
 public:
  CheckpointRecorder(std::size_t n, const std::vector<C>& initial) {
    if (n == 0) throw invalid_argument("checkpointing needs at least one layer");
    log_.layers = n;
    log_.interval = std::max<std::size_t>(1, isqrt(n));
    log_.snapshots.emplace(0, initial);
  }

  void on_layer(std::size_t layer, const std::vector<C>& beam) {
    if (layer % log_.interval == 0 || layer == log_.layers) log_.snapshots.insert_or_assign(layer, beam);
  }

  const CheckpointLog<C>& log() const& { return log_; }
  CheckpointLog<C> log() && { return std::move(log_); }

 private:
  CheckpointLog<C> log_;
};

template <class C>
struct ParentLink {
  C child;
  C pred;
  bool took = false;
};

/// Recovers which layers took their item on the path that ends in `target`.
///
/// `step(i, prev)` must recompute beam i+1 from beam i exactly as the forward
/// pass did. `untake(child, i)` returns the parent that yields `child` when
/// item i is taken. Windows follow the snapshot grid; each window keeps at
/// most m layers of parent links alive. When both parents exist the
/// not-taken one wins.
template <class C, class Step, class Untake>
IndexSet backtrack_checkpoints(const CheckpointLog<C>& log, const C& target, Step&& step, Untake&& untake) {
  const auto& last = log.final_beam();
  if (!std::binary_search(last.begin(), last.end(), target)) {
    throw unreachable_sum("best value is not a member of the final checkpoint");
  }

  IndexSet taken;
  C current = target;
  std::vector<std::vector<ParentLink<C>>> window;
  for (auto it = log.snapshots.rbegin(); std::next(it) != log.snapshots.rend(); ++it) {
    const std::size_t end = it->first;
    const auto& start_snap = *std::next(it);
    const std::size_t start = start_snap.first;

    window.assign(end - start, {});
    std::vector<C> prev = start_snap.second;
    for (std::size_t layer = start; layer < end; ++layer) {
      std::vector<C> next = step(layer, std::as_const(prev));
      auto& links = window[layer - start];
      links.reserve(next.size());
      for (const C& child : next) {
        if (std::binary_search(prev.begin(), prev.end(), child)) {
          links.push_back({child, child, false});
          continue;
        }
        C pred = untake(child, layer);
        if (!std::binary_search(prev.begin(), prev.end(), pred)) {
          throw unreachable_sum("recomputed layer has no parent for a child value");
        }
        links.push_back({child, pred, true});
      }
      prev = std::move(next);
    }

    for (std::size_t layer = end; layer > start; --layer) {
      const auto& links = window[layer - 1 - start];
      auto found = std::lower_bound(links.begin(), links.end(), current,
                                    [](const ParentLink<C>& l, const C& v) { return l.child < v; });
      if (found == links.end() || !(found->child == current)) {
        throw unreachable_sum("backtracking left the recomputed beam");
      }
      if (found->took) taken.push_back(layer - 1);
      current = found->pred;
    }
    if (!std::binary_search(start_snap.second.begin(), start_snap.second.end(), current)) {
      throw unreachable_sum("backtracking does not meet the checkpoint at layer " + std::to_string(start));
    }
  }
  std::reverse(taken.begin(), taken.end());
  return taken;
}

struct ForwardResult {
  std::int64_t best_sum = 0;
  CheckpointLog<std::int64_t> log;
};

/// Closest-sum beam search that stores a checkpoint every floor(sqrt(n)) layers.
inline ForwardResult forward_with_checkpoints(std::span<const std::int64_t> items, std::int64_t T, std::size_t w) {
  if (items.empty()) throw invalid_argument("forward_with_checkpoints needs n >= 1");
  CheckpointRecorder<std::int64_t> rec(items.size(), {0});
  auto res = closest_beam_search(items, T, w, [&](std::size_t i, const BeamState& beam) {
    rec.on_layer(i + 1, beam.candidates);
  });
  return {res.best_sum, std::move(rec).log()};
}

/// Indices of a subset summing exactly to `best_sum`, rebuilt from `log`.
inline IndexSet reconstruct_subset(std::span<const std::int64_t> items, std::int64_t T, std::size_t w,
                                   std::int64_t best_sum, const CheckpointLog<std::int64_t>& log) {
  if (log.layers != items.size()) throw invalid_argument("checkpoint log does not match the item count");
  std::vector<std::int64_t> expanded;
  auto step = [&](std::size_t i, const std::vector<std::int64_t>& prev) {
    detail::expand_sorted(prev, items[i], expanded);
    auto [first, last] = detail::closest_window(expanded, T, w);
    return std::vector<std::int64_t>(expanded.begin() + static_cast<std::ptrdiff_t>(first),
                                     expanded.begin() + static_cast<std::ptrdiff_t>(last));
  };
  auto untake = [&](std::int64_t child, std::size_t i) { return detail::checked_sub(child, items[i]); };
  return backtrack_checkpoints(log, best_sum, step, untake);
}

}  // namespace rssp
