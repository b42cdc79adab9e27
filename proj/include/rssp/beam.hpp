#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "rssp/error.hpp"

namespace rssp {

/// Generic level-synchronous beam search.
///
/// Every state of the current beam is expanded with `succ`, the successors
/// are ranked by `score` (higher is better) and the best min(w, |C|) become
/// the next beam. Returns the best-scoring state seen. Stops when `done`
/// holds for the beam or no successor exists. Ties keep generation order.
template <class State, class Succ, class Score, class Done>
State generic_beam(State init, Succ&& succ, Score&& score, Done&& done, std::size_t w) {
  if (w == 0) throw invalid_argument("beam width must be >= 1");
  std::vector<State> beam{init};
  State best = std::move(init);
  auto best_score = score(best);
  while (!beam.empty() && !done(std::as_const(beam))) {
    std::vector<State> children;
    for (const State& s : beam) {
      for (auto&& c : succ(s)) children.push_back(std::forward<decltype(c)>(c));
    }
    if (children.empty()) break;

    using Key = decltype(score(children.front()));
    std::vector<std::pair<Key, std::size_t>> ranked;
    ranked.reserve(children.size());
    for (std::size_t i = 0; i < children.size(); ++i) ranked.emplace_back(score(children[i]), i);
    const std::size_t keep = std::min(w, ranked.size());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return b.first < a.first; });

    std::vector<State> next;
    next.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) next.push_back(std::move(children[ranked[i].second]));
    if (best_score < ranked.front().first) {
      best = next.front();
      best_score = ranked.front().first;
    }
    beam = std::move(next);
  }
  return best;
}

/// Width-bounded set of partial sums; `candidates` is sorted and unique.
struct BeamState {
  std::vector<std::int64_t> candidates{0};
  std::size_t width = 1;
};

namespace detail {

// Sorted union of `beam` and `beam + s`. `beam` must be sorted and unique.
inline void expand_sorted(std::span<const std::int64_t> beam, std::int64_t s, std::vector<std::int64_t>& out) {
  out.clear();
  out.reserve(2 * beam.size());
  std::size_t i = 0, j = 0;
  const std::size_t m = beam.size();
  std::int64_t shifted = m ? checked_add(beam[0], s) : 0;
  while (i < m || j < m) {
    std::int64_t v;
    if (j >= m || (i < m && beam[i] <= shifted)) {
      v = beam[i++];
    } else {
      v = shifted;
      if (++j < m) shifted = checked_add(beam[j], s);
    }
    if (out.empty() || out.back() != v) out.push_back(v);
  }
}

// The w entries of a sorted, unique range closest to T form a contiguous
// window; ties go to the smaller value. Returns [first, last).
inline std::pair<std::size_t, std::size_t> closest_window(std::span<const std::int64_t> sorted, std::int64_t T,
                                                          std::size_t w) {
  const std::size_t size = sorted.size();
  if (w >= size) return {0, size};
  std::size_t right = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), T) - sorted.begin());
  std::size_t left = right;  // window is [left, right)
  while (right - left < w) {
    if (right == size) {
      --left;
    } else if (left == 0) {
      ++right;
    } else if (abs_diff(sorted[left - 1], T) <= abs_diff(sorted[right], T)) {
      --left;
    } else {
      ++right;
    }
  }
  return {left, right};
}

inline std::int64_t closest_in(std::span<const std::int64_t> values, std::int64_t T) {
  std::int64_t best = values.front();
  for (std::int64_t v : values) {
    const auto d = abs_diff(v, T), bd = abs_diff(best, T);
    if (d < bd || (d == bd && v < best)) best = v;
  }
  return best;
}

}  // namespace detail

/// One layer of the closest-subset-sum beam: W <- W u (W + s), then keep the
/// w members closest to T (ties: smaller sum).
inline BeamState expand_and_trim(const BeamState& beam, std::int64_t s, std::int64_t T, std::size_t w) {
  if (w == 0) throw invalid_argument("beam width must be >= 1");
  if (beam.candidates.empty()) throw invalid_argument("expand_and_trim needs a nonempty beam");
  std::vector<std::int64_t> expanded;
  detail::expand_sorted(beam.candidates, s, expanded);
  auto [first, last] = detail::closest_window(expanded, T, w);
  return BeamState{{expanded.begin() + static_cast<std::ptrdiff_t>(first),
                    expanded.begin() + static_cast<std::ptrdiff_t>(last)},
                   w};
}

struct ClosestBeamResult {
  std::int64_t best_sum = 0;
  std::uint64_t error = 0;
  BeamState beam;
};

/// Beam search for the subset sum closest to T. `on_layer(i, beam)` is called
/// after item i has been processed.
template <class OnLayer>
ClosestBeamResult closest_beam_search(std::span<const std::int64_t> items, std::int64_t T, std::size_t w,
                                      OnLayer&& on_layer) {
  if (w == 0) throw invalid_argument("beam width must be >= 1");
  BeamState beam{{0}, w};
  std::vector<std::int64_t> expanded;
  for (std::size_t i = 0; i < items.size(); ++i) {
    detail::expand_sorted(beam.candidates, items[i], expanded);
    auto [first, last] = detail::closest_window(expanded, T, w);
    beam.candidates.assign(expanded.begin() + static_cast<std::ptrdiff_t>(first),
                           expanded.begin() + static_cast<std::ptrdiff_t>(last));
    on_layer(i, std::as_const(beam));
  }
  ClosestBeamResult out;
  out.best_sum = detail::closest_in(beam.candidates, T);
  out.error = detail::abs_diff(out.best_sum, T);
  out.beam = std::move(beam);
  return out;
}

inline ClosestBeamResult closest_beam_search(std::span<const std::int64_t> items, std::int64_t T, std::size_t w) {
  return closest_beam_search(items, T, w, [](std::size_t, const BeamState&) {});
}

}  // namespace rssp
