#include <gtest/gtest.h>

#include <limits>

#include "rssp/beam.hpp"
#include "rssp/rng.hpp"
#include "test_util.hpp"

using namespace rssp;

namespace {

// Node of a complete binary tree: depth and path bits.
struct Node {
  int depth;
  int path;
};

}  // namespace

TEST(GenericBeam, DeadEndReturnsInit) {
  auto r = generic_beam(
      5, [](int) { return std::vector<int>{}; }, [](int s) { return s; },
      [](const std::vector<int>&) { return false; }, 3);
  EXPECT_EQ(r, 5);
}

TEST(GenericBeam, WideBeamIsExhaustive) {
  // Leaf values of a depth-3 tree; internal nodes score low so nothing is pruned by rank.
  const std::vector<int> leaves{3, 9, 1, 7, 12, 4, 0, 8};
  auto succ = [](const Node& n) {
    std::vector<Node> out;
    if (n.depth < 3) out = {{n.depth + 1, n.path * 2}, {n.depth + 1, n.path * 2 + 1}};
    return out;
  };
  auto score = [&](const Node& n) { return n.depth == 3 ? leaves[static_cast<std::size_t>(n.path)] : -1; };
  auto done = [](const std::vector<Node>&) { return false; };
  const Node best = generic_beam(Node{0, 0}, succ, score, done, 15);
  EXPECT_EQ(best.depth, 3);
  EXPECT_EQ(leaves[static_cast<std::size_t>(best.path)], 12);
}

TEST(GenericBeam, NarrowBeamIsGreedy) {
  // Level-1: left scores 10, right 1. Leaves: LL=2, LR=3, RL=100, RR=0.
  auto succ = [](const Node& n) {
    std::vector<Node> out;
    if (n.depth < 2) out = {{n.depth + 1, n.path * 2}, {n.depth + 1, n.path * 2 + 1}};
    return out;
  };
  auto score = [](const Node& n) {
    if (n.depth == 1) return n.path == 0 ? 10 : 1;
    if (n.depth == 2) return std::vector<int>{2, 3, 100, 0}[static_cast<std::size_t>(n.path)];
    return 0;
  };
  auto done = [](const std::vector<Node>&) { return false; };
  const Node greedy = generic_beam(Node{0, 0}, succ, score, done, 1);
  EXPECT_EQ(greedy.depth, 1);  // best ever seen is the level-1 node with score 10
  EXPECT_EQ(score(greedy), 10);
  const Node wide = generic_beam(Node{0, 0}, succ, score, done, 4);
  EXPECT_EQ(score(wide), 100);
}

TEST(GenericBeam, DonePredicateStops) {
  int calls = 0;
  auto r = generic_beam(
      0,
      [&](int s) {
        ++calls;
        return std::vector<int>{s + 1};
      },
      [](int s) { return s; }, [](const std::vector<int>& b) { return b.front() >= 4; }, 1);
  EXPECT_EQ(r, 4);
  EXPECT_EQ(calls, 4);
}

TEST(GenericBeam, ClosestSumAsScore) {
  // Closest-sum beam expressed through the generic engine: score = -|x - T|.
  const std::vector<std::int64_t> items{6, 5, 4};
  struct S {
    std::size_t layer;
    std::int64_t sum;
  };
  auto succ = [&](const S& s) {
    std::vector<S> out;
    if (s.layer < items.size()) out = {{s.layer + 1, s.sum}, {s.layer + 1, s.sum + items[s.layer]}};
    return out;
  };
  auto score = [](const S& s) { return -static_cast<std::int64_t>(detail::abs_diff(s.sum, 9)); };
  const S best = generic_beam(S{0, 0}, succ, score, [](const std::vector<S>&) { return false; }, 8);
  EXPECT_EQ(best.sum, 9);
}

TEST(ExpandAndTrim, Examples) {
  EXPECT_EQ(expand_and_trim({{0}, 1}, 5, 4, 1).candidates, (std::vector<std::int64_t>{5}));
  EXPECT_EQ(expand_and_trim({{0}, 2}, 5, 4, 2).candidates, (std::vector<std::int64_t>{0, 5}));
  EXPECT_EQ(expand_and_trim({{2, 8}, 2}, 3, 6, 2).candidates, (std::vector<std::int64_t>{5, 8}));
}

TEST(ExpandAndTrim, TieGoesToSmallerSum) {
  // Candidates 2 and 6 are both at distance 2 from 4.
  EXPECT_EQ(expand_and_trim({{2}, 1}, 4, 4, 1).candidates, (std::vector<std::int64_t>{2}));
}

TEST(ExpandAndTrim, Deduplicates) {
  const auto r = expand_and_trim({{0, 5}, 4}, 5, 100, 4);
  EXPECT_EQ(r.candidates, (std::vector<std::int64_t>{0, 5, 10}));
}

TEST(ExpandAndTrim, OverflowIsReported) {
  const auto big = std::numeric_limits<std::int64_t>::max() - 1;
  EXPECT_THROW(expand_and_trim({{big}, 2}, 5, 0, 2), overflow_error);
  EXPECT_THROW(expand_and_trim({{}, 2}, 5, 0, 2), invalid_argument);
  EXPECT_THROW(expand_and_trim({{0}, 2}, 5, 0, 0), invalid_argument);
}

TEST(ClosestBeam, Examples) {
  const std::vector<std::int64_t> a{3, 5};
  auto r = closest_beam_search(a, 8, 4);
  EXPECT_EQ(r.best_sum, 8);
  EXPECT_EQ(r.error, 0U);

  const std::vector<std::int64_t> b{6, 5, 4};
  r = closest_beam_search(b, 9, 1);
  EXPECT_EQ(r.best_sum, 11);
  EXPECT_EQ(r.error, 2U);
  EXPECT_EQ(testutil::brute_min_error(b, 9), 0U);

  r = closest_beam_search({}, 42, 3);
  EXPECT_EQ(r.best_sum, 0);
  EXPECT_EQ(r.error, 42U);
}

TEST(ClosestBeam, WidthBoundAndErrorMonotone) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = testutil::off_target_instance(120, 1'000'000'000, seed);
    for (std::size_t w : {1U, 2U, 7U, 32U}) {
      std::uint64_t last = std::numeric_limits<std::uint64_t>::max();
      closest_beam_search(inst.items, inst.T, w, [&](std::size_t, const BeamState& beam) {
        ASSERT_LE(beam.candidates.size(), w);
        ASSERT_TRUE(std::is_sorted(beam.candidates.begin(), beam.candidates.end()));
        ASSERT_EQ(std::adjacent_find(beam.candidates.begin(), beam.candidates.end()), beam.candidates.end());
        std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
        for (auto x : beam.candidates) best = std::min(best, detail::abs_diff(x, inst.T));
        ASSERT_LE(best, last);
        last = best;
      });
    }
  }
}

TEST(ClosestBeam, MatchesBruteForceWhenUnpruned) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + rng.uniform_index(16);
    const auto inst = testutil::off_target_instance(n, 1000, seed);
    const auto r = closest_beam_search(inst.items, inst.T, std::size_t{1} << n);
    ASSERT_EQ(r.error, testutil::brute_min_error(inst.items, inst.T)) << "seed " << seed;
  }
}

TEST(ClosestBeam, ExhaustiveDominatesAnyWidth) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = testutil::off_target_instance(12, 1'000'000, seed);
    const auto full = closest_beam_search(inst.items, inst.T, 4096).error;
    for (std::size_t w = 1; w <= 64; w *= 2) EXPECT_LE(full, closest_beam_search(inst.items, inst.T, w).error);
  }
}

TEST(ClosestWindow, MatchesSortByDistance) {
  Rng rng(3);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<std::int64_t> v;
    const std::size_t size = 1 + rng.uniform_index(40);
    for (std::size_t i = 0; i < size; ++i) v.push_back(rng.uniform_int(-50, 50));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    const std::int64_t T = rng.uniform_int(-70, 70);
    const std::size_t w = 1 + rng.uniform_index(10);
    auto ref = v;
    std::stable_sort(ref.begin(), ref.end(), [&](auto a, auto b) {
      const auto da = detail::abs_diff(a, T), db = detail::abs_diff(b, T);
      return da != db ? da < db : a < b;
    });
    ref.resize(std::min(w, ref.size()));
    std::sort(ref.begin(), ref.end());
    auto [first, last] = detail::closest_window(v, T, w);
    ASSERT_EQ(std::vector<std::int64_t>(v.begin() + static_cast<std::ptrdiff_t>(first),
                                        v.begin() + static_cast<std::ptrdiff_t>(last)),
              ref);
  }
}
