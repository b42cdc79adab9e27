#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "rssp/baselines.hpp"
#include "rssp/mitm.hpp"
#include "test_util.hpp"

using namespace rssp;

namespace {

constexpr std::int64_t kBig = 1'000'000'000'000;

AnchorMesh manual_mesh(std::vector<std::int64_t> anchors, std::int64_t T, std::int64_t delta) {
  AnchorMesh m;
  m.delta = delta;
  m.half = 1'000'000;
  m.buckets = 64;
  m.anchors = anchors;
  for (auto a : anchors) {
    m.residuals.push_back(T - a);
    m.decision_masks.emplace_back();
    m.cardinalities.push_back(0);
  }
  return m;
}

}  // namespace

TEST(SplitPoint, Examples) {
  EXPECT_EQ(split_point(200, 64, SplitRule::log_width(4)), 24U);
  EXPECT_EQ(split_point(200, 64, SplitRule::half()), 100U);
  EXPECT_EQ(split_point(10, ~std::uint64_t{0}, SplitRule::log_width(4)), 9U);
  EXPECT_EQ(split_point(10, 1, SplitRule::log_width(4)), 1U);
  EXPECT_EQ(split_point(10, 64, SplitRule::fixed(0)), 1U);
  EXPECT_EQ(split_point(10, 64, SplitRule::fixed(50)), 9U);
  EXPECT_EQ(split_point(200, 128, SplitRule::fixed(2)), 2U);
  EXPECT_THROW(split_point(1, 64, SplitRule::half()), invalid_argument);
}

TEST(SplitPoint, Parse) {
  EXPECT_EQ(parse_split_rule("half").kind, SplitRule::Kind::half);
  EXPECT_EQ(parse_split_rule("fixed:3").k, 3U);
  EXPECT_DOUBLE_EQ(parse_split_rule("logw:2.5").c, 2.5);
  EXPECT_EQ(parse_split_rule("logw:4").tag(), "logw:4");
  EXPECT_EQ(parse_split_rule("fixed:7").tag(), "fixed:7");
  for (const char* bad : {"", "quarter", "fixed:", "fixed:-1", "logw:0", "logw:x"}) {
    EXPECT_THROW(parse_split_rule(bad), invalid_argument) << bad;
  }
}

TEST(PhaseA, BucketIndexing) {
  AnchorMesh m;
  m.delta = 100;
  m.half = 500;
  m.buckets = 10;
  EXPECT_EQ(m.bucket_of(-500), 0U);
  EXPECT_EQ(m.bucket_of(-401), 0U);
  EXPECT_EQ(m.bucket_of(-400), 1U);
  EXPECT_EQ(m.bucket_of(499), 9U);
  EXPECT_EQ(m.bucket_of(500), 9U);  // right edge joins the last bucket
}

TEST(PhaseA, OneLayerTwoCandidates) {
  const std::int64_t B = 1000;
  const std::vector<std::int64_t> left{300};
  const auto mesh = phase_a_build_mesh(left, 0, 8, B, 1, PhaseAVariant::bucket_random);
  EXPECT_EQ(mesh.delta, 125);
  EXPECT_EQ(mesh.buckets_filled, 2U);
  // Sorted {0, 300}; position 2 is deleted.
  ASSERT_EQ(mesh.anchors, (std::vector<std::int64_t>{0}));
  EXPECT_TRUE(mesh.sparse);
  EXPECT_EQ(mesh.residuals, (std::vector<std::int64_t>{0}));
}

TEST(PhaseA, RejectsBadArguments) {
  const std::vector<std::int64_t> left{1};
  EXPECT_THROW(phase_a_build_mesh(left, 0, 3, 100, 1, PhaseAVariant::bucket_random), invalid_argument);
  EXPECT_THROW(phase_a_build_mesh({}, 0, 8, 100, 1, PhaseAVariant::bucket_random), invalid_argument);
}

TEST(PhaseA, InvariantsHoldForBothVariants) {
  for (auto variant : {PhaseAVariant::bucket_random, PhaseAVariant::equi_sample}) {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
      for (std::size_t w : {4U, 16U, 64U, 256U}) {
        const auto inst = testutil::small_instance(30, kBig, seed);
        const std::size_t nl = split_point(30, w, SplitRule::log_width(4));
        const std::span<const std::int64_t> left(inst.items.data(), nl);
        const auto mesh = phase_a_build_mesh(left, inst.T, w, kBig, seed, variant);
        ASSERT_EQ(mesh.anchors.size(), mesh.residuals.size());
        ASSERT_EQ(mesh.anchors.size(), mesh.decision_masks.size());
        std::set<std::size_t> buckets;
        for (std::size_t a = 0; a < mesh.anchors.size(); ++a) {
          if (variant == PhaseAVariant::bucket_random) {
            ASSERT_GE(mesh.anchors[a], -kBig / 2);
            ASSERT_LE(mesh.anchors[a], kBig / 2);
          }
          ASSERT_EQ(subset_sum(left, mesh.left_indices(a)), mesh.anchors[a]);
          ASSERT_EQ(mesh.residuals[a], inst.T - mesh.anchors[a]);
          ASSERT_EQ(mesh.cardinalities[a], mesh.left_indices(a).size());
          if (a > 0) {
            ASSERT_LT(mesh.anchors[a - 1], mesh.anchors[a]);
            if (variant == PhaseAVariant::bucket_random) {
              ASSERT_GE(mesh.anchors[a] - mesh.anchors[a - 1], mesh.delta);
            }
          }
          if (variant == PhaseAVariant::bucket_random) { ASSERT_TRUE(buckets.insert(mesh.bucket_of(mesh.anchors[a])).second); }
        }
      }
    }
  }
}

TEST(PhaseA, EquiSampleIsDeterministic) {
  const auto inst = testutil::small_instance(30, kBig, 5);
  const std::span<const std::int64_t> left(inst.items.data(), 24);
  const auto a = phase_a_build_mesh(left, inst.T, 64, kBig, 1, PhaseAVariant::equi_sample);
  const auto b = phase_a_build_mesh(left, inst.T, 64, kBig, 999, PhaseAVariant::equi_sample);
  EXPECT_EQ(a.anchors, b.anchors);
}

TEST(PhaseA, EquiSampleSpansAllCandidates) {
  // Two items give sums {0, 300, 700, 1000}; w = 4 keeps all of them even
  // though 700 and 1000 fall outside [-B/2, B/2] for B = 1000.
  const std::vector<std::int64_t> left{300, 700};
  const auto equi = phase_a_build_mesh(left, 0, 4, 1000, 1, PhaseAVariant::equi_sample);
  EXPECT_EQ(equi.anchors, (std::vector<std::int64_t>{0, 700}));
  const auto bucket = phase_a_build_mesh(left, 0, 4, 1000, 1, PhaseAVariant::bucket_random);
  EXPECT_EQ(bucket.anchors, (std::vector<std::int64_t>{0}));
  EXPECT_TRUE(bucket.sparse);
}

TEST(PhaseA, CoverageAtDefaultSplit) {
  int full = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = testutil::small_instance(24, kBig, seed);
    const auto mesh = phase_a_build_mesh(inst.items, inst.T, 64, kBig, seed, PhaseAVariant::bucket_random);
    if (mesh.full_at_layer) ++full;
  }
  EXPECT_GE(full, 180);
}

TEST(ResidualIndexTest, BinarySearchMatchesLinearScan) {
  Rng rng(8);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t size = 1 + rng.uniform_index(1000);
    std::vector<std::pair<std::int64_t, std::size_t>> entries;
    for (std::size_t i = 0; i < size; ++i) entries.emplace_back(rng.uniform_int(-5000, 5000), i);
    const ResidualIndex idx(entries);
    for (int q = 0; q < 50; ++q) {
      const std::int64_t x = rng.uniform_int(-6000, 6000);
      const auto a = idx.nearest(x), b = idx.nearest_linear(x);
      ASSERT_EQ(a.distance, b.distance);
      ASSERT_EQ(a.residual, b.residual);
    }
  }
}

TEST(ResidualIndexTest, TiesGoToSmallerResidual) {
  const ResidualIndex idx({{10, 0}, {20, 1}});
  EXPECT_EQ(idx.nearest(15).residual, 10);
  EXPECT_EQ(idx.nearest(15).anchor, 0U);
}

TEST(PhaseB, SingleResidualExactHit) {
  const auto mesh = manual_mesh({0}, 12, 10);
  const std::vector<std::int64_t> right{5, 7, 100};
  const auto r = phase_b_search(right, mesh, 4);
  EXPECT_EQ(r.best.sum, 12);
  EXPECT_EQ(r.distance, 0U);
}

TEST(PhaseB, PreHitKeepsEverythingWhenSmall) {
  const auto mesh = manual_mesh({0, 100}, 1'000'000, 10);
  const std::vector<std::int64_t> right{1, 2, 4};
  const auto r = phase_b_search(right, mesh, 8);
  EXPECT_EQ(r.beam.size(), 8U);
  EXPECT_FALSE(r.trace.t_hit);
}

TEST(PhaseB, PostHitOnePerCell) {
  // Residuals r1 = 100, r2 = 1000; previous beam {98, 1005}; s = 3 expands to
  // {98, 101, 1005, 1008}: the cell representatives are 101 (d=1) and 1005 (d=5).
  auto mesh = manual_mesh({0, -900}, 100, 10);
  EligibleResiduals eligible(mesh, std::nullopt, false, 4);
  const std::vector<std::int64_t> right{3};
  PhaseBStepper step(right, eligible, 2, PhaseBConfig{8, 10, false, false, std::nullopt});
  const auto next = step(0, {{98, 0}, {1005, 0}});
  ASSERT_EQ(next.size(), 2U);
  EXPECT_EQ(next[0].sum, 101);
  EXPECT_EQ(next[1].sum, 1005);
  EXPECT_TRUE(step.last_stats().post_hit);
  EXPECT_EQ(step.last_stats().cells, 2U);
  EXPECT_EQ(step.last_stats().gap, 1U);
}

TEST(PhaseB, VoronoiTieGoesToSmallerResidual) {
  auto mesh = manual_mesh({0, -20}, 10, 100);  // residuals 10 and 30
  EligibleResiduals eligible(mesh, std::nullopt, false, 2);
  const std::vector<std::int64_t> right{20};
  PhaseBStepper step(right, eligible, 2, PhaseBConfig{8, 100, false, false, std::nullopt});
  EXPECT_EQ(step.score({20, 0}).anchor, 0U);
}

TEST(PhaseB, TraceInvariantsAfterHit) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = testutil::small_instance(200, kBig, seed);
    for (std::size_t w : {8U, 64U}) {
      const std::size_t nl = split_point(200, w, SplitRule::log_width(4));
      const std::span<const std::int64_t> all(inst.items);
      const auto mesh = phase_a_build_mesh(all.first(nl), inst.T, w, kBig, seed, PhaseAVariant::bucket_random);
      if (mesh.sparse) continue;
      const auto r = phase_b_search(all.subspan(nl), mesh, w);
      const auto& tr = r.trace;
      ASSERT_TRUE(tr.t_hit) << seed;
      for (std::size_t i = *tr.t_hit; i < tr.cells_filled.size(); ++i) {
        ASSERT_TRUE(tr.post_hit[i]);
        ASSERT_GE(tr.cells_filled[i], tr.cells_filled[i - 1]);
        ASSERT_LE(tr.gap_history[i], tr.gap_history[i - 1]);
      }
      ASSERT_LE(r.beam.size(), mesh.anchors.size());
      std::vector<std::pair<std::int64_t, std::size_t>> entries;
      for (std::size_t a = 0; a < mesh.residuals.size(); ++a) entries.emplace_back(mesh.residuals[a], a);
      const ResidualIndex idx(entries);
      std::set<std::size_t> cells;
      for (const auto& c : r.beam) ASSERT_TRUE(cells.insert(idx.nearest(c.sum).anchor).second);
    }
  }
}

TEST(PhaseB, TraceJsonLines) {
  PhaseBTrace tr;
  tr.t_hit = 2;
  tr.cells_filled = {3, 4};
  tr.gap_history = {50, 7};
  tr.post_hit = {false, true};
  std::ostringstream os;
  write_trace_jsonl(os, tr);
  EXPECT_EQ(os.str(),
            "{\"cells\":3,\"gap\":50,\"layer\":1,\"regime\":\"pre\"}\n"
            "{\"cells\":4,\"gap\":7,\"layer\":2,\"regime\":\"post\"}\n");
}

TEST(MitmSolve, OracleEquivalenceWhenExhaustive) {
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.uniform_index(11);
    const auto inst = testutil::off_target_instance(n, 1'000'000, seed);
    const auto r = mitm_solve(inst, std::size_t{1} << n, SplitRule::fixed(1), seed);
    ASSERT_EQ(r.error, testutil::brute_min_error(inst.items, inst.T)) << seed;
  }
}

TEST(MitmSolve, ResultInvariants) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = testutil::small_instance(200, kBig, seed);
    const auto r = mitm_solve(inst, 64, SplitRule::log_width(4), seed);
    EXPECT_EQ(r.best_total, r.anchor + r.phase_b_best);
    EXPECT_EQ(r.n_left, 24U);
    EXPECT_EQ(detail::abs_diff(r.original_total, inst.T), r.error);
    EXPECT_FALSE(r.fallback);
  }
}

TEST(MitmSolve, BeatsOrTiesPlainBeamMostOfTheTime) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto inst = testutil::small_instance(200, kBig, seed);
    const auto m = mitm_solve(inst, 64, SplitRule::log_width(4), seed).error;
    const auto p = closest_beam_search(inst.items, inst.T, 64).error;
    if (m <= p) ++wins;
  }
  EXPECT_GE(wins, 100);
}

TEST(MitmSolve, DeterministicPerSeed) {
  const auto inst = testutil::small_instance(200, kBig, 3);
  const auto a = mitm_solve(inst, 32, SplitRule::log_width(4), 11);
  const auto b = mitm_solve(inst, 32, SplitRule::log_width(4), 11);
  EXPECT_EQ(a.best_total, b.best_total);
  EXPECT_EQ(a.trace.cells_filled, b.trace.cells_filled);
}

TEST(MitmSolve, SparseMeshFallsBackToPlainBeam) {
  // With B = 1 the domain [-0, 0] holds a single anchor.
  const Instance inst{{1, -1, 1, 0, 1, -1}, 1, 2, std::nullopt};
  MitmOptions opt;
  opt.symmetrize = false;
  const auto r = mitm_solve(inst, 8, SplitRule::fixed(2), 1, opt);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.error, closest_beam_search(inst.items, inst.T, 8).error);
}

TEST(MitmSolve, RejectsTinyInputs) {
  const Instance one{{5}, 10, 5, std::nullopt};
  EXPECT_THROW(mitm_solve(one, 8, SplitRule::half(), 1), invalid_argument);
  const auto inst = testutil::small_instance(10, 100, 1);
  EXPECT_THROW(mitm_solve(inst, 3, SplitRule::half(), 1), invalid_argument);
}

TEST(MitmReconstruct, MatchesReportedError) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto inst = testutil::small_instance(100, kBig, seed);
    MitmOptions opt;
    opt.reconstruct = true;
    const auto r = mitm_solve(inst, 32, SplitRule::log_width(4), seed, opt);
    const auto subset = mitm_reconstruct(inst, r);
    ASSERT_EQ(detail::abs_diff(subset_sum(inst.items, subset), inst.T), r.error) << seed;
    ASSERT_EQ(subset_sum(inst.items, subset), r.original_total);
  }
}

TEST(MitmReconstruct, ZeroErrorHitsTarget) {
  // Fixed(1) split with w = 2^n is exhaustive, so the planted target is found.
  const auto inst = testutil::small_instance(10, 1000, 4);
  MitmOptions opt;
  opt.reconstruct = true;
  const auto r = mitm_solve(inst, 1024, SplitRule::fixed(1), 2, opt);
  ASSERT_EQ(r.error, 0U);
  EXPECT_EQ(subset_sum(inst.items, mitm_reconstruct(inst, r)), inst.T);
}

TEST(MitmReconstruct, FixedOneLeftItemNotTaken) {
  // Left item far outside [-B/2, B/2] can never be an anchor summand.
  Instance inst{{900, 10, 20, 30, 40}, 1000, 60, std::nullopt};
  MitmOptions opt;
  opt.symmetrize = false;
  opt.reconstruct = true;
  const auto r = mitm_solve(inst, 8, SplitRule::fixed(1), 1, opt);
  const auto subset = mitm_reconstruct(inst, r);
  EXPECT_EQ(std::count(subset.begin(), subset.end(), 0U), 0);
  EXPECT_EQ(subset_sum(inst.items, subset), 60);
}

TEST(MitmReconstruct, RequiresWitness) {
  const auto inst = testutil::small_instance(20, 1000, 4);
  const auto r = mitm_solve(inst, 16, SplitRule::half(), 2);
  EXPECT_THROW(mitm_reconstruct(inst, r), invalid_argument);
}
