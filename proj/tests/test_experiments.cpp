#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "rssp/experiments.hpp"

using namespace rssp;

namespace {

SweepConfig small_config() {
  SweepConfig c;
  c.distribution = {Family::uniform, Support::symmetric, 2, 1'000'000'000};
  c.n = 60;
  c.trials = 3;
  c.w_grid = {8, 16};
  c.methods = {"mitm", "plain", "bounded", "sa"};
  c.timing = false;
  return c;
}

TrialRecord record(std::string method, std::uint64_t w, std::optional<std::uint64_t> err) {
  TrialRecord r;
  r.method = std::move(method);
  r.n = 100;
  r.w = w;
  r.error = err;
  return r;
}

std::string to_csv(const std::vector<TrialRecord>& rs) {
  std::ostringstream os;
  write_csv(os, rs);
  return os.str();
}

}  // namespace

TEST(Sweep, SingleTrialProducesOneRecord) {
  SweepConfig c = small_config();
  c.trials = 1;
  c.w_grid = {8};
  c.methods = {"mitm"};
  const auto rs = run_sweep(c);
  ASSERT_EQ(rs.size(), 1U);
  EXPECT_EQ(rs[0].trial_id, 0U);
  EXPECT_EQ(rs[0].w, 8U);
  EXPECT_TRUE(rs[0].error.has_value());
  EXPECT_EQ(rs[0].seed, trial_seed(c.master_seed, 0, 0));
}

TEST(Sweep, ReproducibleAcrossRunsAndWorkerCounts) {
  SweepConfig c = small_config();
  const auto a = to_csv(run_sweep(c));
  EXPECT_EQ(a, to_csv(run_sweep(c)));
  c.workers = 4;
  EXPECT_EQ(a, to_csv(run_sweep(c)));
}

TEST(Sweep, MethodsSharePairedInstances) {
  const auto rs = run_sweep(small_config());
  ASSERT_EQ(rs.size(), 2U * 3U * 4U);
  for (std::size_t i = 0; i + 1 < rs.size(); ++i) EXPECT_FALSE(record_order(rs[i + 1], rs[i]));
  for (std::size_t i = 0; i < rs.size(); i += 4) {
    for (std::size_t j = 1; j < 4; ++j) {
      EXPECT_EQ(rs[i + j].seed, rs[i].seed);
      EXPECT_EQ(rs[i + j].extras.at("digest"), rs[i].extras.at("digest"));
    }
  }
  EXPECT_NE(rs[0].seed, rs[4].seed);
}

TEST(Sweep, DefaultBudgetsAreRecorded) {
  const auto rs = run_sweep(small_config());
  for (const auto& r : rs) {
    if (r.method == "sa") { EXPECT_EQ(r.extras.at("evaluations"), 2 * 60 * r.w); }
    if (r.method == "bounded") { EXPECT_EQ(r.extras.at("k"), default_bounded_k(60, r.w)); }
  }
  EXPECT_EQ(default_bounded_k(200, 64), 18U);  // ceil(ln 12800) = 10
}

TEST(Sweep, FailuresBecomeRowsWithoutError) {
  SweepConfig c = small_config();
  c.n = 30;
  c.w_grid = {8};
  c.methods = {"exact", "mitm"};
  c.distribution.B = 1'000'000'000'000;  // too large for the oracle once n > 24
  const auto rs = run_sweep(c);
  ASSERT_EQ(rs.size(), 6U);
  for (const auto& r : rs) {
    if (r.method == "exact") {
      EXPECT_FALSE(r.error);
      EXPECT_TRUE(r.extras.contains("failure"));
    } else {
      EXPECT_TRUE(r.error);
    }
  }
  const auto agg = aggregate(rs);
  ASSERT_EQ(agg.size(), 2U);
  EXPECT_EQ(agg[0].method, "exact");
  EXPECT_EQ(agg[0].failures, 3U);
  EXPECT_EQ(agg[0].count, 0U);

  std::stringstream ss;
  write_csv(ss, rs);
  EXPECT_EQ(read_csv(ss), rs);
}

TEST(Sweep, VectorAndBaselineMethodsRun) {
  SweepConfig c = small_config();
  c.n = 20;
  c.trials = 1;
  c.methods = {"vector", "fptas", "exact", "mitm-equi", "ga", "pso", "tabu", "aoa"};
  c.distribution.support = Support::nonnegative;
  const auto rs = run_sweep(c);
  for (const auto& r : rs) {
    if (r.method == "fptas") continue;
    EXPECT_TRUE(r.error) << r.method << " " << r.extras.dump();
  }
  for (const auto& r : rs) {
    if (r.method == "vector") {
      EXPECT_EQ(r.extras.at("d"), 2);
      EXPECT_EQ(*r.error, static_cast<std::uint64_t>(std::llround(r.extras.at("error_l2").get<double>())));
    }
  }
}

TEST(SweepConfig, JsonRoundTripAndValidation) {
  SweepConfig c = small_config();
  c.k = 12;
  c.baseline_budget = 500;
  nlohmann::json j = c;
  const auto back = j.get<SweepConfig>();
  EXPECT_EQ(nlohmann::json(back), j);

  auto bad = [&](auto mutate) {
    SweepConfig x = small_config();
    mutate(x);
    EXPECT_THROW(x.validate(), invalid_argument);
  };
  bad([](SweepConfig& x) { x.trials = 0; });
  bad([](SweepConfig& x) { x.n = 1; });
  bad([](SweepConfig& x) { x.w_grid = {}; });
  bad([](SweepConfig& x) { x.w_grid = {16, 8}; });
  bad([](SweepConfig& x) { x.methods = {"nope"}; });
  bad([](SweepConfig& x) { x.d = 0; });
  bad([](SweepConfig& x) { x.workers = 0; });
}

TEST(Aggregate, Examples) {
  auto agg = aggregate({record("m", 8, 2), record("m", 8, 4)});
  ASSERT_EQ(agg.size(), 1U);
  EXPECT_DOUBLE_EQ(agg[0].mean, 3.0);
  EXPECT_NEAR(*agg[0].sd, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(*agg[0].se, 1.0, 1e-12);

  agg = aggregate({record("m", 8, 5), record("m", 8, 5), record("m", 8, 5)});
  EXPECT_DOUBLE_EQ(*agg[0].sd, 0.0);

  agg = aggregate({record("m", 8, 7)});
  EXPECT_EQ(agg[0].count, 1U);
  EXPECT_FALSE(agg[0].sd);
  EXPECT_FALSE(agg[0].se);
}

TEST(Aggregate, GroupsByMethodAndWidth) {
  const auto agg = aggregate({record("b", 8, 1), record("a", 16, 2), record("a", 8, 3), record("a", 8, 5)});
  ASSERT_EQ(agg.size(), 3U);
  EXPECT_EQ(agg[0].method, "a");
  EXPECT_EQ(agg[0].w, 8U);
  EXPECT_DOUBLE_EQ(agg[0].mean, 4.0);
  EXPECT_EQ(rows_for(agg, "a").size(), 2U);
}

TEST(Aggregate, SyntheticMeanWithinThreeStandardErrors) {
  Rng rng(17);
  std::vector<TrialRecord> rs;
  for (int i = 0; i < 2000; ++i) rs.push_back(record("m", 8, rng.uniform_int(0, 1000)));
  const auto agg = aggregate(rs);
  EXPECT_LE(std::fabs(agg[0].mean - 500.0), 3.0 * *agg[0].se);
  EXPECT_NEAR(*agg[0].sd, 1001.0 / std::sqrt(12.0), 15.0);
}

TEST(Fit, ExactPowerLaws) {
  std::vector<double> xs{8, 16, 32, 64, 128}, inv2, inv1;
  for (double x : xs) {
    inv2.push_back(1000.0 / (x * x));
    inv1.push_back(1000.0 / x);
  }
  auto f = fit_power_law(xs, inv2, -2.0, 100, 1000);
  EXPECT_NEAR(f.c, 1000.0, 1e-9 * 1000.0);
  EXPECT_NEAR(f.slope, -2.0, 1e-9);
  EXPECT_NEAR(f.residual, 0.0, 1e-9);
  EXPECT_NEAR(f.implied_C, 100.0, 1e-6);
  f = fit_power_law(xs, inv1, -2.0);
  EXPECT_NEAR(f.slope, -1.0, 1e-9);
  EXPECT_GT(f.residual, 0.1);
}

TEST(Fit, ZeroMeansAreExcluded) {
  const std::vector<double> xs{8, 16, 32}, ys{1000.0 / 64, 1000.0 / 256, 0.0};
  const auto f = fit_power_law(xs, ys, -2.0);
  EXPECT_EQ(f.points, 2U);
  EXPECT_EQ(f.excluded, (std::vector<double>{32}));
  EXPECT_NEAR(f.c, 1000.0, 1e-6);
  EXPECT_THROW(fit_power_law({8}, {0.0}, -2.0), invalid_argument);
  EXPECT_THROW(fit_power_law({8, 16}, {1.0}, -2.0), invalid_argument);
}

TEST(Fit, FixedExponentFromAggregates) {
  std::vector<TrialRecord> rs;
  for (std::uint64_t w : {8, 16, 32}) rs.push_back(record("m", w, 65536 / (w * w)));
  const auto f = fit_fixed_exponent(aggregate(rs), -2.0, 1000);
  EXPECT_NEAR(f.c, 65536.0, 1e-6);
  EXPECT_NEAR(f.implied_C, 65536.0 * 100 / 1000, 1e-6);
}

TEST(Coverage, BoundValue) {
  EXPECT_NEAR(coverage_bound(64, 0.01), 7.96 * 6 + 5.19 * std::log2(100.0) + 1, 1e-12);
  EXPECT_NEAR(coverage_bound(64, 0.01), 83.24, 0.01);
}

TEST(Coverage, WilsonInterval) {
  auto [lo, hi] = wilson_interval(0, 100, 2.5758);
  EXPECT_DOUBLE_EQ(lo, 0.0);
  EXPECT_NEAR(hi, 0.0622, 0.001);
  std::tie(lo, hi) = wilson_interval(50, 100, 1.96);
  EXPECT_NEAR(lo, 0.4038, 0.001);
  EXPECT_NEAR(hi, 0.5962, 0.001);
}

TEST(Coverage, SmallWidthFillsQuickly) {
  const auto r = phase_a_coverage_experiment(4, 1'000'000, 0.01, 200, 5);
  EXPECT_GE(r.quantiles.at("median"), 2.0);
  EXPECT_EQ(r.unfilled, 0U);
  EXPECT_EQ(r.iterations.size(), 200U);
  EXPECT_LE(r.wilson99_low, r.exceed_fraction);
  EXPECT_GE(r.wilson99_high, r.exceed_fraction);
}

TEST(Coverage, ExceedanceIsRareAtModerateWidth) {
  const auto r = phase_a_coverage_experiment(64, 1'000'000'000, 0.01, 200, 9);
  EXPECT_EQ(r.unfilled, 0U);
  EXPECT_LE(r.exceed_fraction, 0.05);
  const auto again = phase_a_coverage_experiment(64, 1'000'000'000, 0.01, 200, 9);
  EXPECT_EQ(again.iterations, r.iterations);
}

TEST(Coverage, RejectsBadArguments) {
  EXPECT_THROW(phase_a_coverage_experiment(2, 1000, 0.01, 10, 1), invalid_argument);
  EXPECT_THROW(phase_a_coverage_experiment(8, 1000, 0.0, 10, 1), invalid_argument);
  EXPECT_THROW(phase_a_coverage_experiment(8, 4, 0.01, 10, 1), invalid_argument);
}

TEST(Csv, EmptyIsHeaderOnly) {
  EXPECT_EQ(to_csv({}), std::string(csv_header) + "\n");
  std::istringstream in(to_csv({}));
  EXPECT_TRUE(read_csv(in).empty());
}

TEST(Csv, QuotingRoundTrip) {
  TrialRecord r = record("mitm", 64, 12345);
  r.distribution = "weird,\"name\"\nline";
  r.extras = {{"note", "a,b \"c\""}, {"x", 1}};
  std::stringstream ss;
  write_csv(ss, {r});
  const auto back = read_csv(ss);
  ASSERT_EQ(back.size(), 1U);
  EXPECT_EQ(back[0], r);
}

TEST(Csv, ManyRecordsRoundTripBothFormats) {
  Rng rng(3);
  std::vector<TrialRecord> rs;
  for (std::uint64_t i = 0; i < 10'000; ++i) {
    TrialRecord r = record(i % 3 ? "plain" : "mitm", 8 << (i % 4), std::nullopt);
    r.trial_id = i;
    r.seed = rng.next_u64();
    r.B = rng.uniform_int(1, 1'000'000'000'000);
    if (i % 7) r.error = rng.next_u64() >> 1;
    r.elapsed_ns = rng.uniform_int(0, 1'000'000);
    r.extras = {{"digest", std::to_string(r.seed)}};
    rs.push_back(std::move(r));
  }
  std::stringstream csv, jsonl;
  write_csv(csv, rs);
  write_jsonl(jsonl, rs);
  EXPECT_EQ(read_csv(csv), rs);
  EXPECT_EQ(read_jsonl(jsonl), rs);
}

TEST(Csv, RejectsMalformedInput) {
  std::istringstream bad_header("a,b,c\n");
  EXPECT_THROW(read_csv(bad_header), invalid_argument);
  std::istringstream short_row(std::string(csv_header) + "\n1,2\n");
  EXPECT_THROW(read_csv(short_row), invalid_argument);
  std::istringstream open_quote(std::string(csv_header) + "\n\"abc\n");
  EXPECT_THROW(read_csv(open_quote), invalid_argument);
  EXPECT_THROW(parse_record_format("xml"), invalid_argument);
}

TEST(Csv, FileEmitAndLoad) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto rs = run_sweep(small_config());
  for (auto fmt : {RecordFormat::csv, RecordFormat::jsonl}) {
    const auto path = (dir / (fmt == RecordFormat::csv ? "rssp_test.csv" : "rssp_test.jsonl")).string();
    emit_records(rs, path, fmt);
    EXPECT_EQ(load_records(path), rs);
    std::remove(path.c_str());
  }
  EXPECT_THROW(emit_records(rs, "/nonexistent/dir/x.csv", RecordFormat::csv), error);
  EXPECT_THROW(load_records("/nonexistent/dir/x.csv"), error);
}
