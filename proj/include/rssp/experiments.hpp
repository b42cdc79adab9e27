#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rssp/baselines.hpp"
#include "rssp/beam.hpp"
#include "rssp/error.hpp"
#include "rssp/instance.hpp"
#include "rssp/mitm.hpp"
#include "rssp/rng.hpp"
#include "rssp/variants.hpp"

namespace rssp {

// ---------------------------------------------------------------------------
// Methods

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"mitm", "mitm-equi", "plain", "bounded", "vector", "sa",
                                              "ga",   "pso",       "tabu",  "aoa",     "fptas",  "exact"};
  return names;
}

inline bool is_method(std::string_view m) {
  const auto& names = method_names();
  return std::find(names.begin(), names.end(), m) != names.end();
}

// ---------------------------------------------------------------------------
// Sweep configuration

struct SweepConfig {
  DistributionSpec distribution;
  std::size_t n = 200;
  std::size_t trials = 10;
  std::vector<std::size_t> w_grid{8, 16, 32, 64, 128, 256};
  SplitRule split = SplitRule::log_width(4.0);
  TargetRule target = TargetRule::random_subset();
  std::vector<std::string> methods{"mitm"};
  std::uint64_t master_seed = 1;
  std::size_t workers = 1;
  std::optional<std::uint32_t> k;              // bounded: default ceil(ln(n w)) + 8
  std::size_t d = 2;                           // vector dimension
  std::optional<std::uint64_t> baseline_budget;  // default 2 n w evaluations
  double fptas_eps = 0.1;
  bool timing = true;  // false: elapsed_ns is written as 0

  void validate() const {
    distribution.validate();
    if (trials < 1) throw invalid_argument("trials must be >= 1");
    if (n < 2) throw invalid_argument("n must be >= 2");
    if (w_grid.empty()) throw invalid_argument("w grid must not be empty");
    for (std::size_t i = 1; i < w_grid.size(); ++i) {
      if (w_grid[i] <= w_grid[i - 1]) throw invalid_argument("w grid must be strictly increasing");
    }
    if (w_grid.front() < 1) throw invalid_argument("w must be >= 1");
    if (methods.empty()) throw invalid_argument("at least one method is required");
    for (const auto& m : methods) {
      if (!is_method(m)) throw invalid_argument("unknown method '" + m + "'");
    }
    if (d == 0 || d > max_dimension) throw invalid_argument("vector dimension d must be in [1, 8]");
    if (workers < 1) throw invalid_argument("workers must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const SweepConfig& c) {
  j = nlohmann::json{{"distribution", c.distribution},
                     {"n", c.n},
                     {"trials", c.trials},
                     {"w_grid", c.w_grid},
                     {"split", c.split.tag()},
                     {"target", c.target.tag()},
                     {"methods", c.methods},
                     {"master_seed", c.master_seed},
                     {"workers", c.workers},
                     {"k", c.k ? nlohmann::json(*c.k) : nlohmann::json(nullptr)},
                     {"d", c.d},
                     {"baseline_budget", c.baseline_budget ? nlohmann::json(*c.baseline_budget) : nlohmann::json(nullptr)},
                     {"fptas_eps", c.fptas_eps},
                     {"timing", c.timing}};
}

inline void from_json(const nlohmann::json& j, SweepConfig& c) {
  c = SweepConfig{};
  if (j.contains("distribution")) c.distribution = j.at("distribution").get<DistributionSpec>();
  if (j.contains("n")) c.n = j.at("n").get<std::size_t>();
  if (j.contains("trials")) c.trials = j.at("trials").get<std::size_t>();
  if (j.contains("w_grid")) c.w_grid = j.at("w_grid").get<std::vector<std::size_t>>();
  if (j.contains("split")) c.split = parse_split_rule(j.at("split").get<std::string>());
  if (j.contains("target")) c.target = parse_target_rule(j.at("target").get<std::string>());
  if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
  if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("workers")) c.workers = j.at("workers").get<std::size_t>();
  if (j.contains("k") && !j.at("k").is_null()) c.k = j.at("k").get<std::uint32_t>();
  if (j.contains("d")) c.d = j.at("d").get<std::size_t>();
  if (j.contains("baseline_budget") && !j.at("baseline_budget").is_null()) {
    c.baseline_budget = j.at("baseline_budget").get<std::uint64_t>();
  }
  if (j.contains("fptas_eps")) c.fptas_eps = j.at("fptas_eps").get<double>();
  if (j.contains("timing")) c.timing = j.at("timing").get<bool>();
  c.validate();
}

/// Default cardinality budget for the bounded variant.
inline std::uint32_t default_bounded_k(std::size_t n, std::size_t w) {
  return static_cast<std::uint32_t>(std::ceil(std::log(static_cast<double>(n) * static_cast<double>(w)))) + 8;
}

// ---------------------------------------------------------------------------
// Records

struct TrialRecord {
  std::uint64_t trial_id = 0;
  std::string method;
  std::string distribution;
  std::uint64_t n = 0;
  std::int64_t B = 0;
  std::uint64_t w = 0;
  std::string split;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> error;  // empty for failed trials
  std::int64_t elapsed_ns = 0;
  nlohmann::json extras = nlohmann::json::object();

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

inline bool record_order(const TrialRecord& a, const TrialRecord& b) {
  return std::tie(a.w, a.trial_id, a.method) < std::tie(b.w, b.trial_id, b.method);
}

/// Seed for trial `trial_id` at grid position `w_index`.
inline std::uint64_t trial_seed(std::uint64_t master, std::size_t w_index, std::size_t trial_id) {
  return derive_seed(master, {static_cast<std::uint64_t>(w_index), static_cast<std::uint64_t>(trial_id)});
}

namespace detail {

inline std::int64_t nanos_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();
}

inline nlohmann::json optional_json(const std::optional<std::size_t>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

// Runs one method on one instance and fills error, elapsed and extras.
inline void run_method(const std::string& method, const Instance& inst, const SweepConfig& cfg, std::size_t w,
                       std::uint64_t seed, TrialRecord& rec) {
  nlohmann::json& ex = rec.extras;
  const auto t0 = std::chrono::steady_clock::now();
  if (method == "mitm" || method == "mitm-equi") {
    MitmOptions opt;
    opt.variant = method == "mitm" ? PhaseAVariant::bucket_random : PhaseAVariant::equi_sample;
    const auto r = mitm_solve(inst, w, cfg.split, seed, opt);
    rec.error = r.error;
    ex["t_hit"] = optional_json(r.trace.t_hit);
    ex["n_left"] = r.n_left;
    ex["anchors"] = r.anchors_kept;
    ex["fallback"] = r.fallback;
    ex["cardinality"] = r.cardinality;
  } else if (method == "plain") {
    rec.error = closest_beam_search(inst.items, inst.T, w).error;
  } else if (method == "bounded") {
    const std::uint32_t k = cfg.k.value_or(default_bounded_k(inst.size(), w));
    BoundedOptions opt;
    opt.split = cfg.split;
    const auto r = bounded_mitm_solve(inst, w, k, seed, opt);
    rec.error = r.result.error;
    ex["k"] = k;
    ex["cardinality"] = r.cardinality;
    ex["phase_b_cardinality"] = r.result.phase_b_cardinality;
    ex["fallback"] = r.result.fallback;
  } else if (method == "vector") {
    const auto vinst = make_vector_instance(cfg.distribution, inst.size(), cfg.d, seed);
    const auto t1 = std::chrono::steady_clock::now();
    const auto r = vector_mitm_solve(vinst, w, cfg.split, seed);
    rec.elapsed_ns = nanos_since(t1);
    rec.error = static_cast<std::uint64_t>(std::llround(r.error));
    ex["d"] = cfg.d;
    ex["error_l2"] = r.error;
    ex["error_sq"] = to_decimal(r.error_sq);
    ex["t_hit"] = optional_json(r.t_hit);
    ex["fallback"] = r.fallback;
    return;
  } else if (method == "fptas") {
    const std::int64_t s = fptas_gens_levner(inst.items, inst.T, cfg.fptas_eps);
    rec.error = abs_diff(s, inst.T);
    ex["eps"] = cfg.fptas_eps;
  } else if (method == "exact") {
    rec.error = exact_min_error(inst.items, inst.T).min_error;
  } else {
    MetaheuristicParams p;
    p.method = parse_metaheuristic(method);
    p.budget = cfg.baseline_budget.value_or(2 * static_cast<std::uint64_t>(inst.size()) * w);
    const auto r = run_metaheuristic(inst.items, inst.T, p, seed);
    rec.error = r.error;
    ex["evaluations"] = r.evaluations;
  }
  rec.elapsed_ns = nanos_since(t0);
}

}  // namespace detail

/// Runs every requested method on the instance of each (w, trial) pair.
/// Output is sorted by (w, trial_id, method) and independent of `workers`.
/// A failing solve becomes a row with an empty error and a "failure" extra.
inline std::vector<TrialRecord> run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const std::size_t tasks = cfg.w_grid.size() * cfg.trials;
  std::vector<std::vector<TrialRecord>> slots(tasks);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const std::size_t wi = t / cfg.trials, trial = t % cfg.trials;
      const std::size_t w = cfg.w_grid[wi];
      const std::uint64_t seed = trial_seed(cfg.master_seed, wi, trial);
      std::optional<Instance> inst;
      std::string gen_failure;
      try {
        inst = generate_instance(cfg.distribution, cfg.n, cfg.target, seed);
      } catch (const std::exception& e) {
        gen_failure = e.what();
      }
      for (const auto& method : cfg.methods) {
        TrialRecord rec;
        rec.trial_id = trial;
        rec.method = method;
        rec.distribution = cfg.distribution.tag();
        rec.n = cfg.n;
        rec.B = cfg.distribution.B;
        rec.w = w;
        rec.split = cfg.split.tag();
        rec.seed = seed;
        if (inst) {
          rec.extras["digest"] = digest(*inst);
          try {
            detail::run_method(method, *inst, cfg, w, seed, rec);
          } catch (const std::exception& e) {
            rec.error.reset();
            rec.extras["failure"] = e.what();
          }
        } else {
          rec.extras["failure"] = gen_failure;
        }
        if (!cfg.timing) rec.elapsed_ns = 0;
        slots[t].push_back(std::move(rec));
      }
    }
  };

  const std::size_t threads = std::min(cfg.workers, std::max<std::size_t>(1, tasks));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<TrialRecord> out;
  for (auto& s : slots) {
    for (auto& r : s) out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), record_order);
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation and fits

struct AggregateRow {
  std::string method;
  std::uint64_t n = 0;
  std::uint64_t w = 0;
  std::size_t count = 0;     // successful trials
  std::size_t failures = 0;
  double mean = 0.0;
  std::optional<double> sd;  // absent for single-record groups
  std::optional<double> se;
  double mean_elapsed_ns = 0.0;
};

inline void to_json(nlohmann::json& j, const AggregateRow& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"method", r.method}, {"n", r.n},          {"w", r.w},       {"count", r.count},
                     {"failures", r.failures}, {"mean", r.mean}, {"sd", opt(r.sd)}, {"se", opt(r.se)},
                     {"mean_elapsed_ns", r.mean_elapsed_ns}};
}

/// Per (method, n, w): mean error, unbiased sample sd, standard error and
/// mean elapsed time. Failed rows are counted but not averaged.
inline std::vector<AggregateRow> aggregate(const std::vector<TrialRecord>& records) {
  std::map<std::tuple<std::string, std::uint64_t, std::uint64_t>, std::vector<const TrialRecord*>> groups;
  for (const auto& r : records) groups[{r.method, r.n, r.w}].push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [key, rows] : groups) {
    AggregateRow a;
    std::tie(a.method, a.n, a.w) = key;
    long double sum = 0, elapsed = 0;
    for (const auto* r : rows) {
      if (!r->error) {
        ++a.failures;
        continue;
      }
      ++a.count;
      sum += static_cast<long double>(*r->error);
      elapsed += static_cast<long double>(r->elapsed_ns);
    }
    if (a.count > 0) {
      a.mean = static_cast<double>(sum / a.count);
      a.mean_elapsed_ns = static_cast<double>(elapsed / a.count);
    }
    if (a.count >= 2) {
      long double ss = 0;
      for (const auto* r : rows) {
        if (!r->error) continue;
        const long double dev = static_cast<long double>(*r->error) - a.mean;
        ss += dev * dev;
      }
      a.sd = static_cast<double>(std::sqrt(ss / (a.count - 1)));
      a.se = *a.sd / std::sqrt(static_cast<double>(a.count));
    }
    out.push_back(std::move(a));
  }
  return out;
}

struct FitResult {
  double exponent = -2.0;  // fixed exponent used for c
  double c = 0.0;
  double implied_C = 0.0;  // c * n / B
  double slope = 0.0;      // free least-squares slope in log-log space
  double intercept = 0.0;
  double residual = 0.0;   // RMS log residual of the fixed-exponent fit
  double slope_residual = 0.0;  // RMS log residual of the free fit
  std::size_t points = 0;
  std::vector<double> excluded;  // x values dropped for zero mean
};

inline void to_json(nlohmann::json& j, const FitResult& f) {
  j = nlohmann::json{{"exponent", f.exponent}, {"c", f.c},
                     {"implied_C", f.implied_C}, {"slope", f.slope},
                     {"intercept", f.intercept}, {"residual", f.residual},
                     {"slope_residual", f.slope_residual}, {"points", f.points},
                     {"excluded", f.excluded}};
}

/// Least-squares fits of y ~ c * x^p on log scale: c for the fixed exponent
/// p, plus the free slope. Non-positive y values are excluded and listed.
inline FitResult fit_power_law(const std::vector<double>& xs, const std::vector<double>& ys, double exponent,
                               double n = 0.0, double B = 0.0) {
  if (xs.size() != ys.size()) throw invalid_argument("fit needs matching x and y lengths");
  FitResult f;
  f.exponent = exponent;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0)) throw invalid_argument("fit needs positive x values");
    if (ys[i] > 0.0) {
      lx.push_back(std::log(xs[i]));
      ly.push_back(std::log(ys[i]));
    } else {
      f.excluded.push_back(xs[i]);
    }
  }
  f.points = lx.size();
  if (lx.empty()) throw invalid_argument("fit needs at least one positive mean");
  const auto m = static_cast<double>(lx.size());
  double log_c = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) log_c += ly[i] - exponent * lx[i];
  log_c /= m;
  f.c = std::exp(log_c);
  double rss = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (log_c + exponent * lx[i]);
    rss += r * r;
  }
  f.residual = std::sqrt(rss / m);
  if (n > 0.0 && B > 0.0) f.implied_C = f.c * n / B;

  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / m;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double rss_free = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (f.intercept + f.slope * lx[i]);
    rss_free += r * r;
  }
  f.slope_residual = std::sqrt(rss_free / m);
  return f;
}

/// Fixed-exponent c / w^p fit over one method's aggregate rows.
inline FitResult fit_fixed_exponent(const std::vector<AggregateRow>& agg, double exponent = -2.0,
                                    std::int64_t B = 0) {
  std::vector<double> xs, ys;
  double n = 0.0;
  for (const auto& a : agg) {
    if (a.count == 0) continue;
    xs.push_back(static_cast<double>(a.w));
    ys.push_back(a.mean);
    n = static_cast<double>(a.n);
  }
  return fit_power_law(xs, ys, exponent, n, static_cast<double>(B));
}

inline std::vector<AggregateRow> rows_for(const std::vector<AggregateRow>& agg, std::string_view method) {
  std::vector<AggregateRow> out;
  for (const auto& a : agg) {
    if (a.method == method) out.push_back(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Phase A coverage

struct CoverageReport {
  std::size_t w = 0;
  std::int64_t B = 0;
  double delta = 0.0;
  std::size_t trials = 0;
  double j_delta = 0.0;
  std::vector<std::size_t> iterations;  // per trial; cap + 1 when never filled
  std::map<std::string, double> quantiles;
  std::size_t exceed_count = 0;
  double exceed_fraction = 0.0;
  double wilson99_low = 0.0;
  double wilson99_high = 0.0;
  std::size_t unfilled = 0;
};

inline void to_json(nlohmann::json& j, const CoverageReport& r) {
  j = nlohmann::json{{"w", r.w},
                     {"B", r.B},
                     {"delta", r.delta},
                     {"trials", r.trials},
                     {"j_delta", r.j_delta},
                     {"quantiles", r.quantiles},
                     {"exceed_count", r.exceed_count},
                     {"exceed_fraction", r.exceed_fraction},
                     {"wilson99_low", r.wilson99_low},
                     {"wilson99_high", r.wilson99_high},
                     {"unfilled", r.unfilled}};
}

/// j = 7.96 log2 w + 5.19 log2(1/delta) + 1.
inline double coverage_bound(std::size_t w, double delta) {
  return 7.96 * std::log2(static_cast<double>(w)) + 5.19 * std::log2(1.0 / delta) + 1.0;
}

/// Wilson score interval for k successes in n trials at normal quantile z.
inline std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n), p = static_cast<double>(k) / nn, z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Layers of one-per-bucket Phase A (items uniform on [-B, B]) needed before
/// all w buckets are occupied; cap + 1 if that never happens.
inline std::size_t phase_a_fill_iterations(std::size_t w, std::int64_t B, Rng& rng, std::size_t cap) {
  const std::int64_t delta = std::max<std::int64_t>(1, B / static_cast<std::int64_t>(w));
  const std::int64_t half = B / 2;
  auto bucket = [&](std::int64_t x) {
    return std::min<std::uint64_t>(w - 1, static_cast<std::uint64_t>(x + half) / static_cast<std::uint64_t>(delta));
  };
  std::vector<std::int64_t> beam{0}, expanded, shifted, kept;
  for (std::size_t it = 1; it <= cap; ++it) {
    const std::int64_t s = rng.uniform_int(-B, B);
    shifted.clear();
    for (std::int64_t x : beam) shifted.push_back(x + s);
    expanded.clear();
    std::merge(beam.begin(), beam.end(), shifted.begin(), shifted.end(), std::back_inserter(expanded));
    expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());
    std::erase_if(expanded, [&](std::int64_t x) { return x < -half || x > half; });
    kept.clear();
    for (std::size_t r0 = 0; r0 < expanded.size();) {
      const auto b = bucket(expanded[r0]);
      std::size_t r1 = r0 + 1;
      while (r1 < expanded.size() && bucket(expanded[r1]) == b) ++r1;
      kept.push_back(expanded[r0 + (r1 - r0 == 1 ? 0 : rng.uniform_index(r1 - r0))]);
      r0 = r1;
    }
    beam.swap(kept);
    if (beam.size() == w) return it;
  }
  return cap + 1;
}

inline CoverageReport phase_a_coverage_experiment(std::size_t w, std::int64_t B, double delta, std::size_t trials,
                                                  std::uint64_t seed, std::size_t cap = 100'000) {
  if (w < 4) throw invalid_argument("coverage experiment needs w >= 4");
  if (!(delta > 0.0 && delta < 1.0)) throw invalid_argument("delta must lie in (0, 1)");
  if (B < static_cast<std::int64_t>(w)) throw invalid_argument("coverage experiment needs B >= w");
  CoverageReport r;
  r.w = w;
  r.B = B;
  r.delta = delta;
  r.trials = trials;
  r.j_delta = coverage_bound(w, delta);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(w), static_cast<std::uint64_t>(t)}));
    const std::size_t it = phase_a_fill_iterations(w, B, rng, cap);
    r.iterations.push_back(it);
    if (it > cap) ++r.unfilled;
    if (static_cast<double>(it) > r.j_delta) ++r.exceed_count;
  }
  if (trials > 0) {
    std::vector<std::size_t> sorted = r.iterations;
    std::sort(sorted.begin(), sorted.end());
    auto q = [&](double p) {
      return static_cast<double>(sorted[static_cast<std::size_t>(std::floor(p * static_cast<double>(sorted.size() - 1)))]);
    };
    r.quantiles = {{"min", q(0.0)},  {"p25", q(0.25)}, {"median", q(0.5)}, {"p75", q(0.75)},
                   {"p90", q(0.9)}, {"p99", q(0.99)}, {"max", q(1.0)}};
    r.exceed_fraction = static_cast<double>(r.exceed_count) / static_cast<double>(trials);
  }
  std::tie(r.wilson99_low, r.wilson99_high) = wilson_interval(r.exceed_count, trials, 2.5758293035489004);
  return r;
}

// ---------------------------------------------------------------------------
// CSV / JSONL

inline constexpr const char* csv_header = "trial_id,method,distribution,n,B,w,split,seed,error,elapsed_ns,extras_json";

enum class RecordFormat { csv, jsonl };

inline RecordFormat parse_record_format(std::string_view s) {
  if (s == "csv") return RecordFormat::csv;
  if (s == "jsonl") return RecordFormat::jsonl;
  throw invalid_argument("unknown format '" + std::string(s) + "'");
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// Splits RFC 4180 text into rows of fields.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && in.peek() == '\n') in.get(c);
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw invalid_argument("unterminated quoted CSV field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json record_json(const TrialRecord& r) {
  return nlohmann::json{{"trial_id", r.trial_id}, {"method", r.method}, {"distribution", r.distribution},
                        {"n", r.n},               {"B", r.B},           {"w", r.w},
                        {"split", r.split},       {"seed", r.seed},
                        {"error", r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr)},
                        {"elapsed_ns", r.elapsed_ns}, {"extras", r.extras}};
}

}  // namespace detail

inline void write_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << csv_header << '\n';
  for (const auto& r : records) {
    os << r.trial_id << ',' << detail::csv_field(r.method) << ',' << detail::csv_field(r.distribution) << ',' << r.n
       << ',' << r.B << ',' << r.w << ',' << detail::csv_field(r.split) << ',' << r.seed << ','
       << (r.error ? std::to_string(*r.error) : std::string()) << ',' << r.elapsed_ns << ','
       << detail::csv_field(r.extras.dump()) << '\n';
  }
}

inline std::vector<TrialRecord> read_csv(std::istream& in) {
  const auto rows = detail::parse_csv(in);
  if (rows.empty()) throw invalid_argument("CSV input is empty");
  std::string header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) header += (i ? "," : "") + rows[0][i];
  if (header != csv_header) throw invalid_argument("unexpected CSV header: " + header);
  std::vector<TrialRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 11) throw invalid_argument("CSV row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
    TrialRecord r;
    r.trial_id = std::stoull(f[0]);
    r.method = f[1];
    r.distribution = f[2];
    r.n = std::stoull(f[3]);
    r.B = std::stoll(f[4]);
    r.w = std::stoull(f[5]);
    r.split = f[6];
    r.seed = std::stoull(f[7]);
    if (!f[8].empty()) r.error = std::stoull(f[8]);
    r.elapsed_ns = std::stoll(f[9]);
    r.extras = nlohmann::json::parse(f[10]);
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_jsonl(std::ostream& os, const std::vector<TrialRecord>& records) {
  for (const auto& r : records) os << detail::record_json(r).dump() << '\n';
}

inline std::vector<TrialRecord> read_jsonl(std::istream& in) {
  std::vector<TrialRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    TrialRecord r;
    r.trial_id = j.at("trial_id").get<std::uint64_t>();
    r.method = j.at("method").get<std::string>();
    r.distribution = j.at("distribution").get<std::string>();
    r.n = j.at("n").get<std::uint64_t>();
    r.B = j.at("B").get<std::int64_t>();
    r.w = j.at("w").get<std::uint64_t>();
    r.split = j.at("split").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("error").is_null()) r.error = j.at("error").get<std::uint64_t>();
    r.elapsed_ns = j.at("elapsed_ns").get<std::int64_t>();
    r.extras = j.at("extras");
    out.push_back(std::move(r));
  }
  return out;
}

/// Writes records to `path`; I/O failures name the path.
inline void emit_records(const std::vector<TrialRecord>& records, const std::string& path, RecordFormat format) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw error("cannot open '" + path + "' for writing");
  if (format == RecordFormat::csv) {
    write_csv(os, records);
  } else {
    write_jsonl(os, records);
  }
  os.flush();
  if (!os) throw error("failed writing '" + path + "'");
}

inline std::vector<TrialRecord> load_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error("cannot open '" + path + "' for reading");
  const int first = in.peek();
  if (first == '{') return read_jsonl(in);
  return read_csv(in);
}

}  // namespace rssp
