#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rssp/error.hpp"
#include "rssp/instance.hpp"
#include "rssp/rng.hpp"

namespace rssp {

// ---------------------------------------------------------------------------
// Exact oracle

struct OracleResult {
  std::uint64_t min_error = 0;
  std::int64_t best_sum = 0;
  IndexSet witness;
};

inline constexpr std::size_t oracle_enumeration_limit = 24;
inline constexpr std::uint64_t oracle_dp_limit = 10'000'000;

namespace detail {

struct HalfSum {
  std::int64_t sum;
  std::uint32_t mask;
  friend bool operator<(const HalfSum& a, const HalfSum& b) {
    return a.sum != b.sum ? a.sum < b.sum : a.mask < b.mask;
  }
};

inline std::vector<HalfSum> enumerate_half(std::span<const std::int64_t> items) {
  std::vector<HalfSum> out{{0, 0}};
  out.reserve(std::size_t{1} << items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::size_t size = out.size();
    for (std::size_t k = 0; k < size; ++k) {
      out.push_back({checked_add(out[k].sum, items[i]), out[k].mask | (std::uint32_t{1} << i)});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline OracleResult oracle_split(std::span<const std::int64_t> items, std::int64_t T) {
  const std::size_t h = items.size() / 2;
  const auto left = enumerate_half(items.first(h));
  const auto right = enumerate_half(items.subspan(h));
  OracleResult best;
  bool found = false;
  std::uint32_t best_l = 0, best_r = 0;
  for (const auto& l : left) {
    const std::int64_t want = checked_sub(T, l.sum);
    auto it = std::lower_bound(right.begin(), right.end(), HalfSum{want, 0});
    for (auto cand : {it, it == right.begin() ? right.end() : std::prev(it)}) {
      if (cand == right.end()) continue;
      const std::int64_t s = checked_add(l.sum, cand->sum);
      const std::uint64_t e = abs_diff(s, T);
      if (!found || e < best.min_error || (e == best.min_error && s < best.best_sum)) {
        found = true;
        best.min_error = e;
        best.best_sum = s;
        best_l = l.mask;
        best_r = cand->mask;
      }
    }
    if (found && best.min_error == 0) break;
  }
  for (std::size_t i = 0; i < h; ++i) {
    if (best_l >> i & 1U) best.witness.push_back(i);
  }
  for (std::size_t i = h; i < items.size(); ++i) {
    if (best_r >> (i - h) & 1U) best.witness.push_back(i);
  }
  return best;
}

// Reachable sums over [-neg, pos], each tagged with the item that first
// reached it; walking those tags back yields a witness.
inline OracleResult oracle_dp(std::span<const std::int64_t> items, std::int64_t T, std::uint64_t neg,
                              std::uint64_t pos) {
  const std::size_t range = static_cast<std::size_t>(neg + pos + 1);
  const auto offset = static_cast<std::int64_t>(neg);
  constexpr std::int32_t unreached = -2, origin = -1;
  std::vector<std::int32_t> first(range, unreached);
  std::vector<std::int64_t> reached{0};
  first[static_cast<std::size_t>(offset)] = origin;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::size_t size = reached.size();
    for (std::size_t k = 0; k < size; ++k) {
      const std::int64_t s = reached[k] + items[i];
      auto& slot = first[static_cast<std::size_t>(s + offset)];
      if (slot == unreached) {
        slot = static_cast<std::int32_t>(i);
        reached.push_back(s);
      }
    }
  }
  OracleResult best;
  bool found = false;
  for (std::int64_t s : reached) {
    const std::uint64_t e = abs_diff(s, T);
    if (!found || e < best.min_error || (e == best.min_error && s < best.best_sum)) {
      found = true;
      best.min_error = e;
      best.best_sum = s;
    }
  }
  for (std::int64_t s = best.best_sum; first[static_cast<std::size_t>(s + offset)] != origin;) {
    const auto i = static_cast<std::size_t>(first[static_cast<std::size_t>(s + offset)]);
    best.witness.push_back(i);
    s -= items[i];
  }
  std::sort(best.witness.begin(), best.witness.end());
  return best;
}

}  // namespace detail

/// Exact minimum of |sum(V) - T| over all subsets V, with a witness. Uses
/// split enumeration for n <= 24 and an offset reachability DP when the
/// total absolute weight is at most 10^7.
inline OracleResult exact_min_error(std::span<const std::int64_t> items, std::int64_t T) {
  if (items.size() <= oracle_enumeration_limit) return detail::oracle_split(items, T);
  std::uint64_t neg = 0, pos = 0;
  for (std::int64_t x : items) {
    (x < 0 ? neg : pos) += detail::abs_diff(x, 0);
    if (neg + pos > oracle_dp_limit) throw oracle_too_large("instance too large for oracle");
  }
  return detail::oracle_dp(items, T, neg, pos);
}

// ---------------------------------------------------------------------------
// FPTAS

/// List-trimming approximation for nonnegative items: the returned sum s
/// satisfies s <= T and s >= best / (1 + eps), where best is the largest
/// subset sum not exceeding T. Returns 0 when no item fits.
inline std::int64_t fptas_gens_levner(std::span<const std::int64_t> items, std::int64_t T, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw invalid_argument("epsilon must lie in (0, 1)");
  if (T < 0) throw invalid_argument("FPTAS needs T >= 0");
  for (std::int64_t x : items) {
    if (x < 0) throw invalid_argument("FPTAS needs nonnegative items");
  }
  const long double delta = items.empty() ? 0.0L : static_cast<long double>(eps) / (2.0L * items.size());
  std::vector<std::int64_t> list{0}, merged, trimmed;
  for (std::int64_t x : items) {
    merged.clear();
    std::size_t a = 0, b = 0;
    while (a < list.size() || b < list.size()) {
      const bool from_shift = a == list.size() || (b < list.size() && list[b] + x < list[a]);
      const std::int64_t v = from_shift ? list[b++] + x : list[a++];
      if (v <= T && (merged.empty() || merged.back() != v)) merged.push_back(v);
    }
    trimmed.clear();
    trimmed.push_back(merged.front());
    long double last = static_cast<long double>(merged.front());
    for (std::size_t k = 1; k < merged.size(); ++k) {
      if (static_cast<long double>(merged[k]) > last * (1.0L + delta)) {
        trimmed.push_back(merged[k]);
        last = static_cast<long double>(merged[k]);
      }
    }
    list.swap(trimmed);
  }
  return list.back();
}

// ---------------------------------------------------------------------------
// Metaheuristics

enum class Metaheuristic { sa, ga, pso, tabu, aoa };

inline std::string_view to_string(Metaheuristic m) {
  switch (m) {
    case Metaheuristic::sa: return "sa";
    case Metaheuristic::ga: return "ga";
    case Metaheuristic::pso: return "pso";
    case Metaheuristic::tabu: return "tabu";
    case Metaheuristic::aoa: return "aoa";
  }
  return "?";
}

inline Metaheuristic parse_metaheuristic(std::string_view s) {
  for (auto m : {Metaheuristic::sa, Metaheuristic::ga, Metaheuristic::pso, Metaheuristic::tabu, Metaheuristic::aoa}) {
    if (s == to_string(m)) return m;
  }
  throw invalid_argument("unknown metaheuristic '" + std::string(s) + "'");
}

struct SaParams {
  double t_start = 0.0;  // 0: mean |item|
  double t_end = 1.0;
};
struct GaParams {
  std::size_t population = 50;
  std::size_t tournament = 3;
  double mutation = 0.0;  // 0: 1/n
  std::size_t elites = 1;
};
struct PsoParams {
  std::size_t swarm = 30;
  double inertia = 0.72;
  double c1 = 1.49;
  double c2 = 1.49;
  double vmax = 0.5;
};
struct TabuParams {
  std::size_t tenure = 7;
};
struct AoaParams {
  std::size_t population = 30;
  double moa_min = 0.2;
  double moa_max = 1.0;
  double alpha = 5.0;
  double mu = 0.499;
};

struct MetaheuristicParams {
  Metaheuristic method = Metaheuristic::sa;
  std::uint64_t budget = 10'000;  // objective evaluations
  std::optional<std::int64_t> time_cap_ns;
  SaParams sa;
  GaParams ga;
  PsoParams pso;
  TabuParams tabu;
  AoaParams aoa;

  void validate() const {
    if (budget == 0) throw invalid_argument("metaheuristic budget must be > 0");
    if (ga.population < 2 || pso.swarm < 2 || aoa.population < 2) {
      throw invalid_argument("population methods need at least 2 members");
    }
    if (ga.tournament < 1 || ga.elites >= ga.population) throw invalid_argument("invalid GA parameters");
    if (tabu.tenure < 1) throw invalid_argument("tabu tenure must be >= 1");
    if (sa.t_start < 0 || !(sa.t_end > 0)) throw invalid_argument("invalid SA temperatures");
  }
};

inline void to_json(nlohmann::json& j, const MetaheuristicParams& p) {
  j = nlohmann::json{
      {"method", to_string(p.method)},
      {"budget", p.budget},
      {"time_cap_ns", p.time_cap_ns ? nlohmann::json(*p.time_cap_ns) : nlohmann::json(nullptr)},
      {"sa", {{"t_start", p.sa.t_start}, {"t_end", p.sa.t_end}}},
      {"ga",
       {{"population", p.ga.population},
        {"tournament", p.ga.tournament},
        {"mutation", p.ga.mutation},
        {"elites", p.ga.elites}}},
      {"pso",
       {{"swarm", p.pso.swarm}, {"inertia", p.pso.inertia}, {"c1", p.pso.c1}, {"c2", p.pso.c2}, {"vmax", p.pso.vmax}}},
      {"tabu", {{"tenure", p.tabu.tenure}}},
      {"aoa",
       {{"population", p.aoa.population},
        {"moa_min", p.aoa.moa_min},
        {"moa_max", p.aoa.moa_max},
        {"alpha", p.aoa.alpha},
        {"mu", p.aoa.mu}}},
  };
}

inline void from_json(const nlohmann::json& j, MetaheuristicParams& p) {
  p = MetaheuristicParams{};
  p.method = parse_metaheuristic(j.at("method").get<std::string>());
  if (j.contains("budget")) p.budget = j.at("budget").get<std::uint64_t>();
  if (j.contains("time_cap_ns") && !j.at("time_cap_ns").is_null()) p.time_cap_ns = j.at("time_cap_ns").get<std::int64_t>();
  auto get = [&j](const char* group, const char* key, auto& field) {
    if (j.contains(group) && j.at(group).contains(key)) j.at(group).at(key).get_to(field);
  };
  get("sa", "t_start", p.sa.t_start);
  get("sa", "t_end", p.sa.t_end);
  get("ga", "population", p.ga.population);
  get("ga", "tournament", p.ga.tournament);
  get("ga", "mutation", p.ga.mutation);
  get("ga", "elites", p.ga.elites);
  get("pso", "swarm", p.pso.swarm);
  get("pso", "inertia", p.pso.inertia);
  get("pso", "c1", p.pso.c1);
  get("pso", "c2", p.pso.c2);
  get("pso", "vmax", p.pso.vmax);
  get("tabu", "tenure", p.tabu.tenure);
  get("aoa", "population", p.aoa.population);
  get("aoa", "moa_min", p.aoa.moa_min);
  get("aoa", "moa_max", p.aoa.moa_max);
  get("aoa", "alpha", p.aoa.alpha);
  get("aoa", "mu", p.aoa.mu);
  p.validate();
}

struct MetaheuristicResult {
  std::int64_t best_sum = 0;
  std::uint64_t error = 0;
  IndexSet subset;
  std::uint64_t evaluations = 0;
};

namespace detail {

using Bits = std::vector<std::uint8_t>;

// Counts objective evaluations and remembers the best candidate seen.
class Evaluator {
 public:
  Evaluator(std::span<const std::int64_t> items, std::int64_t T, const MetaheuristicParams& p)
      : items_(items), T_(T), budget_(p.budget), cap_(p.time_cap_ns), t0_(std::chrono::steady_clock::now()) {}

  bool exhausted() const {
    if (used_ >= budget_) return true;
    if (cap_ && (used_ & 63) == 0) {
      const auto el = std::chrono::steady_clock::now() - t0_;
      if (std::chrono::duration_cast<std::chrono::nanoseconds>(el).count() >= *cap_) return true;
    }
    return false;
  }

  std::int64_t sum_of(const Bits& x) const {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i]) s = checked_add(s, items_[i]);
    }
    return s;
  }

  // Scores a candidate whose sum is already known.
  std::uint64_t record(const Bits& x, std::int64_t sum) {
    ++used_;
    const std::uint64_t e = abs_diff(sum, T_);
    if (!have_ || e < best_error_) {
      have_ = true;
      best_error_ = e;
      best_sum_ = sum;
      best_ = x;
    }
    return e;
  }

  std::uint64_t evaluate(const Bits& x) { return record(x, sum_of(x)); }

  std::size_t n() const { return items_.size(); }
  std::int64_t item(std::size_t i) const { return items_[i]; }
  std::uint64_t used() const { return used_; }
  std::uint64_t budget() const { return budget_; }

  MetaheuristicResult result() const {
    MetaheuristicResult r{best_sum_, best_error_, {}, used_};
    for (std::size_t i = 0; i < best_.size(); ++i) {
      if (best_[i]) r.subset.push_back(i);
    }
    return r;
  }

 private:
  std::span<const std::int64_t> items_;
  std::int64_t T_;
  std::uint64_t budget_;
  std::optional<std::int64_t> cap_;
  std::chrono::steady_clock::time_point t0_;
  std::uint64_t used_ = 0;
  bool have_ = false;
  std::uint64_t best_error_ = 0;
  std::int64_t best_sum_ = 0;
  Bits best_;
};

inline Bits random_bits(Rng& rng, std::size_t n) {
  Bits x(n);
  for (auto& b : x) b = rng.coin() ? 1 : 0;
  return x;
}

inline void run_sa(Evaluator& ev, Bits x, Rng& rng, const SaParams& p) {
  const std::size_t n = ev.n();
  std::int64_t sum = ev.sum_of(x);
  std::uint64_t err = ev.record(x, sum);
  if (n == 0) return;
  double t0 = p.t_start;
  if (t0 <= 0.0) {
    long double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += std::fabs(static_cast<long double>(ev.item(i)));
    t0 = std::max(p.t_end, static_cast<double>(total / n));
  }
  const double ratio = p.t_end / t0;
  const double steps = static_cast<double>(std::max<std::uint64_t>(1, ev.budget() - 1));
  for (std::uint64_t k = 0; !ev.exhausted(); ++k) {
    const double temp = t0 * std::pow(ratio, static_cast<double>(k) / steps);
    const std::size_t i = rng.uniform_index(n);
    const std::int64_t next_sum = x[i] ? checked_sub(sum, ev.item(i)) : checked_add(sum, ev.item(i));
    x[i] ^= 1;
    const std::uint64_t next_err = ev.record(x, next_sum);
    const double worse = static_cast<double>(next_err) - static_cast<double>(err);
    if (next_err <= err || rng.uniform01() < std::exp(-worse / temp)) {
      sum = next_sum;
      err = next_err;
    } else {
      x[i] ^= 1;
    }
  }
}

inline void run_tabu(Evaluator& ev, Bits x, const TabuParams& p) {
  const std::size_t n = ev.n();
  std::int64_t sum = ev.sum_of(x);
  std::uint64_t best_seen = ev.record(x, sum);
  if (n == 0) return;
  std::vector<std::uint64_t> tabu_until(n, 0);
  for (std::uint64_t iter = 1; !ev.exhausted(); ++iter) {
    std::optional<std::size_t> move;
    std::uint64_t move_err = 0;
    std::int64_t move_sum = 0;
    for (std::size_t i = 0; i < n && !ev.exhausted(); ++i) {
      const std::int64_t s = x[i] ? checked_sub(sum, ev.item(i)) : checked_add(sum, ev.item(i));
      x[i] ^= 1;
      const std::uint64_t e = ev.record(x, s);
      x[i] ^= 1;
      const bool allowed = tabu_until[i] < iter || e < best_seen;
      if (allowed && (!move || e < move_err)) {
        move = i;
        move_err = e;
        move_sum = s;
      }
    }
    if (!move) continue;
    x[*move] ^= 1;
    sum = move_sum;
    best_seen = std::min(best_seen, move_err);
    tabu_until[*move] = iter + p.tenure;
  }
}

inline void run_ga(Evaluator& ev, Bits x0, Rng& rng, const GaParams& p) {
  const std::size_t n = ev.n();
  const double mutation = p.mutation > 0.0 ? p.mutation : (n ? 1.0 / static_cast<double>(n) : 0.0);
  std::vector<Bits> pop;
  std::vector<std::uint64_t> fit;
  pop.push_back(std::move(x0));
  fit.push_back(ev.evaluate(pop.back()));
  while (pop.size() < p.population && !ev.exhausted()) {
    pop.push_back(random_bits(rng, n));
    fit.push_back(ev.evaluate(pop.back()));
  }
  auto tournament = [&]() -> const Bits& {
    std::size_t best = rng.uniform_index(pop.size());
    for (std::size_t k = 1; k < p.tournament; ++k) {
      const std::size_t c = rng.uniform_index(pop.size());
      if (fit[c] < fit[best]) best = c;
    }
    return pop[best];
  };
  std::vector<std::size_t> order(pop.size());
  while (!ev.exhausted()) {
    order.resize(pop.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });
    std::vector<Bits> next;
    std::vector<std::uint64_t> next_fit;
    for (std::size_t e = 0; e < p.elites && e < order.size(); ++e) {
      next.push_back(pop[order[e]]);
      next_fit.push_back(fit[order[e]]);
    }
    while (next.size() < pop.size() && !ev.exhausted()) {
      const Bits& a = tournament();
      const Bits& b = tournament();
      Bits child(n);
      for (std::size_t i = 0; i < n; ++i) {
        child[i] = rng.coin() ? a[i] : b[i];
        if (rng.uniform01() < mutation) child[i] ^= 1;
      }
      next_fit.push_back(ev.evaluate(child));
      next.push_back(std::move(child));
    }
    pop = std::move(next);
    fit = std::move(next_fit);
  }
}

inline Bits threshold(const std::vector<double>& pos) {
  Bits x(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) x[i] = pos[i] > 0.5 ? 1 : 0;
  return x;
}

inline void run_pso(Evaluator& ev, const Bits& x0, Rng& rng, const PsoParams& p) {
  const std::size_t n = ev.n();
  struct Particle {
    std::vector<double> pos, vel, best_pos;
    std::uint64_t best_err;
  };
  std::vector<Particle> swarm;
  std::vector<double> gbest;
  std::uint64_t gbest_err = std::numeric_limits<std::uint64_t>::max();
  for (std::size_t k = 0; k < p.swarm && !ev.exhausted(); ++k) {
    Particle pt;
    pt.pos.resize(n);
    pt.vel.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      pt.pos[i] = k == 0 ? (x0[i] ? 0.75 : 0.25) : rng.uniform01();
      pt.vel[i] = (2.0 * rng.uniform01() - 1.0) * p.vmax;
    }
    pt.best_pos = pt.pos;
    pt.best_err = ev.evaluate(threshold(pt.pos));
    if (pt.best_err < gbest_err) {
      gbest_err = pt.best_err;
      gbest = pt.pos;
    }
    swarm.push_back(std::move(pt));
  }
  while (!ev.exhausted()) {
    for (auto& pt : swarm) {
      if (ev.exhausted()) break;
      for (std::size_t i = 0; i < n; ++i) {
        const double r1 = rng.uniform01(), r2 = rng.uniform01();
        double v = p.inertia * pt.vel[i] + p.c1 * r1 * (pt.best_pos[i] - pt.pos[i]) + p.c2 * r2 * (gbest[i] - pt.pos[i]);
        v = std::clamp(v, -p.vmax, p.vmax);
        pt.vel[i] = v;
        pt.pos[i] = std::clamp(pt.pos[i] + v, 0.0, 1.0);
      }
      const std::uint64_t e = ev.evaluate(threshold(pt.pos));
      if (e < pt.best_err) {
        pt.best_err = e;
        pt.best_pos = pt.pos;
      }
      if (e < gbest_err) {
        gbest_err = e;
        gbest = pt.pos;
      }
    }
  }
}

inline void run_aoa(Evaluator& ev, const Bits& x0, Rng& rng, const AoaParams& p) {
  const std::size_t n = ev.n();
  constexpr double eps = 1e-12;
  std::vector<std::vector<double>> pop;
  std::vector<std::uint64_t> fit;
  std::vector<double> best;
  std::uint64_t best_err = std::numeric_limits<std::uint64_t>::max();
  for (std::size_t k = 0; k < p.population && !ev.exhausted(); ++k) {
    std::vector<double> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = k == 0 ? (x0[i] ? 0.75 : 0.25) : rng.uniform01();
    fit.push_back(ev.evaluate(threshold(pos)));
    if (fit.back() < best_err) {
      best_err = fit.back();
      best = pos;
    }
    pop.push_back(std::move(pos));
  }
  const double iterations =
      std::max(1.0, static_cast<double>(ev.budget()) / static_cast<double>(std::max<std::size_t>(1, pop.size())));
  for (double t = 1; !ev.exhausted(); t += 1) {
    const double frac = std::min(1.0, t / iterations);
    const double moa = p.moa_min + frac * (p.moa_max - p.moa_min);
    const double mop = 1.0 - std::pow(frac, 1.0 / p.alpha);
    for (std::size_t k = 0; k < pop.size() && !ev.exhausted(); ++k) {
      std::vector<double> cand(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double scale = p.mu;  // (ub - lb) * mu + lb with lb = 0, ub = 1
        const double r1 = rng.uniform01(), r2 = rng.uniform01();
        double v;
        if (r1 > moa) {
          v = r2 > 0.5 ? best[i] / (mop + eps) * scale : best[i] * mop * scale;
        } else {
          v = r2 > 0.5 ? best[i] - mop * scale : best[i] + mop * scale;
        }
        cand[i] = std::clamp(v, 0.0, 1.0);
      }
      const std::uint64_t e = ev.evaluate(threshold(cand));
      if (e < fit[k]) {
        fit[k] = e;
        pop[k] = std::move(cand);
        if (e < best_err) {
          best_err = e;
          best = pop[k];
        }
      }
    }
  }
}

}  // namespace detail

/// Bit-string search over inclusion vectors. Every method starts from the
/// same seeded random candidate, so a budget of one evaluation returns it.
inline MetaheuristicResult run_metaheuristic(std::span<const std::int64_t> items, std::int64_t T,
                                             const MetaheuristicParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(derive_seed(seed, stream::solver));
  detail::Evaluator ev(items, T, params);
  detail::Bits x0 = detail::random_bits(rng, items.size());
  switch (params.method) {
    case Metaheuristic::sa: detail::run_sa(ev, std::move(x0), rng, params.sa); break;
    case Metaheuristic::ga: detail::run_ga(ev, std::move(x0), rng, params.ga); break;
    case Metaheuristic::pso: detail::run_pso(ev, x0, rng, params.pso); break;
    case Metaheuristic::tabu: detail::run_tabu(ev, std::move(x0), params.tabu); break;
    case Metaheuristic::aoa: detail::run_aoa(ev, x0, rng, params.aoa); break;
  }
  return ev.result();
}

}  // namespace rssp
