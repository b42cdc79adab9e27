#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rssp/error.hpp"
#include "rssp/rng.hpp"

namespace rssp {

/// Sorted, duplicate-free list of item indices.
using IndexSet = std::vector<std::size_t>;

enum class Family { uniform, normal, lognormal, bimodal, student_t };
enum class Support { symmetric, nonnegative };

struct DistributionSpec {
  Family family = Family::uniform;
  Support support = Support::symmetric;
  unsigned nu = 2;  // Student's t degrees of freedom
  std::int64_t B = 1'000'000'000'000;

  void validate() const {
    if (B < 1) throw invalid_argument("distribution magnitude B must be >= 1");
    if (nu < 1) throw invalid_argument("student-t degrees of freedom must be >= 1");
  }

  /// Short tag used in benchmark records, e.g. "studentt1-symmetric".
  std::string tag() const;
};

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::uniform: return "uniform";
    case Family::normal: return "normal";
    case Family::lognormal: return "lognormal";
    case Family::bimodal: return "bimodal";
    case Family::student_t: return "studentt";
  }
  return "uniform";
}

inline std::string_view to_string(Support s) {
  return s == Support::symmetric ? "symmetric" : "nonnegative";
}

inline Family parse_family(std::string_view s) {
  if (s == "uniform") return Family::uniform;
  if (s == "normal") return Family::normal;
  if (s == "lognormal") return Family::lognormal;
  if (s == "bimodal") return Family::bimodal;
  if (s == "studentt" || s == "student_t" || s == "t") return Family::student_t;
  throw invalid_argument("unknown distribution family '" + std::string(s) + "'");
}

inline Support parse_support(std::string_view s) {
  if (s == "symmetric") return Support::symmetric;
  if (s == "nonnegative") return Support::nonnegative;
  throw invalid_argument("unknown support '" + std::string(s) + "'");
}

inline std::string DistributionSpec::tag() const {
  std::string out(to_string(family));
  if (family == Family::student_t) out += std::to_string(nu);
  out += '-';
  out += to_string(support);
  return out;
}

inline void to_json(nlohmann::json& j, const DistributionSpec& d) {
  j = nlohmann::json{{"family", to_string(d.family)},
                     {"support", to_string(d.support)},
                     {"B", d.B},
                     {"nu", d.nu}};
}

inline void from_json(const nlohmann::json& j, DistributionSpec& d) {
  d = DistributionSpec{};
  if (j.contains("family")) d.family = parse_family(j.at("family").get<std::string>());
  if (j.contains("support")) d.support = parse_support(j.at("support").get<std::string>());
  if (j.contains("B")) d.B = j.at("B").get<std::int64_t>();
  if (j.contains("nu")) d.nu = j.at("nu").get<unsigned>();
  d.validate();
}

struct Instance {
  std::vector<std::int64_t> items;
  std::int64_t B = 1;
  std::int64_t T = 0;
  std::optional<IndexSet> planted;

  std::size_t size() const { return items.size(); }

  /// Checks |items[i]| <= B and, when present, that the planted subset hits T.
  void validate() const;
};

inline std::int64_t subset_sum(std::span<const std::int64_t> items, const IndexSet& subset) {
  std::int64_t s = 0;
  for (std::size_t i : subset) {
    if (i >= items.size()) throw invalid_argument("subset index " + std::to_string(i) + " out of range");
    s = detail::checked_add(s, items[i]);
  }
  return s;
}

inline void Instance::validate() const {
  if (B < 1) throw invalid_argument("instance bound B must be >= 1");
  for (std::int64_t x : items) {
    if (x > B || x < -B) throw invalid_argument("item " + std::to_string(x) + " exceeds bound B");
  }
  if (planted && subset_sum(items, *planted) != T) {
    throw invalid_argument("planted subset does not sum to the target");
  }
}

inline void to_json(nlohmann::json& j, const Instance& inst) {
  j = nlohmann::json{{"B", inst.B}, {"T", inst.T}, {"items", inst.items}};
  if (inst.planted) j["planted"] = *inst.planted;
}

inline void from_json(const nlohmann::json& j, Instance& inst) {
  inst = Instance{};
  inst.B = j.at("B").get<std::int64_t>();
  inst.T = j.at("T").get<std::int64_t>();
  inst.items = j.at("items").get<std::vector<std::int64_t>>();
  if (j.contains("planted") && !j.at("planted").is_null()) inst.planted = j.at("planted").get<IndexSet>();
  inst.validate();
}

/// FNV-1a over (T, items); used to prove paired trials saw the same instance.
inline std::uint64_t digest(const Instance& inst) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](std::int64_t v) {
    auto u = static_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (u >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  feed(inst.T);
  feed(static_cast<std::int64_t>(inst.items.size()));
  for (std::int64_t x : inst.items) feed(x);
  return h;
}

namespace detail {

// Round half away from zero, then clip to [lo, hi].
inline std::int64_t round_clip(double v, std::int64_t lo, std::int64_t hi) {
  if (std::isnan(v)) v = 0.0;
  const double r = std::round(v);
  if (r <= static_cast<double>(lo)) return lo;
  if (r >= static_cast<double>(hi)) return hi;
  return std::clamp(static_cast<std::int64_t>(r), lo, hi);
}

}  // namespace detail

/// Draws n i.i.d. integers from `spec`. Deterministic in (spec, n, seed).
///
/// Parameterisation: Normal has sd B/3; Bimodal uses modes +-B/3 (symmetric)
/// or {0, B} (nonnegative) with sd B/10; Student's t is scaled by B/4;
/// Lognormal has sigma_log = 1 and median B/8, with a random sign in the
/// symmetric form. Nonnegative forms of Normal and t take |X|.
inline std::vector<std::int64_t> sample_items(const DistributionSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const std::int64_t B = spec.B;
  const bool sym = spec.support == Support::symmetric;
  const std::int64_t lo = sym ? -B : 0;
  const double Bd = static_cast<double>(B);

  std::vector<std::int64_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = 0.0;
    switch (spec.family) {
      case Family::uniform:
        out.push_back(rng.uniform_int(lo, B));
        continue;
      case Family::normal:
        v = Bd / 3.0 * rng.normal();
        if (!sym) v = std::fabs(v);
        break;
      case Family::lognormal:
        v = Bd / 8.0 * std::exp(rng.normal());
        if (sym && rng.coin()) v = -v;
        break;
      case Family::bimodal:
        if (sym) {
          const double mode = rng.coin() ? Bd / 3.0 : -Bd / 3.0;
          v = mode + Bd / 10.0 * rng.normal();
        } else {
          const double mode = rng.coin() ? Bd : 0.0;
          v = mode + Bd / 10.0 * rng.normal();
        }
        break;
      case Family::student_t:
        v = Bd / 4.0 * rng.student_t(spec.nu);
        if (!sym) v = std::fabs(v);
        break;
    }
    out.push_back(detail::round_clip(v, lo, B));
  }
  return out;
}

struct TargetRule {
  enum class Kind { random_subset, tail_fraction, zero };
  Kind kind = Kind::random_subset;
  double fraction = 0.75;

  static TargetRule random_subset() { return {}; }
  static TargetRule tail(double f) { return {Kind::tail_fraction, f}; }
  static TargetRule zero() { return {Kind::zero, 0.0}; }

  std::string tag() const {
    if (kind == Kind::random_subset) return "random";
    if (kind == Kind::zero) return "zero";
    std::string s = std::to_string(fraction);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return "tail:" + s;
  }
};

inline TargetRule parse_target_rule(std::string_view s) {
  if (s == "random") return TargetRule::random_subset();
  if (s == "zero") return TargetRule::zero();
  if (s.starts_with("tail:")) {
    const double f = std::stod(std::string(s.substr(5)));
    return TargetRule::tail(f);
  }
  throw invalid_argument("unknown target rule '" + std::string(s) + "'");
}

struct TargetResult {
  std::int64_t T = 0;
  std::optional<IndexSet> planted;
};

/// RandomSubset: T is the sum of a Bernoulli(1/2) subset, returned as the
/// planted solution. TailFraction(f): T = round(f * sum(items)), no plant.
/// Zero: T = 0, the canonical setting for bounded cardinality.
inline TargetResult make_target(std::span<const std::int64_t> items, const TargetRule& rule, std::uint64_t seed) {
  TargetResult out;
  if (rule.kind == TargetRule::Kind::random_subset) {
    if (items.empty()) throw invalid_argument("random-subset target needs at least one item");
    Rng rng(seed);
    IndexSet planted;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (rng.coin()) {
        planted.push_back(i);
        out.T = detail::checked_add(out.T, items[i]);
      }
    }
    out.planted = std::move(planted);
    return out;
  }
  if (rule.kind == TargetRule::Kind::zero) return out;
  if (!(rule.fraction > 0.0 && rule.fraction <= 1.0)) {
    throw invalid_argument("tail fraction must lie in (0, 1]");
  }
  std::int64_t total = 0;
  for (std::int64_t x : items) total = detail::checked_add(total, x);
  out.T = static_cast<std::int64_t>(std::llround(static_cast<long double>(rule.fraction) * total));
  return out;
}

/// Samples items and a target in one go, with independent sub-streams.
inline Instance generate_instance(const DistributionSpec& spec, std::size_t n, const TargetRule& rule,
                                  std::uint64_t seed) {
  Instance inst;
  inst.B = spec.B;
  inst.items = sample_items(spec, n, derive_seed(seed, stream::instance));
  if (n == 0 && rule.kind == TargetRule::Kind::random_subset) {
    inst.planted = IndexSet{};
    return inst;
  }
  auto target = make_target(inst.items, rule, derive_seed(seed, stream::target));
  inst.T = target.T;
  inst.planted = std::move(target.planted);
  return inst;
}

/// Which indices were negated, and the target shift that goes with it.
struct SymmetrizationRecord {
  std::vector<bool> flipped;
  std::int64_t original_T = 0;
  std::int64_t new_T = 0;
};

namespace detail {

inline IndexSet symmetric_difference(const IndexSet& subset, const std::vector<bool>& flipped) {
  std::vector<bool> member(flipped.size(), false);
  for (std::size_t i : subset) {
    if (i >= flipped.size()) throw invalid_argument("subset index " + std::to_string(i) + " out of range");
    member[i] = true;
  }
  IndexSet out;
  for (std::size_t i = 0; i < flipped.size(); ++i) {
    if (member[i] != flipped[i]) out.push_back(i);
  }
  return out;
}

}  // namespace detail

/// Applies an explicit flip set: items'[i] = -items[i] on flipped indices and
/// T' = T - sum of the flipped originals.
inline std::pair<Instance, SymmetrizationRecord> symmetrize_with(const Instance& inst, std::vector<bool> flipped) {
  if (flipped.size() != inst.items.size()) throw invalid_argument("flip mask size mismatch");
  Instance out = inst;
  SymmetrizationRecord rec{std::move(flipped), inst.T, inst.T};
  for (std::size_t i = 0; i < inst.items.size(); ++i) {
    if (!rec.flipped[i]) continue;
    out.items[i] = detail::checked_neg(inst.items[i]);
    rec.new_T = detail::checked_sub(rec.new_T, inst.items[i]);
  }
  out.T = rec.new_T;
  if (inst.planted) out.planted = detail::symmetric_difference(*inst.planted, rec.flipped);
  return {std::move(out), std::move(rec)};
}

/// Bernoulli(1/2) sign flip per index. Preserves every achievable |sum - T|.
inline std::pair<Instance, SymmetrizationRecord> symmetrize(const Instance& inst, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<bool> flipped(inst.items.size());
  for (std::size_t i = 0; i < flipped.size(); ++i) flipped[i] = rng.coin();
  return symmetrize_with(inst, std::move(flipped));
}

/// Maps a subset of the transformed instance back to the original one.
inline IndexSet desymmetrize_subset(const SymmetrizationRecord& rec, const IndexSet& subset) {
  return detail::symmetric_difference(subset, rec.flipped);
}

}  // namespace rssp
