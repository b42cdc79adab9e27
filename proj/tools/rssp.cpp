#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rssp/rssp.hpp"

namespace {

using nlohmann::json;

// Bad flag values: reported like parse errors (exit 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string dist = "uniform";
  std::string support = "symmetric";
  unsigned nu = 2;
  std::size_t n = 200;
  std::int64_t B = 1'000'000'000'000;
  std::size_t w = 64;
  std::string w_grid = "8,16,32,64,128,256";
  std::size_t trials = 10;
  std::string split = "logw:4";
  std::string method = "mitm";
  std::optional<std::uint32_t> k;
  std::size_t d = 2;
  std::uint64_t seed = 1;
  bool reconstruct = false;
  std::string out;
  std::string format = "csv";
  std::size_t workers = 1;
  std::string in;
  std::string config;
  double delta = 0.05;
  std::string trace;
  bool no_timing = false;
  std::string target = "random";
  double eps = 0.1;
  std::optional<std::uint64_t> budget;
  std::string index = "auto";
  double exponent = -2.0;
};

template <class F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const rssp::invalid_argument& e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  } catch (const json::exception& e) {
    throw UsageError(e.what());
  }
}

std::uint64_t resolved_seed(const Flags& f) {
  if (const char* env = std::getenv("RSSP_SEED"); env && *env) {
    return as_usage([&] {
      std::size_t pos = 0;
      const auto v = std::stoull(env, &pos);
      if (pos != std::string(env).size()) throw std::invalid_argument("RSSP_SEED is not an unsigned integer");
      return static_cast<std::uint64_t>(v);
    });
  }
  return f.seed;
}

rssp::DistributionSpec resolved_dist(const Flags& f) {
  return as_usage([&] {
    rssp::DistributionSpec d;
    d.family = rssp::parse_family(f.dist);
    d.support = rssp::parse_support(f.support);
    d.nu = f.nu;
    d.B = f.B;
    d.validate();
    return d;
  });
}

std::vector<std::size_t> parse_grid(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    std::size_t pos = 0;
    const auto v = std::stoull(part, &pos);
    if (pos != part.size()) throw std::invalid_argument("bad --w-grid entry '" + part + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  return as_usage([&] { return json::parse(in); });
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw rssp::error("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw rssp::error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------

void cmd_generate(const Flags& f) {
  const auto spec = resolved_dist(f);
  const auto seed = resolved_seed(f);
  const auto rule = as_usage([&] { return rssp::parse_target_rule(f.target); });
  json config{{"command", "generate"}, {"distribution", spec}, {"n", f.n}, {"seed", seed}, {"target", rule.tag()}};
  json out;
  if (f.method == "vector") {
    config["d"] = f.d;
    out = rssp::make_vector_instance(spec, f.n, f.d, seed);
  } else {
    out = rssp::generate_instance(spec, f.n, rule, seed);
  }
  out["config"] = config;
  write_output(f.out, out.dump() + "\n");
}

rssp::IndexSet plain_subset(const rssp::Instance& inst, std::size_t w) {
  const auto fwd = rssp::forward_with_checkpoints(inst.items, inst.T, w);
  return rssp::reconstruct_subset(inst.items, inst.T, w, fwd.best_sum, fwd.log);
}

void cmd_solve(const Flags& f) {
  const auto seed = resolved_seed(f);
  const auto split = as_usage([&] { return rssp::parse_split_rule(f.split); });
  const std::string& m = f.method;
  if (!rssp::is_method(m)) throw UsageError("unknown method '" + m + "'");
  if (f.reconstruct && (m == "vector" || m == "fptas")) {
    throw UsageError("--reconstruct is not available for method " + m);
  }

  json config{{"command", "solve"}, {"method", m}, {"w", f.w}, {"split", split.tag()}, {"seed", seed},
              {"reconstruct", f.reconstruct}};
  json result{{"method", m}};

  if (m == "vector") {
    rssp::VectorInstance vinst;
    if (!f.in.empty()) {
      vinst = as_usage([&] { return read_json_file(f.in).get<rssp::VectorInstance>(); });
      config["in"] = f.in;
    } else {
      const auto spec = resolved_dist(f);
      vinst = as_usage([&] { return rssp::make_vector_instance(spec, f.n, f.d, seed); });
      config["distribution"] = spec;
      config["n"] = f.n;
    }
    config["d"] = vinst.d;
    rssp::VectorMitmOptions opt;
    opt.index = as_usage([&] { return rssp::parse_nearest_index(f.index); });
    config["index"] = f.index;
    config["n_left"] = as_usage([&] { return rssp::split_point(vinst.size(), f.w, split); });
    const auto r = rssp::vector_mitm_solve(vinst, f.w, split, seed, opt);
    result["best_total"] = std::vector<std::int64_t>(r.best_total.c.begin(),
                                                     r.best_total.c.begin() + static_cast<std::ptrdiff_t>(vinst.d));
    result["error"] = r.error;
    result["error_sq"] = rssp::detail::to_decimal(r.error_sq);
    result["elapsed_ns"] = f.no_timing ? 0 : r.elapsed_ns;
    result["fallback"] = r.fallback;
    result["config"] = config;
    std::cout << result.dump() << "\n";
    return;
  }

  rssp::Instance inst;
  if (!f.in.empty()) {
    inst = as_usage([&] { return read_json_file(f.in).get<rssp::Instance>(); });
    config["in"] = f.in;
  } else {
    const auto spec = resolved_dist(f);
    const auto rule = as_usage([&] { return rssp::parse_target_rule(f.target); });
    inst = rssp::generate_instance(spec, f.n, rule, seed);
    config["distribution"] = spec;
    config["n"] = f.n;
    config["target"] = rule.tag();
  }
  config["instance_digest"] = rssp::digest(inst);

  const auto t0 = std::chrono::steady_clock::now();
  std::int64_t best_total = 0;
  std::optional<rssp::IndexSet> subset;
  if (m == "mitm" || m == "mitm-equi" || m == "bounded") {
    if (inst.size() >= 2) config["n_left"] = as_usage([&] { return rssp::split_point(inst.size(), f.w, split); });
    rssp::MitmResult r;
    if (m == "bounded") {
      const std::uint32_t k = f.k.value_or(rssp::default_bounded_k(inst.size(), f.w));
      config["k"] = k;
      rssp::BoundedOptions opt;
      opt.split = split;
      opt.reconstruct = f.reconstruct;
      auto b = as_usage([&] { return rssp::bounded_mitm_solve(inst, f.w, k, seed, opt); });
      r = std::move(b.result);
      subset = std::move(b.subset);
    } else {
      rssp::MitmOptions opt;
      opt.variant = m == "mitm" ? rssp::PhaseAVariant::bucket_random : rssp::PhaseAVariant::equi_sample;
      opt.reconstruct = f.reconstruct;
      r = as_usage([&] { return rssp::mitm_solve(inst, f.w, split, seed, opt); });
      if (f.reconstruct) subset = rssp::mitm_reconstruct(inst, r);
    }
    best_total = r.original_total;
    result["anchor"] = r.anchor;
    result["phase_b_best"] = r.phase_b_best;
    result["cardinality"] = r.cardinality;
    result["n_left"] = r.n_left;
    result["anchors"] = r.anchors_kept;
    result["fallback"] = r.fallback;
    result["t_hit"] = r.trace.t_hit ? json(*r.trace.t_hit) : json(nullptr);
    result["error"] = r.error;
    if (!f.trace.empty()) {
      std::ofstream os(f.trace);
      if (!os) throw rssp::error("cannot open '" + f.trace + "' for writing");
      rssp::write_trace_jsonl(os, r.trace);
    }
  } else if (m == "plain") {
    if (f.w < 1) throw UsageError("--w must be >= 1");
    const auto r = rssp::closest_beam_search(inst.items, inst.T, f.w);
    best_total = r.best_sum;
    result["error"] = r.error;
    if (f.reconstruct) subset = plain_subset(inst, f.w);
  } else if (m == "exact") {
    const auto r = rssp::exact_min_error(inst.items, inst.T);
    best_total = r.best_sum;
    result["error"] = r.min_error;
    if (f.reconstruct) subset = r.witness;
  } else if (m == "fptas") {
    config["eps"] = f.eps;
    best_total = as_usage([&] { return rssp::fptas_gens_levner(inst.items, inst.T, f.eps); });
    result["error"] = rssp::detail::abs_diff(best_total, inst.T);
  } else {
    rssp::MetaheuristicParams p;
    p.method = rssp::parse_metaheuristic(m);
    p.budget = f.budget.value_or(2 * static_cast<std::uint64_t>(inst.size()) * f.w);
    config["params"] = p;
    const auto r = as_usage([&] { return rssp::run_metaheuristic(inst.items, inst.T, p, seed); });
    best_total = r.best_sum;
    result["error"] = r.error;
    result["evaluations"] = r.evaluations;
    if (f.reconstruct) subset = r.subset;
  }
  const auto elapsed =
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0).count();

  result["best_total"] = best_total;
  result["elapsed_ns"] = f.no_timing ? 0 : elapsed;
  if (subset) result["subset"] = *subset;
  result["config"] = config;
  std::cout << result.dump() << "\n";
}

rssp::SweepConfig bench_config(const Flags& f, const CLI::App& sub) {
  rssp::SweepConfig cfg;
  if (!f.config.empty()) cfg = as_usage([&] { return read_json_file(f.config).get<rssp::SweepConfig>(); });
  auto given = [&sub](const char* name) { return sub.count(name) > 0; };
  return as_usage([&] {
    if (f.config.empty() || given("--dist") || given("--support") || given("--B") || given("--nu")) {
      rssp::DistributionSpec d = cfg.distribution;
      if (f.config.empty() || given("--dist")) d.family = rssp::parse_family(f.dist);
      if (f.config.empty() || given("--support")) d.support = rssp::parse_support(f.support);
      if (f.config.empty() || given("--B")) d.B = f.B;
      if (f.config.empty() || given("--nu")) d.nu = f.nu;
      cfg.distribution = d;
    }
    if (f.config.empty() || given("--n")) cfg.n = f.n;
    if (f.config.empty() || given("--trials")) cfg.trials = f.trials;
    if (f.config.empty() || given("--w-grid")) cfg.w_grid = parse_grid(f.w_grid);
    if (given("--w")) cfg.w_grid = {f.w};
    if (f.config.empty() || given("--split")) cfg.split = rssp::parse_split_rule(f.split);
    if (f.config.empty() || given("--target")) cfg.target = rssp::parse_target_rule(f.target);
    if (f.config.empty() || given("--method")) cfg.methods = split_list(f.method);
    if (f.config.empty() || given("--seed") || std::getenv("RSSP_SEED")) cfg.master_seed = resolved_seed(f);
    if (f.config.empty() || given("--workers")) cfg.workers = f.workers;
    if (given("--k")) cfg.k = f.k;
    if (f.config.empty() || given("--d")) cfg.d = f.d;
    if (given("--budget")) cfg.baseline_budget = f.budget;
    if (f.config.empty() || given("--eps")) cfg.fptas_eps = f.eps;
    if (f.config.empty() || given("--no-timing")) cfg.timing = !f.no_timing;
    cfg.validate();
    return cfg;
  });
}

void cmd_bench(const Flags& f, const CLI::App& sub) {
  const auto cfg = bench_config(f, sub);
  const auto format = as_usage([&] { return rssp::parse_record_format(f.format); });
  const std::string echo = json(cfg).dump();
  std::cerr << echo << "\n";
  const auto records = rssp::run_sweep(cfg);
  std::ostringstream os;
  if (format == rssp::RecordFormat::csv) {
    rssp::write_csv(os, records);
  } else {
    rssp::write_jsonl(os, records);
  }
  write_output(f.out, os.str());
  if (!f.out.empty()) write_output(f.out + ".config.json", echo + "\n");
}

void cmd_coverage(const Flags& f) {
  const auto seed = resolved_seed(f);
  const auto r = as_usage([&] { return rssp::phase_a_coverage_experiment(f.w, f.B, f.delta, f.trials, seed); });
  json out = r;
  out["config"] = {{"command", "coverage"}, {"w", f.w}, {"B", f.B}, {"delta", f.delta},
                   {"trials", f.trials},    {"seed", seed}};
  write_output(f.out, out.dump() + "\n");
}

void cmd_fit(const Flags& f, const CLI::App& sub) {
  if (f.in.empty()) throw UsageError("fit needs --in with a record file");
  const auto records = as_usage([&] { return rssp::load_records(f.in); });
  const auto agg = rssp::aggregate(records);
  std::vector<std::string> methods;
  if (sub.count("--method")) {
    methods = split_list(f.method);
  } else {
    for (const auto& a : agg) {
      if (methods.empty() || methods.back() != a.method) methods.push_back(a.method);
    }
  }
  std::int64_t B = records.empty() ? 0 : records.front().B;
  json fits = json::object();
  for (const auto& m : methods) {
    const auto rows = rssp::rows_for(agg, m);
    if (rows.empty()) throw UsageError("no records for method '" + m + "'");
    fits[m] = as_usage([&] { return rssp::fit_fixed_exponent(rows, f.exponent, B); });
  }
  json out{{"fits", fits},
           {"aggregate", agg},
           {"config", {{"command", "fit"}, {"in", f.in}, {"exponent", f.exponent}, {"methods", methods}}}};
  write_output(f.out, out.dump() + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random subset sum toolkit"};
  app.require_subcommand(1, 1);
  Flags f;

  auto* gen = app.add_subcommand("generate", "Write a random instance as JSON");
  auto* solve = app.add_subcommand("solve", "Solve one instance and print a JSON result line");
  auto* bench = app.add_subcommand("bench", "Run a Monte Carlo sweep and write per-trial records");
  auto* cov = app.add_subcommand("coverage", "Phase A bucket-coverage experiment");
  auto* fit = app.add_subcommand("fit", "Aggregate records and fit c / w^p");

  auto dist_flags = [&f](CLI::App* s) {
    s->add_option("--dist", f.dist, "uniform|normal|lognormal|bimodal|studentt");
    s->add_option("--support", f.support, "symmetric|nonnegative");
    s->add_option("--nu", f.nu, "Student-t degrees of freedom");
    s->add_option("--n", f.n, "Number of items");
    s->add_option("--B", f.B, "Item magnitude bound");
    s->add_option("--target", f.target, "random|tail:F|zero");
    s->add_option("--seed", f.seed, "Master seed (RSSP_SEED overrides)");
  };
  dist_flags(gen);
  gen->add_option("--d", f.d, "Dimension for --method vector");
  gen->add_option("--method", f.method, "Set to 'vector' for a vector instance");
  gen->add_option("--out", f.out, "Output path (default stdout)");

  dist_flags(solve);
  solve->add_option("--method", f.method, "mitm|mitm-equi|plain|bounded|vector|sa|ga|pso|tabu|aoa|fptas|exact");
  solve->add_option("--w", f.w, "Beam width");
  solve->add_option("--split", f.split, "half|fixed:K|logw:C");
  solve->add_option("--k", f.k, "Cardinality budget (bounded)");
  solve->add_option("--d", f.d, "Dimension (vector)");
  solve->add_flag("--reconstruct", f.reconstruct, "Also return the chosen subset");
  solve->add_option("--in", f.in, "Read the instance from a JSON file");
  solve->add_option("--trace", f.trace, "Write the Phase B trace as JSON lines");
  solve->add_option("--eps", f.eps, "FPTAS epsilon");
  solve->add_option("--budget", f.budget, "Metaheuristic evaluation budget");
  solve->add_option("--index", f.index, "Vector nearest-residual index: auto|linear|grid|kdtree");
  solve->add_flag("--no-timing", f.no_timing, "Report elapsed_ns as 0");

  dist_flags(bench);
  bench->add_option("--w", f.w, "Single beam width (overrides --w-grid)");
  bench->add_option("--w-grid", f.w_grid, "Comma-separated increasing widths");
  bench->add_option("--trials", f.trials, "Trials per width");
  bench->add_option("--split", f.split, "half|fixed:K|logw:C");
  bench->add_option("--method", f.method, "Comma-separated method names");
  bench->add_option("--k", f.k, "Cardinality budget (bounded)");
  bench->add_option("--d", f.d, "Dimension (vector)");
  bench->add_option("--out", f.out, "Output path (default stdout)");
  bench->add_option("--format", f.format, "csv|jsonl");
  bench->add_option("--workers", f.workers, "Worker threads");
  bench->add_option("--config", f.config, "Sweep configuration JSON; explicit flags override it");
  bench->add_option("--budget", f.budget, "Metaheuristic evaluation budget");
  bench->add_option("--eps", f.eps, "FPTAS epsilon");
  bench->add_flag("--no-timing", f.no_timing, "Write elapsed_ns as 0 for byte-identical reruns");

  cov->add_option("--w", f.w, "Number of buckets");
  cov->add_option("--B", f.B, "Item magnitude bound");
  cov->add_option("--delta", f.delta, "Failure probability in the bound");
  cov->add_option("--trials", f.trials, "Simulated runs");
  cov->add_option("--seed", f.seed, "Master seed (RSSP_SEED overrides)");
  cov->add_option("--out", f.out, "Output path (default stdout)");

  fit->add_option("--in", f.in, "CSV or JSONL record file")->required();
  fit->add_option("--method", f.method, "Comma-separated methods to fit (default: all)");
  fit->add_option("--exponent", f.exponent, "Fixed exponent p in c * w^p");
  fit->add_option("--out", f.out, "Output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) cmd_generate(f);
    if (solve->parsed()) cmd_solve(f);
    if (bench->parsed()) cmd_bench(f, *bench);
    if (cov->parsed()) cmd_coverage(f);
    if (fit->parsed()) cmd_fit(f, *fit);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cout << json{{"error", e.what()}}.dump() << "\n";
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
