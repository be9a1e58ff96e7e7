#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "prefopt/bench.hpp"
#include "prefopt/session_http.hpp"

using namespace prefopt;

namespace {

std::vector<LoopMode> parse_arms(const std::string& s) {
  std::vector<LoopMode> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(loop_mode_from_string(item));
  return out;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

int run_bench(const BenchConfig& cfg, bool responses) {
  std::cerr << "bench " << to_string(cfg.problem) << ": " << cfg.runs << " runs, budget " << cfg.resolved_budget()
            << ", reference " << to_string(cfg.resolved_reference()) << "\n";
  const ConvergenceTable table = run_montecarlo(cfg, &std::cerr);
  if (table.seeds.empty()) {
    std::cerr << "all runs failed\n";
    return 2;
  }
  for (const auto& f : export_results(table, cfg)) std::cout << f.string() << "\n";
  const ArmTable* base = table.arm(LoopMode::baseline);
  const ArmTable* reg = table.arm(LoopMode::regularized);
  if (responses && table.problem != ProblemKind::analytical && base && reg) {
    const SuspensionModel model(cfg.problem, cfg.plant, cfg.scenario);
    for (const auto& f :
         export_response_comparison(model, base->final_points, reg->final_points, cfg.out_dir, to_string(cfg.problem)))
      std::cout << f.string() << "\n";
  }
  for (const auto& arm : table.arms) {
    std::fprintf(stderr, "%-12s final error mean %.6g std %.6g", to_string(arm.mode).c_str(), arm.mean.back(),
                 arm.std.back());
    if (table.problem != ProblemKind::analytical) {
      double g = 0.0;
      for (double v : arm.final_grip_loss) g += v;
      std::fprintf(stderr, "  mean T_loss %.6g", g / static_cast<double>(arm.final_grip_loss.size()));
    }
    std::fprintf(stderr, "\n");
  }
  if (!table.failures.empty())
    std::cerr << table.failures.size() << " of " << table.attempted << " runs failed\n";
  return table.failed() ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based optimization with descriptor-regularized surrogates"};
  app.require_subcommand(1);

  auto* bench = app.add_subcommand("bench", "Monte Carlo comparison of baseline and regularized arms");
  std::string config_file, problem, arms, ref, out, cache;
  int runs = 0, budget = 0, threads = 0;
  std::uint64_t seed_base = 0;
  bool no_responses = false;
  bench->add_option("--config", config_file, "JSON file with the same keys as the flags");
  auto* o_problem = bench->add_option("--problem", problem, "analytical | susp2d | susp4d");
  auto* o_runs = bench->add_option("--runs", runs, "Monte Carlo runs");
  auto* o_budget = bench->add_option("--budget", budget, "points per run, initial design included");
  auto* o_seed = bench->add_option("--seed-base", seed_base, "first seed; runs use seed-base + i");
  auto* o_arms = bench->add_option("--arms", arms, "comma list of baseline, regularized");
  auto* o_ref = bench->add_option("--ref", ref, "grid | swarm");
  auto* o_out = bench->add_option("--out", out, "output directory");
  auto* o_cache = bench->add_option("--cache", cache, "descriptor grid cache directory");
  auto* o_threads = bench->add_option("--threads", threads, "worker threads (0: all cores)");
  bench->add_flag("--no-responses", no_responses, "skip the response comparison for suspension problems");

  auto* srv = app.add_subcommand("serve", "HTTP session service");
  int port = 8080;
  std::string store = "sessions.jsonl", host = "127.0.0.1";
  bool sync = false;
  srv->add_option("--port", port, "TCP port");
  srv->add_option("--store", store, "event log file");
  srv->add_option("--host", host, "bind address");
  srv->add_flag("--sync", sync, "advance inside the request instead of a worker thread");

  auto* sim = app.add_subcommand("simulate", "Bump response of one half-car setup as CSV");
  double cf = 1500, cr = 1500, kf = 25000, kr = 25000;
  sim->add_option("--cf", cf, "front damping (N s/m)");
  sim->add_option("--cr", cr, "rear damping (N s/m)");
  sim->add_option("--kf", kf, "front spring stiffness (N/m)");
  sim->add_option("--kr", kr, "rear spring stiffness (N/m)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*bench) {
      BenchConfig cfg;
      if (!config_file.empty()) cfg = bench_config_from_json(read_json(config_file));
      if (*o_problem) cfg.problem = problem_kind_from_string(problem);
      if (*o_runs) cfg.runs = runs;
      if (*o_budget) cfg.budget = budget;
      if (*o_seed) cfg.seed_base = seed_base;
      if (*o_seed || *o_runs) {
        if (!cfg.seeds.empty() && static_cast<int>(cfg.seeds.size()) != cfg.runs) cfg.seeds.clear();
        if (*o_seed) cfg.seeds.clear();
      }
      if (*o_arms) cfg.arms = parse_arms(arms);
      if (*o_ref) cfg.reference = reference_method_from_string(ref);
      if (*o_out) cfg.out_dir = out;
      if (*o_cache) cfg.cache_dir = cache;
      if (*o_threads) cfg.threads = threads;
      return run_bench(cfg, !no_responses);
    }
    if (*srv) {
      ServiceOptions opts;
      opts.async_advance = !sync;
      SessionService service(store, opts);
      std::cerr << "restored " << service.ids().size() << " sessions from " << store << "\n";
      return serve(host, port, service);
    }
    if (*sim) {
      HalfCarParams p;
      p.c_front = cf;
      p.c_rear = cr;
      p.k_front = kf;
      p.k_rear = kr;
      std::cout << trace_csv(simulate(p, BumpScenario{}));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
