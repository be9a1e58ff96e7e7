#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefopt/loop.hpp"
#include "prefopt/oracles.hpp"

namespace prefopt {

enum class ReferenceMethod { grid, swarm };

std::string to_string(ReferenceMethod m);
ReferenceMethod reference_method_from_string(const std::string& s);

struct BenchConfig {
  ProblemKind problem = ProblemKind::analytical;
  int runs = 10;
  /// 0 selects the per-problem default (analytical 60, susp2d 30, susp4d 50).
  int budget = 0;
  std::uint64_t seed_base = 1;
  /// Explicit seeds; when empty, seed_base + 0 .. runs - 1.
  std::vector<std::uint64_t> seeds;
  std::vector<LoopMode> arms{LoopMode::baseline, LoopMode::regularized};
  /// Unset: swarm for the analytical problem, grid otherwise.
  std::optional<ReferenceMethod> reference;
  std::filesystem::path out_dir = "bench-out";
  /// Descriptor grids are stored here; empty disables the disk cache.
  std::filesystem::path cache_dir = ".prefopt-cache";
  int grid_2d = 101;
  int grid_4d = 21;
  /// 0 uses the hardware concurrency.
  int threads = 0;
  /// Template for both arms; mode, budget and seed are overwritten per run.
  LoopConfig loop;
  HalfCarParams plant;
  BumpScenario scenario;

  int resolved_budget() const;
  ReferenceMethod resolved_reference() const;
  std::vector<std::uint64_t> resolved_seeds() const;
  void validate() const;
};

BenchConfig bench_config_from_json(const nlohmann::json& j, BenchConfig base = {});
nlohmann::json to_json(const BenchConfig& c);

int default_budget(ProblemKind k);

// ---- reference optimum ----

struct SwarmSettings {
  int particles = 50;
  int iterations = 500;
  int restarts = 3;
  double inertia = 0.7298;
  double cognitive = 1.49618;
  double social = 1.49618;
};

struct SwarmResult {
  double value = 0.0;
  Vec point;
  std::vector<double> restart_values;
  /// Restarts disagreed by more than 1 %.
  bool disagreement = false;
};

SwarmResult particle_swarm(const std::function<double(const Vec&)>& f, const Bounds& bounds, std::uint64_t seed,
                           const SwarmSettings& settings = {});

/// Descriptors of every node of a uniform grid over the suspension box
/// (`per_axis` nodes per coordinate, first coordinate fastest).
struct DescriptorGrid {
  ProblemKind kind = ProblemKind::susp2d;
  int per_axis = 0;
  std::vector<Vec> points;
  std::vector<SuspensionDescriptors> values;
};

Vec grid_node(const Bounds& bounds, int per_axis, std::size_t flat_index);

/// Simulates (or loads from cache_dir) the descriptor grid.
DescriptorGrid descriptor_grid(const SuspensionModel& model, int per_axis, const std::filesystem::path& cache_dir,
                               int threads = 0, std::ostream* log = nullptr);

struct GridOptimum {
  double value = 0.0;
  std::size_t index = 0;
};

GridOptimum grid_minimum(const DescriptorGrid& grid, const EtaSuspension& eta);

/// Reference value y* for one problem instance. For grid references on
/// suspension problems pass the precomputed grid.
double reference_optimum(const Problem& problem, ReferenceMethod method, std::uint64_t seed,
                         const DescriptorGrid* grid = nullptr, std::ostream* log = nullptr);

// ---- Monte Carlo ----

struct ArmTable {
  LoopMode mode = LoopMode::baseline;
  /// runs x budget; column k holds y_best - y* after k + 1 resolved points.
  std::vector<std::vector<double>> errors;
  std::vector<Vec> final_points;
  std::vector<double> final_grip_loss;  // suspension problems only
  std::vector<IterationTrace> traces;
  std::vector<double> mean;
  std::vector<double> std;
};

struct RunFailure {
  std::uint64_t seed = 0;
  std::string message;
};

struct ConvergenceTable {
  ProblemKind problem = ProblemKind::analytical;
  int budget = 0;
  int n_init = 0;
  /// Seeds of the successful runs, in table row order.
  std::vector<std::uint64_t> seeds;
  std::vector<double> y_star;
  std::vector<ArmTable> arms;
  std::vector<RunFailure> failures;
  int attempted = 0;

  const ArmTable* arm(LoopMode m) const;
  /// More than 20 % of the attempted runs failed.
  bool failed() const;
};

/// Column-wise mean and sample standard deviation (n - 1; 0 for one row).
void aggregate(ArmTable& arm);

ConvergenceTable run_montecarlo(const BenchConfig& cfg, std::ostream* log = nullptr);

/// Per-arm CSV, a convergence SVG and a JSON summary. Returns written paths.
std::vector<std::filesystem::path> export_results(const ConvergenceTable& table, const BenchConfig& cfg);

/// Mean and std over the rows of per-run signals (all rows the same length).
struct SignalBand {
  std::vector<double> mean;
  std::vector<double> std;
};

SignalBand signal_band(const std::vector<std::vector<double>>& rows);

/// Simulates the final configuration of every run in both arms and writes
/// mean +- std A_z and pitch-rate traces (CSV and SVG).
std::vector<std::filesystem::path> export_response_comparison(const SuspensionModel& model,
                                                              const std::vector<Vec>& best_baseline,
                                                              const std::vector<Vec>& best_regularized,
                                                              const std::filesystem::path& out_dir,
                                                              const std::string& stem);

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> std;  // empty: no band
};

/// Path-based line chart: solid mean lines with shaded +-std bands.
std::string svg_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                      const std::string& y_label, int width = 720, int height = 420);

}  // namespace prefopt
