#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefopt/acquisition.hpp"
#include "prefopt/core.hpp"
#include "prefopt/hypercv.hpp"
#include "prefopt/surrogate.hpp"

namespace prefopt {

enum class LoopMode { baseline, regularized };
enum class FinalAnswerMode { best_sample, surrogate_minimizer };

std::string to_string(LoopMode m);
LoopMode loop_mode_from_string(const std::string& s);

struct CvSettings {
  CvGrid grid;
  int k = 5;
  int t_cv = 5;
};

struct LoopConfig {
  /// 0 selects 2 (n + 1).
  int n_init = 0;
  /// Total number of queried points, initial design included.
  int budget = 30;
  LoopMode mode = LoopMode::baseline;
  AcquisitionConfig acquisition;
  /// sigma is fixed; lambda_beta / lambda_ls here only seed the first fits
  /// before cross-validation has enough preferences.
  FitConfig fit;
  KernelKind kernel = KernelKind::inverse_quadratic;
  double initial_epsilon = 1.0;
  CvSettings cv;
  std::uint64_t seed = 0;
  FinalAnswerMode final_answer = FinalAnswerMode::best_sample;
  int lhs_shuffles = 100;

  int resolved_n_init(Index dim) const { return n_init > 0 ? n_init : static_cast<int>(2 * (dim + 1)); }
  void validate(Index dim) const;
};

/// Latin hypercube design in the unit cube: the best (maximin) of `shuffles`
/// seeded candidates.
Mat latin_hypercube(int count, Index dim, int shuffles, std::uint64_t seed);

struct PendingQuery {
  std::size_t candidate_index = 0;
  std::size_t incumbent_index = 0;
  Vec candidate;
  Vec incumbent;
};

/// One entry per resolved point: the first design point, then one per
/// accepted preference.
struct TraceEntry {
  int iteration = 0;  // number of resolved points, 1-based
  std::size_t candidate_index = 0;
  int label = 0;
  std::size_t best_index = 0;
  Hyper hyper;
  bool acquired = false;  // false for initial-design points
  Vec candidate;
};

using IterationTrace = std::vector<TraceEntry>;

struct LoopState {
  explicit LoopState(Dataset d) : dataset(std::move(d)) {}

  Dataset dataset;
  PreferenceSet prefs;
  LoopMode mode = LoopMode::baseline;
  std::optional<DescriptorBank> bank;
  std::optional<Surrogate> surrogate;
  std::optional<Hypothesis> hypothesis;
  std::size_t best_index = 0;
  /// Number of completed acquisition steps.
  int iteration = 0;
  Hyper hyper;
  /// Hyperparameters in force when the pending candidate was generated.
  Hyper pending_hyper;
  IterationTrace trace;
  std::optional<PendingQuery> pending;
  /// Initial-design points not yet compared.
  std::size_t next_initial = 0;
  std::size_t n_init = 0;
  std::optional<CvResult> last_cv;

  bool initial_phase() const { return next_initial < n_init; }
};

/// Builds the initial design and the first chained query (point 1 against
/// point 0). The remaining n_init - 2 initial queries are issued one by one
/// as preferences arrive, each against the running incumbent.
LoopState initialize(const Bounds& bounds, const LoopConfig& cfg, std::optional<DescriptorBank> bank = std::nullopt);

/// Records the label for the pending query (-1: candidate preferred). The
/// incumbent moves to the candidate only on -1.
void submit_preference(LoopState& state, const PendingQuery& query, int label);

/// Recalibrates when due, refits, minimizes the acquisition and returns the
/// new pending query.
const PendingQuery& advance(LoopState& state, const LoopConfig& cfg);

bool finished(const LoopState& state, const LoopConfig& cfg);

/// Refits on all preferences with the current hyperparameters.
Surrogate refit(LoopState& state, const LoopConfig& cfg);

/// Best sample, or the minimizer of the refit surrogate (delta = 0).
Vec final_answer(LoopState& state, const LoopConfig& cfg);

using Objective = std::function<double(const Vec&)>;

struct AutonomousResult {
  LoopState state;
  /// Objective value of the incumbent after each trace entry.
  std::vector<double> best_values;
  /// Objective value of every dataset point.
  std::vector<double> values;
  std::optional<std::string> error;
};

/// Drives the loop with a synthetic user answering via encode_preference.
AutonomousResult run_autonomous(const Bounds& bounds, const LoopConfig& cfg, const Objective& oracle,
                                std::optional<DescriptorBank> bank = std::nullopt, double tol = 0.0);

/// iteration,y_best,y_star,lambda_ls,lambda_beta,epsilon,x0..x{n-1}
std::string trace_csv(const IterationTrace& trace, const std::vector<double>* best_values = nullptr,
                      std::optional<double> y_star = std::nullopt);

nlohmann::json to_json(const TraceEntry& e);
nlohmann::json to_json(const IterationTrace& t);
/// Everything except descriptor evaluators.
nlohmann::json to_json(const LoopState& s);

/// Stable 64-bit mix used to derive per-iteration seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace prefopt
