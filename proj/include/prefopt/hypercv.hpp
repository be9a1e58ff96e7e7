#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "prefopt/core.hpp"
#include "prefopt/surrogate.hpp"

namespace prefopt {

/// One (lambda_ls, lambda_beta, epsilon) triplet.
struct Hyper {
  double lambda_ls = 0.0;
  double lambda_beta = 1e-2;
  double epsilon = 1.0;

  bool operator==(const Hyper&) const = default;
};

/// Tie-break order: smaller lambda_ls, then lambda_beta, then epsilon.
bool hyper_less(const Hyper& a, const Hyper& b);

struct CvGrid {
  std::vector<double> lambda_ls_values{0.0, 0.1, 1.0, 10.0, 100.0};
  std::vector<double> lambda_beta_values{1e-4, 1e-2, 1.0};
  std::vector<double> epsilon_values{0.5, 1.0, 2.0, 5.0};

  void validate() const;
  std::vector<Hyper> triplets() const;
  /// Same grid with lambda_ls forced to {0}.
  CvGrid baseline() const;
};

struct CvResult {
  Hyper best;
  std::vector<std::pair<Hyper, double>> mean_violations;
  int folds_used = 0;
};

nlohmann::json to_json(const Hyper& h);
nlohmann::json to_json(const CvResult& r);

/// Held-out preferences whose zero-slack constraint fails under s.
int count_violations(const Surrogate& s, const PreferenceSet& heldout, const Dataset& dataset, double sigma);

/// Disjoint folds of positions 0..m-1 (sizes differ by at most one).
std::vector<std::vector<std::size_t>> make_folds(std::size_t m, int k, std::uint64_t seed);

struct CvInputs {
  const Dataset& dataset;
  const PreferenceSet& prefs;
  /// Null for baseline cross-validation; then only lambda_ls = 0 is allowed.
  const DescriptorBank* bank = nullptr;
  CvGrid grid;
  int k = 5;
  std::uint64_t seed = 0;
  double sigma = 1e-2;
  KernelKind kernel = KernelKind::inverse_quadratic;
};

/// K-fold cross-validation over the grid. Folds partition the preferences;
/// with fewer preferences than folds it falls back to leave-one-out.
CvResult cross_validate(const CvInputs& in);

inline bool recalibration_due(int iteration, int t_cv) { return t_cv >= 1 && iteration % t_cv == 0; }

/// Runs cross_validate when iteration is a multiple of t_cv.
std::optional<CvResult> maybe_recalibrate(int iteration, int t_cv, const CvInputs& in);

}  // namespace prefopt
