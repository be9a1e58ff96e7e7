#pragma once

#include <cstdint>

#include "prefopt/core.hpp"
#include "prefopt/surrogate.hpp"

namespace prefopt {

struct AcquisitionConfig {
  double delta = 0.3;
  double range_floor = 1e-8;
  /// Total acquisition evaluations for the inner search; 0 means 2000 * n.
  int optimizer_budget = 0;
  int multistart_count = 20;
  /// Local pattern searches are run from this many of the best starts.
  int local_searches = 10;
  /// Quasi-random probes used to estimate the surrogate range.
  int probe_budget = 1000;
  /// Scaled distance below which a proposal counts as a re-query of an
  /// existing sample.
  double min_separation = 1e-2;
};

void validate(const AcquisitionConfig& cfg);

/// `count` points of a Sobol sequence in [0,1]^dim with a seeded
/// Cranley-Patterson shift. Prefixes are nested: the first k rows do not
/// depend on count.
Mat space_filling_points(Index count, Index dim, std::uint64_t seed);

/// Inverse-distance exploration term over scaled samples (rows): 0 on a
/// sample, atan(1 / sum |x - x_i|^-2) elsewhere.
double idw_z(const Vec& u, const Mat& samples);

/// max - min of the surrogate over the samples and `probe_budget`
/// quasi-random probes, floored at range_floor.
double surrogate_range(const Surrogate& s, int probe_budget, double range_floor, std::uint64_t seed);

/// a(x) = f(x) / range - delta * z(x)
double acquisition_value(const Vec& u, const Surrogate& s, const Mat& samples, double range, double delta);

struct AcquisitionResult {
  Vec point;  // scaled
  double value = 0.0;
  double range = 0.0;
  int evaluations = 0;
};

/// Multistart compass search over the unit cube. The returned point is the
/// best evaluated point that is not a duplicate of any sample.
AcquisitionResult minimize_acquisition(const Surrogate& s, const Mat& samples, const AcquisitionConfig& cfg,
                                       std::uint64_t seed);

}  // namespace prefopt
