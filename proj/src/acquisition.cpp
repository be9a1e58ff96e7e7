#include "prefopt/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/random/sobol.hpp>

namespace prefopt {

void validate(const AcquisitionConfig& cfg) {
  if (!(cfg.delta > 0 && cfg.delta <= 1)) throw ConfigError("acquisition: delta must lie in (0, 1]");
  if (!(cfg.range_floor > 0)) throw ConfigError("acquisition: range_floor must be positive");
  if (cfg.optimizer_budget < 0 || cfg.multistart_count < 1 || cfg.local_searches < 1 || cfg.probe_budget < 1)
    throw ConfigError("acquisition: budgets must be positive");
  if (!(cfg.min_separation >= kDuplicateTolerance && cfg.min_separation < 1))
    throw ConfigError("acquisition: min_separation must lie in [1e-9, 1)");
}

Mat space_filling_points(Index count, Index dim, std::uint64_t seed) {
  Mat out(count, dim);
  if (count == 0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec shift(dim);
  for (Index c = 0; c < dim; ++c) shift[c] = unif(rng);

  boost::random::sobol gen(static_cast<std::size_t>(dim));
  const double denom = static_cast<double>(gen.max()) + 1.0;
  for (Index i = 0; i < count; ++i) {
    for (Index c = 0; c < dim; ++c) {
      double v = static_cast<double>(gen()) / denom + shift[c];
      out(i, c) = v >= 1.0 ? v - 1.0 : v;
    }
  }
  return out;
}

double idw_z(const Vec& u, const Mat& samples) {
  if (samples.rows() == 0) throw DomainError("idw_z: no samples");
  double inv_sum = 0.0;
  for (Index i = 0; i < samples.rows(); ++i) {
    const double d2 = (samples.row(i).transpose() - u).squaredNorm();
    if (d2 <= kDuplicateTolerance * kDuplicateTolerance) return 0.0;
    inv_sum += 1.0 / d2;
  }
  return std::atan(1.0 / inv_sum);
}

double surrogate_range(const Surrogate& s, int probe_budget, double range_floor, std::uint64_t seed) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  if (s.centers.rows() > 0) {
    const Vec at = s.at_centers();
    lo = at.minCoeff();
    hi = at.maxCoeff();
  }
  const Mat probes = space_filling_points(probe_budget, s.centers.cols(), seed);
  for (Index i = 0; i < probes.rows(); ++i) {
    const double f = s(probes.row(i).transpose());
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  const double est = hi >= lo ? hi - lo : 0.0;
  return std::max(est, range_floor);
}

double acquisition_value(const Vec& u, const Surrogate& s, const Mat& samples, double range, double delta) {
  if (!(range > 0)) throw DomainError("acquisition_value: range must be positive");
  return s(u) / range - delta * idw_z(u, samples);
}

namespace {

class Search {
 public:
  Search(const Surrogate& s, const Mat& samples, double range, double delta, int budget, double separation)
      : s_(s), samples_(samples), range_(range), delta_(delta), budget_(budget), separation_(separation) {}

  bool exhausted() const { return used_ >= budget_; }
  int used() const { return used_; }
  int remaining() const { return budget_ - used_; }

  double eval(const Vec& u) {
    ++used_;
    const double a = s_(u) / range_ - delta_ * idw_z(u, samples_);
    if (a < best_value_ && !is_sample(u, separation_)) {
      best_value_ = a;
      best_ = u;
    }
    return a;
  }

  // Compass search with opportunistic moves and step halving. Returns the
  // final iterate and its value.
  std::pair<Vec, double> local(Vec u, double value, int budget) {
    const int stop = std::min(budget_, used_ + budget);
    double step = 0.1;
    const Index n = u.size();
    while (step > 1e-7 && used_ < stop) {
      bool improved = false;
      for (Index c = 0; c < n && used_ < stop; ++c) {
        for (double sign : {1.0, -1.0}) {
          if (used_ >= stop) break;
          Vec trial = u;
          trial[c] = std::clamp(u[c] + sign * step, 0.0, 1.0);
          if (trial[c] == u[c]) continue;
          const double a = eval(trial);
          if (a < value) {
            u = std::move(trial);
            value = a;
            improved = true;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    return {u, value};
  }

  bool is_sample(const Vec& u, double tol = kDuplicateTolerance) const {
    for (Index i = 0; i < samples_.rows(); ++i)
      if ((samples_.row(i).transpose() - u).norm() <= tol) return true;
    return false;
  }

  bool has_best() const { return best_.size() > 0; }
  const Vec& best() const { return best_; }
  double best_value() const { return best_value_; }

 private:

  const Surrogate& s_;
  const Mat& samples_;
  double range_;
  double delta_;
  int budget_;
  double separation_;
  int used_ = 0;
  Vec best_;
  double best_value_ = std::numeric_limits<double>::infinity();
};

}  // namespace

AcquisitionResult minimize_acquisition(const Surrogate& s, const Mat& samples, const AcquisitionConfig& cfg,
                                       std::uint64_t seed) {
  if (cfg.optimizer_budget < 0 || cfg.multistart_count < 1 || cfg.local_searches < 1 || cfg.probe_budget < 1)
    throw ConfigError("acquisition: budgets must be positive");
  if (!(cfg.delta >= 0)) throw ConfigError("acquisition: delta must be nonnegative");
  const Index n = samples.cols();
  const double range = surrogate_range(s, cfg.probe_budget, cfg.range_floor, seed);
  const int budget = cfg.optimizer_budget > 0 ? cfg.optimizer_budget : static_cast<int>(2000 * n);

  Mat starts(samples.rows() + cfg.multistart_count, n);
  starts.topRows(samples.rows()) = samples;
  starts.bottomRows(cfg.multistart_count) = space_filling_points(cfg.multistart_count, n, seed ^ 0x9e3779b97f4a7c15ULL);

  Search search(s, samples, range, cfg.delta, std::max(budget, static_cast<int>(starts.rows())), cfg.min_separation);
  std::vector<double> start_values(static_cast<std::size_t>(starts.rows()));
  for (Index i = 0; i < starts.rows(); ++i) start_values[static_cast<std::size_t>(i)] = search.eval(starts.row(i).transpose());

  std::vector<std::size_t> order(start_values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return start_values[a] < start_values[b]; });
  // A search that ends within min_separation of a sample found no minimizer
  // away from the samples; its endpoint would be a near-copy. Such searches
  // are discarded and the next start is tried.
  const int locals = cfg.local_searches;
  const int share = std::max(1, search.remaining() / locals);
  Vec found;
  double found_value = std::numeric_limits<double>::infinity();
  int kept = 0;
  for (std::size_t k = 0; k < order.size() && kept < locals && !search.exhausted(); ++k) {
    const std::size_t i = order[k];
    const auto [u, a] = search.local(starts.row(static_cast<Index>(i)).transpose(), start_values[i], share);
    if (search.is_sample(u, cfg.min_separation)) continue;
    ++kept;
    if (a < found_value) {
      found_value = a;
      found = u;
    }
  }

  AcquisitionResult out;
  out.range = range;
  out.evaluations = search.used();
  if (found.size() > 0) {
    out.point = found;
    out.value = found_value;
  } else if (search.has_best()) {
    out.point = search.best();
    out.value = search.best_value();
  } else {
    // Every probe hit a sample; step off the best start.
    Vec u = starts.row(static_cast<Index>(order.front())).transpose();
    for (Index c = 0; c < n; ++c) u[c] = u[c] < 0.5 ? u[c] + 1e-6 : u[c] - 1e-6;
    out.point = u;
    out.value = acquisition_value(u, s, samples, range, cfg.delta);
  }
  return out;
}

}  // namespace prefopt
