#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "prefopt/core.hpp"
#include "prefopt/halfcar.hpp"
#include "prefopt/surrogate.hpp"

namespace prefopt {

enum class ProblemKind { analytical, susp2d, susp4d };

std::string to_string(ProblemKind k);
ProblemKind problem_kind_from_string(const std::string& s);

// ---- seven-dimensional analytical benchmark ----

struct EtaAnalytical {
  std::array<double, 5> eta{1, 1, 1, 1, 1};
};

inline constexpr double kAnalyticalX3Min = 0.5;

/// x0,x1,x2 in [-2,2]; x3 in [0.5,3]; x4,x5 in [-pi,pi]; x6 in [-2,2].
Bounds analytical_bounds();

/// The five basis terms x0^4, -(x1-x2)^2, 1/x3, sin(x4+x5), x5*x6.
std::array<double, 5> analytical_terms(const Vec& x);

/// eta . analytical_terms(x). Throws DomainError when |x3| < kAnalyticalX3Min.
double analytical_f(const Vec& x, const EtaAnalytical& eta);

/// |eta_i| ~ U[0.5, 2]; eta_1, eta_3, eta_4 get a random sign.
EtaAnalytical sample_eta_analytical(std::mt19937_64& rng);

// ---- suspension benchmarks ----

struct EtaSuspension {
  double eta_az = 1.0;
  double eta_pitch = 1.0;
  double eta_grip = 0.0;
};

/// eta_az, eta_pitch ~ U[0.5, 2]; eta_grip ~ U[50, 200] * (eta_az + eta_pitch).
EtaSuspension sample_eta_suspension(std::mt19937_64& rng);

/// Maps decision vectors (c_f, c_r[, k_f ratio, k_r ratio]) to plant
/// parameters and memoizes the simulated descriptors. Thread-safe.
class SuspensionModel {
 public:
  SuspensionModel(ProblemKind kind, HalfCarParams plant = {}, BumpScenario scenario = {});

  ProblemKind kind() const { return kind_; }
  Bounds bounds() const;
  const HalfCarParams& plant() const { return plant_; }
  const BumpScenario& scenario() const { return scenario_; }

  HalfCarParams params_for(const Vec& x) const;
  SuspensionDescriptors descriptors(const Vec& x) const;
  SignalTrace trace(const Vec& x) const;
  std::size_t cache_size() const;

 private:
  ProblemKind kind_;
  HalfCarParams plant_;
  BumpScenario scenario_;
  mutable std::mutex mutex_;
  mutable std::map<std::vector<double>, SuspensionDescriptors> cache_;
};

/// eta_az * RMS(A_z) + eta_pitch * RMS(pitch rate)
double ground_truth_2d(const Vec& x, const EtaSuspension& eta, const SuspensionModel& model);
/// The 2-D terms plus eta_grip * T_loss.
double ground_truth_4d(const Vec& x, const EtaSuspension& eta, const SuspensionModel& model);

/// Same formulas on precomputed descriptors.
double suspension_objective(const SuspensionDescriptors& d, const EtaSuspension& eta, bool with_grip);

using PreferenceOracle = std::function<int(const Vec&, const Vec&)>;

/// (x_A, x_B) -> encode_preference(f(x_A), f(x_B), tol)
PreferenceOracle synthetic_user(std::function<double(const Vec&)> f, double tol = 0.0);

/// analytical: the five basis terms; susp2d and susp4d: {rms_accel,
/// rms_pitch_rate} only (no grip descriptor). Suspension banks need a model.
DescriptorBank hypothesis_bank_for(ProblemKind kind, std::shared_ptr<const SuspensionModel> model = nullptr);

/// A fully instantiated benchmark: bounds, ground truth, hypothesis bank.
struct Problem {
  ProblemKind kind;
  Bounds bounds;
  std::function<double(const Vec&)> objective;
  DescriptorBank bank;
  std::shared_ptr<const SuspensionModel> model;  // suspension only
  EtaAnalytical eta_analytical;
  EtaSuspension eta_suspension;
};

Problem make_analytical_problem(const EtaAnalytical& eta);
Problem make_suspension_problem(std::shared_ptr<const SuspensionModel> model, const EtaSuspension& eta);

}  // namespace prefopt
