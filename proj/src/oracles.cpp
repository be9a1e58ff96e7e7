#include "prefopt/oracles.hpp"

#include <cmath>
#include <numbers>

namespace prefopt {

std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::analytical: return "analytical";
    case ProblemKind::susp2d: return "susp2d";
    case ProblemKind::susp4d: return "susp4d";
  }
  return "unknown";
}

ProblemKind problem_kind_from_string(const std::string& s) {
  if (s == "analytical") return ProblemKind::analytical;
  if (s == "susp2d") return ProblemKind::susp2d;
  if (s == "susp4d") return ProblemKind::susp4d;
  throw ConfigError("unknown problem: " + s);
}

Bounds analytical_bounds() {
  constexpr double pi = std::numbers::pi;
  Vec lo(7), hi(7);
  lo << -2, -2, -2, kAnalyticalX3Min, -pi, -pi, -2;
  hi << 2, 2, 2, 3, pi, pi, 2;
  return {lo, hi};
}

std::array<double, 5> analytical_terms(const Vec& x) {
  if (x.size() != 7) throw DomainError("analytical: x must have 7 components");
  if (!(std::abs(x[3]) >= kAnalyticalX3Min)) throw DomainError("analytical: x3 too close to zero");
  const double d = x[1] - x[2];
  return {std::pow(x[0], 4), -d * d, 1.0 / x[3], std::sin(x[4] + x[5]), x[5] * x[6]};
}

double analytical_f(const Vec& x, const EtaAnalytical& eta) {
  const auto t = analytical_terms(x);
  double f = 0.0;
  for (std::size_t i = 0; i < 5; ++i) f += eta.eta[i] * t[i];
  return f;
}

EtaAnalytical sample_eta_analytical(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  std::bernoulli_distribution coin(0.5);
  EtaAnalytical e;
  for (std::size_t i = 0; i < 5; ++i) e.eta[i] = mag(rng);
  for (std::size_t i : {1u, 3u, 4u})
    if (coin(rng)) e.eta[i] = -e.eta[i];
  return e;
}

EtaSuspension sample_eta_suspension(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> w(0.5, 2.0);
  std::uniform_real_distribution<double> g(50.0, 200.0);
  EtaSuspension e;
  e.eta_az = w(rng);
  e.eta_pitch = w(rng);
  e.eta_grip = g(rng) * (e.eta_az + e.eta_pitch);
  return e;
}

SuspensionModel::SuspensionModel(ProblemKind kind, HalfCarParams plant, BumpScenario scenario)
    : kind_(kind), plant_(plant), scenario_(scenario) {
  if (kind == ProblemKind::analytical) throw ConfigError("suspension model: not a suspension problem");
  plant_.validate();
  scenario_.validate(plant_);
}

Bounds SuspensionModel::bounds() const {
  if (kind_ == ProblemKind::susp2d) return {Vec::Constant(2, 500.0), Vec::Constant(2, 5000.0)};
  Vec lo(4), hi(4);
  lo << 500, 500, 0.5, 0.5;
  hi << 5000, 5000, 2.0, 2.0;
  return {lo, hi};
}

HalfCarParams SuspensionModel::params_for(const Vec& x) const {
  const Index n = kind_ == ProblemKind::susp2d ? 2 : 4;
  if (x.size() != n) throw DomainError("suspension: wrong decision dimension");
  HalfCarParams p = plant_;
  p.c_front = x[0];
  p.c_rear = x[1];
  if (n == 4) {
    p.k_front = plant_.k_front * x[2];
    p.k_rear = plant_.k_rear * x[3];
  }
  return p;
}

SuspensionDescriptors SuspensionModel::descriptors(const Vec& x) const {
  std::vector<double> key(x.data(), x.data() + x.size());
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  const auto d = simulate_descriptors(params_for(x), scenario_);
  std::lock_guard lock(mutex_);
  cache_.emplace(std::move(key), d);
  return d;
}

SignalTrace SuspensionModel::trace(const Vec& x) const { return simulate(params_for(x), scenario_); }

std::size_t SuspensionModel::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

double suspension_objective(const SuspensionDescriptors& d, const EtaSuspension& eta, bool with_grip) {
  double f = eta.eta_az * d.rms_accel + eta.eta_pitch * d.rms_pitch_rate;
  if (with_grip) f += eta.eta_grip * d.grip_loss;
  return f;
}

double ground_truth_2d(const Vec& x, const EtaSuspension& eta, const SuspensionModel& model) {
  return suspension_objective(model.descriptors(x), eta, false);
}

double ground_truth_4d(const Vec& x, const EtaSuspension& eta, const SuspensionModel& model) {
  return suspension_objective(model.descriptors(x), eta, true);
}

PreferenceOracle synthetic_user(std::function<double(const Vec&)> f, double tol) {
  return [f = std::move(f), tol](const Vec& a, const Vec& b) { return encode_preference(f(a), f(b), tol); };
}

DescriptorBank hypothesis_bank_for(ProblemKind kind, std::shared_ptr<const SuspensionModel> model) {
  DescriptorBank bank;
  if (kind == ProblemKind::analytical) {
    const char* names[5] = {"x0^4", "-(x1-x2)^2", "1/x3", "sin(x4+x5)", "x5*x6"};
    for (std::size_t r = 0; r < 5; ++r)
      bank.descriptors.push_back({names[r], [r](const Vec& x) { return analytical_terms(x)[r]; }});
    return bank;
  }
  if (!model) throw ConfigError("hypothesis bank: suspension problems need a model");
  if (model->kind() != kind) throw ConfigError("hypothesis bank: model/problem mismatch");
  bank.descriptors.push_back({"rms_accel", [model](const Vec& x) { return model->descriptors(x).rms_accel; }});
  bank.descriptors.push_back(
      {"rms_pitch_rate", [model](const Vec& x) { return model->descriptors(x).rms_pitch_rate; }});
  return bank;
}

Problem make_analytical_problem(const EtaAnalytical& eta) {
  return {ProblemKind::analytical,
          analytical_bounds(),
          [eta](const Vec& x) { return analytical_f(x, eta); },
          hypothesis_bank_for(ProblemKind::analytical),
          nullptr,
          eta,
          {}};
}

Problem make_suspension_problem(std::shared_ptr<const SuspensionModel> model, const EtaSuspension& eta) {
  const bool grip = model->kind() == ProblemKind::susp4d;
  std::function<double(const Vec&)> f = [model, eta, grip](const Vec& x) {
    return suspension_objective(model->descriptors(x), eta, grip);
  };
  return {model->kind(), model->bounds(), std::move(f), hypothesis_bank_for(model->kind(), model), model, {}, eta};
}

}  // namespace prefopt
