#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "prefopt/core.hpp"

namespace prefopt {

struct InstabilityError : Error {
  using Error::Error;
};

/// Linear 4-DOF half car: sprung heave and pitch, front and rear unsprung
/// heave. SI units throughout; a and b are the axle distances from the CG.
struct HalfCarParams {
  double sprung_mass = 600.0;
  double pitch_inertia = 1100.0;
  double unsprung_front = 40.0;
  double unsprung_rear = 40.0;
  double k_front = 25000.0;
  double k_rear = 25000.0;
  double c_front = 1500.0;
  double c_rear = 1500.0;
  double tire_front = 200000.0;
  double tire_rear = 200000.0;
  double a = 1.2;
  double b = 1.4;
  double gravity = 9.81;

  double wheelbase() const { return a + b; }
  double static_load_front() const;
  double static_load_rear() const;
  void validate() const;
  std::string describe() const;
};

/// Half-sine bump crossed at constant speed. The front axle reaches the bump
/// at t = onset; the rear follows after wheelbase / speed unless
/// `simultaneous` is set.
struct BumpScenario {
  double speed = 30.0 / 3.6;
  double height = 0.08;
  double length = 0.6;
  double duration = 5.0;
  double dt = 1e-4;
  double onset = 0.1;
  bool simultaneous = false;

  void validate(const HalfCarParams& p) const;
  std::size_t steps() const;
};

/// Road height under an axle located axle_offset metres behind the front axle.
double road_profile(double t, const BumpScenario& sc, double axle_offset);

struct SignalTrace {
  std::vector<double> time;
  std::vector<double> accel;       // sprung-mass vertical acceleration at the CG (m/s^2)
  std::vector<double> pitch_rate;  // rad/s
  std::vector<double> tire_front;  // total normal force (N)
  std::vector<double> tire_rear;

  std::size_t size() const { return time.size(); }
};

/// [z_s, theta, z_uf, z_ur, dz_s, dtheta, dz_uf, dz_ur], deviations from
/// static equilibrium.
using HalfCarState = std::array<double, 8>;

/// Fixed-step RK4. Throws InstabilityError on a non-finite state.
/// `states`, when given, receives the state at every sample time.
SignalTrace simulate(const HalfCarParams& p, const BumpScenario& sc, std::vector<HalfCarState>* states = nullptr);

/// Kinetic plus elastic energy relative to equilibrium (valid while both
/// tires stay in contact).
double mechanical_energy(const HalfCarParams& p, const HalfCarState& y, double road_front, double road_rear);

/// Trapezoidal RMS over the time grid.
double rms(std::span<const double> signal, std::span<const double> time);

/// Total time with a non-positive tire force, front and rear durations added.
double grip_loss_time(const SignalTrace& trace);

struct SuspensionDescriptors {
  double rms_accel = 0.0;
  double rms_pitch_rate = 0.0;
  double grip_loss = 0.0;
};

SuspensionDescriptors compute_descriptors(const SignalTrace& trace);

/// Same numbers as compute_descriptors(simulate(p, sc)) without storing the trace.
SuspensionDescriptors simulate_descriptors(const HalfCarParams& p, const BumpScenario& sc);

/// time,A_z,pitch_rate,F_tf,F_tr
std::string trace_csv(const SignalTrace& trace);

/// Uniform subsample keeping the first and last sample, at most max_points.
std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t max_points);

}  // namespace prefopt
