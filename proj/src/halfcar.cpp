#include "prefopt/halfcar.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace prefopt {

double HalfCarParams::static_load_front() const {
  return gravity * (sprung_mass * b / wheelbase() + unsprung_front);
}

double HalfCarParams::static_load_rear() const {
  return gravity * (sprung_mass * a / wheelbase() + unsprung_rear);
}

void HalfCarParams::validate() const {
  for (double v : {sprung_mass, pitch_inertia, unsprung_front, unsprung_rear, k_front, k_rear, tire_front, tire_rear,
                   a, b, gravity}) {
    if (!(v > 0) || !std::isfinite(v)) throw ConfigError("half car: parameters must be positive: " + describe());
  }
  // undamped runs are allowed for energy audits
  if (!(c_front >= 0) || !(c_rear >= 0) || !std::isfinite(c_front) || !std::isfinite(c_rear))
    throw ConfigError("half car: damping must be nonnegative: " + describe());
}

std::string HalfCarParams::describe() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "c_f=%.6g c_r=%.6g k_f=%.6g k_r=%.6g m_s=%.6g I_y=%.6g", c_front, c_rear, k_front,
                k_rear, sprung_mass, pitch_inertia);
  return buf;
}

void BumpScenario::validate(const HalfCarParams& p) const {
  if (!(speed > 0)) throw ConfigError("bump: speed must be positive");
  if (!(height >= 0)) throw ConfigError("bump: height must be nonnegative");
  if (!(length > 0)) throw ConfigError("bump: length must be positive");
  if (!(onset >= 0)) throw ConfigError("bump: onset must be nonnegative");
  if (!(dt > 0 && dt <= 1e-3)) throw ConfigError("bump: dt must lie in (0, 1e-3]");
  if (!(duration > onset + (p.wheelbase() + length) / speed))
    throw ConfigError("bump: duration must cover both axles crossing the bump");
}

std::size_t BumpScenario::steps() const { return static_cast<std::size_t>(std::llround(duration / dt)); }

double road_profile(double t, const BumpScenario& sc, double axle_offset) {
  const double s = sc.speed * (t - sc.onset) - axle_offset;
  if (s < 0.0 || s > sc.length) return 0.0;
  return sc.height * std::sin(std::numbers::pi * s / sc.length);
}

namespace {

struct Model {
  const HalfCarParams& p;
  const BumpScenario& sc;
  double wf, wr, rear_offset;

  Model(const HalfCarParams& params, const BumpScenario& scenario)
      : p(params),
        sc(scenario),
        wf(params.static_load_front()),
        wr(params.static_load_rear()),
        rear_offset(scenario.simultaneous ? 0.0 : params.wheelbase()) {}

  struct Out {
    double accel;
    double tire_f;
    double tire_r;
  };

  // dy = f(t, y); returns the recorded outputs.
  Out deriv(double t, const HalfCarState& y, HalfCarState& dy) const {
    const double rf = road_profile(t, sc, 0.0);
    const double rr = road_profile(t, sc, rear_offset);
    const double zsf = y[0] - p.a * y[1];
    const double zsr = y[0] + p.b * y[1];
    const double vsf = y[4] - p.a * y[5];
    const double vsr = y[4] + p.b * y[5];
    const double fsf = p.k_front * (y[2] - zsf) + p.c_front * (y[6] - vsf);
    const double fsr = p.k_rear * (y[3] - zsr) + p.c_rear * (y[7] - vsr);
    const double tf = std::max(0.0, wf + p.tire_front * (rf - y[2]));
    const double tr = std::max(0.0, wr + p.tire_rear * (rr - y[3]));
    dy[0] = y[4];
    dy[1] = y[5];
    dy[2] = y[6];
    dy[3] = y[7];
    dy[4] = (fsf + fsr) / p.sprung_mass;
    dy[5] = (-p.a * fsf + p.b * fsr) / p.pitch_inertia;
    dy[6] = (-fsf + (tf - wf)) / p.unsprung_front;
    dy[7] = (-fsr + (tr - wr)) / p.unsprung_rear;
    return {dy[4], tf, tr};
  }
};

template <typename Sink>
void integrate(const HalfCarParams& p, const BumpScenario& sc, Sink&& sink) {
  p.validate();
  sc.validate(p);
  const Model model(p, sc);
  const std::size_t n = sc.steps();
  const double dt = sc.dt;
  HalfCarState y{};
  HalfCarState k1, k2, k3, k4, tmp;
  for (std::size_t step = 0;; ++step) {
    const double t = static_cast<double>(step) * dt;
    const auto out = model.deriv(t, y, k1);
    if (!std::isfinite(out.accel) || !std::isfinite(y[5]))
      throw InstabilityError("half car: non-finite state at t=" + std::to_string(t) + " (" + p.describe() + ")");
    sink(t, y, out.accel, out.tire_f, out.tire_r);
    if (step == n) break;
    for (int i = 0; i < 8; ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
    model.deriv(t + 0.5 * dt, tmp, k2);
    for (int i = 0; i < 8; ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
    model.deriv(t + 0.5 * dt, tmp, k3);
    for (int i = 0; i < 8; ++i) tmp[i] = y[i] + dt * k3[i];
    model.deriv(t + dt, tmp, k4);
    for (int i = 0; i < 8; ++i) y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
}

// Running trapezoid of s^2; kept identical to rms() so that streamed and
// stored descriptors agree bit for bit.
struct RmsAccumulator {
  double integral = 0.0;
  double prev_t = 0.0;
  double prev_sq = 0.0;
  double t0 = 0.0;
  bool started = false;

  void add(double t, double s) {
    const double sq = s * s;
    if (started) {
      integral += 0.5 * (prev_sq + sq) * (t - prev_t);
    } else {
      t0 = t;
      started = true;
    }
    prev_t = t;
    prev_sq = sq;
  }
  double value() const {
    const double span = prev_t - t0;
    return span > 0 ? std::sqrt(integral / span) : std::sqrt(prev_sq);
  }
};

// Per-sample weight for grip loss: the step ending at the sample, or the
// first step for sample 0.
struct GripAccumulator {
  double total = 0.0;
  double prev_t = 0.0;
  int first_lost = 0;
  std::size_t count = 0;

  void add(double t, double ff, double fr) {
    const int lost = (ff <= 0.0 ? 1 : 0) + (fr <= 0.0 ? 1 : 0);
    if (count == 0) {
      first_lost = lost;
    } else {
      if (count == 1) total += first_lost * (t - prev_t);
      total += lost * (t - prev_t);
    }
    prev_t = t;
    ++count;
  }
};

}  // namespace

SignalTrace simulate(const HalfCarParams& p, const BumpScenario& sc, std::vector<HalfCarState>* states) {
  SignalTrace tr;
  const std::size_t n = sc.steps() + 1;
  tr.time.reserve(n);
  tr.accel.reserve(n);
  tr.pitch_rate.reserve(n);
  tr.tire_front.reserve(n);
  tr.tire_rear.reserve(n);
  if (states) {
    states->clear();
    states->reserve(n);
  }
  integrate(p, sc, [&](double t, const HalfCarState& y, double az, double ff, double fr) {
    tr.time.push_back(t);
    tr.accel.push_back(az);
    tr.pitch_rate.push_back(y[5]);
    tr.tire_front.push_back(ff);
    tr.tire_rear.push_back(fr);
    if (states) states->push_back(y);
  });
  return tr;
}

double mechanical_energy(const HalfCarParams& p, const HalfCarState& y, double road_front, double road_rear) {
  const double zsf = y[0] - p.a * y[1];
  const double zsr = y[0] + p.b * y[1];
  const double kinetic = 0.5 * (p.sprung_mass * y[4] * y[4] + p.pitch_inertia * y[5] * y[5] +
                                p.unsprung_front * y[6] * y[6] + p.unsprung_rear * y[7] * y[7]);
  const double elastic = 0.5 * (p.k_front * (y[2] - zsf) * (y[2] - zsf) + p.k_rear * (y[3] - zsr) * (y[3] - zsr) +
                                p.tire_front * (y[2] - road_front) * (y[2] - road_front) +
                                p.tire_rear * (y[3] - road_rear) * (y[3] - road_rear));
  return kinetic + elastic;
}

double rms(std::span<const double> signal, std::span<const double> time) {
  if (signal.empty() || signal.size() != time.size()) throw DomainError("rms: need equal, nonempty signal and time");
  RmsAccumulator acc;
  for (std::size_t k = 0; k < signal.size(); ++k) acc.add(time[k], signal[k]);
  return acc.value();
}

double grip_loss_time(const SignalTrace& trace) {
  GripAccumulator acc;
  for (std::size_t k = 0; k < trace.size(); ++k) acc.add(trace.time[k], trace.tire_front[k], trace.tire_rear[k]);
  return acc.total;
}

SuspensionDescriptors compute_descriptors(const SignalTrace& trace) {
  return {rms(trace.accel, trace.time), rms(trace.pitch_rate, trace.time), grip_loss_time(trace)};
}

SuspensionDescriptors simulate_descriptors(const HalfCarParams& p, const BumpScenario& sc) {
  RmsAccumulator az, pr;
  GripAccumulator grip;
  integrate(p, sc, [&](double t, const HalfCarState& y, double a, double ff, double fr) {
    az.add(t, a);
    pr.add(t, y[5]);
    grip.add(t, ff, fr);
  });
  return {az.value(), pr.value(), grip.total};
}

std::string trace_csv(const SignalTrace& trace) {
  std::ostringstream os;
  os << "time,A_z,pitch_rate,F_tf,F_tr\n";
  char buf[160];
  for (std::size_t k = 0; k < trace.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", trace.time[k], trace.accel[k],
                  trace.pitch_rate[k], trace.tire_front[k], trace.tire_rear[k]);
    os << buf;
  }
  return os.str();
}

std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t max_points) {
  std::vector<std::size_t> out;
  if (n == 0 || max_points == 0) return out;
  if (n <= max_points) {
    for (std::size_t k = 0; k < n; ++k) out.push_back(k);
    return out;
  }
  if (max_points == 1) return {0};
  for (std::size_t k = 0; k < max_points; ++k) {
    const std::size_t idx = static_cast<std::size_t>(
        std::llround(static_cast<double>(k) * static_cast<double>(n - 1) / static_cast<double>(max_points - 1)));
    if (out.empty() || idx != out.back()) out.push_back(idx);
  }
  return out;
}

}  // namespace prefopt
