#include "ccotdr/fibermodel.hpp"

#include <algorithm>
#include <cmath>

#include "ccotdr/rng.hpp"

namespace ccotdr::fibermodel {

double FiberLayout::heated_fraction(double z_m) const {
  double len = heated.length_m();
  if (len <= 0.0) return z_m >= heated.end_m ? 1.0 : 0.0;
  return std::clamp((z_m - heated.start_m) / len, 0.0, 1.0);
}

void FiberLayout::validate() const {
  if (fiber_length_m <= 0) throw InvalidArgument("layout.fiber_length_m: must be positive");
  if (group_index < 1.4 || group_index > 1.6)
    throw InvalidArgument("layout.group_index: must be within [1.4, 1.6]");
  if (wavelength_m <= 0) throw InvalidArgument("layout.wavelength_m: must be positive");
  if (heated.start_m < 0 || heated.end_m > fiber_length_m || heated.end_m < heated.start_m)
    throw InvalidArgument("layout.heated: section must lie inside the fiber");
  for (size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    if (ev.position_m < 0 || ev.position_m > fiber_length_m)
      throw InvalidArgument("layout.events[" + std::to_string(i) +
                            "].position_m: outside the fiber");
    if (ev.return_loss_db > 0)
      throw InvalidArgument("layout.events[" + std::to_string(i) +
                            "].return_loss_db: must be <= 0 dB");
    if (i > 0 && ev.position_m <= events[i - 1].position_m)
      throw InvalidArgument("layout.events: positions must be strictly increasing");
  }
  if (rayleigh.cell_length_m <= 0)
    throw InvalidArgument("layout.rayleigh.cell_length_m: must be positive");
}

FiberLayout FiberLayout::default_layout() {
  FiberLayout fl;
  fl.events = {
      {39.0, EventType::PcConnector, -45.0},
      {234.0, EventType::PcConnector, -45.0},
      {250.0, EventType::ApcTermination, -50.0},
  };
  return fl;
}

double ScenarioProfile::total_duration_s() const {
  double total = 0.0;
  for (const auto& st : stages) total += st.duration_s;
  return total;
}

bool ScenarioProfile::fan_on_at(double t_s) const {
  double acc = 0.0;
  for (const auto& st : stages) {
    acc += st.duration_s;
    if (t_s < acc) return st.fan_on;
  }
  return stages.empty() ? false : stages.back().fan_on;
}

void ScenarioProfile::validate() const {
  if (stages.empty()) throw InvalidArgument("scenario.stages: must be non-empty");
  for (size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].duration_s <= 0)
      throw InvalidArgument("scenario.stages[" + std::to_string(i) +
                            "].duration_s: must be positive");
    if (stages[i].setpoint_c < 0 || stages[i].setpoint_c > 100)
      throw InvalidArgument("scenario.stages[" + std::to_string(i) +
                            "].setpoint_c: must be within [0, 100] C");
  }
  if (heat_slew_max_kps <= 0 || cool_slew_max_kps <= 0)
    throw InvalidArgument("scenario: slew limits must be positive");
  if (chamber_tau_heat_s <= 0 || chamber_tau_cool_s <= 0)
    throw InvalidArgument("scenario: chamber approach constants must be positive");
  if (thermal_time_constant_s <= 0)
    throw InvalidArgument("scenario.thermal_time_constant_s: must be positive");
  if (acoustic.enabled && acoustic.frequency_hz <= 0)
    throw InvalidArgument("scenario.acoustic.frequency_hz: must be positive");
  if (acoustic.phase_amp_pp_rad < 0)
    throw InvalidArgument("scenario.acoustic.phase_amp_pp_rad: must be non-negative");
  if (airflow.bandwidth_hz <= 0)
    throw InvalidArgument("scenario.airflow.bandwidth_hz: must be positive");
  if (airflow.rms_rad < 0)
    throw InvalidArgument("scenario.airflow.rms_rad: must be non-negative");
}

namespace {

void check_uniform_grid(const ArrayXd& t) {
  if (t.size() < 2) return;
  double dt = t[1] - t[0];
  if (dt <= 0) throw InvalidArgument("t_grid: must be strictly increasing");
  for (int i = 2; i < t.size(); ++i) {
    double d = t[i] - t[i - 1];
    if (std::abs(d - dt) > 1e-9 * std::max(1.0, dt))
      throw InvalidArgument("t_grid: must be uniform");
  }
}

double setpoint_at(const ScenarioProfile& p, double t_s) {
  double acc = 0.0;
  for (const auto& st : p.stages) {
    acc += st.duration_s;
    if (t_s < acc) return st.setpoint_c;
  }
  return p.stages.back().setpoint_c;
}

}  // namespace

ArrayXd chamber_temperature(const ScenarioProfile& profile, const ArrayXd& t_grid) {
  profile.validate();
  check_uniform_grid(t_grid);
  ArrayXd out(t_grid.size());
  if (t_grid.size() == 0) return out;

  double temp = profile.stages.front().setpoint_c;
  out[0] = temp;
  for (int k = 1; k < t_grid.size(); ++k) {
    double dt = t_grid[k] - t_grid[k - 1];
    double err = setpoint_at(profile, t_grid[k - 1]) - temp;
    double rate = err >= 0 ? err / profile.chamber_tau_heat_s
                           : err / profile.chamber_tau_cool_s;
    rate = std::clamp(rate, -profile.cool_slew_max_kps, profile.heat_slew_max_kps);
    temp += rate * dt;
    out[k] = temp;
  }
  return out;
}

ArrayXd core_temperature(const ArrayXd& chamber_c, double tau_s, double dt_s,
                         double initial_c) {
  if (tau_s <= 0) throw InvalidArgument("core_temperature: tau must be positive");
  if (dt_s <= 0) throw InvalidArgument("core_temperature: dt must be positive");
  if (dt_s > tau_s / 10.0)
    throw InvalidArgument("core_temperature: dt must be <= tau/10 for a stable lag");
  ArrayXd out(chamber_c.size());
  double y = initial_c;
  const double g = dt_s / tau_s;
  for (int k = 0; k < chamber_c.size(); ++k) {
    out[k] = y;
    y += g * (chamber_c[k] - y);
  }
  return out;
}

ArrayXd airflow_phase(const ScenarioProfile& profile, const ArrayXd& t_grid,
                      uint64_t rng_seed) {
  check_uniform_grid(t_grid);
  ArrayXd out = ArrayXd::Zero(t_grid.size());
  if (t_grid.size() < 2 || profile.airflow.rms_rad <= 0) return out;

  bool any_fan = false;
  for (const auto& st : profile.stages) any_fan |= st.fan_on;
  if (!any_fan) return out;

  const double dt = t_grid[1] - t_grid[0];
  const double a = std::exp(-kTwoPi * profile.airflow.bandwidth_hz * dt);
  const double b = 1.0 - a;
  constexpr int kSections = 5;

  // Variance gain of the filter cascade, from its impulse response.
  double gain = 0.0;
  {
    double st[kSections] = {0, 0, 0, 0, 0};
    double in = 1.0;
    for (long n = 0; n < 4000000; ++n) {
      double x = in;
      in = 0.0;
      for (int s = 0; s < kSections; ++s) {
        st[s] = a * st[s] + b * x;
        x = st[s];
      }
      gain += x * x;
      if (n > 16 && x * x < gain * 1e-17) break;
    }
  }
  const double scale = profile.airflow.rms_rad / std::sqrt(gain);

  Rng rng = derive_rng(rng_seed, kStreamAirflow);
  double st[kSections] = {0, 0, 0, 0, 0};
  for (int k = 0; k < t_grid.size(); ++k) {
    double x = scale * rng.next_gaussian();
    for (int s = 0; s < kSections; ++s) {
      st[s] = a * st[s] + b * x;
      x = st[s];
    }
    out[k] = profile.fan_on_at(t_grid[k]) ? x : 0.0;
  }
  return out;
}

ArrayXd true_phase_difference(const ScenarioProfile& profile, const ArrayXd& core_c,
                              const ArrayXd& t_grid, uint64_t rng_seed) {
  if (core_c.size() != t_grid.size())
    throw InvalidArgument("true_phase_difference: grid size mismatch");
  ArrayXd phase = ArrayXd::Zero(t_grid.size());
  if (t_grid.size() == 0) return phase;

  phase = profile.phase_temp_coeff_rad_per_k * (core_c - core_c[0]);
  if (profile.acoustic.enabled && profile.acoustic.phase_amp_pp_rad > 0) {
    double amp = 0.5 * profile.acoustic.phase_amp_pp_rad;
    phase += amp * (kTwoPi * profile.acoustic.frequency_hz * t_grid).sin();
  }
  phase += airflow_phase(profile, t_grid, rng_seed);
  return phase;
}

double derived_dn_dt(double phase_temp_coeff_rad_per_k, double wavelength_m,
                     double section_length_m) {
  if (wavelength_m <= 0 || section_length_m <= 0)
    throw InvalidArgument("derived_dn_dt: wavelength and length must be positive");
  // dphi/dT = 4*pi*L/lambda * dn/dT for a two-way pass over the section.
  return phase_temp_coeff_rad_per_k * wavelength_m / (4.0 * kPi * section_length_m);
}

GroundTruth make_ground_truth(const ScenarioProfile& profile, double shot_rate_hz,
                              long n_shots, uint64_t rng_seed) {
  if (shot_rate_hz <= 0) throw InvalidArgument("shot_rate_hz: must be positive");
  if (n_shots < 0) throw InvalidArgument("n_shots: must be non-negative");
  GroundTruth gt;
  gt.t_s.resize(n_shots);
  for (long k = 0; k < n_shots; ++k) gt.t_s[k] = static_cast<double>(k) / shot_rate_hz;
  if (n_shots == 0) {
    gt.chamber_c.resize(0);
    gt.core_c.resize(0);
    gt.phase_rad.resize(0);
    return gt;
  }
  gt.chamber_c = chamber_temperature(profile, gt.t_s);
  gt.core_c = core_temperature(gt.chamber_c, profile.thermal_time_constant_s,
                               1.0 / shot_rate_hz, gt.chamber_c[0]);
  gt.phase_rad = true_phase_difference(profile, gt.core_c, gt.t_s, rng_seed);
  return gt;
}

}  // namespace ccotdr::fibermodel
