#pragma once

#include <cstdint>
#include <vector>

#include "ccotdr/common.hpp"

namespace ccotdr::fibermodel {

enum class EventType { PcConnector, ApcTermination };

struct ReflectionEvent {
  double position_m = 0.0;
  EventType type = EventType::PcConnector;
  double return_loss_db = -45.0;
};

struct RayleighSpec {
  double cell_length_m = 1.0;
  double mean_return_loss_db = -65.0;  // mean backscatter power per cell
  uint64_t seed = 1;
};

struct HeatedSection {
  double start_m = 39.0;
  double end_m = 234.0;
  double length_m() const { return end_m - start_m; }
};

struct FiberLayout {
  std::vector<ReflectionEvent> events;
  double fiber_length_m = 250.0;
  double group_index = 1.5;
  double wavelength_m = 1.55e-6;
  RayleighSpec rayleigh;
  HeatedSection heated;

  double step_m(double sample_rate_hz) const {
    return distance_step_m(group_index, sample_rate_hz);
  }
  // Fraction of the heated section in front of a reflection at z.
  double heated_fraction(double z_m) const;
  void validate() const;
  static FiberLayout default_layout();
};

struct Stage {
  double duration_s = 0.0;
  double setpoint_c = 30.0;
  bool fan_on = false;
};

struct AcousticTone {
  bool enabled = true;
  double frequency_hz = 400.0;
  double phase_amp_pp_rad = 0.25;  // peak-to-peak phase excursion
};

struct AirflowNoise {
  double bandwidth_hz = 400.0;  // low-pass corner of the broadband pickup
  double rms_rad = 0.1;         // phase rms while the fan runs
};

struct ScenarioProfile {
  std::vector<Stage> stages;
  double heat_slew_max_kps = 0.09;
  double cool_slew_max_kps = 0.21;  // magnitude; applied as a negative rate
  double chamber_tau_heat_s = 67.0;
  double chamber_tau_cool_s = 20.0;
  AcousticTone acoustic;
  AirflowNoise airflow;
  double thermal_time_constant_s = 73.0;      // heated fiber core lag
  double phase_temp_coeff_rad_per_k = 1.661e4;

  double total_duration_s() const;
  bool fan_on_at(double t_s) const;
  void validate() const;
};

// Chamber air temperature on a uniform time grid.  The controller drives the
// air toward the active setpoint as a first-order approach whose rate is
// clamped at the configured slew limits, so long steps move at the limit and
// the approach rolls off near the target.
ArrayXd chamber_temperature(const ScenarioProfile& profile, const ArrayXd& t_grid);

// Discrete first-order lag of the fiber core behind the chamber air.
// Requires dt <= tau/10 for the explicit update to track the continuous lag.
ArrayXd core_temperature(const ArrayXd& chamber_c, double tau_s, double dt_s,
                         double initial_c);

// Band-limited airflow phase pickup, gated by the fan state.  Zero everywhere
// when no stage runs the fan.
ArrayXd airflow_phase(const ScenarioProfile& profile, const ArrayXd& t_grid,
                      uint64_t rng_seed);

// Deterministic stimulus part of the differential propagation phase between
// the section ends: thermal term + acoustic tone + airflow pickup.
ArrayXd true_phase_difference(const ScenarioProfile& profile, const ArrayXd& core_c,
                              const ArrayXd& t_grid, uint64_t rng_seed);

// Effective thermo-optic rate implied by a phase/temperature coefficient for
// a section of the given length.
double derived_dn_dt(double phase_temp_coeff_rad_per_k, double wavelength_m,
                     double section_length_m);

struct GroundTruth {
  ArrayXd t_s;
  ArrayXd chamber_c;
  ArrayXd core_c;
  ArrayXd phase_rad;
};

// Ground truth sampled at the shot rate for n_shots shots.
GroundTruth make_ground_truth(const ScenarioProfile& profile, double shot_rate_hz,
                              long n_shots, uint64_t rng_seed);

}  // namespace ccotdr::fibermodel
