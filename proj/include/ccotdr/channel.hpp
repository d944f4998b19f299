#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ccotdr/common.hpp"
#include "ccotdr/fibermodel.hpp"
#include "ccotdr/waveform.hpp"

namespace ccotdr::channel {

struct NoiseSpec {
  double laser_linewidth_hz = 100.0;
  // Per-sample SNR of the strongest configured reflection, in dB.
  // Disabled when absent.
  std::optional<double> receiver_snr_db = 30.0;
  uint64_t rng_seed = 1;
};

enum class SimMode { Fast, Full };
enum class Polarization { Single, Dual };

// Static channel state: one complex tap per two-way delay sample.  Taps stay
// frozen across shots; per-shot dynamics rotate them.
struct ImpulseResponse {
  ArrayXcd taps_x;
  ArrayXcd taps_y;               // size 0 in single-polarization builds
  ArrayXd heated_fraction;       // 0..1 per tap
  std::vector<int> active;       // nonzero tap indices, ascending
  std::vector<int> event_index;  // taps holding configured reflection events
  double distance_step_m = 0.0;
  double sample_rate_hz = 0.0;
  double noise_ref_amplitude = 0.0;  // strongest configured reflection

  int size() const { return static_cast<int>(taps_x.size()); }
  bool dual() const { return taps_y.size() != 0; }
};

ImpulseResponse build_impulse_response(const fibermodel::FiberLayout& layout,
                                       double sample_rate_hz,
                                       Polarization pol = Polarization::Single);

struct ShotRecord {
  double t_s = 0.0;
  SimMode mode = SimMode::Fast;
  // Fast mode: one phasor per monitored event per channel,
  // ordered [x:event_a, x:event_b, y:event_a, y:event_b].
  ArrayXcd phasors;
  // Full mode: received samples.
  ArrayXcd rx_x;
  ArrayXcd rx_y;
};

// Static per-event quantities the fast path needs.
struct MonitoredPair {
  int index_a = 0, index_b = 0;
  double delay_a_s = 0.0, delay_b_s = 0.0;
  double frac_a = 0.0, frac_b = 0.0;
  double amp_a = 0.0, amp_b = 0.0;
  cplx jones_a_x{1.0, 0.0}, jones_a_y{0.0, 0.0};
  cplx jones_b_x{1.0, 0.0}, jones_b_y{0.0, 0.0};
};

struct SimulationSetup {
  waveform::ProbeFrame frame;
  fibermodel::FiberLayout layout;
  fibermodel::ScenarioProfile scenario;
  NoiseSpec noise;
  SimMode mode = SimMode::Fast;
  Polarization polarization = Polarization::Single;
  double shot_rate_hz = 4000.0;
  double monitor_a_m = 39.0;
  double monitor_b_m = 234.0;
};

// Amplitude of the strongest configured reflection; the receiver-noise
// reference level.
double strongest_event_amplitude(const fibermodel::FiberLayout& layout);
double receiver_noise_sigma(const fibermodel::FiberLayout& layout,
                            const NoiseSpec& noise);

MonitoredPair monitored_pair(const SimulationSetup& setup);

// Full-fidelity shot: rotate taps by the scenario phase and the per-tap laser
// phase walk, convolve with the probe, add receiver noise.
ShotRecord simulate_shot(const waveform::ProbeFrame& frame, const ImpulseResponse& ir,
                         double scenario_phase_rad, const NoiseSpec& noise,
                         double t_shot_s, uint64_t shot_index);

struct RunResult {
  fibermodel::GroundTruth ground_truth;
  std::vector<ShotRecord> shots;
  MonitoredPair pair;
  SimMode mode = SimMode::Fast;
  Polarization polarization = Polarization::Single;
  double shot_rate_hz = 0.0;
};

RunResult simulate_run(const SimulationSetup& setup, int threads = 1);

}  // namespace ccotdr::channel
