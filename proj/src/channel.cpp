#include "ccotdr/channel.hpp"

#include <algorithm>
#include <cmath>

#include "ccotdr/parallel.hpp"
#include "ccotdr/rng.hpp"

namespace ccotdr::channel {

namespace {

constexpr uint64_t kEventJonesBase = 1000000;  // keeps event splits clear of cell indices

// Static polarization split of one scatterer: x gets sqrt(g), y gets
// sqrt(1-g) with a random relative phase.
void jones_split(uint64_t seed, uint64_t index, cplx* cx, cplx* cy) {
  Rng rng = derive_rng(seed, kStreamJones, index);
  double g = rng.next_double();
  double chi = kTwoPi * rng.next_double();
  *cx = cplx(std::sqrt(g), 0.0);
  *cy = std::sqrt(1.0 - g) * cplx(std::cos(chi), std::sin(chi));
}

}  // namespace

ImpulseResponse build_impulse_response(const fibermodel::FiberLayout& layout,
                                       double sample_rate_hz, Polarization pol) {
  layout.validate();
  if (sample_rate_hz <= 0) throw InvalidArgument("sample_rate_hz: must be positive");
  const double step = layout.step_m(sample_rate_hz);
  if (layout.rayleigh.cell_length_m < step)
    throw InvalidArgument("layout.rayleigh.cell_length_m: smaller than one distance sample");

  ImpulseResponse ir;
  ir.distance_step_m = step;
  ir.sample_rate_hz = sample_rate_hz;
  ir.noise_ref_amplitude = strongest_event_amplitude(layout);
  const int n_bins = distance_to_index(layout.fiber_length_m, layout.group_index,
                                       sample_rate_hz) + 1;
  ir.taps_x = ArrayXcd::Zero(n_bins);
  ir.heated_fraction = ArrayXd::Zero(n_bins);
  const bool dual = pol == Polarization::Dual;
  if (dual) ir.taps_y = ArrayXcd::Zero(n_bins);

  // Frozen Rayleigh speckle: one complex-Gaussian tap per cell, centered.
  const double cl = layout.rayleigh.cell_length_m;
  const double cell_amp = std::pow(10.0, layout.rayleigh.mean_return_loss_db / 20.0);
  const long n_cells = static_cast<long>(layout.fiber_length_m / cl);
  for (long j = 0; j < n_cells; ++j) {
    double z = (static_cast<double>(j) + 0.5) * cl;
    int idx = static_cast<int>(z / step);
    if (idx >= n_bins) continue;
    Rng rng = derive_rng(layout.rayleigh.seed, kStreamRayleigh, static_cast<uint64_t>(j));
    cplx a = cell_amp * rng.next_cgaussian();
    cplx cx(1.0, 0.0), cy(0.0, 0.0);
    if (dual) jones_split(layout.rayleigh.seed, static_cast<uint64_t>(j), &cx, &cy);
    ir.taps_x[idx] += a * cx;
    if (dual) ir.taps_y[idx] += a * cy;
    ir.heated_fraction[idx] = layout.heated_fraction(z);
  }

  // Deterministic reflection events at their exact distance indices.
  for (size_t i = 0; i < layout.events.size(); ++i) {
    const auto& ev = layout.events[i];
    int idx = static_cast<int>(ev.position_m / step);
    if (idx >= n_bins) idx = n_bins - 1;
    double amp = std::pow(10.0, ev.return_loss_db / 20.0);
    cplx cx(1.0, 0.0), cy(0.0, 0.0);
    if (dual) jones_split(layout.rayleigh.seed, kEventJonesBase + i, &cx, &cy);
    ir.taps_x[idx] += amp * cx;
    if (dual) ir.taps_y[idx] += amp * cy;
    ir.heated_fraction[idx] = layout.heated_fraction(ev.position_m);
    ir.event_index.push_back(idx);
  }

  for (int i = 0; i < n_bins; ++i) {
    double mag = std::abs(ir.taps_x[i]);
    if (dual) mag += std::abs(ir.taps_y[i]);
    if (mag > 0.0) ir.active.push_back(i);
  }
  return ir;
}

double strongest_event_amplitude(const fibermodel::FiberLayout& layout) {
  double best_db = layout.rayleigh.mean_return_loss_db;
  bool found = false;
  for (const auto& ev : layout.events) {
    if (!found || ev.return_loss_db > best_db) best_db = ev.return_loss_db;
    found = true;
  }
  return std::pow(10.0, best_db / 20.0);
}

double receiver_noise_sigma(const fibermodel::FiberLayout& layout, const NoiseSpec& noise) {
  if (!noise.receiver_snr_db) return 0.0;
  return strongest_event_amplitude(layout) * std::pow(10.0, -*noise.receiver_snr_db / 20.0);
}

MonitoredPair monitored_pair(const SimulationSetup& setup) {
  const auto& layout = setup.layout;
  const double fs = setup.frame.spec.sample_rate_hz;
  const double step = layout.step_m(fs);
  const bool dual = setup.polarization == Polarization::Dual;

  auto locate = [&](double z, const char* field) {
    int want = static_cast<int>(z / step);
    for (size_t i = 0; i < layout.events.size(); ++i) {
      if (static_cast<int>(layout.events[i].position_m / step) == want)
        return std::pair<int, size_t>(want, i);
    }
    throw InvalidArgument(std::string(field) + ": no reflection event at this position");
  };

  auto [idx_a, ord_a] = locate(setup.monitor_a_m, "monitor.position_a_m");
  auto [idx_b, ord_b] = locate(setup.monitor_b_m, "monitor.position_b_m");
  if (idx_a == idx_b)
    throw InvalidArgument("monitor: monitored events must map to distinct taps");
  if (idx_b < idx_a)
    throw InvalidArgument("monitor.position_b_m: must lie beyond position_a_m");

  MonitoredPair pair;
  pair.index_a = idx_a;
  pair.index_b = idx_b;
  pair.delay_a_s = idx_a / fs;
  pair.delay_b_s = idx_b / fs;
  pair.frac_a = layout.heated_fraction(layout.events[ord_a].position_m);
  pair.frac_b = layout.heated_fraction(layout.events[ord_b].position_m);
  pair.amp_a = std::pow(10.0, layout.events[ord_a].return_loss_db / 20.0);
  pair.amp_b = std::pow(10.0, layout.events[ord_b].return_loss_db / 20.0);
  if (dual) {
    jones_split(layout.rayleigh.seed, kEventJonesBase + ord_a, &pair.jones_a_x, &pair.jones_a_y);
    jones_split(layout.rayleigh.seed, kEventJonesBase + ord_b, &pair.jones_b_x, &pair.jones_b_y);
  }
  return pair;
}

ShotRecord simulate_shot(const waveform::ProbeFrame& frame, const ImpulseResponse& ir,
                         double scenario_phase_rad, const NoiseSpec& noise,
                         double t_shot_s, uint64_t shot_index) {
  if (ir.active.empty()) throw InvalidArgument("impulse response has no taps");
  if (frame.spec.zero_pad_samples < ir.active.back())
    throw InvalidArgument("probe.zero_pad_samples: pad must cover the farthest tap");
  if (noise.laser_linewidth_hz < 0)
    throw InvalidArgument("noise.laser_linewidth_hz: must be non-negative");

  const int n_sig = frame.signal_samples;
  const long n_rx = frame.samples.size();
  const bool dual = ir.dual();

  ShotRecord shot;
  shot.t_s = t_shot_s;
  shot.mode = SimMode::Full;
  shot.rx_x = ArrayXcd::Zero(n_rx);
  if (dual) shot.rx_y = ArrayXcd::Zero(n_rx);

  // Laser phase walk along the fiber: each tap beats against the local
  // oscillator with the phase the laser accumulated over that tap's two-way
  // delay.  A shared walk gives pairwise variance 2*pi*linewidth*|dtau|.
  Rng laser = derive_rng(noise.rng_seed, kStreamLaser, shot_index);
  const double lw = noise.laser_linewidth_hz;
  double walk = 0.0;
  double tau_prev = 0.0;
  for (int idx : ir.active) {
    double tau = idx / ir.sample_rate_hz;
    if (lw > 0.0)
      walk += laser.next_gaussian() * std::sqrt(kTwoPi * lw * (tau - tau_prev));
    tau_prev = tau;
    double ang = ir.heated_fraction[idx] * scenario_phase_rad + walk;
    cplx rot(std::cos(ang), std::sin(ang));
    cplx vx = ir.taps_x[idx] * rot;
    shot.rx_x.segment(idx, n_sig) += vx * frame.samples.head(n_sig);
    if (dual) {
      cplx vy = ir.taps_y[idx] * rot;
      shot.rx_y.segment(idx, n_sig) += vy * frame.samples.head(n_sig);
    }
  }

  double sigma = 0.0;
  if (noise.receiver_snr_db)
    sigma = ir.noise_ref_amplitude * std::pow(10.0, -*noise.receiver_snr_db / 20.0);
  if (sigma > 0.0) {
    Rng awgn = derive_rng(noise.rng_seed, kStreamAwgn, shot_index);
    const double s = sigma / std::sqrt(2.0);
    for (long i = 0; i < n_rx; ++i)
      shot.rx_x[i] += cplx(s * awgn.next_gaussian(), s * awgn.next_gaussian());
    if (dual)
      for (long i = 0; i < n_rx; ++i)
        shot.rx_y[i] += cplx(s * awgn.next_gaussian(), s * awgn.next_gaussian());
  }
  return shot;
}

namespace {

ShotRecord fast_shot(const MonitoredPair& pair, bool dual, double scenario_phase_rad,
                     double sigma_peak, const NoiseSpec& noise, double t_shot_s,
                     uint64_t shot_index) {
  ShotRecord shot;
  shot.t_s = t_shot_s;
  shot.mode = SimMode::Fast;
  shot.phasors = ArrayXcd::Zero(dual ? 4 : 2);

  Rng laser = derive_rng(noise.rng_seed, kStreamLaser, shot_index);
  const double lw = noise.laser_linewidth_hz;
  double w_a = 0.0, w_b = 0.0;
  if (lw > 0.0) {
    w_a = laser.next_gaussian() * std::sqrt(kTwoPi * lw * pair.delay_a_s);
    w_b = w_a + laser.next_gaussian() *
                    std::sqrt(kTwoPi * lw * (pair.delay_b_s - pair.delay_a_s));
  }
  const double phi_a = pair.frac_a * scenario_phase_rad + w_a;
  const double phi_b = pair.frac_b * scenario_phase_rad + w_b;

  Rng awgn = derive_rng(noise.rng_seed, kStreamAwgn, shot_index);
  auto jitter = [&](double amp) {
    if (sigma_peak <= 0.0 || amp <= 0.0) return 0.0;
    double s = std::min(kPi, sigma_peak / (std::sqrt(2.0) * amp));
    return s * awgn.next_gaussian();
  };

  const cplx ja_x = dual ? pair.jones_a_x : cplx(1.0, 0.0);
  const cplx jb_x = dual ? pair.jones_b_x : cplx(1.0, 0.0);
  double na = jitter(pair.amp_a * std::abs(ja_x));
  double nb = jitter(pair.amp_b * std::abs(jb_x));
  shot.phasors[0] = ja_x * cplx(std::cos(phi_a + na), std::sin(phi_a + na));
  shot.phasors[1] = jb_x * cplx(std::cos(phi_b + nb), std::sin(phi_b + nb));
  if (dual) {
    double ma = jitter(pair.amp_a * std::abs(pair.jones_a_y));
    double mb = jitter(pair.amp_b * std::abs(pair.jones_b_y));
    shot.phasors[2] = pair.jones_a_y * cplx(std::cos(phi_a + ma), std::sin(phi_a + ma));
    shot.phasors[3] = pair.jones_b_y * cplx(std::cos(phi_b + mb), std::sin(phi_b + mb));
  }
  return shot;
}

}  // namespace

RunResult simulate_run(const SimulationSetup& setup, int threads) {
  setup.scenario.validate();
  setup.layout.validate();
  if (setup.shot_rate_hz <= 0) throw InvalidArgument("shot_rate_hz: must be positive");

  const double duration = setup.scenario.total_duration_s();
  const long n_shots = static_cast<long>(duration * setup.shot_rate_hz + 1e-9);

  RunResult result;
  result.mode = setup.mode;
  result.polarization = setup.polarization;
  result.shot_rate_hz = setup.shot_rate_hz;
  result.pair = monitored_pair(setup);
  result.ground_truth = fibermodel::make_ground_truth(setup.scenario, setup.shot_rate_hz,
                                                      n_shots, setup.noise.rng_seed);
  result.shots.resize(n_shots);
  if (n_shots == 0) return result;

  const bool dual = setup.polarization == Polarization::Dual;
  if (setup.mode == SimMode::Fast) {
    const double sigma_rx = receiver_noise_sigma(setup.layout, setup.noise);
    const double sigma_peak = sigma_rx / std::sqrt(setup.frame.signal_energy());
    parallel_for(n_shots, threads, [&](long k) {
      result.shots[k] = fast_shot(result.pair, dual, result.ground_truth.phase_rad[k],
                                  sigma_peak, setup.noise,
                                  result.ground_truth.t_s[k], static_cast<uint64_t>(k));
    });
  } else {
    if (setup.shot_rate_hz * setup.frame.frame_period_s() > 1.0 + 1e-12)
      throw InvalidArgument("shot_rate_hz: exceeds 1/frame_period in full mode");
    ImpulseResponse ir = build_impulse_response(setup.layout,
                                                setup.frame.spec.sample_rate_hz,
                                                setup.polarization);
    double bytes = static_cast<double>(n_shots) * setup.frame.samples.size() * 16.0 *
                   (dual ? 2.0 : 1.0);
    if (bytes > 8e9)
      throw InvalidArgument("full mode run too large to hold in memory; "
                            "use fast mode or shorten the scenario");
    parallel_for(n_shots, threads, [&](long k) {
      result.shots[k] = simulate_shot(setup.frame, ir, result.ground_truth.phase_rad[k],
                                      setup.noise, result.ground_truth.t_s[k],
                                      static_cast<uint64_t>(k));
    });
  }
  return result;
}

}  // namespace ccotdr::channel
