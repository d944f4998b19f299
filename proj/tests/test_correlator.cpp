#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <ccotdr/channel.hpp>
#include <ccotdr/correlator.hpp>
#include <ccotdr/rng.hpp>
#include <ccotdr/waveform.hpp>

#include <cmath>
#include <limits>

#include "oracles.hpp"

using namespace ccotdr;
using fibermodel::FiberLayout;

namespace {

const double kFs = 500e6;
const double kStep = distance_step_m(1.5, kFs);

waveform::ProbeFrame default_frame() { return waveform::build_probe_frame({}); }

ArrayXcd ref_of(const waveform::ProbeFrame& frame) {
  return frame.samples.head(frame.signal_samples);
}

channel::NoiseSpec quiet_noise() {
  channel::NoiseSpec n;
  n.laser_linewidth_hz = 0.0;
  n.receiver_snr_db.reset();
  return n;
}

}  // namespace

TEST_CASE("frequency-domain correlation matches the direct form") {
  Rng rng(99);
  ArrayXcd rx(700), ref(300);
  for (long i = 0; i < rx.size(); ++i) rx[i] = rng.next_cgaussian();
  for (long i = 0; i < ref.size(); ++i) ref[i] = rng.next_cgaussian();

  auto fast = correlator::correlate_shot(rx, ref, kStep, 0.25);
  auto slow = correlator::correlate_shot_direct(rx, ref, kStep, 0.25);
  REQUIRE(fast.bins.size() == rx.size() - ref.size() + 1);
  REQUIRE(slow.bins.size() == fast.bins.size());
  CHECK(fast.t_shot_s == 0.25);
  CHECK(fast.distance_step_m == kStep);

  const double scale = slow.bins.abs().maxCoeff();
  const double worst = (fast.bins - slow.bins).abs().maxCoeff();
  CHECK(worst / scale < 1e-9);
}

TEST_CASE("correlation input validation") {
  ArrayXcd rx = ArrayXcd::Zero(100), ref = ArrayXcd::Zero(200);
  CHECK_THROWS_AS(correlator::correlate_shot(rx, ref, kStep), InvalidArgument);
  CHECK_THROWS_AS(correlator::correlate_shot(rx, ArrayXcd(), kStep),
                  InvalidArgument);
}

TEST_CASE("a delayed copy of the reference produces a clean peak") {
  waveform::ProbeFrame frame = default_frame();
  ArrayXcd ref = ref_of(frame);
  ArrayXcd rx = ArrayXcd::Zero(3810);
  rx.segment(195, frame.signal_samples) = ref;

  auto refl = correlator::correlate_shot(rx, ref, kStep);
  REQUIRE(refl.bins.size() == 1251);
  long peak = 0;
  refl.bins.abs().maxCoeff(&peak);
  CHECK(peak == 195);
  CHECK(std::abs(refl.bins[195] - cplx(1.0, 0.0)) < 1e-12);
  CHECK(std::abs(std::arg(refl.bins[195])) < 1e-12);
}

TEST_CASE("a global phasor on rx rotates every bin by exactly that angle") {
  waveform::ProbeFrame frame = default_frame();
  ArrayXcd ref = ref_of(frame);
  ArrayXcd rx = ArrayXcd::Zero(3810);
  rx.segment(195, frame.signal_samples) = ref;
  // Sprinkle extra structure so non-peak bins are nonzero too.
  rx.segment(900, frame.signal_samples) += 0.3 * ref;

  const cplx rot = std::polar(1.0, kPi / 4.0);
  auto base = correlator::correlate_shot(rx, ref, kStep);
  auto turned = correlator::correlate_shot((rx * rot).eval(), ref, kStep);
  CHECK(std::arg(turned.bins[195]) == doctest::Approx(kPi / 4.0).epsilon(1e-9));
  const double scale = base.bins.abs().maxCoeff();
  const double worst = (turned.bins - base.bins * rot).abs().maxCoeff();
  CHECK(worst / scale < 1e-12);
}

TEST_CASE("correlation sidelobes are the probe autocorrelation, bit for bit") {
  waveform::ProbeFrame frame = default_frame();
  ArrayXcd ref = ref_of(frame);
  ArrayXcd rx = ArrayXcd::Zero(3810);
  rx.head(frame.signal_samples) = ref;  // reflector at distance bin 0

  auto refl = correlator::correlate_shot_direct(rx, ref, kStep);
  ArrayXi rsym = waveform::autocorrelate(frame.symbols);
  const long center = 511;

  // At whole-symbol lags the sample-domain correlation is exactly
  // 5x the symbol autocorrelation (rectangular NRZ, 5 samples/symbol).
  for (long q = 1; q <= 250; ++q) {
    long v = std::lround(refl.bins[5 * q].real() * frame.signal_energy());
    CHECK(v == 5 * rsym[center + q]);
    CHECK(std::abs(refl.bins[5 * q].imag()) < 1e-12);
  }

  // Bins 1..4 ride down the main-lobe triangle (one symbol wide at
  // 5 samples/symbol): a blend of the peak and the first symbol lag.
  for (long r = 1; r <= 4; ++r) {
    long v = std::lround(refl.bins[r].real() * frame.signal_energy());
    CHECK(v == (5 - r) * 512 + r * rsym[center + 1]);
  }

  // Beyond the main lobe the worst sidelobe equals the symbol-domain
  // worst case.
  int worst_sym = 0;
  for (long q = 1; q < 512; ++q)
    worst_sym = std::max(worst_sym, std::abs(rsym[center + q]));
  double worst_bin = 0.0;
  for (long k = 5; k < refl.bins.size(); ++k)
    worst_bin = std::max(worst_bin, std::abs(refl.bins[k]));
  CHECK(std::lround(worst_bin * frame.signal_energy()) == 5L * worst_sym);
  CHECK(worst_sym == 24);
}

TEST_CASE("two noiseless reflectors read back their return-loss difference") {
  waveform::ProbeFrame frame = default_frame();
  FiberLayout layout;
  layout.events = {{39.0, fibermodel::EventType::PcConnector, -40.0},
                   {234.0, fibermodel::EventType::PcConnector, -46.0}};
  layout.rayleigh.mean_return_loss_db = -std::numeric_limits<double>::infinity();
  auto ir = channel::build_impulse_response(layout, kFs);
  auto shot = channel::simulate_shot(frame, ir, 0.0, quiet_noise(), 0.0, 0);
  auto refl = correlator::correlate_shot(shot.rx_x, ref_of(frame), kStep);
  const double m1 = 20.0 * std::log10(std::abs(refl.bins[195]));
  const double m2 = 20.0 * std::log10(std::abs(refl.bins[1170]));
  CHECK(m1 - m2 == doctest::Approx(6.0).epsilon(0.5 / 6.0));
  CHECK(m1 == doctest::Approx(-40.0).epsilon(0.5 / 40.0));
}

TEST_CASE("return-loss trace dB scaling") {
  correlator::Reflectogram refl;
  refl.distance_step_m = kStep;
  refl.bins = ArrayXcd(3);
  refl.bins << cplx(1.0, 0.0), cplx(0.0, 0.1), cplx(0.0, 0.0);
  ArrayXd trace = correlator::return_loss_trace(refl);
  CHECK(trace[0] == 0.0);
  CHECK(trace[1] == doctest::Approx(-20.0).epsilon(1e-12));
  CHECK(std::isinf(trace[2]));
  CHECK(trace[2] < 0.0);

  ArrayXd shifted = correlator::return_loss_trace(refl, 0.1);
  CHECK(shifted[0] == doctest::Approx(20.0).epsilon(1e-12));
  CHECK_THROWS_AS(correlator::return_loss_trace(refl, 0.0), InvalidArgument);
}

TEST_CASE("matched-filter gain over per-sample SNR") {
  waveform::ProbeFrame frame = default_frame();
  FiberLayout layout;
  layout.events = {{39.0, fibermodel::EventType::PcConnector, -40.0}};
  layout.rayleigh.mean_return_loss_db = -std::numeric_limits<double>::infinity();
  auto ir = channel::build_impulse_response(layout, kFs);
  channel::NoiseSpec noise;
  noise.laser_linewidth_hz = 0.0;
  noise.receiver_snr_db = 20.0;
  noise.rng_seed = 17;

  const double amp = 1e-2;
  const double sigma = amp * std::pow(10.0, -20.0 / 20.0);
  ArrayXcd peaks(300);
  for (long s = 0; s < peaks.size(); ++s) {
    auto shot = channel::simulate_shot(frame, ir, 0.0, noise, 0.0,
                                       static_cast<uint64_t>(s));
    auto refl = correlator::correlate_shot(shot.rx_x, ref_of(frame), kStep);
    peaks[s] = refl.bins[195];
  }
  const cplx mean = peaks.mean();
  const double var_out = (peaks - mean).abs2().mean();
  const double gain_db = 10.0 * std::log10(sigma * sigma / var_out);
  CHECK(gain_db == doctest::Approx(10.0 * std::log10(2560.0)).epsilon(1.0 / 34.0));
}

TEST_CASE("event detection on the default layout finds both connectors") {
  waveform::ProbeFrame frame = default_frame();
  FiberLayout layout = FiberLayout::default_layout();
  auto ir = channel::build_impulse_response(layout, kFs);
  auto shot = channel::simulate_shot(frame, ir, 0.0, quiet_noise(), 0.0, 0);
  auto refl = correlator::correlate_shot(shot.rx_x, ref_of(frame), kStep);
  ArrayXd trace = correlator::return_loss_trace(refl);
  auto events = correlator::detect_events(trace, refl, 15.0, 3);

  REQUIRE(events.size() >= 2);
  // Ascending by distance, each distance on the bin grid.
  for (std::size_t i = 1; i < events.size(); ++i)
    CHECK(events[i].distance_m > events[i - 1].distance_m);
  for (const auto& e : events)
    CHECK(e.distance_m == e.index * kStep);

  auto near = [&](double d) {
    for (const auto& e : events)
      if (std::abs(e.distance_m - d) <= 0.2) return true;
    return false;
  };
  CHECK(near(39.0));
  CHECK(near(234.0));
  CHECK(near(250.0));  // open end
}

TEST_CASE("speckle alone never clears a 30 dB prominence bar") {
  waveform::ProbeFrame frame = default_frame();
  FiberLayout layout;
  layout.events.clear();
  layout.fiber_length_m = 250.0;
  auto ir = channel::build_impulse_response(layout, kFs);
  auto shot = channel::simulate_shot(frame, ir, 0.0, quiet_noise(), 0.0, 0);
  auto refl = correlator::correlate_shot(shot.rx_x, ref_of(frame), kStep);
  ArrayXd trace = correlator::return_loss_trace(refl);
  auto events = correlator::detect_events(trace, refl, 30.0, 3);
  CHECK(events.empty());
}

TEST_CASE("synthetic spikes, guards, and peak phase") {
  correlator::Reflectogram refl;
  refl.distance_step_m = kStep;
  refl.bins = ArrayXcd::Constant(500, cplx(1e-6, 0.0));
  refl.bins[100] = std::polar(1e-2, 0.7);
  ArrayXd trace = correlator::return_loss_trace(refl);
  auto events = correlator::detect_events(trace, refl, 20.0, 3);
  REQUIRE(events.size() == 1);
  CHECK(events[0].index == 100);
  CHECK(events[0].phase_rad == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(events[0].peak_magnitude_db == doctest::Approx(-40.0).epsilon(1e-9));

  // Two strong bins inside one guard interval: the stronger one wins.
  refl.bins[103] = std::polar(5e-3, 0.1);
  trace = correlator::return_loss_trace(refl);
  events = correlator::detect_events(trace, refl, 20.0, 5);
  REQUIRE(events.size() == 1);
  CHECK(events[0].index == 100);

  // With a smaller guard both survive.
  events = correlator::detect_events(trace, refl, 20.0, 2);
  CHECK(events.size() == 2);

  CHECK_THROWS_AS(correlator::detect_events(trace, refl, 0.0, 3),
                  InvalidArgument);
  CHECK_THROWS_AS(correlator::detect_events(trace, refl, 10.0, -1),
                  InvalidArgument);
}

TEST_CASE("averaged Rayleigh region shows coherent-fading contrast") {
  waveform::ProbeFrame frame = default_frame();
  FiberLayout layout = FiberLayout::default_layout();
  auto ir = channel::build_impulse_response(layout, kFs);
  channel::NoiseSpec noise;  // defaults: 100 Hz linewidth, 30 dB SNR
  noise.rng_seed = 23;

  const int n_shots = 120;
  ArrayXd acc = ArrayXd::Zero(1251);
  for (int s = 0; s < n_shots; ++s) {
    auto shot = channel::simulate_shot(frame, ir, 0.0, noise, 0.0,
                                       static_cast<uint64_t>(s));
    auto refl = correlator::correlate_shot(shot.rx_x, ref_of(frame), kStep);
    acc += refl.bins.abs();
  }
  acc /= n_shots;

  // Between the connectors, away from the peaks: pure backscatter.
  std::vector<double> db;
  for (long k = 300; k <= 1100; ++k) db.push_back(20.0 * std::log10(acc[k]));
  ArrayXd d = Eigen::Map<ArrayXd>(db.data(), static_cast<long>(db.size()));
  const double sd = std::sqrt((d - d.mean()).square().mean());
  CHECK(sd > 3.0);
}
