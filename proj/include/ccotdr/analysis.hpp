#pragma once

#include <utility>
#include <vector>

#include "ccotdr/channel.hpp"
#include "ccotdr/common.hpp"
#include "ccotdr/waveform.hpp"

namespace ccotdr::analysis {

enum class WindowKind { Hann, Rect };

struct PhaseSeries {
  ArrayXd t_s;
  ArrayXd wrapped_rad;    // in (-pi, pi]
  ArrayXd unwrapped_rad;  // differs from wrapped by 2*pi integers per sample
  int event_a = 0;
  int event_b = 0;
};

struct WindowReport {
  double window_start_s = 0.0;
  double window_len_s = 0.0;
  double slope_rad_per_s = 0.0;
  double slope_stderr = 0.0;
  ArrayXd freq_hz;        // filled when spectra are requested
  ArrayXd magnitude_rad;  // single-sided, coherent-gain corrected
};

struct TemperatureEstimate {
  ArrayXd t_s;
  ArrayXd temp_c;
  double coeff_used = 0.0;
  double offset_c = 0.0;
};

struct TimeConstantFit {
  double tau_s = 0.0;
  double sse = 0.0;
  bool multimodal = false;  // coarse scan saw more than one local minimum
};

struct CalibrationResult {
  double coeff_rad_per_k = 0.0;
  double tau_s = 0.0;  // lag used for the reference correction
  double segment_start_s = 0.0;
  double segment_end_s = 0.0;
};

struct ToneFit {
  double amplitude_rad = 0.0;
  double peak_peak_rad = 0.0;
  double phase_rad = 0.0;
};

// Classic nearest-multiple-of-2*pi unwrapping; first sample preserved.
// Valid while the per-sample true phase change stays below pi.
ArrayXd unwrap_time(const ArrayXd& wrapped);

// Per-event complex bins for every shot.  Fast shots carry them directly;
// full shots are correlated against the probe reference.  In dual-
// polarization runs the stronger channel is chosen per event.
std::pair<ArrayXcd, ArrayXcd> event_bins(const std::vector<channel::ShotRecord>& shots,
                                         const waveform::ProbeFrame& frame,
                                         int index_a, int index_b, int threads = 1);

// wrapped[k] = arg(bins_b[k] * conj(bins_a[k])); the common laser phase
// cancels in the product.
PhaseSeries extract_phase_series(const ArrayXd& t_s, const ArrayXcd& bins_a,
                                 const ArrayXcd& bins_b, int event_a = 0,
                                 int event_b = 1);

// Non-overlapping windows, ordinary least-squares line per window.  A final
// partial window at least half the nominal length is kept (shorter ones are
// dropped; the count of dropped samples is reported via dropped_samples).
std::vector<WindowReport> window_slopes(const PhaseSeries& series, double window_len_s,
                                        bool with_spectra = false,
                                        WindowKind kind = WindowKind::Hann,
                                        long* dropped_samples = nullptr);

// Subtract the fitted line, apply the window, return the single-sided
// magnitude spectrum corrected for the window's coherent gain (an integer-bin
// tone of amplitude A reads A).
void detrended_spectrum(const ArrayXd& samples, double dt_s, WindowKind kind,
                        ArrayXd* freq_hz, ArrayXd* magnitude);

// Mean magnitude across all reports that carry a full-length spectrum.
ArrayXd average_spectrum(const std::vector<WindowReport>& reports, ArrayXd* freq_hz);

// temp(t) = t0 + (unwrapped(t) - unwrapped(0))/coeff, optionally block-mean
// decimated to report_rate_hz (pass 0 to keep the full rate).
TemperatureEstimate phase_to_temperature(const PhaseSeries& series, double coeff_rad_per_k,
                                         double t0_temp_c, double report_rate_hz = 1.0);

// Minimize sum((lag(reference, tau) - measured)^2) over tau: coarse grid
// (step <= 1 s) then golden-section refinement.  The lag is the fibermodel
// first-order update, so the effective lower bound is 10*dt.
TimeConstantFit fit_time_constant(const ArrayXd& t_s, const ArrayXd& reference_c,
                                  const ArrayXd& measured_c, double tau_min_s,
                                  double tau_max_s);

// Through-origin least-squares ratio of phase change to lag-corrected
// reference temperature change over the longest sustained heating segment
// (reference slope > 0.01 K/s for >= 10 s).  The lag is scanned jointly so no
// prior time constant is needed.
CalibrationResult calibrate_coefficient(const ArrayXd& t_s, const ArrayXd& phase_rad,
                                        const ArrayXd& reference_c,
                                        double tau_min_s = 5.0, double tau_max_s = 300.0);

// Least-squares fit of a*sin + b*cos + c at a known frequency.
ToneFit fit_tone(const ArrayXd& t_s, const ArrayXd& samples, double freq_hz);

}  // namespace ccotdr::analysis
