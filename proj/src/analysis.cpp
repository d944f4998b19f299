#include "ccotdr/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/FFT>

#include "ccotdr/correlator.hpp"
#include "ccotdr/fibermodel.hpp"
#include "ccotdr/parallel.hpp"

namespace ccotdr::analysis {

namespace {

double uniform_dt(const ArrayXd& t) {
  if (t.size() < 2) throw InvalidArgument("time grid: need at least 2 samples");
  double dt = t[1] - t[0];
  if (dt <= 0) throw InvalidArgument("time grid: must be strictly increasing");
  for (long i = 2; i < t.size(); ++i)
    if (std::abs(t[i] - t[i - 1] - dt) > 1e-9 * std::max(1.0, dt))
      throw InvalidArgument("time grid: must be uniform");
  return dt;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
};

// OLS on x_i = i*dt.
LineFit fit_line(const double* y, long m, double dt) {
  LineFit fit;
  if (m < 2) {
    fit.intercept = m == 1 ? y[0] : 0.0;
    return fit;
  }
  double sx = 0, sxx = 0, sy = 0, sxy = 0;
  for (long i = 0; i < m; ++i) {
    double x = i * dt;
    sx += x;
    sxx += x * x;
    sy += y[i];
    sxy += x * y[i];
  }
  double denom = m * sxx - sx * sx;
  fit.slope = (m * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / m;
  if (m > 2) {
    double sse = 0;
    for (long i = 0; i < m; ++i) {
      double r = y[i] - fit.intercept - fit.slope * i * dt;
      sse += r * r;
    }
    fit.stderr_slope = std::sqrt(sse / (m - 2) / (sxx - sx * sx / m));
  }
  return fit;
}

double golden_section(double lo, double hi, double tol,
                      const std::function<double(double)>& f) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

ArrayXd unwrap_time(const ArrayXd& wrapped) {
  ArrayXd out(wrapped.size());
  if (wrapped.size() == 0) return out;
  out[0] = wrapped[0];
  for (long k = 1; k < wrapped.size(); ++k) {
    double d = wrapped[k] - wrapped[k - 1];
    d -= kTwoPi * std::round(d / kTwoPi);
    out[k] = out[k - 1] + d;
  }
  return out;
}

std::pair<ArrayXcd, ArrayXcd> event_bins(const std::vector<channel::ShotRecord>& shots,
                                         const waveform::ProbeFrame& frame,
                                         int index_a, int index_b, int threads) {
  const long n = static_cast<long>(shots.size());
  ArrayXcd ax(n), bx(n), ay(n), by(n);
  if (n == 0) return {ax, bx};

  const bool fast = shots.front().mode == channel::SimMode::Fast;
  bool any_dual = false;

  if (fast) {
    for (long k = 0; k < n; ++k) {
      const auto& sh = shots[k];
      if (sh.mode != channel::SimMode::Fast)
        throw InvalidArgument("event_bins: mixed shot modes");
      if (sh.phasors.size() != 2 && sh.phasors.size() != 4)
        throw DataGapError("monitored event missing from shot record", k);
      ax[k] = sh.phasors[0];
      bx[k] = sh.phasors[1];
      if (sh.phasors.size() == 4) {
        any_dual = true;
        ay[k] = sh.phasors[2];
        by[k] = sh.phasors[3];
      } else {
        ay[k] = by[k] = cplx(0, 0);
      }
    }
  } else {
    const ArrayXcd ref = frame.samples.head(frame.signal_samples);
    any_dual = shots.front().rx_y.size() != 0;
    parallel_for(n, threads, [&](long k) {
      const auto& sh = shots[k];
      auto take = [&](const ArrayXcd& rx, cplx* a, cplx* b) {
        if (rx.size() < ref.size() || index_b >= rx.size() - ref.size() + 1)
          throw DataGapError("monitored event outside the received window", k);
        auto refl = correlator::correlate_shot(rx, ref, 1.0, sh.t_s);
        *a = refl.bins[index_a];
        *b = refl.bins[index_b];
      };
      if (sh.mode != channel::SimMode::Full)
        throw InvalidArgument("event_bins: mixed shot modes");
      cplx a, b;
      take(sh.rx_x, &a, &b);
      ax[k] = a;
      bx[k] = b;
      if (any_dual) {
        take(sh.rx_y, &a, &b);
        ay[k] = a;
        by[k] = b;
      } else {
        ay[k] = by[k] = cplx(0, 0);
      }
    });
  }

  if (!any_dual) return {ax, bx};
  // Static polarization split: pick the stronger channel per event.
  double pa_x = ax.abs2().sum(), pa_y = ay.abs2().sum();
  double pb_x = bx.abs2().sum(), pb_y = by.abs2().sum();
  return {pa_x >= pa_y ? ax : ay, pb_x >= pb_y ? bx : by};
}

PhaseSeries extract_phase_series(const ArrayXd& t_s, const ArrayXcd& bins_a,
                                 const ArrayXcd& bins_b, int event_a, int event_b) {
  if (bins_a.size() != t_s.size() || bins_b.size() != t_s.size())
    throw InvalidArgument("extract_phase_series: array size mismatch");
  PhaseSeries out;
  out.t_s = t_s;
  out.event_a = event_a;
  out.event_b = event_b;
  out.wrapped_rad.resize(t_s.size());
  for (long k = 0; k < t_s.size(); ++k)
    out.wrapped_rad[k] = std::arg(bins_b[k] * std::conj(bins_a[k]));
  out.unwrapped_rad = unwrap_time(out.wrapped_rad);
  return out;
}

std::vector<WindowReport> window_slopes(const PhaseSeries& series, double window_len_s,
                                        bool with_spectra, WindowKind kind,
                                        long* dropped_samples) {
  const double dt = uniform_dt(series.t_s);
  const long n = series.t_s.size();
  const long w = std::lround(window_len_s / dt);
  if (w < 16) throw InvalidArgument("window_len_s: window must contain at least 16 samples");
  if (dropped_samples) *dropped_samples = 0;

  std::vector<WindowReport> reports;
  long start = 0;
  while (start < n) {
    long m = std::min(w, n - start);
    if (m < w) {
      if (2 * m < w) {  // short final window dropped
        if (dropped_samples) *dropped_samples = m;
        break;
      }
    }
    WindowReport rep;
    rep.window_start_s = series.t_s[start];
    rep.window_len_s = m * dt;
    LineFit fit = fit_line(series.unwrapped_rad.data() + start, m, dt);
    rep.slope_rad_per_s = fit.slope;
    rep.slope_stderr = fit.stderr_slope;
    if (with_spectra && m >= 4) {
      ArrayXd chunk = series.unwrapped_rad.segment(start, m);
      detrended_spectrum(chunk, dt, kind, &rep.freq_hz, &rep.magnitude_rad);
    }
    reports.push_back(std::move(rep));
    start += m;
  }
  return reports;
}

void detrended_spectrum(const ArrayXd& samples, double dt_s, WindowKind kind,
                        ArrayXd* freq_hz, ArrayXd* magnitude) {
  const long n = samples.size();
  if (n < 4) throw InvalidArgument("detrended_spectrum: need at least 4 samples");
  if (dt_s <= 0) throw InvalidArgument("detrended_spectrum: dt must be positive");

  LineFit fit = fit_line(samples.data(), n, dt_s);
  Eigen::VectorXcd x(n);
  double cg = 0.0;
  for (long i = 0; i < n; ++i) {
    double detr = samples[i] - fit.intercept - fit.slope * i * dt_s;
    double win = 1.0;
    if (kind == WindowKind::Hann) win = 0.5 - 0.5 * std::cos(kTwoPi * i / n);
    cg += win;
    x[i] = cplx(detr * win, 0.0);
  }
  cg /= n;

  Eigen::FFT<double> fft;
  Eigen::VectorXcd spec(n);
  fft.fwd(spec, x);

  const long half = n / 2;
  freq_hz->resize(half + 1);
  magnitude->resize(half + 1);
  for (long k = 0; k <= half; ++k) {
    (*freq_hz)[k] = k / (n * dt_s);
    double scale = (k == 0 || (n % 2 == 0 && k == half)) ? 1.0 : 2.0;
    (*magnitude)[k] = scale * std::abs(spec[k]) / (n * cg);
  }
}

ArrayXd average_spectrum(const std::vector<WindowReport>& reports, ArrayXd* freq_hz) {
  for (const auto& rep : reports) {
    if (rep.magnitude_rad.size() == 0) continue;
    long len = rep.magnitude_rad.size();
    ArrayXd acc = ArrayXd::Zero(len);
    long count = 0;
    for (const auto& r : reports) {
      if (r.magnitude_rad.size() != len) continue;
      acc += r.magnitude_rad;
      ++count;
    }
    if (freq_hz) *freq_hz = rep.freq_hz;
    return acc / count;
  }
  if (freq_hz) freq_hz->resize(0);
  return ArrayXd();
}

TemperatureEstimate phase_to_temperature(const PhaseSeries& series, double coeff_rad_per_k,
                                         double t0_temp_c, double report_rate_hz) {
  if (coeff_rad_per_k <= 0)
    throw InvalidArgument("coeff_rad_per_k: must be positive");
  TemperatureEstimate est;
  est.coeff_used = coeff_rad_per_k;
  est.offset_c = t0_temp_c;
  const long n = series.t_s.size();
  if (n == 0) return est;

  ArrayXd temp_full =
      t0_temp_c + (series.unwrapped_rad - series.unwrapped_rad[0]) / coeff_rad_per_k;

  long block = 1;
  if (report_rate_hz > 0 && n >= 2) {
    double dt = uniform_dt(series.t_s);
    block = std::lround(1.0 / (report_rate_hz * dt));
  }
  if (block < 2 || n / block == 0) {
    est.t_s = series.t_s;
    est.temp_c = temp_full;
    return est;
  }
  const long n_blocks = n / block;
  est.t_s.resize(n_blocks);
  est.temp_c.resize(n_blocks);
  for (long b = 0; b < n_blocks; ++b) {
    est.t_s[b] = series.t_s.segment(b * block, block).mean();
    est.temp_c[b] = temp_full.segment(b * block, block).mean();
  }
  return est;
}

TimeConstantFit fit_time_constant(const ArrayXd& t_s, const ArrayXd& reference_c,
                                  const ArrayXd& measured_c, double tau_min_s,
                                  double tau_max_s) {
  if (reference_c.size() != t_s.size() || measured_c.size() != t_s.size())
    throw InvalidArgument("fit_time_constant: array size mismatch");
  if (t_s.size() < 3) throw InvalidArgument("fit_time_constant: need at least 3 samples");
  if (tau_min_s <= 0 || tau_max_s <= tau_min_s)
    throw InvalidArgument("tau search range: need 0 < tau_min < tau_max");
  const double dt = uniform_dt(t_s);
  const double lo = std::max(tau_min_s, 10.0 * dt);
  if (lo >= tau_max_s)
    throw InvalidArgument("tau search range: below the 10*dt lag resolution");

  const double y0 = measured_c[0];
  auto sse_of = [&](double tau) {
    ArrayXd lag = fibermodel::core_temperature(reference_c, tau, dt, y0);
    return (lag - measured_c).square().sum();
  };

  double step = std::min(1.0, (tau_max_s - lo) / 20.0);
  std::vector<double> taus, sses;
  for (double tau = lo; tau < tau_max_s + 0.5 * step; tau += step)
    taus.push_back(std::min(tau, tau_max_s));
  for (double tau : taus) sses.push_back(sse_of(tau));

  int minima = 0;
  size_t best = 0;
  for (size_t i = 0; i < sses.size(); ++i) {
    if (sses[i] < sses[best]) best = i;
    if (i > 0 && i + 1 < sses.size() && sses[i] < sses[i - 1] && sses[i] < sses[i + 1])
      ++minima;
  }

  TimeConstantFit fit;
  if (minima > 1) {
    fit.multimodal = true;
    fit.tau_s = taus[best];
    fit.sse = sses[best];
    return fit;
  }
  double a = best > 0 ? taus[best - 1] : taus[best];
  double b = best + 1 < taus.size() ? taus[best + 1] : taus[best];
  fit.tau_s = a < b ? golden_section(a, b, 1e-3, sse_of) : taus[best];
  fit.sse = sse_of(fit.tau_s);
  return fit;
}

CalibrationResult calibrate_coefficient(const ArrayXd& t_s, const ArrayXd& phase_rad,
                                        const ArrayXd& reference_c, double tau_min_s,
                                        double tau_max_s) {
  if (phase_rad.size() != t_s.size() || reference_c.size() != t_s.size())
    throw InvalidArgument("calibrate_coefficient: array size mismatch");
  const double dt = uniform_dt(t_s);
  const long n = t_s.size();

  // Sustained heating segment on the reference: slope > 0.01 K/s for >= 10 s.
  const long w = std::max<long>(1, std::lround(5.0 / dt));
  long best_start = -1, best_len = 0, run_start = -1;
  for (long i = 0; i <= n; ++i) {
    bool hot = false;
    if (i < n) {
      long a = std::max<long>(0, i - w);
      long b = std::min(n - 1, i + w);
      hot = (reference_c[b] - reference_c[a]) / ((b - a) * dt) > 0.01;
    }
    if (hot && run_start < 0) run_start = i;
    if (!hot && run_start >= 0) {
      if (i - run_start > best_len) {
        best_len = i - run_start;
        best_start = run_start;
      }
      run_start = -1;
    }
  }
  if (best_start < 0 || (best_len - 1) * dt < 10.0)
    throw CalibrationUnavailable(
        "no sustained heating segment (need reference slope > 0.01 K/s for >= 10 s)");
  const long s = best_start;
  const long e = best_start + best_len - 1;

  const double lo = std::max(tau_min_s, 10.0 * dt);
  if (tau_min_s <= 0 || tau_max_s <= lo)
    throw InvalidArgument("tau search range: need 0 < tau_min < tau_max above 10*dt");

  auto ratio_and_sse = [&](double tau, double* ratio) {
    ArrayXd lag = fibermodel::core_temperature(reference_c, tau, dt, reference_c[0]);
    double sxy = 0, sxx = 0;
    for (long i = s; i <= e; ++i) {
      double x = lag[i] - lag[s];
      double y = phase_rad[i] - phase_rad[s];
      sxy += x * y;
      sxx += x * x;
    }
    if (sxx <= 0) throw CalibrationUnavailable("reference temperature does not move");
    double k = sxy / sxx;
    if (ratio) *ratio = k;
    double sse = 0;
    for (long i = s; i <= e; ++i) {
      double r = (phase_rad[i] - phase_rad[s]) - k * (lag[i] - lag[s]);
      sse += r * r;
    }
    return sse;
  };
  auto sse_of = [&](double tau) { return ratio_and_sse(tau, nullptr); };

  double step = std::min(1.0, (tau_max_s - lo) / 20.0);
  double best_tau = lo, best_sse = sse_of(lo);
  std::vector<double> taus;
  for (double tau = lo; tau < tau_max_s + 0.5 * step; tau += step)
    taus.push_back(std::min(tau, tau_max_s));
  size_t best_i = 0;
  for (size_t i = 1; i < taus.size(); ++i) {
    double v = sse_of(taus[i]);
    if (v < best_sse) {
      best_sse = v;
      best_i = i;
    }
  }
  best_tau = taus[best_i];
  double a = best_i > 0 ? taus[best_i - 1] : best_tau;
  double b = best_i + 1 < taus.size() ? taus[best_i + 1] : best_tau;
  if (a < b) best_tau = golden_section(a, b, 1e-3, sse_of);

  CalibrationResult result;
  result.tau_s = best_tau;
  ratio_and_sse(best_tau, &result.coeff_rad_per_k);
  result.segment_start_s = t_s[s];
  result.segment_end_s = t_s[e];
  if (result.coeff_rad_per_k <= 0)
    throw CalibrationUnavailable("phase does not increase with reference temperature");
  return result;
}

ToneFit fit_tone(const ArrayXd& t_s, const ArrayXd& samples, double freq_hz) {
  if (samples.size() != t_s.size())
    throw InvalidArgument("fit_tone: array size mismatch");
  if (t_s.size() < 8) throw InvalidArgument("fit_tone: need at least 8 samples");
  if (freq_hz <= 0) throw InvalidArgument("fit_tone: frequency must be positive");

  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (long i = 0; i < t_s.size(); ++i) {
    double si = std::sin(kTwoPi * freq_hz * t_s[i]);
    double ci = std::cos(kTwoPi * freq_hz * t_s[i]);
    Eigen::Vector3d row(si, ci, 1.0);
    m += row * row.transpose();
    rhs += row * samples[i];
  }
  Eigen::Vector3d sol = m.ldlt().solve(rhs);
  ToneFit fit;
  fit.amplitude_rad = std::hypot(sol[0], sol[1]);
  fit.peak_peak_rad = 2.0 * fit.amplitude_rad;
  fit.phase_rad = std::atan2(sol[1], sol[0]);
  return fit;
}

}  // namespace ccotdr::analysis
