#include "ccotdr/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <unsupported/Eigen/FFT>

namespace ccotdr::correlator {

namespace {

void check_lengths(const ArrayXcd& rx, const ArrayXcd& reference) {
  if (reference.size() == 0) throw InvalidArgument("correlate: empty reference");
  if (rx.size() < reference.size())
    throw InvalidArgument("correlate: rx shorter than reference");
}

}  // namespace

Reflectogram correlate_shot(const ArrayXcd& rx, const ArrayXcd& reference,
                            double distance_step_m, double t_shot_s) {
  check_lengths(rx, reference);
  const long n_rx = rx.size();
  const long n_ref = reference.size();
  const long n_out = n_rx - n_ref + 1;

  long nfft = 1;
  while (nfft < n_rx) nfft <<= 1;

  Eigen::VectorXcd a = Eigen::VectorXcd::Zero(nfft);
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(nfft);
  a.head(n_rx) = rx.matrix();
  b.head(n_ref) = reference.matrix();

  Eigen::FFT<double> fft;
  Eigen::VectorXcd fa(nfft), fb(nfft), prod(nfft), corr(nfft);
  fft.fwd(fa, a);
  fft.fwd(fb, b);
  prod = fa.cwiseProduct(fb.conjugate());
  fft.inv(corr, prod);

  const double energy = reference.abs2().sum();
  Reflectogram out;
  out.t_shot_s = t_shot_s;
  out.distance_step_m = distance_step_m;
  out.bins = corr.head(n_out).array() / energy;
  return out;
}

Reflectogram correlate_shot_direct(const ArrayXcd& rx, const ArrayXcd& reference,
                                   double distance_step_m, double t_shot_s) {
  check_lengths(rx, reference);
  const long n_rx = rx.size();
  const long n_ref = reference.size();
  const long n_out = n_rx - n_ref + 1;
  const double energy = reference.abs2().sum();

  Reflectogram out;
  out.t_shot_s = t_shot_s;
  out.distance_step_m = distance_step_m;
  out.bins.resize(n_out);
  for (long k = 0; k < n_out; ++k) {
    cplx acc(0.0, 0.0);
    for (long m = 0; m < n_ref; ++m) acc += rx[k + m] * std::conj(reference[m]);
    out.bins[k] = acc / energy;
  }
  return out;
}

ArrayXd return_loss_trace(const Reflectogram& refl, double reference_level) {
  if (reference_level <= 0) throw InvalidArgument("reference_level: must be positive");
  ArrayXd trace(refl.bins.size());
  for (long i = 0; i < refl.bins.size(); ++i) {
    double mag = std::abs(refl.bins[i]);
    trace[i] = mag > 0.0 ? 20.0 * std::log10(mag / reference_level)
                         : -std::numeric_limits<double>::infinity();
  }
  return trace;
}

EventList detect_events(const ArrayXd& trace_db, const Reflectogram& refl,
                        double min_prominence_db, int guard_bins) {
  if (min_prominence_db <= 0) throw InvalidArgument("min_prominence_db: must be positive");
  if (guard_bins < 0) throw InvalidArgument("guard_bins: must be non-negative");
  if (trace_db.size() != refl.bins.size())
    throw InvalidArgument("detect_events: trace/reflectogram size mismatch");

  std::vector<double> finite;
  finite.reserve(trace_db.size());
  for (long i = 0; i < trace_db.size(); ++i)
    if (std::isfinite(trace_db[i])) finite.push_back(trace_db[i]);
  if (finite.empty()) return {};
  size_t mid = finite.size() / 2;
  std::nth_element(finite.begin(), finite.begin() + mid, finite.end());
  const double floor_db = finite[mid];
  const double threshold = floor_db + min_prominence_db;

  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<int> candidates;
  for (long i = 0; i < trace_db.size(); ++i) {
    if (trace_db[i] < threshold) continue;
    double left = i > 0 ? trace_db[i - 1] : ninf;
    double right = i + 1 < trace_db.size() ? trace_db[i + 1] : ninf;
    if (trace_db[i] > left && trace_db[i] >= right)
      candidates.push_back(static_cast<int>(i));
  }
  std::sort(candidates.begin(), candidates.end(),
            [&](int l, int r) { return trace_db[l] > trace_db[r]; });

  std::vector<int> accepted;
  for (int c : candidates) {
    bool clear = true;
    for (int a : accepted)
      if (std::abs(a - c) < guard_bins) clear = false;
    if (clear) accepted.push_back(c);
  }
  std::sort(accepted.begin(), accepted.end());

  EventList events;
  for (int idx : accepted) {
    Event ev;
    ev.index = idx;
    ev.distance_m = idx * refl.distance_step_m;
    ev.peak_magnitude_db = trace_db[idx];
    ev.phase_rad = std::arg(refl.bins[idx]);
    events.push_back(ev);
  }
  return events;
}

}  // namespace ccotdr::correlator
