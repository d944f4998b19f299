#pragma once

#include <vector>

#include "ccotdr/common.hpp"

namespace ccotdr::correlator {

struct Reflectogram {
  double t_shot_s = 0.0;
  ArrayXcd bins;  // complex, indexed by distance sample
  double distance_step_m = 0.0;
};

struct Event {
  int index = 0;
  double distance_m = 0.0;
  double peak_magnitude_db = 0.0;
  double phase_rad = 0.0;
};
using EventList = std::vector<Event>;

// bins[k] = sum_m rx[k+m] * conj(ref[m]) / sum|ref|^2 for k = 0..len(rx)-len(ref).
// FFT implementation; correlate_shot_direct is the time-domain reference.
Reflectogram correlate_shot(const ArrayXcd& rx, const ArrayXcd& reference,
                            double distance_step_m, double t_shot_s = 0.0);
Reflectogram correlate_shot_direct(const ArrayXcd& rx, const ArrayXcd& reference,
                                   double distance_step_m, double t_shot_s = 0.0);

// 20*log10(|bins|/reference_level); zero bins map to -inf.
ArrayXd return_loss_trace(const Reflectogram& refl, double reference_level = 1.0);

// Local maxima exceeding the trace median by min_prominence_db, separated by
// at least guard_bins; strongest peak wins inside a guard interval.
EventList detect_events(const ArrayXd& trace_db, const Reflectogram& refl,
                        double min_prominence_db, int guard_bins);

}  // namespace ccotdr::correlator
