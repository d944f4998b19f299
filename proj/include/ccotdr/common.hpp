#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ccotdr {

using ArrayXd = Eigen::ArrayXd;
using ArrayXcd = Eigen::ArrayXcd;
using ArrayXi = Eigen::ArrayXi;
using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Vacuum speed of light [m/s].
inline constexpr double kSpeedOfLight = 299792458.0;

// Precondition / configuration violation.  Maps to CLI exit code 1.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A monitored reflection is missing from a shot record.
struct DataGapError : std::runtime_error {
  DataGapError(const std::string& what, long shot_index)
      : std::runtime_error(what + " (shot " + std::to_string(shot_index) + ")"),
        shot(shot_index) {}
  long shot;
};

// No usable heating segment was found for coefficient calibration.
struct CalibrationUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Distance represented by one two-way delay sample.
inline double distance_step_m(double group_index, double sample_rate_hz) {
  return kSpeedOfLight / (2.0 * group_index * sample_rate_hz);
}

// Bin index of a reflection at z meters.  Truncation keeps a reflection
// sitting exactly on a bin edge in the bin whose delay it has fully covered.
inline int distance_to_index(double z_m, double group_index, double sample_rate_hz) {
  return static_cast<int>(z_m / distance_step_m(group_index, sample_rate_hz));
}

}  // namespace ccotdr
