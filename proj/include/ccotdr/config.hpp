#pragma once

#include <string>
#include <vector>

#include "ccotdr/analysis.hpp"
#include "ccotdr/channel.hpp"
#include "ccotdr/common.hpp"
#include "ccotdr/fibermodel.hpp"
#include "ccotdr/waveform.hpp"

namespace ccotdr::config {

struct MonitorSpec {
  double position_a_m = 39.0;
  double position_b_m = 234.0;
};

// Single 10 s soak at 30 C, fan off; the smallest scenario that exercises
// the tone path.
fibermodel::ScenarioProfile default_scenario();

struct AnalysisSpec {
  double window_len_s = 0.1;
  double report_rate_hz = 1.0;
  std::string spectrum_window = "hann";  // hann | rect
  std::vector<double> spectrum_times_s;  // window starts whose spectra to export
  double tau_fit_min_s = 5.0;
  double tau_fit_max_s = 300.0;
};

struct RunConfig {
  uint64_t seed = 1;
  std::string mode = "fast";           // fast | full
  std::string polarization = "single";  // single | dual
  double shot_rate_hz = 4000.0;
  waveform::ProbeSpec probe;
  fibermodel::FiberLayout layout = fibermodel::FiberLayout::default_layout();
  fibermodel::ScenarioProfile scenario = default_scenario();
  channel::NoiseSpec noise;
  MonitorSpec monitor;
  AnalysisSpec analysis;
};

channel::SimMode parse_mode(const std::string& s);
channel::Polarization parse_polarization(const std::string& s);
analysis::WindowKind parse_window(const std::string& s);

RunConfig from_json_string(const std::string& text);
std::string to_json_string(const RunConfig& cfg);
RunConfig load(const std::string& path);
void save(const RunConfig& cfg, const std::string& path);

// Full cross-field validation; throws InvalidArgument naming the field.
void validate(const RunConfig& cfg);

}  // namespace ccotdr::config
