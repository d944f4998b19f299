#pragma once

#include <string>

#include "ccotdr/config.hpp"

namespace ccotdr::pipeline {

channel::SimulationSetup make_setup(const config::RunConfig& cfg);

// Named baseline configurations for the reproduce paths:
//   paper_default - two-step oven cycle with fan, tone and airflow active
//   calibration   - long single heating step for coefficient extraction
//   tone_only     - constant temperature, acoustic tone alone
config::RunConfig preset_config(const std::string& name);

// simulate: run the scenario, archive shots, dump ground truth.
void cmd_simulate(const config::RunConfig& cfg, const std::string& outdir, int threads,
                  bool phasor_csv);

// fingerprint: static full-fidelity reflectogram averaged over shots, with
// event detection and a probe-frame dump.
void cmd_fingerprint(const config::RunConfig& cfg, const std::string& outdir,
                     int n_shots, double min_prominence_db, int guard_bins,
                     int threads);

// analyze: phase series, window slopes, spectra, temperature track from a
// shot archive.
void cmd_analyze(const config::RunConfig& cfg, const std::string& archive_path,
                 const std::string& outdir, int threads);

// calibrate: phase/temperature coefficient and lag from exported CSVs.
void cmd_calibrate(const std::string& phase_csv, const std::string& reference_csv,
                   const std::string& outdir, double tau_min_s, double tau_max_s);

// reproduce: run a preset end to end and check headline numbers against
// their expected ranges.  Returns true when every check passes.
bool cmd_reproduce(const std::string& preset, const std::string& outdir, int threads);

}  // namespace ccotdr::pipeline
