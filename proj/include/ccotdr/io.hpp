#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccotdr/channel.hpp"
#include "ccotdr/common.hpp"

namespace ccotdr::io {

// Columns are written with %.12g so round-trips preserve doubles to ~1 ulp
// while keeping files diffable.
void write_csv(const std::string& path, const std::string& header,
               const std::vector<const ArrayXd*>& columns);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<ArrayXd> columns;

  // Index of a named column, or -1.
  int find(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

std::string sha256_hex(const void* data, size_t len);
std::string sha256_file(const std::string& path);

struct ManifestEntry {
  std::string name;
  std::string sha256;
  uint64_t bytes = 0;
};

// run_manifest.json: tool id, seed, config digest, and a digest per output
// file.  Deliberately carries no timestamp so reruns are byte-identical.
void write_manifest(const std::string& dir, const std::string& config_json,
                    uint64_t seed, const std::vector<std::string>& files);

struct ShotArchive {
  channel::SimMode mode = channel::SimMode::Fast;
  int channels = 1;  // polarization channels
  int n_events = 2;  // phasors per channel in fast mode, 0 in full mode
  double shot_rate_hz = 0.0;
  double sample_rate_hz = 0.0;
  double distance_step_m = 0.0;
  std::vector<channel::ShotRecord> shots;
};

void write_shot_archive(const std::string& path, const ShotArchive& archive);
ShotArchive read_shot_archive(const std::string& path);

// Interleaved re,im float32, little-endian; loads directly into numpy via
// np.fromfile(path, dtype=np.float32).reshape(-1, 2).
void write_frame_f32(const std::string& path, const ArrayXcd& samples);

void write_phasor_csv(const std::string& path,
                      const std::vector<channel::ShotRecord>& shots, int channels);

}  // namespace ccotdr::io
