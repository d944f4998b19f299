#pragma once

#include <cstdint>
#include <vector>

#include "ccotdr/common.hpp"

namespace ccotdr::waveform {

// Maximal-length LFSR polynomials, bitmask form including the x^order and
// x^0 terms (e.g. order 9, 0x221 = x^9 + x^5 + 1).
const std::vector<uint32_t>& primitive_polynomials(int order);
bool is_supported_order(int order);

struct PrbsSpec {
  int order = 9;
  uint32_t polynomial = 0x221;
  uint32_t seed = 0x1FF;
};

// One bit per chip over a full period (2^order - 1 bits).
std::vector<uint8_t> gen_prbs(const PrbsSpec& spec);

struct ProbeSpec {
  PrbsSpec prbs;
  double symbol_rate_hz = 100e6;
  double sample_rate_hz = 500e6;
  int zero_pad_samples = 1250;
};

struct ProbeFrame {
  ProbeSpec spec;
  ArrayXd symbols;        // +/-1 per symbol, PRBS period plus one appended -1
  ArrayXcd samples;       // NRZ-held complex baseband, zero tail appended
  int samples_per_symbol = 0;
  int signal_samples = 0;  // samples before the zero tail

  double frame_period_s() const {
    return static_cast<double>(samples.size()) / spec.sample_rate_hz;
  }
  // Sum |s|^2 over the signal portion; correlation normalizer.
  double signal_energy() const { return static_cast<double>(signal_samples); }
};

// Builds the phase-coded probe: PRBS mapped 0 -> +1 / 1 -> -1, one extra -1
// symbol appended to even the frame out, NRZ-held at the sample rate, then
// zero-padded to cover the listening window.
ProbeFrame build_probe_frame(const ProbeSpec& spec);

// Aperiodic autocorrelation of a +/-1 symbol sequence.  Output has
// 2N-1 entries for lags -(N-1)..N-1; entry N-1 is the zero-lag peak.
ArrayXi autocorrelate(const ArrayXd& symbols);

}  // namespace ccotdr::waveform
