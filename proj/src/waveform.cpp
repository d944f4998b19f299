#include "ccotdr/waveform.hpp"

#include <bit>
#include <map>

namespace ccotdr::waveform {

const std::vector<uint32_t>& primitive_polynomials(int order) {
  static const std::map<int, std::vector<uint32_t>> table = {
      {3, {0xB, 0xD}},
      {5, {0x25, 0x29}},
      {7, {0x83, 0x89, 0x91, 0xC1}},
      {9, {0x211, 0x221}},
      {11, {0x805, 0xA01}},
  };
  auto it = table.find(order);
  if (it == table.end())
    throw InvalidArgument("prbs.order: unsupported order " + std::to_string(order));
  return it->second;
}

bool is_supported_order(int order) {
  return order == 3 || order == 5 || order == 7 || order == 9 || order == 11;
}

std::vector<uint8_t> gen_prbs(const PrbsSpec& spec) {
  const auto& polys = primitive_polynomials(spec.order);
  bool known = false;
  for (uint32_t p : polys) known |= (p == spec.polynomial);
  if (!known)
    throw InvalidArgument("prbs.polynomial: not a listed primitive polynomial for order " +
                          std::to_string(spec.order));

  const uint32_t mask = (1u << spec.order) - 1u;
  if ((spec.seed & mask) == 0)
    throw InvalidArgument("prbs.seed: register state must be nonzero");

  uint32_t state = spec.seed & mask;
  const uint32_t taps = spec.polynomial & mask;  // x^order term acts via the shift
  const size_t period = (size_t(1) << spec.order) - 1;

  std::vector<uint8_t> bits(period);
  for (size_t i = 0; i < period; ++i) {
    bits[i] = static_cast<uint8_t>(state & 1u);
    uint32_t fb = static_cast<uint32_t>(std::popcount(state & taps) & 1);
    state = (state >> 1) | (fb << (spec.order - 1));
  }
  return bits;
}

ProbeFrame build_probe_frame(const ProbeSpec& spec) {
  if (spec.symbol_rate_hz <= 0 || spec.sample_rate_hz <= 0)
    throw InvalidArgument("probe: rates must be positive");
  double ratio = spec.sample_rate_hz / spec.symbol_rate_hz;
  int sps = static_cast<int>(ratio + 0.5);
  if (std::abs(ratio - sps) > 1e-9 || sps < 1)
    throw InvalidArgument("probe.sample_rate_hz: must be an integer multiple of symbol_rate_hz");
  if (spec.zero_pad_samples < 0)
    throw InvalidArgument("probe.zero_pad_samples: must be non-negative");

  auto bits = gen_prbs(spec.prbs);
  const int n_sym = static_cast<int>(bits.size()) + 1;

  ProbeFrame frame;
  frame.spec = spec;
  frame.samples_per_symbol = sps;
  frame.symbols.resize(n_sym);
  for (size_t i = 0; i < bits.size(); ++i)
    frame.symbols[static_cast<int>(i)] = bits[i] ? -1.0 : 1.0;
  frame.symbols[n_sym - 1] = -1.0;

  frame.signal_samples = n_sym * sps;
  frame.samples = ArrayXcd::Zero(frame.signal_samples + spec.zero_pad_samples);
  for (int i = 0; i < n_sym; ++i)
    for (int k = 0; k < sps; ++k)
      frame.samples[i * sps + k] = cplx(frame.symbols[i], 0.0);
  return frame;
}

ArrayXi autocorrelate(const ArrayXd& symbols) {
  const int n = static_cast<int>(symbols.size());
  if (n == 0) throw InvalidArgument("autocorrelate: empty sequence");
  ArrayXi out = ArrayXi::Zero(2 * n - 1);
  for (int lag = -(n - 1); lag <= n - 1; ++lag) {
    int lo = std::max(0, -lag);
    int hi = std::min(n, n - lag);
    double acc = 0.0;
    for (int i = lo; i < hi; ++i) acc += symbols[i] * symbols[i + lag];
    out[lag + n - 1] = static_cast<int>(std::lround(acc));
  }
  return out;
}

}  // namespace ccotdr::waveform
