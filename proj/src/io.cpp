#include "ccotdr/io.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ccotdr/version.hpp"

namespace ccotdr::io {

namespace {

void ensure_parent(const std::string& path) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

struct Sha256 {
  uint32_t h[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                   0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  uint8_t block[64];
  size_t fill = 0;
  uint64_t total = 0;

  static uint32_t rotr(uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

  void compress(const uint8_t* p) {
    static constexpr uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
        0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
        0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
        0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
        0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
        0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
        0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
        0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
        0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
        0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
        0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
    uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = uint32_t(p[4 * i]) << 24 | uint32_t(p[4 * i + 1]) << 16 |
             uint32_t(p[4 * i + 2]) << 8 | uint32_t(p[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    uint32_t a = h[0], b = h[1], c = h[2], d = h[3];
    uint32_t e = h[4], f = h[5], g = h[6], hh = h[7];
    for (int i = 0; i < 64; ++i) {
      uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      uint32_t ch = (e & f) ^ (~e & g);
      uint32_t t1 = hh + s1 + ch + k[i] + w[i];
      uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      uint32_t mj = (a & b) ^ (a & c) ^ (b & c);
      uint32_t t2 = s0 + mj;
      hh = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d;
    h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
  }

  void update(const void* data, size_t len) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    total += len;
    while (len > 0) {
      size_t take = std::min(len, sizeof block - fill);
      std::memcpy(block + fill, p, take);
      fill += take; p += take; len -= take;
      if (fill == sizeof block) { compress(block); fill = 0; }
    }
  }

  std::string hex_digest() {
    uint64_t bits = total * 8;
    uint8_t pad = 0x80;
    update(&pad, 1);
    uint8_t zero = 0;
    while (fill != 56) update(&zero, 1);
    uint8_t lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = uint8_t(bits >> (56 - 8 * i));
    update(lenb, 8);
    char out[65];
    for (int i = 0; i < 8; ++i) std::snprintf(out + 8 * i, 9, "%08x", h[i]);
    return std::string(out, 64);
  }
};

void put_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  put_u64(os, u);
}

uint32_t get_u32(std::istream& is) {
  uint8_t b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::istream& is) {
  uint8_t b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  uint64_t u = get_u64(is);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

constexpr char kMagic[8] = {'C', 'C', 'O', 'T', 'D', 'R', 'S', 'A'};
constexpr uint32_t kArchiveVersion = 1;

}  // namespace

void write_csv(const std::string& path, const std::string& header,
               const std::vector<const ArrayXd*>& columns) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << header << '\n';
  if (columns.empty()) return;
  long n = columns[0]->size();
  for (const auto* c : columns)
    if (c->size() != n) throw InvalidArgument("csv columns must share a length");
  std::string line;
  for (long i = 0; i < n; ++i) {
    line.clear();
    for (size_t c = 0; c < columns.size(); ++c) {
      if (c) line += ',';
      line += fmt_g((*columns[c])(i));
    }
    line += '\n';
    out << line;
  }
}

int CsvTable::find(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) table.header.push_back(cell);
  std::vector<std::vector<double>> cols(table.header.size());
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ls(line);
    size_t c = 0;
    while (std::getline(ls, cell, ',')) {
      if (c >= cols.size())
        throw InvalidArgument(path + ": row " + std::to_string(row) +
                              " has too many columns");
      try {
        cols[c].push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InvalidArgument(path + ": row " + std::to_string(row) +
                              ": cannot parse \"" + cell + "\"");
      }
      ++c;
    }
    if (c != cols.size())
      throw InvalidArgument(path + ": row " + std::to_string(row) +
                            " has too few columns");
  }
  table.columns.reserve(cols.size());
  for (auto& c : cols)
    table.columns.push_back(Eigen::Map<ArrayXd>(c.data(), static_cast<long>(c.size())));
  return table;
}

std::string sha256_hex(const void* data, size_t len) {
  Sha256 s;
  s.update(data, len);
  return s.hex_digest();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  Sha256 s;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof buf);
    s.update(buf, static_cast<size_t>(in.gcount()));
  }
  return s.hex_digest();
}

void write_manifest(const std::string& dir, const std::string& config_json,
                    uint64_t seed, const std::vector<std::string>& files) {
  nlohmann::ordered_json j;
  j["tool"] = "ccotdr";
  j["version"] = kVersion;
  j["seed"] = seed;
  j["config_sha256"] = sha256_hex(config_json.data(), config_json.size());
  j["files"] = nlohmann::ordered_json::array();
  for (const auto& name : files) {
    auto full = std::filesystem::path(dir) / name;
    nlohmann::ordered_json e;
    e["name"] = name;
    e["sha256"] = sha256_file(full.string());
    e["bytes"] = static_cast<uint64_t>(std::filesystem::file_size(full));
    j["files"].push_back(e);
  }
  std::ofstream out(std::filesystem::path(dir) / "run_manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir);
  out << j.dump(2) << '\n';
}

void write_shot_archive(const std::string& path, const ShotArchive& archive) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kArchiveVersion);
  put_u32(out, archive.mode == channel::SimMode::Full ? 1u : 0u);
  put_u32(out, static_cast<uint32_t>(archive.channels));
  put_u32(out, static_cast<uint32_t>(archive.n_events));
  put_f64(out, archive.shot_rate_hz);
  put_f64(out, archive.sample_rate_hz);
  put_f64(out, archive.distance_step_m);
  put_u64(out, archive.shots.size());
  for (const auto& s : archive.shots) {
    put_f64(out, s.t_s);
    if (archive.mode == channel::SimMode::Fast) {
      long expect = static_cast<long>(archive.channels) * archive.n_events;
      if (s.phasors.size() != expect)
        throw std::runtime_error("shot archive: phasor count mismatch");
      for (long i = 0; i < s.phasors.size(); ++i) {
        put_f64(out, s.phasors(i).real());
        put_f64(out, s.phasors(i).imag());
      }
    } else {
      put_u64(out, static_cast<uint64_t>(s.rx_x.size()));
      const ArrayXcd* chans[2] = {&s.rx_x, &s.rx_y};
      for (int c = 0; c < archive.channels; ++c) {
        const ArrayXcd& rx = *chans[c];
        if (rx.size() != s.rx_x.size())
          throw std::runtime_error("shot archive: channel length mismatch");
        for (long i = 0; i < rx.size(); ++i) {
          put_f64(out, rx(i).real());
          put_f64(out, rx(i).imag());
        }
      }
    }
  }
}

ShotArchive read_shot_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error(path + ": not a shot archive");
  uint32_t version = get_u32(in);
  if (version != kArchiveVersion)
    throw std::runtime_error(path + ": unsupported archive version " +
                             std::to_string(version));
  ShotArchive a;
  a.mode = get_u32(in) == 1 ? channel::SimMode::Full : channel::SimMode::Fast;
  a.channels = static_cast<int>(get_u32(in));
  a.n_events = static_cast<int>(get_u32(in));
  a.shot_rate_hz = get_f64(in);
  a.sample_rate_hz = get_f64(in);
  a.distance_step_m = get_f64(in);
  uint64_t n_shots = get_u64(in);
  if (!in) throw std::runtime_error(path + ": truncated header");
  a.shots.resize(n_shots);
  for (uint64_t k = 0; k < n_shots; ++k) {
    channel::ShotRecord& s = a.shots[k];
    s.mode = a.mode;
    s.t_s = get_f64(in);
    if (a.mode == channel::SimMode::Fast) {
      long n = static_cast<long>(a.channels) * a.n_events;
      s.phasors.resize(n);
      for (long i = 0; i < n; ++i) {
        double re = get_f64(in), im = get_f64(in);
        s.phasors(i) = cplx(re, im);
      }
    } else {
      long n_rx = static_cast<long>(get_u64(in));
      ArrayXcd* chans[2] = {&s.rx_x, &s.rx_y};
      for (int c = 0; c < a.channels; ++c) {
        chans[c]->resize(n_rx);
        for (long i = 0; i < n_rx; ++i) {
          double re = get_f64(in), im = get_f64(in);
          (*chans[c])(i) = cplx(re, im);
        }
      }
    }
    if (!in) throw std::runtime_error(path + ": truncated at shot " + std::to_string(k));
  }
  return a;
}

void write_frame_f32(const std::string& path, const ArrayXcd& samples) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  static_assert(std::endian::native == std::endian::little,
                "frame dump assumes a little-endian host");
  std::vector<float> buf(2 * static_cast<size_t>(samples.size()));
  for (long i = 0; i < samples.size(); ++i) {
    buf[2 * i] = static_cast<float>(samples(i).real());
    buf[2 * i + 1] = static_cast<float>(samples(i).imag());
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void write_phasor_csv(const std::string& path,
                      const std::vector<channel::ShotRecord>& shots, int channels) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "t_s,re1,im1,re2,im2";
  if (channels == 2) out << ",re3,im3,re4,im4";
  out << '\n';
  long n_ph = 2L * channels;
  std::string line;
  for (const auto& s : shots) {
    if (s.phasors.size() != n_ph)
      throw InvalidArgument("phasor csv needs fast-mode shot records");
    line = fmt_g(s.t_s);
    for (long i = 0; i < n_ph; ++i) {
      line += ',';
      line += fmt_g(s.phasors(i).real());
      line += ',';
      line += fmt_g(s.phasors(i).imag());
    }
    line += '\n';
    out << line;
  }
}

}  // namespace ccotdr::io
