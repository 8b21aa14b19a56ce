// Copyright 2026 The tmenhance Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Parallel-corpus ingestion: 16-bit PCM WAV files, phone label files,
// manifests with a deterministic train/test split, frame alignment of
// simultaneously recorded TM/AM features, and a TM channel simulator.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "tmenhance/error.hpp"
#include "tmenhance/features.hpp"
#include "tmenhance/phones.hpp"
#include "tmenhance/signal_core.hpp"

namespace tmenhance {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// WAV

struct WavInfo {
  int rate_hz = 0;
  int channels = 0;
  int bits_per_sample = 0;
  int format = 0;
  std::size_t frames = 0;
  std::streamoff data_offset = 0;
};

namespace detail {

inline std::uint32_t ReadLe32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t ReadLe16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void PutLe32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void PutLe16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

// Writes through a temporary sibling and renames, so readers never observe a
// partial file.
inline void WriteFileAtomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIoError, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::kIoError, "cannot rename onto " + path.string());
  }
}

}  // namespace detail

inline WavInfo ReadWavInfo(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  unsigned char hdr[12];
  if (!in.read(reinterpret_cast<char*>(hdr), 12) ||
      std::memcmp(hdr, "RIFF", 4) != 0 || std::memcmp(hdr + 8, "WAVE", 4) != 0) {
    throw Error(ErrorKind::kUnsupportedFormat,
                path.string() + " is not a RIFF/WAVE file");
  }
  WavInfo info;
  bool have_fmt = false;
  unsigned char chunk[8];
  while (in.read(reinterpret_cast<char*>(chunk), 8)) {
    const std::uint32_t size = detail::ReadLe32(chunk + 4);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      std::vector<unsigned char> fmt(size);
      if (size < 16 || !in.read(reinterpret_cast<char*>(fmt.data()), size)) {
        throw Error(ErrorKind::kUnsupportedFormat,
                    path.string() + ": truncated fmt chunk");
      }
      info.format = detail::ReadLe16(fmt.data());
      info.channels = detail::ReadLe16(fmt.data() + 2);
      info.rate_hz = static_cast<int>(detail::ReadLe32(fmt.data() + 4));
      info.bits_per_sample = detail::ReadLe16(fmt.data() + 14);
      // WAVE_FORMAT_EXTENSIBLE carries the real format in its sub-GUID.
      if (info.format == 0xFFFE && size >= 26) {
        info.format = detail::ReadLe16(fmt.data() + 24);
      }
      have_fmt = true;
      if (size % 2) in.ignore(1);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) {
        throw Error(ErrorKind::kUnsupportedFormat,
                    path.string() + ": data chunk before fmt chunk");
      }
      info.data_offset = in.tellg();
      const int block = std::max(1, info.channels * info.bits_per_sample / 8);
      info.frames = size / block;
      return info;
    } else {
      in.ignore(size + (size % 2));
    }
  }
  throw Error(ErrorKind::kUnsupportedFormat, path.string() + ": no data chunk");
}

// Reads 16-bit PCM mono, scaling by 1/32768. When `expected_rate` is set,
// any other sample rate is rejected.
inline SampleBuffer read_wav(const fs::path& path,
                             std::optional<int> expected_rate = kCorpusRateHz) {
  const WavInfo info = ReadWavInfo(path);
  if (info.format != 1 || info.channels != 1 || info.bits_per_sample != 16) {
    throw Error(ErrorKind::kUnsupportedFormat,
                path.string() + ": need PCM 16-bit mono (format " +
                    std::to_string(info.format) + ", " +
                    std::to_string(info.channels) + " channels, " +
                    std::to_string(info.bits_per_sample) + " bits)");
  }
  if (expected_rate && info.rate_hz != *expected_rate) {
    throw Error(ErrorKind::kUnsupportedFormat,
                path.string() + ": sample rate " + std::to_string(info.rate_hz) +
                    " Hz, expected " + std::to_string(*expected_rate) + " Hz");
  }
  std::ifstream in(path, std::ios::binary);
  in.seekg(info.data_offset);
  std::vector<unsigned char> raw(info.frames * 2);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  const std::size_t got = static_cast<std::size_t>(in.gcount()) / 2;
  SampleBuffer out{std::vector<double>(got), info.rate_hz};
  for (std::size_t i = 0; i < got; ++i) {
    const auto v = static_cast<std::int16_t>(detail::ReadLe16(raw.data() + 2 * i));
    out.samples[i] = v / 32768.0;
  }
  return out;
}

inline std::int16_t QuantizeSample(double x) {
  if (!std::isfinite(x)) return 0;
  const double scaled = std::round(x * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

inline std::string EncodeWav(const SampleBuffer& buf) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(buf.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::PutLe32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::PutLe32(out, 16);
  detail::PutLe16(out, 1);
  detail::PutLe16(out, 1);
  detail::PutLe32(out, static_cast<std::uint32_t>(buf.rate_hz));
  detail::PutLe32(out, static_cast<std::uint32_t>(buf.rate_hz * 2));
  detail::PutLe16(out, 2);
  detail::PutLe16(out, 16);
  out += "data";
  detail::PutLe32(out, data_bytes);
  for (double x : buf.samples) {
    detail::PutLe16(out, static_cast<std::uint16_t>(QuantizeSample(x)));
  }
  return out;
}

inline void write_wav(const fs::path& path, const SampleBuffer& buf) {
  detail::WriteFileAtomic(path, EncodeWav(buf));
}

// ---------------------------------------------------------------------------
// Labels

struct PhoneSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string phone;

  friend bool operator==(const PhoneSegment&, const PhoneSegment&) = default;
};

inline constexpr double kTimeEpsilon = 1e-9;

// Parses "<start_s> <end_s> <PHONE>" lines and fills gaps (including the
// span up to `duration_s`) with SIL.
inline std::vector<PhoneSegment> load_labels(const fs::path& path,
                                             double duration_s) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  std::vector<PhoneSegment> parsed;
  std::string line;
  int line_no = 0;
  auto where = [&] { return path.string() + ":" + std::to_string(line_no) + ": "; };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ss(line);
    PhoneSegment seg;
    std::string extra;
    if (!(ss >> seg.start_s >> seg.end_s >> seg.phone) || (ss >> extra)) {
      throw Error(ErrorKind::kParseError,
                  where() + "expected '<start_s> <end_s> <PHONE>'");
    }
    if (!IsKnownPhone(seg.phone)) {
      throw Error(ErrorKind::kUnknownPhone,
                  where() + "unknown phone '" + seg.phone + "'");
    }
    if (!(seg.start_s >= 0.0) || !(seg.start_s < seg.end_s)) {
      throw Error(ErrorKind::kParseError, where() + "need 0 <= start < end");
    }
    if (!parsed.empty() && seg.start_s < parsed.back().end_s - kTimeEpsilon) {
      throw Error(ErrorKind::kParseError,
                  where() + "segment overlaps or precedes the previous one");
    }
    parsed.push_back(std::move(seg));
  }
  std::vector<PhoneSegment> out;
  double cursor = 0.0;
  for (auto& seg : parsed) {
    if (seg.start_s > cursor + kTimeEpsilon) {
      out.push_back({cursor, seg.start_s, std::string(kSilence)});
    }
    cursor = seg.end_s;
    out.push_back(std::move(seg));
  }
  if (duration_s > cursor + kTimeEpsilon) {
    out.push_back({cursor, duration_s, std::string(kSilence)});
  }
  return out;
}

inline std::string PhoneAt(const std::vector<PhoneSegment>& segments,
                           double time_s) {
  for (const auto& s : segments) {
    if (s.start_s <= time_s && time_s < s.end_s) return s.phone;
  }
  return std::string(kSilence);
}

inline double FrameCenterSeconds(std::size_t frame, const AnalysisConfig& cfg,
                                 int rate_hz = kCorpusRateHz) {
  const double center = static_cast<double>(frame) * cfg.hop_length(rate_hz) +
                        cfg.window_length(rate_hz) / 2.0;
  return center / rate_hz;
}

// ---------------------------------------------------------------------------
// Manifest

enum class Split { kTrain, kTest };

struct Utterance {
  std::string id;
  fs::path am_path;
  fs::path tm_path;
  std::optional<fs::path> label_path;
};

struct Manifest {
  std::vector<Utterance> entries;
  std::vector<Split> split;

  std::vector<std::size_t> Indices(Split which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (split[i] == which) out.push_back(i);
    }
    return out;
  }
};

inline constexpr double kTrainFraction = 0.9;

// First ceil(0.9 n) utterances by sorted id train; the rest test.
inline std::vector<Split> DefaultSplit(const std::vector<Utterance>& entries) {
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return entries[a].id < entries[b].id;
  });
  const auto n_train = static_cast<std::size_t>(
      std::ceil(kTrainFraction * static_cast<double>(entries.size()) - 1e-9));
  std::vector<Split> split(entries.size(), Split::kTest);
  for (std::size_t r = 0; r < n_train && r < order.size(); ++r) {
    split[order[r]] = Split::kTrain;
  }
  return split;
}

struct ManifestOptions {
  // When false, the TM column may be "-" (clean-audio manifests).
  bool require_tm = true;
  bool check_audio = true;
  AnalysisConfig analysis{};
};

inline Manifest load_manifest(const fs::path& path,
                              const ManifestOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open manifest " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  Manifest m;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      const auto tab = line.find('\t', pos);
      fields.push_back(line.substr(pos, tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (fields.size() != 4) {
      throw Error(ErrorKind::kParseError,
                  where + "expected 4 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    Utterance u;
    u.id = fields[0];
    if (u.id.empty()) throw Error(ErrorKind::kParseError, where + "empty id");
    if (!ids.insert(u.id).second) {
      throw Error(ErrorKind::kParseError, where + "duplicate id '" + u.id + "'");
    }
    u.am_path = resolve(fields[1]);
    if (fields[2] != "-") {
      u.tm_path = resolve(fields[2]);
    } else if (options.require_tm) {
      throw Error(ErrorKind::kParseError, where + "missing TM path");
    }
    if (fields[3] != "-") u.label_path = resolve(fields[3]);

    if (options.check_audio) {
      auto check_exists = [&](const fs::path& p) {
        if (!fs::exists(p)) {
          throw Error(ErrorKind::kParseError,
                      where + "file not found: " + p.string());
        }
      };
      check_exists(u.am_path);
      if (!u.tm_path.empty()) check_exists(u.tm_path);
      if (u.label_path) check_exists(*u.label_path);
      const WavInfo am = ReadWavInfo(u.am_path);
      if (am.rate_hz != kCorpusRateHz) {
        throw Error(ErrorKind::kUnsupportedFormat,
                    where + u.am_path.string() + " is " +
                        std::to_string(am.rate_hz) + " Hz, expected " +
                        std::to_string(kCorpusRateHz) + " Hz");
      }
      if (!u.tm_path.empty()) {
        const WavInfo tm = ReadWavInfo(u.tm_path);
        if (tm.rate_hz != am.rate_hz) {
          throw Error(ErrorKind::kParseError,
                      where + "AM and TM sample rates differ");
        }
        const auto hop = static_cast<std::size_t>(
            options.analysis.hop_length(am.rate_hz));
        const std::size_t diff =
            am.frames > tm.frames ? am.frames - tm.frames : tm.frames - am.frames;
        if (diff > hop) {
          throw Error(ErrorKind::kParseError,
                      where + "AM/TM lengths differ by " + std::to_string(diff) +
                          " samples (more than one hop)");
        }
      }
    }
    m.entries.push_back(std::move(u));
  }
  m.split = DefaultSplit(m.entries);
  return m;
}

inline std::string FormatManifest(const Manifest& m) {
  std::string out = "# id\tam_path\ttm_path\tlabel_path\n";
  for (const auto& u : m.entries) {
    out += u.id + "\t" + u.am_path.string() + "\t" +
           (u.tm_path.empty() ? std::string("-") : u.tm_path.string()) + "\t" +
           (u.label_path ? u.label_path->string() : std::string("-")) + "\n";
  }
  return out;
}

inline void write_manifest(const fs::path& path, const Manifest& m) {
  detail::WriteFileAtomic(path, FormatManifest(m));
}

// ---------------------------------------------------------------------------
// Frame alignment

struct FeatureRow {
  std::vector<double> tm_lsf;       // x^s
  std::vector<double> am_lsf;       // y^s
  std::vector<double> observable;   // x^e = [x^s; c_T]
  std::vector<double> tilt;         // y^e = D
  std::string phone;                // empty when the utterance is unlabelled
  bool degenerate = false;          // either side is a silent frame
};

struct FeatureTable {
  std::vector<FeatureRow> rows;

  std::size_t size() const { return rows.size(); }
};

inline constexpr std::size_t kMaxFrameMismatch = 10;

// Index-aligns simultaneously recorded TM/AM features (truncating to the
// shorter track) and attaches the phone at each frame center.
inline FeatureTable align_features(const UtteranceFeatures& tm,
                                   const UtteranceFeatures& am,
                                   const std::vector<PhoneSegment>* labels,
                                   const AnalysisConfig& cfg,
                                   int rate_hz = kCorpusRateHz) {
  const std::size_t nt = tm.frames();
  const std::size_t na = am.frames();
  const std::size_t diff = nt > na ? nt - na : na - nt;
  if (diff > kMaxFrameMismatch) {
    throw Error(ErrorKind::kAlignmentError,
                "TM has " + std::to_string(nt) + " frames, AM has " +
                    std::to_string(na));
  }
  const std::size_t n = std::min(nt, na);
  FeatureTable table;
  table.rows.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    FeatureRow row;
    row.tm_lsf = tm.lsf[k].values;
    row.am_lsf = am.lsf[k].values;
    const auto cep = excitation_cepstrum(tm.band_energies[k]);
    const VectorXd obs = ExcitationObservable(tm.lsf[k], cep);
    row.observable.assign(obs.data(), obs.data() + obs.size());
    row.tilt = spectral_tilt(am.band_energies[k], tm.band_energies[k]).values;
    if (labels) row.phone = PhoneAt(*labels, FrameCenterSeconds(k, cfg, rate_hz));
    row.degenerate = tm.lpc.degenerate[k] || am.lpc.degenerate[k];
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// TM channel simulator

struct TmProfile {
  double cutoff_hz = 3000.0;
  double transition_hz = 400.0;
  double knee_hz = 1000.0;
  double slope_db_per_octave = -6.0;
  double noise_floor_db = -50.0;
  std::uint64_t seed = 1;
};

namespace detail {

// Box-Muller over mt19937_64 so the noise is identical across standard
// library implementations.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    } while (u1 <= 0.0);
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline double TmChannelGain(double hz, const TmProfile& p) {
  double g = 1.0;
  if (hz > p.knee_hz) {
    g *= std::pow(10.0, p.slope_db_per_octave * std::log2(hz / p.knee_hz) / 20.0);
  }
  if (hz >= p.cutoff_hz + p.transition_hz) return 0.0;
  if (hz > p.cutoff_hz) {
    g *= 0.5 * (1.0 + std::cos(std::numbers::pi * (hz - p.cutoff_hz) /
                               p.transition_hz));
  }
  return g;
}

}  // namespace detail

// Zero-phase band limiting and tilt applied in the frequency domain, plus
// seeded white noise at the profile's floor (dB re full scale RMS).
inline SampleBuffer simulate_tm(const SampleBuffer& am, const TmProfile& profile) {
  const std::size_t n = am.size();
  SampleBuffer out{std::vector<double>(n, 0.0), am.rate_hz};
  if (n > 0) {
    std::size_t m = 1;
    while (m < 2 * n) m <<= 1;
    std::vector<double> padded(m, 0.0);
    std::copy(am.samples.begin(), am.samples.end(), padded.begin());
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, padded);
    for (std::size_t k = 0; k < spec.size(); ++k) {
      const double hz = static_cast<double>(k) * am.rate_hz / static_cast<double>(m);
      spec[k] *= detail::TmChannelGain(hz, profile);
    }
    std::vector<double> filtered;
    fft.inv(filtered, spec, static_cast<long>(m));
    std::copy(filtered.begin(), filtered.begin() + static_cast<long>(n),
              out.samples.begin());
  }
  detail::GaussianSource noise(profile.seed);
  const double sigma = std::pow(10.0, profile.noise_floor_db / 20.0);
  for (double& x : out.samples) x += sigma * noise();
  return out;
}

}  // namespace tmenhance
