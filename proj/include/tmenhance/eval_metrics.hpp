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

// Objective measures: log-spectral distortion between all-pole envelopes,
// grouped by articulation attribute, and a band-energy distortion between
// excitation signals.

#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tmenhance/error.hpp"
#include "tmenhance/excitation_mapper.hpp"
#include "tmenhance/phones.hpp"
#include "tmenhance/signal_core.hpp"

namespace tmenhance {

inline constexpr int kLsdGrid = 512;

// |A(e^{jw})|^2 for A(z) = 1 - sum a_k z^-k.
inline double InversePowerResponse(std::span<const double> a, double w) {
  const std::complex<double> z = std::polar(1.0, -w);
  std::complex<double> acc = 0.0;
  for (std::size_t k = a.size(); k-- > 0;) acc = (acc - a[k]) * z;
  return std::norm(1.0 + acc);
}

// RMS of 10 log10(p_a / p_b) over paired power samples.
inline double lsd_from_power(std::span<const double> power_a,
                             std::span<const double> power_b) {
  if (power_a.size() != power_b.size()) {
    throw Error(ErrorKind::kLengthMismatch, "power grids differ in length");
  }
  if (power_a.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < power_a.size(); ++i) {
    const double d = 10.0 * (std::log10(power_a[i]) - std::log10(power_b[i]));
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(power_a.size()));
}

// Envelope LSD on a midpoint grid over [0, pi). The integrand is even and
// 2pi-periodic, so this is the midpoint rule over the full circle.
inline double lsd_frame(const LpcModel& a, const LpcModel& b,
                        int grid_size = kLsdGrid) {
  if (!IsStable(a) || !IsStable(b)) {
    throw Error(ErrorKind::kUnstableFilter, "LSD needs stable envelopes");
  }
  if (grid_size < 1) throw Error(ErrorKind::kBadGeometry, "empty LSD grid");
  double acc = 0.0;
  for (int i = 0; i < grid_size; ++i) {
    const double w = (i + 0.5) * std::numbers::pi / grid_size;
    // |W|^2 = 1/|A|^2, so the log ratio swaps the operands.
    const double d = 10.0 * (std::log10(InversePowerResponse(b.coeffs, w)) -
                             std::log10(InversePowerResponse(a.coeffs, w)));
    acc += d * d;
  }
  return std::sqrt(acc / grid_size);
}

struct FrameEnvelopes {
  LpcModel reference;
  LpcModel estimate;
  std::string phone;  // empty when unknown
};

struct AttributeScore {
  double mean_db = 0.0;
  std::size_t frames = 0;
};

struct LsdReport {
  std::vector<double> per_frame;
  double mean_db = 0.0;
  std::map<Attribute, AttributeScore> per_attribute;
  AttributeScore silence;
};

inline LsdReport lsd_corpus(std::span<const FrameEnvelopes> frames,
                            int grid_size = kLsdGrid) {
  LsdReport report;
  for (Attribute a : kAllAttributes) report.per_attribute[a] = {};
  report.per_frame.reserve(frames.size());
  double total = 0.0;
  for (const auto& f : frames) {
    const double d = lsd_frame(f.reference, f.estimate, grid_size);
    report.per_frame.push_back(d);
    total += d;
    if (f.phone == kSilence) {
      report.silence.mean_db += d;
      ++report.silence.frames;
    } else if (const auto attr = AttributeOf(f.phone)) {
      auto& s = report.per_attribute[*attr];
      s.mean_db += d;
      ++s.frames;
    }
  }
  if (!frames.empty()) report.mean_db = total / static_cast<double>(frames.size());
  for (auto& [attr, s] : report.per_attribute) {
    if (s.frames) s.mean_db /= static_cast<double>(s.frames);
  }
  if (report.silence.frames) {
    report.silence.mean_db /= static_cast<double>(report.silence.frames);
  }
  return report;
}

// Sum over frames of the mean absolute band-energy difference, with the
// frame count, so utterances can be pooled.
struct BandDistortion {
  double sum = 0.0;
  std::size_t frames = 0;

  double mean() const { return frames ? sum / static_cast<double>(frames) : 0.0; }
  void Merge(const BandDistortion& o) {
    sum += o.sum;
    frames += o.frames;
  }
};

inline BandDistortion BandDistortionStats(const SampleBuffer& ref,
                                          const SampleBuffer& test,
                                          const AnalysisConfig& cfg,
                                          const FilterBank& bank) {
  if (ref.size() != test.size()) {
    throw Error(ErrorKind::kLengthMismatch,
                "reference has " + std::to_string(ref.size()) +
                    " samples, test has " + std::to_string(test.size()));
  }
  BandDistortion out;
  if (ref.empty()) return out;
  const auto fr = frame_signal(ref, cfg);
  const auto ft = frame_signal(test, cfg);
  for (std::size_t k = 0; k < fr.size(); ++k) {
    const auto er = band_energies(dft_spectrum(fr[k], cfg.dft_size), bank);
    const auto et = band_energies(dft_spectrum(ft[k], cfg.dft_size), bank);
    double acc = 0.0;
    for (std::size_t b = 0; b < er.values.size(); ++b) {
      acc += std::abs(er.values[b] - et.values[b]);
    }
    out.sum += acc / static_cast<double>(er.values.size());
    ++out.frames;
  }
  return out;
}

inline double band_energy_distortion(const SampleBuffer& ref,
                                     const SampleBuffer& test,
                                     const AnalysisConfig& cfg,
                                     const FilterBank& bank) {
  return BandDistortionStats(ref, test, cfg, bank).mean();
}

// ---------------------------------------------------------------------------
// Report writers

namespace detail {

inline std::string FormatNumber(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace detail

inline std::string FormatLsdTable(const LsdReport& report,
                                  const BandDistortion* band = nullptr) {
  std::string out;
  out += "attribute          frames   LSD (dB)\n";
  out += "-----------------  -------  --------\n";
  auto row = [&](std::string_view name, std::size_t frames, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-17.*s  %7zu  %8.3f\n",
                  static_cast<int>(name.size()), name.data(), frames, v);
    out += buf;
  };
  for (Attribute a : kAllAttributes) {
    const auto& s = report.per_attribute.at(a);
    row(AttributeName(a), s.frames, s.mean_db);
  }
  row("Silence", report.silence.frames, report.silence.mean_db);
  row("All frames", report.per_frame.size(), report.mean_db);
  if (band) {
    out += "\nband-energy distortion (log10): " +
           detail::FormatNumber(band->mean(), "%.4f") + " over " +
           std::to_string(band->frames) + " frames\n";
  }
  return out;
}

inline std::string FormatKeyValues(const LsdReport& report,
                                   const BandDistortion* band = nullptr) {
  std::string out;
  auto kv = [&](const std::string& key, double v) {
    out += key + " = " + detail::FormatNumber(v, "%.9g") + "\n";
  };
  kv("lsd.mean", report.mean_db);
  kv("lsd.frames", static_cast<double>(report.per_frame.size()));
  for (Attribute a : kAllAttributes) {
    const auto& s = report.per_attribute.at(a);
    kv("lsd." + std::string(AttributeKey(a)), s.mean_db);
    kv("frames." + std::string(AttributeKey(a)), static_cast<double>(s.frames));
  }
  kv("lsd.silence", report.silence.mean_db);
  kv("frames.silence", static_cast<double>(report.silence.frames));
  if (band) {
    kv("band_energy.mean", band->mean());
    kv("band_energy.frames", static_cast<double>(band->frames));
  }
  return out;
}

}  // namespace tmenhance
