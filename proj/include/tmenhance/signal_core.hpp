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

// Frame-based waveform analysis and synthesis: Hamming framing,
// autocorrelation LPC, inverse/synthesis filtering, DFT spectra and
// overlap-add.
//
// Every analysis in the project shares one geometry (20 ms Hamming window,
// 10 ms hop by default) so envelope frames and excitation frames line up
// one-to-one.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "tmenhance/error.hpp"

namespace tmenhance {

inline constexpr int kCorpusRateHz = 16000;

// Frames with r[0] below this are treated as silence.
inline constexpr double kEnergyFloor = 1e-10;

struct SampleBuffer {
  std::vector<double> samples;
  int rate_hz = kCorpusRateHz;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

struct AnalysisConfig {
  int lpc_order = 16;
  double frame_shift_ms = 10.0;
  double window_ms = 20.0;
  int dft_size = 2048;

  int window_length(int rate_hz) const {
    return static_cast<int>(std::lround(window_ms * rate_hz / 1000.0));
  }
  int hop_length(int rate_hz) const {
    return static_cast<int>(std::lround(frame_shift_ms * rate_hz / 1000.0));
  }
  int half_size() const { return dft_size / 2; }

  void validate(int rate_hz = kCorpusRateHz) const {
    const int win = window_length(rate_hz);
    const int hop = hop_length(rate_hz);
    if (lpc_order < 1 || hop < 1 || win < hop || lpc_order >= win) {
      throw Error(ErrorKind::kBadGeometry,
                  "analysis geometry requires 1 <= order < window and "
                  "window >= hop");
    }
    if (dft_size < win || (dft_size & (dft_size - 1)) != 0) {
      throw Error(ErrorKind::kBadGeometry,
                  "dft_size must be a power of two >= window length (" +
                      std::to_string(win) + ")");
    }
  }
};

// A(z) = 1 - sum_k coeffs[k-1] z^-k.
struct LpcModel {
  std::vector<double> coeffs;
  double residual_gain = 0.0;

  int order() const { return static_cast<int>(coeffs.size()); }

  static LpcModel Zero(int order, double gain = 0.0) {
    return LpcModel{std::vector<double>(order, 0.0), gain};
  }

  friend bool operator==(const LpcModel&, const LpcModel&) = default;
};

// Non-negative-frequency half of a dft_size-point DFT.
struct SpectrumFrame {
  std::vector<std::complex<double>> bins;
  int frame_index = 0;

  int half_size() const { return static_cast<int>(bins.size()) - 1; }
};

// Per-frame LPC track; degenerate (near-silent) frames carry the zero
// predictor and are flagged so later stages can pass them through.
struct LpcAnalysis {
  std::vector<LpcModel> models;
  std::vector<bool> degenerate;

  std::size_t size() const { return models.size(); }
};

using Frame = std::vector<double>;

inline std::vector<double> HammingWindow(int length) {
  std::vector<double> w(length, 1.0);
  if (length == 1) return w;
  for (int n = 0; n < length; ++n) {
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (length - 1));
  }
  return w;
}

inline std::size_t FrameCount(std::size_t num_samples, int hop) {
  return (num_samples + hop - 1) / hop;
}

inline std::vector<Frame> frame_signal(const SampleBuffer& buf,
                                       const AnalysisConfig& cfg) {
  if (buf.empty()) throw Error(ErrorKind::kEmptyInput, "empty sample buffer");
  const int win = cfg.window_length(buf.rate_hz);
  const int hop = cfg.hop_length(buf.rate_hz);
  const auto window = HammingWindow(win);
  const std::size_t count = FrameCount(buf.size(), hop);
  std::vector<Frame> frames(count, Frame(win, 0.0));
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * hop;
    const std::size_t avail = std::min<std::size_t>(win, buf.size() - start);
    for (std::size_t n = 0; n < avail; ++n) {
      frames[k][n] = buf.samples[start + n] * window[n];
    }
  }
  return frames;
}

inline std::vector<double> autocorrelate(std::span<const double> frame,
                                         int order) {
  if (order < 0 || static_cast<std::size_t>(order) >= frame.size()) {
    throw Error(ErrorKind::kOrderTooHigh,
                "order " + std::to_string(order) + " >= frame length " +
                    std::to_string(frame.size()));
  }
  std::vector<double> r(order + 1, 0.0);
  const std::size_t n = frame.size();
  for (int k = 0; k <= order; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) acc += frame[i] * frame[i + k];
    r[k] = acc;
  }
  return r;
}

struct LevinsonResult {
  LpcModel model;
  std::vector<double> reflection;
};

// Durbin recursion. The recursion stops early (keeping the lower-order
// predictor) if a reflection coefficient reaches the unit circle through
// round-off, so the returned predictor is always minimum phase.
inline LevinsonResult levinson_durbin_full(std::span<const double> r,
                                           int order) {
  if (r.empty() || !(r[0] > 0.0)) {
    throw Error(ErrorKind::kDegenerateFrame, "r[0] must be positive");
  }
  if (static_cast<int>(r.size()) < order + 1) {
    throw Error(ErrorKind::kOrderTooHigh, "autocorrelation too short");
  }
  LevinsonResult out{LpcModel::Zero(order, r[0]), {}};
  if (r[0] <= kEnergyFloor) return out;

  std::vector<double> a(order + 1, 0.0);  // predictor coefficients a[1..m]
  std::vector<double> prev(order + 1, 0.0);
  double err = r[0];
  for (int m = 1; m <= order; ++m) {
    double acc = r[m];
    for (int i = 1; i < m; ++i) acc -= a[i] * r[m - i];
    const double k = acc / err;
    if (!(std::abs(k) < 1.0 - 1e-12)) break;
    prev = a;
    a[m] = k;
    for (int i = 1; i < m; ++i) a[i] = prev[i] - k * prev[m - i];
    err *= (1.0 - k * k);
    out.reflection.push_back(k);
  }
  std::copy(a.begin() + 1, a.end(), out.model.coeffs.begin());
  out.model.residual_gain = err;
  return out;
}

inline LpcModel levinson_durbin(std::span<const double> r, int order) {
  return levinson_durbin_full(r, order).model;
}

// Step-down recursion; returns reflection coefficients of A(z). The model is
// stable iff every magnitude is < 1.
inline std::vector<double> ReflectionCoefficients(const LpcModel& model) {
  const int p = model.order();
  std::vector<double> a(model.coeffs.begin(), model.coeffs.end());
  std::vector<double> k(p, 0.0);
  for (int m = p; m >= 1; --m) {
    const double km = a[m - 1];
    k[m - 1] = km;
    if (std::abs(km) >= 1.0) return k;
    const double denom = 1.0 - km * km;
    std::vector<double> next(m - 1);
    for (int i = 1; i < m; ++i) {
      next[i - 1] = (a[i - 1] + km * a[m - i - 1]) / denom;
    }
    a = std::move(next);
  }
  return k;
}

inline bool IsStable(const LpcModel& model) {
  for (double v : model.coeffs) {
    if (!std::isfinite(v)) return false;
  }
  for (double k : ReflectionCoefficients(model)) {
    if (!(std::abs(k) < 1.0)) return false;
  }
  return true;
}

inline LpcAnalysis AnalyzeLpc(const SampleBuffer& buf,
                              const AnalysisConfig& cfg) {
  const auto frames = frame_signal(buf, cfg);
  LpcAnalysis out;
  out.models.reserve(frames.size());
  out.degenerate.reserve(frames.size());
  for (const auto& frame : frames) {
    const auto r = autocorrelate(frame, cfg.lpc_order);
    if (!(r[0] >= kEnergyFloor)) {
      out.models.push_back(LpcModel::Zero(cfg.lpc_order, std::max(r[0], 0.0)));
      out.degenerate.push_back(true);
    } else {
      out.models.push_back(levinson_durbin(r, cfg.lpc_order));
      out.degenerate.push_back(false);
    }
  }
  return out;
}

// Index of the frame whose window center is closest to sample n. Used by
// both filters so they switch coefficients at the same instants.
inline std::size_t OwningFrame(std::size_t n, int win, int hop,
                               std::size_t num_frames) {
  const double offset = (win - hop) / 2.0;
  const double pos = (static_cast<double>(n) - offset) / hop;
  if (pos <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(pos), num_frames - 1);
}

namespace detail {

inline void CheckModelCount(const SampleBuffer& buf,
                            std::span<const LpcModel> models,
                            const AnalysisConfig& cfg) {
  const std::size_t expected =
      FrameCount(buf.size(), cfg.hop_length(buf.rate_hz));
  if (models.size() != expected) {
    throw Error(ErrorKind::kLengthMismatch,
                "expected " + std::to_string(expected) + " models, got " +
                    std::to_string(models.size()));
  }
}

}  // namespace detail

// d[n] = s[n] - sum_k a_k s[n-k], coefficients switched at frame boundaries.
inline SampleBuffer inverse_filter(const SampleBuffer& buf,
                                   std::span<const LpcModel> models,
                                   const AnalysisConfig& cfg) {
  if (buf.empty()) return buf;
  detail::CheckModelCount(buf, models, cfg);
  const int win = cfg.window_length(buf.rate_hz);
  const int hop = cfg.hop_length(buf.rate_hz);
  const auto& s = buf.samples;
  SampleBuffer out{std::vector<double>(s.size(), 0.0), buf.rate_hz};
  for (std::size_t n = 0; n < s.size(); ++n) {
    const auto& a = models[OwningFrame(n, win, hop, models.size())].coeffs;
    double acc = s[n];
    const std::size_t taps = std::min<std::size_t>(a.size(), n);
    for (std::size_t k = 1; k <= taps; ++k) acc -= a[k - 1] * s[n - k];
    out.samples[n] = acc;
  }
  return out;
}

// s[n] = d[n] + sum_k a_k s[n-k] with persistent state across frames.
inline SampleBuffer synthesis_filter(const SampleBuffer& residual,
                                     std::span<const LpcModel> models,
                                     const AnalysisConfig& cfg) {
  if (residual.empty()) return residual;
  detail::CheckModelCount(residual, models, cfg);
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (!IsStable(models[i])) {
      throw Error(ErrorKind::kUnstableFilter,
                  "frame " + std::to_string(i) + " has an unstable model");
    }
  }
  const int win = cfg.window_length(residual.rate_hz);
  const int hop = cfg.hop_length(residual.rate_hz);
  const auto& d = residual.samples;
  SampleBuffer out{std::vector<double>(d.size(), 0.0), residual.rate_hz};
  auto& s = out.samples;
  for (std::size_t n = 0; n < d.size(); ++n) {
    const auto& a = models[OwningFrame(n, win, hop, models.size())].coeffs;
    double acc = d[n];
    const std::size_t taps = std::min<std::size_t>(a.size(), n);
    for (std::size_t k = 1; k <= taps; ++k) acc += a[k - 1] * s[n - k];
    s[n] = acc;
  }
  return out;
}

namespace detail {

inline Eigen::FFT<double>& HalfSpectrumFft() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return f;
  }();
  return fft;
}

}  // namespace detail

inline SpectrumFrame dft_spectrum(std::span<const double> frame, int dft_size,
                                  int frame_index = 0) {
  if (frame.size() > static_cast<std::size_t>(dft_size)) {
    throw Error(ErrorKind::kFrameTooLong,
                "frame of " + std::to_string(frame.size()) +
                    " samples exceeds dft size " + std::to_string(dft_size));
  }
  std::vector<double> padded(dft_size, 0.0);
  std::copy(frame.begin(), frame.end(), padded.begin());
  SpectrumFrame out;
  out.frame_index = frame_index;
  detail::HalfSpectrumFft().fwd(out.bins, padded);
  out.bins.resize(dft_size / 2 + 1);
  out.bins.front().imag(0.0);
  out.bins.back().imag(0.0);
  return out;
}

// Inverse of dft_spectrum; the negative-frequency half is implied by
// conjugate symmetry.
inline std::vector<double> inverse_dft(const SpectrumFrame& spec) {
  const int dft_size = 2 * spec.half_size();
  std::vector<std::complex<double>> bins = spec.bins;
  bins.front().imag(0.0);
  bins.back().imag(0.0);
  std::vector<double> out;
  detail::HalfSpectrumFft().inv(out, bins, dft_size);
  return out;
}

// output[n] = sum_k frame_k[n - k*hop] / sum_k w[n - k*hop]. Frames are
// expected to be analysis-windowed; longer frames are truncated to the
// window length.
inline SampleBuffer overlap_add(std::span<const Frame> frames,
                                const AnalysisConfig& cfg,
                                std::size_t output_length,
                                int rate_hz = kCorpusRateHz) {
  const int win = cfg.window_length(rate_hz);
  const int hop = cfg.hop_length(rate_hz);
  const auto window = HammingWindow(win);
  std::vector<double> acc(output_length, 0.0);
  std::vector<double> wsum(output_length, 0.0);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const std::size_t start = k * hop;
    const std::size_t len = std::min<std::size_t>(win, frames[k].size());
    for (std::size_t n = 0; n < static_cast<std::size_t>(win); ++n) {
      const std::size_t t = start + n;
      if (t >= output_length) break;
      if (n < len) acc[t] += frames[k][n];
      wsum[t] += window[n];
    }
  }
  SampleBuffer out{std::vector<double>(output_length, 0.0), rate_hz};
  for (std::size_t t = 0; t < output_length; ++t) {
    out.samples[t] = acc[t] / std::max(wsum[t], 1e-8);
  }
  return out;
}

inline double Rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / x.size());
}

inline double RmsDifference(std::span<const double> a, std::span<const double> b,
                            std::size_t begin = 0, std::size_t end = 0) {
  const std::size_t n = std::min(a.size(), b.size());
  if (end == 0 || end > n) end = n;
  if (begin >= end) return 0.0;
  double acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / (end - begin));
}

}  // namespace tmenhance
