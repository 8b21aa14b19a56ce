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

// Excitation enhancement by spectral tilt.
//
// A triangular filter bank with centers f_0 = 0 < f_1 < ... < f_B <
// f_{B+1} = N summarizes each excitation spectrum as B log10 band energies.
// The tilt D(b) = E_target(b) - E_source(b) is the regression target; the
// observable is the TM LSF vector stacked with a DCT of the TM band
// energies. An estimated tilt is applied as a real per-bin gain
// interpolated between band centers by the same triangles, so the phase of
// the TM excitation is untouched.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "tmenhance/envelope_mapper.hpp"
#include "tmenhance/error.hpp"
#include "tmenhance/gmm.hpp"
#include "tmenhance/lsf_codec.hpp"
#include "tmenhance/signal_core.hpp"

namespace tmenhance {

enum class Spacing { kLinear, kMel };

// PowerConsistent applies gains so the realized band-power change equals the
// requested tilt; PaperLiteral applies 10^D to the amplitude spectrum.
enum class TiltMode { kPowerConsistent, kPaperLiteral };

inline constexpr double kBandPowerFloor = 1e-12;

struct BandEnergies {
  std::vector<double> values;
};

struct TiltVector {
  std::vector<double> values;
};

struct CepstralVector {
  std::vector<double> values;
};

struct FilterBank {
  int bands = 0;
  int half_size = 0;
  Spacing spacing = Spacing::kLinear;
  std::vector<int> centers;  // f_0 .. f_{B+1}
  // (B + 2) x (N + 1): row b is w_b(n), including the boundary half
  // triangles b = 0 and b = B + 1.
  Eigen::MatrixXd weights;

  double weight(int b, int n) const { return weights(b, n); }
};

inline double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

inline FilterBank build_filterbank(int bands, int half_size, Spacing spacing,
                                   int rate_hz = kCorpusRateHz) {
  if (bands < 1 || half_size <= bands + 1) {
    throw Error(ErrorKind::kBadGeometry,
                "need B >= 1 and N > B + 1 (B=" + std::to_string(bands) +
                    ", N=" + std::to_string(half_size) + ")");
  }
  FilterBank bank;
  bank.bands = bands;
  bank.half_size = half_size;
  bank.spacing = spacing;
  bank.centers.resize(bands + 2);
  const double mel_top = HzToMel(rate_hz / 2.0);
  for (int b = 0; b <= bands + 1; ++b) {
    double pos = static_cast<double>(b) * half_size / (bands + 1);
    if (spacing == Spacing::kMel) {
      const double hz = MelToHz(b * mel_top / (bands + 1));
      pos = hz * 2.0 * half_size / rate_hz;
    }
    bank.centers[b] = static_cast<int>(std::lround(pos));
  }
  bank.centers.front() = 0;
  bank.centers.back() = half_size;
  for (int b = 1; b <= bands + 1; ++b) {
    if (bank.centers[b] <= bank.centers[b - 1]) {
      throw Error(ErrorKind::kBadGeometry,
                  "band centers collide; use fewer bands or a larger DFT");
    }
  }
  const auto& f = bank.centers;
  bank.weights = Eigen::MatrixXd::Zero(bands + 2, half_size + 1);
  for (int b = 0; b <= bands + 1; ++b) {
    for (int n = 0; n <= half_size; ++n) {
      double w = 0.0;
      if (b == 0 && n == 0) {
        w = 1.0;
      } else if (b > 0 && n >= f[b - 1] && n <= f[b]) {
        w = static_cast<double>(n - f[b - 1]) / (f[b] - f[b - 1]);
      } else if (b <= bands && n > f[b] && n <= f[b + 1]) {
        w = static_cast<double>(f[b + 1] - n) / (f[b + 1] - f[b]);
      }
      bank.weights(b, n) = w;
    }
  }
  return bank;
}

namespace detail {

inline void CheckGeometry(const SpectrumFrame& spec, const FilterBank& bank) {
  if (spec.half_size() != bank.half_size) {
    throw Error(ErrorKind::kDimMismatch,
                "spectrum has N=" + std::to_string(spec.half_size()) +
                    ", filter bank expects N=" +
                    std::to_string(bank.half_size));
  }
}

inline Eigen::VectorXd PowerSpectrum(const SpectrumFrame& spec) {
  Eigen::VectorXd p(spec.bins.size());
  for (std::size_t n = 0; n < spec.bins.size(); ++n) p[n] = std::norm(spec.bins[n]);
  return p;
}

// Band powers sum_{n=1}^{N-1} w_b(n) P(n) for b = 1..B.
inline Eigen::VectorXd BandPowers(const Eigen::VectorXd& power,
                                  const FilterBank& bank) {
  const int N = bank.half_size;
  return bank.weights.block(1, 1, bank.bands, N - 1) * power.segment(1, N - 1);
}

}  // namespace detail

inline BandEnergies band_energies(const SpectrumFrame& spec,
                                  const FilterBank& bank) {
  detail::CheckGeometry(spec, bank);
  const auto powers = detail::BandPowers(detail::PowerSpectrum(spec), bank);
  BandEnergies out;
  out.values.resize(bank.bands);
  for (int b = 0; b < bank.bands; ++b) {
    out.values[b] = std::log10(std::max(powers[b], kBandPowerFloor));
  }
  return out;
}

inline TiltVector spectral_tilt(const BandEnergies& target,
                                const BandEnergies& source) {
  if (target.values.size() != source.values.size()) {
    throw Error(ErrorKind::kDimMismatch, "band count mismatch");
  }
  TiltVector out;
  out.values.resize(target.values.size());
  for (std::size_t b = 0; b < target.values.size(); ++b) {
    out.values[b] = target.values[b] - source.values[b];
  }
  return out;
}

// c(n) = sum_{b=1}^{B} E(b) cos(pi n (b - 1/2) / B), n = 1..B-1.
inline CepstralVector excitation_cepstrum(const BandEnergies& e) {
  const int B = static_cast<int>(e.values.size());
  if (B < 2) throw Error(ErrorKind::kBadGeometry, "need at least two bands");
  CepstralVector out;
  out.values.resize(B - 1);
  for (int n = 1; n < B; ++n) {
    double acc = 0.0;
    for (int b = 1; b <= B; ++b) {
      acc += e.values[b - 1] * std::cos(std::numbers::pi * n * (b - 0.5) / B);
    }
    out.values[n - 1] = acc;
  }
  return out;
}

// Observable of the tilt regression: [x_s; c_T].
inline VectorXd ExcitationObservable(const LsfVector& tm_lsf,
                                     const CepstralVector& tm_cepstrum) {
  VectorXd x(tm_lsf.order() + tm_cepstrum.values.size());
  for (int i = 0; i < tm_lsf.order(); ++i) x[i] = tm_lsf.values[i];
  for (std::size_t i = 0; i < tm_cepstrum.values.size(); ++i) {
    x[tm_lsf.order() + i] = tm_cepstrum.values[i];
  }
  return x;
}

inline TiltVector map_tilt(const MappingModel& model, const LsfVector& x_s,
                           const CepstralVector& c_t, const PhoneContext& ctx,
                           MappingStats* stats = nullptr) {
  const VectorXd x = ExcitationObservable(x_s, c_t);
  if (x.size() != model.global.dim_x()) {
    throw Error(ErrorKind::kDimMismatch, "excitation observable dimension");
  }
  const VectorXd y = mmse_pdhm(model, x, ctx, stats);
  return TiltVector{std::vector<double>(y.data(), y.data() + y.size())};
}

namespace detail {

// Per-bin amplitude gain sum_b w_b(n) G_b with G_0 = G_1 and
// G_{B+1} = G_B. `log_gains` holds log10 G_1..G_B.
inline Eigen::VectorXd InterpolatedGain(const FilterBank& bank,
                                        const Eigen::VectorXd& log_gains) {
  Eigen::VectorXd g(bank.bands + 2);
  for (int b = 0; b < bank.bands; ++b) g[b + 1] = std::pow(10.0, log_gains[b]);
  g[0] = g[1];
  g[bank.bands + 1] = g[bank.bands];
  return bank.weights.transpose() * g;
}

// Newton iteration on log gains so that the band-power change of the tilted
// spectrum equals the requested tilt. Targets that triangular interpolation
// cannot realize (large alternating jumps) stop at the least-residual point.
inline Eigen::VectorXd SolvePowerConsistentGains(const FilterBank& bank,
                                                 const Eigen::VectorXd& power,
                                                 const Eigen::VectorXd& tilt) {
  const int B = bank.bands;
  const int N = bank.half_size;
  const Eigen::VectorXd base = BandPowers(power, bank);
  Eigen::VectorXd log_gain = tilt / 2.0;
  for (int b = 0; b < B; ++b) {
    if (!(base[b] > kBandPowerFloor)) return log_gain;
  }
  // Tied weights: band 1 also owns w_0, band B also owns w_{B+1}.
  Eigen::MatrixXd tied = bank.weights.middleRows(1, B);
  tied.row(0) += bank.weights.row(0);
  tied.row(B - 1) += bank.weights.row(B + 1);
  const auto analysis = bank.weights.block(1, 1, B, N - 1);

  auto residual = [&](const Eigen::VectorXd& lg, Eigen::VectorXd* gain) {
    *gain = InterpolatedGain(bank, lg);
    const Eigen::VectorXd shaped =
        power.segment(1, N - 1).cwiseProduct(gain->segment(1, N - 1).cwiseAbs2());
    const Eigen::VectorXd powers = analysis * shaped;
    Eigen::VectorXd e(B);
    for (int b = 0; b < B; ++b) {
      e[b] = std::log10(std::max(powers[b], kBandPowerFloor)) -
             std::log10(base[b]) - tilt[b];
    }
    return e;
  };

  Eigen::VectorXd gain;
  Eigen::VectorXd e = residual(log_gain, &gain);
  for (int it = 0; it < 50 && e.cwiseAbs().maxCoeff() > 1e-13; ++it) {
    // d e_b / d log10 G_c = 2 G_c sum_n w_b P g w~_c / sum_n w_b P g^2
    const Eigen::VectorXd pg =
        power.segment(1, N - 1).cwiseProduct(gain.segment(1, N - 1));
    const Eigen::VectorXd denom = analysis * pg.cwiseProduct(gain.segment(1, N - 1));
    Eigen::MatrixXd jac =
        analysis * pg.asDiagonal() * tied.middleCols(1, N - 1).transpose();
    for (int c = 0; c < B; ++c) jac.col(c) *= 2.0 * std::pow(10.0, log_gain[c]);
    for (int b = 0; b < B; ++b) jac.row(b) /= denom[b];
    Eigen::VectorXd step = jac.completeOrthogonalDecomposition().solve(e);
    step = step.cwiseMax(-1.0).cwiseMin(1.0);
    double t = 1.0;
    Eigen::VectorXd trial_gain;
    Eigen::VectorXd trial;
    bool improved = false;
    for (; t >= 1e-4; t *= 0.5) {
      trial = residual(log_gain - t * step, &trial_gain);
      if (trial.cwiseAbs().maxCoeff() < e.cwiseAbs().maxCoeff()) {
        improved = true;
        break;
      }
    }
    if (!improved) break;
    log_gain -= t * step;
    e = trial;
    gain = trial_gain;
  }
  return log_gain;
}

}  // namespace detail

// Tilted spectrum sum_{b=0}^{B+1} w_b(n) g(D_b) R(n) with D_0 = D_1 and
// D_{B+1} = D_B. DC and Nyquist take their nearest band gain.
inline SpectrumFrame apply_tilt(const SpectrumFrame& spec, const TiltVector& tilt,
                                const FilterBank& bank,
                                TiltMode mode = TiltMode::kPowerConsistent) {
  detail::CheckGeometry(spec, bank);
  if (static_cast<int>(tilt.values.size()) != bank.bands) {
    throw Error(ErrorKind::kDimMismatch, "tilt length != band count");
  }
  const Eigen::Map<const Eigen::VectorXd> d(tilt.values.data(), bank.bands);
  Eigen::VectorXd log_gain;
  if (mode == TiltMode::kPaperLiteral) {
    log_gain = d;
  } else {
    log_gain = detail::SolvePowerConsistentGains(
        bank, detail::PowerSpectrum(spec), d);
  }
  const Eigen::VectorXd gain = detail::InterpolatedGain(bank, log_gain);
  SpectrumFrame out = spec;
  for (int n = 0; n <= bank.half_size; ++n) out.bins[n] *= gain[n];
  return out;
}

// Inverse DFT of each frame truncated to the window, then window-compensated
// overlap-add.
inline SampleBuffer reconstruct_excitation(std::span<const SpectrumFrame> frames,
                                           const AnalysisConfig& cfg,
                                           std::size_t output_length,
                                           int rate_hz = kCorpusRateHz) {
  const int win = cfg.window_length(rate_hz);
  std::vector<Frame> time_frames;
  time_frames.reserve(frames.size());
  for (const auto& spec : frames) {
    auto t = inverse_dft(spec);
    t.resize(win);
    time_frames.push_back(std::move(t));
  }
  return overlap_add(time_frames, cfg, output_length, rate_hz);
}

}  // namespace tmenhance
