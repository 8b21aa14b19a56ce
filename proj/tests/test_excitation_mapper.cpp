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

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tmenhance/excitation_mapper.hpp"

namespace tmenhance {
namespace {

template <typename F>
void ExpectError(ErrorKind kind, F&& f) {
  try {
    f();
    ADD_FAILURE() << "no error thrown";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

constexpr int kN = 1024;

// Spectrum of a Hamming-windowed 20 ms stretch of coloured noise.
SpectrumFrame RandomSpectrum(std::mt19937_64& rng) {
  const auto ar = testing::RandomFormantModel(rng, 4);
  auto x = testing::AllPole(ar.coeffs, testing::WhiteNoise(rng, 800));
  const auto w = HammingWindow(320);
  std::vector<double> frame(320);
  for (int n = 0; n < 320; ++n) frame[n] = x[400 + n] * w[n];
  return dft_spectrum(frame, 2 * kN);
}

TEST(FilterBank, LinearCentersAndShape) {
  for (int B : {1, 2, 8, 20}) {
    const auto bank = build_filterbank(B, kN, Spacing::kLinear);
    ASSERT_EQ(bank.centers.size(), static_cast<std::size_t>(B + 2));
    for (int b = 0; b <= B + 1; ++b) {
      EXPECT_EQ(bank.centers[b], std::lround(static_cast<double>(b) * kN / (B + 1)));
    }
    for (int b = 1; b <= B; ++b) {
      EXPECT_EQ(bank.weight(b, bank.centers[b]), 1.0);
      for (int n = 0; n <= kN; ++n) {
        if (n <= bank.centers[b - 1] || n >= bank.centers[b + 1]) {
          EXPECT_EQ(bank.weight(b, n), 0.0) << b << " " << n;
        } else {
          EXPECT_GT(bank.weight(b, n), 0.0);
        }
      }
    }
  }
}

TEST(FilterBank, PartitionOfUnity) {
  for (Spacing s : {Spacing::kLinear, Spacing::kMel}) {
    for (int B : {2, 8, 24}) {
      const auto bank = build_filterbank(B, kN, s);
      for (int b = 1; b <= B + 1; ++b) EXPECT_GT(bank.centers[b], bank.centers[b - 1]);
      for (int n = bank.centers[1]; n <= bank.centers[B]; ++n) {
        double sum = 0.0;
        for (int b = 1; b <= B; ++b) sum += bank.weight(b, n);
        EXPECT_NEAR(sum, 1.0, 1e-15) << n;
      }
    }
  }
}

TEST(FilterBank, MelCentersAreDenserAtLowFrequency) {
  const auto bank = build_filterbank(8, kN, Spacing::kMel);
  for (int b = 2; b <= 9; ++b) {
    EXPECT_GE(bank.centers[b] - bank.centers[b - 1],
              bank.centers[b - 1] - bank.centers[b - 2] - 1);
  }
  EXPECT_LT(bank.centers[1], kN / 9);
}

TEST(FilterBank, RejectsBadGeometry) {
  ExpectError(ErrorKind::kBadGeometry, [] { build_filterbank(0, kN, Spacing::kLinear); });
  ExpectError(ErrorKind::kBadGeometry, [] { build_filterbank(8, 9, Spacing::kLinear); });
  ExpectError(ErrorKind::kBadGeometry, [] { build_filterbank(200, 256, Spacing::kMel); });
}

TEST(BandEnergies, FlatSpectrumGivesTriangleAreas) {
  const auto bank = build_filterbank(8, kN, Spacing::kLinear);
  SpectrumFrame flat;
  flat.bins.assign(kN + 1, {1.0, 0.0});
  const auto e = band_energies(flat, bank);
  ASSERT_EQ(e.values.size(), 8u);
  for (int b = 1; b <= 8; ++b) {
    // A triangle rising over h1 bins and falling over h2 bins sums to (h1 + h2) / 2.
    const double area = (bank.centers[b + 1] - bank.centers[b - 1]) / 2.0;
    EXPECT_NEAR(e.values[b - 1], std::log10(area), 1e-12);
    if (b > 1) EXPECT_NEAR(e.values[b - 1], e.values[b - 2], 0.01);
  }
}

TEST(BandEnergies, ZeroSpectrumHitsFloor) {
  const auto bank = build_filterbank(8, kN, Spacing::kLinear);
  SpectrumFrame zero;
  zero.bins.assign(kN + 1, {0.0, 0.0});
  for (double v : band_energies(zero, bank).values) EXPECT_EQ(v, -12.0);
}

TEST(BandEnergies, ToneAtCenterSelectsItsBand) {
  const auto bank = build_filterbank(8, kN, Spacing::kLinear);
  for (int b = 1; b <= 8; ++b) {
    SpectrumFrame tone;
    tone.bins.assign(kN + 1, {0.0, 0.0});
    tone.bins[bank.centers[b]] = {3.0, 4.0};
    const auto e = band_energies(tone, bank);
    for (int c = 1; c <= 8; ++c) {
      EXPECT_EQ(e.values[c - 1], c == b ? std::log10(25.0) : -12.0);
    }
  }
}

TEST(BandEnergies, RejectsWrongSize) {
  const auto bank = build_filterbank(8, kN, Spacing::kLinear);
  SpectrumFrame small;
  small.bins.assign(513, {1.0, 0.0});
  ExpectError(ErrorKind::kDimMismatch, [&] { band_energies(small, bank); });
}

TEST(SpectralTilt, ElementwiseDifference) {
  const BandEnergies a{{1.0, -2.0, 3.5}};
  EXPECT_EQ(spectral_tilt(a, a).values, std::vector<double>(3, 0.0));
  const BandEnergies b{{2.0, -1.0, 4.5}};
  EXPECT_EQ(spectral_tilt(b, a).values, std::vector<double>(3, 1.0));
  std::mt19937_64 rng(61);
  std::normal_distribution<double> g;
  BandEnergies x, y;
  for (int i = 0; i < 8; ++i) {
    x.values.push_back(g(rng));
    y.values.push_back(g(rng));
  }
  const auto d = spectral_tilt(x, y);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(d.values[i], x.values[i] - y.values[i]);
  ExpectError(ErrorKind::kDimMismatch, [&] { spectral_tilt(a, x); });
}

TEST(ExcitationCepstrum, Examples) {
  const int B = 8;
  const auto flat = excitation_cepstrum(BandEnergies{std::vector<double>(B, 2.7)});
  ASSERT_EQ(flat.values.size(), 7u);
  for (double c : flat.values) EXPECT_NEAR(c, 0.0, 1e-13);

  BandEnergies cosine;
  for (int b = 1; b <= B; ++b) {
    cosine.values.push_back(std::cos(std::numbers::pi * (b - 0.5) / B));
  }
  const auto c = excitation_cepstrum(cosine);
  EXPECT_NEAR(c.values[0], B / 2.0, 1e-13);
  for (int n = 2; n < B; ++n) EXPECT_NEAR(c.values[n - 1], 0.0, 1e-13);

  ExpectError(ErrorKind::kBadGeometry,
              [] { excitation_cepstrum(BandEnergies{{1.0}}); });
}

TEST(ExcitationCepstrum, MatchesDirectSumAndIsLinear) {
  std::mt19937_64 rng(62);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    const int B = 2 + trial % 15;
    BandEnergies e1, e2, mix;
    const double alpha = g(rng), beta = g(rng);
    for (int b = 0; b < B; ++b) {
      e1.values.push_back(g(rng));
      e2.values.push_back(g(rng));
      mix.values.push_back(alpha * e1.values[b] + beta * e2.values[b]);
    }
    const auto c1 = excitation_cepstrum(e1);
    const auto c2 = excitation_cepstrum(e2);
    const auto cm = excitation_cepstrum(mix);
    for (int n = 1; n < B; ++n) {
      long double want = 0.0L;
      for (int b = 1; b <= B; ++b) {
        want += e1.values[b - 1] *
                std::cos(std::numbers::pi_v<long double> * n * (b - 0.5L) / B);
      }
      EXPECT_NEAR(c1.values[n - 1], static_cast<double>(want), 1e-12);
      EXPECT_NEAR(cm.values[n - 1], alpha * c1.values[n - 1] + beta * c2.values[n - 1],
                  1e-12);
    }
  }
}

TEST(ApplyTilt, ZeroTiltIsIdentityOnInteriorBins) {
  std::mt19937_64 rng(63);
  const auto bank = build_filterbank(8, kN, Spacing::kLinear);
  const auto spec = RandomSpectrum(rng);
  for (TiltMode mode : {TiltMode::kPowerConsistent, TiltMode::kPaperLiteral}) {
    const auto out = apply_tilt(spec, TiltVector{std::vector<double>(8, 0.0)}, bank, mode);
    for (int n = bank.centers[1]; n <= bank.centers[8]; ++n) {
      EXPECT_LE(std::abs(out.bins[n] - spec.bins[n]), 1e-15 * std::abs(spec.bins[n]));
    }
  }
}

TEST(ApplyTilt, ConstantTiltRoundTrip) {
  std::mt19937_64 rng(64);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (Spacing s : {Spacing::kLinear, Spacing::kMel}) {
    const auto bank = build_filterbank(8, kN, s);
    for (int trial = 0; trial < 20; ++trial) {
      const auto spec = RandomSpectrum(rng);
      const double d = u(rng);
      const TiltVector tilt{std::vector<double>(8, d)};
      const auto before = band_energies(spec, bank);
      const auto power = band_energies(apply_tilt(spec, tilt, bank), bank);
      const auto literal =
          band_energies(apply_tilt(spec, tilt, bank, TiltMode::kPaperLiteral), bank);
      for (int b = 0; b < 8; ++b) {
        EXPECT_NEAR(power.values[b] - before.values[b], d, 1e-6);
        EXPECT_NEAR(literal.values[b] - before.values[b], 2.0 * d, 1e-6);
      }
    }
  }
}

TEST(ApplyTilt, BoundedStepTiltsWithinTolerance) {
  std::mt19937_64 rng(65);
  std::uniform_real_distribution<double> offset(-1.0, 1.0);
  std::uniform_real_distribution<double> step(-0.3, 0.3);
  const auto bank = build_filterbank(8, kN, Spacing::kLinear);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto spec = RandomSpectrum(rng);
    TiltVector tilt{{offset(rng)}};
    for (int b = 1; b < 8; ++b) tilt.values.push_back(tilt.values.back() + step(rng));
    const auto before = band_energies(spec, bank);
    const auto after = band_energies(apply_tilt(spec, tilt, bank), bank);
    for (int b = 0; b < 8; ++b) {
      worst = std::max(worst, std::abs(after.values[b] - before.values[b] - tilt.values[b]));
    }
  }
  EXPECT_LT(worst, 0.05);
}

TEST(ApplyTilt, PreservesPhase) {
  std::mt19937_64 rng(66);
  const auto bank = build_filterbank(8, kN, Spacing::kLinear);
  const auto spec = RandomSpectrum(rng);
  const TiltVector tilt{{0.5, 0.2, -0.1, -0.4, -0.2, 0.1, 0.3, 0.6}};
  const auto out = apply_tilt(spec, tilt, bank);
  for (int n = 0; n <= kN; ++n) {
    if (std::abs(spec.bins[n]) < 1e-9) continue;
    const auto ratio = out.bins[n] / spec.bins[n];
    EXPECT_GT(ratio.real(), 0.0);
    EXPECT_NEAR(ratio.imag(), 0.0, 1e-12 * std::abs(ratio));
  }
}

TEST(ApplyTilt, RejectsWrongLength) {
  std::mt19937_64 rng(67);
  const auto bank = build_filterbank(8, kN, Spacing::kLinear);
  ExpectError(ErrorKind::kDimMismatch, [&] {
    apply_tilt(RandomSpectrum(rng), TiltVector{std::vector<double>(7, 0.0)}, bank);
  });
}

TEST(ReconstructExcitation, ZeroTiltChainIsIdentity) {
  std::mt19937_64 rng(68);
  const AnalysisConfig cfg;
  const auto bank = build_filterbank(8, cfg.half_size(), Spacing::kLinear);
  SampleBuffer residual{testing::WhiteNoise(rng, 8000, 0.1)};
  const auto frames = frame_signal(residual, cfg);
  std::vector<SpectrumFrame> tilted;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto spec = dft_spectrum(frames[k], cfg.dft_size, static_cast<int>(k));
    tilted.push_back(apply_tilt(spec, TiltVector{std::vector<double>(8, 0.0)}, bank));
  }
  const auto out = reconstruct_excitation(tilted, cfg, residual.size());
  ASSERT_EQ(out.size(), residual.size());
  double err = 0.0;
  for (std::size_t n = 320; n + 320 < out.size(); ++n) {
    err += std::pow(out.samples[n] - residual.samples[n], 2);
  }
  EXPECT_LT(std::sqrt(err / (out.size() - 640)), 1e-6);
}

TEST(ReconstructExcitation, SilenceAndSingleFrame) {
  const AnalysisConfig cfg;
  SpectrumFrame zero;
  zero.bins.assign(cfg.half_size() + 1, {0.0, 0.0});
  const std::vector<SpectrumFrame> silent(10, zero);
  for (double v : reconstruct_excitation(silent, cfg, 1600).samples) EXPECT_EQ(v, 0.0);

  std::mt19937_64 rng(69);
  const auto w = HammingWindow(320);
  const auto raw = testing::WhiteNoise(rng, 320);
  std::vector<double> frame(320);
  for (int n = 0; n < 320; ++n) frame[n] = raw[n] * w[n];
  const std::vector<SpectrumFrame> one{dft_spectrum(frame, cfg.dft_size)};
  const auto out = reconstruct_excitation(one, cfg, 320);
  for (int n = 0; n < 320; ++n) EXPECT_NEAR(out.samples[n], raw[n], 1e-9);
}

// Observable of dimension p + B - 1 built from random stable LSFs and band
// energies; the hidden tilt is a fixed linear function plus a phone offset.
struct TiltData {
  Eigen::MatrixXd joint;
  std::vector<LsfVector> lsf;
  std::vector<CepstralVector> cep;
};

TiltData MakeTiltData(std::mt19937_64& rng, int n, const Eigen::VectorXd& offset,
                      const Eigen::MatrixXd& slope) {
  std::normal_distribution<double> g;
  const int p = 16, B = 8;
  TiltData out;
  out.joint.resize(p + B - 1 + B, n);
  for (int i = 0; i < n; ++i) {
    const auto lsf = lpc_to_lsf(testing::RandomFormantModel(rng, 8));
    BandEnergies e;
    for (int b = 0; b < B; ++b) e.values.push_back(2.0 - 0.3 * b + 0.5 * g(rng));
    const auto cep = excitation_cepstrum(e);
    const Eigen::VectorXd x = ExcitationObservable(lsf, cep);
    out.joint.col(i).head(p + B - 1) = x;
    out.joint.col(i).tail(B) = offset + slope * x;
    out.lsf.push_back(lsf);
    out.cep.push_back(cep);
  }
  return out;
}

TEST(MapTilt, ConstantTiltPerPhoneIsRecovered) {
  std::mt19937_64 rng(70);
  std::normal_distribution<double> g;
  const Eigen::MatrixXd none = Eigen::MatrixXd::Zero(8, 23);
  MappingModel model;
  std::map<std::string, Eigen::VectorXd> truth;
  Eigen::MatrixXd all(31, 0);
  for (const char* phone : {"A", "S"}) {
    const Eigen::VectorXd d0 = Eigen::VectorXd::NullaryExpr(8, [&] { return g(rng); });
    const auto train = MakeTiltData(rng, 400, d0, none);
    model.per_phone[phone] = em_train(vq_initialize(train.joint, 23, 2, 1), train.joint).model;
    truth[phone] = d0;
    Eigen::MatrixXd grown(31, all.cols() + train.joint.cols());
    grown << all, train.joint;
    all = std::move(grown);
  }
  model.global = em_train(vq_initialize(all, 23, 2, 1), all).model;
  for (const auto& [phone, d0] : truth) {
    const auto held = MakeTiltData(rng, 20, d0, none);
    for (int i = 0; i < 20; ++i) {
      const auto d = map_tilt(model, held.lsf[i], held.cep[i],
                              PhoneContext{ContextSource::kTrueLabel, phone});
      for (int b = 0; b < 8; ++b) EXPECT_NEAR(d.values[b], d0[b], 0.05);
    }
  }
  // Zero-tilt corpus maps to zero.
  const auto zero = MakeTiltData(rng, 400, Eigen::VectorXd::Zero(8), none);
  MappingModel flat;
  flat.global = em_train(vq_initialize(zero.joint, 23, 2, 1), zero.joint).model;
  const auto d = map_tilt(flat, zero.lsf[0], zero.cep[0],
                          PhoneContext{ContextSource::kTrueLabel, std::nullopt});
  for (double v : d.values) EXPECT_NEAR(v, 0.0, 0.05);
}

TEST(MapTilt, SingleMixtureMatchesLinearRegression) {
  std::mt19937_64 rng(71);
  std::normal_distribution<double> g;
  const Eigen::VectorXd offset = Eigen::VectorXd::NullaryExpr(8, [&] { return g(rng); });
  const Eigen::MatrixXd slope =
      Eigen::MatrixXd::NullaryExpr(8, 23, [&] { return 0.1 * g(rng); });
  auto data = MakeTiltData(rng, 600, offset, slope);
  data.joint.bottomRows(8) +=
      Eigen::MatrixXd::NullaryExpr(8, 600, [&] { return 0.01 * g(rng); });
  MappingModel model;
  model.global = em_train(vq_initialize(data.joint, 23, 1, 1), data.joint).model;
  model.per_phone["E"] = model.global;

  // Ordinary least squares on [1; x] in long double.
  using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  MatrixXld design(600, 24);
  design.col(0).setOnes();
  design.rightCols(23) = data.joint.topRows(23).transpose().cast<long double>();
  const MatrixXld target = data.joint.bottomRows(8).transpose().cast<long double>();
  const MatrixXld beta = (design.transpose() * design).ldlt().solve(design.transpose() * target);

  for (int i = 0; i < 10; ++i) {
    const auto d = map_tilt(model, data.lsf[i], data.cep[i],
                            PhoneContext{ContextSource::kTrueLabel, std::string("E")});
    Eigen::Matrix<long double, 1, 24> row;
    row(0) = 1.0L;
    row.tail(23) = data.joint.col(i).head(23).transpose().cast<long double>();
    const auto want = row * beta;
    for (int b = 0; b < 8; ++b) EXPECT_NEAR(d.values[b], static_cast<double>(want(b)), 1e-6);
  }
}

TEST(MapTilt, RejectsWrongObservable) {
  MappingModel model;
  model.global = JointGmm(3, 2, {1.0}, {Eigen::VectorXd::Zero(5)},
                          {Eigen::MatrixXd::Identity(5, 5)});
  ExpectError(ErrorKind::kDimMismatch, [&] {
    map_tilt(model, UniformLsf(16), CepstralVector{std::vector<double>(7, 0.0)},
             PhoneContext{});
  });
}

}  // namespace
}  // namespace tmenhance
