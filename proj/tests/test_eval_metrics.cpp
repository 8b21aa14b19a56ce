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

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tmenhance/eval_metrics.hpp"
#include "tmenhance/lsf_codec.hpp"

namespace tmenhance {
namespace {

using testing::RandomStableModel;

template <typename F>
void ExpectError(ErrorKind kind, F&& f) {
  try {
    f();
    ADD_FAILURE() << "no error thrown";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

TEST(LsdFrame, IdenticalIsZeroAndSymmetric) {
  std::mt19937_64 rng(91);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = RandomStableModel(rng, 16);
    const auto b = RandomStableModel(rng, 16);
    EXPECT_EQ(lsd_frame(a, a), 0.0);
    EXPECT_EQ(lsd_frame(a, b), lsd_frame(b, a));
    EXPECT_GT(lsd_frame(a, b), 0.0);
  }
}

TEST(LsdFrame, ConstantPowerRatioGivesTenDb) {
  const std::vector<double> a(512, 3.0);
  const std::vector<double> b(512, 0.3);
  EXPECT_NEAR(lsd_from_power(a, b), 10.0, 1e-12);
  EXPECT_NEAR(lsd_from_power(b, a), 10.0, 1e-12);
  ExpectError(ErrorKind::kLengthMismatch,
              [&] { lsd_from_power(a, std::vector<double>(3, 1.0)); });
}

TEST(LsdFrame, MatchesDenseIntegration) {
  std::mt19937_64 rng(92);
  for (int trial = 0; trial < 8; ++trial) {
    const auto a = testing::RandomFormantModel(rng, 8);
    const auto b = testing::RandomFormantModel(rng, 8);
    EXPECT_NEAR(lsd_frame(a, b), testing::DenseLsd(a, b), 1e-3) << trial;
  }
  for (int trial = 0; trial < 8; ++trial) {
    const auto a = RandomStableModel(rng, 16, 0.9);
    const auto b = RandomStableModel(rng, 16, 0.9);
    EXPECT_NEAR(lsd_frame(a, b), testing::DenseLsd(a, b), 1e-3) << trial;
  }
}

TEST(LsdFrame, GridConverges) {
  std::mt19937_64 rng(93);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = testing::RandomFormantModel(rng, 8);
    const auto b = testing::RandomFormantModel(rng, 8);
    EXPECT_LT(std::abs(lsd_frame(a, b, 512) - lsd_frame(a, b, 4096)), 5e-3);
  }
}

TEST(LsdFrame, IgnoresResidualGain) {
  auto a = LpcModel{{0.5, -0.2}, 1.0};
  auto b = a;
  b.residual_gain = 100.0;
  EXPECT_EQ(lsd_frame(a, b), 0.0);
}

TEST(LsdFrame, RejectsUnstableEnvelope) {
  const LpcModel bad{{2.5, -1.0}, 1.0};
  const LpcModel good{{0.5}, 1.0};
  ExpectError(ErrorKind::kUnstableFilter, [&] { lsd_frame(bad, good); });
  ExpectError(ErrorKind::kUnstableFilter, [&] { lsd_frame(good, bad); });
}

TEST(LsdCorpus, IdenticalFramesGiveZeros) {
  std::mt19937_64 rng(94);
  std::vector<FrameEnvelopes> frames;
  for (const char* p : {"A", "M", "S", "SIL", "", "C", "Y"}) {
    const auto m = RandomStableModel(rng, 16);
    frames.push_back({m, m, p});
  }
  const auto r = lsd_corpus(frames);
  EXPECT_EQ(r.per_frame.size(), frames.size());
  EXPECT_EQ(r.mean_db, 0.0);
  EXPECT_EQ(r.per_attribute.size(), 8u);
  for (const auto& [attr, s] : r.per_attribute) EXPECT_EQ(s.mean_db, 0.0);
  EXPECT_EQ(r.per_attribute.at(Attribute::kBackVowels).frames, 1u);
  EXPECT_EQ(r.per_attribute.at(Attribute::kLiquids).frames, 0u);
  EXPECT_EQ(r.silence.frames, 1u);
}

TEST(LsdCorpus, RecoversConstructedOrdering) {
  // Each attribute gets LSF perturbations of a different size; the report
  // must rank attributes the same way.
  std::mt19937_64 rng(95);
  std::normal_distribution<double> g;
  const std::vector<std::pair<const char*, double>> plan{
      {"M", 0.005}, {"B", 0.01}, {"L", 0.02}, {"A", 0.03},
      {"E", 0.04},  {"Y", 0.05}, {"C", 0.06}, {"S", 0.08}};
  std::vector<FrameEnvelopes> frames;
  for (const auto& [phone, scale] : plan) {
    for (int i = 0; i < 40; ++i) {
      const auto ref = testing::RandomFormantModel(rng, 8);
      auto lsf = lpc_to_lsf(ref).values;
      for (double& v : lsf) v += scale * g(rng);
      frames.push_back({ref, lsf_to_lpc(stabilize_lsf(lsf)), phone});
    }
  }
  frames.push_back({LpcModel::Zero(16), LpcModel{{0.9}, 1.0}, "SIL"});
  const auto r = lsd_corpus(frames);
  double prev = 0.0;
  for (const auto& [phone, scale] : plan) {
    const auto& s = r.per_attribute.at(*AttributeOf(phone));
    EXPECT_EQ(s.frames, 40u);
    EXPECT_GT(s.mean_db, prev) << phone;
    prev = s.mean_db;
  }
  EXPECT_EQ(r.silence.frames, 1u);
  EXPECT_NEAR(r.silence.mean_db, lsd_frame(LpcModel::Zero(16), LpcModel{{0.9}, 1.0}), 1e-12);
  double total = 0.0;
  for (double d : r.per_frame) total += d;
  EXPECT_NEAR(r.mean_db, total / frames.size(), 1e-12);
}

// Per-frame mean absolute band-energy difference with a naive DFT.
double OracleBandDistortion(const SampleBuffer& ref, const SampleBuffer& test,
                            const AnalysisConfig& cfg, const FilterBank& bank) {
  const auto w = HammingWindow(320);
  const std::size_t frames = (ref.size() + 159) / 160;
  double total = 0.0;
  for (std::size_t k = 0; k < frames; ++k) {
    std::vector<double> fr(320, 0.0), ft(320, 0.0);
    for (std::size_t n = 0; n < 320 && k * 160 + n < ref.size(); ++n) {
      fr[n] = ref.samples[k * 160 + n] * w[n];
      ft[n] = test.samples[k * 160 + n] * w[n];
    }
    const auto sr = testing::NaiveDft(fr, cfg.dft_size);
    const auto st = testing::NaiveDft(ft, cfg.dft_size);
    double acc = 0.0;
    for (int b = 1; b <= bank.bands; ++b) {
      double pr = 0.0, pt = 0.0;
      for (int n = 1; n < bank.half_size; ++n) {
        pr += bank.weight(b, n) * std::norm(sr[n]);
        pt += bank.weight(b, n) * std::norm(st[n]);
      }
      acc += std::abs(std::log10(std::max(pr, 1e-12)) - std::log10(std::max(pt, 1e-12)));
    }
    total += acc / bank.bands;
  }
  return total / frames;
}

TEST(BandEnergyDistortion, Examples) {
  std::mt19937_64 rng(96);
  const AnalysisConfig cfg;
  const auto bank = build_filterbank(8, cfg.half_size(), Spacing::kLinear);
  const SampleBuffer ref{testing::WhiteNoise(rng, 3200, 0.1)};
  EXPECT_EQ(band_energy_distortion(ref, ref, cfg, bank), 0.0);
  SampleBuffer louder = ref;
  for (double& x : louder.samples) x *= 10.0;
  EXPECT_NEAR(band_energy_distortion(ref, louder, cfg, bank), 2.0, 1e-9);

  const SampleBuffer other{testing::AllPole({0.8}, testing::WhiteNoise(rng, 3200, 0.1))};
  EXPECT_NEAR(band_energy_distortion(ref, other, cfg, bank),
              OracleBandDistortion(ref, other, cfg, bank), 1e-9);

  ExpectError(ErrorKind::kLengthMismatch, [&] {
    band_energy_distortion(ref, SampleBuffer{std::vector<double>(10, 0.0)}, cfg, bank);
  });
}

TEST(BandEnergyDistortion, StatsMergeByFrames) {
  BandDistortion a{3.0, 2};
  a.Merge({1.0, 2});
  EXPECT_EQ(a.frames, 4u);
  EXPECT_EQ(a.mean(), 1.0);
  EXPECT_EQ(BandDistortion{}.mean(), 0.0);
}

TEST(Reports, KeyValueSchema) {
  std::vector<FrameEnvelopes> frames{{LpcModel{{0.5}, 1.0}, LpcModel{{0.4}, 1.0}, "A"}};
  const auto r = lsd_corpus(frames);
  const BandDistortion band{1.5, 3};
  const auto text = FormatKeyValues(r, &band);
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> keys;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    ASSERT_NE(eq, std::string::npos) << line;
    keys.push_back(line.substr(0, eq));
    EXPECT_NO_THROW((void)std::stod(line.substr(eq + 3)));
  }
  const std::vector<std::string> want{
      "lsd.mean",          "lsd.frames",          "lsd.nasals",     "frames.nasals",
      "lsd.stops",         "frames.stops",        "lsd.liquids",    "frames.liquids",
      "lsd.back_vowels",   "frames.back_vowels",  "lsd.front_vowels", "frames.front_vowels",
      "lsd.glide",         "frames.glide",        "lsd.affricate",  "frames.affricate",
      "lsd.fricatives",    "frames.fricatives",   "lsd.silence",    "frames.silence",
      "band_energy.mean",  "band_energy.frames"};
  EXPECT_EQ(keys, want);
  EXPECT_NE(text.find("band_energy.mean = 0.5\n"), std::string::npos);
  EXPECT_NE(text.find("frames.back_vowels = 1\n"), std::string::npos);
}

TEST(Reports, TableListsEveryAttribute) {
  const auto r = lsd_corpus(std::vector<FrameEnvelopes>{});
  const auto table = FormatLsdTable(r);
  for (Attribute a : kAllAttributes) {
    EXPECT_NE(table.find(std::string(AttributeName(a))), std::string::npos);
  }
  EXPECT_NE(table.find("All frames"), std::string::npos);
  EXPECT_EQ(table.find("band-energy"), std::string::npos);
  const BandDistortion band{1.0, 1};
  EXPECT_NE(FormatLsdTable(r, &band).find("band-energy"), std::string::npos);
}

}  // namespace
}  // namespace tmenhance
