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

#pragma once

#include <vector>

#include "tmenhance/error.hpp"
#include "tmenhance/excitation_mapper.hpp"
#include "tmenhance/lsf_codec.hpp"
#include "tmenhance/signal_core.hpp"

namespace tmenhance {

// Source-filter decomposition of one recording on the shared frame grid.
struct UtteranceFeatures {
  LpcAnalysis lpc;
  std::vector<LsfVector> lsf;
  SampleBuffer residual;
  std::vector<SpectrumFrame> residual_spectra;  // empty unless requested
  std::vector<BandEnergies> band_energies;

  std::size_t frames() const { return lpc.size(); }
};

inline std::vector<SpectrumFrame> ResidualSpectra(const SampleBuffer& residual,
                                                  const AnalysisConfig& cfg) {
  const auto frames = frame_signal(residual, cfg);
  std::vector<SpectrumFrame> out;
  out.reserve(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    out.push_back(dft_spectrum(frames[k], cfg.dft_size, static_cast<int>(k)));
  }
  return out;
}

inline UtteranceFeatures ExtractFeatures(const SampleBuffer& buf,
                                         const AnalysisConfig& cfg,
                                         const FilterBank& bank,
                                         bool keep_spectra = false) {
  UtteranceFeatures out;
  out.lpc = AnalyzeLpc(buf, cfg);
  out.lsf.reserve(out.lpc.size());
  for (std::size_t k = 0; k < out.lpc.size(); ++k) {
    if (!out.lpc.degenerate[k]) {
      try {
        out.lsf.push_back(lpc_to_lsf(out.lpc.models[k]));
        continue;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kRootCountError) throw;
        // Numerically marginal frame: treat like silence.
        out.lpc.models[k] = LpcModel::Zero(cfg.lpc_order,
                                           out.lpc.models[k].residual_gain);
        out.lpc.degenerate[k] = true;
      }
    }
    out.lsf.push_back(UniformLsf(cfg.lpc_order));
  }
  out.residual = inverse_filter(buf, out.lpc.models, cfg);
  auto spectra = ResidualSpectra(out.residual, cfg);
  out.band_energies.reserve(spectra.size());
  for (const auto& s : spectra) out.band_energies.push_back(band_energies(s, bank));
  if (keep_spectra) out.residual_spectra = std::move(spectra);
  return out;
}

}  // namespace tmenhance
