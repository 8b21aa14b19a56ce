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

// MMSE regression from an observable vector x to a hidden vector y through
// joint GMMs:
//
//   soft  (SM):   y = sum_l p(l|x) [mu_y,l + C_yx,l C_xx,l^-1 (x - mu_x,l)]
//   hard  (HM):   y = p(l*|x) [mu_y,l* + ...],  l* = argmax_l p(l|x)
//   PDSM:         y = 1/N sum_n soft_n(x) over the N phone models
//   PDHM:         y = soft_c*(x) for the context phone c*
//
// The hard estimate keeps the p(l*|x) factor; it shrinks toward zero when the
// posterior is diffuse.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmenhance/error.hpp"
#include "tmenhance/gmm.hpp"
#include "tmenhance/lsf_codec.hpp"
#include "tmenhance/phones.hpp"
#include "tmenhance/signal_core.hpp"

namespace tmenhance {

enum class ContextSource { kTrueLabel, kGmmClassifier, kExternalFile };

enum class Scheme { kSoft, kHard, kPhoneSoft, kPhoneHard };

struct PhoneContext {
  ContextSource source = ContextSource::kGmmClassifier;
  std::optional<std::string> label;
};

struct FeatureMeta {
  int dim_x = 0;
  int dim_y = 0;
  std::uint64_t fingerprint = 0;
};

// One context-independent model plus one model per phone class. Phones seen
// in training with too little data are listed in `fallback` and mapped with
// the global model.
struct MappingModel {
  JointGmm global;
  std::map<std::string, JointGmm> per_phone;
  std::vector<std::string> fallback;
  FeatureMeta meta;
};

// Counts contexts that had to use the global model.
struct MappingStats {
  std::size_t fallbacks = 0;
};

template <typename Derived>
VectorXd mmse_soft(const JointGmm& model, const Eigen::MatrixBase<Derived>& x) {
  const auto post = posterior(model, x);
  VectorXd y = VectorXd::Zero(model.dim_y());
  for (int l = 0; l < model.size(); ++l) {
    if (post[l] == 0.0) continue;
    y += post[l] * model.Regress(l, x);
  }
  return y;
}

template <typename Derived>
VectorXd mmse_hard(const JointGmm& model, const Eigen::MatrixBase<Derived>& x) {
  const auto post = posterior(model, x);
  int best = 0;
  for (int l = 1; l < model.size(); ++l) {
    if (post[l] > post[best]) best = l;
  }
  return post[best] * model.Regress(best, x);
}

template <typename Derived>
VectorXd mmse_pdsm(const MappingModel& model,
                   const Eigen::MatrixBase<Derived>& x) {
  if (model.per_phone.empty()) {
    throw Error(ErrorKind::kInsufficientData,
                "phone-dependent soft mapping needs per-phone models");
  }
  VectorXd y = VectorXd::Zero(model.global.dim_y());
  for (const auto& [phone, gmm] : model.per_phone) y += mmse_soft(gmm, x);
  return y / static_cast<double>(model.per_phone.size());
}

// Resolves the phone model for a context: the labelled phone, or the
// GMM-classified phone. Missing or untrained phones use the global model.
template <typename Derived>
const JointGmm& ResolveContextModel(const MappingModel& model,
                                    const Eigen::MatrixBase<Derived>& x,
                                    const PhoneContext& ctx,
                                    MappingStats* stats = nullptr) {
  if (ctx.source == ContextSource::kGmmClassifier) {
    if (model.per_phone.empty()) {
      if (stats) ++stats->fallbacks;
      return model.global;
    }
    std::vector<const JointGmm*> bank;
    bank.reserve(model.per_phone.size());
    for (const auto& [phone, gmm] : model.per_phone) bank.push_back(&gmm);
    return *bank[classify(std::span<const JointGmm* const>(bank), x)];
  }
  if (ctx.label && !IsKnownPhone(*ctx.label)) {
    throw Error(ErrorKind::kUnknownPhone, "unknown phone '" + *ctx.label + "'");
  }
  if (ctx.label) {
    const auto it = model.per_phone.find(*ctx.label);
    if (it != model.per_phone.end()) return it->second;
  }
  if (stats) ++stats->fallbacks;
  return model.global;
}

template <typename Derived>
VectorXd mmse_pdhm(const MappingModel& model,
                   const Eigen::MatrixBase<Derived>& x,
                   const PhoneContext& ctx, MappingStats* stats = nullptr) {
  return mmse_soft(ResolveContextModel(model, x, ctx, stats), x);
}

template <typename Derived>
VectorXd mmse_map(const MappingModel& model, Scheme scheme,
                  const Eigen::MatrixBase<Derived>& x, const PhoneContext& ctx,
                  MappingStats* stats = nullptr) {
  switch (scheme) {
    case Scheme::kSoft: return mmse_soft(model.global, x);
    case Scheme::kHard: return mmse_hard(model.global, x);
    case Scheme::kPhoneSoft: return mmse_pdsm(model, x);
    case Scheme::kPhoneHard: return mmse_pdhm(model, x, ctx, stats);
  }
  return mmse_soft(model.global, x);
}

namespace detail {

inline Eigen::Map<const VectorXd> AsVector(const LsfVector& v) {
  return Eigen::Map<const VectorXd>(v.values.data(), v.order());
}

inline LsfVector ToLsf(const VectorXd& y) {
  return stabilize_lsf(std::span<const double>(y.data(), y.size()));
}

}  // namespace detail

inline LsfVector map_soft(const JointGmm& model, const LsfVector& x) {
  return detail::ToLsf(mmse_soft(model, detail::AsVector(x)));
}

inline LsfVector map_hard(const JointGmm& model, const LsfVector& x) {
  return detail::ToLsf(mmse_hard(model, detail::AsVector(x)));
}

inline LsfVector map_pdsm(const MappingModel& model, const LsfVector& x) {
  return detail::ToLsf(mmse_pdsm(model, detail::AsVector(x)));
}

inline LsfVector map_pdhm(const MappingModel& model, const LsfVector& x,
                          const PhoneContext& ctx,
                          MappingStats* stats = nullptr) {
  return detail::ToLsf(mmse_pdhm(model, detail::AsVector(x), ctx, stats));
}

// Per-frame LPC -> LSF -> map -> stabilize -> LPC. Degenerate frames pass the
// zero predictor through; the TM residual gain is carried over unchanged.
// `tm_lsf` may be empty, in which case LSFs are computed here.
inline std::vector<LpcModel> estimate_envelope(
    const LpcAnalysis& tm, std::span<const LsfVector> tm_lsf,
    const MappingModel& model, Scheme scheme,
    std::span<const PhoneContext> contexts, std::uint64_t fingerprint,
    MappingStats* stats = nullptr) {
  if (model.meta.fingerprint != fingerprint) {
    throw Error(ErrorKind::kConfigMismatch,
                "model was trained with a different analysis configuration");
  }
  if (!tm_lsf.empty() && tm_lsf.size() != tm.size()) {
    throw Error(ErrorKind::kLengthMismatch, "LSF track length mismatch");
  }
  if (!contexts.empty() && contexts.size() != tm.size()) {
    throw Error(ErrorKind::kLengthMismatch, "context stream length mismatch");
  }
  std::vector<LpcModel> out;
  out.reserve(tm.size());
  const PhoneContext no_context{ContextSource::kGmmClassifier, std::nullopt};
  for (std::size_t k = 0; k < tm.size(); ++k) {
    const LpcModel& frame = tm.models[k];
    if (tm.degenerate[k]) {
      out.push_back(LpcModel::Zero(frame.order(), frame.residual_gain));
      continue;
    }
    const LsfVector x = tm_lsf.empty() ? lpc_to_lsf(frame) : tm_lsf[k];
    const auto& ctx = contexts.empty() ? no_context : contexts[k];
    const VectorXd y =
        mmse_map(model, scheme, detail::AsVector(x), ctx, stats);
    out.push_back(lsf_to_lpc(detail::ToLsf(y), frame.residual_gain));
  }
  return out;
}

}  // namespace tmenhance
