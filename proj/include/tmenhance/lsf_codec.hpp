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

// LPC <-> line spectral frequency conversion.
//
// With A(z) = 1 - sum a_k z^-k of order p,
//   P(z) = A(z) - z^-(p+1) A(1/z)   (antisymmetric)
//   Q(z) = A(z) + z^-(p+1) A(1/z)   (symmetric)
// have all roots on the unit circle for minimum-phase A, interleaved in
// angle. The p nontrivial angles in (0, pi) are the LSFs. On the unit circle
// both reduce to real trigonometric sums (the real and imaginary parts of a
// linear-phase-rotated A), so roots are located by sign changes on a uniform
// grid and refined by bisection.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tmenhance/error.hpp"
#include "tmenhance/signal_core.hpp"

namespace tmenhance {

inline constexpr double kLsfMinGap = 1e-4;

struct LsfVector {
  std::vector<double> values;

  int order() const { return static_cast<int>(values.size()); }
  friend bool operator==(const LsfVector&, const LsfVector&) = default;
};

namespace detail {

// e^{j w (p+1)/2} A(e^{jw}). Its real part is Q(e^{jw}) / 2 and its imaginary
// part is P(e^{jw}) / 2j, both up to the common linear-phase factor.
inline std::complex<double> RotatedResponse(std::span<const double> a,
                                            double w) {
  const std::complex<double> z_inv = std::polar(1.0, -w);
  std::complex<double> acc = 0.0;
  for (std::size_t k = a.size(); k-- > 0;) acc = acc * z_inv + a[k];
  return acc * std::polar(1.0, w * static_cast<double>(a.size()) / 2.0);
}

template <typename F>
double Bisect(F&& f, double a, double b, double fa) {
  for (int it = 0; it < 200 && b - a > 1e-15; ++it) {
    const double mid = 0.5 * (a + b);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (fa < 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

// Nontrivial roots of Re and Im of the rotated response on a uniform grid
// over (0, pi), refined by bisection.
inline std::vector<double> LsfRootsOnGrid(std::span<const double> a,
                                          int grid) {
  auto re = [&](double w) { return RotatedResponse(a, w).real(); };
  auto im = [&](double w) { return RotatedResponse(a, w).imag(); };
  std::vector<double> roots;
  const double step = std::numbers::pi / grid;
  // Nudge the end points off the trivial roots at 0 and pi.
  double lo = step * 1e-3;
  auto flo = RotatedResponse(a, lo);
  for (int i = 1; i <= grid; ++i) {
    const double hi = (i == grid) ? std::numbers::pi - step * 1e-3 : step * i;
    const auto fhi = RotatedResponse(a, hi);
    if ((flo.real() < 0.0) != (fhi.real() < 0.0)) {
      roots.push_back(Bisect(re, lo, hi, flo.real()));
    }
    if ((flo.imag() < 0.0) != (fhi.imag() < 0.0)) {
      roots.push_back(Bisect(im, lo, hi, flo.imag()));
    }
    lo = hi;
    flo = fhi;
  }
  return roots;
}

}  // namespace detail

inline LsfVector lpc_to_lsf(const LpcModel& model) {
  if (!IsStable(model)) {
    throw Error(ErrorKind::kUnstableFilter, "lpc_to_lsf needs a stable model");
  }
  const int p = model.order();
  // A(z) = 1 + sum a_k z^-k
  std::vector<double> a(p + 1, 0.0);
  a[0] = 1.0;
  for (int k = 1; k <= p; ++k) a[k] = -model.coeffs[k - 1];

  // Closely spaced roots can share a grid cell; refine the grid until the
  // expected count appears.
  for (int grid = 4096; grid <= (1 << 20); grid *= 4) {
    auto roots = detail::LsfRootsOnGrid(a, grid);
    if (static_cast<int>(roots.size()) == p) {
      std::sort(roots.begin(), roots.end());
      return LsfVector{std::move(roots)};
    }
  }
  throw Error(ErrorKind::kRootCountError,
              "could not isolate " + std::to_string(p) + " LSF roots");
}

namespace detail {

// Multiplies poly by (1 - 2 cos(w) z^-1 + z^-2).
inline void MultiplyConjugatePair(std::vector<double>& poly, double w) {
  const double c = -2.0 * std::cos(w);
  std::vector<double> out(poly.size() + 2, 0.0);
  for (std::size_t i = 0; i < poly.size(); ++i) {
    out[i] += poly[i];
    out[i + 1] += c * poly[i];
    out[i + 2] += poly[i];
  }
  poly = std::move(out);
}

inline void MultiplyLinear(std::vector<double>& poly, double root_sign) {
  // (1 - root_sign z^-1)
  std::vector<double> out(poly.size() + 1, 0.0);
  for (std::size_t i = 0; i < poly.size(); ++i) {
    out[i] += poly[i];
    out[i + 1] -= root_sign * poly[i];
  }
  poly = std::move(out);
}

}  // namespace detail

inline LpcModel lsf_to_lpc(const LsfVector& lsf, double residual_gain = 0.0) {
  const int p = lsf.order();
  for (int i = 0; i < p; ++i) {
    const double w = lsf.values[i];
    if (!(w > 0.0 && w < std::numbers::pi) ||
        (i > 0 && !(w > lsf.values[i - 1]))) {
      throw Error(ErrorKind::kNotOrdered,
                  "LSFs must be strictly increasing in (0, pi)");
    }
  }
  // Sorted LSFs alternate Q, P, Q, ... starting with a Q root.
  std::vector<double> pp{1.0}, qq{1.0};
  for (int i = 0; i < p; ++i) {
    detail::MultiplyConjugatePair(i % 2 == 0 ? qq : pp, lsf.values[i]);
  }
  if (p % 2 == 0) {
    detail::MultiplyLinear(pp, 1.0);    // root at z = 1
    detail::MultiplyLinear(qq, -1.0);   // root at z = -1
  } else {
    detail::MultiplyLinear(pp, 1.0);
    detail::MultiplyLinear(pp, -1.0);
  }
  LpcModel out = LpcModel::Zero(p, residual_gain);
  for (int k = 1; k <= p; ++k) {
    out.coeffs[k - 1] = -0.5 * (pp[k] + qq[k]);
  }
  return out;
}

// Clamp, sort and enforce a minimum adjacent gap. Idempotent.
inline LsfVector stabilize_lsf(std::span<const double> raw,
                               double min_gap = kLsfMinGap) {
  const double lo = min_gap;
  const double hi = std::numbers::pi - min_gap;
  std::vector<double> v(raw.begin(), raw.end());
  for (double& x : v) {
    if (!std::isfinite(x)) x = lo;
    x = std::clamp(x, lo, hi);
  }
  std::sort(v.begin(), v.end());
  for (std::size_t i = 1; i < v.size(); ++i) {
    v[i] = std::max(v[i], v[i - 1] + min_gap);
  }
  if (!v.empty() && v.back() > hi) {
    v.back() = hi;
    for (std::size_t i = v.size() - 1; i-- > 0;) {
      v[i] = std::min(v[i], v[i + 1] - min_gap);
    }
  }
  return LsfVector{std::move(v)};
}

// LSFs of the zero predictor: k*pi/(p+1).
inline LsfVector UniformLsf(int order) {
  LsfVector out;
  out.values.resize(order);
  for (int k = 1; k <= order; ++k) {
    out.values[k - 1] = k * std::numbers::pi / (order + 1);
  }
  return out;
}

}  // namespace tmenhance
