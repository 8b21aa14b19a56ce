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

// Joint Gaussian mixture over stacked [x; y] vectors with full covariances.
//
// Data matrices hold one observation per column (dim x N). Component
// densities are evaluated in the log domain through cached Cholesky factors
// of the full covariance (training) and of the x-block (mapping).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "tmenhance/error.hpp"
#include "tmenhance/parallel.hpp"

namespace tmenhance {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double LogSumExp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

struct Gaussian {
  Eigen::MatrixXd chol;  // lower factor
  double log_norm = 0.0;  // -0.5 (d log 2pi + log det C)

  static Gaussian Factor(const MatrixXd& cov) {
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::kNumericalFailure,
                  "covariance is not positive definite");
    }
    Gaussian g;
    g.chol = llt.matrixL();
    const double log_det = 2.0 * g.chol.diagonal().array().log().sum();
    g.log_norm = -0.5 * (cov.rows() * kLog2Pi + log_det);
    return g;
  }

  template <typename Derived>
  double LogDensity(const Eigen::MatrixBase<Derived>& centered) const {
    const VectorXd z =
        chol.triangularView<Eigen::Lower>().solve(centered.eval());
    return log_norm - 0.5 * z.squaredNorm();
  }
};

}  // namespace detail

class JointGmm {
 public:
  JointGmm() = default;

  JointGmm(int dim_x, int dim_y, std::vector<double> weights,
           std::vector<VectorXd> means, std::vector<MatrixXd> covariances)
      : dim_x_(dim_x),
        dim_y_(dim_y),
        weights_(std::move(weights)),
        means_(std::move(means)),
        covs_(std::move(covariances)) {
    const int d = dim_x_ + dim_y_;
    if (weights_.empty() || means_.size() != weights_.size() ||
        covs_.size() != weights_.size()) {
      throw Error(ErrorKind::kDimMismatch, "inconsistent mixture sizes");
    }
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (means_[l].size() != d || covs_[l].rows() != d ||
          covs_[l].cols() != d) {
        throw Error(ErrorKind::kDimMismatch,
                    "component " + std::to_string(l) + " has wrong dimension");
      }
      if (!(weights_[l] >= 0.0)) {
        throw Error(ErrorKind::kNumericalFailure, "negative mixture weight");
      }
    }
    Prepare();
  }

  int dim_x() const { return dim_x_; }
  int dim_y() const { return dim_y_; }
  int dim() const { return dim_x_ + dim_y_; }
  int size() const { return static_cast<int>(weights_.size()); }
  bool empty() const { return weights_.empty(); }

  const std::vector<double>& weights() const { return weights_; }
  const VectorXd& mean(int l) const { return means_[l]; }
  const MatrixXd& covariance(int l) const { return covs_[l]; }
  auto mean_x(int l) const { return means_[l].head(dim_x_); }
  auto mean_y(int l) const { return means_[l].tail(dim_y_); }
  auto cov_xx(int l) const { return covs_[l].topLeftCorner(dim_x_, dim_x_); }
  auto cov_yx(int l) const {
    return covs_[l].bottomLeftCorner(dim_y_, dim_x_);
  }

  // log N([x; y]; mu_l, C_l)
  double LogJointDensity(int l, const VectorXd& v) const {
    return full_[l].LogDensity(v - means_[l]);
  }

  // log N(x; mu_x,l, C_xx,l)
  template <typename Derived>
  double LogMarginalDensity(int l, const Eigen::MatrixBase<Derived>& x) const {
    return marginal_[l].LogDensity(x - means_[l].head(dim_x_));
  }

  // mu_y,l + C_yx,l C_xx,l^-1 (x - mu_x,l)
  template <typename Derived>
  VectorXd Regress(int l, const Eigen::MatrixBase<Derived>& x) const {
    return means_[l].tail(dim_y_) + regression_[l] * (x - mean_x(l));
  }

  const MatrixXd& regression_matrix(int l) const { return regression_[l]; }
  const detail::Gaussian& joint_factor(int l) const { return full_[l]; }

  friend bool operator==(const JointGmm& a, const JointGmm& b) {
    if (a.dim_x_ != b.dim_x_ || a.dim_y_ != b.dim_y_ ||
        a.weights_ != b.weights_) {
      return false;
    }
    for (std::size_t l = 0; l < a.weights_.size(); ++l) {
      if (a.means_[l] != b.means_[l] || a.covs_[l] != b.covs_[l]) return false;
    }
    return true;
  }

 private:
  void Prepare() {
    full_.clear();
    marginal_.clear();
    regression_.clear();
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      full_.push_back(detail::Gaussian::Factor(covs_[l]));
      const MatrixXd cxx = covs_[l].topLeftCorner(dim_x_, dim_x_);
      marginal_.push_back(detail::Gaussian::Factor(cxx));
      Eigen::LLT<MatrixXd> llt(cxx);
      // B = C_yx C_xx^-1  <=>  C_xx B^T = C_xy
      const MatrixXd cxy = covs_[l].topRightCorner(dim_x_, dim_y_);
      regression_.push_back(llt.solve(cxy).transpose());
    }
  }

  int dim_x_ = 0;
  int dim_y_ = 0;
  std::vector<double> weights_;
  std::vector<VectorXd> means_;
  std::vector<MatrixXd> covs_;
  std::vector<detail::Gaussian> full_;
  std::vector<detail::Gaussian> marginal_;
  std::vector<MatrixXd> regression_;
};

// p(gamma_l | x) over the x-marginals, weights included, computed with
// max-subtraction. Frames where every component underflows get 1/L.
template <typename Derived>
std::vector<double> posterior(const JointGmm& model,
                              const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != model.dim_x()) {
    throw Error(ErrorKind::kDimMismatch,
                "observable has " + std::to_string(x.size()) +
                    " dims, model expects " + std::to_string(model.dim_x()));
  }
  const int L = model.size();
  std::vector<double> logp(L);
  for (int l = 0; l < L; ++l) {
    logp[l] = std::log(model.weights()[l]) + model.LogMarginalDensity(l, x);
  }
  const double lse = detail::LogSumExp(logp);
  std::vector<double> post(L, 1.0 / L);
  if (!std::isfinite(lse)) return post;
  double total = 0.0;
  for (int l = 0; l < L; ++l) {
    post[l] = std::exp(logp[l] - lse);
    total += post[l];
  }
  for (double& p : post) p /= total;
  return post;
}

inline std::vector<double> posterior(const JointGmm& model,
                                     std::span<const double> x) {
  return posterior(model, Eigen::Map<const VectorXd>(x.data(), x.size()));
}

// argmax over classes of the best single-component x-marginal likelihood.
template <typename Derived>
std::size_t classify(std::span<const JointGmm* const> bank,
                     const Eigen::MatrixBase<Derived>& x) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < bank.size(); ++c) {
    for (int l = 0; l < bank[c]->size(); ++l) {
      const double s = bank[c]->LogMarginalDensity(l, x);
      if (s > best_score) {
        best_score = s;
        best = c;
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Training

struct SufficientStats {
  VectorXd resp;               // per-mixture responsibility sums
  MatrixXd first;              // dim x L weighted first moments
  std::vector<MatrixXd> second;  // weighted second moments
  double log_likelihood = 0.0;
  std::size_t frames = 0;

  SufficientStats(int dim, int mixtures)
      : resp(VectorXd::Zero(mixtures)),
        first(MatrixXd::Zero(dim, mixtures)),
        second(mixtures, MatrixXd::Zero(dim, dim)) {}

  void Merge(const SufficientStats& other) {
    resp += other.resp;
    first += other.first;
    for (std::size_t l = 0; l < second.size(); ++l) second[l] += other.second[l];
    log_likelihood += other.log_likelihood;
    frames += other.frames;
  }
};

struct EmOptions {
  int max_iter = 50;
  double tol = 1e-5;
  double floor_scale = 1e-6;
  int workers = 1;
};

struct EmResult {
  JointGmm model;
  // Average log-likelihood of the initial model and after every M-step; the
  // last entry belongs to the returned model.
  std::vector<double> log_likelihood;
  int reseeded = 0;
};

namespace detail {

inline constexpr int kChunkColumns = 1024;
// Responsibilities below this do not contribute to second moments.
inline constexpr double kSecondMomentCutoff = 1e-10;

inline VectorXd FeatureVariance(const MatrixXd& data) {
  const VectorXd mean = data.rowwise().mean();
  return (data.colwise() - mean).array().square().rowwise().mean();
}

inline VectorXd VarianceFloor(const MatrixXd& data, double scale) {
  return (FeatureVariance(data) * scale).array() + 1e-12;
}

inline SufficientStats Accumulate(const JointGmm& model, const MatrixXd& data,
                                  Eigen::Index begin, Eigen::Index end) {
  const int L = model.size();
  const int d = model.dim();
  const Eigen::Index n = end - begin;
  const auto block = data.middleCols(begin, n);
  MatrixXd logp(L, n);
  for (int l = 0; l < L; ++l) {
    const auto& g = model.joint_factor(l);
    MatrixXd centered = block.colwise() - model.mean(l);
    g.chol.triangularView<Eigen::Lower>().solveInPlace(centered);
    logp.row(l) = (g.log_norm + std::log(model.weights()[l]) -
                   0.5 * centered.colwise().squaredNorm().array())
                      .matrix();
  }
  SufficientStats stats(d, L);
  stats.frames = static_cast<std::size_t>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = logp.col(i).maxCoeff();
    const double lse = m + std::log((logp.col(i).array() - m).exp().sum());
    if (!std::isfinite(lse)) {
      throw Error(ErrorKind::kNumericalFailure, "non-finite log-likelihood");
    }
    stats.log_likelihood += lse;
    logp.col(i) = (logp.col(i).array() - lse).exp().matrix();
  }
  stats.resp = logp.rowwise().sum();
  stats.first = block * logp.transpose();
  for (int l = 0; l < L; ++l) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (logp(l, i) > kSecondMomentCutoff) keep.push_back(i);
    }
    if (keep.empty()) continue;
    MatrixXd weighted(d, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      weighted.col(j) = block.col(keep[j]) * std::sqrt(logp(l, keep[j]));
    }
    stats.second[l].selfadjointView<Eigen::Lower>().rankUpdate(weighted);
  }
  for (int l = 0; l < L; ++l) {
    stats.second[l] = stats.second[l].selfadjointView<Eigen::Lower>();
  }
  return stats;
}

// E-step over fixed column chunks merged in order, so the result does not
// depend on the worker count.
inline SufficientStats Expectation(const JointGmm& model, const MatrixXd& data,
                                   int workers) {
  const Eigen::Index n = data.cols();
  const std::size_t chunks = (n + kChunkColumns - 1) / kChunkColumns;
  std::vector<SufficientStats> parts(chunks,
                                     SufficientStats(model.dim(), model.size()));
  ParallelFor(chunks, workers, [&](std::size_t c) {
    const Eigen::Index b = static_cast<Eigen::Index>(c) * kChunkColumns;
    parts[c] = Accumulate(model, data, b, std::min(n, b + kChunkColumns));
  });
  SufficientStats total(model.dim(), model.size());
  for (const auto& p : parts) total.Merge(p);
  return total;
}

}  // namespace detail

namespace detail {

inline JointGmm Maximize(const SufficientStats& stats, const JointGmm& prev,
                         const VectorXd& floor, int* reseeded) {
  const int L = prev.size();
  const double N = static_cast<double>(stats.frames);
  std::vector<double> weights(L);
  std::vector<VectorXd> means(L);
  std::vector<MatrixXd> covs(L);
  std::vector<int> starved;
  for (int l = 0; l < L; ++l) {
    weights[l] = stats.resp[l] / N;
    if (weights[l] < 1e-6 / L || stats.resp[l] <= 0.0) {
      starved.push_back(l);
      means[l] = prev.mean(l);
      covs[l] = prev.covariance(l);
      continue;
    }
    means[l] = stats.first.col(l) / stats.resp[l];
    covs[l] = stats.second[l] / stats.resp[l] - means[l] * means[l].transpose();
    covs[l] = 0.5 * (covs[l] + covs[l].transpose());
    covs[l].diagonal() += floor;
  }
  // Starved mixtures are re-seeded by splitting the heaviest one.
  for (int l : starved) {
    const int h = static_cast<int>(
        std::max_element(weights.begin(), weights.end()) - weights.begin());
    const VectorXd delta =
        1e-3 * covs[h].diagonal().cwiseMax(0.0).cwiseSqrt();
    weights[h] *= 0.5;
    weights[l] = weights[h];
    means[l] = means[h] - delta;
    means[h] += delta;
    covs[l] = covs[h];
    if (reseeded) ++*reseeded;
  }
  double total = 0.0;
  for (double w : weights) total += w;
  for (double& w : weights) w /= total;
  return JointGmm(prev.dim_x(), prev.dim_y(), std::move(weights),
                  std::move(means), std::move(covs));
}

inline JointGmm Translate(const JointGmm& model, const VectorXd& offset) {
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covs;
  for (int l = 0; l < model.size(); ++l) {
    means.push_back(model.mean(l) + offset);
    covs.push_back(model.covariance(l));
  }
  return JointGmm(model.dim_x(), model.dim_y(), model.weights(),
                  std::move(means), std::move(covs));
}

}  // namespace detail

inline EmResult em_train(const JointGmm& init, const MatrixXd& data,
                         const EmOptions& options = {}) {
  if (data.rows() != init.dim()) {
    throw Error(ErrorKind::kDimMismatch, "training data dimension mismatch");
  }
  if (data.cols() == 0) {
    throw Error(ErrorKind::kInsufficientData, "no training vectors");
  }
  // Work on centered data to keep the second-moment subtraction accurate.
  const VectorXd center = data.rowwise().mean();
  const MatrixXd centered = data.colwise() - center;
  const VectorXd floor = detail::VarianceFloor(centered, options.floor_scale);

  EmResult result;
  JointGmm model = detail::Translate(init, -center);
  const double n = static_cast<double>(data.cols());
  for (int iter = 0;; ++iter) {
    const auto stats = detail::Expectation(model, centered, options.workers);
    const double ll = stats.log_likelihood / n;
    if (!std::isfinite(ll)) {
      throw Error(ErrorKind::kNumericalFailure, "non-finite log-likelihood");
    }
    result.log_likelihood.push_back(ll);
    const std::size_t t = result.log_likelihood.size();
    if (t >= 2) {
      const double prev = result.log_likelihood[t - 2];
      if (std::abs(ll - prev) < options.tol * std::abs(prev)) break;
    }
    if (iter >= options.max_iter) break;
    model = detail::Maximize(stats, model, floor, &result.reseeded);
  }
  result.model = detail::Translate(model, center);
  return result;
}

// LBG binary splitting from the global mean with Lloyd refinement, followed
// by per-cluster weights and floored sample covariances.
inline JointGmm vq_initialize(const MatrixXd& data, int dim_x, int mixtures,
                              std::uint64_t seed, double floor_scale = 1e-6,
                              int lloyd_iterations = 20) {
  const Eigen::Index n = data.cols();
  const int d = static_cast<int>(data.rows());
  if (mixtures < 1 || dim_x < 1 || dim_x >= d) {
    throw Error(ErrorKind::kDimMismatch, "bad mixture count or split");
  }
  if (n < 2 * static_cast<Eigen::Index>(mixtures)) {
    throw Error(ErrorKind::kInsufficientData,
                std::to_string(n) + " vectors for " + std::to_string(mixtures) +
                    " mixtures (need at least " +
                    std::to_string(2 * mixtures) + ")");
  }
  std::mt19937_64 rng(seed);
  const VectorXd center = data.rowwise().mean();
  const MatrixXd x = data.colwise() - center;
  const VectorXd var = detail::FeatureVariance(x);
  const VectorXd stddev = var.cwiseSqrt();
  const VectorXd floor = (var * floor_scale).array() + 1e-12;
  const VectorXd sq_norms = x.colwise().squaredNorm().transpose();

  MatrixXd centroids = MatrixXd::Zero(d, 1);
  std::vector<int> assign(n, 0);
  std::vector<double> dist(n, 0.0);

  auto assign_all = [&] {
    const MatrixXd cross = centroids.transpose() * x;  // K x n
    const VectorXd c_norms = centroids.colwise().squaredNorm().transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < centroids.cols(); ++k) {
        const double dd = sq_norms[i] - 2.0 * cross(k, i) + c_norms[k];
        if (dd < best_d) {
          best_d = dd;
          best = static_cast<int>(k);
        }
      }
      assign[i] = best;
      dist[i] = std::max(best_d, 0.0);
    }
  };

  auto update = [&] {
    const Eigen::Index K = centroids.cols();
    MatrixXd sums = MatrixXd::Zero(d, K);
    std::vector<Eigen::Index> counts(K, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(assign[i]) += x.col(i);
      ++counts[assign[i]];
    }
    for (Eigen::Index k = 0; k < K; ++k) {
      if (counts[k] > 0) {
        centroids.col(k) = sums.col(k) / static_cast<double>(counts[k]);
        continue;
      }
      // Empty cell: move it onto a random member of the largest cell.
      const Eigen::Index big = static_cast<Eigen::Index>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::vector<Eigen::Index> members;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (assign[i] == big) members.push_back(i);
      }
      const Eigen::Index pick = members[rng() % members.size()];
      centroids.col(k) = x.col(pick);
      assign[pick] = static_cast<int>(k);
      --counts[big];
      counts[k] = 1;
    }
  };

  while (centroids.cols() < mixtures) {
    const Eigen::Index K = centroids.cols();
    const Eigen::Index splits = std::min<Eigen::Index>(K, mixtures - K);
    // Split the cells with the largest distortion first.
    std::vector<double> distortion(K, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) distortion[assign[i]] += dist[i];
    std::vector<Eigen::Index> order(K);
    for (Eigen::Index k = 0; k < K; ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return distortion[a] > distortion[b];
    });
    MatrixXd next(d, K + splits);
    next.leftCols(K) = centroids;
    for (Eigen::Index s = 0; s < splits; ++s) {
      VectorXd eps(d);
      for (int j = 0; j < d; ++j) {
        eps[j] = ((rng() >> 63) ? 1e-3 : -1e-3) * stddev[j];
      }
      const Eigen::Index k = order[s];
      next.col(K + s) = centroids.col(k) - eps;
      next.col(k) = centroids.col(k) + eps;
    }
    centroids = std::move(next);
    for (int it = 0; it < lloyd_iterations; ++it) {
      assign_all();
      update();
    }
  }
  assign_all();

  std::vector<double> weights(mixtures, 0.0);
  std::vector<VectorXd> means(mixtures, VectorXd::Zero(d));
  std::vector<MatrixXd> covs(mixtures, MatrixXd::Zero(d, d));
  for (Eigen::Index i = 0; i < n; ++i) {
    weights[assign[i]] += 1.0;
    means[assign[i]] += x.col(i);
  }
  for (int k = 0; k < mixtures; ++k) {
    if (weights[k] > 0.0) means[k] /= weights[k];
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXd c = x.col(i) - means[assign[i]];
    covs[assign[i]].selfadjointView<Eigen::Lower>().rankUpdate(c);
  }
  for (int k = 0; k < mixtures; ++k) {
    if (weights[k] > 0.0) covs[k] /= weights[k];
    covs[k] = covs[k].selfadjointView<Eigen::Lower>();
    covs[k].diagonal() += floor;
    if (weights[k] == 0.0) covs[k].diagonal() += var;
    weights[k] /= static_cast<double>(n);
    means[k] += center;
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (total <= 0.0) {
    throw Error(ErrorKind::kNumericalFailure, "empty VQ codebook");
  }
  for (double& w : weights) w /= total;
  return JointGmm(dim_x, d - dim_x, std::move(weights), std::move(means),
                  std::move(covs));
}

}  // namespace tmenhance
