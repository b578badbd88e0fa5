#pragma once

// Analytic baseline, detection statistics and measurement utilities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "grassopt/grassmann.hpp"
#include "grassopt/objective.hpp"

namespace grassopt {

struct FkSolution {
  GrassmannPoint t_star;
  Vector gen_eigs;  // selected generalized eigenvalues, in selection order
  double j_closed_form = 0.0;
};

namespace detail {

/// Indices sorted by decreasing lambda + 1/lambda, ties to the larger lambda.
inline std::vector<Index> discriminative_order(const Vector& lambdas) {
  std::vector<Index> idx(static_cast<std::size_t>(lambdas.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    const double sa = lambdas(a) + 1.0 / lambdas(a);
    const double sb = lambdas(b) + 1.0 / lambdas(b);
    if (sa != sb) return sa > sb;
    return lambdas(a) > lambdas(b);
  });
  return idx;
}

}  // namespace detail

/// Fukunaga-Koontz optimum of J for s = 0: solve K1 w = lambda K2 w and keep
/// the p eigenvectors with the largest lambda + 1/lambda. On that span the
/// channel covariances are simultaneously diagonal, so
///   J = sum_j (lambda_j + 1/lambda_j) - 2p.
inline FkSolution fukunaga_koontz(const ClassStats& stats, Index p) {
  if (!stats.s().isZero(0.0)) {
    throw ContractViolation("fukunaga_koontz: no analytic optimum when the mean difference is nonzero");
  }
  const Index n = stats.n();
  if (p < 1 || p >= n) throw DimensionError("fukunaga_koontz needs 1 <= p < n");
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(stats.k1(), stats.k2(),
                                                       Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (ges.info() != Eigen::Success) throw NumericalError("fukunaga_koontz: generalized eigensolver failed");
  const Vector& lambdas = ges.eigenvalues();
  if (lambdas.minCoeff() <= 0) throw NumericalError("fukunaga_koontz: non-positive generalized eigenvalue");
  const auto order = detail::discriminative_order(lambdas);

  Matrix w(n, p);
  Vector chosen(p);
  double j = 0.0;
  for (Index c = 0; c < p; ++c) {
    const Index i = order[static_cast<std::size_t>(c)];
    w.col(c) = ges.eigenvectors().col(i);
    chosen(c) = lambdas(i);
    j += lambdas(i) + 1.0 / lambdas(i);
  }
  j -= 2.0 * static_cast<double>(p);
  return FkSolution{GrassmannPoint::orthonormalize(w), chosen, j};
}

/// Quadratic log-likelihood ratio (twice the Gaussian log ratio):
///   (v - m2)^T C2^-1 (v - m2) - (v - m1)^T C1^-1 (v - m1) + ln det C2 - ln det C1.
/// Larger values favour class 1.
inline double log_likelihood_ratio(const ChannelizedStats& ch, const Vector& m1, const Vector& m2,
                                   const Vector& v) {
  const Index p = ch.p();
  if (m1.size() != p || m2.size() != p || v.size() != p) {
    throw DimensionError("log_likelihood_ratio: vector length does not match channel count");
  }
  const Vector d1 = v - m1;
  const Vector d2 = v - m2;
  const double q1 = d1.dot(ch.llt1.solve(d1));
  const double q2 = d2.dot(ch.llt2.solve(d2));
  const double logdet1 = 2.0 * ch.llt1.matrixLLT().diagonal().array().log().sum();
  const double logdet2 = 2.0 * ch.llt2.matrixLLT().diagonal().array().log().sum();
  return q2 - q1 + logdet2 - logdet1;
}

/// Scores for every row of `channel_data` (N x p).
inline std::vector<double> llr_scores(const ChannelizedStats& ch, const Vector& m1, const Vector& m2,
                                      const Matrix& channel_data) {
  if (channel_data.cols() != ch.p()) throw DimensionError("llr_scores: channel count mismatch");
  const double logdet1 = 2.0 * ch.llt1.matrixLLT().diagonal().array().log().sum();
  const double logdet2 = 2.0 * ch.llt2.matrixLLT().diagonal().array().log().sum();
  const Matrix d1 = (channel_data.rowwise() - m1.transpose()).transpose();
  const Matrix d2 = (channel_data.rowwise() - m2.transpose()).transpose();
  const Matrix s1 = ch.llt1.solve(d1);
  const Matrix s2 = ch.llt2.solve(d2);
  std::vector<double> out(static_cast<std::size_t>(channel_data.rows()));
  for (Index i = 0; i < channel_data.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = d2.col(i).dot(s2.col(i)) - d1.col(i).dot(s1.col(i)) + logdet2 - logdet1;
  }
  return out;
}

struct RocResult {
  double auc = 0.5;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Mann-Whitney AUC: P(score1 > score2) + P(tie) / 2, counted exactly in
/// integers after sorting the class-2 scores.
inline RocResult auc(std::span<const double> class1, std::span<const double> class2) {
  if (class1.empty() || class2.empty()) throw ContractViolation("auc: both score sets must be nonempty");
  std::vector<double> neg(class2.begin(), class2.end());
  std::sort(neg.begin(), neg.end());
  std::uint64_t twice_wins = 0;  // 2 * wins + ties
  for (double s : class1) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), s);
    const auto hi = std::upper_bound(lo, neg.end(), s);
    twice_wins += 2 * static_cast<std::uint64_t>(lo - neg.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  const double pairs = static_cast<double>(class1.size()) * static_cast<double>(class2.size());
  return RocResult{static_cast<double>(twice_wins) / (2.0 * pairs), class1.size(), class2.size()};
}

/// Least-squares slope of log(value) against log(k) over k_min <= k <= k_max.
inline double rate_fit(std::span<const double> ks, std::span<const double> values, double k_min, double k_max) {
  if (ks.size() != values.size()) throw DimensionError("rate_fit: series length mismatch");
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < k_min || ks[i] > k_max) continue;
    if (!(values[i] > 0) || !(ks[i] > 0)) throw ContractViolation("rate_fit: values and k must be positive");
    lx.push_back(std::log(ks[i]));
    ly.push_back(std::log(values[i]));
  }
  if (lx.size() < 10) throw ContractViolation("rate_fit: need at least 10 points in range");
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0;
  double sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

/// Largest |analytic - numeric| / (1 + |numeric|) over m random unit tangent
/// directions, comparing <P(grad f), v> with the central difference
/// (f(Exp(x, h v)) - f(Exp(x, -h v))) / (2h).
template <class Rng>
double fd_gradient_check(const Objective& objective, const GrassmannPoint& x, int m, double h, Rng& rng) {
  if (!(h > 0)) throw ContractViolation("fd_gradient_check: h must be > 0");
  if (m < 1) throw ContractViolation("fd_gradient_check: need at least one direction");
  const TangentVector g = project_tangent(x, objective.gradient(x));
  double worst = 0.0;
  for (int i = 0; i < m; ++i) {
    const TangentVector v = random_unit_tangent(x, rng);
    const double analytic = inner(x, g, v);
    const double numeric = (objective.value(exp_map(x, v, h)) - objective.value(exp_map(x, v, -h))) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic - numeric) / (1.0 + std::abs(numeric)));
  }
  return worst;
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ContractViolation("spearman: need two equal-length series");
  auto ranks = [](std::span<const double> xs) {
    std::vector<std::size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return xs[i] < xs[j]; });
    std::vector<double> r(xs.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Eigenvectors w of the channel ratio problem C1 w = lambda C2 w at `reference`,
/// ordered by decreasing lambda + 1/lambda and mapped to pixel space through
/// `through` (basis * w). Used for visual inspection of learned subspaces.
inline Matrix backproject_ratio_eigenvectors(const ClassStats& stats, const GrassmannPoint& reference,
                                             const GrassmannPoint& through, Index count) {
  if (reference.p() != through.p() || reference.n() != through.n()) {
    throw DimensionError("backprojection: points differ in shape");
  }
  const ChannelizedStats ch = channelize(stats, reference);
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(ch.c1, ch.c2, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (ges.info() != Eigen::Success) throw NumericalError("backprojection: eigensolver failed");
  const auto order = detail::discriminative_order(ges.eigenvalues());
  count = std::min(count, reference.p());
  Matrix out(reference.n(), count);
  for (Index c = 0; c < count; ++c) {
    out.col(c) = through.basis() * ges.eigenvectors().col(order[static_cast<std::size_t>(c)]);
  }
  return out;
}

}  // namespace grassopt
