#pragma once

// Jeffrey's divergence between two channelized Gaussian classes, its
// Euclidean gradient with respect to the basis, and a Rayleigh-quotient toy
// objective whose smoothness constant is known.

#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "grassopt/grassmann.hpp"

namespace grassopt {

inline constexpr double kSymmetryTol = 1e-10;

/// Class statistics K1, K2 (n x n) and mean difference s. Shared, immutable.
class ClassStats {
 public:
  /// Full validation: square, matching shapes, symmetric, positive definite.
  static ClassStats make(Matrix k1, Matrix k2, Vector s) {
    ClassStats out = symmetric_only(std::move(k1), std::move(k2), std::move(s));
    check_pd(out.k1(), "K1");
    check_pd(out.k2(), "K2");
    return out;
  }

  /// Skips the definiteness check. Perturbed covariances may be indefinite;
  /// only their channelized blocks need to factorize.
  static ClassStats symmetric_only(Matrix k1, Matrix k2, Vector s) {
    const Index n = k1.rows();
    detail::require_shape(k1, n, n, "K1");
    detail::require_shape(k2, n, n, "K2");
    if (s.size() != n) throw DimensionError("mean difference length does not match K");
    check_symmetric(k1, "K1");
    check_symmetric(k2, "K2");
    auto d = std::make_shared<Data>(Data{std::move(k1), std::move(k2), std::move(s)});
    return ClassStats(std::move(d));
  }

  const Matrix& k1() const { return data_->k1; }
  const Matrix& k2() const { return data_->k2; }
  const Vector& s() const { return data_->s; }
  Index n() const { return data_->k1.rows(); }

  ClassStats swapped() const { return symmetric_only(k2(), k1(), s()); }

 private:
  struct Data {
    Matrix k1;
    Matrix k2;
    Vector s;
  };

  explicit ClassStats(std::shared_ptr<const Data> d) : data_(std::move(d)) {}

  static void check_symmetric(const Matrix& k, const char* name) {
    const double asym = (k - k.transpose()).norm();
    if (!(asym <= kSymmetryTol)) {
      std::ostringstream os;
      os << name << " is not symmetric (||K - K^T||_F = " << asym << ")";
      throw ContractViolation(os.str());
    }
  }

  static void check_pd(const Matrix& k, const char* name) {
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) {
      throw CovarianceFactorError(std::string(name) + " is not positive definite");
    }
  }

  std::shared_ptr<const Data> data_;
};

/// p x p channel covariances C_i = X^T K_i X, channel mean difference X^T s,
/// and their Cholesky factors.
struct ChannelizedStats {
  Matrix c1;
  Matrix c2;
  Vector ts;
  Eigen::LLT<Matrix> llt1;
  Eigen::LLT<Matrix> llt2;

  Index p() const { return c1.rows(); }
};

struct ObjectiveConfig {
  /// Constant subtracted twice from the divergence; unset means p, which
  /// makes J vanish for identical classes.
  std::optional<double> dim_offset;

  double offset_for(Index p) const { return dim_offset.value_or(static_cast<double>(p)); }
};

namespace detail {

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline Eigen::LLT<Matrix> channel_factor(const Matrix& c, const char* name) {
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success) {
    throw SingularChannelError(std::string("channelized covariance ") + name +
                               " is not positive definite");
  }
  return llt;
}

}  // namespace detail

/// Channelization through an arbitrary full-rank n x p matrix (columns are
/// channels). Only the invariance checks use non-orthonormal inputs.
inline ChannelizedStats channelize(const ClassStats& stats, const Matrix& channels) {
  detail::require_shape(channels, stats.n(), channels.cols(), "channelize");
  ChannelizedStats ch;
  ch.c1 = detail::symmetrized(channels.transpose() * stats.k1() * channels);
  ch.c2 = detail::symmetrized(channels.transpose() * stats.k2() * channels);
  ch.ts = channels.transpose() * stats.s();
  ch.llt1 = detail::channel_factor(ch.c1, "C1");
  ch.llt2 = detail::channel_factor(ch.c2, "C2");
  return ch;
}

inline ChannelizedStats channelize(const ClassStats& stats, const GrassmannPoint& x) {
  if (x.n() != stats.n()) throw DimensionError("channelize: point and statistics disagree on n");
  return channelize(stats, x.basis());
}

/// J = -2 L + tr(C2^-1 C1) + ts^T C2^-1 ts + tr(C1^-1 C2) + ts^T C1^-1 ts.
inline double jeffreys(const ChannelizedStats& ch, double dim_offset) {
  const double tr21 = ch.llt2.solve(ch.c1).trace();
  const double tr12 = ch.llt1.solve(ch.c2).trace();
  const double q2 = ch.ts.dot(ch.llt2.solve(ch.ts));
  const double q1 = ch.ts.dot(ch.llt1.solve(ch.ts));
  return -2.0 * dim_offset + tr21 + q2 + tr12 + q1;
}

inline double jeffreys(const ClassStats& stats, const GrassmannPoint& x,
                       const ObjectiveConfig& cfg = {}) {
  return jeffreys(channelize(stats, x), cfg.offset_for(x.p()));
}

/// J evaluated on raw channels (any full-rank n x p matrix).
inline double jeffreys(const ClassStats& stats, const Matrix& channels,
                       const ObjectiveConfig& cfg = {}) {
  return jeffreys(channelize(stats, channels), cfg.offset_for(channels.cols()));
}

/// dJ/dX for the n x p basis X:
///   2 [ (K2 + s s^T) X - K1 X C1^-1 (C2 + ts ts^T) ] C1^-1
/// + 2 [ (K1 + s s^T) X - K2 X C2^-1 (C1 + ts ts^T) ] C2^-1
/// This is the column-convention transpose of the row-convention expression
/// C1^-1 T (K2 + ss^T)[I - T^T C1^-1 T K1] + (1 <-> 2), scaled by 2; the factor
/// of 2 is what central finite differences of J require.
inline AmbientMatrix jeffreys_grad_ambient(const ClassStats& stats, const Matrix& x) {
  const ChannelizedStats ch = channelize(stats, x);
  const Matrix k1x = stats.k1() * x;
  const Matrix k2x = stats.k2() * x;
  const Matrix sst = stats.s() * ch.ts.transpose();  // s s^T X
  const Matrix tsts = ch.ts * ch.ts.transpose();

  auto half = [](const Matrix& mix, const Matrix& kx_self, const Eigen::LLT<Matrix>& llt,
                 const Matrix& c_other_plus) {
    // [mix - kx_self C^-1 (C_other + ts ts^T)] C^-1, with C symmetric.
    const Matrix inner = mix - kx_self * llt.solve(c_other_plus);
    return Matrix(llt.solve(inner.transpose()).transpose());
  };
  Matrix g = 2.0 * half(k2x + sst, k1x, ch.llt1, ch.c2 + tsts) +
             2.0 * half(k1x + sst, k2x, ch.llt2, ch.c1 + tsts);
  return AmbientMatrix{std::move(g)};
}

inline AmbientMatrix jeffreys_grad_ambient(const ClassStats& stats, const GrassmannPoint& x) {
  if (x.n() != stats.n()) throw DimensionError("gradient: point and statistics disagree on n");
  return jeffreys_grad_ambient(stats, x.basis());
}

/// Value / Euclidean-gradient pair consumed by the optimizers (minimization form).
struct Objective {
  std::function<double(const GrassmannPoint&)> value;
  std::function<AmbientMatrix(const GrassmannPoint&)> gradient;
  Index n = 0;
  /// Set when value == -J, so traces can report J directly.
  bool negated_jeffreys = false;
};

/// f = -J, so that maximizing J becomes a minimization.
inline Objective neg_objective(const ClassStats& stats, const ObjectiveConfig& cfg = {}) {
  Objective obj;
  obj.n = stats.n();
  obj.negated_jeffreys = true;
  obj.value = [stats, cfg](const GrassmannPoint& x) { return -jeffreys(stats, x, cfg); };
  obj.gradient = [stats](const GrassmannPoint& x) {
    AmbientMatrix g = jeffreys_grad_ambient(stats, x);
    g.mat = -g.mat;
    return g;
  };
  return obj;
}

/// f(X) = -tr(X^T A X), gradient -2 A X, for SPD A.
inline Objective rayleigh_objective(Matrix a) {
  detail::require_shape(a, a.rows(), a.rows(), "rayleigh matrix");
  if ((a - a.transpose()).norm() > kSymmetryTol) throw ContractViolation("rayleigh: A is not symmetric");
  if (Eigen::LLT<Matrix>(a).info() != Eigen::Success) {
    throw ContractViolation("rayleigh: A is not positive definite");
  }
  auto shared = std::make_shared<const Matrix>(std::move(a));
  Objective obj;
  obj.n = shared->rows();
  obj.value = [shared](const GrassmannPoint& x) {
    if (x.n() != shared->rows()) throw DimensionError("rayleigh: dimension mismatch");
    return -(x.basis().transpose() * (*shared) * x.basis()).trace();
  };
  obj.gradient = [shared](const GrassmannPoint& x) {
    if (x.n() != shared->rows()) throw DimensionError("rayleigh: dimension mismatch");
    return AmbientMatrix{-2.0 * (*shared) * x.basis()};
  };
  return obj;
}

/// Geodesic smoothness bound for the Rayleigh objective: along a unit-speed
/// geodesic |f''| <= 2 (||X''|| + ||X'||^2) ||A||_2 <= 4 ||A||_2.
inline double rayleigh_lipschitz(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return 4.0 * es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Global minimum of the Rayleigh objective: minus the sum of the p largest eigenvalues.
inline double rayleigh_minimum(const Matrix& a, Index p) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return -es.eigenvalues().tail(p).sum();
}

}  // namespace grassopt
