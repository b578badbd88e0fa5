#pragma once

// Geometry of the Grassmann manifold Gr(p, n) in the column convention:
// a point is an n x p matrix X with X^T X = I_p, and the tangent space at X
// is { A : X^T A = 0 }.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "grassopt/errors.hpp"

namespace grassopt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Orthonormality tolerance for points produced by this library.
inline constexpr double kOrthonormalTol = 1e-10;
// Tangency tolerance applied to vectors handed in by callers.
inline constexpr double kInputTangencyTol = 1e-8;

namespace detail {

inline std::string shape_str(Index rows, Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

inline void require_shape(const Matrix& m, Index rows, Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " + shape_str(rows, cols) + ", got " +
                         shape_str(m.rows(), m.cols()));
  }
}

}  // namespace detail

/// ||M^T M - I||_F
inline double orthonormality_residual(const Matrix& m) {
  return (m.transpose() * m - Matrix::Identity(m.cols(), m.cols())).norm();
}

/// A p-dimensional subspace of R^n, stored as an orthonormal n x p basis.
/// The basis is immutable and shared between copies.
class GrassmannPoint {
 public:
  /// Wraps an already orthonormal basis; throws ContractViolation if
  /// ||B^T B - I||_F exceeds `tol`.
  static GrassmannPoint from_orthonormal(Matrix basis, double tol = kOrthonormalTol) {
    check_dims(basis.rows(), basis.cols());
    const double res = orthonormality_residual(basis);
    if (!(res <= tol)) {
      std::ostringstream os;
      os << "basis is not orthonormal (residual " << res << " > " << tol << ")";
      throw ContractViolation(os.str());
    }
    return GrassmannPoint(std::move(basis));
  }

  /// Orthonormal basis of span(m) via Householder QR, with the sign of each
  /// column chosen so that diag(R) >= 0.
  static GrassmannPoint orthonormalize(const Matrix& m) {
    check_dims(m.rows(), m.cols());
    const Index n = m.rows();
    const Index p = m.cols();
    Eigen::HouseholderQR<Matrix> qr(m);
    Matrix q = qr.householderQ() * Matrix::Identity(n, p);
    const Matrix& packed = qr.matrixQR();
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    for (Index j = 0; j < p; ++j) {
      const double r = packed(j, j);
      if (!std::isfinite(r)) throw NumericalError("orthonormalize: non-finite input");
      if (std::abs(r) <= 1e-13 * scale) {
        throw NumericalError("orthonormalize: input is rank deficient");
      }
      if (r < 0) q.col(j) = -q.col(j);
    }
    return GrassmannPoint(std::move(q));
  }

  const Matrix& basis() const { return *basis_; }
  Index n() const { return basis_->rows(); }
  Index p() const { return basis_->cols(); }

  /// True when both values share the same underlying storage.
  bool same_storage(const GrassmannPoint& other) const { return basis_ == other.basis_; }

  /// Same representative (bitwise-equal basis), not merely the same subspace.
  bool same_basis(const GrassmannPoint& other) const {
    return same_storage(other) || (n() == other.n() && p() == other.p() && basis() == other.basis());
  }

 private:
  explicit GrassmannPoint(Matrix basis) : basis_(std::make_shared<const Matrix>(std::move(basis))) {}

  static void check_dims(Index n, Index p) {
    if (p < 1 || p >= n) {
      throw DimensionError("Grassmann point needs 1 <= p < n, got " + detail::shape_str(n, p));
    }
  }

  std::shared_ptr<const Matrix> basis_;
};

/// Unconstrained n x p matrix, e.g. a Euclidean gradient before projection.
struct AmbientMatrix {
  Matrix mat;
};

/// An n x p matrix A tangent at `base`, i.e. base^T A = 0.
class TangentVector {
 public:
  /// Validates tangency of a caller-supplied matrix with the input tolerance
  /// (relative to max(1, ||m||_F)).
  static TangentVector from_matrix(const GrassmannPoint& base, Matrix m,
                                   double tol = kInputTangencyTol) {
    detail::require_shape(m, base.n(), base.p(), "tangent vector");
    const double res = (base.basis().transpose() * m).norm();
    if (!(res <= tol * std::max(1.0, m.norm()))) {
      std::ostringstream os;
      os << "matrix is not tangent at the base point (residual " << res << ")";
      throw ContractViolation(os.str());
    }
    return TangentVector(base, std::move(m));
  }

  static TangentVector zero(const GrassmannPoint& base) {
    return TangentVector(base, Matrix::Zero(base.n(), base.p()));
  }

  const Matrix& mat() const { return mat_; }
  const GrassmannPoint& base() const { return base_; }

  TangentVector scaled(double c) const { return TangentVector(base_, c * mat_); }

 private:
  friend TangentVector project_tangent(const GrassmannPoint& x, const Matrix& g);

  TangentVector(GrassmannPoint base, Matrix m) : base_(std::move(base)), mat_(std::move(m)) {}

  GrassmannPoint base_;
  Matrix mat_;
};

/// Orthogonal projection (I - X X^T) G onto the tangent space at x. This is
/// the metric-nearest tangent vector to G.
inline TangentVector project_tangent(const GrassmannPoint& x, const Matrix& g) {
  detail::require_shape(g, x.n(), x.p(), "project_tangent");
  const Matrix& b = x.basis();
  Matrix out = g - b * (b.transpose() * g);
  return TangentVector(x, std::move(out));
}

inline TangentVector project_tangent(const GrassmannPoint& x, const AmbientMatrix& g) {
  return project_tangent(x, g.mat);
}

namespace detail {

inline void require_base(const GrassmannPoint& x, const TangentVector& v, const char* what) {
  if (!v.base().same_basis(x)) {
    throw ContractViolation(std::string(what) + ": tangent vector belongs to a different base point");
  }
}

}  // namespace detail

/// Canonical metric tr(A^T B).
inline double inner(const GrassmannPoint& x, const TangentVector& a, const TangentVector& b) {
  detail::require_base(x, a, "inner");
  detail::require_base(x, b, "inner");
  return (a.mat().array() * b.mat().array()).sum();
}

inline double norm(const GrassmannPoint& x, const TangentVector& a) {
  return std::sqrt(std::max(0.0, inner(x, a, a)));
}

/// Geodesic from x with initial velocity v, evaluated at time t:
///   Exp_x(t v) = X W cos(t S) W^T + U sin(t S) W^T,   v = U S W^T (thin SVD),
/// followed by QR re-orthonormalization. v may come from a different (but
/// equal-valued) base; otherwise its tangency at x is checked.
inline GrassmannPoint exp_map(const GrassmannPoint& x, const TangentVector& v, double t) {
  detail::require_shape(v.mat(), x.n(), x.p(), "exp_map");
  if (!std::isfinite(t)) throw ContractViolation("exp_map: non-finite step");
  if (!v.base().same_basis(x)) {
    const double res = (x.basis().transpose() * v.mat()).norm();
    if (!(res <= kInputTangencyTol * std::max(1.0, v.mat().norm()))) {
      std::ostringstream os;
      os << "exp_map: direction is not tangent at x (residual " << res << ")";
      throw ContractViolation(os.str());
    }
  }
  if (t == 0.0 || v.mat().isZero(0.0)) return x;

  Eigen::JacobiSVD<Matrix> svd(v.mat(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector ts = t * svd.singularValues();
  const Matrix& u = svd.matrixU();
  const Matrix& w = svd.matrixV();
  const Vector c = ts.array().cos().matrix();
  const Vector s = ts.array().sin().matrix();
  Matrix y = (x.basis() * w) * c.asDiagonal() * w.transpose() + u * s.asDiagonal() * w.transpose();
  return GrassmannPoint::orthonormalize(y);
}

/// Principal angles between span(x) and span(y), ascending. Cosines come from
/// the SVD of X^T Y and sines from the residual of Y against X, so that small
/// angles keep full relative precision.
inline Vector principal_angles(const GrassmannPoint& x, const GrassmannPoint& y) {
  if (x.n() != y.n() || x.p() != y.p()) {
    throw DimensionError("principal_angles: points live on different Grassmannians");
  }
  const Matrix xty = x.basis().transpose() * y.basis();
  Eigen::JacobiSVD<Matrix> svd(xty, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix yq = y.basis() * svd.matrixV();
  const Matrix resid = yq - x.basis() * (x.basis().transpose() * yq);
  Vector angles(x.p());
  for (Index i = 0; i < x.p(); ++i) {
    const double cosv = std::clamp(svd.singularValues()(i), 0.0, 1.0);
    const double sinv = resid.col(i).norm();
    angles(i) = std::atan2(sinv, cosv);
  }
  std::sort(angles.data(), angles.data() + angles.size());
  return angles;
}

/// Geodesic distance sqrt(sum theta_i^2).
inline double subspace_distance(const GrassmannPoint& x, const GrassmannPoint& y) {
  return principal_angles(x, y).norm();
}

/// n x p matrix of iid standard normals, drawn column by column.
template <class Rng>
Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

/// Q factor of an n x p standard-normal matrix.
template <class Rng>
GrassmannPoint random_point(Index n, Index p, Rng& rng) {
  if (p < 1 || p >= n) {
    throw DimensionError("random_point needs 1 <= p < n, got " + detail::shape_str(n, p));
  }
  return GrassmannPoint::orthonormalize(gaussian_matrix(n, p, rng));
}

/// Projected standard-normal matrix; used as a finite-difference probe.
template <class Rng>
TangentVector random_tangent(const GrassmannPoint& x, Rng& rng) {
  return project_tangent(x, gaussian_matrix(x.n(), x.p(), rng));
}

template <class Rng>
TangentVector random_unit_tangent(const GrassmannPoint& x, Rng& rng) {
  for (;;) {
    TangentVector v = random_tangent(x, rng);
    const double nv = v.mat().norm();
    if (nv > 0) return v.scaled(1.0 / nv);
  }
}

}  // namespace grassopt
