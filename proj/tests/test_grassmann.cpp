#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "grassopt/grassmann.hpp"

using namespace grassopt;

namespace {

std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

// Least-squares solution of min_B ||(I - X X^T) B - G||_F over all n x p B,
// solved on vec(B) with the Kronecker operator (I_p (x) P). Independent of
// project_tangent's closed form.
Matrix constrained_least_squares(const Matrix& x, const Matrix& g) {
  const Index n = x.rows();
  const Index p = x.cols();
  const Matrix proj = Matrix::Identity(n, n) - x * x.transpose();
  Matrix op = Matrix::Zero(n * p, n * p);
  for (Index j = 0; j < p; ++j) op.block(j * n, j * n, n, n) = proj;
  Vector rhs = Eigen::Map<const Vector>(g.data(), n * p);
  Vector b = op.completeOrthogonalDecomposition().solve(rhs);
  Matrix bm = Eigen::Map<Matrix>(b.data(), n, p);
  return proj * bm;
}

}  // namespace

TEST(GrassmannPoint, RejectsBadDimensions) {
  auto rng = make_rng(1);
  EXPECT_THROW(random_point(3, 3, rng), DimensionError);
  EXPECT_THROW(random_point(3, 0, rng), DimensionError);
  EXPECT_THROW(GrassmannPoint::from_orthonormal(Matrix::Identity(2, 2)), DimensionError);
}

TEST(GrassmannPoint, FromOrthonormalValidates) {
  Matrix m = Matrix::Zero(4, 2);
  m(0, 0) = 1;
  m(1, 1) = 2;
  EXPECT_THROW(GrassmannPoint::from_orthonormal(m), ContractViolation);
  m(1, 1) = 1;
  EXPECT_NO_THROW(GrassmannPoint::from_orthonormal(m));
}

TEST(GrassmannPoint, OrthonormalizeSignConvention) {
  Matrix m(3, 1);
  m << -2, 0, 0;
  const auto x = GrassmannPoint::orthonormalize(m);
  // diag(R) >= 0 means the column keeps the sign of the input direction's QR factor.
  EXPECT_NEAR(std::abs(x.basis()(0, 0)), 1.0, 1e-15);
  EXPECT_THROW(GrassmannPoint::orthonormalize(Matrix::Zero(3, 1)), NumericalError);
}

TEST(RandomPoint, OrthonormalAndDeterministic) {
  auto r1 = make_rng(42);
  auto r2 = make_rng(42);
  const auto a = random_point(12, 3, r1);
  const auto b = random_point(12, 3, r2);
  EXPECT_LE(orthonormality_residual(a.basis()), kOrthonormalTol);
  EXPECT_EQ(a.basis(), b.basis());
}

TEST(RandomPoint, DifferentSeedsGiveDifferentSubspaces) {
  auto r1 = make_rng(1);
  auto r2 = make_rng(2);
  const auto a = random_point(50, 5, r1);
  const auto b = random_point(50, 5, r2);
  EXPECT_GT(subspace_distance(a, b), 0.0);
}

TEST(ProjectTangent, FixesTangentInput) {
  auto rng = make_rng(3);
  const auto x = random_point(7, 2, rng);
  const auto v = random_tangent(x, rng);
  const auto pv = project_tangent(x, v.mat());
  EXPECT_LE((pv.mat() - v.mat()).norm(), 1e-12);
}

TEST(ProjectTangent, BasePointMapsToZero) {
  auto rng = make_rng(4);
  const auto x = random_point(9, 3, rng);
  EXPECT_LE(project_tangent(x, x.basis()).mat().norm(), 1e-14);
}

TEST(ProjectTangent, MatchesConstrainedLeastSquares) {
  auto rng = make_rng(5);
  const auto x = random_point(6, 2, rng);
  const Matrix g = gaussian_matrix(6, 2, rng);
  const Matrix expected = constrained_least_squares(x.basis(), g);
  EXPECT_LE((project_tangent(x, g).mat() - expected).norm(), 1e-12);
}

TEST(ProjectTangent, ShapeMismatchThrows) {
  auto rng = make_rng(6);
  const auto x = random_point(6, 2, rng);
  EXPECT_THROW(project_tangent(x, Matrix::Zero(6, 3)), DimensionError);
}

TEST(ProjectTangent, IsTheMetricProjection) {
  auto rng = make_rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> pdist(1, 3);
    const Index p = pdist(rng);
    std::uniform_int_distribution<int> ndist(static_cast<int>(p) + 1, 8);
    const Index n = ndist(rng);
    const auto x = random_point(n, p, rng);
    const Matrix g = gaussian_matrix(n, p, rng);
    const double best = (project_tangent(x, g).mat() - g).norm();
    for (int i = 0; i < 1000; ++i) {
      const Matrix a = random_tangent(x, rng).mat() * std::exp(std::normal_distribution<double>()(rng));
      ASSERT_LE(best, (a - g).norm() + 1e-12);
    }
  }
}

TEST(ExpMap, ZeroDirectionReturnsInputExactly) {
  auto rng = make_rng(8);
  const auto x = random_point(10, 3, rng);
  const auto y = exp_map(x, TangentVector::zero(x), 0.7);
  EXPECT_EQ(y.basis(), x.basis());
  const auto z = exp_map(x, random_tangent(x, rng), 0.0);
  EXPECT_EQ(z.basis(), x.basis());
}

TEST(ExpMap, GreatCircleInOneDimension) {
  Matrix e1 = Matrix::Zero(4, 1);
  e1(0, 0) = 1;
  const auto x = GrassmannPoint::from_orthonormal(e1);
  const double sigma = 0.8;
  Matrix v = Matrix::Zero(4, 1);
  v(1, 0) = sigma;
  const auto y = exp_map(x, TangentVector::from_matrix(x, v), 1.0);
  Matrix expected = Matrix::Zero(4, 1);
  expected(0, 0) = std::cos(sigma);
  expected(1, 0) = std::sin(sigma);
  EXPECT_LE((y.basis() - expected).norm(), 1e-14);
}

TEST(ExpMap, RejectsNonTangentDirection) {
  auto rng = make_rng(9);
  const auto x = random_point(6, 2, rng);
  const auto other = random_point(6, 2, rng);
  const auto v = random_tangent(other, rng);
  EXPECT_THROW(exp_map(x, v, 1.0), ContractViolation);
  EXPECT_THROW(TangentVector::from_matrix(x, x.basis()), ContractViolation);
}

TEST(ExpMap, StaysOnManifoldForLargeSteps) {
  auto rng = make_rng(10);
  for (int i = 0; i < 50; ++i) {
    const auto x = random_point(20, 4, rng);
    const auto v = random_tangent(x, rng);
    const auto y = exp_map(x, v, 25.0 * std::normal_distribution<double>()(rng));
    ASSERT_LE(orthonormality_residual(y.basis()), kOrthonormalTol);
  }
}

TEST(ExpMap, DistanceEqualsVelocityNormForShortSteps) {
  auto rng = make_rng(11);
  for (int i = 0; i < 50; ++i) {
    const auto x = random_point(15, 3, rng);
    const auto v = random_unit_tangent(x, rng).scaled(0.5);
    const auto y = exp_map(x, v, 1.0);
    ASSERT_NEAR(subspace_distance(x, y), v.mat().norm(), 1e-6);
  }
}

TEST(Inner, DefinitionAndSymmetry) {
  auto rng = make_rng(12);
  const auto x = random_point(8, 2, rng);
  const auto a = random_tangent(x, rng);
  const auto b = random_tangent(x, rng);
  EXPECT_NEAR(inner(x, a, a), a.mat().squaredNorm(), 1e-12);
  EXPECT_DOUBLE_EQ(inner(x, a, b), inner(x, b, a));
  EXPECT_NEAR(norm(x, a.scaled(-3.0)), 3.0 * norm(x, a), 1e-12);
  EXPECT_EQ(norm(x, TangentVector::zero(x)), 0.0);
}

TEST(Inner, SingleEntryProduct) {
  Matrix e = Matrix::Zero(5, 2);
  e(0, 0) = 1;
  e(1, 1) = 1;
  const auto x = GrassmannPoint::from_orthonormal(e);
  Matrix a = Matrix::Zero(5, 2);
  Matrix b = Matrix::Zero(5, 2);
  a(3, 1) = 2.5;
  b(3, 1) = -4.0;
  EXPECT_DOUBLE_EQ(inner(x, TangentVector::from_matrix(x, a), TangentVector::from_matrix(x, b)), -10.0);
}

TEST(Inner, ForeignBaseIsAContractViolation) {
  auto rng = make_rng(13);
  const auto x = random_point(8, 2, rng);
  const auto y = random_point(8, 2, rng);
  EXPECT_THROW(inner(x, random_tangent(x, rng), random_tangent(y, rng)), ContractViolation);
}

TEST(RandomTangent, TangentAndNormalizable) {
  auto rng = make_rng(14);
  const auto x = random_point(9, 4, rng);
  const auto v = random_tangent(x, rng);
  EXPECT_LE((x.basis().transpose() * v.mat()).norm(), kOrthonormalTol);
  EXPECT_LE((project_tangent(x, v.mat()).mat() - v.mat()).norm(), 1e-12);
  EXPECT_NEAR(norm(x, random_unit_tangent(x, rng)), 1.0, 1e-14);
}

TEST(SubspaceDistance, BasicProperties) {
  auto rng = make_rng(15);
  const auto x = random_point(10, 3, rng);
  const auto y = random_point(10, 3, rng);
  EXPECT_NEAR(subspace_distance(x, x), 0.0, 1e-7);
  EXPECT_NEAR(subspace_distance(x, y), subspace_distance(y, x), 1e-12);
  // Rotating the basis does not move the subspace.
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(3, 3, rng));
  const Matrix rot = qr.householderQ();
  const auto xr = GrassmannPoint::from_orthonormal(x.basis() * rot, 1e-10);
  EXPECT_NEAR(subspace_distance(x, xr), 0.0, 1e-7);
}
