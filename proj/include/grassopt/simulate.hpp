#pragma once

// Heteroscedastic Gaussian image classes on a square pixel grid: true
// covariances, image sampling, sample covariance and identity shrinkage.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>

#include "grassopt/grassmann.hpp"

namespace grassopt {

/// side x side images (n = side^2) with squared-exponential correlation
/// lengths sigma1 / sigma2 in pixels.
struct GridSpec {
  int side = 16;
  double sigma1 = 0.55;
  double sigma2 = 0.30;
  double nugget = 1e-8;

  Index n() const { return static_cast<Index>(side) * side; }
  double sigma(int which_class) const { return which_class == 1 ? sigma1 : sigma2; }

  void validate() const {
    if (side < 2) throw ConfigError("grid side must be >= 2");
    if (!(sigma1 > 0) || !(sigma2 > 0)) throw ConfigError("correlation lengths must be > 0");
    if (!(nugget >= 0)) throw ConfigError("nugget must be >= 0");
  }
};

struct Dataset {
  Matrix images;  // N x n, one image per row, lexicographic pixel order
  int label = 1;
  std::uint64_t seed = 0;
};

/// K[a, b] = exp(-|r_a - r_b|^2 / (2 sigma^2)) + nugget * [a == b], where r_a
/// is the (row, col) pixel coordinate of lexicographic index a.
inline Matrix build_covariance(const GridSpec& grid, int which_class) {
  grid.validate();
  if (which_class != 1 && which_class != 2) throw ConfigError("class must be 1 or 2");
  const double sigma = grid.sigma(which_class);
  const Index n = grid.n();
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Matrix k(n, n);
  for (Index a = 0; a < n; ++a) {
    const Index ra = a / grid.side;
    const Index ca = a % grid.side;
    for (Index b = a; b < n; ++b) {
      const double dr = static_cast<double>(ra - b / grid.side);
      const double dc = static_cast<double>(ca - b % grid.side);
      const double v = std::exp(-(dr * dr + dc * dc) * inv);
      k(a, b) = v;
      k(b, a) = v;
    }
    k(a, a) += grid.nugget;
  }
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "covariance for sigma = " << sigma << " is numerically singular with nugget " << grid.nugget
       << "; increase the nugget (e.g. x100)";
    throw CovarianceFactorError(os.str());
  }
  return k;
}

/// Draws rows mean + L z with K = L L^T. Row i uses its own generator seeded
/// from (seed, i), so the output does not depend on how rows are scheduled.
class GaussianSampler {
 public:
  explicit GaussianSampler(const Matrix& k) : llt_(k), n_(k.rows()) {
    detail::require_shape(k, k.rows(), k.rows(), "sampler covariance");
    if (llt_.info() != Eigen::Success) {
      throw CovarianceFactorError("sampler: covariance is not positive definite; increase the nugget");
    }
  }

  Index n() const { return n_; }

  Matrix sample(const Vector& mean, Index count, std::uint64_t seed) const {
    if (mean.size() != n_) throw DimensionError("sampler: mean length does not match covariance");
    if (count < 1) throw ConfigError("sampler: count must be >= 1");
    Matrix z(n_, count);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Index i = 0; i < count; ++i) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) >> 32)};
      std::mt19937_64 rng(seq);
      for (Index j = 0; j < n_; ++j) z(j, i) = dist(rng);
    }
    Matrix rows = (llt_.matrixL() * z).transpose();
    rows.rowwise() += mean.transpose();
    return rows;
  }

 private:
  Eigen::LLT<Matrix> llt_;
  Index n_;
};

inline Dataset sample_images(const Matrix& k, const Vector& mean, Index count, std::uint64_t seed,
                             int label = 1) {
  GaussianSampler sampler(k);
  return Dataset{sampler.sample(mean, count, seed), label, seed};
}

/// Unbiased sample covariance (G - 1 mu^T)^T (G - 1 mu^T) / (N - 1).
inline Matrix sample_covariance(const Matrix& images) {
  const Index count = images.rows();
  if (count < 2) throw InsufficientSamplesError("sample covariance needs at least 2 images");
  const Vector mu = images.colwise().mean().transpose();
  const Matrix centered = images.rowwise() - mu.transpose();
  Matrix k = (centered.transpose() * centered) / static_cast<double>(count - 1);
  return 0.5 * (k + k.transpose());
}

inline Matrix sample_covariance(const Dataset& data) { return sample_covariance(data.images); }

/// (1 - lambda) K + lambda I.
inline Matrix shrink(const Matrix& k_hat, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("shrinkage lambda must lie in (0, 1)");
  detail::require_shape(k_hat, k_hat.rows(), k_hat.rows(), "shrink");
  Matrix out = (1.0 - lambda) * k_hat;
  out.diagonal().array() += lambda;
  return out;
}

}  // namespace grassopt
