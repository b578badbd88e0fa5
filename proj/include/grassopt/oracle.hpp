#pragma once

// Inexact gradient oracles. Each produces an ambient gradient estimate that
// the optimizers project onto the tangent space.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>

#include "grassopt/grassmann.hpp"
#include "grassopt/objective.hpp"

namespace grassopt {

/// The surrogate statistics could not be channelized after all retries.
class OracleFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

inline constexpr int kMaxPerturbRetries = 10;

/// Returns K with Y / k added to every entry, Y ~ U(0,1). Only the upper
/// triangle is drawn (row by row) and mirrored, so the result stays symmetric.
template <class Rng>
Matrix uniform_perturb(const Matrix& k_true, std::int64_t k, Rng& rng) {
  if (k < 1) throw ContractViolation("uniform_perturb: iteration index must be >= 1");
  detail::require_shape(k_true, k_true.rows(), k_true.rows(), "uniform_perturb");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double scale = 1.0 / static_cast<double>(k);
  Matrix out = k_true;
  const Index n = k_true.rows();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      const double y = unif(rng) * scale;
      out(i, j) += y;
      if (j != i) out(j, i) += y;
    }
  }
  return out;
}

namespace oracle {

struct Exact {};

/// Injects an ambient error of norm c / (k+1)^exponent.
struct AdditiveSchedule {
  double c = 1.0;
  double exponent = 0.75;
};

/// Injects a tangent error of norm delta * ||grad f(x_k)||, delta in [0, 1).
struct RelativeBounded {
  double delta = 0.3;
};

/// Per-iteration uniform perturbation K + Y_k / k of both class covariances.
struct PerturbPolicy {
  std::uint64_t seed = 0;
};

enum class Refresh { Redraw, Fixed };

/// Exact gradient of -J under substitute statistics: estimated covariances
/// (no perturbation), or uniformly perturbed ones.
struct SurrogateStats {
  ClassStats stats;
  std::optional<PerturbPolicy> perturb;
  Refresh refresh = Refresh::Redraw;
  ObjectiveConfig objective;
};

}  // namespace oracle

using OracleKind =
    std::variant<oracle::Exact, oracle::AdditiveSchedule, oracle::RelativeBounded, oracle::SurrogateStats>;

struct OracleSample {
  AmbientMatrix g;
  /// Norm of the injected error: 0 for Exact, the schedule value for
  /// AdditiveSchedule, the realized tangent error for RelativeBounded, and
  /// absent for surrogate statistics.
  std::optional<double> injected_norm;
  /// Redraws needed before the surrogate channel covariances factorized.
  int retries = 0;
};

inline std::string oracle_name(const OracleKind& kind) {
  struct V {
    std::string operator()(const oracle::Exact&) const { return "exact"; }
    std::string operator()(const oracle::AdditiveSchedule&) const { return "additive"; }
    std::string operator()(const oracle::RelativeBounded&) const { return "relative"; }
    std::string operator()(const oracle::SurrogateStats& s) const {
      return s.perturb ? "perturbed" : "surrogate";
    }
  };
  return std::visit(V{}, kind);
}

/// A gradient oracle owns its random stream; one instance per optimizer run.
class GradientOracle {
 public:
  GradientOracle(OracleKind kind, std::uint64_t seed) : kind_(std::move(kind)), rng_(seed) {
    if (auto* a = std::get_if<oracle::AdditiveSchedule>(&kind_)) {
      if (!(a->c > 0) || !std::isfinite(a->c)) throw ConfigError("additive oracle: c must be > 0");
      if (!std::isfinite(a->exponent)) throw ConfigError("additive oracle: exponent must be finite");
    }
    if (auto* r = std::get_if<oracle::RelativeBounded>(&kind_)) {
      if (!(r->delta >= 0.0 && r->delta < 1.0)) {
        throw ConfigError("relative oracle: delta must lie in [0, 1)");
      }
    }
  }

  const OracleKind& kind() const { return kind_; }

  /// Ambient gradient estimate at iteration k (0-based). `objective` is the
  /// true objective; surrogate oracles ignore it.
  OracleSample gradient_at(const Objective& objective, const GrassmannPoint& x, std::int64_t k) {
    if (k < 0) throw ContractViolation("oracle: negative iteration index");
    if (objective.n != 0 && objective.n != x.n()) throw DimensionError("oracle: dimension mismatch");

    if (std::holds_alternative<oracle::Exact>(kind_)) {
      return OracleSample{objective.gradient(x), 0.0, 0};
    }
    if (auto* a = std::get_if<oracle::AdditiveSchedule>(&kind_)) {
      AmbientMatrix g = objective.gradient(x);
      const double mag = additive_magnitude(*a, k);
      Matrix dir = gaussian_matrix(x.n(), x.p(), rng_);
      dir /= dir.norm();
      g.mat += mag * dir;
      return OracleSample{std::move(g), mag, 0};
    }
    if (auto* r = std::get_if<oracle::RelativeBounded>(&kind_)) {
      AmbientMatrix g = objective.gradient(x);
      const double gnorm = project_tangent(x, g).mat().norm();
      const double mag = r->delta * gnorm;
      if (mag > 0) {
        const TangentVector u = random_unit_tangent(x, rng_);
        g.mat += mag * u.mat();
      }
      return OracleSample{std::move(g), mag, 0};
    }
    return surrogate_gradient(std::get<oracle::SurrogateStats>(kind_), x, k);
  }

  static double additive_magnitude(const oracle::AdditiveSchedule& a, std::int64_t k) {
    return a.c / std::pow(static_cast<double>(k + 1), a.exponent);
  }

  /// True when the oracle works from its own statistics; the optimizers then
  /// evaluate f through surrogate_value instead of the objective.
  bool has_surrogate_values() const { return std::holds_alternative<oracle::SurrogateStats>(kind_); }

  /// True when the surrogate statistics change from one iteration to the next.
  bool surrogate_varies() const {
    const auto* s = std::get_if<oracle::SurrogateStats>(&kind_);
    return s && s->perturb && s->refresh == oracle::Refresh::Redraw;
  }

  /// -J at x under the statistics behind the most recent gradient_at call.
  /// Returns +inf where those statistics do not channelize at x.
  double surrogate_value(const GrassmannPoint& x) const {
    const auto* s = std::get_if<oracle::SurrogateStats>(&kind_);
    if (!s) throw ContractViolation("surrogate_value: oracle has no surrogate statistics");
    if (s->perturb && !cached_) throw ContractViolation("surrogate_value: no gradient has been drawn yet");
    const ClassStats& stats = s->perturb ? *cached_ : s->stats;
    try {
      return -jeffreys(stats, x, s->objective);
    } catch (const SingularChannelError&) {
      return std::numeric_limits<double>::infinity();
    }
  }

 private:
  OracleSample surrogate_gradient(const oracle::SurrogateStats& s, const GrassmannPoint& x,
                                  std::int64_t k) {
    if (s.stats.n() != x.n()) throw DimensionError("surrogate oracle: dimension mismatch");
    if (!s.perturb) {
      AmbientMatrix g = jeffreys_grad_ambient(s.stats, x);
      g.mat = -g.mat;
      return OracleSample{std::move(g), std::nullopt, 0};
    }
    // Perturbation index starts at 1; Fixed reuses the first draw.
    const std::int64_t pk = s.refresh == oracle::Refresh::Fixed ? 1 : k + 1;
    for (int attempt = 0; attempt <= kMaxPerturbRetries; ++attempt) {
      const ClassStats& hat = perturbed_stats(s, pk, attempt);
      try {
        AmbientMatrix g = jeffreys_grad_ambient(hat, x);
        g.mat = -g.mat;
        return OracleSample{std::move(g), std::nullopt, attempt};
      } catch (const SingularChannelError&) {
        if (s.refresh == oracle::Refresh::Fixed) {
          // A fixed draw cannot be retried without changing its meaning.
          throw OracleFailure("perturbed statistics (fixed draw) are singular at this point");
        }
      }
    }
    std::ostringstream os;
    os << "perturbed channel covariances not positive definite after " << kMaxPerturbRetries
       << " redraws at iteration " << k;
    throw OracleFailure(os.str());
  }

  const ClassStats& perturbed_stats(const oracle::SurrogateStats& s, std::int64_t pk, int attempt) {
    if (cached_ && cached_k_ == pk && cached_attempt_ == attempt) return *cached_;
    const std::uint64_t seed = s.perturb->seed;
    std::seed_seq seq1{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(pk), static_cast<std::uint32_t>(attempt), 1u};
    std::seed_seq seq2{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(pk), static_cast<std::uint32_t>(attempt), 2u};
    std::mt19937_64 r1(seq1);
    std::mt19937_64 r2(seq2);
    Matrix k1 = uniform_perturb(s.stats.k1(), pk, r1);
    Matrix k2 = uniform_perturb(s.stats.k2(), pk, r2);
    cached_ = ClassStats::symmetric_only(std::move(k1), std::move(k2), s.stats.s());
    cached_k_ = pk;
    cached_attempt_ = attempt;
    return *cached_;
  }

  OracleKind kind_;
  std::mt19937_64 rng_;
  std::optional<ClassStats> cached_;
  std::int64_t cached_k_ = -1;
  int cached_attempt_ = -1;
};

}  // namespace grassopt
