#pragma once

// Riemannian inexact gradient descent on Gr(p, n):
//   rigd_run     fixed or scheduled step sizes
//   rigd_ls_run  backtracking line search on the sufficient-decrease condition
//                f(x_{k+1}) <= f(x_k) - sigma * eta_k * ||Delta_k||^2
// Both project the oracle's ambient gradient onto the tangent space and move
// along the geodesic x_{k+1} = Exp_{x_k}(-eta_k Delta_k).
// With a surrogate-statistics oracle, f is evaluated under the oracle's
// statistics for the current iteration; the objective only supplies the
// dimension and, through RunOptions::reference, the true-gradient logging.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "grassopt/grassmann.hpp"
#include "grassopt/objective.hpp"
#include "grassopt/oracle.hpp"

namespace grassopt {

namespace step {

struct Constant {
  double eta = 0.2;
};

/// eta = 1 / (3L), i.e. alpha = 1/L.
struct CorollaryI {
  double lipschitz = 1.0;
};

/// alpha_k = 1 / (2 L log^2(k + 2)), eta_k = alpha_k / 2.
struct CorollaryII {
  double lipschitz = 1.0;
};

}  // namespace step

using StepRule = std::variant<step::Constant, step::CorollaryI, step::CorollaryII>;

inline double step_size(const StepRule& rule, std::int64_t k) {
  if (auto* c = std::get_if<step::Constant>(&rule)) return c->eta;
  if (auto* c1 = std::get_if<step::CorollaryI>(&rule)) return 1.0 / (3.0 * c1->lipschitz);
  const auto& c2 = std::get<step::CorollaryII>(rule);
  const double lg = std::log(static_cast<double>(k + 2));
  const double alpha = 1.0 / (2.0 * c2.lipschitz * lg * lg);
  return alpha / 2.0;
}

struct FixedStepConfig {
  StepRule step_rule = step::Constant{};
  std::int64_t max_iters = 100;
  /// Stop once the true gradient norm drops to this value; 0 disables.
  double grad_tol = 0.0;

  void validate() const {
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(grad_tol >= 0)) throw ConfigError("grad_tol must be >= 0");
    std::visit(
        [](const auto& r) {
          using R = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<R, step::Constant>) {
            if (!(r.eta > 0) || !std::isfinite(r.eta)) throw ConfigError("step size eta must be > 0");
          } else {
            if (!(r.lipschitz > 0) || !std::isfinite(r.lipschitz)) {
              throw ConfigError("Lipschitz constant must be > 0");
            }
          }
        },
        step_rule);
  }
};

struct LineSearchConfig {
  double eta0 = 2.0;
  double beta = 0.7;
  double sigma = 1e-4;
  int max_backtracks = 60;
  std::int64_t max_iters = 100;
  double grad_tol = 0.0;
  /// Start each search from the previous accepted step / beta (capped at eta0)
  /// instead of eta0.
  bool warm_start = false;

  void validate() const {
    if (!(eta0 > 0) || !std::isfinite(eta0)) throw ConfigError("eta0 must be > 0");
    if (!(beta > 0 && beta < 1)) throw ConfigError("beta must lie in (0, 1)");
    if (!(sigma > 0 && sigma < 1)) throw ConfigError("sigma must lie in (0, 1)");
    if (max_backtracks < 1) throw ConfigError("max_backtracks must be >= 1");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(grad_tol >= 0)) throw ConfigError("grad_tol must be >= 0");
  }
};

/// One optimizer iteration, describing the iterate x_k and the step taken from it.
struct IterationRecord {
  std::int64_t k = 0;
  double f_value = 0.0;
  std::optional<double> j_value;
  double delta_norm = 0.0;
  std::optional<double> true_grad_norm;
  std::optional<double> err_norm;
  double eta_used = 0.0;
  int backtracks = 0;
  std::int64_t func_evals = 0;  // cumulative
  std::int64_t wall_ns = 0;
};

struct TraceMetadata {
  std::uint64_t seed = 0;
  std::string algorithm;
  std::string oracle;
  /// Serialized configuration of the run (JSON text).
  std::string config_json;
  int threads = 1;
  bool timed = false;
};

struct Trace {
  std::vector<IterationRecord> records;
  TraceMetadata meta;
};

/// Optimization failed; carries the trace up to the failure.
class RunError : public NumericalError {
 public:
  RunError(const std::string& what, Trace partial) : NumericalError(what), partial_(std::move(partial)) {}
  const Trace& partial_trace() const { return partial_; }

 private:
  Trace partial_;
};

class DivergedError : public RunError {
 public:
  using RunError::RunError;
};

class LineSearchStallError : public RunError {
 public:
  using RunError::RunError;
};

struct RunOptions {
  /// True objective for logging ||grad f||, the oracle error and J. May be
  /// the optimized objective itself.
  const Objective* reference = nullptr;
  bool keep_iterates = false;
  bool record_timing = true;
  TraceMetadata meta;
};

struct RunResult {
  GrassmannPoint x_final;
  Trace trace;
  /// x_0 ... x_final, filled when RunOptions::keep_iterates is set.
  std::vector<GrassmannPoint> iterates;
};

namespace detail {

inline void check_run_inputs(const Objective& objective, const GrassmannPoint& x0) {
  if (!objective.value || !objective.gradient) throw ConfigError("objective is missing an evaluator");
  if (objective.n != 0 && objective.n != x0.n()) {
    throw DimensionError("starting point does not match the objective dimension");
  }
  if (orthonormality_residual(x0.basis()) > 1e-8) {
    throw ContractViolation("starting point is not orthonormal");
  }
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Fills the logging fields that depend on the reference objective.
/// `f_is_objective` says whether rec.f_value came from `objective` itself
/// rather than from surrogate statistics.
inline void log_reference(IterationRecord& rec, const RunOptions& opts, const Objective& objective,
                          bool f_is_objective, const GrassmannPoint& x, const TangentVector& delta) {
  if (opts.reference) {
    const TangentVector true_grad = project_tangent(x, opts.reference->gradient(x));
    rec.true_grad_norm = true_grad.mat().norm();
    rec.err_norm = (true_grad.mat() - delta.mat()).norm();
    if (opts.reference->negated_jeffreys) {
      const bool reuse = f_is_objective && opts.reference == &objective;
      rec.j_value = reuse ? -rec.f_value : -opts.reference->value(x);
    }
  } else if (objective.negated_jeffreys || !f_is_objective) {
    rec.j_value = -rec.f_value;
  }
}

class Stopwatch {
 public:
  explicit Stopwatch(bool on) : on_(on), start_(std::chrono::steady_clock::now()) {}
  std::int64_t elapsed_ns() const {
    if (!on_) return 0;
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point start_;
};

inline std::string oracle_failure_message(std::int64_t k, const std::exception& e) {
  std::ostringstream os;
  os << "oracle failed at iteration " << k << ": " << e.what();
  return os.str();
}

}  // namespace detail

/// Inexact Riemannian gradient descent with a fixed or scheduled step.
inline RunResult rigd_run(const Objective& objective, GradientOracle& oracle, const GrassmannPoint& x0,
                          const FixedStepConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  detail::check_run_inputs(objective, x0);

  RunResult out{x0, Trace{{}, opts.meta}, {}};
  if (out.trace.meta.algorithm.empty()) out.trace.meta.algorithm = "rigd";
  if (out.trace.meta.oracle.empty()) out.trace.meta.oracle = oracle_name(oracle.kind());
  out.trace.meta.timed = opts.record_timing;
  out.trace.records.reserve(static_cast<std::size_t>(cfg.max_iters));
  if (opts.keep_iterates) out.iterates.push_back(x0);

  GrassmannPoint x = x0;
  std::int64_t evals = 0;
  const bool surrogate = oracle.has_surrogate_values();
  for (std::int64_t k = 0; k < cfg.max_iters; ++k) {
    detail::Stopwatch clock(opts.record_timing);
    IterationRecord rec;
    rec.k = k;

    OracleSample sample;
    try {
      sample = oracle.gradient_at(objective, x, k);
    } catch (const OracleFailure& e) {
      throw RunError(detail::oracle_failure_message(k, e), out.trace);
    }
    rec.f_value = surrogate ? oracle.surrogate_value(x) : objective.value(x);
    ++evals;
    if (!std::isfinite(rec.f_value)) {
      out.x_final = x;
      throw DivergedError("objective is not finite at iteration " + std::to_string(k), out.trace);
    }
    if (!detail::all_finite(sample.g.mat)) {
      throw DivergedError("oracle gradient is not finite at iteration " + std::to_string(k), out.trace);
    }
    const TangentVector delta = project_tangent(x, sample.g);
    rec.delta_norm = delta.mat().norm();
    detail::log_reference(rec, opts, objective, !surrogate, x, delta);

    const bool stop = cfg.grad_tol > 0 && rec.true_grad_norm && *rec.true_grad_norm <= cfg.grad_tol;
    if (!stop) {
      rec.eta_used = step_size(cfg.step_rule, k);
      x = exp_map(x, delta, -rec.eta_used);
      if (opts.keep_iterates) out.iterates.push_back(x);
    }
    rec.func_evals = evals;
    rec.wall_ns = clock.elapsed_ns();
    out.trace.records.push_back(rec);
    if (stop) break;
  }
  out.x_final = x;
  return out;
}

/// Inexact Riemannian gradient descent with backtracking line search.
inline RunResult rigd_ls_run(const Objective& objective, GradientOracle& oracle, const GrassmannPoint& x0,
                             const LineSearchConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  detail::check_run_inputs(objective, x0);

  RunResult out{x0, Trace{{}, opts.meta}, {}};
  if (out.trace.meta.algorithm.empty()) out.trace.meta.algorithm = "rigd-ls";
  if (out.trace.meta.oracle.empty()) out.trace.meta.oracle = oracle_name(oracle.kind());
  out.trace.meta.timed = opts.record_timing;
  out.trace.records.reserve(static_cast<std::size_t>(cfg.max_iters));
  if (opts.keep_iterates) out.iterates.push_back(x0);

  GrassmannPoint x = x0;
  const bool surrogate = oracle.has_surrogate_values();
  auto value = [&](const GrassmannPoint& y) { return surrogate ? oracle.surrogate_value(y) : objective.value(y); };
  double fx = 0.0;
  bool fx_current = false;
  std::int64_t evals = 0;
  double last_eta = cfg.eta0;

  for (std::int64_t k = 0; k < cfg.max_iters; ++k) {
    detail::Stopwatch clock(opts.record_timing);
    IterationRecord rec;
    rec.k = k;

    OracleSample sample;
    try {
      sample = oracle.gradient_at(objective, x, k);
    } catch (const OracleFailure& e) {
      throw RunError(detail::oracle_failure_message(k, e), out.trace);
    }
    // Redrawn statistics define a new objective, so f(x_k) is re-evaluated.
    if (!fx_current || oracle.surrogate_varies()) {
      fx = value(x);
      ++evals;
      fx_current = true;
    }
    rec.f_value = fx;
    if (!std::isfinite(fx)) {
      throw DivergedError("objective is not finite at iteration " + std::to_string(k), out.trace);
    }
    if (!detail::all_finite(sample.g.mat)) {
      throw DivergedError("oracle gradient is not finite at iteration " + std::to_string(k), out.trace);
    }
    const TangentVector delta = project_tangent(x, sample.g);
    const double dn2 = delta.mat().squaredNorm();
    rec.delta_norm = std::sqrt(dn2);
    detail::log_reference(rec, opts, objective, !surrogate, x, delta);

    if (cfg.grad_tol > 0 && rec.true_grad_norm && *rec.true_grad_norm <= cfg.grad_tol) {
      rec.func_evals = evals;
      rec.wall_ns = clock.elapsed_ns();
      out.trace.records.push_back(rec);
      break;
    }

    double eta = cfg.warm_start ? std::min(cfg.eta0, last_eta / cfg.beta) : cfg.eta0;
    int backtracks = 0;
    GrassmannPoint trial = x;
    double f_trial = fx;
    if (dn2 > 0) {
      for (;;) {
        trial = exp_map(x, delta, -eta);
        f_trial = value(trial);
        ++evals;
        if (f_trial <= fx - cfg.sigma * eta * dn2) break;
        if (backtracks == cfg.max_backtracks) {
          rec.backtracks = backtracks;
          rec.eta_used = eta;
          rec.func_evals = evals;
          out.trace.records.push_back(rec);
          out.x_final = x;
          std::ostringstream os;
          os << "line search stalled at iteration " << k << " after " << backtracks
             << " backtracks (eta = " << eta << ")";
          throw LineSearchStallError(os.str(), out.trace);
        }
        eta *= cfg.beta;
        ++backtracks;
      }
    }
    rec.eta_used = eta;
    rec.backtracks = backtracks;
    rec.func_evals = evals;
    rec.wall_ns = clock.elapsed_ns();
    out.trace.records.push_back(rec);

    last_eta = eta;
    x = std::move(trial);
    fx = f_trial;
    if (opts.keep_iterates) out.iterates.push_back(x);
  }
  out.x_final = x;
  return out;
}

/// Running minimum of ||grad f(x_k)||^2, the quantity bounded by the rate results.
inline std::vector<double> min_grad_so_far(const std::vector<double>& grad_norms_squared) {
  std::vector<double> out;
  out.reserve(grad_norms_squared.size());
  double best = 0.0;
  for (std::size_t i = 0; i < grad_norms_squared.size(); ++i) {
    best = i == 0 ? grad_norms_squared[i] : std::min(best, grad_norms_squared[i]);
    out.push_back(best);
  }
  return out;
}

inline std::vector<double> min_grad_so_far(const Trace& trace) {
  std::vector<double> sq;
  sq.reserve(trace.records.size());
  for (const auto& r : trace.records) {
    if (!r.true_grad_norm) {
      throw ContractViolation("min_grad_so_far: trace lacks true gradient norms (no reference objective)");
    }
    sq.push_back(*r.true_grad_norm * *r.true_grad_norm);
  }
  return min_grad_so_far(sq);
}

}  // namespace grassopt
