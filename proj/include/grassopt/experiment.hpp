#pragma once

// The five experiment commands behind the CLI. Each command fans its
// independent (run, seed, N) cells out over worker threads, collects the
// results in cell order and writes artifacts atomically, so outputs do not
// depend on scheduling.
//
// Random streams are derived from (config seed, stream tag, ...) so that,
// for a given seed, every run shares the starting point, the training images
// and the held-out test set.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "grassopt/config.hpp"
#include "grassopt/evaluate.hpp"
#include "grassopt/matrix_io.hpp"
#include "grassopt/objective.hpp"
#include "grassopt/optimizer.hpp"
#include "grassopt/oracle.hpp"
#include "grassopt/simulate.hpp"
#include "grassopt/trace_io.hpp"

namespace grassopt::experiment {

namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;

// ---- seeding and threading ----------------------------------------------------

enum class Stream : std::uint32_t {
  start = 1,
  oracle = 2,
  train1 = 3,
  train2 = 4,
  test1 = 5,
  test2 = 6,
  perturb = 7,
  dataset1 = 8,
  dataset2 = 9,
  rayleigh = 10,
  covtable = 11,
};

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

/// Runs fn(0..count-1) on up to `threads` workers. The first exception in
/// index order is rethrown after all workers finish.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(count);
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---- shared pieces ------------------------------------------------------------

struct Problem {
  ClassStats stats;
  Objective truth;  // -J under the true statistics
  std::optional<FkSolution> fk;
};

inline Problem make_problem(const ExperimentConfig& c) {
  const Matrix k1 = build_covariance(c.grid, 1);
  const Matrix k2 = build_covariance(c.grid, 2);
  const Vector s = Vector::Constant(c.grid.n(), c.signal);
  Problem pr{ClassStats::make(k1, k2, s), {}, std::nullopt};
  pr.truth = neg_objective(pr.stats);
  if (c.signal == 0.0) pr.fk = fukunaga_koontz(pr.stats, c.p);
  return pr;
}

inline GrassmannPoint start_point(const ExperimentConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, Stream::start));
  return random_point(c.grid.n(), c.p, rng);
}

/// Held-out images, shared by every run evaluated under `seed`.
struct TestSet {
  Matrix class1;
  Matrix class2;
};

inline TestSet test_set(const Problem& pr, const ExperimentConfig& c, std::uint64_t seed) {
  const Vector zero = Vector::Zero(pr.stats.n());
  return TestSet{sample_images(pr.stats.k1(), pr.stats.s(), c.test_per_class, derive_seed(seed, Stream::test1)).images,
                 sample_images(pr.stats.k2(), zero, c.test_per_class, derive_seed(seed, Stream::test2)).images};
}

inline std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

inline void write_json(const fs::path& path, const OJson& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

inline OJson read_json(const fs::path& path) {
  try {
    return OJson::parse(io::read_file(path));
  } catch (const OJson::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline OJson stamp(const ExperimentConfig& c) {
  OJson j;
  j["config_hash"] = config_hash(c);
  return j;
}

// ---- simulate -------------------------------------------------------------------

/// 8-bit binary PGM of one image, linearly scaled to [0, 255].
inline std::string to_pgm(const Vector& image, int side) {
  const double lo = image.minCoeff();
  const double hi = image.maxCoeff();
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  std::string out = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  for (Index i = 0; i < image.size(); ++i) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround((image(i) - lo) * scale))));
  }
  return out;
}

/// Writes the true statistics and, for each dataset seed and N, one image
/// matrix per class (rows are images).
inline OJson cmd_simulate(const ExperimentConfig& c) {
  const fs::path out(c.out);
  const Matrix k1 = build_covariance(c.grid, 1);
  const Matrix k2 = build_covariance(c.grid, 2);
  const Vector s = Vector::Constant(c.grid.n(), c.signal);
  io::save_grmx(out / "stats.grmx", {k1, k2, s});
  OJson meta = stamp(c);
  meta["n"] = c.grid.n();
  meta["p"] = c.p;
  meta["sigma1"] = c.grid.sigma1;
  meta["sigma2"] = c.grid.sigma2;
  meta["nugget"] = c.grid.nugget;
  meta["seed"] = c.seeds.front();
  meta["generator"] = "squared-exponential";
  meta["contents"] = {"K1", "K2", "s"};
  write_json(out / "stats.json", meta);

  struct Cell {
    std::uint64_t seed;
    Index count;
    int cls;
  };
  std::vector<Cell> cells;
  for (auto seed : c.simulated_seeds())
    for (Index count : c.sample_sizes)
      for (int cls : {1, 2}) cells.push_back({seed, count, cls});

  const GaussianSampler sampler1(k1);
  const GaussianSampler sampler2(k2);
  const Vector zero = Vector::Zero(c.grid.n());
  OJson files = OJson::array();
  std::vector<std::string> names(cells.size());
  parallel_for(cells.size(), c.threads, [&](std::size_t i) {
    const Cell& cell = cells[i];
    const Stream stream = cell.cls == 1 ? Stream::dataset1 : Stream::dataset2;
    const std::uint64_t data_seed = derive_seed(cell.seed, stream, static_cast<std::uint64_t>(cell.count));
    const Matrix images = (cell.cls == 1 ? sampler1 : sampler2)
                              .sample(cell.cls == 1 ? s : zero, cell.count, data_seed);
    const std::string stem =
        "datasets/" + seed_tag(cell.seed) + "/N" + std::to_string(cell.count) + "_class" + std::to_string(cell.cls);
    io::save_grmx(out / (stem + ".grmx"), {images});
    OJson side = stamp(c);
    side["seed"] = cell.seed;
    side["class"] = cell.cls;
    side["N"] = cell.count;
    side["grid"] = {{"side", c.grid.side}, {"sigma1", c.grid.sigma1}, {"sigma2", c.grid.sigma2}, {"nugget", c.grid.nugget}};
    side["n"] = c.grid.n();
    side["sampling_seed"] = data_seed;
    write_json(out / (stem + ".json"), side);
    if (c.write_pgm) io::write_file_atomic(out / (stem + ".pgm"), to_pgm(images.row(0).transpose(), c.grid.side));
    names[i] = stem + ".grmx";
  });
  for (const auto& n : names) files.push_back(n);
  OJson summary = stamp(c);
  summary["datasets"] = files;
  write_json(out / "simulate.json", summary);
  return summary;
}

// ---- covtable ---------------------------------------------------------------------

struct CovRow {
  Index count = 0;
  std::vector<double> err1;  // one per seed, in seed order
  std::vector<double> err2;
};

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw ContractViolation("median of an empty series");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Frobenius error of the sample covariance for every (N, seed) cell.
inline std::vector<CovRow> covtable_rows(const ExperimentConfig& c) {
  const Matrix k1 = build_covariance(c.grid, 1);
  const Matrix k2 = build_covariance(c.grid, 2);
  const GaussianSampler sampler1(k1);
  const GaussianSampler sampler2(k2);
  const Vector zero = Vector::Zero(c.grid.n());
  const std::size_t ns = c.seeds.size();
  std::vector<CovRow> rows(c.sample_sizes.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    rows[r].count = c.sample_sizes[r];
    rows[r].err1.assign(ns, 0.0);
    rows[r].err2.assign(ns, 0.0);
  }
  parallel_for(rows.size() * ns * 2, c.threads, [&](std::size_t i) {
    const std::size_t r = i / (2 * ns);
    const std::size_t si = (i / 2) % ns;
    const int cls = static_cast<int>(i % 2) + 1;
    const Index count = rows[r].count;
    const std::uint64_t seed = derive_seed(c.seeds[si], Stream::covtable, static_cast<std::uint64_t>(count),
                                           static_cast<std::uint64_t>(cls));
    const Matrix images = (cls == 1 ? sampler1 : sampler2).sample(zero, count, seed);
    const double err = (sample_covariance(images) - (cls == 1 ? k1 : k2)).norm();
    (cls == 1 ? rows[r].err1 : rows[r].err2)[si] = err;
  });
  return rows;
}

inline OJson cmd_covtable(const ExperimentConfig& c) {
  const auto rows = covtable_rows(c);
  std::string csv = "N,mean1,std1,median1,mean2,std2,median2\n";
  std::string cells = "N,seed,err1,err2\n";
  OJson table = OJson::array();
  for (const auto& r : rows) {
    csv += std::to_string(r.count) + ',' + io::format_double(mean_of(r.err1)) + ',' +
           io::format_double(std_of(r.err1)) + ',' + io::format_double(median_of(r.err1)) + ',' +
           io::format_double(mean_of(r.err2)) + ',' + io::format_double(std_of(r.err2)) + ',' +
           io::format_double(median_of(r.err2)) + '\n';
    for (std::size_t i = 0; i < c.seeds.size(); ++i) {
      cells += std::to_string(r.count) + ',' + std::to_string(c.seeds[i]) + ',' + io::format_double(r.err1[i]) +
               ',' + io::format_double(r.err2[i]) + '\n';
    }
    table.push_back({{"N", r.count},
                     {"mean1", mean_of(r.err1)},
                     {"std1", std_of(r.err1)},
                     {"median1", median_of(r.err1)},
                     {"mean2", mean_of(r.err2)},
                     {"std2", std_of(r.err2)},
                     {"median2", median_of(r.err2)}});
  }
  const fs::path out(c.out);
  io::write_file_atomic(out / "covtable.csv", csv);
  io::write_file_atomic(out / "covtable_cells.csv", cells);
  OJson summary = stamp(c);
  summary["n"] = c.grid.n();
  summary["rows"] = table;
  write_json(out / "covtable.json", summary);
  return summary;
}

// ---- optimize ----------------------------------------------------------------------

struct RunOutcome {
  std::string run;
  std::uint64_t seed = 0;
  RunResult result;
};

inline OracleKind make_oracle_kind(const RunSpec& r, const Problem& pr, std::uint64_t seed) {
  const auto& o = r.oracle;
  if (o.kind == "exact") return oracle::Exact{};
  if (o.kind == "additive") return oracle::AdditiveSchedule{o.c, o.exponent};
  if (o.kind == "relative") return oracle::RelativeBounded{o.delta};
  const auto refresh = o.refresh == "fixed" ? oracle::Refresh::Fixed : oracle::Refresh::Redraw;
  if (o.kind == "perturbed") {
    return oracle::SurrogateStats{pr.stats, oracle::PerturbPolicy{derive_seed(seed, Stream::perturb)}, refresh, {}};
  }
  // Training images depend only on (seed, n_train), so sample runs with the
  // same n_train share them.
  const auto n_train = static_cast<std::uint64_t>(o.n_train);
  const Vector zero = Vector::Zero(pr.stats.n());
  const Matrix g1 = sample_images(pr.stats.k1(), pr.stats.s(), o.n_train, derive_seed(seed, Stream::train1, n_train)).images;
  const Matrix g2 = sample_images(pr.stats.k2(), zero, o.n_train, derive_seed(seed, Stream::train2, n_train)).images;
  const Vector s_hat = (g1.colwise().mean() - g2.colwise().mean()).transpose();
  return oracle::SurrogateStats{
      ClassStats::make(shrink(sample_covariance(g1), o.shrinkage), shrink(sample_covariance(g2), o.shrinkage), s_hat),
      std::nullopt, refresh, {}};
}

inline RunResult run_one(const ExperimentConfig& c, const RunSpec& r, const Problem& pr, std::uint64_t seed,
                         bool record_timing = false) {
  GradientOracle oracle(make_oracle_kind(r, pr, seed), derive_seed(seed, Stream::oracle));
  const GrassmannPoint x0 = start_point(c, seed);
  RunOptions opts;
  opts.reference = &pr.truth;
  opts.record_timing = record_timing;
  opts.meta.seed = seed;
  opts.meta.threads = c.threads;
  OJson cj = canonical_json(c);
  cj["run"] = r.name;
  opts.meta.config_json = cj.dump();
  const auto& op = r.optimizer;
  if (op.kind == "line_search") {
    LineSearchConfig ls;
    ls.eta0 = op.eta0;
    ls.beta = op.beta;
    ls.sigma = op.sigma;
    ls.max_backtracks = op.max_backtracks;
    ls.max_iters = c.iters;
    ls.warm_start = op.warm_start;
    return rigd_ls_run(pr.truth, oracle, x0, ls, opts);
  }
  FixedStepConfig fc;
  fc.max_iters = c.iters;
  if (op.rule == "constant") {
    fc.step_rule = step::Constant{op.eta};
  } else if (op.rule == "corollary1") {
    fc.step_rule = step::CorollaryI{*op.lipschitz};
  } else {
    fc.step_rule = step::CorollaryII{*op.lipschitz};
  }
  return rigd_run(pr.truth, oracle, x0, fc, opts);
}

inline std::vector<RunOutcome> optimize_all(const ExperimentConfig& c, const Problem& pr) {
  std::vector<RunOutcome> outcomes;
  for (const auto& r : c.runs)
    for (auto seed : c.seeds) outcomes.push_back(RunOutcome{r.name, seed, RunResult{start_point(c, seed), {}, {}}});
  parallel_for(outcomes.size(), c.threads, [&](std::size_t i) {
    const RunSpec& r = c.runs[i / c.seeds.size()];
    outcomes[i].result = run_one(c, r, pr, outcomes[i].seed);
  });
  return outcomes;
}

inline std::string point_stem(const std::string& run, std::uint64_t seed) { return run + "_" + seed_tag(seed); }

/// Trace CSV + metadata and final point for every (run, seed).
inline OJson cmd_optimize(const ExperimentConfig& c) {
  if (c.runs.empty()) throw ConfigError("optimize: config has no runs");
  const Problem pr = make_problem(c);
  const auto outcomes = optimize_all(c, pr);
  const fs::path out(c.out);
  const std::string hash = config_hash(c);
  OJson runs = OJson::array();
  for (const auto& o : outcomes) {
    const std::string stem = point_stem(o.run, o.seed);
    io::write_file_atomic(out / "traces" / (stem + ".csv"), io::trace_to_csv(o.result.trace));
    OJson tmeta = io::trace_metadata_json(o.result.trace);
    tmeta["config_hash"] = hash;
    tmeta["run"] = o.run;
    write_json(out / "traces" / (stem + ".json"), tmeta);

    const double j_final = jeffreys(pr.stats, o.result.x_final);
    io::save_grmx(out / "points" / (stem + ".grmx"), {o.result.x_final.basis()});
    OJson pmeta;
    pmeta["config_hash"] = hash;
    pmeta["run"] = o.run;
    pmeta["seed"] = o.seed;
    pmeta["n"] = o.result.x_final.n();
    pmeta["p"] = o.result.x_final.p();
    pmeta["j_value"] = j_final;
    pmeta["j_star"] = pr.fk ? OJson(pr.fk->j_closed_form) : OJson(nullptr);
    write_json(out / "points" / (stem + ".json"), pmeta);

    OJson row{{"run", o.run}, {"seed", o.seed}, {"j_final", j_final}, {"iterations", o.result.trace.records.size()}};
    const auto& last = o.result.trace.records.back();
    row["grad_norm_final"] = last.true_grad_norm ? OJson(*last.true_grad_norm) : OJson(nullptr);
    runs.push_back(row);
  }
  if (pr.fk) io::save_grmx(out / "points" / "fk.grmx", {pr.fk->t_star.basis()});
  OJson summary = stamp(c);
  summary["j_star"] = pr.fk ? OJson(pr.fk->j_closed_form) : OJson(nullptr);
  summary["runs"] = runs;
  write_json(out / "optimize.json", summary);
  return summary;
}

// ---- evaluate -----------------------------------------------------------------------

struct PointEvaluation {
  double auc = 0.5;
  double j_value = 0.0;
  double grad_norm = 0.0;
  std::optional<double> distance_to_fk;
  std::vector<double> scores1;
  std::vector<double> scores2;
};

/// LLR scores under the true channelized statistics at x.
inline PointEvaluation evaluate_point(const Problem& pr, const GrassmannPoint& x, const TestSet& test) {
  const ChannelizedStats ch = channelize(pr.stats, x);
  const Vector m1 = ch.ts;
  const Vector m2 = Vector::Zero(x.p());
  PointEvaluation ev;
  ev.scores1 = llr_scores(ch, m1, m2, test.class1 * x.basis());
  ev.scores2 = llr_scores(ch, m1, m2, test.class2 * x.basis());
  ev.auc = auc(ev.scores1, ev.scores2).auc;
  ev.j_value = jeffreys(ch, static_cast<double>(x.p()));
  ev.grad_norm = project_tangent(x, jeffreys_grad_ambient(pr.stats, x)).mat().norm();
  if (pr.fk) ev.distance_to_fk = subspace_distance(x, pr.fk->t_star);
  return ev;
}

struct SeedBaseline {
  double auc_fk = 0.0;
  double auc_start = 0.0;
};

struct EvaluationSummary {
  std::vector<std::string> runs;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> auc;  // [run][seed]
  std::vector<SeedBaseline> baseline;    // [seed]
  OJson json;
};

inline std::string scores_csv(const PointEvaluation& ev) {
  std::string s = "label,score\n";
  for (double v : ev.scores1) s += "1," + io::format_double(v) + '\n';
  for (double v : ev.scores2) s += "2," + io::format_double(v) + '\n';
  return s;
}

inline OJson evaluation_json(const PointEvaluation& ev, const Problem& pr, const std::string& hash) {
  OJson j;
  j["auc"] = ev.auc;
  j["j_value"] = ev.j_value;
  j["j_star"] = pr.fk ? OJson(pr.fk->j_closed_form) : OJson(nullptr);
  j["grad_norm"] = ev.grad_norm;
  j["config_hash"] = hash;
  j["distance_to_fk"] = ev.distance_to_fk ? OJson(*ev.distance_to_fk) : OJson(nullptr);
  return j;
}

/// Loads a point written by cmd_optimize and checks that it belongs to `c`.
inline GrassmannPoint load_point(const fs::path& stem_path, const std::string& hash, Index n, Index p) {
  fs::path meta_path = stem_path;
  meta_path += ".json";
  fs::path grmx_path = stem_path;
  grmx_path += ".grmx";
  const OJson meta = read_json(meta_path);
  if (!meta.contains("config_hash") || meta.at("config_hash").get<std::string>() != hash) {
    throw ConfigError(grmx_path.string() + " was produced by a different config (hash mismatch)");
  }
  const auto mats = io::load_grmx(grmx_path);
  if (mats.size() != 1 || mats[0].rows() != n || mats[0].cols() != p) {
    throw DimensionError(grmx_path.string() + ": expected one " + std::to_string(n) + "x" + std::to_string(p) +
                         " matrix");
  }
  return GrassmannPoint::from_orthonormal(mats[0], 1e-8);
}

/// Evaluates the given final points, plus the FK optimum and the starting
/// point of every seed. `points[r][s]` belongs to c.runs[r], c.seeds[s].
inline EvaluationSummary evaluate_points(const ExperimentConfig& c, const Problem& pr,
                                         const std::vector<std::vector<GrassmannPoint>>& points,
                                         const fs::path* out = nullptr) {
  const std::string hash = config_hash(c);
  const std::size_t ns = c.seeds.size();
  const std::size_t nr = c.runs.size();
  std::vector<TestSet> tests(ns);
  parallel_for(ns, c.threads, [&](std::size_t s) { tests[s] = test_set(pr, c, c.seeds[s]); });

  std::vector<PointEvaluation> evals(nr * ns);
  std::vector<SeedBaseline> base(ns);
  parallel_for(nr * ns + ns, c.threads, [&](std::size_t i) {
    if (i < nr * ns) {
      evals[i] = evaluate_point(pr, points[i / ns][i % ns], tests[i % ns]);
      return;
    }
    const std::size_t s = i - nr * ns;
    if (pr.fk) base[s].auc_fk = evaluate_point(pr, pr.fk->t_star, tests[s]).auc;
    base[s].auc_start = evaluate_point(pr, start_point(c, c.seeds[s]), tests[s]).auc;
  });

  EvaluationSummary sum;
  sum.seeds = c.seeds;
  sum.baseline = base;
  OJson runs = OJson::array();
  for (std::size_t r = 0; r < nr; ++r) {
    sum.runs.push_back(c.runs[r].name);
    std::vector<double> aucs;
    for (std::size_t s = 0; s < ns; ++s) {
      const auto& ev = evals[r * ns + s];
      aucs.push_back(ev.auc);
      if (out) {
        const std::string stem = point_stem(c.runs[r].name, c.seeds[s]);
        write_json(*out / "eval" / (stem + ".json"), evaluation_json(ev, pr, hash));
        io::write_file_atomic(*out / "eval" / (stem + "_scores.csv"), scores_csv(ev));
      }
    }
    runs.push_back({{"run", c.runs[r].name}, {"auc", aucs}, {"auc_median", median_of(aucs)}});
    sum.auc.push_back(std::move(aucs));
  }
  std::vector<double> fk_aucs;
  std::vector<double> start_aucs;
  for (const auto& b : base) {
    fk_aucs.push_back(b.auc_fk);
    start_aucs.push_back(b.auc_start);
  }
  sum.json = stamp(c);
  sum.json["seeds"] = c.seeds;
  sum.json["test_per_class"] = c.test_per_class;
  sum.json["j_star"] = pr.fk ? OJson(pr.fk->j_closed_form) : OJson(nullptr);
  if (pr.fk) {
    sum.json["fk"] = {{"auc", fk_aucs}, {"auc_median", median_of(fk_aucs)}};
  } else {
    sum.json["fk"] = nullptr;
  }
  sum.json["start"] = {{"auc", start_aucs}, {"auc_median", median_of(start_aucs)}};
  sum.json["runs"] = runs;
  return sum;
}

/// Reads the points written by cmd_optimize for the same config and reports
/// AUC, J, gradient norm and distance to the FK optimum for each.
inline OJson cmd_evaluate(const ExperimentConfig& c) {
  if (c.runs.empty()) throw ConfigError("evaluate: config has no runs");
  const Problem pr = make_problem(c);
  const fs::path out(c.out);
  const std::string hash = config_hash(c);
  std::vector<std::vector<GrassmannPoint>> points(c.runs.size());
  for (std::size_t r = 0; r < c.runs.size(); ++r) {
    for (auto seed : c.seeds) {
      points[r].push_back(load_point(out / "points" / point_stem(c.runs[r].name, seed), hash, c.grid.n(), c.p));
    }
  }
  auto sum = evaluate_points(c, pr, points, &out);
  write_json(out / "evaluate.json", sum.json);
  return sum.json;
}

// ---- ratecheck ------------------------------------------------------------------------

/// SPD test matrix Q diag(d) Q^T: the top p eigenvalues equal `spread`, the
/// rest decrease linearly from 1 to 0.5.
inline Matrix rate_matrix(const RateCheckSpec& r, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, Stream::rayleigh));
  Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(r.n, r.n, rng));
  const Matrix q = qr.householderQ();
  Vector d(r.n);
  for (Index i = 0; i < r.n; ++i) d(i) = i < r.p ? r.spread : 1.0 - 0.5 * static_cast<double>(i) / static_cast<double>(r.n);
  Matrix a = q * d.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

struct RateSeries {
  std::string label;
  std::vector<double> slopes;  // per seed
  double slope = 0.0;          // mean of the per-seed slopes
};

/// Slope of log min_grad_so_far against log k over [k_min, k_max] for one
/// oracle / step rule, averaged over seeds. Exact-oracle series that reach
/// exactly zero are cut at the first zero.
inline RateSeries rate_series(const RateCheckSpec& r, const std::string& label, const OracleKind& kind,
                              bool corollary2, int threads) {
  RateSeries out;
  out.label = label;
  out.slopes.assign(r.seeds.size(), 0.0);
  parallel_for(r.seeds.size(), threads, [&](std::size_t i) {
    const std::uint64_t seed = r.seeds[i];
    const Matrix a = rate_matrix(r, seed);
    const Objective obj = rayleigh_objective(a);
    const double lip = rayleigh_lipschitz(a);
    std::mt19937_64 rng(derive_seed(seed, Stream::start));
    const GrassmannPoint x0 = random_point(r.n, r.p, rng);
    GradientOracle oracle(kind, derive_seed(seed, Stream::oracle));
    FixedStepConfig fc;
    fc.max_iters = r.iters;
    if (corollary2) {
      fc.step_rule = step::CorollaryII{lip};
    } else {
      fc.step_rule = step::CorollaryI{lip};
    }
    RunOptions opts;
    opts.reference = &obj;
    opts.record_timing = false;
    const auto res = rigd_run(obj, oracle, x0, fc, opts);
    const auto mg = min_grad_so_far(res.trace);
    std::vector<double> ks;
    std::vector<double> vs;
    for (std::size_t k = 0; k < mg.size() && mg[k] > 0; ++k) {
      ks.push_back(static_cast<double>(k));
      vs.push_back(mg[k]);
    }
    out.slopes[i] = rate_fit(ks, vs, r.k_min, r.k_max);
  });
  out.slope = mean_of(out.slopes);
  return out;
}

struct RateCheckResult {
  RateSeries corollary1;
  RateSeries corollary2;
  RateSeries exact;
  RateSeries constant_error;
  bool in_band = false;
  bool exact_ok = false;
  bool control_rejected = false;
  bool pass = false;
  OJson json;
};

inline RateCheckResult ratecheck(const ExperimentConfig& c) {
  const auto& r = c.ratecheck;
  RateCheckResult res;
  res.corollary1 = rate_series(r, "corollary1", oracle::AdditiveSchedule{r.c, r.exponent}, false, c.threads);
  res.corollary2 = rate_series(r, "corollary2", oracle::AdditiveSchedule{r.c, r.exponent}, true, c.threads);
  res.exact = rate_series(r, "exact", oracle::Exact{}, false, c.threads);
  res.constant_error = rate_series(r, "constant_error", oracle::AdditiveSchedule{r.c, 0.0}, false, c.threads);
  auto in_band = [&](double s) { return s >= r.band_lo && s <= r.band_hi; };
  res.in_band = in_band(res.corollary1.slope);
  res.exact_ok = res.exact.slope <= r.band_hi;
  res.control_rejected = !in_band(res.constant_error.slope);
  res.pass = res.in_band && res.exact_ok && res.control_rejected;

  auto series_json = [&](const RateSeries& s) {
    return OJson{{"slope", s.slope}, {"per_seed", s.slopes}, {"in_band", in_band(s.slope)}};
  };
  res.json = stamp(c);
  res.json["band"] = {r.band_lo, r.band_hi};
  res.json["k_range"] = {r.k_min, r.k_max};
  res.json["corollary1"] = series_json(res.corollary1);
  res.json["corollary2"] = series_json(res.corollary2);
  res.json["exact"] = series_json(res.exact);
  res.json["constant_error"] = series_json(res.constant_error);
  res.json["checks"] = {{"corollary1_in_band", res.in_band},
                        {"exact_at_least_as_steep", res.exact_ok},
                        {"constant_error_rejected", res.control_rejected}};
  res.json["pass"] = res.pass;
  return res;
}

inline RateCheckResult cmd_ratecheck(const ExperimentConfig& c) {
  auto res = ratecheck(c);
  write_json(fs::path(c.out) / "ratecheck.json", res.json);
  return res;
}

}  // namespace grassopt::experiment
