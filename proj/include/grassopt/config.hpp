#pragma once

// Experiment configuration: JSON schema, named presets, validation and the
// config hash stamped on every artifact.
//
// A config file is a JSON object. "preset" selects a base configuration;
// every other key overrides it (objects merge recursively, arrays replace).
//
//   preset          string, one of preset_names()
//   grid            {side, sigma1, sigma2, nugget}
//   p               number of channels
//   signal          class-1 mean is signal * ones (0 for the heteroscedastic task)
//   seeds           list of u64
//   dataset_seeds   seeds for which `simulate` writes image files (default: seeds)
//   iters           optimizer iterations K
//   sample_sizes    list of N for simulate / covtable
//   test_per_class  held-out images per class for evaluate
//   write_pgm       simulate also writes the first image of each class as PGM
//   runs            list of {name, oracle, optimizer}
//     oracle        {kind: exact|additive|relative|perturbed|sample, c, exponent,
//                    delta, refresh: redraw|fixed, n_train, shrinkage}
//     optimizer     {kind: fixed|line_search, rule: constant|corollary1|corollary2,
//                    eta, lipschitz, eta0, beta, sigma, max_backtracks, warm_start}
//   ratecheck       {n, p, iters, seeds, spread, c, exponent, k_min, k_max, band}
//   out             output directory (not part of the hash)
//   threads         worker threads (not part of the hash)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "grassopt/errors.hpp"
#include "grassopt/grassmann.hpp"
#include "grassopt/optimizer.hpp"
#include "grassopt/oracle.hpp"
#include "grassopt/simulate.hpp"

namespace grassopt::experiment {

using Json = nlohmann::json;

struct OracleSpec {
  std::string kind = "exact";
  double c = 1.0;
  double exponent = 0.75;
  double delta = 0.3;
  std::string refresh = "redraw";
  Index n_train = 100;
  double shrinkage = 0.6;
};

struct OptimizerSpec {
  std::string kind = "fixed";
  std::string rule = "constant";
  double eta = 0.2;
  std::optional<double> lipschitz;
  double eta0 = 2.0;
  double beta = 0.7;
  double sigma = 1e-4;
  int max_backtracks = 60;
  bool warm_start = false;
};

struct RunSpec {
  std::string name;
  OracleSpec oracle;
  OptimizerSpec optimizer;
};

struct RateCheckSpec {
  Index n = 16;
  Index p = 2;
  std::int64_t iters = 2000;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double spread = 2.0;
  double c = 100.0;
  double exponent = 0.75;
  double k_min = 10;
  double k_max = 2000;
  double band_lo = -1.6;
  double band_hi = -0.8;
};

struct ExperimentConfig {
  std::string preset;
  GridSpec grid;
  Index p = 5;
  double signal = 0.0;
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::vector<std::uint64_t>> dataset_seeds;
  std::int64_t iters = 300;
  std::vector<Index> sample_sizes{10, 100};
  Index test_per_class = 2000;
  bool write_pgm = false;
  std::vector<RunSpec> runs;
  RateCheckSpec ratecheck;
  std::string out = "out";
  int threads = 1;

  const std::vector<std::uint64_t>& simulated_seeds() const { return dataset_seeds ? *dataset_seeds : seeds; }
};

// ---- presets ---------------------------------------------------------------

namespace detail {

inline Json run_json(const std::string& name, Json oracle, Json optimizer) {
  return Json{{"name", name}, {"oracle", std::move(oracle)}, {"optimizer", std::move(optimizer)}};
}

/// Six runs: exact, perturbed and sample oracles, each with fixed step and line search.
inline Json fig4_runs() {
  const Json fixed{{"kind", "fixed"}, {"rule", "constant"}, {"eta", 0.1}};
  const Json ls_sample{{"kind", "line_search"}, {"eta0", 1.0}, {"beta", 0.7}, {"sigma", 1e-4}};
  const Json ls_perturbed{{"kind", "line_search"}, {"eta0", 0.25}, {"beta", 0.7}, {"sigma", 1e-4}};
  const Json sample{{"kind", "sample"}, {"n_train", 100}, {"shrinkage", 0.6}};
  const Json perturbed{{"kind", "perturbed"}, {"refresh", "redraw"}};
  const Json exact{{"kind", "exact"}};
  return Json::array({run_json("rigd-sample", sample, fixed), run_json("rigd-ls-sample", sample, ls_sample),
                      run_json("rigd-perturbed", perturbed, fixed),
                      run_json("rigd-ls-perturbed", perturbed, ls_perturbed), run_json("rigd-exact", exact, fixed),
                      run_json("rigd-ls-exact", exact, ls_sample)});
}

inline Json seed_list(std::uint64_t count) {
  Json s = Json::array();
  for (std::uint64_t i = 0; i < count; ++i) s.push_back(i);
  return s;
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
  return {"fig4-desk", "fig4-paper", "table1", "table1-paper", "table2", "table2-paper", "ratecheck"};
}

inline Json preset_json(const std::string& name) {
  using detail::seed_list;
  const Json desk_grid{{"side", 16}, {"sigma1", 0.55}, {"sigma2", 0.30}, {"nugget", 1e-8}};
  const Json paper_grid{{"side", 50}, {"sigma1", 0.55}, {"sigma2", 0.30}, {"nugget", 1e-8}};
  if (name == "fig4-desk") {
    return Json{{"grid", desk_grid}, {"p", 5}, {"seeds", seed_list(1)}, {"iters", 300}, {"runs", detail::fig4_runs()}};
  }
  if (name == "fig4-paper") {
    return Json{{"grid", paper_grid}, {"p", 25}, {"seeds", seed_list(1)}, {"iters", 300}, {"runs", detail::fig4_runs()}};
  }
  if (name == "table1" || name == "table1-paper") {
    const bool paper = name == "table1-paper";
    return Json{{"grid", {{"side", paper ? 50 : 16}, {"sigma1", 3.0}, {"sigma2", 4.5}, {"nugget", 1e-6}}},
                {"seeds", seed_list(20)},
                {"dataset_seeds", seed_list(1)},
                {"sample_sizes", {10, 100, 1000, 10000}},
                {"runs", Json::array()}};
  }
  if (name == "table2") {
    return Json{{"grid", desk_grid},  {"p", 5},
                {"seeds", seed_list(5)}, {"iters", 300},
                {"test_per_class", 2000}, {"runs", detail::fig4_runs()}};
  }
  if (name == "table2-paper") {
    return Json{{"grid", paper_grid}, {"p", 25},
                {"seeds", seed_list(1)}, {"iters", 300},
                {"test_per_class", 2000}, {"runs", detail::fig4_runs()}};
  }
  if (name == "ratecheck") return Json{{"runs", Json::array()}};
  throw ConfigError("unknown preset '" + name + "'");
}

// ---- parsing ---------------------------------------------------------------

namespace detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline OracleSpec parse_oracle(const Json& j) {
  reject_unknown(j, {"kind", "c", "exponent", "delta", "refresh", "n_train", "shrinkage"}, "oracle");
  OracleSpec o;
  read(j, "kind", o.kind);
  read(j, "c", o.c);
  read(j, "exponent", o.exponent);
  read(j, "delta", o.delta);
  read(j, "refresh", o.refresh);
  read(j, "n_train", o.n_train);
  read(j, "shrinkage", o.shrinkage);
  return o;
}

inline OptimizerSpec parse_optimizer(const Json& j) {
  reject_unknown(j,
                 {"kind", "rule", "eta", "lipschitz", "eta0", "beta", "sigma", "max_backtracks", "warm_start"},
                 "optimizer");
  OptimizerSpec o;
  read(j, "kind", o.kind);
  read(j, "rule", o.rule);
  read(j, "eta", o.eta);
  if (j.contains("lipschitz") && !j.at("lipschitz").is_null()) o.lipschitz = j.at("lipschitz").get<double>();
  read(j, "eta0", o.eta0);
  read(j, "beta", o.beta);
  read(j, "sigma", o.sigma);
  read(j, "max_backtracks", o.max_backtracks);
  read(j, "warm_start", o.warm_start);
  return o;
}

inline RateCheckSpec parse_ratecheck(const Json& j) {
  reject_unknown(j, {"n", "p", "iters", "seeds", "spread", "c", "exponent", "k_min", "k_max", "band"}, "ratecheck");
  RateCheckSpec r;
  read(j, "n", r.n);
  read(j, "p", r.p);
  read(j, "iters", r.iters);
  read(j, "seeds", r.seeds);
  read(j, "spread", r.spread);
  read(j, "c", r.c);
  read(j, "exponent", r.exponent);
  read(j, "k_min", r.k_min);
  read(j, "k_max", r.k_max);
  if (j.contains("band")) {
    const auto band = j.at("band").get<std::vector<double>>();
    if (band.size() != 2) throw ConfigError("ratecheck.band must be [lo, hi]");
    r.band_lo = band[0];
    r.band_hi = band[1];
  }
  return r;
}

inline bool valid_run_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
  });
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  c.grid.validate();
  const Index n = c.grid.n();
  if (c.p < 1 || c.p >= n) throw ConfigError("p must satisfy 1 <= p < side^2");
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (c.iters < 1) throw ConfigError("iters must be >= 1");
  for (Index s : c.sample_sizes) {
    if (s < 2) throw ConfigError("sample sizes must be >= 2");
  }
  if (!std::is_sorted(c.sample_sizes.begin(), c.sample_sizes.end()) ||
      std::adjacent_find(c.sample_sizes.begin(), c.sample_sizes.end()) != c.sample_sizes.end()) {
    throw ConfigError("sample_sizes must be strictly increasing");
  }
  if (c.test_per_class < 1) throw ConfigError("test_per_class must be >= 1");
  if (!std::isfinite(c.signal)) throw ConfigError("signal must be finite");
  if (c.threads < 1) throw ConfigError("threads must be >= 1");

  std::set<std::string> names;
  for (const auto& r : c.runs) {
    if (!detail::valid_run_name(r.name)) throw ConfigError("run name '" + r.name + "' must match [a-z0-9_-]+");
    if (!names.insert(r.name).second) throw ConfigError("duplicate run name '" + r.name + "'");
    const auto& o = r.oracle;
    static const std::set<std::string> kinds{"exact", "additive", "relative", "perturbed", "sample"};
    if (!kinds.count(o.kind)) throw ConfigError("run " + r.name + ": unknown oracle kind '" + o.kind + "'");
    if (o.kind == "additive" && !(o.c > 0)) throw ConfigError("run " + r.name + ": additive c must be > 0");
    if (o.kind == "relative" && !(o.delta >= 0 && o.delta < 1)) {
      throw ConfigError("run " + r.name + ": delta must lie in [0, 1)");
    }
    if (o.refresh != "redraw" && o.refresh != "fixed") {
      throw ConfigError("run " + r.name + ": refresh must be 'redraw' or 'fixed'");
    }
    if (o.kind == "sample") {
      if (o.n_train < 2) throw ConfigError("run " + r.name + ": n_train must be >= 2");
      if (!(o.shrinkage > 0 && o.shrinkage < 1)) throw ConfigError("run " + r.name + ": shrinkage must lie in (0, 1)");
    }
    const auto& opt = r.optimizer;
    if (opt.kind == "fixed") {
      if (opt.rule == "constant") {
        if (!(opt.eta > 0)) throw ConfigError("run " + r.name + ": eta must be > 0");
      } else if (opt.rule == "corollary1" || opt.rule == "corollary2") {
        if (!opt.lipschitz || !(*opt.lipschitz > 0)) {
          throw ConfigError("run " + r.name + ": rule " + opt.rule + " needs a positive lipschitz constant");
        }
      } else {
        throw ConfigError("run " + r.name + ": unknown step rule '" + opt.rule + "'");
      }
    } else if (opt.kind == "line_search") {
      LineSearchConfig ls;
      ls.eta0 = opt.eta0;
      ls.beta = opt.beta;
      ls.sigma = opt.sigma;
      ls.max_backtracks = opt.max_backtracks;
      ls.max_iters = c.iters;
      ls.validate();
    } else {
      throw ConfigError("run " + r.name + ": optimizer kind must be 'fixed' or 'line_search'");
    }
  }

  const auto& rc = c.ratecheck;
  if (rc.p < 1 || rc.p >= rc.n) throw ConfigError("ratecheck: need 1 <= p < n");
  if (rc.iters < 1 || rc.seeds.empty()) throw ConfigError("ratecheck: need iters >= 1 and at least one seed");
  if (!(rc.spread > 1)) throw ConfigError("ratecheck: spread must be > 1");
  if (!(rc.c > 0)) throw ConfigError("ratecheck: c must be > 0");
  if (!(rc.k_min > 0 && rc.k_min < rc.k_max)) throw ConfigError("ratecheck: need 0 < k_min < k_max");
  if (!(rc.band_lo < rc.band_hi)) throw ConfigError("ratecheck: band must be increasing");
}

/// Resolves the preset, applies overrides, and validates.
inline ExperimentConfig parse_config(const Json& input) {
  if (!input.is_object()) throw ConfigError("config must be a JSON object");
  try {
    Json merged = Json::object();
    if (input.contains("preset")) merged = preset_json(input.at("preset").get<std::string>());
    merged.merge_patch(input);
    detail::reject_unknown(merged,
                           {"preset", "grid", "p", "signal", "seeds", "dataset_seeds", "iters", "sample_sizes",
                            "test_per_class", "write_pgm", "runs", "ratecheck", "out", "threads"},
                           "config");
    ExperimentConfig c;
    detail::read(merged, "preset", c.preset);
    if (merged.contains("grid")) {
      const Json& g = merged.at("grid");
      detail::reject_unknown(g, {"side", "sigma1", "sigma2", "nugget"}, "grid");
      detail::read(g, "side", c.grid.side);
      detail::read(g, "sigma1", c.grid.sigma1);
      detail::read(g, "sigma2", c.grid.sigma2);
      detail::read(g, "nugget", c.grid.nugget);
    }
    detail::read(merged, "p", c.p);
    detail::read(merged, "signal", c.signal);
    detail::read(merged, "seeds", c.seeds);
    if (merged.contains("dataset_seeds") && !merged.at("dataset_seeds").is_null()) {
      c.dataset_seeds = merged.at("dataset_seeds").get<std::vector<std::uint64_t>>();
    }
    detail::read(merged, "iters", c.iters);
    detail::read(merged, "sample_sizes", c.sample_sizes);
    detail::read(merged, "test_per_class", c.test_per_class);
    detail::read(merged, "write_pgm", c.write_pgm);
    if (merged.contains("runs")) {
      for (const Json& r : merged.at("runs")) {
        detail::reject_unknown(r, {"name", "oracle", "optimizer"}, "run");
        RunSpec spec;
        detail::read(r, "name", spec.name);
        if (r.contains("oracle")) spec.oracle = detail::parse_oracle(r.at("oracle"));
        if (r.contains("optimizer")) spec.optimizer = detail::parse_optimizer(r.at("optimizer"));
        c.runs.push_back(std::move(spec));
      }
    }
    if (merged.contains("ratecheck")) c.ratecheck = detail::parse_ratecheck(merged.at("ratecheck"));
    detail::read(merged, "out", c.out);
    detail::read(merged, "threads", c.threads);
    validate(c);
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

// ---- canonical form and hash -------------------------------------------------

/// Fully resolved configuration without `out` and `threads`. nlohmann::json
/// keeps keys sorted, so dump() is canonical.
inline Json canonical_json(const ExperimentConfig& c) {
  Json runs = Json::array();
  for (const auto& r : c.runs) {
    const auto& o = r.oracle;
    const auto& op = r.optimizer;
    Json opt{{"kind", op.kind},   {"rule", op.rule},   {"eta", op.eta},
             {"eta0", op.eta0},   {"beta", op.beta},   {"sigma", op.sigma},
             {"max_backtracks", op.max_backtracks}, {"warm_start", op.warm_start}};
    opt["lipschitz"] = op.lipschitz ? Json(*op.lipschitz) : Json(nullptr);
    runs.push_back(Json{{"name", r.name},
                        {"oracle",
                         {{"kind", o.kind},
                          {"c", o.c},
                          {"exponent", o.exponent},
                          {"delta", o.delta},
                          {"refresh", o.refresh},
                          {"n_train", o.n_train},
                          {"shrinkage", o.shrinkage}}},
                        {"optimizer", opt}});
  }
  const auto& rc = c.ratecheck;
  Json j{{"preset", c.preset},
         {"grid", {{"side", c.grid.side}, {"sigma1", c.grid.sigma1}, {"sigma2", c.grid.sigma2}, {"nugget", c.grid.nugget}}},
         {"p", c.p},
         {"signal", c.signal},
         {"seeds", c.seeds},
         {"iters", c.iters},
         {"sample_sizes", c.sample_sizes},
         {"test_per_class", c.test_per_class},
         {"write_pgm", c.write_pgm},
         {"runs", runs},
         {"ratecheck",
          {{"n", rc.n},
           {"p", rc.p},
           {"iters", rc.iters},
           {"seeds", rc.seeds},
           {"spread", rc.spread},
           {"c", rc.c},
           {"exponent", rc.exponent},
           {"k_min", rc.k_min},
           {"k_max", rc.k_max},
           {"band", {rc.band_lo, rc.band_hi}}}}};
  j["dataset_seeds"] = c.dataset_seeds ? Json(*c.dataset_seeds) : Json(nullptr);
  return j;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_json(c).dump())));
  return buf;
}

}  // namespace grassopt::experiment
