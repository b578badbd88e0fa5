#include <atomic>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "grassopt/experiment.hpp"

using namespace grassopt;
namespace ex = grassopt::experiment;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("grassopt_exp_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

ex::Json tiny_config(const fs::path& out) {
  ex::Json j = ex::Json::parse(R"({
    "grid": {"side": 4, "sigma1": 0.9, "sigma2": 0.5, "nugget": 1e-8},
    "p": 2,
    "seeds": [0, 1],
    "iters": 8,
    "sample_sizes": [3, 6],
    "test_per_class": 60,
    "runs": [
      {"name": "exact", "oracle": {"kind": "exact"}, "optimizer": {"kind": "fixed", "eta": 0.1}},
      {"name": "sample-ls", "oracle": {"kind": "sample", "n_train": 20},
       "optimizer": {"kind": "line_search", "eta0": 1.0}},
      {"name": "perturbed", "oracle": {"kind": "perturbed"}, "optimizer": {"kind": "fixed", "eta": 0.1}}
    ]
  })");
  j["out"] = out.string();
  return j;
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Config, EveryPresetParses) {
  for (const auto& name : ex::preset_names()) {
    const auto c = ex::parse_config(ex::Json{{"preset", name}});
    EXPECT_EQ(c.preset, name);
  }
  const auto t2 = ex::parse_config(ex::Json{{"preset", "table2"}});
  EXPECT_EQ(t2.grid.side, 16);
  EXPECT_EQ(t2.p, 5);
  EXPECT_EQ(t2.seeds.size(), 5u);
  EXPECT_EQ(t2.runs.size(), 6u);
  const auto t1 = ex::parse_config(ex::Json{{"preset", "table1"}});
  EXPECT_EQ(t1.grid.sigma1, 3.0);
  EXPECT_EQ(t1.grid.sigma2, 4.5);
  EXPECT_EQ(t1.seeds.size(), 20u);
  EXPECT_THROW(ex::parse_config(ex::Json{{"preset", "nope"}}), ConfigError);
}

TEST(Config, OverridesMergeIntoThePreset) {
  const auto c = ex::parse_config(ex::Json::parse(R"({"preset": "table2", "grid": {"side": 8}, "seeds": [7]})"));
  EXPECT_EQ(c.grid.side, 8);
  EXPECT_EQ(c.grid.sigma1, 0.55);
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{7});
  EXPECT_EQ(c.simulated_seeds(), std::vector<std::uint64_t>{7});
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(ex::parse_config_text(R"({"itres": 3})"), ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"grid": {"sid": 3}})"), ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"runs": [{"name": "a", "oracle": {"kind": "exact", "x": 1}}]})"),
               ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"p": 0})"), ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"grid": {"side": 2}, "p": 4})"), ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"iters": "many"})"), ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"sample_sizes": [10, 5]})"), ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"runs": [{"name": "Bad Name"}]})"), ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"runs": [{"name": "a"}, {"name": "a"}]})"), ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"runs": [{"name": "a", "oracle": {"kind": "magic"}}]})"), ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"runs": [{"name": "a", "oracle": {"kind": "relative", "delta": 1.5}}]})"),
               ConfigError);
  EXPECT_THROW(
      ex::parse_config_text(R"({"runs": [{"name": "a", "optimizer": {"kind": "fixed", "rule": "corollary1"}}]})"),
      ConfigError);
  EXPECT_THROW(ex::parse_config_text(R"({"runs": [{"name": "a", "optimizer": {"kind": "line_search", "beta": 1}}]})"),
               ConfigError);
  EXPECT_THROW(ex::parse_config_text("{not json"), ConfigError);
  EXPECT_THROW(ex::parse_config_text("[1, 2]"), ConfigError);
}

TEST(Config, HashIgnoresOutAndThreads) {
  const auto a = ex::parse_config_text(R"({"preset": "table2", "out": "a", "threads": 1})");
  const auto b = ex::parse_config_text(R"({"preset": "table2", "out": "b", "threads": 4})");
  const auto c = ex::parse_config_text(R"({"preset": "table2", "iters": 301})");
  EXPECT_EQ(ex::config_hash(a), ex::config_hash(b));
  EXPECT_NE(ex::config_hash(a), ex::config_hash(c));
  EXPECT_EQ(ex::config_hash(a).size(), 16u);
  // Spelling out a preset's values gives the same hash as naming the preset.
  ex::Json spelled = ex::canonical_json(a);
  spelled.erase("dataset_seeds");
  EXPECT_EQ(ex::config_hash(ex::parse_config(spelled)), ex::config_hash(a));
  // Reference FNV-1a values.
  EXPECT_EQ(ex::fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(ex::fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Seeds, StreamsAreDistinctAndStable) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (auto s : {ex::Stream::start, ex::Stream::oracle, ex::Stream::train1, ex::Stream::test1, ex::Stream::perturb}) {
      seen.insert(ex::derive_seed(seed, s));
      seen.insert(ex::derive_seed(seed, s, 100));
    }
  }
  EXPECT_EQ(seen.size(), 50u);
  EXPECT_EQ(ex::derive_seed(3, ex::Stream::test2, 9), ex::derive_seed(3, ex::Stream::test2, 9));
}

TEST(ParallelFor, CoversEveryIndexAndRethrowsTheFirstError) {
  for (int threads : {1, 3}) {
    std::vector<int> hits(100, 0);
    ex::parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) ASSERT_EQ(h, 1);
    try {
      ex::parallel_for(20, threads, [](std::size_t i) {
        if (i == 7 || i == 13) throw std::runtime_error("index " + std::to_string(i));
      });
      FAIL() << "expected an exception";
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "index 7");
    }
  }
}

TEST(Commands, SimulateWritesStampedArtifacts) {
  TempDir dir;
  auto j = tiny_config(dir.path());
  j["write_pgm"] = true;
  const auto c = ex::parse_config(j);
  ex::cmd_simulate(c);
  const fs::path out = dir.path();
  const auto stats = io::load_grmx(out / "stats.grmx");
  ASSERT_EQ(stats.size(), 3u);
  EXPECT_EQ(stats[0], build_covariance(c.grid, 1));
  for (std::uint64_t seed : {0, 1}) {
    for (int n : {3, 6}) {
      for (int cls : {1, 2}) {
        const std::string stem = "datasets/seed" + std::to_string(seed) + "/N" + std::to_string(n) + "_class" +
                                 std::to_string(cls);
        const auto m = io::load_grmx(out / (stem + ".grmx"));
        ASSERT_EQ(m.size(), 1u);
        EXPECT_EQ(m[0].rows(), n);
        EXPECT_EQ(m[0].cols(), 16);
        const auto side = ex::read_json(out / (stem + ".json"));
        EXPECT_EQ(side.at("config_hash"), ex::config_hash(c));
        EXPECT_EQ(side.at("N"), n);
        EXPECT_EQ(side.at("class"), cls);
        EXPECT_TRUE(fs::exists(out / (stem + ".pgm")));
      }
    }
  }
  EXPECT_EQ(slurp(out / "datasets/seed0/N3_class1.pgm").substr(0, 9), "P5\n4 4\n25");
}

TEST(Commands, CovtableRows) {
  TempDir dir;
  auto j = tiny_config(dir.path());
  j["sample_sizes"] = {5, 50};
  const auto c = ex::parse_config(j);
  const auto rows = ex::covtable_rows(c);
  ASSERT_EQ(rows.size(), 2u);
  ASSERT_EQ(rows[0].err1.size(), 2u);
  EXPECT_LT(ex::median_of(rows[1].err1), ex::median_of(rows[0].err1));
  EXPECT_LT(ex::median_of(rows[1].err2), ex::median_of(rows[0].err2));
  ex::cmd_covtable(c);
  const std::string csv = slurp(dir.path() / "covtable.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "N,mean1,std1,median1,mean2,std2,median2");
  EXPECT_TRUE(fs::exists(dir.path() / "covtable_cells.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "covtable.json"));
}

TEST(Commands, OptimizeThenEvaluate) {
  TempDir dir;
  const auto c = ex::parse_config(tiny_config(dir.path()));
  const auto opt = ex::cmd_optimize(c);
  ASSERT_EQ(opt.at("runs").size(), 6u);
  const fs::path out = dir.path();
  for (const auto& run : {"exact", "sample-ls", "perturbed"}) {
    for (int seed : {0, 1}) {
      const std::string stem = std::string(run) + "_seed" + std::to_string(seed);
      const auto trace = io::trace_from_csv(slurp(out / "traces" / (stem + ".csv")));
      ASSERT_EQ(trace.records.size(), 8u);
      EXPECT_TRUE(trace.records[0].true_grad_norm.has_value());
      EXPECT_FALSE(trace.meta.timed);
      const auto meta = ex::read_json(out / "traces" / (stem + ".json"));
      EXPECT_EQ(meta.at("config_hash"), ex::config_hash(c));
      EXPECT_EQ(meta.at("seed"), seed);
    }
  }
  // Every run of a seed starts from the same point.
  const auto a = io::trace_from_csv(slurp(out / "traces/exact_seed1.csv"));
  const auto b = io::trace_from_csv(slurp(out / "traces/perturbed_seed1.csv"));
  EXPECT_EQ(*a.records[0].j_value, *b.records[0].j_value);

  const auto ev = ex::cmd_evaluate(c);
  ASSERT_EQ(ev.at("runs").size(), 3u);
  const auto fk = ev.at("fk").at("auc").get<std::vector<double>>();
  for (double v : fk) EXPECT_GT(v, 0.5);
  const auto point_eval = ex::read_json(out / "eval/exact_seed0.json");
  EXPECT_EQ(point_eval.at("config_hash"), ex::config_hash(c));
  const std::string scores = slurp(out / "eval/exact_seed0_scores.csv");
  EXPECT_EQ(scores.substr(0, 12), "label,score\n");
  EXPECT_EQ(std::count(scores.begin(), scores.end(), '\n'), 121);

  // A changed config refuses points written under the old one.
  auto changed = tiny_config(dir.path());
  changed["iters"] = 9;
  EXPECT_THROW(ex::cmd_evaluate(ex::parse_config(changed)), ConfigError);
}

TEST(Commands, OutputsDoNotDependOnThreadCount) {
  TempDir d1;
  TempDir d2;
  auto j1 = tiny_config(d1.path());
  auto j2 = tiny_config(d2.path());
  j1["threads"] = 1;
  j2["threads"] = 3;
  const auto c1 = ex::parse_config(j1);
  const auto c2 = ex::parse_config(j2);
  for (const auto& c : {c1, c2}) {
    ex::cmd_simulate(c);
    ex::cmd_optimize(c);
    ex::cmd_evaluate(c);
  }
  const auto files = files_under(d1.path());
  ASSERT_EQ(files, files_under(d2.path()));
  for (const auto& f : files) {
    // Trace metadata records the thread count itself.
    if (f.parent_path() == "traces" && f.extension() == ".json") continue;
    EXPECT_EQ(slurp(d1.path() / f), slurp(d2.path() / f)) << f;
  }
}

TEST(Commands, RatecheckReportsSlopes) {
  TempDir dir;
  auto j = ex::Json::parse(R"({"preset": "ratecheck", "ratecheck": {"iters": 400, "k_max": 400, "seeds": [0, 1]}})");
  j["out"] = dir.path().string();
  const auto res = ex::cmd_ratecheck(ex::parse_config(j));
  EXPECT_EQ(res.corollary1.slopes.size(), 2u);
  EXPECT_LT(res.corollary1.slope, 0.0);
  EXPECT_LT(res.exact.slope, res.corollary1.slope);
  EXPECT_GT(res.constant_error.slope, res.corollary1.slope);
  const auto saved = ex::read_json(dir.path() / "ratecheck.json");
  EXPECT_EQ(saved.at("pass").get<bool>(), res.pass);
}
