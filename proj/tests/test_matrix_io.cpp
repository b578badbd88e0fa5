#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "grassopt/matrix_io.hpp"
#include "grassopt/trace_io.hpp"

using namespace grassopt;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("grassopt_io_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Matrix awkward_matrix() {
  Matrix m(3, 2);
  m << 0.1, -1e-300, 1.0 / 3.0, 6.02214076e23, -0.0, std::numeric_limits<double>::denorm_min();
  return m;
}

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    ASSERT_EQ(std::stod(io::format_double(v)), v);
  }
}

TEST(Csv, RoundTrip) {
  const Matrix m = awkward_matrix();
  const Matrix back = io::from_csv(io::to_csv(m));
  ASSERT_EQ(back.rows(), 3);
  ASSERT_EQ(back.cols(), 2);
  EXPECT_EQ(back, m);
}

TEST(Csv, RejectsRaggedAndGarbage) {
  EXPECT_THROW(io::from_csv("1,2\n3\n"), IoError);
  EXPECT_THROW(io::from_csv("1,x\n"), IoError);
}

TEST(Grmx, SingleRecordLayout) {
  Matrix m(1, 2);
  m << 1.5, -2.0;
  const std::string buf = io::to_grmx({m});
  ASSERT_EQ(buf.size(), 4u + 8u + 16u);
  EXPECT_EQ(buf.substr(0, 4), "GRMX");
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::memcpy(&rows, buf.data() + 4, 4);
  std::memcpy(&cols, buf.data() + 8, 4);
  EXPECT_EQ(rows, 1u);
  EXPECT_EQ(cols, 2u);
  double second = 0;
  std::memcpy(&second, buf.data() + 20, 8);
  EXPECT_EQ(second, -2.0);
}

TEST(Grmx, MultiRecordRoundTrip) {
  const Matrix a = awkward_matrix();
  const Matrix b = Matrix::Identity(4, 4);
  const Matrix s = Matrix::Constant(4, 1, 0.25);
  const auto back = io::from_grmx(io::to_grmx({a, b, s}));
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0], a);
  EXPECT_EQ(back[1], b);
  EXPECT_EQ(back[2], s);
}

TEST(Grmx, DetectsCorruption) {
  std::string buf = io::to_grmx({Matrix::Ones(2, 2)});
  EXPECT_THROW(io::from_grmx(buf.substr(0, buf.size() - 1)), IoError);
  buf[0] = 'X';
  EXPECT_THROW(io::from_grmx(buf), IoError);
  EXPECT_TRUE(io::from_grmx("").empty());
}

TEST(Files, AtomicWriteAndLoad) {
  const fs::path dir = scratch_dir("files");
  const Matrix m = awkward_matrix();
  io::save_grmx(dir / "sub" / "m.grmx", {m});
  io::save_csv(dir / "m.csv", m);
  EXPECT_EQ(io::load_grmx(dir / "sub" / "m.grmx").front(), m);
  EXPECT_EQ(io::load_csv(dir / "m.csv"), m);
  EXPECT_FALSE(fs::exists(dir / "m.csv.tmp"));
  EXPECT_THROW(io::read_file(dir / "missing"), IoError);
}

TEST(TraceCsv, HeaderAndEmptyOptionals) {
  Trace t;
  IterationRecord a;
  a.k = 0;
  a.f_value = -1.25;
  a.delta_norm = 0.5;
  a.eta_used = 0.2;
  a.func_evals = 1;
  IterationRecord b = a;
  b.k = 1;
  b.j_value = 1.25;
  b.true_grad_norm = 0.4;
  b.err_norm = 0.1;
  b.backtracks = 3;
  b.func_evals = 5;
  t.records = {a, b};
  const std::string csv = io::trace_to_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,f,J,delta_norm,grad_norm,err_norm,eta,backtracks,func_evals,wall_ns");
  EXPECT_NE(csv.find("\n0,-1.25,,0.5,,,0.20000000000000001,0,1,\n"), std::string::npos);

  const Trace back = io::trace_from_csv(csv);
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_FALSE(back.records[0].j_value.has_value());
  EXPECT_EQ(back.records[1].j_value.value(), 1.25);
  EXPECT_EQ(back.records[1].err_norm.value(), 0.1);
  EXPECT_EQ(back.records[1].backtracks, 3);
  EXPECT_FALSE(back.meta.timed);
}

TEST(TraceCsv, TimingColumnOnlyWhenTimed) {
  Trace t;
  IterationRecord r;
  r.wall_ns = 1234;
  t.records = {r};
  EXPECT_EQ(io::trace_to_csv(t).find("1234"), std::string::npos);
  t.meta.timed = true;
  EXPECT_NE(io::trace_to_csv(t).find(",1234\n"), std::string::npos);
}

TEST(TraceJson, Metadata) {
  Trace t;
  t.meta.seed = 7;
  t.meta.algorithm = "rigd";
  t.meta.oracle = "exact";
  t.meta.threads = 2;
  t.meta.config_json = R"({"p":5})";
  const auto j = io::trace_metadata_json(t);
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["algorithm"], "rigd");
  EXPECT_EQ(j["threads"], 2);
  EXPECT_EQ(j["config"]["p"], 5);
}
