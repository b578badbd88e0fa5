#pragma once

// Matrix persistence.
//
// CSV: row-major, one matrix row per line, comma separated, no header,
// values printed with 17 significant digits so that they round-trip.
//
// GRMX: little-endian binary container. A file is a sequence of records;
// each record is
//     4 bytes   magic "GRMX"
//     u32       rows
//     u32       cols
//     f64 * rows * cols   data, row-major
// Single-matrix files hold one record; ClassStats files hold three
// (K1, K2, s as an n x 1 column).

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "grassopt/grassmann.hpp"

namespace grassopt::io {

static_assert(std::endian::native == std::endian::little,
              "GRMX reader/writer assumes a little-endian host");

inline constexpr std::array<char, 4> kGrmxMagic{'G', 'R', 'M', 'X'};

/// Full-string parse; accepts subnormals and the output of format_double.
inline double parse_double(const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw IoError("bad number: '" + text + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Writes `contents` to `path` through a sibling temp file and a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string to_csv(const Matrix& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline Matrix from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(parse_double(cell));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("ragged CSV: row " + std::to_string(rows.size() + 1));
    }
    rows.push_back(std::move(row));
  }
  const Index r = static_cast<Index>(rows.size());
  const Index c = r ? static_cast<Index>(rows.front().size()) : 0;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rows[i][j];
  return m;
}

inline void append_grmx(std::string& buf, const Matrix& m) {
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw IoError("matrix too large for GRMX");
  }
  buf.append(kGrmxMagic.data(), kGrmxMagic.size());
  const std::uint32_t rows = static_cast<std::uint32_t>(m.rows());
  const std::uint32_t cols = static_cast<std::uint32_t>(m.cols());
  buf.append(reinterpret_cast<const char*>(&rows), sizeof rows);
  buf.append(reinterpret_cast<const char*>(&cols), sizeof cols);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      buf.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
}

inline std::string to_grmx(const std::vector<Matrix>& mats) {
  std::string buf;
  for (const auto& m : mats) append_grmx(buf, m);
  return buf;
}

inline std::vector<Matrix> from_grmx(const std::string& buf) {
  std::vector<Matrix> out;
  std::size_t pos = 0;
  auto need = [&](std::size_t bytes) {
    if (buf.size() - pos < bytes) throw IoError("truncated GRMX record");
  };
  while (pos < buf.size()) {
    need(12);
    if (std::memcmp(buf.data() + pos, kGrmxMagic.data(), kGrmxMagic.size()) != 0) {
      throw IoError("bad GRMX magic");
    }
    pos += 4;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::memcpy(&rows, buf.data() + pos, 4);
    std::memcpy(&cols, buf.data() + pos + 4, 4);
    pos += 8;
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    need(count * sizeof(double));
    Matrix m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) {
        double v = 0;
        std::memcpy(&v, buf.data() + pos, sizeof v);
        pos += sizeof v;
        m(i, j) = v;
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline void save_grmx(const std::filesystem::path& path, const std::vector<Matrix>& mats) {
  write_file_atomic(path, to_grmx(mats));
}

inline std::vector<Matrix> load_grmx(const std::filesystem::path& path) {
  return from_grmx(read_file(path));
}

inline void save_csv(const std::filesystem::path& path, const Matrix& m) {
  write_file_atomic(path, to_csv(m));
}

inline Matrix load_csv(const std::filesystem::path& path) { return from_csv(read_file(path)); }

}  // namespace grassopt::io
