#pragma once

// Trace serialization: one CSV row per iteration plus a JSON sidecar with the
// run metadata. Unavailable optional values are written as empty fields.

#include <charconv>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "grassopt/matrix_io.hpp"
#include "grassopt/optimizer.hpp"

namespace grassopt::io {

inline constexpr const char* kTraceHeader = "k,f,J,delta_norm,grad_norm,err_norm,eta,backtracks,func_evals,wall_ns";

namespace detail {

inline std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline std::int64_t parse_int(const std::string& text) {
  std::int64_t v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw IoError("trace CSV: bad integer '" + text + "'");
  return v;
}

}  // namespace detail

inline std::string trace_to_csv(const Trace& trace) {
  std::ostringstream os;
  os << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    os << r.k << ',' << format_double(r.f_value) << ',' << detail::opt_field(r.j_value) << ','
       << format_double(r.delta_norm) << ',' << detail::opt_field(r.true_grad_norm) << ','
       << detail::opt_field(r.err_norm) << ',' << format_double(r.eta_used) << ',' << r.backtracks << ','
       << r.func_evals << ',';
    if (trace.meta.timed) os << r.wall_ns;
    os << '\n';
  }
  return os.str();
}

/// Inverse of trace_to_csv for the numeric columns; metadata is not restored.
inline Trace trace_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw IoError("trace CSV: unexpected header");
  Trace trace;
  auto num = [](const std::string& f) -> std::optional<double> {
    if (f.empty()) return std::nullopt;
    return parse_double(f);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) fields.push_back(cell);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 10) throw IoError("trace CSV: expected 10 fields per row");
    IterationRecord r;
    r.k = detail::parse_int(fields[0]);
    r.f_value = num(fields[1]).value_or(0.0);
    r.j_value = num(fields[2]);
    r.delta_norm = num(fields[3]).value_or(0.0);
    r.true_grad_norm = num(fields[4]);
    r.err_norm = num(fields[5]);
    r.eta_used = num(fields[6]).value_or(0.0);
    r.backtracks = static_cast<int>(detail::parse_int(fields[7]));
    r.func_evals = detail::parse_int(fields[8]);
    if (!fields[9].empty()) {
      r.wall_ns = detail::parse_int(fields[9]);
      trace.meta.timed = true;
    }
    trace.records.push_back(r);
  }
  return trace;
}

inline nlohmann::ordered_json trace_metadata_json(const Trace& trace) {
  nlohmann::ordered_json j;
  j["seed"] = trace.meta.seed;
  j["algorithm"] = trace.meta.algorithm;
  j["oracle"] = trace.meta.oracle;
  j["threads"] = trace.meta.threads;
  j["iterations"] = trace.records.size();
  j["timed"] = trace.meta.timed;
  j["config"] = trace.meta.config_json.empty() ? nlohmann::ordered_json(nullptr)
                                                : nlohmann::ordered_json::parse(trace.meta.config_json);
  return j;
}

}  // namespace grassopt::io
