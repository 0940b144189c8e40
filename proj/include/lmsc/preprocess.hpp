#pragma once

// Measurement trace ingestion and spatial decorrelation.
//
// Trace CSV: a header line `position_m,amplitude` (linear envelope) or
// `position_m,amplitude_db` (converted with 10^(v/20) on load), then one
// `position,value` record per line. UTF-8, '.' decimal separator, no quoting,
// optional trailing newline, blank lines ignored. Positions must be
// non-decreasing.
//
// Observation CSV: header `amplitude`, one value per line.
//
// Numbers are written in shortest round-trip form, so save followed by load
// reproduces every double exactly.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lmsc/error.hpp"
#include "lmsc/observation.hpp"

namespace lmsc {

struct MeasurementTrace {
  std::vector<double> positions;   // meters along track
  std::vector<double> amplitudes;  // linear envelope
  std::string id;

  std::size_t size() const noexcept { return positions.size(); }

  friend bool operator==(const MeasurementTrace& a, const MeasurementTrace& b) {
    return a.positions == b.positions && a.amplitudes == b.amplitudes;
  }
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 20.0); }

inline std::vector<double> db_to_linear(std::span<const double> values) {
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [](double v) { return db_to_linear(v); });
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

inline double parse_field(std::string_view field, std::size_t row, std::size_t column) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(value)) {
    throw Error(ErrorKind::parse, "row " + std::to_string(row) + ", column " + std::to_string(column) +
                                      ": cannot parse '" + std::string(field) + "' as a finite number");
  }
  return value;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= line.size(); ++k) {
    if (k == line.size() || line[k] == sep) {
      out.push_back(line.substr(start, k - start));
      start = k + 1;
    }
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path + "'");
}

}  // namespace detail

/// Parses trace CSV text. Data rows are numbered from 1 in diagnostics.
inline MeasurementTrace parse_trace(std::string_view text, std::string id = {}) {
  MeasurementTrace trace;
  trace.id = std::move(id);
  bool header_seen = false;
  bool in_db = false;
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = detail::trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (!header_seen) {
      if (line == "position_m,amplitude") {
        in_db = false;
      } else if (line == "position_m,amplitude_db") {
        in_db = true;
      } else {
        throw Error(ErrorKind::parse, "expected header 'position_m,amplitude' or 'position_m,amplitude_db'");
      }
      header_seen = true;
      continue;
    }
    ++row;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 2) {
      throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": expected 2 columns, found " +
                                        std::to_string(fields.size()));
    }
    const double position = detail::parse_field(fields[0], row, 1);
    const double value = detail::parse_field(fields[1], row, 2);
    if (!trace.positions.empty() && position < trace.positions.back()) {
      throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": positions must be non-decreasing");
    }
    trace.positions.push_back(position);
    trace.amplitudes.push_back(in_db ? db_to_linear(value) : value);
    if (end == text.size()) break;
  }
  if (!header_seen) throw Error(ErrorKind::parse, "missing header line");
  return trace;
}

inline MeasurementTrace load_trace(const std::string& path) {
  return parse_trace(detail::read_file(path), path);
}

inline std::string format_trace(const MeasurementTrace& trace) {
  std::string out = "position_m,amplitude\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    out += format_double(trace.positions[k]);
    out += ',';
    out += format_double(trace.amplitudes[k]);
    out += '\n';
  }
  return out;
}

inline void save_trace(const MeasurementTrace& trace, const std::string& path) {
  detail::write_file(path, format_trace(trace));
}

inline ObservationSequence parse_observations(std::string_view text, std::string source = {}) {
  ObservationSequence obs;
  obs.source = std::move(source);
  bool header_seen = false;
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = detail::trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (!line.empty()) {
      if (!header_seen) {
        if (line != "amplitude") throw Error(ErrorKind::parse, "expected header 'amplitude'");
        header_seen = true;
      } else {
        obs.values.push_back(detail::parse_field(line, ++row, 1));
      }
    }
    if (end == text.size()) break;
  }
  if (!header_seen) throw Error(ErrorKind::parse, "missing header line");
  return obs;
}

inline ObservationSequence load_observations(const std::string& path) {
  return parse_observations(detail::read_file(path), path);
}

inline std::string format_observations(std::span<const double> values) {
  std::string out = "amplitude\n";
  for (double v : values) {
    out += format_double(v);
    out += '\n';
  }
  return out;
}

inline void save_observations(std::span<const double> values, const std::string& path) {
  detail::write_file(path, format_observations(values));
}

/// Keeps the first record, then repeatedly the first record at or beyond
/// (last kept position + spacing). Kept samples are unmodified measurements.
inline ObservationSequence downsample_by_distance(const MeasurementTrace& trace, double spacing) {
  if (!(spacing > 0.0)) throw Error(ErrorKind::invalid_input, "spacing must be > 0");
  if (trace.size() == 0) throw Error(ErrorKind::invalid_input, "trace is empty");
  ObservationSequence obs;
  obs.spacing_m = spacing;
  obs.source = trace.id;
  obs.values.push_back(trace.amplitudes.front());
  obs.positions.push_back(trace.positions.front());
  double target = trace.positions.front() + spacing;
  for (std::size_t k = 1; k < trace.size(); ++k) {
    if (trace.positions[k] < target) continue;
    obs.values.push_back(trace.amplitudes[k]);
    obs.positions.push_back(trace.positions[k]);
    target = trace.positions[k] + spacing;
  }
  return obs;
}

}  // namespace lmsc
