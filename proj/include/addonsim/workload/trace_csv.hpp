#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "addonsim/core/error.hpp"
#include "addonsim/core/types.hpp"
#include "addonsim/workload/trace.hpp"

namespace addonsim::workload {

inline constexpr std::string_view kTraceCsvHeader = "request_id,arrival_ms,controlnet_ids,lora_ids,lora_sizes_mib";

namespace csv {

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  if (s.empty()) return {};
  return split(s, ';');
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline void check_id(const std::string& id) {
  detail::require(!id.empty() && id.find_first_of(",;\r\n") == std::string::npos,
                  "add-on id '" + id + "' is empty or contains a separator");
}

}  // namespace csv

// Trace CSV: the fixed header, `;`-separated lists, LF line endings.
inline void export_trace(std::ostream& os, const Trace& trace) {
  os << kTraceCsvHeader << '\n';
  for (const auto& r : trace.requests) {
    os << r.id << ',' << csv::format_double(r.arrival) << ',';
    for (std::size_t i = 0; i < r.controlnets.size(); ++i) {
      csv::check_id(r.controlnets[i]);
      os << (i ? ";" : "") << r.controlnets[i];
    }
    os << ',';
    for (std::size_t i = 0; i < r.loras.size(); ++i) {
      csv::check_id(r.loras[i].id);
      os << (i ? ";" : "") << r.loras[i].id;
    }
    os << ',';
    for (std::size_t i = 0; i < r.loras.size(); ++i) os << (i ? ";" : "") << csv::format_double(r.loras[i].size_mib);
    os << '\n';
  }
}

inline void export_trace(const std::string& path, const Trace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  export_trace(out, trace);
  if (!out) throw IoError("failed writing '" + path + "'");
}

// Parses and validates a trace. All offending lines are reported in one ParseError.
inline Trace parse_trace(std::string_view text, const std::string& source = "<memory>",
                         const RequestLimits& limits = {}) {
  std::vector<std::string> errors;
  auto error = [&](std::size_t line, const std::string& what) {
    errors.push_back(source + ":" + std::to_string(line) + ": " + what);
  };

  Trace trace;
  trace.provenance = Provenance{Provenance::Kind::Ingested, 0, 0, source};
  auto lines = csv::split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(source + ": missing header");

  const auto header = lines.front();
  if (header != kTraceCsvHeader) {
    const auto known = csv::split(kTraceCsvHeader, ',');
    for (auto col : csv::split(header, ',')) {
      if (std::find(known.begin(), known.end(), col) == known.end()) {
        error(1, "unknown column '" + std::string(col) + "'");
      }
    }
    error(1, "header must be '" + std::string(kTraceCsvHeader) + "'");
    std::string msg = "invalid trace";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ParseError(msg);
  }

  Millis last_arrival = 0.0;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    const auto line = lines[n];
    if (line.find('\r') != std::string_view::npos) {
      error(line_no, "CR found; line endings must be LF");
      continue;
    }
    const auto fields = csv::split(line, ',');
    if (fields.size() != 5) {
      error(line_no, "expected 5 fields, found " + std::to_string(fields.size()));
      continue;
    }
    Request r;
    if (!csv::parse_number(fields[0], r.id)) {
      error(line_no, "bad request_id '" + std::string(fields[0]) + "'");
      continue;
    }
    if (!csv::parse_number(fields[1], r.arrival)) {
      error(line_no, "bad arrival_ms '" + std::string(fields[1]) + "'");
      continue;
    }
    for (auto id : csv::split_list(fields[2])) r.controlnets.emplace_back(id);
    const auto lora_ids = csv::split_list(fields[3]);
    const auto lora_sizes = csv::split_list(fields[4]);
    if (lora_ids.size() != lora_sizes.size()) {
      error(line_no, "lora_ids and lora_sizes_mib have different lengths");
      continue;
    }
    bool ok = true;
    for (std::size_t i = 0; i < lora_ids.size(); ++i) {
      LoraRef l{std::string(lora_ids[i]), 0.0};
      if (!csv::parse_number(lora_sizes[i], l.size_mib)) {
        error(line_no, "bad LoRA size '" + std::string(lora_sizes[i]) + "'");
        ok = false;
        break;
      }
      r.loras.push_back(std::move(l));
    }
    if (!ok) continue;
    for (const auto& c : r.controlnets) {
      if (c.empty()) error(line_no, "empty ControlNet id"), ok = false;
    }
    for (const auto& l : r.loras) {
      if (l.id.empty()) error(line_no, "empty LoRA id"), ok = false;
    }
    if (!ok) continue;
    try {
      validate(r, limits);
    } catch (const ValidationError& e) {
      error(line_no, e.what());
      continue;
    }
    if (!trace.requests.empty() && r.arrival < last_arrival) {
      error(line_no, "arrival " + csv::format_double(r.arrival) + " is before the previous arrival " +
                         csv::format_double(last_arrival));
      continue;
    }
    last_arrival = r.arrival;
    trace.requests.push_back(std::move(r));
  }
  if (!errors.empty()) {
    std::string msg = "invalid trace (" + std::to_string(errors.size()) + " errors)";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ParseError(msg);
  }
  return trace;
}

inline Trace ingest(const std::string& path, const RequestLimits& limits = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trace '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str(), path, limits);
}

}  // namespace addonsim::workload
