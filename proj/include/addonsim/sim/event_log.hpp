#pragma once

#include <ostream>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "addonsim/sim/engine.hpp"

namespace addonsim::sim {

inline std::string event_log_string(std::span<const EventRecord> records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["time"] = r.time;
    j["seq"] = r.seq;
    j["kind"] = std::string(event_kind_name(r.kind));
    j["request_id"] = r.request_id;
    j["resource_id"] = r.resource_id;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// Newline-delimited JSON: {time, seq, kind, request_id, resource_id} per line.
inline void write_event_log(std::ostream& os, std::span<const EventRecord> records) {
  os << event_log_string(records);
}

}  // namespace addonsim::sim
