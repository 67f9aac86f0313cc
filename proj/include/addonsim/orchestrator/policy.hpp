#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

#include "addonsim/core/error.hpp"

namespace addonsim {

enum class PolicyKind : std::uint8_t {
  SerialColocated,    // ControlNets run on the base GPU before the UNet, LoRAs block step 1
  CaaS,               // ControlNets on dedicated service GPUs, LoRAs still blocking
  CaaSAsyncLoRA,      // plus asynchronous LoRA loading and in-place patching
  CaaSPipelineLoRA,   // plus LoRA loading/patching in M groups
  StepSkip,           // serial execution that skips the first K steps from a cached latent
  NoAddon,            // base model only; add-ons in the request are ignored
};

enum class LoraMode : std::uint8_t { Ignore, Blocking, Async, Pipeline };

struct Policy {
  PolicyKind kind = PolicyKind::NoAddon;
  int groups = 1;       // M, pipeline mode only
  int skip_steps = 0;   // K, step-skip mode only
  bool unet_optimized = false;

  bool uses_controlnet_service() const {
    return kind == PolicyKind::CaaS || kind == PolicyKind::CaaSAsyncLoRA || kind == PolicyKind::CaaSPipelineLoRA;
  }

  bool runs_controlnets() const { return kind != PolicyKind::NoAddon; }

  LoraMode lora_mode() const {
    switch (kind) {
      case PolicyKind::NoAddon: return LoraMode::Ignore;
      case PolicyKind::CaaSAsyncLoRA: return LoraMode::Async;
      case PolicyKind::CaaSPipelineLoRA: return LoraMode::Pipeline;
      default: return LoraMode::Blocking;
    }
  }

  std::string name() const {
    std::string n;
    switch (kind) {
      case PolicyKind::SerialColocated: n = "SerialColocated"; break;
      case PolicyKind::CaaS: n = "CaaS"; break;
      case PolicyKind::CaaSAsyncLoRA: n = "CaaS+AsyncLoRA"; break;
      case PolicyKind::CaaSPipelineLoRA: n = "CaaS+PipelineLoRA(" + std::to_string(groups) + ")"; break;
      case PolicyKind::StepSkip: n = "StepSkip(" + std::to_string(skip_steps) + ")"; break;
      case PolicyKind::NoAddon: n = "NoAddon"; break;
    }
    if (unet_optimized) n += "+opt";
    return n;
  }

  friend bool operator==(const Policy&, const Policy&) = default;
};

inline Policy serial_colocated(bool opt = false) { return {PolicyKind::SerialColocated, 1, 0, opt}; }
inline Policy caas(bool opt = false) { return {PolicyKind::CaaS, 1, 0, opt}; }
inline Policy caas_async_lora(bool opt = false) { return {PolicyKind::CaaSAsyncLoRA, 1, 0, opt}; }
inline Policy caas_pipeline_lora(int m, bool opt = false) { return {PolicyKind::CaaSPipelineLoRA, m, 0, opt}; }
inline Policy step_skip(int k, bool opt = false) { return {PolicyKind::StepSkip, 1, k, opt}; }
inline Policy no_addon(bool opt = false) { return {PolicyKind::NoAddon, 1, 0, opt}; }

inline void validate(const Policy& p) {
  detail::require(p.groups >= 1, "policy " + p.name() + ": M must be >= 1");
  detail::require(p.skip_steps >= 0, "policy " + p.name() + ": K must be >= 0");
}

inline void validate(const Policy& p, int steps) {
  validate(p);
  detail::require(p.skip_steps < steps, "policy " + p.name() + ": K must be < steps (" + std::to_string(steps) + ")");
}

namespace detail {

inline int parse_paren_int(std::string_view s, std::string_view prefix, const std::string& full) {
  auto body = s.substr(prefix.size());
  if (body.size() < 3 || body.front() != '(' || body.back() != ')') {
    throw ConfigError("policy '" + full + "': expected " + std::string(prefix) + "(<int>)");
  }
  body = body.substr(1, body.size() - 2);
  int v = 0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
  if (ec != std::errc{} || ptr != body.data() + body.size()) {
    throw ConfigError("policy '" + full + "': bad integer parameter");
  }
  return v;
}

}  // namespace detail

// Inverse of Policy::name().
inline Policy parse_policy(const std::string& text) {
  std::string_view s = text;
  Policy p;
  constexpr std::string_view kOpt = "+opt";
  if (s.size() > kOpt.size() && s.substr(s.size() - kOpt.size()) == kOpt) {
    p.unet_optimized = true;
    s = s.substr(0, s.size() - kOpt.size());
  }
  if (s == "SerialColocated") {
    p.kind = PolicyKind::SerialColocated;
  } else if (s == "CaaS") {
    p.kind = PolicyKind::CaaS;
  } else if (s == "CaaS+AsyncLoRA") {
    p.kind = PolicyKind::CaaSAsyncLoRA;
  } else if (s.starts_with("CaaS+PipelineLoRA")) {
    p.kind = PolicyKind::CaaSPipelineLoRA;
    p.groups = detail::parse_paren_int(s, "CaaS+PipelineLoRA", text);
  } else if (s.starts_with("StepSkip")) {
    p.kind = PolicyKind::StepSkip;
    p.skip_steps = detail::parse_paren_int(s, "StepSkip", text);
  } else if (s == "NoAddon") {
    p.kind = PolicyKind::NoAddon;
  } else {
    throw ConfigError("unknown policy '" + text + "'");
  }
  try {
    validate(p);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

}  // namespace addonsim
