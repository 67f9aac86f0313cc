#pragma once

#include <map>
#include <string>

#include "addonsim/core/error.hpp"
#include "addonsim/core/types.hpp"

namespace addonsim::store {

// Each ControlNet is about 3 GiB.
inline constexpr Mebibytes kDefaultControlNetMib = 3072.0;

struct AddonCatalog {
  std::map<ControlNetId, Mebibytes> controlnets;
  std::map<LoraId, Mebibytes> loras;

  Mebibytes controlnet_size(const ControlNetId& id) const {
    auto it = controlnets.find(id);
    if (it == controlnets.end()) throw NotFoundError("ControlNet '" + id + "' not in catalog");
    return it->second;
  }

  Mebibytes lora_size(const LoraId& id) const {
    auto it = loras.find(id);
    if (it == loras.end()) throw NotFoundError("LoRA '" + id + "' not in catalog");
    return it->second;
  }

  // Throws NotFoundError on the first id the catalog does not know.
  void check(const Request& r) const {
    for (const auto& c : r.controlnets) (void)controlnet_size(c);
    for (const auto& l : r.loras) (void)lora_size(l.id);
  }
};

inline void validate(const AddonCatalog& c) {
  for (const auto& [id, size] : c.controlnets) {
    detail::require(size > 0.0, "catalog.controlnets." + id + ": size must be > 0");
  }
  for (const auto& [id, size] : c.loras) {
    detail::require(size > 0.0, "catalog.loras." + id + ": size must be > 0");
  }
}

}  // namespace addonsim::store
