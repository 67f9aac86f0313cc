#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "addonsim/core/error.hpp"
#include "addonsim/core/types.hpp"

namespace addonsim {

struct GroupPatch {
  int group_index = 0;
  Millis load_complete_ms = 0.0;
  Millis patch_ms = 0.0;
  std::optional<int> boundary_step;
};

// When an asynchronously loaded LoRA takes effect. Boundary k sits after
// step k (k = 0 is before the first step); steps from k+1 on run patched.
struct PatchPlan {
  Millis load_complete_ms = 0.0;
  std::optional<int> patch_boundary_step;
  int first_patched_step = 1;
  Millis inserted_delay_ms = 0.0;
  std::vector<GroupPatch> groups;

  // Fraction of steps executed without the LoRA.
  double unpatched_fraction(int steps) const { return static_cast<double>(first_patched_step - 1) / steps; }
};

namespace detail {

// Smallest k >= 0 with k * step_dur >= t.
inline int first_boundary_at_or_after(Millis t, Millis step_dur) {
  if (t <= 0.0) return 0;
  auto k = static_cast<long long>(std::ceil(t / step_dur));
  while (k > 0 && static_cast<double>(k - 1) * step_dur >= t) --k;
  while (static_cast<double>(k) * step_dur < t) ++k;
  return static_cast<int>(std::min<long long>(k, 1LL << 30));
}

}  // namespace detail

// Boundaries are measured from denoise start on the unpatched step grid.
// A patch landing at or after the final boundary would affect no step, so
// it is skipped and first_patched_step = steps + 1.
inline PatchPlan plan_pipeline_patch(std::span<const Millis> group_loads, Millis step_dur, Millis per_group_patch_ms,
                                     int steps) {
  detail::require(!group_loads.empty(), "plan_pipeline_patch: group list must not be empty");
  detail::require(step_dur > 0.0, "plan: step duration must be > 0");
  detail::require(per_group_patch_ms >= 0.0, "plan: patch cost must be >= 0");
  detail::require(steps >= 1, "plan: steps must be >= 1");
  for (std::size_t i = 0; i < group_loads.size(); ++i) {
    detail::require(group_loads[i] >= 0.0, "plan: load completion must be >= 0");
    detail::require(i == 0 || group_loads[i - 1] <= group_loads[i], "plan: group loads must be non-decreasing");
  }

  PatchPlan plan;
  plan.load_complete_ms = group_loads.back();
  Millis prev_patch_end = 0.0;
  bool blocked = false;
  for (std::size_t m = 0; m < group_loads.size(); ++m) {
    GroupPatch g{static_cast<int>(m) + 1, group_loads[m], per_group_patch_ms, std::nullopt};
    if (!blocked) {
      const int k = detail::first_boundary_at_or_after(std::max(group_loads[m], prev_patch_end), step_dur);
      if (k < steps) {
        g.boundary_step = k;
        prev_patch_end = k * step_dur + per_group_patch_ms;
        plan.inserted_delay_ms += per_group_patch_ms;
      } else {
        blocked = true;
      }
    }
    plan.groups.push_back(g);
  }
  if (blocked) {
    plan.patch_boundary_step.reset();
    plan.first_patched_step = steps + 1;
  } else {
    plan.patch_boundary_step = plan.groups.back().boundary_step;
    plan.first_patched_step = *plan.patch_boundary_step + 1;
  }
  return plan;
}

inline PatchPlan plan_lora_patch(Millis load_complete, Millis step_dur, Millis patch_ms, int steps) {
  const Millis loads[] = {load_complete};
  return plan_pipeline_patch(loads, step_dur, patch_ms, steps);
}

}  // namespace addonsim
