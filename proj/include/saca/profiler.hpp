#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saca/pipeline.hpp"

namespace saca {

struct StageCost {
  std::string stage;
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t bytes = 0;  // activation output volume at 4 bytes per value
};

// Analytic cost model of the class-center + scene-aware attention module.
// Scope runs from pre-classification through the prediction head; the stub
// backbone and final upsampling are excluded. params and flops totals are the
// exact sums of the breakdown rows; peak_bytes comes from a stage liveness
// model under sequential per-patch execution and is reported separately.
struct ProfileReport {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t peak_bytes = 0;
  std::vector<StageCost> breakdown;
  std::int64_t patches = 0;  // not serialized; set by profile()

  // Attention-stage flops for a single patch (position bias, affinity,
  // softmax, aggregation); scales as (h*w)^2 for fixed channels.
  std::int64_t per_patch_attention_flops() const;

  std::string to_json() const;
  std::string to_table() const;
  static ProfileReport from_json_text(const std::string& text);
};

ProfileReport profile(const SacaConfig& cfg);

}  // namespace saca
