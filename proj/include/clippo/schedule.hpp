#pragma once

#include <cstdint>

namespace clippo {

// ceil(base_steps / (1 - p)): keeps the number of image/alt-text pairs seen
// fixed when a fraction p of every batch is text/text. Throws ContractError
// unless 0 <= p < 1.
std::int64_t scaled_step_count(std::int64_t base_steps, double p);

struct ScheduleConfig {
  double peak_lr = 1e-3;
  std::int64_t warmup_steps = 0;
  std::int64_t cooldown_steps = 0;
  std::int64_t total_steps = 0;
};

// Linear warmup to peak, reciprocal square root decay afterwards, and a linear
// cooldown ramp over the last cooldown_steps multiplied onto it. Throws
// ContractError for a step outside [0, total_steps].
double lr_at(std::int64_t step, const ScheduleConfig& cfg);

// Cosine decay to zero after a linear warmup.
double cosine_lr_at(std::int64_t step, double peak_lr, std::int64_t warmup_steps, std::int64_t total_steps);

}  // namespace clippo
