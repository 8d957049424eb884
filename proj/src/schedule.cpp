#include "clippo/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "clippo/errors.hpp"

namespace clippo {

std::int64_t scaled_step_count(std::int64_t base_steps, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractError("text fraction must lie in [0, 1), got " + std::to_string(p));
  if (base_steps < 0) throw ContractError("negative step count");
  const double exact = static_cast<double>(base_steps) / (1.0 - p);
  const double nearest = std::round(exact);
  if (std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact)) return static_cast<std::int64_t>(nearest);
  return static_cast<std::int64_t>(std::ceil(exact));
}

double lr_at(std::int64_t step, const ScheduleConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) {
    throw ContractError("step " + std::to_string(step) + " outside [0, " + std::to_string(cfg.total_steps) + "]");
  }
  double lr = 0.0;
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
    lr = cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  } else {
    const double timescale = static_cast<double>(std::max<std::int64_t>(cfg.warmup_steps, 1));
    lr = cfg.peak_lr * std::sqrt(timescale / static_cast<double>(std::max<std::int64_t>(step, 1)));
  }
  const std::int64_t cooldown_start = cfg.total_steps - cfg.cooldown_steps;
  if (cfg.cooldown_steps > 0 && step > cooldown_start) {
    lr *= static_cast<double>(cfg.total_steps - step) / static_cast<double>(cfg.cooldown_steps);
  }
  return lr;
}

double cosine_lr_at(std::int64_t step, double peak_lr, std::int64_t warmup_steps, std::int64_t total_steps) {
  if (step < 0 || step > total_steps) {
    throw ContractError("step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  if (warmup_steps > 0 && step < warmup_steps) {
    return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const double span = static_cast<double>(std::max<std::int64_t>(total_steps - warmup_steps, 1));
  const double progress = static_cast<double>(step - warmup_steps) / span;
  return 0.5 * peak_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace clippo
