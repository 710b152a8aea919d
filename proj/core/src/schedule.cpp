#include "trg/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trg/errors.hpp"

namespace trg {

void TemperatureSchedule::validate() const {
  if (!(tau_g_init > 0.0)) throw ConfigError("tau_g_init must be positive");
  if (warmup_epochs < 2) throw ConfigError("graph temperature warm-up must be at least 2 epochs");
  if (!(floor > 0.0)) throw ConfigError("tau_g floor must be positive");
}

double graph_temperature(const TemperatureSchedule& sched, std::size_t epoch) {
  sched.validate();
  if (epoch == 0) throw UsageError("epochs are 1-based");
  if (epoch <= sched.warmup_epochs) return sched.tau_g_init;
  const double log_base_w =
      std::log(static_cast<double>(epoch)) / std::log(static_cast<double>(sched.warmup_epochs));
  return std::max(sched.floor, sched.tau_g_init / log_base_w);
}

void LrSchedule::validate() const {
  if (!(initial_lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("LR decay factor must be in (0, 1]");
  if (!std::is_sorted(milestones.begin(), milestones.end())) {
    throw ConfigError("LR milestones must be sorted");
  }
}

double learning_rate(const LrSchedule& sched, std::size_t epoch) {
  if (epoch == 0) throw UsageError("epochs are 1-based");
  double lr = sched.initial_lr;
  if (sched.warmup_epochs > 0 && epoch <= sched.warmup_epochs) {
    lr *= static_cast<double>(epoch) / static_cast<double>(sched.warmup_epochs);
  }
  for (auto m : sched.milestones) {
    if (epoch > m) lr *= sched.decay_factor;
  }
  return lr;
}

}  // namespace trg
