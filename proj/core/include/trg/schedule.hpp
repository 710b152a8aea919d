#pragma once

#include <cstddef>
#include <vector>

namespace trg {

// Graph temperature: held at the initial value through the warm-up, then
// divided by log base W_U of the epoch. Epochs are 1-based.
struct TemperatureSchedule {
  double tau_g_init = 0.1;
  std::size_t warmup_epochs = 15;
  double floor = 1e-3;

  void validate() const;
};

double graph_temperature(const TemperatureSchedule& sched, std::size_t epoch);

// Linear warm-up from lr/W to lr over the first W epochs, then step decay by
// `decay_factor` once the epoch passes each milestone: with milestone 150 the
// 1-based epoch 150 still runs at the old rate and epoch 151 at the new one.
struct LrSchedule {
  double initial_lr = 0.05;
  std::vector<std::size_t> milestones{150, 180, 210};
  double decay_factor = 0.1;
  std::size_t warmup_epochs = 0;

  void validate() const;
};

double learning_rate(const LrSchedule& sched, std::size_t epoch);

}  // namespace trg
