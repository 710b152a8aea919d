#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "trg/config.hpp"
#include "trg/dataset.hpp"
#include "trg/model.hpp"

namespace trg {

struct SweepCell {
  std::string name;
  RunConfig config;
};

// Axes of a grid sweep; an axis left empty keeps the base config's value.
struct SweepGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<double> gammas;
  std::vector<std::size_t> ks;
  std::vector<std::size_t> batch_sizes;
  std::vector<std::uint64_t> seeds;
};

// The six loss configurations of the ablation table, in order:
// baseline (CE only), kd, no_graph (kd + inner), no_global (kd + inner + local),
// instance (all terms, one graph node per instance), trg (all terms).
std::vector<SweepCell> loss_ablation_cells(const RunConfig& base, const std::vector<std::uint64_t>& seeds);

// Cartesian product of the grid axes. UsageError when it has no cells.
std::vector<SweepCell> grid_cells(const RunConfig& base, const SweepGrid& grid);

struct SweepRow {
  std::string name;
  std::uint64_t seed = 0;
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  std::size_t k = 0;
  std::size_t batch_size = 0;
  double imbalance_rate = 1.0;
  std::string ablate;
  std::string graph_level;
  std::string status;  // "ok" or "error"
  std::string error;
  double final_test_accuracy = 0.0;
  double best_test_accuracy = 0.0;
  double final_train_accuracy = 0.0;
  double first_total_loss = 0.0;
  double final_total_loss = 0.0;
  double final_mean_kld = 0.0;
  double final_mul = 0.0;
};

// Pretrains each distinct teacher once (keyed by teacher_config_hash) and
// keeps it for later cells. Data splits are cached the same way.
class TeacherCache {
 public:
  const ToyNet& teacher(const RunConfig& cfg);
  const SplitDataset& data(const RunConfig& cfg);
  double teacher_train_accuracy(const RunConfig& cfg);
  // Installs an already-trained teacher for cfg's teacher settings.
  void put(const RunConfig& cfg, ToyNet teacher);

 private:
  std::map<std::uint64_t, std::unique_ptr<ToyNet>> teachers_;
  std::map<std::uint64_t, double> train_accuracy_;
  std::map<std::uint64_t, std::unique_ptr<SplitDataset>> data_;
};

// Runs cell by cell. A failing cell is recorded with status "error" and the
// sweep moves on. With a non-empty output_dir each cell writes its run
// artifacts to output_dir/<index>_<name>_s<seed>.
std::vector<SweepRow> run_sweep(const std::vector<SweepCell>& cells, TeacherCache& teachers,
                                const std::filesystem::path& output_dir = {},
                                const std::function<void(const SweepRow&)>& on_row = {});

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace trg
