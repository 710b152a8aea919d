#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trg/checkpoint.hpp"
#include "trg/config.hpp"
#include "trg/dataset.hpp"
#include "trg/losses.hpp"
#include "trg/metrics.hpp"
#include "trg/model.hpp"
#include "trg/optimizer.hpp"

namespace trg {

// Mixes a base seed with extra words (epoch, step, stream tag...) through
// std::seed_seq, keeping all 64 bits of every input.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> words);

// Builds the dataset named by the config and splits it; the train split is
// long-tail subsampled when imbalance_rate > 1, the test split stays balanced.
SplitDataset prepare_data(const RunConfig& cfg);

// Row-wise argmax, ties to the lowest class index.
std::vector<int> predict(const Tensor& logits);
double accuracy_from_logits(const Tensor& logits, std::span<const int> labels);
double evaluate(const ToyNet& net, const LabeledDataset& ds, std::size_t batch_size = 256);

// Shuffled batch index lists for one epoch. Batches are full-sized; a trailing
// remainder is dropped unless it is the only batch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);

struct PretrainResult {
  std::vector<MetricRecord> records;
  double train_accuracy = 0.0;
};

// Cross-entropy training for cfg.teacher_epochs, then freezes `net`.
// NumericError on a non-finite loss.
PretrainResult pretrain_teacher(ToyNet& net, const LabeledDataset& train, const RunConfig& cfg,
                                const LabeledDataset* test = nullptr);

ToyNet make_teacher(const RunConfig& cfg);
ToyNet make_student(const RunConfig& cfg);
Projection make_projection(const RunConfig& cfg, const ToyNet& teacher, const ToyNet& student);

Checkpoint teacher_checkpoint(const ToyNet& teacher, const RunConfig& cfg);
// ConfigError when the checkpoint came from different teacher settings.
ToyNet load_teacher(const Checkpoint& ckpt, const RunConfig& cfg);

// Student parameters from a student checkpoint; the net spec must match cfg.
ToyNet load_student(const Checkpoint& ckpt, const RunConfig& cfg);

struct Objective {
  TotalLoss total;
  Tensor student_logits;
  double mean_kld = 0.0;
  double mul = 0.0;
};

// Forward passes and every enabled loss term for one batch. Removed terms
// (cfg.ablate) are never built.
Objective compute_objective(const ToyNet& teacher, const ToyNet& student, const Projection& proj,
                            const Tensor& images, std::span<const int> labels, const RunConfig& cfg,
                            std::size_t epoch, std::uint64_t plan_seed);

// compute_objective, backward, one optimizer step at the epoch's learning rate.
LossBreakdown distill_step(const ToyNet& teacher, ToyNet& student, const Projection& proj, Sgd& optimizer,
                           const Tensor& images, std::span<const int> labels, const RunConfig& cfg,
                           std::size_t epoch, std::uint64_t plan_seed);

struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed optimizer steps
  double best_accuracy = -1.0;
  std::size_t best_epoch = 0;
  std::uint64_t config_hash = 0;
};

// Owns the student side of a run: student, projection, optimizer and the
// step RNG. The teacher must be frozen and outlive the distiller.
class Distiller {
 public:
  Distiller(const ToyNet& teacher, ToyNet student, const SplitDataset& data, RunConfig cfg);

  // Trains epoch state().epoch + 1 and evaluates it: {train record, test record}.
  std::vector<MetricRecord> run_epoch();

  const TrainState& state() const { return state_; }
  const ToyNet& student() const { return student_; }
  const Projection& projection() const { return proj_; }
  const Sgd& optimizer() const { return optimizer_; }
  const RunConfig& config() const { return cfg_; }

  Checkpoint checkpoint() const;
  // ConfigError when the checkpoint belongs to another configuration.
  void restore(const Checkpoint& ckpt);

 private:
  MetricRecord evaluate_split(const LabeledDataset& ds, std::size_t epoch) const;

  const ToyNet& teacher_;
  ToyNet student_;
  Projection proj_;
  Sgd optimizer_;
  const SplitDataset& data_;
  RunConfig cfg_;
  TrainState state_;
  std::mt19937_64 rng_;
};

struct DistillResult {
  TrainState state;
  std::vector<MetricRecord> records;
  std::vector<Tensor> student_parameters;
};

// Full run. With a non-empty output_dir writes metrics.jsonl, timing.csv,
// summary.csv, last.ckpt each epoch and best.ckpt on improvement. `resume`
// continues from a saved student checkpoint.
DistillResult distill(const ToyNet& teacher, ToyNet student, const SplitDataset& data, const RunConfig& cfg,
                      const std::filesystem::path& output_dir = {}, const Checkpoint* resume = nullptr);

// Final-epoch summary: one CSV row per split.
void write_summary_csv(const std::vector<MetricRecord>& records, const std::filesystem::path& path);

// "label,f0,...,f(D-1)" then one row per instance, 17 significant digits.
void export_embeddings(const ToyNet& net, const LabeledDataset& ds, const std::filesystem::path& path);

struct Embeddings {
  std::vector<int> labels;
  Tensor features;  // [N x D]
};
Embeddings read_embeddings(const std::filesystem::path& path);

}  // namespace trg
