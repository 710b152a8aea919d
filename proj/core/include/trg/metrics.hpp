#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "trg/losses.hpp"
#include "trg/tensor.hpp"
#include "trg/tokenization.hpp"

namespace trg {

struct MetricRecord {
  std::size_t epoch = 0;
  std::string split;  // "train" or "test"
  double accuracy = 0.0;
  LossBreakdown loss;
  double mean_kld = 0.0;
  double mul = 0.0;
  double tau_g = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;  // kept out of the JSON line so reruns compare byte-for-byte
};

// How mean_kld turns features into distributions; written into the metrics header.
inline constexpr const char* kMeanKldNote =
    "mean_kld: per instance, softmax over the flattened penultimate tokens of each net "
    "(student tokens projected to the teacher width), KL(student || teacher), averaged over instances";

// Mean over instances of KL(softmax(student_i) || softmax(teacher_i)); every
// trailing dimension is flattened. Shapes must agree.
double mean_kld(const Tensor& teacher_features, const Tensor& student_features);

// (1/S) * sum over ordered pairs (i, j) of ||T_i - T_j||^2. UsageError if S < 2.
double mul(const Tensor& tokens);
double mul(const TokenBatch& tokens);

std::string to_json_line(const MetricRecord& record);
MetricRecord parse_json_line(const std::string& line);

// metrics.jsonl: a header object, then one record per line.
// timing.csv beside it: epoch,split,wall_seconds.
class MetricWriter {
 public:
  MetricWriter() = default;
  MetricWriter(const std::filesystem::path& dir, std::uint64_t config_hash, bool append = false);

  void write(const MetricRecord& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream jsonl_;
  std::ofstream timing_;
  std::size_t last_epoch_ = 0;
};

// Records only, header skipped.
std::vector<MetricRecord> read_metrics(const std::filesystem::path& path);

}  // namespace trg
