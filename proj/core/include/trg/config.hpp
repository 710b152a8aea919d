#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "trg/graph.hpp"
#include "trg/losses.hpp"
#include "trg/model.hpp"
#include "trg/schedule.hpp"

namespace trg {

enum class LossTerm { kd, inner, local, global };

const char* to_string(LossTerm term);
LossTerm parse_loss_term(const std::string& text);

enum class GraphLevel { token, instance };

// Every knob of a run. Serialized as flat "key = value" lines; see
// config_schema() for the key list and defaults.
struct RunConfig {
  // data
  std::string dataset = "synth";  // "synth" or a file path
  std::string dataset_format = "auto";
  std::size_t num_classes = 10;
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t synth_per_class = 250;
  double synth_noise = 0.7;
  std::uint64_t data_seed = 7;
  double train_fraction = 0.8;
  double imbalance_rate = 1.0;

  // networks
  NetSpec teacher_net = NetSpec::parse("mlp:patch=2:widths=4,64,32");
  NetSpec student_net = NetSpec::parse("mlp:patch=2:widths=4,12,6");
  std::size_t teacher_epochs = 30;
  double teacher_lr = 0.05;
  std::uint64_t teacher_seed = 11;

  // distillation run
  std::uint64_t seed = 1;
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double lr = 0.01;
  double lr_warmup_frac = 0.0625;
  std::vector<double> lr_milestone_fracs{0.625, 0.75, 0.875};
  double lr_decay = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  // objective
  double tau = 4.0;
  double lambda = 1.0;
  bool tau_squared = false;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.1;
  double tau_g = 0.1;
  double warmup_frac = 0.0625;
  double tau_g_floor = 1e-3;
  double kl_eps = 1e-12;
  std::vector<LossTerm> ablate;

  // token graph
  std::size_t token_count = 16;         // patches per instance after feature patching
  std::size_t tokens_per_instance = 2;  // sampled per instance; S = this * B
  std::size_t k = 3;
  SigmaPolicy sigma = SigmaPolicy::median();
  NeighborRule neighbor_rule = NeighborRule::union_of_picks;
  LocalSoftmax local_softmax = LocalSoftmax::full_row;
  GraphLevel graph_level = GraphLevel::token;

  // io
  std::string output_dir = "runs/default";
  std::string teacher_checkpoint;

  bool term_enabled(LossTerm term) const;
  // Warm-up epochs for the graph temperature, at least 2.
  std::size_t graph_warmup_epochs() const;
  TemperatureSchedule temperature_schedule() const;
  LrSchedule lr_schedule() const;
  LrSchedule teacher_lr_schedule() const;
  InputShape input_shape() const;

  void validate() const;
};

// key -> default value text, in serialization order.
std::vector<std::pair<std::string, std::string>> config_schema();

std::string serialize_config(const RunConfig& cfg);
// Applies "key = value" lines on top of `base`. '#' starts a comment.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

bool operator==(const RunConfig& a, const RunConfig& b);

// FNV-1a over the serialized form, io fields excluded.
std::uint64_t config_hash(const RunConfig& cfg);
// Hash of only the settings that determine the pretrained teacher.
std::uint64_t teacher_config_hash(const RunConfig& cfg);

}  // namespace trg
