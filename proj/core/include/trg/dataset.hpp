#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trg/tensor.hpp"

namespace trg {

struct LabeledDataset {
  Tensor images;  // [N x C x H x W]
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::string split = "all";

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }
  std::size_t pixels_per_image() const { return channels() * height() * width(); }
  std::vector<std::size_t> class_counts() const;

  // Rows `index` stacked into [B x C x H x W].
  Tensor batch_images(std::span<const std::size_t> index) const;
  std::vector<int> batch_labels(std::span<const std::size_t> index) const;
  LabeledDataset subset(std::span<const std::size_t> index, std::string split_name) const;

  void validate() const;
};

struct SynthSpec {
  std::size_t num_classes = 10;
  std::size_t per_class = 250;
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  double noise = 0.5;
  std::uint64_t seed = 1;
  // Prototypes are tiled from a shared dictionary of cell patterns so the
  // same local part recurs across classes.
  std::size_t cell = 2;
  std::size_t dictionary_size = 6;
};

// K classes of prototype + N(0, noise^2) images clamped to [0, 1], ordered
// class by class.
LabeledDataset synth_dataset(const SynthSpec& spec);

// The noise-free class prototypes, [K x C x H x W].
Tensor synth_prototypes(const SynthSpec& spec);

struct SplitDataset {
  LabeledDataset train;
  LabeledDataset test;
};

// Per class, round(fraction * n_c) shuffled samples go to train, the rest to test.
SplitDataset stratified_split(const LabeledDataset& ds, double train_fraction, std::uint64_t seed);

// Exponential profile: class c keeps ceil(n_max * rho^(-c/(K-1))) samples.
LabeledDataset long_tail_subsample(const LabeledDataset& ds, double rho, std::uint64_t seed);

std::vector<std::size_t> long_tail_counts(std::size_t n_max, std::size_t num_classes, double rho);

enum class DatasetFormat { csv, binary };

DatasetFormat parse_dataset_format(const std::string& text);
// Picks from the extension: ".csv" -> csv, anything else -> binary.
DatasetFormat format_from_path(const std::filesystem::path& path);

// CSV files carry no geometry, so the caller supplies it.
struct CsvLayout {
  std::size_t num_classes = 10;
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
};

// Pixel values above 1 mark a 0..255 file and are scaled by 1/255.
LabeledDataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                            const CsvLayout& layout = {});
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path, DatasetFormat format);

}  // namespace trg
