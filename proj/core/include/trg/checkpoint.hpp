#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trg/tensor.hpp"

namespace trg {

struct Blob {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Binary layout, little-endian:
//   "TGCK" u32 version u64 config_hash
//   str kind, str meta, u64 epoch, u64 step, f64 best_accuracy, u64 best_epoch, str rng_state
//   u32 blob_count, then per blob: str name, u32 rank, u64 dims[rank], f64 values[]
// where str is u32 length + bytes.
struct Checkpoint {
  std::string kind;  // "teacher" or "student"
  std::string meta;  // net spec text
  std::uint64_t config_hash = 0;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  double best_accuracy = 0.0;
  std::uint64_t best_epoch = 0;
  std::string rng_state;
  std::vector<Blob> blobs;

  const Blob& find(const std::string& name) const;
  bool has(const std::string& name) const;
};

Blob to_blob(const std::string& name, const Tensor& t);
Blob to_blob(const std::string& name, const Shape& shape, const std::vector<double>& values);
// Copies blob values into a leaf; DimensionError on a shape mismatch.
void load_blob(const Blob& blob, Tensor& target);

// Written to a temporary file and renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace trg
