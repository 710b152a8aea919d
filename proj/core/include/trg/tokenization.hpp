#pragma once

#include <cstdint>
#include <vector>

#include "trg/tensor.hpp"

namespace trg {

enum class TokenSource { teacher, student };

const char* to_string(TokenSource source);

// S sampled tokens of width D and the batch instance each came from.
struct TokenBatch {
  Tensor tokens;  // [S x D]
  std::vector<std::size_t> instance_index;
  std::size_t batch_size = 0;
  TokenSource source = TokenSource::student;

  std::size_t count() const { return instance_index.size(); }
};

// Which patches to keep from each instance. Shared between teacher and
// student so both graphs are built over the same (instance, patch) pairs.
struct SamplingPlan {
  std::size_t batch_size = 0;
  std::size_t patches_per_instance = 0;
  std::size_t budget = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::size_t>> selected;  // sorted, per instance

  std::vector<std::size_t> counts() const;
};

// [C x H x W] -> [M x D], M = HW/P^2, D = P^2 C. Patches are taken in
// raster order; a patch row is laid out (dy, dx, c) with c fastest.
Tensor patch_image(const Tensor& image, std::size_t patch);

// [B x C x H x W] -> [B x M x D] with the same per-image layout.
Tensor patch_batch(const Tensor& images, std::size_t patch);

// Inverse of patch_image.
Tensor unpatch_image(const Tensor& patches, std::size_t channels, std::size_t height,
                     std::size_t width, std::size_t patch);

// Patch size P with (H/P)(W/P) == target_count. ConfigError listing the
// feasible counts when none exists.
std::size_t feature_patch_size(std::size_t height, std::size_t width, std::size_t target_count);

// Feature maps from networks of different widths yield the same token count
// by choosing a per-network patch size.
Tensor patch_feature_map(const Tensor& feature_map, std::size_t target_count);
Tensor patch_feature_maps(const Tensor& feature_maps, std::size_t target_count);

// Spreads `budget` tokens over `batch_size` instances: floor(S/B) each, with
// the first S mod B instances taking one more. Patches within an instance
// are drawn without replacement.
SamplingPlan make_sampling_plan(std::size_t batch_size, std::size_t patches_per_instance,
                                std::size_t budget, std::uint64_t seed);

// Selects the planned tokens from [B x M x D]. Differentiable.
TokenBatch apply_plan(const Tensor& all_tokens, const SamplingPlan& plan, TokenSource source);

}  // namespace trg
