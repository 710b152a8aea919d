#include "trg/tokenization.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "trg/errors.hpp"
#include "trg/ops.hpp"

namespace trg {

namespace {

// Flat source offsets for patching one C x H x W image starting at `base`.
void append_patch_index(std::vector<std::int64_t>& index, std::size_t base, std::size_t channels,
                        std::size_t height, std::size_t width, std::size_t patch) {
  const std::size_t rows = height / patch, cols = width / patch;
  for (std::size_t py = 0; py < rows; ++py)
    for (std::size_t px = 0; px < cols; ++px)
      for (std::size_t dy = 0; dy < patch; ++dy)
        for (std::size_t dx = 0; dx < patch; ++dx)
          for (std::size_t c = 0; c < channels; ++c)
            index.push_back(static_cast<std::int64_t>(
                base + (c * height + py * patch + dy) * width + px * patch + dx));
}

void check_divisible(std::size_t height, std::size_t width, std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not divide a " +
                      std::to_string(height) + "x" + std::to_string(width) + " map");
  }
}

}  // namespace

const char* to_string(TokenSource source) {
  return source == TokenSource::teacher ? "teacher" : "student";
}

std::vector<std::size_t> SamplingPlan::counts() const {
  std::vector<std::size_t> out;
  out.reserve(selected.size());
  for (const auto& s : selected) out.push_back(s.size());
  return out;
}

Tensor patch_image(const Tensor& image, std::size_t patch) {
  if (image.rank() != 3) throw DimensionError("patch_image: expected [C x H x W], got " + shape_str(image.shape()));
  auto batched = ops::reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
  auto out = patch_batch(batched, patch);
  return ops::reshape(out, {out.dim(1), out.dim(2)});
}

Tensor patch_batch(const Tensor& images, std::size_t patch) {
  if (images.rank() != 4) {
    throw DimensionError("patch_batch: expected [B x C x H x W], got " + shape_str(images.shape()));
  }
  const std::size_t b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  check_divisible(h, w, patch);
  const std::size_t m = (h / patch) * (w / patch), d = patch * patch * c;
  std::vector<std::int64_t> index;
  index.reserve(images.size());
  for (std::size_t i = 0; i < b; ++i) append_patch_index(index, i * c * h * w, c, h, w, patch);
  return ops::gather(images, index, {b, m, d});
}

Tensor unpatch_image(const Tensor& patches, std::size_t channels, std::size_t height,
                     std::size_t width, std::size_t patch) {
  check_divisible(height, width, patch);
  const Shape expected{(height / patch) * (width / patch), patch * patch * channels};
  if (patches.shape() != expected) {
    throw DimensionError("unpatch_image: expected " + shape_str(expected) + ", got " +
                         shape_str(patches.shape()));
  }
  std::vector<std::int64_t> forward;
  append_patch_index(forward, 0, channels, height, width, patch);
  std::vector<std::int64_t> inverse(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) inverse[forward[i]] = static_cast<std::int64_t>(i);
  return ops::gather(patches, inverse, {channels, height, width});
}

std::size_t feature_patch_size(std::size_t height, std::size_t width, std::size_t target_count) {
  std::vector<std::size_t> feasible;
  std::size_t chosen = 0;
  for (std::size_t p = 1; p <= std::min(height, width); ++p) {
    if (height % p || width % p) continue;
    const std::size_t m = (height / p) * (width / p);
    feasible.push_back(m);
    if (m == target_count) chosen = p;
  }
  if (chosen == 0) {
    std::string list;
    for (auto m : feasible) list += (list.empty() ? "" : ", ") + std::to_string(m);
    throw ConfigError("no patch size yields " + std::to_string(target_count) + " tokens on a " +
                      std::to_string(height) + "x" + std::to_string(width) +
                      " feature map; feasible token counts: " + list);
  }
  return chosen;
}

Tensor patch_feature_map(const Tensor& feature_map, std::size_t target_count) {
  if (feature_map.rank() != 3) {
    throw DimensionError("patch_feature_map: expected [C x H x W], got " + shape_str(feature_map.shape()));
  }
  return patch_image(feature_map,
                     feature_patch_size(feature_map.dim(1), feature_map.dim(2), target_count));
}

Tensor patch_feature_maps(const Tensor& feature_maps, std::size_t target_count) {
  if (feature_maps.rank() != 4) {
    throw DimensionError("patch_feature_maps: expected [B x C x H x W], got " +
                         shape_str(feature_maps.shape()));
  }
  return patch_batch(feature_maps,
                     feature_patch_size(feature_maps.dim(2), feature_maps.dim(3), target_count));
}

SamplingPlan make_sampling_plan(std::size_t batch_size, std::size_t patches_per_instance,
                                std::size_t budget, std::uint64_t seed) {
  if (batch_size == 0 || patches_per_instance == 0 || budget == 0) {
    throw ConfigError("sampling plan needs positive batch size, patch count and budget");
  }
  if (budget > batch_size * patches_per_instance) {
    throw ConfigError("token budget " + std::to_string(budget) + " exceeds the " +
                      std::to_string(batch_size * patches_per_instance) + " available tokens (B=" +
                      std::to_string(batch_size) + ", M=" + std::to_string(patches_per_instance) + ")");
  }
  SamplingPlan plan;
  plan.batch_size = batch_size;
  plan.patches_per_instance = patches_per_instance;
  plan.budget = budget;
  plan.seed = seed;
  plan.selected.resize(batch_size);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> all(patches_per_instance);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const std::size_t base = budget / batch_size, extra = budget % batch_size;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t want = base + (i < extra ? 1 : 0);
    auto& out = plan.selected[i];
    out.reserve(want);
    std::sample(all.begin(), all.end(), std::back_inserter(out), want, rng);
  }
  return plan;
}

TokenBatch apply_plan(const Tensor& all_tokens, const SamplingPlan& plan, TokenSource source) {
  if (all_tokens.rank() != 3 || all_tokens.dim(0) != plan.batch_size ||
      all_tokens.dim(1) != plan.patches_per_instance) {
    throw UsageError("apply_plan: tokens " + shape_str(all_tokens.shape()) +
                     " do not match a plan for B=" + std::to_string(plan.batch_size) +
                     ", M=" + std::to_string(plan.patches_per_instance));
  }
  const std::size_t m = all_tokens.dim(1), d = all_tokens.dim(2);
  TokenBatch out;
  out.batch_size = plan.batch_size;
  out.source = source;
  std::vector<std::int64_t> index;
  index.reserve(plan.budget * d);
  for (std::size_t i = 0; i < plan.batch_size; ++i) {
    for (auto patch : plan.selected[i]) {
      out.instance_index.push_back(i);
      for (std::size_t c = 0; c < d; ++c)
        index.push_back(static_cast<std::int64_t>((i * m + patch) * d + c));
    }
  }
  out.tokens = ops::gather(all_tokens, index, {out.instance_index.size(), d});
  return out;
}

}  // namespace trg
