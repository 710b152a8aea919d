#include "trg/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "trg/errors.hpp"
#include "trg/ops.hpp"
#include "trg/tokenization.hpp"

namespace trg {

namespace {

std::vector<std::size_t> parse_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v == 0) {
      throw ConfigError("net spec: bad " + what + " entry '" + item + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("net spec: empty " + what + " list");
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// Permutation [B*H*W x C] (row per position) -> [B x C x H x W].
std::vector<std::int64_t> positions_to_channels_first(std::size_t b, std::size_t c, std::size_t h,
                                                      std::size_t w) {
  std::vector<std::int64_t> index(b * c * h * w);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          index[((n * c + ch) * h + y) * w + x] =
              static_cast<std::int64_t>(((n * h + y) * w + x) * c + ch);
  return index;
}

}  // namespace

std::string NetSpec::str() const {
  if (arch == Arch::mlp) return "mlp:patch=" + std::to_string(patch) + ":widths=" + join(widths);
  return "tinyconv:channels=" + join(conv_channels) + ":strides=" + join(conv_strides);
}

NetSpec NetSpec::parse(const std::string& text) {
  std::istringstream is(text);
  std::string head;
  std::getline(is, head, ':');
  NetSpec spec;
  spec.widths.clear();
  if (head == "mlp") {
    spec.arch = Arch::mlp;
  } else if (head == "tinyconv") {
    spec.arch = Arch::tinyconv;
  } else {
    throw ConfigError("net spec: unknown architecture '" + head + "' (expected mlp or tinyconv)");
  }
  std::string part;
  while (std::getline(is, part, ':')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ConfigError("net spec: expected key=value, got '" + part + "'");
    const auto key = part.substr(0, eq), value = part.substr(eq + 1);
    if (key == "patch") {
      spec.patch = parse_list(value, "patch").front();
    } else if (key == "widths") {
      spec.widths = parse_list(value, "widths");
    } else if (key == "channels") {
      spec.conv_channels = parse_list(value, "channels");
    } else if (key == "strides") {
      spec.conv_strides = parse_list(value, "strides");
    } else {
      throw ConfigError("net spec: unknown key '" + key + "'");
    }
  }
  if (spec.arch == Arch::mlp && spec.widths.size() < 2) {
    throw ConfigError("net spec: mlp needs at least an input and one hidden width");
  }
  if (spec.arch == Arch::tinyconv) {
    if (spec.conv_channels.empty()) throw ConfigError("net spec: tinyconv needs channels");
    if (spec.conv_strides.empty()) spec.conv_strides.assign(spec.conv_channels.size(), 1);
    if (spec.conv_strides.size() != spec.conv_channels.size()) {
      throw ConfigError("net spec: tinyconv needs one stride per conv layer");
    }
  }
  return spec;
}

ToyNet::ToyNet(NetSpec spec, InputShape input, std::uint64_t seed)
    : spec_(std::move(spec)), input_(input), seed_(seed) {
  if (input_.num_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  std::uint64_t stream = 0;
  if (spec_.arch == Arch::mlp) {
    const std::size_t p = spec_.patch;
    if (p == 0 || input_.height % p || input_.width % p) {
      throw ConfigError("mlp patch size " + std::to_string(p) + " does not divide the " +
                        std::to_string(input_.height) + "x" + std::to_string(input_.width) + " input");
    }
    if (spec_.widths.size() < 2 || spec_.widths.front() != p * p * input_.channels) {
      throw ConfigError("mlp widths must start with the patch width P^2 C = " +
                        std::to_string(p * p * input_.channels));
    }
    for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
      add_linear("layer" + std::to_string(l), spec_.widths[l], spec_.widths[l + 1], stream);
    }
    feature_shape_ = {spec_.widths.back(), input_.height / p, input_.width / p};
  } else {
    std::size_t c = input_.channels, h = input_.height, w = input_.width;
    for (std::size_t l = 0; l < spec_.conv_channels.size(); ++l) {
      const std::size_t s = spec_.conv_strides[l];
      if (h % s || w % s) throw ConfigError("tinyconv stride must divide the feature map");
      add_linear("conv" + std::to_string(l), c * 9, spec_.conv_channels[l], stream);
      c = spec_.conv_channels[l];
      h /= s;
      w /= s;
    }
    feature_shape_ = {c, h, w};
  }
  add_linear("head", numel(feature_shape_), input_.num_classes, stream);
}

void ToyNet::add_linear(const std::string& name, std::size_t fan_in, std::size_t fan_out,
                        std::uint64_t& stream) {
  std::seed_seq seq{seed_, stream++};
  std::mt19937_64 rng(seq);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(fan_in * fan_out), b(fan_out);
  for (auto& x : w) x = dist(rng);
  for (auto& x : b) x = dist(rng);
  params_.emplace_back(Shape{fan_in, fan_out}, std::move(w), true);
  names_.push_back(name + ".weight");
  params_.emplace_back(Shape{fan_out}, std::move(b), true);
  names_.push_back(name + ".bias");
}

Shape ToyNet::feature_shape() const { return feature_shape_; }

std::size_t ToyNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ToyNet::freeze() {
  for (auto& p : params_) p.set_requires_grad(false);
}

bool ToyNet::frozen() const {
  for (const auto& p : params_)
    if (p.requires_grad()) return false;
  return true;
}

void ToyNet::load_values(const ToyNet& other) {
  if (other.params_.size() != params_.size()) throw DimensionError("load_values: layouts differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (other.params_[i].shape() != params_[i].shape()) {
      throw DimensionError("load_values: parameter " + names_[i] + " has shape " +
                           shape_str(params_[i].shape()) + " vs " + shape_str(other.params_[i].shape()));
    }
    auto dst = params_[i].mutable_data();
    auto src = other.params_[i].data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

ForwardResult ToyNet::forward(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != input_.channels || images.dim(2) != input_.height ||
      images.dim(3) != input_.width) {
    throw DimensionError("forward: expected [B x " + std::to_string(input_.channels) + " x " +
                         std::to_string(input_.height) + " x " + std::to_string(input_.width) +
                         "], got " + shape_str(images.shape()));
  }
  const std::size_t batch = images.dim(0);
  ForwardResult out;
  out.features = spec_.arch == Arch::mlp ? forward_mlp(images, batch) : forward_conv(images, batch);
  const auto& head_w = params_[params_.size() - 2];
  const auto& head_b = params_.back();
  auto flat = ops::reshape(out.features, {batch, numel(feature_shape_)});
  out.logits = ops::add_bias(ops::matmul(flat, head_w), head_b);
  return out;
}

Tensor ToyNet::forward_mlp(const Tensor& images, std::size_t batch) const {
  const std::size_t tokens = feature_shape_[1] * feature_shape_[2];
  auto x = patch_batch(images, spec_.patch);  // [B x N x P^2C]
  x = ops::reshape(x, {batch * tokens, spec_.widths.front()});
  for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
    x = ops::relu(ops::add_bias(ops::matmul(x, params_[2 * l]), params_[2 * l + 1]));
  }
  const auto index = positions_to_channels_first(batch, feature_shape_[0], feature_shape_[1],
                                                 feature_shape_[2]);
  return ops::gather(x, index, {batch, feature_shape_[0], feature_shape_[1], feature_shape_[2]});
}

Tensor ToyNet::forward_conv(const Tensor& images, std::size_t batch) const {
  Tensor x = images;
  std::size_t c = input_.channels, h = input_.height, w = input_.width;
  for (std::size_t l = 0; l < spec_.conv_channels.size(); ++l) {
    const std::size_t s = spec_.conv_strides[l], ho = h / s, wo = w / s, co = spec_.conv_channels[l];
    // im2col with zero padding: one row per output position, columns (c, ky, kx).
    std::vector<std::int64_t> index;
    index.reserve(batch * ho * wo * c * 9);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (int ky = -1; ky <= 1; ++ky)
              for (int kx = -1; kx <= 1; ++kx) {
                const auto iy = static_cast<std::int64_t>(oy * s) + ky;
                const auto ix = static_cast<std::int64_t>(ox * s) + kx;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::int64_t>(h) || ix >= static_cast<std::int64_t>(w)) {
                  index.push_back(-1);
                } else {
                  index.push_back(static_cast<std::int64_t>(((n * c + ch) * h) * w) + iy * static_cast<std::int64_t>(w) + ix);
                }
              }
    auto cols = ops::gather(x, index, {batch * ho * wo, c * 9});
    auto y = ops::relu(ops::add_bias(ops::matmul(cols, params_[2 * l]), params_[2 * l + 1]));
    const auto perm = positions_to_channels_first(batch, co, ho, wo);
    x = ops::gather(y, perm, {batch, co, ho, wo});
    c = co;
    h = ho;
    w = wo;
  }
  return x;
}

void require_smaller(const ToyNet& student, const ToyNet& teacher) {
  if (student.parameter_count() >= teacher.parameter_count()) {
    throw ConfigError("student (" + std::to_string(student.parameter_count()) +
                      " parameters) must be strictly smaller than the teacher (" +
                      std::to_string(teacher.parameter_count()) + ")");
  }
}

}  // namespace trg
