#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "trg/dataset.hpp"
#include "trg/errors.hpp"
#include "trg/model.hpp"

using namespace trg;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "trg_unit_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// Least-squares one-hot regression solved by Gaussian elimination on the
// ridge-regularized normal equations.
double linear_probe_accuracy(const LabeledDataset& train, const LabeledDataset& test) {
  const std::size_t d = train.pixels_per_image() + 1, k = train.num_classes;
  std::vector<double> a(d * d, 0.0), b(d * k, 0.0);
  auto feat = [&](const LabeledDataset& ds, std::size_t i, std::size_t j) {
    return j + 1 == d ? 1.0 : ds.images.data()[i * (d - 1) + j];
  };
  for (std::size_t i = 0; i < train.size(); ++i)
    for (std::size_t r = 0; r < d; ++r) {
      const double fr = feat(train, i, r);
      for (std::size_t c = 0; c < d; ++c) a[r * d + c] += fr * feat(train, i, c);
      b[r * k + static_cast<std::size_t>(train.labels[i])] += fr;
    }
  for (std::size_t r = 0; r < d; ++r) a[r * d + r] += 1e-3;
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::abs(a[r * d + col]) > std::abs(a[piv * d + col])) piv = r;
    for (std::size_t c = 0; c < d; ++c) std::swap(a[col * d + c], a[piv * d + c]);
    for (std::size_t c = 0; c < k; ++c) std::swap(b[col * k + c], b[piv * k + c]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col) continue;
      const double f = a[r * d + col] / a[col * d + col];
      for (std::size_t c = 0; c < d; ++c) a[r * d + c] -= f * a[col * d + c];
      for (std::size_t c = 0; c < k; ++c) b[r * k + c] -= f * b[col * k + c];
    }
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double v = 0.0;
      for (std::size_t r = 0; r < d; ++r) v += feat(test, i, r) * b[r * k + c] / a[r * d + r];
      if (v > best_v) best_v = v, best = c;
    }
    hits += best == static_cast<std::size_t>(test.labels[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("net spec text form") {
  auto s = NetSpec::parse("mlp:patch=2:widths=4,64,32");
  CHECK(s.arch == Arch::mlp);
  CHECK(s.widths == std::vector<std::size_t>{4, 64, 32});
  CHECK(NetSpec::parse(s.str()) == s);
  auto c = NetSpec::parse("tinyconv:channels=4,8:strides=1,2");
  CHECK(NetSpec::parse(c.str()) == c);
  CHECK_THROWS_AS(NetSpec::parse("resnet:patch=2"), ConfigError);
  CHECK_THROWS_AS(NetSpec::parse("mlp:patch=2:widths=4"), ConfigError);
  CHECK_THROWS_AS(NetSpec::parse("mlp:patch=2:depth=3"), ConfigError);
  CHECK_THROWS_AS(NetSpec::parse("tinyconv:channels=4,8:strides=1"), ConfigError);
  CHECK_THROWS_AS(ToyNet(NetSpec::parse("mlp:patch=2:widths=5,8"), InputShape{}, 1), ConfigError);
  CHECK_THROWS_AS(ToyNet(NetSpec::parse("mlp:patch=3:widths=9,8"), InputShape{}, 1), ConfigError);
}

TEST_CASE("parameter counts follow the closed form") {
  const std::size_t k = 10;
  // flat MLP on 8x8 grayscale: one 64-pixel token
  ToyNet flat(NetSpec::parse("mlp:patch=8:widths=64,64,32"), {1, 8, 8, k}, 1);
  CHECK(flat.parameter_count() == 64 * 64 + 64 + 64 * 32 + 32 + 32 * k + k);
  // 48-wide tokens: 4x4 RGB patches, four of them per 8x8 image
  ToyNet rgb(NetSpec::parse("mlp:patch=4:widths=48,64,32"), {3, 8, 8, k}, 1);
  CHECK(rgb.parameter_count() == 48 * 64 + 64 + 64 * 32 + 32 + 4 * 32 * k + k);
  ToyNet conv(NetSpec::parse("tinyconv:channels=4,8:strides=1,2"), {1, 8, 8, k}, 1);
  CHECK(conv.parameter_count() == (9 * 1 * 4 + 4) + (9 * 4 * 8 + 8) + 8 * 4 * 4 * k + k);
}

TEST_CASE("feature hook shapes and forward determinism") {
  ToyNet conv(NetSpec::parse("tinyconv:channels=4,8:strides=1,2"), {1, 8, 8, 10}, 3);
  CHECK(conv.feature_shape() == Shape{8, 4, 4});
  std::mt19937_64 rng(4);
  auto x = testutil::random_tensor({5, 1, 8, 8}, rng);
  auto out = conv.forward(x);
  CHECK(out.features.shape() == Shape{5, 8, 4, 4});
  CHECK(out.logits.shape() == Shape{5, 10});

  ToyNet mlp(NetSpec::parse("mlp:patch=2:widths=4,12,6"), {1, 8, 8, 10}, 3);
  CHECK(mlp.feature_shape() == Shape{6, 4, 4});

  for (const char* spec : {"mlp:patch=2:widths=4,12,6", "tinyconv:channels=4,8:strides=1,2"}) {
    ToyNet a(NetSpec::parse(spec), {1, 8, 8, 10}, 9), b(NetSpec::parse(spec), {1, 8, 8, 10}, 9),
        c(NetSpec::parse(spec), {1, 8, 8, 10}, 10);
    CHECK(testutil::same_bits(a.forward(x).logits.data(), b.forward(x).logits.data()));
    CHECK_FALSE(testutil::same_bits(a.forward(x).logits.data(), c.forward(x).logits.data()));
  }
  CHECK_THROWS_AS(mlp.forward(testutil::random_tensor({2, 1, 4, 4}, rng)), DimensionError);
}

TEST_CASE("freeze, load_values and the size check") {
  ToyNet t(NetSpec::parse("mlp:patch=2:widths=4,64,32"), {}, 1);
  ToyNet s(NetSpec::parse("mlp:patch=2:widths=4,12,6"), {}, 1);
  CHECK_NOTHROW(require_smaller(s, t));
  CHECK_THROWS_AS(require_smaller(t, s), ConfigError);
  CHECK_THROWS_AS(require_smaller(t, t), ConfigError);
  CHECK_FALSE(t.frozen());
  t.freeze();
  CHECK(t.frozen());
  ToyNet u(NetSpec::parse("mlp:patch=2:widths=4,64,32"), {}, 2);
  u.load_values(t);
  for (std::size_t i = 0; i < t.parameters().size(); ++i)
    CHECK(testutil::same_bits(u.parameters()[i].data(), t.parameters()[i].data()));
  CHECK_THROWS_AS(u.load_values(s), DimensionError);
}

TEST_CASE("synthetic dataset") {
  SynthSpec spec;
  spec.per_class = 200;
  auto ds = synth_dataset(spec);
  CHECK(ds.size() == 2000);
  for (auto c : ds.class_counts()) CHECK(c == 200);
  for (double v : ds.images.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  auto again = synth_dataset(spec);
  CHECK(testutil::same_bits(ds.images.data(), again.images.data()));

  SUBCASE("noise-free samples are their prototypes") {
    spec.noise = 0.0;
    spec.per_class = 5;
    auto clean = synth_dataset(spec);
    auto protos = synth_prototypes(spec);
    const std::size_t px = 64;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t k = 0; k < 10; ++k) {
        double d = 0.0;
        for (std::size_t j = 0; j < px; ++j) {
          const double diff = clean.images.data()[i * px + j] - protos.data()[k * px + j];
          d += diff * diff;
        }
        if (d < best_d) best_d = d, best = k;
      }
      hits += best == static_cast<std::size_t>(clean.labels[i]);
    }
    CHECK(hits == clean.size());
  }
  SUBCASE("moderate noise: a linear probe is informative but imperfect") {
    spec.noise = 1.0;
    spec.per_class = 100;
    auto split = stratified_split(synth_dataset(spec), 0.8, 3);
    const double acc = linear_probe_accuracy(split.train, split.test);
    CHECK(acc > 0.1);
    CHECK(acc < 1.0);
    CHECK(linear_probe_accuracy(split.train, split.test) == acc);
  }
  CHECK_THROWS_AS(synth_dataset(SynthSpec{1}), ConfigError);
}

TEST_CASE("stratified split") {
  SynthSpec spec;
  spec.per_class = 50;
  auto split = stratified_split(synth_dataset(spec), 0.8, 1);
  for (auto c : split.train.class_counts()) CHECK(c == 40);
  for (auto c : split.test.class_counts()) CHECK(c == 10);
  auto again = stratified_split(synth_dataset(spec), 0.8, 1);
  CHECK(split.train.labels == again.train.labels);
  CHECK(testutil::same_bits(split.test.images.data(), again.test.images.data()));
  CHECK_THROWS_AS(stratified_split(synth_dataset(spec), 1.0, 1), ConfigError);
}

TEST_CASE("long-tail subsampling") {
  CHECK(long_tail_counts(200, 10, 10.0).back() == 20);
  CHECK(long_tail_counts(200, 10, 10.0).front() == 200);
  auto steep = long_tail_counts(200, 10, 100.0);
  for (std::size_t c = 1; c < steep.size(); ++c) CHECK(steep[c] < steep[c - 1]);
  for (std::size_t c = 0; c < 10; ++c)
    CHECK(steep[c] == static_cast<std::size_t>(std::ceil(200.0 * std::pow(100.0, -double(c) / 9.0) - 1e-9)));

  SynthSpec spec;
  spec.per_class = 200;
  auto ds = synth_dataset(spec);
  auto same = long_tail_subsample(ds, 1.0, 4);
  CHECK(same.size() == ds.size());
  CHECK(same.class_counts() == ds.class_counts());
  auto lt = long_tail_subsample(ds, 10.0, 4);
  CHECK(lt.class_counts() == long_tail_counts(200, 10, 10.0));
  CHECK_THROWS_AS(long_tail_subsample(ds, 0.5, 4), ConfigError);
}

TEST_CASE("dataset files") {
  SynthSpec spec;
  spec.per_class = 3;
  auto ds = synth_dataset(spec);
  auto csv = temp_path("round.csv");
  save_dataset(ds, csv, DatasetFormat::csv);
  auto back = load_dataset(csv, DatasetFormat::csv);
  CHECK(back.labels == ds.labels);
  CHECK(testutil::same_bits(back.images.data(), ds.images.data()));

  // the binary layout stores 32-bit floats: exact for float-valued pixels
  auto bin = temp_path("round.bin");
  save_dataset(ds, bin, DatasetFormat::binary);
  auto once = load_dataset(bin, DatasetFormat::binary);
  CHECK(once.labels == ds.labels);
  for (std::size_t i = 0; i < ds.images.size(); ++i)
    CHECK(once.images.data()[i] == static_cast<double>(static_cast<float>(ds.images.data()[i])));
  save_dataset(once, bin, DatasetFormat::binary);
  CHECK(testutil::same_bits(load_dataset(bin, DatasetFormat::binary).images.data(), once.images.data()));
  CHECK(format_from_path("a/b.csv") == DatasetFormat::csv);
  CHECK(format_from_path("a/b.bin") == DatasetFormat::binary);

  CsvLayout tiny{3, 1, 1, 2};
  auto bad = temp_path("bad_label.csv");
  write_text(bad, "label,p0,p1\n0,0.1,0.2\n3,0.5,0.5\n");
  CHECK_THROWS_AS(load_dataset(bad, DatasetFormat::csv, tiny), ParseError);
  CHECK(error_of([&] { load_dataset(bad, DatasetFormat::csv, tiny); }).find(":3:") != std::string::npos);

  auto ragged = temp_path("ragged.csv");
  write_text(ragged, "0,0.1,0.2\n1,0.5\n");
  CHECK(error_of([&] { load_dataset(ragged, DatasetFormat::csv, tiny); }).find(":2:") != std::string::npos);

  auto empty = temp_path("empty.csv");
  write_text(empty, "");
  CHECK_THROWS_AS(load_dataset(empty, DatasetFormat::csv, tiny), ParseError);
  auto empty_bin = temp_path("empty.bin");
  write_text(empty_bin, "");
  CHECK_THROWS_AS(load_dataset(empty_bin, DatasetFormat::binary), ParseError);

  auto bytes = temp_path("bytes.csv");
  write_text(bytes, "1,255,0\n");
  auto scaled = load_dataset(bytes, DatasetFormat::csv, tiny);
  CHECK(scaled.images.data()[0] == 1.0);

  CHECK_THROWS_AS(load_dataset(temp_path("missing.csv"), DatasetFormat::csv, tiny), IoError);
}
