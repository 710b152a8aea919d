#include "trg/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "trg/errors.hpp"

namespace trg {

namespace {

constexpr char kBinaryMagic[4] = {'T', 'G', 'D', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw ParseError("truncated dataset file while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& text, double& out) {
  std::size_t used = 0;
  try {
    out = std::stod(text, &used);
  } catch (const std::exception&) {
    return false;
  }
  while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
  return used == text.size();
}

void normalize_pixels(std::vector<double>& px) {
  const double mx = px.empty() ? 0.0 : *std::max_element(px.begin(), px.end());
  if (mx > 1.0) {
    for (auto& v : px) v /= 255.0;
  }
}

LabeledDataset load_csv(const std::filesystem::path& path, const CsvLayout& layout) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  const std::size_t width = layout.channels * layout.height * layout.width;
  std::vector<int> labels;
  std::vector<double> pixels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv(line);
    double label = 0.0;
    if (!parse_double(fields[0], label)) {
      if (labels.empty() && line_no == 1) continue;  // header
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": label '" + fields[0] +
                       "' is not a number");
    }
    if (fields.size() != width + 1) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(width + 1) + " fields, got " + std::to_string(fields.size()));
    }
    if (label < 0 || label != std::floor(label) || label >= static_cast<double>(layout.num_classes)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": label " + fields[0] +
                       " outside [0," + std::to_string(layout.num_classes) + ")");
    }
    labels.push_back(static_cast<int>(label));
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v = 0.0;
      if (!parse_double(fields[i], v) || !std::isfinite(v)) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad pixel value '" +
                         fields[i] + "' in column " + std::to_string(i));
      }
      pixels.push_back(v);
    }
  }
  if (labels.empty()) throw ParseError(path.string() + ": dataset file holds no samples");
  normalize_pixels(pixels);
  LabeledDataset ds;
  ds.images = Tensor({labels.size(), layout.channels, layout.height, layout.width}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.num_classes = layout.num_classes;
  return ds;
}

LabeledDataset load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  char magic[4];
  if (!in.read(magic, 4)) throw ParseError(path.string() + ": empty dataset file");
  if (!std::equal(magic, magic + 4, kBinaryMagic)) throw ParseError(path.string() + ": bad magic, expected TGD1");
  const auto n = get_u32(in, "N"), k = get_u32(in, "K"), c = get_u32(in, "C"),
             h = get_u32(in, "H"), w = get_u32(in, "W");
  if (n == 0) throw ParseError(path.string() + ": dataset file holds no samples");
  if (k == 0 || c == 0 || h == 0 || w == 0) throw ParseError(path.string() + ": zero extent in header");
  std::vector<int> labels(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto y = get_u32(in, "labels");
    if (y >= k) {
      throw ParseError(path.string() + ": sample " + std::to_string(i) + " has label " +
                       std::to_string(y) + " outside [0," + std::to_string(k) + ")");
    }
    labels[i] = static_cast<int>(y);
  }
  const std::size_t count = static_cast<std::size_t>(n) * c * h * w;
  std::vector<double> pixels(count);
  for (std::size_t i = 0; i < count; ++i) {
    pixels[i] = static_cast<double>(std::bit_cast<float>(get_u32(in, "pixels")));
    if (!std::isfinite(pixels[i])) throw ParseError(path.string() + ": non-finite pixel at " + std::to_string(i));
  }
  normalize_pixels(pixels);
  LabeledDataset ds;
  ds.images = Tensor({n, c, h, w}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.num_classes = k;
  return ds;
}

}  // namespace

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Tensor LabeledDataset::batch_images(std::span<const std::size_t> index) const {
  const std::size_t px = pixels_per_image();
  std::vector<double> out(index.size() * px);
  const auto src = images.data();
  for (std::size_t b = 0; b < index.size(); ++b) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(index[b] * px), px,
                out.begin() + static_cast<std::ptrdiff_t>(b * px));
  }
  return Tensor({index.size(), channels(), height(), width()}, std::move(out));
}

std::vector<int> LabeledDataset::batch_labels(std::span<const std::size_t> index) const {
  std::vector<int> out(index.size());
  for (std::size_t b = 0; b < index.size(); ++b) out[b] = labels[index[b]];
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> index, std::string split_name) const {
  if (index.empty()) throw UsageError("subset: empty index list");
  LabeledDataset out;
  out.images = batch_images(index);
  out.labels = batch_labels(index);
  out.num_classes = num_classes;
  out.split = std::move(split_name);
  return out;
}

void LabeledDataset::validate() const {
  if (!images.defined() || images.rank() != 4) throw UsageError("dataset images must be [N x C x H x W]");
  if (images.dim(0) != labels.size()) throw DimensionError("dataset image count does not match label count");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw UsageError("dataset label out of range");
  }
}

Tensor synth_prototypes(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (spec.cell == 0 || spec.height % spec.cell || spec.width % spec.cell) {
    throw ConfigError("prototype cell size must divide the image size");
  }
  if (spec.dictionary_size == 0) throw ConfigError("prototype dictionary must be non-empty");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t cell_px = spec.channels * spec.cell * spec.cell;
  std::vector<double> dictionary(spec.dictionary_size * cell_px);
  for (auto& v : dictionary) v = unit(rng);

  const std::size_t rows = spec.height / spec.cell, cols = spec.width / spec.cell;
  const std::size_t per_image = spec.channels * spec.height * spec.width;
  std::vector<double> out(spec.num_classes * per_image);
  std::uniform_int_distribution<std::size_t> pick(0, spec.dictionary_size - 1);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t q = 0; q < cols; ++q) {
        const double* part = dictionary.data() + pick(rng) * cell_px;
        for (std::size_t c = 0; c < spec.channels; ++c)
          for (std::size_t dy = 0; dy < spec.cell; ++dy)
            for (std::size_t dx = 0; dx < spec.cell; ++dx)
              out[k * per_image + (c * spec.height + r * spec.cell + dy) * spec.width + q * spec.cell + dx] =
                  part[(c * spec.cell + dy) * spec.cell + dx];
      }
    }
  }
  return Tensor({spec.num_classes, spec.channels, spec.height, spec.width}, std::move(out));
}

LabeledDataset synth_dataset(const SynthSpec& spec) {
  if (spec.per_class == 0) throw ConfigError("synthetic dataset needs at least one sample per class");
  if (spec.noise < 0.0) throw ConfigError("noise must be non-negative");
  const auto protos = synth_prototypes(spec);
  const std::size_t per_image = spec.channels * spec.height * spec.width;
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n = spec.num_classes * spec.per_class;
  std::vector<double> pixels(n * per_image);
  std::vector<int> labels(n);
  const auto p = protos.data();
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    for (std::size_t s = 0; s < spec.per_class; ++s) {
      const std::size_t row = k * spec.per_class + s;
      labels[row] = static_cast<int>(k);
      for (std::size_t i = 0; i < per_image; ++i) {
        const double v = p[k * per_image + i] + spec.noise * gauss(rng);
        pixels[row * per_image + i] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  LabeledDataset ds;
  ds.images = Tensor({n, spec.channels, spec.height, spec.width}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.num_classes = spec.num_classes;
  ds.split = "all";
  return ds;
}

SplitDataset stratified_split(const LabeledDataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must be in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, test;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(cut));
    test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(cut), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  if (train.empty() || test.empty()) throw ConfigError("stratified split left one side empty");
  return {ds.subset(train, "train"), ds.subset(test, "test")};
}

std::vector<std::size_t> long_tail_counts(std::size_t n_max, std::size_t num_classes, double rho) {
  if (!(rho >= 1.0)) throw ConfigError("imbalance rate must be >= 1");
  std::vector<std::size_t> out(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double frac = num_classes > 1 ? static_cast<double>(c) / static_cast<double>(num_classes - 1) : 0.0;
    const double target = static_cast<double>(n_max) * std::pow(rho, -frac);
    out[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(target - 1e-9)));
  }
  return out;
}

LabeledDataset long_tail_subsample(const LabeledDataset& ds, double rho, std::uint64_t seed) {
  if (!(rho >= 1.0)) throw ConfigError("imbalance rate must be >= 1, got " + std::to_string(rho));
  const auto counts = ds.class_counts();
  const std::size_t n_max = *std::max_element(counts.begin(), counts.end());
  const auto keep = long_tail_counts(n_max, ds.num_classes, rho);
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    auto& members = by_class[c];
    const std::size_t want = std::min(keep[c], members.size());
    std::vector<std::size_t> chosen;
    std::sample(members.begin(), members.end(), std::back_inserter(chosen), want, rng);
    kept.insert(kept.end(), chosen.begin(), chosen.end());
  }
  std::sort(kept.begin(), kept.end());
  return ds.subset(kept, ds.split);
}

DatasetFormat parse_dataset_format(const std::string& text) {
  if (text == "csv") return DatasetFormat::csv;
  if (text == "binary" || text == "bin") return DatasetFormat::binary;
  throw ConfigError("dataset format must be csv or binary, got '" + text + "'");
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? DatasetFormat::csv : DatasetFormat::binary;
}

LabeledDataset load_dataset(const std::filesystem::path& path, DatasetFormat format, const CsvLayout& layout) {
  auto ds = format == DatasetFormat::csv ? load_csv(path, layout) : load_binary(path);
  ds.split = "all";
  ds.validate();
  return ds;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path, DatasetFormat format) {
  ds.validate();
  if (format == DatasetFormat::csv) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    const std::size_t px = ds.pixels_per_image();
    out << "label";
    for (std::size_t i = 0; i < px; ++i) out << ",p" << i;
    out << '\n' << std::setprecision(17);
    const auto v = ds.images.data();
    for (std::size_t r = 0; r < ds.size(); ++r) {
      out << ds.labels[r];
      for (std::size_t i = 0; i < px; ++i) out << ',' << v[r * px + i];
      out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kBinaryMagic, 4);
  for (auto e : {ds.size(), ds.num_classes, ds.channels(), ds.height(), ds.width()}) {
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (int y : ds.labels) put_u32(out, static_cast<std::uint32_t>(y));
  for (double v : ds.images.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace trg
