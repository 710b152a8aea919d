#include "trg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "trg/errors.hpp"

namespace trg {

namespace {

constexpr char kMagic[4] = {'T', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ofstream& os) : os_(os) {}
  template <typename T>
  void pod(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& os_;
};

class Reader {
 public:
  Reader(std::ifstream& is, std::string where) : is_(is), where_(std::move(where)) {}
  template <typename T>
  T pod() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) throw ParseError(where_ + ": truncated checkpoint");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 24)) throw ParseError(where_ + ": corrupt string length");
    std::string s(n, '\0');
    is_.read(s.data(), n);
    if (!is_) throw ParseError(where_ + ": truncated checkpoint");
    return s;
  }
  void doubles(std::vector<double>& out) {
    is_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(double)));
    if (!is_) throw ParseError(where_ + ": truncated checkpoint");
  }

 private:
  std::ifstream& is_;
  std::string where_;
};

}  // namespace

const Blob& Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return b;
  throw ParseError("checkpoint has no entry '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& b : blobs)
    if (b.name == name) return true;
  return false;
}

Blob to_blob(const std::string& name, const Tensor& t) {
  return {name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())};
}

Blob to_blob(const std::string& name, const Shape& shape, const std::vector<double>& values) {
  return {name, shape, values};
}

void load_blob(const Blob& blob, Tensor& target) {
  if (blob.shape != target.shape()) {
    throw DimensionError("checkpoint entry '" + blob.name + "' has shape " + shape_str(blob.shape) +
                         ", expected " + shape_str(target.shape()));
  }
  auto dst = target.mutable_data();
  std::copy(blob.values.begin(), blob.values.end(), dst.begin());
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    Writer w(os);
    os.write(kMagic, 4);
    w.pod(kVersion);
    w.pod(ckpt.config_hash);
    w.str(ckpt.kind);
    w.str(ckpt.meta);
    w.pod(ckpt.epoch);
    w.pod(ckpt.step);
    w.pod(ckpt.best_accuracy);
    w.pod(ckpt.best_epoch);
    w.str(ckpt.rng_state);
    w.pod(static_cast<std::uint32_t>(ckpt.blobs.size()));
    for (const auto& b : ckpt.blobs) {
      if (numel(b.shape) != b.values.size()) throw DimensionError("checkpoint entry '" + b.name + "' size mismatch");
      w.str(b.name);
      w.pod(static_cast<std::uint32_t>(b.shape.size()));
      for (auto d : b.shape) w.pod(static_cast<std::uint64_t>(d));
      os.write(reinterpret_cast<const char*>(b.values.data()),
               static_cast<std::streamsize>(b.values.size() * sizeof(double)));
    }
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw ParseError(path.string() + ": not a TGCK checkpoint");
  Reader r(is, path.string());
  if (r.pod<std::uint32_t>() != kVersion) throw ParseError(path.string() + ": unsupported checkpoint version");
  Checkpoint c;
  c.config_hash = r.pod<std::uint64_t>();
  c.kind = r.str();
  c.meta = r.str();
  c.epoch = r.pod<std::uint64_t>();
  c.step = r.pod<std::uint64_t>();
  c.best_accuracy = r.pod<double>();
  c.best_epoch = r.pod<std::uint64_t>();
  c.rng_state = r.str();
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Blob b;
    b.name = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank == 0 || rank > 8) throw ParseError(path.string() + ": corrupt rank for '" + b.name + "'");
    for (std::uint32_t a = 0; a < rank; ++a) b.shape.push_back(static_cast<std::size_t>(r.pod<std::uint64_t>()));
    const auto n = numel(b.shape);
    if (n > (std::size_t{1} << 28)) throw ParseError(path.string() + ": corrupt size for '" + b.name + "'");
    b.values.resize(n);
    r.doubles(b.values);
    c.blobs.push_back(std::move(b));
  }
  return c;
}

}  // namespace trg
