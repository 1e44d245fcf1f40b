#include "pnn/data_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pnn {

namespace {

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) io_fail(path, "truncated header");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) io_fail(path, "truncated file");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint64_t read_u64_le(std::istream& in, const std::string& path) {
  std::uint64_t v = read_u32_le(in, path);
  return v | (std::uint64_t(read_u32_le(in, path)) << 32);
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
  write_u32_le(out, static_cast<std::uint32_t>(v));
  write_u32_le(out, static_cast<std::uint32_t>(v >> 32));
}

std::string read_string(std::istream& in, const std::string& path) {
  std::uint32_t len = read_u32_le(in, path);
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) io_fail(path, "truncated string");
  return s;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32_le(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

IdxArray read_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  unsigned char magic[4];
  if (!in.read(reinterpret_cast<char*>(magic), 4))
    io_fail(path, "bad magic (file too short)");
  if (magic[0] != 0 || magic[1] != 0)
    io_fail(path, "bad magic");
  IdxArray arr;
  arr.dtype = magic[2];
  if (arr.dtype != 0x08)
    io_fail(path, "unsupported dtype 0x" + std::to_string(arr.dtype) +
                      " (only unsigned byte 0x08)");
  const std::size_t ndim = magic[3];
  if (ndim == 0 || ndim > 4) io_fail(path, "bad dimension count");
  arr.dims.resize(ndim);
  for (std::size_t i = 0; i < ndim; ++i) arr.dims[i] = read_u32_be(in, path);
  arr.payload.resize(arr.count());
  if (!in.read(reinterpret_cast<char*>(arr.payload.data()),
               static_cast<std::streamsize>(arr.payload.size())))
    io_fail(path, "truncated payload: expected " +
                      std::to_string(arr.payload.size()) + " bytes");
  in.peek();
  if (!in.eof()) io_fail(path, "trailing bytes after payload");
  return arr;
}

void write_idx(const std::string& path, const IdxArray& arr) {
  if (arr.payload.size() != arr.count())
    fail("write_idx", "payload length does not match dims");
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  unsigned char magic[4] = {0, 0, arr.dtype,
                            static_cast<unsigned char>(arr.dims.size())};
  out.write(reinterpret_cast<const char*>(magic), 4);
  for (std::uint32_t d : arr.dims) write_u32_be(out, d);
  out.write(reinterpret_cast<const char*>(arr.payload.data()),
            static_cast<std::streamsize>(arr.payload.size()));
  if (!out) io_fail(path, "write failed");
}

std::vector<int> load_idx_labels(const std::string& path) {
  IdxArray arr = read_idx(path);
  if (arr.dims.size() != 1)
    fail("load_idx_labels",
         path + ": expected 1 dim, got " + std::to_string(arr.dims.size()));
  std::vector<int> labels(arr.payload.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = arr.payload[i];
  return labels;
}

void write_idx_images(const std::string& path, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols,
                      const std::vector<std::uint8_t>& pixels) {
  IdxArray arr;
  arr.dims = {count, rows, cols};
  arr.payload = pixels;
  write_idx(path, arr);
}

void write_idx_labels(const std::string& path,
                      const std::vector<std::uint8_t>& labels) {
  IdxArray arr;
  arr.dims = {static_cast<std::uint32_t>(labels.size())};
  arr.payload = labels;
  write_idx(path, arr);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'P', 'N', 'N', '1'};
}

void CheckpointContainer::set(const std::string& key,
                              const std::string& value) {
  for (auto& kv : manifest_)
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  manifest_.emplace_back(key, value);
}

std::optional<std::string> CheckpointContainer::get(
    const std::string& key) const {
  for (const auto& kv : manifest_)
    if (kv.first == key) return kv.second;
  return std::nullopt;
}

void CheckpointContainer::add_array_f32(const std::string& name,
                                        std::span<const float> v) {
  Array a;
  a.name = name;
  a.dtype = 4;
  a.data.assign(v.begin(), v.end());
  arrays_.push_back(std::move(a));
}

void CheckpointContainer::add_array_f64(const std::string& name,
                                        std::span<const double> v) {
  Array a;
  a.name = name;
  a.dtype = 8;
  a.data.assign(v.begin(), v.end());
  arrays_.push_back(std::move(a));
}

void CheckpointContainer::add_array_raw(std::string name, std::uint8_t dtype,
                                        std::vector<double> data) {
  Array a;
  a.name = std::move(name);
  a.dtype = dtype;
  a.data = std::move(data);
  arrays_.push_back(std::move(a));
}

bool CheckpointContainer::has_array(const std::string& name) const {
  for (const auto& a : arrays_)
    if (a.name == name) return true;
  return false;
}

const CheckpointContainer::Array& CheckpointContainer::array(
    const std::string& name) const {
  for (const auto& a : arrays_)
    if (a.name == name) return a;
  throw std::runtime_error("checkpoint: no array named '" + name + "'");
}

void save_checkpoint(const CheckpointContainer& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  out.write(kMagic, 4);
  write_u32_le(out, static_cast<std::uint32_t>(c.manifest().size()));
  for (const auto& [k, v] : c.manifest()) {
    write_string(out, k);
    write_string(out, v);
  }
  write_u32_le(out, static_cast<std::uint32_t>(c.arrays().size()));
  for (const auto& a : c.arrays()) {
    write_string(out, a.name);
    out.put(static_cast<char>(a.dtype));
    write_u64_le(out, a.data.size());
    if (a.dtype == 4) {
      for (double d : a.data) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(d));
        write_u32_le(out, bits);
      }
    } else {
      for (double d : a.data) {
        const auto bits = std::bit_cast<std::uint64_t>(d);
        write_u64_le(out, bits);
      }
    }
  }
  if (!out) io_fail(path, "write failed");
}

CheckpointContainer load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    io_fail(path, "bad magic (not a PNN1 checkpoint)");
  CheckpointContainer c;
  const std::uint32_t n_manifest = read_u32_le(in, path);
  for (std::uint32_t i = 0; i < n_manifest; ++i) {
    std::string k = read_string(in, path);
    std::string v = read_string(in, path);
    c.set(k, v);
  }
  const std::uint32_t n_arrays = read_u32_le(in, path);
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    std::string name = read_string(in, path);
    const int dtype = in.get();
    if (dtype != 4 && dtype != 8) io_fail(path, "unknown array dtype");
    const std::uint64_t count = read_u64_le(in, path);
    std::vector<double> data(count);
    if (dtype == 4) {
      for (std::uint64_t j = 0; j < count; ++j)
        data[j] = std::bit_cast<float>(read_u32_le(in, path));
    } else {
      for (std::uint64_t j = 0; j < count; ++j)
        data[j] = std::bit_cast<double>(read_u64_le(in, path));
    }
    c.add_array_raw(std::move(name), static_cast<std::uint8_t>(dtype),
                    std::move(data));
  }
  in.peek();
  if (!in.eof()) io_fail(path, "length mismatch: trailing bytes");
  return c;
}

}  // namespace pnn
