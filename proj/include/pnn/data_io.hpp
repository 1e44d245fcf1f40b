#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pnn/rng.hpp"
#include "pnn/tensor.hpp"

namespace pnn {

// ---------------------------------------------------------------------------
// IDX files (big-endian dims, unsigned-byte payload)
// ---------------------------------------------------------------------------

struct IdxArray {
  std::uint8_t dtype = 0x08;  // only unsigned byte supported
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

IdxArray read_idx(const std::string& path);
void write_idx(const std::string& path, const IdxArray& arr);

/// Labels from a 1-D IDX file.
std::vector<int> load_idx_labels(const std::string& path);

void write_idx_images(const std::string& path, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols,
                      const std::vector<std::uint8_t>& pixels);
void write_idx_labels(const std::string& path,
                      const std::vector<std::uint8_t>& labels);

/// Images from a 3-D IDX file as (count, 1, rows, cols), scaled to [0,1].
template <class S>
Tensor<S> load_idx_images(const std::string& path) {
  IdxArray arr = read_idx(path);
  if (arr.dims.size() != 3)
    fail("load_idx_images", path + ": expected 3 dims, got " +
                                std::to_string(arr.dims.size()));
  std::vector<S> values(arr.payload.size());
  const S inv = S(1) / S(255);
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = static_cast<S>(arr.payload[i]) * inv;
  return Tensor<S>::from_values(
      {arr.dims[0], 1, arr.dims[1], arr.dims[2]}, std::move(values));
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Images plus optional labels. Labels are empty for unlabeled (OOD) sets.
template <class S>
struct Dataset {
  Tensor<S> images;        // (n, ...) with batch as the leading dim
  std::vector<int> labels;

  std::size_t size() const { return images.defined() ? images.dim(0) : 0; }

  std::size_t item_size() const { return images.size() / images.dim(0); }

  /// Copy of rows [start, start+count).
  Dataset subset(std::size_t start, std::size_t count) const {
    const std::size_t isz = item_size();
    Shape s = images.shape();
    s[0] = count;
    Tensor<S> imgs = Tensor<S>::from_span(
        std::move(s), images.values().subspan(start * isz, count * isz));
    std::vector<int> lab;
    if (!labels.empty())
      lab.assign(labels.begin() + static_cast<std::ptrdiff_t>(start),
                 labels.begin() + static_cast<std::ptrdiff_t>(start + count));
    return {imgs, lab};
  }

  /// Gather the given rows into a batch tensor (and labels, when present).
  std::pair<Tensor<S>, std::vector<int>> gather(
      const std::vector<std::size_t>& indices) const {
    const std::size_t isz = item_size();
    Shape s = images.shape();
    s[0] = indices.size();
    Tensor<S> out = Tensor<S>::zeros(std::move(s));
    auto ov = out.values_mut();
    auto iv = images.values();
    for (std::size_t r = 0; r < indices.size(); ++r)
      std::copy_n(&iv[indices[r] * isz], isz, &ov[r * isz]);
    std::vector<int> lab;
    if (!labels.empty()) {
      lab.reserve(indices.size());
      for (std::size_t idx : indices) lab.push_back(labels[idx]);
    }
    return {out, lab};
  }
};

template <class S>
Dataset<S> load_idx_dataset(const std::string& images_path,
                            const std::string& labels_path) {
  Dataset<S> d;
  d.images = load_idx_images<S>(images_path);
  if (!labels_path.empty()) {
    d.labels = load_idx_labels(labels_path);
    if (d.labels.size() != d.images.dim(0))
      fail("load_idx_dataset", "image/label count mismatch: " +
                                   std::to_string(d.images.dim(0)) + " vs " +
                                   std::to_string(d.labels.size()));
  }
  return d;
}

/// Images with every pixel drawn iid from N(0,1).
template <class S>
Tensor<S> synthetic_gaussian_images(std::size_t n, Shape item_shape,
                                    std::uint64_t seed) {
  if (n == 0) fail("synthetic_gaussian_images", "need n >= 1");
  Rng rng = Rng::stream(seed, "synthetic_ood");
  Shape s = std::move(item_shape);
  s.insert(s.begin(), n);
  Tensor<S> out = Tensor<S>::zeros(std::move(s));
  for (S& v : out.values_mut()) v = static_cast<S>(rng.normal());
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint container
// ---------------------------------------------------------------------------

/// Binary container: "PNN1" magic, ordered text manifest, named flat arrays
/// stored little-endian as f32 or f64. Unknown manifest keys are preserved.
class CheckpointContainer {
 public:
  struct Array {
    std::string name;
    std::uint8_t dtype = 4;     // 4 = f32, 8 = f64
    std::vector<double> data;   // exact carrier for both dtypes
  };

  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& manifest() const {
    return manifest_;
  }

  void add_array_f32(const std::string& name, std::span<const float> v);
  void add_array_f64(const std::string& name, std::span<const double> v);
  void add_array_raw(std::string name, std::uint8_t dtype,
                     std::vector<double> data);
  bool has_array(const std::string& name) const;
  const Array& array(const std::string& name) const;
  const std::vector<Array>& arrays() const { return arrays_; }

  template <class S>
  std::vector<S> array_as(const std::string& name) const {
    const Array& a = array(name);
    std::vector<S> out(a.data.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = static_cast<S>(a.data[i]);
    return out;
  }

  /// Stores per the active precision: f32 for narrow, f64 for wide.
  template <class S>
  void add_array(const std::string& name, std::span<const S> v) {
    if constexpr (sizeof(S) == 4)
      add_array_f32(name, v);
    else
      add_array_f64(name, v);
  }

 private:
  std::vector<std::pair<std::string, std::string>> manifest_;
  std::vector<Array> arrays_;
};

void save_checkpoint(const CheckpointContainer& c, const std::string& path);
CheckpointContainer load_checkpoint(const std::string& path);

}  // namespace pnn
