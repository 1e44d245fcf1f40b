#pragma once

#include <cstdint>
#include <vector>

#include "pnn/data_io.hpp"
#include "pnn/tensor.hpp"

namespace pnn {

/// A generated 28x28 grayscale image set with class labels.
struct SynthImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 28;
  std::uint32_t cols = 28;
  std::vector<std::uint8_t> pixels;  // count*rows*cols, row-major
  std::vector<std::uint8_t> labels;
};

/// Stroke-rendered handwritten-style digits (10 balanced classes) with
/// random affine jitter, stroke width and ink variation, and light pixel
/// noise. Deterministic per seed.
SynthImages synth_digits(std::size_t n, std::uint64_t seed);

/// Garment-style images (filled and outlined silhouettes: shirts, trousers,
/// dresses, bags, shoes, pullovers) with texture noise. Statistically far
/// from digit strokes but rendered with the same ink range, for use as an
/// out-of-distribution counterpart to the digits. Deterministic per seed.
SynthImages synth_garments(std::size_t n, std::uint64_t seed);

/// Convert generated images to a dataset scaled to [0,1].
template <class S>
Dataset<S> to_dataset(const SynthImages& imgs) {
  std::vector<S> values(imgs.pixels.size());
  const S inv = S(1) / S(255);
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = static_cast<S>(imgs.pixels[i]) * inv;
  Dataset<S> d;
  d.images = Tensor<S>::from_values({imgs.count, 1, imgs.rows, imgs.cols},
                                    std::move(values));
  d.labels.assign(imgs.labels.begin(), imgs.labels.end());
  return d;
}

/// Write as standard IDX image/label files.
void write_synth_idx(const SynthImages& imgs, const std::string& images_path,
                     const std::string& labels_path);

}  // namespace pnn
