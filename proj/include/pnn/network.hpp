#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pnn/rng.hpp"
#include "pnn/tensor.hpp"

namespace pnn {

enum class LayerKind { conv2d, maxpool2d, relu, flatten, dense };

struct LayerSpec {
  LayerKind kind;
  std::size_t channels = 0;  // conv2d: output channels
  std::size_t kernel = 0;    // conv2d: square kernel size (odd, same padding)
  std::size_t units = 0;     // dense: output units

  static LayerSpec conv(std::size_t channels, std::size_t kernel) {
    return {LayerKind::conv2d, channels, kernel, 0};
  }
  static LayerSpec pool() { return {LayerKind::maxpool2d}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }
  static LayerSpec dense(std::size_t units) {
    return {LayerKind::dense, 0, 0, units};
  }
};

struct NetworkSpec {
  std::string name;
  Shape input_shape;  // (channels, height, width) or (features)
  std::vector<LayerSpec> layers;
  std::size_t num_classes = 0;

  /// Shallow CNN: two 5x5 conv layers (32, 64 channels, same padding), each
  /// followed by relu and 2x2 max pooling, then dense 1024 and dense 10.
  static NetworkSpec c1() {
    NetworkSpec s;
    s.name = "c1";
    s.input_shape = {1, 28, 28};
    s.layers = {LayerSpec::conv(32, 5), LayerSpec::relu(), LayerSpec::pool(),
                LayerSpec::conv(64, 5), LayerSpec::relu(), LayerSpec::pool(),
                LayerSpec::flatten(),   LayerSpec::dense(1024),
                LayerSpec::relu(),      LayerSpec::dense(10)};
    s.num_classes = 10;
    return s;
  }

  /// Reduced c1 (8/16 conv channels, 128-unit dense) for fast runs.
  static NetworkSpec c1_small() {
    NetworkSpec s;
    s.name = "c1_small";
    s.input_shape = {1, 28, 28};
    s.layers = {LayerSpec::conv(8, 5),  LayerSpec::relu(), LayerSpec::pool(),
                LayerSpec::conv(16, 5), LayerSpec::relu(), LayerSpec::pool(),
                LayerSpec::flatten(),   LayerSpec::dense(128),
                LayerSpec::relu(),      LayerSpec::dense(10)};
    s.num_classes = 10;
    return s;
  }

  /// Fully connected net with relu between layers; `widths` excludes the
  /// input width.
  static NetworkSpec mlp(std::size_t inputs, std::vector<std::size_t> widths) {
    NetworkSpec s;
    s.name = "mlp";
    s.input_shape = {inputs};
    for (std::size_t i = 0; i < widths.size(); ++i) {
      s.layers.push_back(LayerSpec::dense(widths[i]));
      if (i + 1 < widths.size()) s.layers.push_back(LayerSpec::relu());
    }
    s.num_classes = widths.back();
    return s;
  }
};

struct ParamView {
  std::size_t offset = 0;
  std::size_t len = 0;
  Shape shape;
  bool is_bias = false;
};

/// Flat parameter vector plus per-layer views that tile it exactly.
template <class S>
struct ParamStore {
  std::vector<S> flat;
  std::vector<ParamView> views;
};

/// A network with resolved layer shapes. Immutable after build; forward
/// passes on distinct tapes are independent.
template <class S>
class Network {
 public:
  static std::pair<Network, ParamStore<S>> build(const NetworkSpec& spec,
                                                 std::uint64_t init_seed) {
    Network net;
    net.spec_ = spec;
    Shape cur = spec.input_shape;
    std::size_t offset = 0;
    for (const LayerSpec& layer : spec.layers) {
      ResolvedLayer rl;
      rl.kind = layer.kind;
      switch (layer.kind) {
        case LayerKind::conv2d: {
          if (cur.size() != 3)
            fail("build_network", "conv2d needs (c,h,w) input, have " +
                                      shape_str(cur));
          rl.in_channels = cur[0];
          rl.out_channels = layer.channels;
          rl.kernel = layer.kernel;
          rl.weight = net.add_view(offset,
                                   {layer.channels, cur[0], layer.kernel,
                                    layer.kernel},
                                   false);
          rl.bias = net.add_view(offset, {layer.channels}, true);
          cur[0] = layer.channels;  // same padding keeps h, w
          break;
        }
        case LayerKind::maxpool2d: {
          if (cur.size() != 3 || cur[1] % 2 != 0 || cur[2] % 2 != 0)
            fail("build_network",
                 "maxpool2d needs even (c,h,w) input, have " + shape_str(cur));
          cur[1] /= 2;
          cur[2] /= 2;
          break;
        }
        case LayerKind::relu:
          break;
        case LayerKind::flatten: {
          cur = {numel(cur)};
          break;
        }
        case LayerKind::dense: {
          if (cur.size() != 1)
            fail("build_network",
                 "dense needs flattened input, have " + shape_str(cur));
          rl.in_units = cur[0];
          rl.out_units = layer.units;
          rl.weight = net.add_view(offset, {cur[0], layer.units}, false);
          rl.bias = net.add_view(offset, {layer.units}, true);
          cur = {layer.units};
          break;
        }
      }
      net.layers_.push_back(rl);
    }
    if (cur.size() != 1 || cur[0] != spec.num_classes)
      fail("build_network", "network emits " + shape_str(cur) + ", expected " +
                                std::to_string(spec.num_classes) + " logits");
    net.param_count_ = offset;

    ParamStore<S> params;
    params.views = net.views_;
    params.flat.assign(offset, S(0));
    Rng rng = Rng::stream(init_seed, "weight_init");
    for (std::size_t li = 0; li < net.layers_.size(); ++li) {
      const ResolvedLayer& rl = net.layers_[li];
      if (rl.kind != LayerKind::conv2d && rl.kind != LayerKind::dense) continue;
      const ParamView& wv = net.views_[rl.weight];
      std::size_t fan_in = rl.kind == LayerKind::conv2d
                               ? rl.in_channels * rl.kernel * rl.kernel
                               : rl.in_units;
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < wv.len; ++i)
        params.flat[wv.offset + i] =
            static_cast<S>(rng.uniform(-limit, limit));
      // biases stay zero
    }
    return {std::move(net), std::move(params)};
  }

  const NetworkSpec& spec() const { return spec_; }
  std::size_t param_count() const { return param_count_; }
  std::size_t num_classes() const { return spec_.num_classes; }
  const std::vector<ParamView>& views() const { return views_; }

  /// Mask with 1 at weight coordinates and 0 at bias coordinates.
  std::vector<S> weight_mask() const {
    std::vector<S> m(param_count_, S(0));
    for (const ParamView& v : views_)
      if (!v.is_bias)
        for (std::size_t i = 0; i < v.len; ++i) m[v.offset + i] = S(1);
    return m;
  }

  /// Batch shape expected by forward(), (n, c, h, w) or (n, features).
  Shape batch_shape(std::size_t n) const {
    Shape s = spec_.input_shape;
    s.insert(s.begin(), n);
    return s;
  }

  /// Differentiable forward pass. `params` is the flat parameter tensor
  /// (may require grad), `batch` is (n, ...input_shape).
  Tensor<S> forward(Tape<S>& tape, const Tensor<S>& params,
                    const Tensor<S>& batch) const {
    if (params.size() != param_count_)
      fail("forward", "expected " + std::to_string(param_count_) +
                          " parameters, got " + std::to_string(params.size()));
    check_batch("forward", batch);
    Tensor<S> x = batch;
    for (const ResolvedLayer& rl : layers_) {
      switch (rl.kind) {
        case LayerKind::conv2d: {
          Tensor<S> w = view_tensor(tape, params, rl.weight);
          Tensor<S> b = view_tensor(tape, params, rl.bias);
          x = add_channel_bias(tape, conv2d(tape, x, w, Padding::same), b);
          break;
        }
        case LayerKind::maxpool2d:
          x = maxpool2d(tape, x);
          break;
        case LayerKind::relu:
          x = relu(tape, x);
          break;
        case LayerKind::flatten:
          x = reshape(tape, x, {x.dim(0), x.size() / x.dim(0)});
          break;
        case LayerKind::dense: {
          Tensor<S> w = view_tensor(tape, params, rl.weight);
          Tensor<S> b = view_tensor(tape, params, rl.bias);
          x = add_row_bias(tape, matmul(tape, x, w), b);
          break;
        }
      }
    }
    return x;
  }

  /// Inference-only logits from a plain parameter span.
  Tensor<S> forward_values(std::span<const S> params,
                           const Tensor<S>& batch) const {
    Tape<S> tape;
    Tensor<S> p = Tensor<S>::from_span({params.size()}, params);
    return forward(tape, p, batch);
  }

  /// Row-wise softmax of the logits; rows sum to 1.
  Tensor<S> predict_probs(std::span<const S> params,
                          const Tensor<S>& batch) const {
    Tape<S> tape;
    Tensor<S> p = Tensor<S>::from_span({params.size()}, params);
    return softmax_rows(tape, forward(tape, p, batch));
  }

 private:
  struct ResolvedLayer {
    LayerKind kind;
    std::size_t in_channels = 0, out_channels = 0, kernel = 0;
    std::size_t in_units = 0, out_units = 0;
    std::size_t weight = 0, bias = 0;  // indices into views_
  };

  std::size_t add_view(std::size_t& offset, Shape shape, bool is_bias) {
    ParamView v;
    v.offset = offset;
    v.len = numel(shape);
    v.shape = std::move(shape);
    v.is_bias = is_bias;
    offset += v.len;
    views_.push_back(std::move(v));
    return views_.size() - 1;
  }

  Tensor<S> view_tensor(Tape<S>& tape, const Tensor<S>& params,
                        std::size_t view_idx) const {
    const ParamView& v = views_[view_idx];
    return reshape(tape, slice(tape, params, v.offset, v.len), v.shape);
  }

  void check_batch(const char* op, const Tensor<S>& batch) const {
    bool ok = batch.ndim() == spec_.input_shape.size() + 1;
    if (ok)
      for (std::size_t i = 0; i < spec_.input_shape.size(); ++i)
        ok = ok && batch.dim(i + 1) == spec_.input_shape[i];
    if (!ok)
      fail(op, "batch shape " + shape_str(batch.shape()) +
                   " does not match input shape " +
                   shape_str(spec_.input_shape));
  }

  NetworkSpec spec_;
  std::vector<ResolvedLayer> layers_;
  std::vector<ParamView> views_;
  std::size_t param_count_ = 0;
};

}  // namespace pnn
