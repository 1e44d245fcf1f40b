#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pnn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

[[noreturn]] inline void fail(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

template <class S>
struct TensorData {
  Shape shape;
  std::vector<S> values;
  std::vector<S> grad;  // sized like values iff requires_grad
  bool requires_grad = false;
};

/// Dense n-dimensional array, row-major, with an optional gradient slot.
/// The handle shares its storage; use clone() for a deep copy. Read-only
/// sharing across threads is safe.
template <class S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.d_ = std::make_shared<TensorData<S>>();
    t.d_->values.assign(numel(shape), S(0));
    t.d_->shape = std::move(shape);
    return t;
  }

  static Tensor from_values(Shape shape, std::vector<S> values) {
    if (numel(shape) != values.size())
      fail("Tensor", "shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    Tensor t;
    t.d_ = std::make_shared<TensorData<S>>();
    t.d_->shape = std::move(shape);
    t.d_->values = std::move(values);
    return t;
  }

  static Tensor from_span(Shape shape, std::span<const S> values) {
    return from_values(std::move(shape),
                       std::vector<S>(values.begin(), values.end()));
  }

  static Tensor scalar(S v) { return from_values({1}, {v}); }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  std::size_t ndim() const { return d_->shape.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape[i]; }
  std::size_t size() const { return d_->values.size(); }

  std::span<const S> values() const { return d_->values; }
  std::span<S> values_mut() { return d_->values; }

  S item() const {
    if (size() != 1) fail("item", "tensor is not scalar, shape " + shape_str(shape()));
    return d_->values[0];
  }

  bool requires_grad() const { return d_ && d_->requires_grad; }

  Tensor& set_requires_grad(bool b) {
    d_->requires_grad = b;
    if (b)
      d_->grad.assign(d_->values.size(), S(0));
    else
      d_->grad.clear();
    return *this;
  }

  std::span<const S> grad() const { return d_->grad; }
  std::span<S> grad_mut() { return d_->grad; }

  void zero_grad() {
    std::fill(d_->grad.begin(), d_->grad.end(), S(0));
  }

  Tensor clone() const {
    Tensor t = from_values(shape(), std::vector<S>(d_->values));
    return t;
  }

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

 private:
  std::shared_ptr<TensorData<S>> d_;
};

/// Reverse-mode tape. Ops append a backward closure as they execute; a single
/// backward() pass walks them once in reverse order. One tape per thread.
template <class S>
class Tape {
 public:
  void record(std::function<void()> back) { ops_.push_back(std::move(back)); }

  std::size_t num_ops() const { return ops_.size(); }

  void clear() { ops_.clear(); }

  /// Seed d(root)/d(root) = 1 and accumulate grads down to every
  /// requires_grad tensor the root depends on.
  void backward(Tensor<S>& root) {
    if (ops_.empty()) fail("backward", "tape is empty");
    if (root.size() != 1)
      fail("backward", "root is not scalar, shape " + shape_str(root.shape()));
    if (!root.requires_grad())
      fail("backward", "root does not require grad (no recorded path)");
    root.grad_mut()[0] += S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> ops_;
};

namespace detail {

template <class S>
void check_finite(const char* op, const Tensor<S>& t) {
  for (S v : t.values())
    if (!std::isfinite(static_cast<double>(v)))
      throw std::runtime_error(std::string(op) +
                               ": non-finite value in output");
}

template <class S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " +
                 shape_str(b.shape()));
}

template <class S>
bool any_grad(const Tensor<S>& a) {
  return a.requires_grad();
}

template <class S, class... Ts>
bool any_grad(const Tensor<S>& a, const Ts&... rest) {
  return a.requires_grad() || any_grad(rest...);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise primitives
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(Tape<S>& tape, Tensor<S> a, Tensor<S> b) {
  detail::check_same_shape("add", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto ov = out.values_mut();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  detail::check_finite("add", out);
  if (detail::any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      auto og = out.grad();
      if (a.requires_grad()) {
        auto ag = a.grad_mut();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
      }
      if (b.requires_grad()) {
        auto bg = b.grad_mut();
        for (std::size_t i = 0; i < og.size(); ++i) bg[i] += og[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> sub(Tape<S>& tape, Tensor<S> a, Tensor<S> b) {
  detail::check_same_shape("sub", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto ov = out.values_mut();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  detail::check_finite("sub", out);
  if (detail::any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      auto og = out.grad();
      if (a.requires_grad()) {
        auto ag = a.grad_mut();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
      }
      if (b.requires_grad()) {
        auto bg = b.grad_mut();
        for (std::size_t i = 0; i < og.size(); ++i) bg[i] -= og[i];
      }
    });
  }
  return out;
}

/// Elementwise (Hadamard) product.
template <class S>
Tensor<S> mul(Tape<S>& tape, Tensor<S> a, Tensor<S> b) {
  detail::check_same_shape("mul", a, b);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto ov = out.values_mut();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  detail::check_finite("mul", out);
  if (detail::any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out]() mutable {
      auto og = out.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ag = a.grad_mut();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto bg = b.grad_mut();
        for (std::size_t i = 0; i < og.size(); ++i) bg[i] += og[i] * av[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> scalar_mul(Tape<S>& tape, Tensor<S> a, S c) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto ov = out.values_mut();
  auto av = a.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * av[i];
  detail::check_finite("scalar_mul", out);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out, c]() mutable {
      auto og = out.grad();
      auto ag = a.grad_mut();
      for (std::size_t i = 0; i < og.size(); ++i) ag[i] += c * og[i];
    });
  }
  return out;
}

template <class S>
Tensor<S> relu(Tape<S>& tape, Tensor<S> a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto ov = out.values_mut();
  auto av = a.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > S(0) ? av[i] : S(0);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out]() mutable {
      auto og = out.grad();
      auto av = a.values();
      auto ag = a.grad_mut();
      for (std::size_t i = 0; i < og.size(); ++i)
        if (av[i] > S(0)) ag[i] += og[i];
    });
  }
  return out;
}

template <class S>
Tensor<S> softplus(Tape<S>& tape, Tensor<S> a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto ov = out.values_mut();
  auto av = a.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const S x = av[i];
    // log(1+exp(x)), overflow-safe on both tails
    ov[i] = x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  detail::check_finite("softplus", out);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out]() mutable {
      auto og = out.grad();
      auto av = a.values();
      auto ag = a.grad_mut();
      for (std::size_t i = 0; i < og.size(); ++i) {
        const S x = av[i];
        const S sig = x > S(0) ? S(1) / (S(1) + std::exp(-x))
                               : std::exp(x) / (S(1) + std::exp(x));
        ag[i] += og[i] * sig;
      }
    });
  }
  return out;
}

/// Natural log; domain errors surface through the finite check.
template <class S>
Tensor<S> log_elem(Tape<S>& tape, Tensor<S> a) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  auto ov = out.values_mut();
  auto av = a.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(av[i]);
  detail::check_finite("log", out);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out]() mutable {
      auto og = out.grad();
      auto av = a.values();
      auto ag = a.grad_mut();
      for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] / av[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape / reduction primitives
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> reshape(Tape<S>& tape, Tensor<S> a, Shape target) {
  if (numel(target) != a.size())
    fail("reshape", "cannot view " + shape_str(a.shape()) + " as " +
                        shape_str(target));
  Tensor<S> out = Tensor<S>::from_span(std::move(target), a.values());
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out]() mutable {
      auto og = out.grad();
      auto ag = a.grad_mut();
      for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
    });
  }
  return out;
}

/// Contiguous 1-D slice of the flattened tensor.
template <class S>
Tensor<S> slice(Tape<S>& tape, Tensor<S> a, std::size_t offset,
                std::size_t len) {
  if (offset + len > a.size())
    fail("slice", "range [" + std::to_string(offset) + "," +
                      std::to_string(offset + len) + ") exceeds size " +
                      std::to_string(a.size()));
  Tensor<S> out =
      Tensor<S>::from_span({len}, a.values().subspan(offset, len));
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out, offset, len]() mutable {
      auto og = out.grad();
      auto ag = a.grad_mut();
      for (std::size_t i = 0; i < len; ++i) ag[offset + i] += og[i];
    });
  }
  return out;
}

template <class S>
Tensor<S> sum(Tape<S>& tape, Tensor<S> a) {
  S acc = 0;
  for (S v : a.values()) acc += v;
  Tensor<S> out = Tensor<S>::scalar(acc);
  detail::check_finite("sum", out);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out]() mutable {
      const S g = out.grad()[0];
      auto ag = a.grad_mut();
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g;
    });
  }
  return out;
}

template <class S>
Tensor<S> mean(Tape<S>& tape, Tensor<S> a) {
  if (a.size() == 0) fail("mean", "empty tensor");
  S acc = 0;
  for (S v : a.values()) acc += v;
  const S inv = S(1) / static_cast<S>(a.size());
  Tensor<S> out = Tensor<S>::scalar(acc * inv);
  detail::check_finite("mean", out);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([a, out, inv]() mutable {
      const S g = out.grad()[0] * inv;
      auto ag = a.grad_mut();
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// (n x k) . (k x m) -> (n x m)
template <class S>
Tensor<S> matmul(Tape<S>& tape, Tensor<S> a, Tensor<S> b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    fail("matmul", "incompatible shapes " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor<S> out = Tensor<S>::zeros({n, m});
  {
    auto ov = out.values_mut();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const S aip = av[i * k + p];
        const S* brow = &bv[p * m];
        S* orow = &ov[i * m];
        for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
      }
  }
  detail::check_finite("matmul", out);
  if (detail::any_grad(a, b)) {
    out.set_requires_grad(true);
    tape.record([a, b, out, n, k, m]() mutable {
      auto og = out.grad();
      if (a.requires_grad()) {
        auto ag = a.grad_mut();
        auto bv = b.values();
        // dA = dOut . B^T
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            S acc = 0;
            const S* orow = &og[i * m];
            const S* brow = &bv[p * m];
            for (std::size_t j = 0; j < m; ++j) acc += orow[j] * brow[j];
            ag[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto bg = b.grad_mut();
        auto av = a.values();
        // dB = A^T . dOut
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const S aip = av[i * k + p];
            const S* orow = &og[i * m];
            S* brow = &bg[p * m];
            for (std::size_t j = 0; j < m; ++j) brow[j] += aip * orow[j];
          }
      }
    });
  }
  return out;
}

/// (n x m) + (m) broadcast over rows.
template <class S>
Tensor<S> add_row_bias(Tape<S>& tape, Tensor<S> x, Tensor<S> b) {
  if (x.ndim() != 2 || b.ndim() != 1 || x.dim(1) != b.dim(0))
    fail("add_row_bias", "incompatible shapes " + shape_str(x.shape()) +
                             " + " + shape_str(b.shape()));
  const std::size_t n = x.dim(0), m = x.dim(1);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  {
    auto ov = out.values_mut();
    auto xv = x.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ov[i * m + j] = xv[i * m + j] + bv[j];
  }
  detail::check_finite("add_row_bias", out);
  if (detail::any_grad(x, b)) {
    out.set_requires_grad(true);
    tape.record([x, b, out, n, m]() mutable {
      auto og = out.grad();
      if (x.requires_grad()) {
        auto xg = x.grad_mut();
        for (std::size_t i = 0; i < og.size(); ++i) xg[i] += og[i];
      }
      if (b.requires_grad()) {
        auto bg = b.grad_mut();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) bg[j] += og[i * m + j];
      }
    });
  }
  return out;
}

/// (n,c,h,w) + (c) broadcast over batch and space.
template <class S>
Tensor<S> add_channel_bias(Tape<S>& tape, Tensor<S> x, Tensor<S> b) {
  if (x.ndim() != 4 || b.ndim() != 1 || x.dim(1) != b.dim(0))
    fail("add_channel_bias", "incompatible shapes " + shape_str(x.shape()) +
                                 " + " + shape_str(b.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  {
    auto ov = out.values_mut();
    auto xv = x.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const S bias = bv[ch];
        const std::size_t base = (i * c + ch) * hw;
        for (std::size_t p = 0; p < hw; ++p) ov[base + p] = xv[base + p] + bias;
      }
  }
  detail::check_finite("add_channel_bias", out);
  if (detail::any_grad(x, b)) {
    out.set_requires_grad(true);
    tape.record([x, b, out, n, c, hw]() mutable {
      auto og = out.grad();
      if (x.requires_grad()) {
        auto xg = x.grad_mut();
        for (std::size_t i = 0; i < og.size(); ++i) xg[i] += og[i];
      }
      if (b.requires_grad()) {
        auto bg = b.grad_mut();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (i * c + ch) * hw;
            S acc = 0;
            for (std::size_t p = 0; p < hw; ++p) acc += og[base + p];
            bg[ch] += acc;
          }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution / pooling
// ---------------------------------------------------------------------------

enum class Padding { valid, same };

/// 2-D convolution (really cross-correlation, as usual for CNNs).
/// x: (n, ci, h, w) NCHW; kernel: (co, ci, kh, kw) OIHW; stride 1.
/// Padding::same requires an odd kernel and preserves spatial size.
template <class S>
Tensor<S> conv2d(Tape<S>& tape, Tensor<S> x, Tensor<S> kernel,
                 Padding padding = Padding::valid) {
  if (x.ndim() != 4 || kernel.ndim() != 4)
    fail("conv2d", "expected NCHW input and OIHW kernel, got " +
                       shape_str(x.shape()) + " and " +
                       shape_str(kernel.shape()));
  if (x.dim(1) != kernel.dim(1))
    fail("conv2d", "channel mismatch " + shape_str(x.shape()) + " vs " +
                       shape_str(kernel.shape()));
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  std::size_t ph = 0, pw = 0, oh, ow;
  if (padding == Padding::same) {
    if (kh % 2 == 0 || kw % 2 == 0)
      fail("conv2d", "same padding requires odd kernel");
    ph = (kh - 1) / 2;
    pw = (kw - 1) / 2;
    oh = h;
    ow = w;
  } else {
    if (kh > h || kw > w)
      fail("conv2d", "kernel larger than input for valid padding");
    oh = h - kh + 1;
    ow = w - kw + 1;
  }

  Tensor<S> out = Tensor<S>::zeros({n, co, oh, ow});
  {
    auto ov = out.values_mut();
    auto xv = x.values();
    auto kv = kernel.values();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < co; ++o) {
        S* oplane = &ov[(b * co + o) * oh * ow];
        for (std::size_t i = 0; i < ci; ++i) {
          const S* xplane = &xv[(b * ci + i) * h * w];
          const S* kplane = &kv[(o * ci + i) * kh * kw];
          for (std::size_t r = 0; r < kh; ++r)
            for (std::size_t c = 0; c < kw; ++c) {
              const S kval = kplane[r * kw + c];
              if (kval == S(0)) continue;
              // output (y, z) reads input (y + r - ph, z + c - pw)
              const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(r) -
                                        static_cast<std::ptrdiff_t>(ph);
              const std::ptrdiff_t dz = static_cast<std::ptrdiff_t>(c) -
                                        static_cast<std::ptrdiff_t>(pw);
              const std::size_t y0 = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
              const std::size_t y1 =
                  std::min<std::size_t>(oh, static_cast<std::size_t>(
                                                static_cast<std::ptrdiff_t>(h) - dy));
              const std::size_t z0 = dz < 0 ? static_cast<std::size_t>(-dz) : 0;
              const std::size_t z1 =
                  std::min<std::size_t>(ow, static_cast<std::size_t>(
                                                static_cast<std::ptrdiff_t>(w) - dz));
              for (std::size_t y = y0; y < y1; ++y) {
                const S* xrow = &xplane[(y + dy) * w + dz];
                S* orow = &oplane[y * ow];
                for (std::size_t z = z0; z < z1; ++z)
                  orow[z] += kval * xrow[z];
              }
            }
        }
      }
  }
  detail::check_finite("conv2d", out);
  if (detail::any_grad(x, kernel)) {
    out.set_requires_grad(true);
    tape.record([x, kernel, out, n, ci, h, w, co, kh, kw, ph, pw, oh,
                 ow]() mutable {
      auto og = out.grad();
      auto xv = x.values();
      auto kv = kernel.values();
      if (x.requires_grad()) {
        auto xg = x.grad_mut();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t o = 0; o < co; ++o) {
            const S* oplane = &og[(b * co + o) * oh * ow];
            for (std::size_t i = 0; i < ci; ++i) {
              S* xplane = &xg[(b * ci + i) * h * w];
              const S* kplane = &kv[(o * ci + i) * kh * kw];
              for (std::size_t r = 0; r < kh; ++r)
                for (std::size_t c = 0; c < kw; ++c) {
                  const S kval = kplane[r * kw + c];
                  if (kval == S(0)) continue;
                  const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(r) -
                                            static_cast<std::ptrdiff_t>(ph);
                  const std::ptrdiff_t dz = static_cast<std::ptrdiff_t>(c) -
                                            static_cast<std::ptrdiff_t>(pw);
                  const std::size_t y0 =
                      dy < 0 ? static_cast<std::size_t>(-dy) : 0;
                  const std::size_t y1 = std::min<std::size_t>(
                      oh, static_cast<std::size_t>(
                              static_cast<std::ptrdiff_t>(h) - dy));
                  const std::size_t z0 =
                      dz < 0 ? static_cast<std::size_t>(-dz) : 0;
                  const std::size_t z1 = std::min<std::size_t>(
                      ow, static_cast<std::size_t>(
                              static_cast<std::ptrdiff_t>(w) - dz));
                  for (std::size_t y = y0; y < y1; ++y) {
                    S* xrow = &xplane[(y + dy) * w + dz];
                    const S* orow = &oplane[y * ow];
                    for (std::size_t z = z0; z < z1; ++z)
                      xrow[z] += kval * orow[z];
                  }
                }
            }
          }
      }
      if (kernel.requires_grad()) {
        auto kg = kernel.grad_mut();
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t o = 0; o < co; ++o) {
            const S* oplane = &og[(b * co + o) * oh * ow];
            for (std::size_t i = 0; i < ci; ++i) {
              const S* xplane = &xv[(b * ci + i) * h * w];
              S* kplane = &kg[(o * ci + i) * kh * kw];
              for (std::size_t r = 0; r < kh; ++r)
                for (std::size_t c = 0; c < kw; ++c) {
                  const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(r) -
                                            static_cast<std::ptrdiff_t>(ph);
                  const std::ptrdiff_t dz = static_cast<std::ptrdiff_t>(c) -
                                            static_cast<std::ptrdiff_t>(pw);
                  const std::size_t y0 =
                      dy < 0 ? static_cast<std::size_t>(-dy) : 0;
                  const std::size_t y1 = std::min<std::size_t>(
                      oh, static_cast<std::size_t>(
                              static_cast<std::ptrdiff_t>(h) - dy));
                  const std::size_t z0 =
                      dz < 0 ? static_cast<std::size_t>(-dz) : 0;
                  const std::size_t z1 = std::min<std::size_t>(
                      ow, static_cast<std::size_t>(
                              static_cast<std::ptrdiff_t>(w) - dz));
                  S acc = 0;
                  for (std::size_t y = y0; y < y1; ++y) {
                    const S* xrow = &xplane[(y + dy) * w + dz];
                    const S* orow = &oplane[y * ow];
                    for (std::size_t z = z0; z < z1; ++z)
                      acc += xrow[z] * orow[z];
                  }
                  kplane[r * kw + c] += acc;
                }
            }
          }
      }
    });
  }
  return out;
}

/// 2x2 max pooling with stride 2. Spatial dims must be even.
template <class S>
Tensor<S> maxpool2d(Tape<S>& tape, Tensor<S> x) {
  if (x.ndim() != 4) fail("maxpool2d", "expected NCHW, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0)
    fail("maxpool2d", "spatial dims must be even, got " + shape_str(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor<S> out = Tensor<S>::zeros({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  {
    auto ov = out.values_mut();
    auto xv = x.values();
    std::size_t oi = 0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * h * w;
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t z = 0; z < ow; ++z, ++oi) {
            const std::size_t i00 = base + (2 * y) * w + 2 * z;
            std::size_t best = i00;
            S bv = xv[i00];
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dz = 0; dz < 2; ++dz) {
                const std::size_t idx = base + (2 * y + dy) * w + (2 * z + dz);
                if (xv[idx] > bv) {
                  bv = xv[idx];
                  best = idx;
                }
              }
            ov[oi] = bv;
            (*argmax)[oi] = static_cast<std::uint32_t>(best);
          }
      }
  }
  if (x.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([x, out, argmax]() mutable {
      auto og = out.grad();
      auto xg = x.grad_mut();
      for (std::size_t i = 0; i < og.size(); ++i) xg[(*argmax)[i]] += og[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax / cross-entropy
// ---------------------------------------------------------------------------

/// Row-wise softmax of an (n x c) matrix, stabilized by max subtraction.
template <class S>
Tensor<S> softmax_rows(Tape<S>& tape, Tensor<S> logits) {
  if (logits.ndim() != 2)
    fail("softmax", "expected (n,c) matrix, got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor<S> out = Tensor<S>::zeros(logits.shape());
  {
    auto ov = out.values_mut();
    auto lv = logits.values();
    for (std::size_t i = 0; i < n; ++i) {
      const S* row = &lv[i * c];
      S m = row[0];
      for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
      S z = 0;
      for (std::size_t j = 0; j < c; ++j) {
        ov[i * c + j] = std::exp(row[j] - m);
        z += ov[i * c + j];
      }
      const S inv = S(1) / z;
      for (std::size_t j = 0; j < c; ++j) ov[i * c + j] *= inv;
    }
  }
  detail::check_finite("softmax", out);
  if (logits.requires_grad()) {
    out.set_requires_grad(true);
    tape.record([logits, out, n, c]() mutable {
      auto og = out.grad();
      auto pv = out.values();
      auto lg = logits.grad_mut();
      for (std::size_t i = 0; i < n; ++i) {
        const S* p = &pv[i * c];
        const S* g = &og[i * c];
        S dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += g[j] * p[j];
        for (std::size_t j = 0; j < c; ++j) lg[i * c + j] += p[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

/// Mean negative log-likelihood over the batch plus the softmax matrix.
/// Both outputs live on the tape; gradients flow back to the logits from
/// either one.
template <class S>
std::pair<Tensor<S>, Tensor<S>> softmax_cross_entropy(
    Tape<S>& tape, Tensor<S> logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    fail("softmax_cross_entropy",
         "expected (n,c) logits, got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (c < 2) fail("softmax_cross_entropy", "need at least 2 classes");
  if (labels.size() != n)
    fail("softmax_cross_entropy", "batch size " + std::to_string(n) +
                                      " vs " + std::to_string(labels.size()) +
                                      " labels");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      fail("softmax_cross_entropy", "label " + std::to_string(y) +
                                        " out of range [0," +
                                        std::to_string(c) + ")");

  Tensor<S> probs = Tensor<S>::zeros(logits.shape());
  S loss_acc = 0;
  {
    auto pv = probs.values_mut();
    auto lv = logits.values();
    for (std::size_t i = 0; i < n; ++i) {
      const S* row = &lv[i * c];
      S m = row[0];
      for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
      S z = 0;
      for (std::size_t j = 0; j < c; ++j) {
        pv[i * c + j] = std::exp(row[j] - m);
        z += pv[i * c + j];
      }
      const S inv = S(1) / z;
      for (std::size_t j = 0; j < c; ++j) pv[i * c + j] *= inv;
      // -log p[y] computed from the stabilized pieces, not from p itself
      loss_acc += std::log(z) - (row[labels[i]] - m);
    }
  }
  Tensor<S> loss = Tensor<S>::scalar(loss_acc / static_cast<S>(n));
  detail::check_finite("softmax_cross_entropy", loss);
  detail::check_finite("softmax_cross_entropy", probs);

  if (logits.requires_grad()) {
    loss.set_requires_grad(true);
    probs.set_requires_grad(true);
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    tape.record([logits, loss, probs, labels_copy, n, c]() mutable {
      const S gl = loss.grad()[0] / static_cast<S>(n);
      auto pg = probs.grad();
      auto pv = probs.values();
      auto lg = logits.grad_mut();
      for (std::size_t i = 0; i < n; ++i) {
        const S* p = &pv[i * c];
        const S* g = &pg[i * c];
        S dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += g[j] * p[j];
        for (std::size_t j = 0; j < c; ++j) {
          S d = gl * p[j] + p[j] * (g[j] - dot);
          if (static_cast<std::size_t>((*labels_copy)[i]) == j) d -= gl;
          lg[i * c + j] += d;
        }
      }
    });
  }
  return {loss, probs};
}

// ---------------------------------------------------------------------------
// Generic primitive dispatch
// ---------------------------------------------------------------------------

enum class OpKind {
  add,
  sub,
  mul,
  scalar_mul,
  matmul,
  conv2d,
  maxpool2d,
  relu,
  reshape,
  sum,
  mean,
};

template <class S>
struct OpAttrs {
  S scalar = S(1);           // scalar_mul
  Shape target_shape;        // reshape
  Padding padding = Padding::valid;  // conv2d
};

template <class S>
Tensor<S> apply_primitive(Tape<S>& tape, OpKind kind,
                          std::span<const Tensor<S>> inputs,
                          const OpAttrs<S>& attrs = {}) {
  auto want = [&](std::size_t k) {
    if (inputs.size() != k)
      fail("apply_primitive", "expected " + std::to_string(k) + " inputs, got " +
                                  std::to_string(inputs.size()));
  };
  switch (kind) {
    case OpKind::add: want(2); return add(tape, inputs[0], inputs[1]);
    case OpKind::sub: want(2); return sub(tape, inputs[0], inputs[1]);
    case OpKind::mul: want(2); return mul(tape, inputs[0], inputs[1]);
    case OpKind::scalar_mul: want(1); return scalar_mul(tape, inputs[0], attrs.scalar);
    case OpKind::matmul: want(2); return matmul(tape, inputs[0], inputs[1]);
    case OpKind::conv2d: want(2); return conv2d(tape, inputs[0], inputs[1], attrs.padding);
    case OpKind::maxpool2d: want(1); return maxpool2d(tape, inputs[0]);
    case OpKind::relu: want(1); return relu(tape, inputs[0]);
    case OpKind::reshape: want(1); return reshape(tape, inputs[0], attrs.target_shape);
    case OpKind::sum: want(1); return sum(tape, inputs[0]);
    case OpKind::mean: want(1); return mean(tape, inputs[0]);
  }
  fail("apply_primitive", "unknown op kind");
}

// ---------------------------------------------------------------------------
// Second-order helper
// ---------------------------------------------------------------------------

/// Hessian-vector product by central differences of the gradient:
///   H.v ~= (g(p + h v) - g(p - h v)) / (2h)
/// `loss_fn` builds a scalar loss on the given tape from a flat parameter
/// tensor that already requires grad.
template <class S>
std::vector<S> hessian_vector_product(
    const std::function<Tensor<S>(Tape<S>&, Tensor<S>&)>& loss_fn,
    std::span<const S> params, std::span<const S> v, S h) {
  if (h <= S(0)) fail("hessian_vector_product", "step h must be positive");
  if (params.size() != v.size())
    fail("hessian_vector_product", "params/v length mismatch");
  for (S x : v)
    if (!std::isfinite(static_cast<double>(x)))
      fail("hessian_vector_product", "non-finite direction");

  auto grad_at = [&](S sign) {
    std::vector<S> shifted(params.begin(), params.end());
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += sign * h * v[i];
    Tape<S> tape;
    const std::size_t n = shifted.size();
    Tensor<S> p = Tensor<S>::from_values({n}, std::move(shifted));
    p.set_requires_grad(true);
    Tensor<S> loss = loss_fn(tape, p);
    tape.backward(loss);
    return std::vector<S>(p.grad().begin(), p.grad().end());
  };

  std::vector<S> gp = grad_at(S(1));
  std::vector<S> gm = grad_at(S(-1));
  std::vector<S> hv(params.size());
  const S inv = S(1) / (S(2) * h);
  for (std::size_t i = 0; i < hv.size(); ++i) {
    hv[i] = (gp[i] - gm[i]) * inv;
    if (!std::isfinite(static_cast<double>(hv[i])))
      throw std::runtime_error("hessian_vector_product: non-finite result");
  }
  return hv;
}

}  // namespace pnn
