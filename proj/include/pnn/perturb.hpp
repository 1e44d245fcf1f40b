#pragma once

#include <cmath>
#include <vector>

#include "pnn/network.hpp"
#include "pnn/rng.hpp"
#include "pnn/tensor.hpp"

namespace pnn {

struct AttackConfig {
  double epsilon = 0.1;  // perturbation size in normalized pixel units
  double clip_lo = 0.0;
  double clip_hi = 1.0;

  void validate() const {
    if (epsilon < 0) fail("AttackConfig", "epsilon must be >= 0");
    if (clip_lo >= clip_hi) fail("AttackConfig", "empty clip range");
  }
};

enum class CorruptionKind { gaussian, speckle };

struct CorruptionConfig {
  CorruptionKind kind = CorruptionKind::gaussian;
  double severity = 0.1;  // noise scale
  double clip_lo = 0.0;
  double clip_hi = 1.0;

  void validate() const {
    if (severity < 0) fail("CorruptionConfig", "severity must be >= 0");
    if (clip_lo >= clip_hi) fail("CorruptionConfig", "empty clip range");
  }
};

namespace detail {

template <class S>
S sign_of(S v) {
  if (v > S(0)) return S(1);
  if (v < S(0)) return S(-1);
  return S(0);
}

/// Per-input gradient of the mean cross-entropy w.r.t. the input batch.
/// Rows are independent, so the batched gradient has each row proportional
/// to its own per-sample gradient and sign() is unaffected by the 1/n.
template <class S>
std::vector<S> input_gradient(const Network<S>& net, std::span<const S> params,
                              const Tensor<S>& x, const std::vector<int>& y,
                              S temperature = S(1)) {
  Tape<S> tape;
  Tensor<S> p = Tensor<S>::from_span({params.size()}, params);
  Tensor<S> xt = x.clone();
  xt.set_requires_grad(true);
  Tensor<S> logits = net.forward(tape, p, xt);
  if (temperature != S(1))
    logits = scalar_mul(tape, logits, S(1) / temperature);
  auto [loss, probs] = softmax_cross_entropy(tape, logits, y);
  tape.backward(loss);
  return std::vector<S>(xt.grad().begin(), xt.grad().end());
}

}  // namespace detail

/// Fast gradient sign attack:
///   x_adv = clip(x + eps * sign(grad_x L(x, y)), lo, hi)
template <class S>
Tensor<S> fgsm(const Network<S>& net, std::span<const S> params,
               const Tensor<S>& x, const std::vector<int>& y,
               const AttackConfig& cfg) {
  cfg.validate();
  const std::vector<S> g = detail::input_gradient(net, params, x, y);
  Tensor<S> out = x.clone();
  auto ov = out.values_mut();
  const S eps = static_cast<S>(cfg.epsilon);
  const S lo = static_cast<S>(cfg.clip_lo), hi = static_cast<S>(cfg.clip_hi);
  for (std::size_t i = 0; i < ov.size(); ++i) {
    ov[i] = std::clamp(static_cast<S>(ov[i] + eps * detail::sign_of(g[i])), lo,
                       hi);
    if (!std::isfinite(static_cast<double>(ov[i])))
      throw std::runtime_error("fgsm: non-finite output");
  }
  return out;
}

/// Additive Gaussian or multiplicative speckle noise, clipped to range.
template <class S>
Tensor<S> corrupt(const Tensor<S>& x, const CorruptionConfig& cfg, Rng& rng) {
  cfg.validate();
  Tensor<S> out = x.clone();
  auto ov = out.values_mut();
  const S lo = static_cast<S>(cfg.clip_lo), hi = static_cast<S>(cfg.clip_hi);
  const S sev = static_cast<S>(cfg.severity);
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const S eps = static_cast<S>(rng.normal());
    const S noisy = cfg.kind == CorruptionKind::gaussian
                        ? ov[i] + sev * eps
                        : ov[i] + ov[i] * sev * eps;
    ov[i] = std::clamp(noisy, lo, hi);
  }
  return out;
}

/// Input-preprocessing confidence score: nudge each input along the
/// direction that raises its top temperature-scaled softmax score, then
/// return that score at the nudged input. Reduces to the plain max-softmax
/// confidence at input_eps = 0, T = 1.
template <class S>
std::vector<double> odin_scores(const Network<S>& net,
                                std::span<const S> params, const Tensor<S>& x,
                                double temperature, double input_eps) {
  if (temperature <= 0) fail("odin_scores", "temperature must be positive");
  if (input_eps < 0) fail("odin_scores", "input_eps must be >= 0");
  const std::size_t n = x.dim(0), c = net.num_classes();
  const S t = static_cast<S>(temperature);

  // predicted class at the unperturbed input
  Tensor<S> logits0 = net.forward_values(params, x);
  std::vector<int> yhat(n);
  auto lv = logits0.values();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (lv[i * c + j] > lv[i * c + best]) best = j;
    yhat[i] = static_cast<int>(best);
  }

  Tensor<S> probe = x;
  if (input_eps > 0) {
    // L = -log softmax(logits/T)[yhat]; step along -grad to raise the score
    const std::vector<S> g =
        detail::input_gradient(net, params, x, yhat, t);
    probe = x.clone();
    auto pv = probe.values_mut();
    const S eps = static_cast<S>(input_eps);
    for (std::size_t i = 0; i < pv.size(); ++i)
      pv[i] += eps * detail::sign_of(static_cast<S>(-g[i]));
  }

  Tape<S> tape;
  Tensor<S> p = Tensor<S>::from_span({params.size()}, params);
  Tensor<S> logits = net.forward(tape, p, probe);
  Tensor<S> scaled = scalar_mul(tape, logits, S(1) / t);
  Tensor<S> probs = softmax_rows(tape, scaled);
  std::vector<double> out(n);
  auto prv = probs.values();
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0;
    for (std::size_t j = 0; j < c; ++j)
      best = std::max(best, static_cast<double>(prv[i * c + j]));
    out[i] = best;
  }
  return out;
}

}  // namespace pnn
