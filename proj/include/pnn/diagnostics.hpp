#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "pnn/agreement.hpp"
#include "pnn/network.hpp"
#include "pnn/optimizer.hpp"
#include "pnn/rng.hpp"
#include "pnn/tensor.hpp"
#include "pnn/trust_intervals.hpp"

namespace pnn {

/// A weight-space perturbation and where it came from.
template <class S>
struct PerturbationVector {
  std::vector<S> delta_mu;
  enum class Provenance { sampled_from_tip, fixed_normal } provenance =
      Provenance::fixed_normal;
  double scale = 0;  // for fixed_normal
};

/// Loss change of one perturbation on one batch: exact value, quadratic
/// approximation, and grid estimates of the calculus bounds.
template <class S>
struct DeltaErrorRecord {
  double exact = 0;
  double quad = 0;
  double lower_bound = 0;
  double upper_bound = 0;
  bool is_id = true;
};

struct Histogram {
  std::vector<double> edges;   // strictly increasing, size = bins + 1
  std::vector<std::size_t> counts;
  enum class Scale { linear, log10 } scale = Scale::linear;
};

namespace detail {

template <class S>
double batch_nll(const Network<S>& net, std::span<const S> params,
                 const Tensor<S>& batch, const std::vector<int>& labels) {
  Tape<S> tape;
  Tensor<S> p = Tensor<S>::from_span({params.size()}, params);
  Tensor<S> logits = net.forward(tape, p, batch);
  auto [loss, probs] = softmax_cross_entropy(tape, logits, labels);
  return static_cast<double>(loss.item());
}

template <class S>
std::vector<S> batch_nll_grad(const Network<S>& net, std::span<const S> params,
                              const Tensor<S>& batch,
                              const std::vector<int>& labels) {
  Tape<S> tape;
  Tensor<S> p = Tensor<S>::from_span({params.size()}, params);
  p.set_requires_grad(true);
  Tensor<S> logits = net.forward(tape, p, batch);
  auto [loss, probs] = softmax_cross_entropy(tape, logits, labels);
  tape.backward(loss);
  return std::vector<S>(p.grad().begin(), p.grad().end());
}

}  // namespace detail

/// loss(mu + delta_mu) - loss(mu) on the given batch.
template <class S>
double delta_error_exact(const Network<S>& net, std::span<const S> mu,
                         std::span<const S> delta_mu, const Tensor<S>& batch,
                         const std::vector<int>& labels) {
  if (mu.size() != delta_mu.size())
    fail("delta_error_exact", "mu/delta length mismatch");
  std::vector<S> shifted(mu.begin(), mu.end());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += delta_mu[i];
  return detail::batch_nll(net, std::span<const S>(shifted), batch, labels) -
         detail::batch_nll(net, mu, batch, labels);
}

/// Second-order estimate g(mu)^T d + d^T H d / 2 with the curvature term
/// evaluated through a central-difference Hessian-vector product. When
/// h <= 0 the step defaults to 1e-3 / ||delta_mu||, i.e. a fixed 1e-3
/// displacement along the perturbation direction.
template <class S>
double delta_error_quadratic(const Network<S>& net, std::span<const S> mu,
                             std::span<const S> delta_mu,
                             const Tensor<S>& batch,
                             const std::vector<int>& labels, S h = S(-1)) {
  if (mu.size() != delta_mu.size())
    fail("delta_error_quadratic", "mu/delta length mismatch");
  double norm2 = 0;
  for (S v : delta_mu) norm2 += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(norm2);
  if (norm == 0) return 0;
  if (h <= S(0)) h = static_cast<S>(1e-3 / norm);

  const std::vector<S> g = detail::batch_nll_grad(net, mu, batch, labels);
  double first = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    first += static_cast<double>(g[i]) * static_cast<double>(delta_mu[i]);

  auto loss_fn = [&](Tape<S>& tape, Tensor<S>& p) {
    Tensor<S> logits = net.forward(tape, p, batch);
    auto [loss, probs] = softmax_cross_entropy(tape, logits, labels);
    return loss;
  };
  const std::vector<S> hv = hessian_vector_product<S>(loss_fn, mu, delta_mu, h);
  double second = 0;
  for (std::size_t i = 0; i < hv.size(); ++i)
    second += static_cast<double>(hv[i]) * static_cast<double>(delta_mu[i]);
  return first + 0.5 * second;
}

/// Grid estimate of the extremal directional-gradient bounds: evaluates
/// g(mu + t*delta_mu)^T delta_mu on a uniform t grid over [0,1] and returns
/// (min, max). The true extrema over continuous t can only be wider.
template <class S>
std::pair<double, double> delta_error_bounds(const Network<S>& net,
                                             std::span<const S> mu,
                                             std::span<const S> delta_mu,
                                             const Tensor<S>& batch,
                                             const std::vector<int>& labels,
                                             std::size_t t_grid_size = 32) {
  if (t_grid_size < 2) fail("delta_error_bounds", "need t_grid_size >= 2");
  if (mu.size() != delta_mu.size())
    fail("delta_error_bounds", "mu/delta length mismatch");
  double lo = 0, hi = 0;
  bool first = true;
  std::vector<S> shifted(mu.size());
  for (std::size_t gi = 0; gi < t_grid_size; ++gi) {
    const double t =
        static_cast<double>(gi) / static_cast<double>(t_grid_size - 1);
    for (std::size_t i = 0; i < shifted.size(); ++i)
      shifted[i] = mu[i] + static_cast<S>(t) * delta_mu[i];
    const std::vector<S> g =
        detail::batch_nll_grad(net, std::span<const S>(shifted), batch, labels);
    double dot = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
      dot += static_cast<double>(g[i]) * static_cast<double>(delta_mu[i]);
    if (first) {
      lo = hi = dot;
      first = false;
    } else {
      lo = std::min(lo, dot);
      hi = std::max(hi, dot);
    }
  }
  return {lo, hi};
}

/// Accuracy of the network after adding scale * N(0,1) noise to every
/// parameter; fresh noise per call from the corruption stream.
template <class S>
double trivial_perturbation_ablation(const Network<S>& net,
                                     std::span<const S> mu, double scale,
                                     const Dataset<S>& data, Rng& rng,
                                     std::size_t batch_size = 256) {
  if (scale < 0) fail("trivial_perturbation_ablation", "scale must be >= 0");
  std::vector<S> perturbed(mu.begin(), mu.end());
  for (S& v : perturbed) v += static_cast<S>(scale * rng.normal());
  return evaluate_accuracy(net, std::span<const S>(perturbed), data,
                           batch_size);
}

/// log10(M) per input for each requested sibling count.
template <class S>
struct SiblingCountStudy {
  std::vector<std::size_t> counts;
  std::vector<std::vector<double>> id_log_m;   // one vector per count
  std::vector<std::vector<double>> ood_log_m;
};

template <class S>
std::vector<double> log_m_scores(const std::vector<Tensor<S>>& prob_matrices,
                                 double eps_stab = 1e-12) {
  const std::size_t n_items = prob_matrices[0].dim(0);
  const std::size_t c = prob_matrices[0].dim(1);
  std::vector<double> out(n_items);
  SiblingSoftmax ss;
  ss.n = prob_matrices.size();
  ss.c = c;
  ss.probs.resize(ss.n * c);
  for (std::size_t i = 0; i < n_items; ++i) {
    for (std::size_t j = 0; j < ss.n; ++j)
      for (std::size_t k = 0; k < c; ++k)
        ss.probs[j * c + k] =
            static_cast<double>(prob_matrices[j].values()[i * c + k]);
    out[i] = std::log10(measure_M(ss, eps_stab).M);
  }
  return out;
}

template <class S>
SiblingCountStudy<S> sibling_count_study(const Network<S>& net,
                                         const TrustIntervalParams<S>& tip,
                                         const Tensor<S>& id_images,
                                         const Tensor<S>& ood_images,
                                         const std::vector<std::size_t>& counts,
                                         std::uint64_t seed,
                                         std::span<const S> mask = {}) {
  for (std::size_t n : counts)
    if (n < 2) fail("sibling_count_study", "sibling counts must be >= 2");
  SiblingCountStudy<S> study;
  study.counts = counts;
  for (std::size_t n : counts) {
    Rng rng = Rng::stream(seed, "sibling_eps");
    auto id_probs = sibling_prob_matrices(net, tip, id_images, n, rng, mask);
    Rng rng2 = Rng::stream(seed, "sibling_eps");
    auto ood_probs = sibling_prob_matrices(net, tip, ood_images, n, rng2, mask);
    study.id_log_m.push_back(log_m_scores(id_probs));
    study.ood_log_m.push_back(log_m_scores(ood_probs));
  }
  return study;
}

/// Equal-width histogram of log10(scores). All bins are right-closed; the
/// first is closed on both ends.
inline Histogram histogram_log_M(const std::vector<double>& scores,
                                 std::size_t bins) {
  if (scores.empty()) fail("histogram_log_M", "no scores");
  if (bins == 0) fail("histogram_log_M", "need at least one bin");
  std::vector<double> logs(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i] > 0))
      fail("histogram_log_M", "scores must be positive for log10");
    logs[i] = std::log10(scores[i]);
  }
  double lo = logs[0], hi = logs[0];
  for (double v : logs) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Histogram h;
  h.scale = Histogram::Scale::log10;
  if (hi == lo) hi = lo + 1.0;  // degenerate range, keep edges increasing
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) /
                          static_cast<double>(bins);
  h.counts.assign(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : logs) {
    std::size_t idx;
    if (v <= lo) {
      idx = 0;
    } else {
      idx = static_cast<std::size_t>(std::ceil((v - lo) / width)) - 1;
      if (idx >= bins) idx = bins - 1;
    }
    ++h.counts[idx];
  }
  return h;
}

}  // namespace pnn
