#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "pnn/data_io.hpp"
#include "pnn/network.hpp"
#include "pnn/optimizer.hpp"
#include "pnn/rng.hpp"
#include "pnn/tensor.hpp"

namespace pnn {

/// Per-weight trust interval [mu - 3*sigma, mu + 3*sigma] with
/// sigma = softplus(rho). mu is the frozen point estimate; only rho is
/// trainable. Sampling a sibling draws w = mu + sigma o eps, eps ~ N(0,1).
template <class S>
struct TrustIntervalParams {
  std::vector<S> mu;
  std::vector<S> rho;

  std::vector<S> sigma() const {
    std::vector<S> s(rho.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const S x = rho[i];
      s[i] = x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }
    return s;
  }

  std::vector<S> gamma() const {
    std::vector<S> g = sigma();
    for (S& v : g) v *= S(3);
    return g;
  }
};

struct PnnConfig {
  double pi1 = 1.0;                 // weight of the disagreement term
  double pi2 = 1e-7;                // weight of the -log(sigma) regularizer
  std::size_t n_train_samples = 2;  // siblings per cost evaluation
  double lr = 0.01;
  std::size_t batch_size = 256;
  std::size_t max_iterations = 1708;
  std::uint64_t seed = 0;
  std::size_t stop_window = 50;   // moving-average window for the stop rule
  double stop_tol = 1e-4;         // relative plateau tolerance
  bool perturb_biases = true;
  // Fresh noise per contiguous batch chunk: raises the effective sample
  // count of the cost gradient by the group count at identical flops.
  std::size_t noise_groups = 16;

  void validate() const {
    if (pi1 < 0 || pi2 < 0) fail("PnnConfig", "pi1 and pi2 must be >= 0");
    if (n_train_samples < 2) fail("PnnConfig", "need n_train_samples >= 2");
    if (lr <= 0 || batch_size == 0 || stop_window == 0 || noise_groups == 0)
      fail("PnnConfig", "lr, batch_size, stop_window, noise_groups must be positive");
  }
};

template <class S>
struct CostBreakdown {
  S nll{};
  S s2{};
  S reg{};    // sum of -log(sigma_i) over perturbed coordinates
  S total{};  // nll + pi1*s2 + pi2*reg
};

/// rho_i ~ U(0,1) iid, so every starting sigma lies in
/// (softplus(0), softplus(1)) = (0.6931, 1.3133). mu is copied verbatim.
template <class S>
TrustIntervalParams<S> init_pnn(const ParamStore<S>& trained,
                                std::uint64_t seed) {
  for (S v : trained.flat)
    if (!std::isfinite(static_cast<double>(v)))
      fail("init_pnn", "non-finite trained parameters");
  TrustIntervalParams<S> tip;
  tip.mu = trained.flat;
  tip.rho.resize(trained.flat.size());
  Rng rng = Rng::stream(seed, "weight_init");
  for (S& r : tip.rho) r = static_cast<S>(rng.uniform());
  return tip;
}

/// One sampled sibling weight vector, w = mu + softplus(rho) o eps.
/// `mask`, when non-empty, zeroes the perturbation where mask == 0 (used to
/// keep biases at their point estimates). Noise is drawn for every
/// coordinate regardless, so the stream position does not depend on the
/// mask.
template <class S>
std::vector<S> sample_sibling(const TrustIntervalParams<S>& tip, Rng& rng,
                              std::span<const S> mask = {}) {
  std::vector<S> w(tip.mu.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const S x = tip.rho[i];
    const S sig =
        x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    S eps = static_cast<S>(rng.normal());
    if (!mask.empty()) eps *= mask[i];
    w[i] = tip.mu[i] + sig * eps;
  }
  return w;
}

/// Mean over the batch of the summed per-class population variance of the
/// softmax outputs across siblings. Zero when all siblings agree, and zero
/// by convention for a single sibling.
template <class S>
S disagreement_s2(std::span<const Tensor<S>> prob_stack) {
  if (prob_stack.empty()) fail("disagreement_s2", "empty stack");
  const std::size_t n = prob_stack.size();
  const Shape& shape = prob_stack[0].shape();
  for (const auto& t : prob_stack)
    if (t.shape() != shape) fail("disagreement_s2", "ragged stack");
  const std::size_t batch = shape[0], c = shape[1];
  double total = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t k = 0; k < c; ++k) {
      double m = 0, m2 = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p = static_cast<double>(prob_stack[j].values()[b * c + k]);
        m += p;
        m2 += p * p;
      }
      m /= static_cast<double>(n);
      m2 /= static_cast<double>(n);
      total += std::max(0.0, m2 - m * m);
    }
  return static_cast<S>(total / static_cast<double>(batch));
}

/// The interval-size cost on one batch:
///   total = E[nll over siblings] + pi1 * s2 + pi2 * sum_i(-log sigma_i)
/// eps_draws holds n_train_samples noise vectors per batch chunk, laid out
/// chunk-major: draws[g * n + j] is sibling j's noise over chunk g. A single
/// set of draws (the common case in tests) covers the whole batch. The value
/// is deterministic given the draws, so the gradient with respect to rho can
/// be checked by finite differences. mu never receives gradient. If grad_rho
/// is non-null it is filled with d(total)/d(rho).
template <class S>
CostBreakdown<S> pnn_cost(const Network<S>& net,
                          const TrustIntervalParams<S>& tip,
                          const Tensor<S>& batch,
                          const std::vector<int>& labels, const PnnConfig& cfg,
                          const std::vector<std::vector<S>>& eps_draws,
                          std::vector<S>* grad_rho = nullptr) {
  if (eps_draws.empty()) fail("pnn_cost", "need at least one noise draw");
  const std::size_t n_params = net.param_count();
  if (tip.mu.size() != n_params || tip.rho.size() != n_params)
    fail("pnn_cost", "interval parameters do not match network");
  for (const auto& e : eps_draws)
    if (e.size() != n_params) fail("pnn_cost", "noise draw length mismatch");
  const std::size_t n = cfg.n_train_samples;
  if (eps_draws.size() % n != 0)
    fail("pnn_cost", "draw count must be a multiple of n_train_samples");
  const std::size_t batch_n = batch.dim(0);
  const std::size_t groups = std::min(eps_draws.size() / n, batch_n);
  const std::size_t item = batch.size() / batch_n;

  std::vector<S> mask;
  if (!cfg.perturb_biases) mask = net.weight_mask();

  Tape<S> tape;
  Tensor<S> rho = Tensor<S>::from_span({n_params}, tip.rho);
  rho.set_requires_grad(grad_rho != nullptr);
  Tensor<S> mu = Tensor<S>::from_span({n_params}, tip.mu);
  Tensor<S> sigma = softplus(tape, rho);

  Tensor<S> nll, s2_raw;  // s2_raw: summed variance before the batch mean
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t start = g * batch_n / groups;
    const std::size_t end = (g + 1) * batch_n / groups;
    const std::size_t count = end - start;
    Shape chunk_shape = batch.shape();
    chunk_shape[0] = count;
    Tensor<S> chunk = Tensor<S>::from_span(
        std::move(chunk_shape),
        batch.values().subspan(start * item, count * item));
    const std::vector<int> chunk_labels(labels.begin() + static_cast<std::ptrdiff_t>(start),
                                        labels.begin() + static_cast<std::ptrdiff_t>(end));

    Tensor<S> alpha_sum, sq_sum;
    for (std::size_t j = 0; j < n; ++j) {
      const std::vector<S>& draw = eps_draws[g * n + j];
      Tensor<S> eps;
      if (mask.empty()) {
        eps = Tensor<S>::from_span({n_params}, draw);
      } else {
        std::vector<S> masked(draw);
        for (std::size_t i = 0; i < masked.size(); ++i) masked[i] *= mask[i];
        eps = Tensor<S>::from_values({n_params}, std::move(masked));
      }
      Tensor<S> w = add(tape, mu, mul(tape, sigma, eps));
      Tensor<S> logits = net.forward(tape, w, chunk);
      auto [loss_jg, probs_jg] = softmax_cross_entropy(tape, logits, chunk_labels);
      // chunk CE means recombine into the batch mean by chunk weight
      Tensor<S> weighted = scalar_mul(
          tape, loss_jg,
          static_cast<S>(count) / static_cast<S>(n * batch_n));
      nll = nll.defined() ? add(tape, nll, weighted) : weighted;
      Tensor<S> sq_jg = mul(tape, probs_jg, probs_jg);
      alpha_sum = j == 0 ? probs_jg : add(tape, alpha_sum, probs_jg);
      sq_sum = j == 0 ? sq_jg : add(tape, sq_sum, sq_jg);
    }
    const S inv_n = S(1) / static_cast<S>(n);
    Tensor<S> alpha = scalar_mul(tape, alpha_sum, inv_n);
    Tensor<S> second_moment = scalar_mul(tape, sq_sum, inv_n);
    Tensor<S> variance = sub(tape, second_moment, mul(tape, alpha, alpha));
    Tensor<S> var_sum = sum(tape, variance);
    s2_raw = s2_raw.defined() ? add(tape, s2_raw, var_sum) : var_sum;
  }
  Tensor<S> s2 = scalar_mul(tape, s2_raw, S(1) / static_cast<S>(batch_n));

  Tensor<S> log_sigma = log_elem(tape, sigma);
  if (!mask.empty()) {
    Tensor<S> m = Tensor<S>::from_span({n_params}, mask);
    log_sigma = mul(tape, log_sigma, m);
  }
  Tensor<S> reg = scalar_mul(tape, sum(tape, log_sigma), S(-1));

  Tensor<S> total =
      add(tape, nll,
          add(tape, scalar_mul(tape, s2, static_cast<S>(cfg.pi1)),
              scalar_mul(tape, reg, static_cast<S>(cfg.pi2))));

  CostBreakdown<S> parts;
  parts.nll = nll.item();
  parts.s2 = s2.item();
  parts.reg = reg.item();
  parts.total = total.item();

  if (grad_rho) {
    tape.backward(total);
    grad_rho->assign(rho.grad().begin(), rho.grad().end());
  }
  return parts;
}

template <class S>
struct PnnFitTrace {
  std::vector<CostBreakdown<S>> per_iteration;
  std::vector<std::pair<std::size_t, double>> median_sigma;  // (iter, median)
  std::size_t iterations = 0;
  std::string stop_reason;
};

namespace detail {

template <class S>
double median_sigma_of(const TrustIntervalParams<S>& tip) {
  std::vector<S> s = tip.sigma();
  auto mid = s.begin() + static_cast<std::ptrdiff_t>(s.size() / 2);
  std::nth_element(s.begin(), mid, s.end());
  return static_cast<double>(*mid);
}

}  // namespace detail

/// Optimize rho with RMSprop while mu stays frozen. Stops at
/// max_iterations, or at a window boundary once the moving average of the
/// NLL increases, or once pi1*s2 stops decreasing (relative change below
/// stop_tol).
template <class S>
PnnFitTrace<S> fit_pnn(const Network<S>& net, TrustIntervalParams<S>& tip,
                       const Dataset<S>& id_data, const PnnConfig& cfg) {
  cfg.validate();
  if (id_data.size() == 0) fail("fit_pnn", "empty dataset");
  if (id_data.labels.size() != id_data.size())
    fail("fit_pnn", "dataset has no labels");

  PnnFitTrace<S> trace;
  trace.median_sigma.emplace_back(0, detail::median_sigma_of(tip));
  if (cfg.max_iterations == 0) {
    trace.stop_reason = "max_iterations";
    return trace;
  }

  Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle");
  Rng eps_rng = Rng::stream(cfg.seed, "sibling_eps");
  RmspropState<S> opt(tip.rho.size(), static_cast<S>(cfg.lr));

  std::vector<std::size_t> order(id_data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  const std::size_t w = cfg.stop_window;
  std::vector<double> nll_hist, s2_hist;
  double best_nll = std::numeric_limits<double>::infinity();
  double best_s2 = std::numeric_limits<double>::infinity();
  int windows_without_progress = 0;
  std::vector<S> grad;

  for (std::size_t iter = 0; iter < cfg.max_iterations; ++iter) {
    if (cursor + cfg.batch_size > order.size()) {
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
      cursor = 0;
    }
    const std::size_t take = std::min(cfg.batch_size, order.size() - cursor);
    std::vector<std::size_t> idx(
        order.begin() + static_cast<std::ptrdiff_t>(cursor),
        order.begin() + static_cast<std::ptrdiff_t>(cursor + take));
    cursor += take;
    auto [batch, labels] = id_data.gather(idx);

    // One draw set per batch chunk (chunk-major layout), antithetic within
    // each chunk's sibling pair: both marginals stay N(0,1) while the
    // odd-order gradient noise cancels pairwise. Together with the per-chunk
    // refresh this is what makes the interval sizes trainable at two
    // siblings per step.
    const std::size_t groups = std::min<std::size_t>(cfg.noise_groups, take);
    std::vector<std::vector<S>> eps(cfg.n_train_samples * groups);
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t j = 0; j < cfg.n_train_samples; ++j) {
        auto& e = eps[g * cfg.n_train_samples + j];
        e.resize(tip.rho.size());
        if (j % 2 == 1) {
          const auto& prev = eps[g * cfg.n_train_samples + j - 1];
          for (std::size_t i = 0; i < e.size(); ++i) e[i] = -prev[i];
        } else {
          for (S& v : e) v = static_cast<S>(eps_rng.normal());
        }
      }

    CostBreakdown<S> parts =
        pnn_cost(net, tip, batch, labels, cfg, eps, &grad);
    rmsprop_step<S>(tip.rho, grad, opt);

    trace.per_iteration.push_back(parts);
    nll_hist.push_back(static_cast<double>(parts.nll));
    s2_hist.push_back(cfg.pi1 * static_cast<double>(parts.s2));
    trace.iterations = iter + 1;

    if ((iter + 1) % w == 0)
      trace.median_sigma.emplace_back(iter + 1, detail::median_sigma_of(tip));

    // Window-average stopping rule with patience: a window that improves
    // neither the best NLL nor the best pi1*s2 seen so far (by the relative
    // tolerance) counts against a 3-window budget. Window means smooth out
    // per-batch noise; patience keeps single flat windows from ending the
    // fit early.
    if ((iter + 1) % w == 0 && nll_hist.size() >= w) {
      auto window_avg = [&](const std::vector<double>& v) {
        double a = 0;
        for (std::size_t i = v.size() - w; i < v.size(); ++i) a += v[i];
        return a / static_cast<double>(w);
      };
      const double nll_avg = window_avg(nll_hist);
      const double s2_avg = window_avg(s2_hist);
      bool improved = false;
      if (nll_avg < best_nll - cfg.stop_tol * std::max(std::abs(best_nll), 1e-12)) {
        best_nll = nll_avg;
        improved = true;
      }
      if (cfg.pi1 > 0 &&
          s2_avg < best_s2 - cfg.stop_tol * std::max(std::abs(best_s2), 1e-12)) {
        best_s2 = s2_avg;
        improved = true;
      }
      if (improved) {
        windows_without_progress = 0;
      } else if (++windows_without_progress >= 3) {
        trace.stop_reason = "no_progress";
        break;
      }
    }
  }
  if (trace.stop_reason.empty()) trace.stop_reason = "max_iterations";
  return trace;
}

// ---------------------------------------------------------------------------
// Sibling scoring support
// ---------------------------------------------------------------------------

/// Softmax outputs of `n_siblings` sampled siblings over a whole dataset.
/// Siblings are sampled once and reused for every input, as at deployment.
/// Returns one (n_items x c) matrix per sibling.
template <class S>
std::vector<Tensor<S>> sibling_prob_matrices(const Network<S>& net,
                                             const TrustIntervalParams<S>& tip,
                                             const Tensor<S>& images,
                                             std::size_t n_siblings, Rng& rng,
                                             std::span<const S> mask = {},
                                             std::size_t batch_size = 256) {
  const std::size_t n_items = images.dim(0);
  const std::size_t c = net.num_classes();
  std::vector<Tensor<S>> out;
  out.reserve(n_siblings);
  const std::size_t item = images.size() / n_items;
  for (std::size_t j = 0; j < n_siblings; ++j) {
    std::vector<S> w = sample_sibling(tip, rng, mask);
    Tensor<S> probs = Tensor<S>::zeros({n_items, c});
    auto pv = probs.values_mut();
    for (std::size_t start = 0; start < n_items; start += batch_size) {
      const std::size_t count = std::min(batch_size, n_items - start);
      Shape bs = images.shape();
      bs[0] = count;
      Tensor<S> batch = Tensor<S>::from_span(
          std::move(bs), images.values().subspan(start * item, count * item));
      Tensor<S> p = net.predict_probs(std::span<const S>(w), batch);
      std::copy_n(p.values().begin(), count * c, pv.begin() + static_cast<std::ptrdiff_t>(start * c));
    }
    out.push_back(std::move(probs));
  }
  return out;
}

}  // namespace pnn
