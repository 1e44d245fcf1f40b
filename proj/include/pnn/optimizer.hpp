#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "pnn/data_io.hpp"
#include "pnn/network.hpp"
#include "pnn/rng.hpp"
#include "pnn/tensor.hpp"

namespace pnn {

template <class S>
struct RmspropState {
  std::vector<S> acc;  // squared-gradient accumulator, elementwise >= 0
  S lr;
  S decay;
  S eps;

  explicit RmspropState(std::size_t n, S lr_ = S(0.01), S decay_ = S(0.9),
                        S eps_ = S(1e-8))
      : acc(n, S(0)), lr(lr_), decay(decay_), eps(eps_) {}
};

template <class S>
void rmsprop_step(std::span<S> params, std::span<const S> grads,
                  RmspropState<S>& state) {
  if (params.size() != grads.size() || params.size() != state.acc.size())
    fail("rmsprop_step", "length mismatch");
  for (S g : grads)
    if (!std::isfinite(static_cast<double>(g)))
      throw std::runtime_error("rmsprop_step: non-finite gradient");
  const S one_minus = S(1) - state.decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.acc[i] = state.decay * state.acc[i] + one_minus * grads[i] * grads[i];
    params[i] -= state.lr * grads[i] / (std::sqrt(state.acc[i]) + state.eps);
  }
}

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t max_iterations = 2000;  // 0 is an explicit no-op
  double lr = 0.01;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;

  void validate() const {
    if (batch_size == 0 || lr <= 0 || eval_every == 0)
      fail("TrainConfig", "batch_size, lr and eval_every must be positive");
  }
};

struct TrainTrace {
  std::vector<double> loss;                            // per iteration
  std::vector<std::pair<std::size_t, double>> evals;   // (iter, holdout acc)
  std::size_t iterations = 0;
};

template <class S>
double evaluate_accuracy(const Network<S>& net, std::span<const S> params,
                         const Dataset<S>& data, std::size_t batch_size = 256) {
  if (data.size() == 0) fail("evaluate_accuracy", "empty dataset");
  if (data.labels.size() != data.size())
    fail("evaluate_accuracy", "dataset has no labels");
  const std::size_t c = net.num_classes();
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - start);
    Dataset<S> chunk = data.subset(start, count);
    Tensor<S> logits = net.forward_values(params, chunk.images);
    auto lv = logits.values();
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (lv[i * c + j] > lv[i * c + best]) best = j;
      if (static_cast<int>(best) == chunk.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Point-estimate training with RMSprop and cross-entropy. Shuffling uses a
/// dedicated seeded stream; with a non-empty holdout the loop early-stops
/// after 3 evaluations without improvement and returns the best parameters
/// seen.
template <class S>
TrainTrace train_baseline(const Network<S>& net, ParamStore<S>& params,
                          const Dataset<S>& train, const Dataset<S>& holdout,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (train.size() == 0) fail("train_baseline", "empty training set");
  if (train.labels.size() != train.size())
    fail("train_baseline", "training set has no labels");
  for (int y : train.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= net.num_classes())
      fail("train_baseline", "label " + std::to_string(y) + " out of range");

  TrainTrace trace;
  if (cfg.max_iterations == 0) return trace;

  Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle");
  RmspropState<S> opt(net.param_count(), static_cast<S>(cfg.lr));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // forces a shuffle on first use

  const bool track_best = holdout.size() > 0;
  std::vector<S> best_params;
  double best_acc = -1.0;
  int evals_since_best = 0;

  for (std::size_t iter = 0; iter < cfg.max_iterations; ++iter) {
    // full-epoch permutation, refreshed when exhausted
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

    auto [batch, labels] = train.gather(idx);
    Tape<S> tape;
    Tensor<S> p = Tensor<S>::from_span({params.flat.size()},
                                       std::span<const S>(params.flat));
    p.set_requires_grad(true);
    Tensor<S> logits = net.forward(tape, p, batch);
    auto [loss, probs] = softmax_cross_entropy(tape, logits, labels);
    tape.backward(loss);
    trace.loss.push_back(static_cast<double>(loss.item()));

    rmsprop_step<S>(params.flat, p.grad(), opt);
    trace.iterations = iter + 1;

    if (track_best && ((iter + 1) % cfg.eval_every == 0 ||
                       iter + 1 == cfg.max_iterations)) {
      const double acc = evaluate_accuracy(net, std::span<const S>(params.flat),
                                           holdout, cfg.batch_size);
      trace.evals.emplace_back(iter + 1, acc);
      if (acc > best_acc) {
        best_acc = acc;
        best_params = params.flat;
        evals_since_best = 0;
      } else if (++evals_since_best >= 3) {
        break;  // accuracy plateau
      }
    }
  }
  if (track_best && !best_params.empty()) params.flat = std::move(best_params);
  return trace;
}

}  // namespace pnn
