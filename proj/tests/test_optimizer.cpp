#include <doctest.h>

#include <cmath>

#include "pnn/optimizer.hpp"
#include "testutil.hpp"

using namespace pnn;

namespace {

/// Two well-separated 2-D gaussian blobs, one per class.
Dataset<double> blob_dataset(std::size_t n_per_class, Rng& rng) {
  Dataset<double> d;
  d.images = Tensor<double>::zeros({2 * n_per_class, 2});
  auto v = d.images.values_mut();
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const int label = i % 2;
    const double cx = label == 0 ? -2.0 : 2.0;
    v[i * 2] = cx + 0.5 * rng.normal();
    v[i * 2 + 1] = (label == 0 ? -1.5 : 1.5) + 0.5 * rng.normal();
    d.labels.push_back(label);
  }
  return d;
}

}  // namespace

TEST_SUITE("optimizer") {

TEST_CASE("rmsprop with zero gradient leaves parameters, decays accumulator") {
  std::vector<double> params = {1.0, -2.0};
  std::vector<double> grads = {0.0, 0.0};
  RmspropState<double> st(2, 0.01, 0.9, 1e-8);
  st.acc = {0.4, 0.8};
  rmsprop_step<double>(params, grads, st);
  CHECK(params[0] == doctest::Approx(1.0));
  CHECK(params[1] == doctest::Approx(-2.0));
  CHECK(st.acc[0] == doctest::Approx(0.36));
  CHECK(st.acc[1] == doctest::Approx(0.72));
}

TEST_CASE("rmsprop single step matches the update formula") {
  // theta=1, g=1, acc=0, decay=0.9, lr=0.01, eps=1e-8:
  //   acc <- 0.1, theta <- 1 - 0.01/(sqrt(0.1)+1e-8)
  std::vector<double> params = {1.0};
  std::vector<double> grads = {1.0};
  RmspropState<double> st(1, 0.01, 0.9, 1e-8);
  rmsprop_step<double>(params, grads, st);
  CHECK(st.acc[0] == doctest::Approx(0.1).epsilon(1e-12));
  const double expected = 1.0 - 0.01 / (std::sqrt(0.1) + 1e-8);
  CHECK(params[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(params[0] == doctest::Approx(0.96837723).epsilon(1e-7));
}

TEST_CASE("rmsprop is deterministic") {
  std::vector<double> p1 = {0.5, -0.1}, p2 = {0.5, -0.1};
  std::vector<double> g = {0.3, -0.7};
  RmspropState<double> s1(2), s2(2);
  rmsprop_step<double>(p1, g, s1);
  rmsprop_step<double>(p2, g, s2);
  CHECK(p1[0] == p2[0]);
  CHECK(p1[1] == p2[1]);
  CHECK(s1.acc[0] == s2.acc[0]);
}

TEST_CASE("rmsprop rejects non-finite gradients") {
  std::vector<double> params = {1.0};
  std::vector<double> grads = {std::numeric_limits<double>::infinity()};
  RmspropState<double> st(1);
  CHECK_THROWS_AS(rmsprop_step<double>(params, grads, st), std::runtime_error);
}

TEST_CASE("rmsprop monotonically decreases a 1-D convex quadratic") {
  // loss = 0.5 * theta^2, gradient = theta, lr = 0.01
  double theta = 1.7;
  RmspropState<double> st(1, 0.01, 0.9, 1e-8);
  double prev_loss = 0.5 * theta * theta;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p = {theta};
    std::vector<double> g = {theta};
    rmsprop_step<double>(p, g, st);
    theta = p[0];
    const double loss = 0.5 * theta * theta;
    CHECK(loss < prev_loss);
    prev_loss = loss;
  }
}

TEST_CASE("accuracy on forced predictions") {
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {2, 2}), 0);
  // bias-only logits: class 1 always wins
  std::fill(params.flat.begin(), params.flat.end(), 0.0);
  params.flat[net.param_count() - 1] = 5.0;  // b2[1]
  Dataset<double> d;
  d.images = Tensor<double>::zeros({4, 2});
  d.labels = {1, 1, 1, 1};
  CHECK(evaluate_accuracy(net, std::span<const double>(params.flat), d) ==
        doctest::Approx(1.0));
  // constant predictor on balanced two-class data: 50%
  d.labels = {0, 1, 0, 1};
  CHECK(evaluate_accuracy(net, std::span<const double>(params.flat), d) ==
        doctest::Approx(0.5));
}

TEST_CASE("accuracy hand-counted on a fixed fixture") {
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {2, 2}), 0);
  // identity-ish map: logits = x (W1 = I through relu path for positives)
  params.flat = {1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0};
  Dataset<double> d;
  d.images = Tensor<double>::from_values({4, 2}, {2, 1,    // pred 0, label 0
                                                  1, 3,    // pred 1, label 0
                                                  0.5, 2,  // pred 1, label 1
                                                  4, 1});  // pred 0, label 1
  d.labels = {0, 0, 1, 1};
  CHECK(evaluate_accuracy(net, std::span<const double>(params.flat), d) ==
        doctest::Approx(0.5));  // two of four, counted by hand
}

TEST_CASE("evaluate_accuracy rejects an empty dataset") {
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {2, 2}), 0);
  Dataset<double> d;
  CHECK_THROWS_AS(
      evaluate_accuracy(net, std::span<const double>(params.flat), d),
      std::invalid_argument);
}

TEST_CASE("zero iterations returns the initialization unchanged") {
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {3, 2}), 21);
  const std::vector<double> before = params.flat;
  Rng rng(1);
  Dataset<double> d = blob_dataset(20, rng);
  TrainConfig cfg;
  cfg.max_iterations = 0;
  TrainTrace trace = train_baseline(net, params, d, Dataset<double>{}, cfg);
  CHECK(trace.iterations == 0);
  CHECK(params.flat == before);
}

TEST_CASE("separable blobs train to high accuracy") {
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {8, 2}), 3);
  Rng rng(2);
  Dataset<double> d = blob_dataset(100, rng);
  const double acc_init =
      evaluate_accuracy(net, std::span<const double>(params.flat), d);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_iterations = 500;
  cfg.lr = 0.01;
  cfg.seed = 5;
  train_baseline(net, params, d, Dataset<double>{}, cfg);
  const double acc =
      evaluate_accuracy(net, std::span<const double>(params.flat), d);
  CHECK(acc >= 0.99);
  CHECK(acc >= acc_init);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  Rng rng(4);
  Dataset<double> d = blob_dataset(50, rng);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_iterations = 60;
  cfg.seed = 9;

  auto [net1, p1] = Network<double>::build(NetworkSpec::mlp(2, {4, 2}), 7);
  train_baseline(net1, p1, d, Dataset<double>{}, cfg);
  auto [net2, p2] = Network<double>::build(NetworkSpec::mlp(2, {4, 2}), 7);
  train_baseline(net2, p2, d, Dataset<double>{}, cfg);
  CHECK(p1.flat == p2.flat);
}

TEST_CASE("early stopping kicks in on a plateau") {
  Rng rng(6);
  Dataset<double> d = blob_dataset(50, rng);
  Dataset<double> holdout = blob_dataset(25, rng);
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {8, 2}), 1);
  TrainConfig cfg;
  cfg.batch_size = 25;
  cfg.max_iterations = 5000;
  cfg.eval_every = 10;
  cfg.seed = 3;
  TrainTrace trace = train_baseline(net, params, d, holdout, cfg);
  CHECK(trace.iterations < cfg.max_iterations);  // plateaued well before
  CHECK(!trace.evals.empty());
}

}  // TEST_SUITE
