#include <doctest.h>

#include <cmath>

#include "pnn/perturb.hpp"
#include "testutil.hpp"

using namespace pnn;

TEST_SUITE("perturb") {

TEST_CASE("fgsm with epsilon zero returns the input exactly") {
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {3, 2}), 5);
  Rng rng(4);
  Tensor<double> x = testutil::random_tensor({3, 2}, rng, 0, 1);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  Tensor<double> adv = fgsm(net, std::span<const double>(params.flat), x,
                            {0, 1, 0}, cfg);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(adv.values()[i] == x.values()[i]);
}

TEST_CASE("every fgsm pixel moves by -eps, 0 or +eps before clipping") {
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(4, {5, 3}), 6);
  Rng rng(5);
  Tensor<double> x = testutil::random_tensor({4, 4}, rng, 0.3, 0.7);
  AttackConfig cfg;
  cfg.epsilon = 0.05;  // small enough that clipping never engages here
  Tensor<double> adv = fgsm(net, std::span<const double>(params.flat), x,
                            {0, 1, 2, 0}, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = adv.values()[i] - x.values()[i];
    const bool ok = std::abs(d) < 1e-12 || std::abs(d - 0.05) < 1e-12 ||
                    std::abs(d + 0.05) < 1e-12;
    CHECK(ok);
  }
  // and the infinity norm never exceeds epsilon
  double linf = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    linf = std::max(linf, std::abs(adv.values()[i] - x.values()[i]));
  CHECK(linf <= cfg.epsilon + 1e-12);
}

TEST_CASE("fgsm on a 1-D logistic fixture always pushes up") {
  // Single positive weight, label 0: d(loss)/dx = (p1 - 0) * w > 0, so the
  // attack adds +eps for every input.
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(1, {2}), 0);
  // dense 1->2: W = [w0, w1], b = [0, 0]; logits = [x*w0, x*w1]
  params.flat = {0.0, 2.0, 0.0, 0.0};  // class-1 logit grows with x
  Tensor<double> x = Tensor<double>::from_values({3, 1}, {0.2, 0.5, 0.7});
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  Tensor<double> adv = fgsm(net, std::span<const double>(params.flat), x,
                            {0, 0, 0}, cfg);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(adv.values()[i] == doctest::Approx(x.values()[i] + 0.1));
}

TEST_CASE("fgsm is deterministic and clips to range") {
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {3, 2}), 7);
  Rng rng(8);
  Tensor<double> x = testutil::random_tensor({2, 2}, rng, 0.0, 1.0);
  AttackConfig cfg;
  cfg.epsilon = 0.5;
  Tensor<double> a1 = fgsm(net, std::span<const double>(params.flat), x, {0, 1}, cfg);
  Tensor<double> a2 = fgsm(net, std::span<const double>(params.flat), x, {0, 1}, cfg);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(a1.values()[i] == a2.values()[i]);
    CHECK(a1.values()[i] >= 0.0);
    CHECK(a1.values()[i] <= 1.0);
  }
}

TEST_CASE("corruption with zero severity is the identity") {
  Rng data_rng(3);
  Tensor<double> x = testutil::random_tensor({2, 1, 4, 4}, data_rng, 0, 1);
  CorruptionConfig cfg;
  cfg.severity = 0.0;
  Rng rng = Rng::stream(1, "corruption");
  Tensor<double> y = corrupt(x, cfg, rng);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("speckle noise leaves a black image black") {
  Tensor<double> x = Tensor<double>::zeros({1, 1, 6, 6});
  CorruptionConfig cfg;
  cfg.kind = CorruptionKind::speckle;
  cfg.severity = 0.8;
  Rng rng = Rng::stream(2, "corruption");
  Tensor<double> y = corrupt(x, cfg, rng);
  for (double v : y.values()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("gaussian corruption has the requested pixel std") {
  // mid-gray image, severity 0.1, wide clip range so clipping is inactive
  Tensor<double> x = Tensor<double>::zeros({1, 1, 100, 100});
  for (double& v : x.values_mut()) v = 0.5;
  CorruptionConfig cfg;
  cfg.severity = 0.1;
  cfg.clip_lo = -10;
  cfg.clip_hi = 10;
  Rng rng = Rng::stream(3, "corruption");
  Tensor<double> y = corrupt(x, cfg, rng);
  double mean = 0;
  for (double v : y.values()) mean += v;
  mean /= y.size();
  double var = 0;
  for (double v : y.values()) var += (v - mean) * (v - mean);
  var /= y.size();
  const double std_dev = std::sqrt(var);
  CHECK(std::abs(std_dev - 0.1) < 0.01);  // within 10% over 10^4 pixels
}

TEST_CASE("corruption is reproducible per stream and stays in range") {
  Rng data_rng(4);
  Tensor<double> x = testutil::random_tensor({1, 1, 8, 8}, data_rng, 0, 1);
  CorruptionConfig cfg;
  cfg.severity = 0.5;
  Rng r1 = Rng::stream(7, "corruption");
  Rng r2 = Rng::stream(7, "corruption");
  Tensor<double> y1 = corrupt(x, cfg, r1);
  Tensor<double> y2 = corrupt(x, cfg, r2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(y1.values()[i] == y2.values()[i]);
    CHECK(y1.values()[i] >= 0.0);
    CHECK(y1.values()[i] <= 1.0);
  }
}

TEST_CASE("odin with no preprocessing and T=1 is plain max softmax") {
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {3, 2}), 9);
  Rng rng(6);
  Tensor<double> x = testutil::random_tensor({4, 2}, rng);
  const std::vector<double> scores =
      odin_scores(net, std::span<const double>(params.flat), x, 1.0, 0.0);
  Tensor<double> probs = net.predict_probs(params.flat, x);
  for (std::size_t i = 0; i < 4; ++i) {
    const double want =
        std::max(probs.values()[i * 2], probs.values()[i * 2 + 1]);
    CHECK(scores[i] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("odin at very large temperature approaches 1/c") {
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {4, 5}), 10);
  Rng rng(7);
  Tensor<double> x = testutil::random_tensor({3, 2}, rng);
  const std::vector<double> scores =
      odin_scores(net, std::span<const double>(params.flat), x, 1e9, 0.0);
  for (double s : scores) CHECK(s == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("odin on a fixed fixture matches the two-step computation") {
  // dense 1->2 with W=[1,-1], b=[0,0]; input x: logits (x, -x).
  // For x>0 the top class is 0; the preprocessing step moves x by
  // +eps*sign(dp0/dx), and p0 increases with x, so x' = x + eps.
  // Score = softmax(x'/T)[0].
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(1, {2}), 0);
  params.flat = {1.0, -1.0, 0.0, 0.0};
  Tensor<double> x = Tensor<double>::from_values({1, 1}, {0.3});
  const double T = 10.0, eps = 0.05;
  const std::vector<double> scores =
      odin_scores(net, std::span<const double>(params.flat), x, T, eps);
  const double xp = 0.3 + eps;
  const double z0 = std::exp(xp / T), z1 = std::exp(-xp / T);
  CHECK(scores[0] == doctest::Approx(z0 / (z0 + z1)).epsilon(1e-10));
}

TEST_CASE("config validation") {
  AttackConfig bad;
  bad.epsilon = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CorruptionConfig swap;
  swap.clip_lo = 1.0;
  swap.clip_hi = 0.0;
  CHECK_THROWS_AS(swap.validate(), std::invalid_argument);
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(1, {2}), 0);
  Tensor<double> x = Tensor<double>::zeros({1, 1});
  CHECK_THROWS_AS(
      odin_scores(net, std::span<const double>(params.flat), x, 0.0, 0.0),
      std::invalid_argument);
}

}  // TEST_SUITE
