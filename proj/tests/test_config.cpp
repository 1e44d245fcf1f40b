#include <doctest.h>

#include "pnn/config.hpp"

using namespace pnn;

TEST_SUITE("config") {

TEST_CASE("full config parses with sections and comments") {
  const std::string text = R"(
# run settings
[dataset]
train_images = data/train-images-idx3-ubyte
train_labels = data/train-labels-idx1-ubyte
test_images = data/t10k-images-idx3-ubyte
test_labels = data/t10k-labels-idx1-ubyte
ood_images = data/ood-images-idx3-ubyte

[model]
arch = c1_small

[train]
batch_size = 128
max_iterations = 700
lr = 0.005
eval_every = 25

[pnn]
pi1 = 1
pi2 = 1e-7
siblings = 2
max_iterations = 400   # stop rule may end earlier

[eval]
siblings = 2
scorers = m, entropy, maxavg, kl, baseline

[metrics]
positive = id
tpr_target = 0.95

[run]
seed = 11
out_dir = out/run1
precision = wide
)";
  RunConfig cfg = RunConfig::parse_text(text);
  CHECK(cfg.train_images == "data/train-images-idx3-ubyte");
  CHECK(cfg.arch == "c1_small");
  CHECK(cfg.train.batch_size == 128);
  CHECK(cfg.train.lr == doctest::Approx(0.005));
  CHECK(cfg.pnn.pi2 == doctest::Approx(1e-7));
  CHECK(cfg.pnn.max_iterations == 400);
  CHECK(cfg.scorers == std::vector<std::string>{"m", "entropy", "maxavg",
                                                "kl", "baseline"});
  CHECK(cfg.seed == 11);
  CHECK(cfg.precision == "wide");
}

TEST_CASE("defaults hold when keys are omitted") {
  RunConfig cfg = RunConfig::parse_text("[model]\narch = mlp\n");
  CHECK(cfg.arch == "mlp");
  CHECK(cfg.pnn.pi1 == doctest::Approx(1.0));
  CHECK(cfg.pnn.n_train_samples == 2);
  CHECK(cfg.eval_siblings == 2);
  CHECK(cfg.tpr_target == doctest::Approx(0.95));
  CHECK(cfg.precision == "narrow");
  CHECK(cfg.attack_epsilons == std::vector<double>{0.05, 0.1, 0.2});
  CHECK(cfg.odin_temperatures == std::vector<double>{10, 100, 1000});
}

TEST_CASE("unknown keys are rejected with the offending key named") {
  try {
    RunConfig::parse_text("[pnn]\nfoo = 3\n");
    FAIL("expected a parse error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[pnn] foo") != std::string::npos);
  }
  try {
    RunConfig::parse_text("[nosuch]\nkey = 3\n");
    FAIL("expected a parse error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[nosuch] key") != std::string::npos);
  }
}

TEST_CASE("malformed values are rejected") {
  CHECK_THROWS_AS(RunConfig::parse_text("[train]\nlr = fast\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse_text("[train]\nbatch_size = -2\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse_text("[pnn]\nperturb_biases = maybe\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse_text("no_equals_sign\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse_text("[run]\nprecision = quad\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse_text("[model]\narch = resnet\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::parse_text("[pnn]\nsiblings = 1\n"),
                  std::invalid_argument);
}

TEST_CASE("missing config file errors cleanly") {
  CHECK_THROWS_AS(RunConfig::parse_file("definitely/not/here.cfg"),
                  std::runtime_error);
}

}  // TEST_SUITE
