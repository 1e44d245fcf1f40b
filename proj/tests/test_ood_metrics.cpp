#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "pnn/ood_metrics.hpp"
#include "testutil.hpp"

using namespace pnn;
using testutil::aupr_enumerate;
using testutil::auroc_pairwise;
using testutil::fpr_at_tpr_enumerate;

namespace {

ScoreSet random_set(pnn::Rng& rng, std::size_t n_id, std::size_t n_ood,
                    double id_shift = 0.0) {
  ScoreSet s;
  for (std::size_t i = 0; i < n_id; ++i)
    s.id_scores.push_back(rng.normal() + id_shift);
  for (std::size_t i = 0; i < n_ood; ++i) s.ood_scores.push_back(rng.normal());
  return s;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("auroc trivial cases") {
  CHECK(auroc({{2, 3}, {0, 1}}) == doctest::Approx(1.0));
  CHECK(auroc({{1, 2, 3}, {1, 2, 3}}) == doctest::Approx(0.5));
  CHECK(auroc({{0.9, 0.4}, {0.7, 0.1}}) == doctest::Approx(0.75));
}

TEST_CASE("curve auroc equals pairwise brute force within 1e-12") {
  Rng rng(64);
  for (int trial = 0; trial < 50; ++trial) {
    ScoreSet s = random_set(rng, 200, 200, rng.uniform(0, 2));
    CHECK(std::abs(auroc(s) - auroc_pairwise(s)) < 1e-12);
  }
}

TEST_CASE("auroc handles ties with half credit") {
  ScoreSet s{{1.0, 2.0, 2.0}, {2.0, 0.0}};
  CHECK(auroc(s) == doctest::Approx(auroc_pairwise(s)).epsilon(1e-15));
}

TEST_CASE("auroc of swapped sides complements to one (tie-free)") {
  Rng rng(65);
  for (int trial = 0; trial < 10; ++trial) {
    ScoreSet s = random_set(rng, 50, 70, 0.5);
    ScoreSet swapped{s.ood_scores, s.id_scores};
    CHECK(auroc(s) + auroc(swapped) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("aupr trivial cases") {
  CHECK(aupr({{2, 3}, {0, 1}}) == doctest::Approx(1.0));
  CHECK(aupr({{1}, {0}}) == doctest::Approx(1.0));
}

TEST_CASE("aupr matches exhaustive threshold enumeration exactly") {
  Rng rng(66);
  for (int trial = 0; trial < 50; ++trial) {
    ScoreSet s = random_set(rng, 80, 120, rng.uniform(0, 1.5));
    CHECK(aupr(s) == aupr_enumerate(s));  // bitwise identical
  }
  // example pinned from the enumeration oracle
  ScoreSet ex{{0.9, 0.4}, {0.7, 0.1}};
  CHECK(aupr(ex) == aupr_enumerate(ex));
  CHECK(aupr(ex) == doctest::Approx(1.0 / 2 + (2.0 / 3) / 2).epsilon(1e-12));
}

TEST_CASE("aupr with the ood side as positive") {
  ScoreSet s{{0.9, 0.4}, {0.7, 0.1}};
  // flipping orientation and swapping sides must agree with enumeration
  ScoreSet flipped;
  for (double v : s.ood_scores) flipped.id_scores.push_back(-v);
  for (double v : s.id_scores) flipped.ood_scores.push_back(-v);
  CHECK(aupr(s, PositiveClass::ood) == aupr_enumerate(flipped));
}

TEST_CASE("fpr at 95 tpr on the hand-enumerated fixture") {
  ScoreSet s{{0.9, 0.8, 0.7, 0.2}, {0.6, 0.5, 0.1}};
  CHECK(fpr_at_tpr(s, 0.95) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(fpr_at_tpr(s, 0.95) ==
        doctest::Approx(fpr_at_tpr_enumerate(s, 0.95)).epsilon(1e-15));
}

TEST_CASE("fpr at tpr trivial cases") {
  CHECK(fpr_at_tpr({{2, 3}, {0, 1}}, 0.95) == doctest::Approx(0.0));
  CHECK(fpr_at_tpr({{0, 0.1}, {5, 6}}, 0.95) == doctest::Approx(1.0));
}

TEST_CASE("fpr matches enumeration on random sets") {
  Rng rng(67);
  for (int trial = 0; trial < 50; ++trial) {
    ScoreSet s = random_set(rng, 60, 90, rng.uniform(0, 2));
    const double target = 0.5 + 0.5 * rng.uniform();
    CHECK(fpr_at_tpr(s, target) == fpr_at_tpr_enumerate(s, target));
  }
}

TEST_CASE("metrics are invariant under increasing transforms") {
  Rng rng(68);
  ScoreSet s = random_set(rng, 40, 60, 1.0);
  ScoreSet t;
  auto f = [](double v) { return std::exp(0.7 * v) + 3; };  // increasing
  for (double v : s.id_scores) t.id_scores.push_back(f(v));
  for (double v : s.ood_scores) t.ood_scores.push_back(f(v));
  CHECK(auroc(s) == doctest::Approx(auroc(t)).epsilon(1e-12));
  CHECK(aupr(s) == doctest::Approx(aupr(t)).epsilon(1e-12));
  CHECK(fpr_at_tpr(s) == doctest::Approx(fpr_at_tpr(t)).epsilon(1e-12));
}

TEST_CASE("metrics are permutation invariant within sides") {
  Rng rng(69);
  ScoreSet s = random_set(rng, 30, 30, 0.5);
  ScoreSet p = s;
  std::reverse(p.id_scores.begin(), p.id_scores.end());
  std::reverse(p.ood_scores.begin(), p.ood_scores.end());
  CHECK(auroc(s) == auroc(p));
  CHECK(aupr(s) == aupr(p));
  CHECK(fpr_at_tpr(s) == fpr_at_tpr(p));
}

TEST_CASE("report fields stay in range and empty sides are rejected") {
  Rng rng(70);
  ScoreSet s = random_set(rng, 25, 25, 1.0);
  DetectionReport r = detection_report(s);
  CHECK(r.auroc >= 0.0);
  CHECK(r.auroc <= 1.0);
  CHECK(r.aupr >= 0.0);
  CHECK(r.aupr <= 1.0);
  CHECK(r.fpr_at_95tpr >= 0.0);
  CHECK(r.fpr_at_95tpr <= 1.0);
  CHECK(!r.roc_curve.empty());

  CHECK_THROWS_AS(auroc({{}, {1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(aupr({{1.0}, {}}), std::invalid_argument);
  ScoreSet nan_set{{std::numeric_limits<double>::quiet_NaN()}, {1.0}};
  CHECK_THROWS_AS(fpr_at_tpr(nan_set), std::invalid_argument);
}

TEST_CASE("score dumps round-trip") {
  Rng rng(71);
  ScoreSet s = random_set(rng, 10, 12, 0.3);
  const std::string path = "test_scores_dump.tsv";
  save_score_dump(path, s);
  ScoreSet loaded = load_score_dump(path);
  REQUIRE(loaded.id_scores.size() == s.id_scores.size());
  REQUIRE(loaded.ood_scores.size() == s.ood_scores.size());
  for (std::size_t i = 0; i < s.id_scores.size(); ++i)
    CHECK(loaded.id_scores[i] == s.id_scores[i]);  // %.17g is lossless
  for (std::size_t i = 0; i < s.ood_scores.size(); ++i)
    CHECK(loaded.ood_scores[i] == s.ood_scores[i]);
  std::filesystem::remove(path);
}

TEST_CASE("malformed dumps are rejected") {
  const std::string path = "test_scores_bad.tsv";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("0.5\tneither\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_score_dump(path), std::runtime_error);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
