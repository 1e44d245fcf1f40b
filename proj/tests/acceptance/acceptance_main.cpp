// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Criteria share one desk-scale fixture: a 10k-image
// training set, a 2k test set and a 2k out-of-distribution set.
//
// With PNN_MNIST_DIR and PNN_FASHION_DIR set, the fixture is the real
// MNIST subset with Fashion-MNIST as the OOD side (standard idx filenames).
// Without them a deterministic synthetic stand-in is generated and written
// through the same idx reader path.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "pnn/agreement.hpp"
#include "pnn/cli.hpp"
#include "pnn/data_io.hpp"
#include "pnn/diagnostics.hpp"
#include "pnn/network.hpp"
#include "pnn/ood_metrics.hpp"
#include "pnn/optimizer.hpp"
#include "pnn/perturb.hpp"
#include "pnn/synth.hpp"
#include "pnn/trust_intervals.hpp"

#include "../testutil.hpp"

using namespace pnn;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  std::printf("%-5s %s  %s\n", id.c_str(), pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

template <class F>
void criterion(const std::string& id, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::printf("      (%.1fs)\n", secs);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---------------------------------------------------------------------------
// Shared fixture
// ---------------------------------------------------------------------------

struct Fixture {
  Dataset<float> train, test, ood;
  std::string source;

  Network<float> net;
  ParamStore<float> params;          // trained baseline
  double baseline_acc = 0;

  TrustIntervalParams<float> tip;    // fitted intervals
  PnnFitTrace<float> fit_trace;
  double sibling_acc = 0;

  std::vector<double> m_id, m_ood;   // measure-of-agreement scores
  double pnn_fpr = 0;                // fpr@95tpr of the M detector
};

Dataset<float> take(Dataset<float> d, std::size_t n) {
  return d.size() <= n ? d : d.subset(0, n);
}

Fixture* load_fixture() {
  auto* fx = new Fixture();
  const char* mnist = std::getenv("PNN_MNIST_DIR");
  const char* fashion = std::getenv("PNN_FASHION_DIR");
  if (mnist && fashion) {
    const std::string m(mnist), f(fashion);
    fx->train = take(load_idx_dataset<float>(m + "/train-images-idx3-ubyte",
                                             m + "/train-labels-idx1-ubyte"),
                     10000);
    fx->test = take(load_idx_dataset<float>(m + "/t10k-images-idx3-ubyte",
                                            m + "/t10k-labels-idx1-ubyte"),
                    2000);
    fx->ood = take(load_idx_dataset<float>(f + "/t10k-images-idx3-ubyte", ""),
                   2000);
    fx->source = "mnist/fashion-mnist";
  } else {
    fs::create_directories("acceptance_out");
    write_synth_idx(synth_digits(10000, 9001), "acceptance_out/train-img.idx",
                    "acceptance_out/train-lab.idx");
    write_synth_idx(synth_digits(2000, 9002), "acceptance_out/test-img.idx",
                    "acceptance_out/test-lab.idx");
    write_synth_idx(synth_garments(2000, 9003), "acceptance_out/ood-img.idx",
                    "acceptance_out/ood-lab.idx");
    fx->train = load_idx_dataset<float>("acceptance_out/train-img.idx",
                                        "acceptance_out/train-lab.idx");
    fx->test = load_idx_dataset<float>("acceptance_out/test-img.idx",
                                       "acceptance_out/test-lab.idx");
    fx->ood = load_idx_dataset<float>("acceptance_out/ood-img.idx", "");
    fx->source = "synthetic desk fixture (no PNN_MNIST_DIR/PNN_FASHION_DIR)";
  }
  return fx;
}

std::vector<double> m_scores_for(const Network<float>& net,
                                 const TrustIntervalParams<float>& tip,
                                 const Tensor<float>& images,
                                 std::size_t n_siblings, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "sibling_eps");
  auto mats = sibling_prob_matrices(net, tip, images, n_siblings, rng);
  std::vector<double> out(images.dim(0));
  SiblingSoftmax ss;
  ss.n = n_siblings;
  ss.c = net.num_classes();
  ss.probs.resize(ss.n * ss.c);
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < ss.n; ++j)
      for (std::size_t k = 0; k < ss.c; ++k)
        ss.probs[j * ss.c + k] =
            static_cast<double>(mats[j].values()[i * ss.c + k]);
    out[i] = measure_M(ss, 1e-12).M;
  }
  return out;
}

std::vector<double> max_softmax_scores(const Network<float>& net,
                                       std::span<const float> mu,
                                       const Tensor<float>& images) {
  const std::size_t n = images.dim(0), c = net.num_classes();
  const std::size_t item = images.size() / n;
  std::vector<double> out(n);
  for (std::size_t start = 0; start < n; start += 256) {
    const std::size_t count = std::min<std::size_t>(256, n - start);
    Shape bs = images.shape();
    bs[0] = count;
    Tensor<float> batch = Tensor<float>::from_span(
        std::move(bs), images.values().subspan(start * item, count * item));
    Tensor<float> probs = net.predict_probs(mu, batch);
    for (std::size_t i = 0; i < count; ++i) {
      double best = 0;
      for (std::size_t k = 0; k < c; ++k)
        best = std::max(best, static_cast<double>(probs.values()[i * c + k]));
      out[start + i] = best;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// AC-1: gradient correctness
// ---------------------------------------------------------------------------

void ac1() {
  Rng rng(20250801);
  double worst = 0;
  std::string worst_name;
  for (auto& c : testutil::gradcheck_cases()) {
    for (int trial = 0; trial < 100; ++trial) {
      const double err = c.trial(rng);
      if (err > worst) {
        worst = err;
        worst_name = c.name;
      }
    }
  }

  // interval-cost gradient w.r.t. rho on a tiny fixture, fixed noise
  auto [net, params] = Network<double>::build(NetworkSpec::mlp(2, {3, 2}), 1);
  PnnConfig cfg;
  cfg.pi1 = 1.0;
  cfg.pi2 = 1e-3;
  double worst_cost = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<double> batch = testutil::random_tensor({3, 2}, rng);
    std::vector<int> labels = {static_cast<int>(rng.uniform_index(2)),
                               static_cast<int>(rng.uniform_index(2)),
                               static_cast<int>(rng.uniform_index(2))};
    std::vector<std::vector<double>> eps(2);
    for (auto& e : eps) {
      e.resize(net.param_count());
      for (double& v : e) v = rng.normal();
    }
    TrustIntervalParams<double> tip = init_pnn(params, 300 + trial);
    std::vector<double> analytic;
    pnn_cost(net, tip, batch, labels, cfg, eps, &analytic);
    auto cost_at = [&](const std::vector<double>& rho) {
      TrustIntervalParams<double> t2;
      t2.mu = tip.mu;
      t2.rho = rho;
      return pnn_cost(net, t2, batch, labels, cfg, eps).total;
    };
    const std::vector<double> numeric = testutil::fd_gradient(cost_at, tip.rho);
    worst_cost = std::max(worst_cost, testutil::max_rel_err(analytic, numeric));
  }

  const bool pass = worst < 1e-4 && worst_cost < 1e-4;
  report("AC-1", pass,
         "primitive gradcheck worst=" + fmt(worst) + " (" + worst_name +
             "), interval-cost gradcheck worst=" + fmt(worst_cost) +
             ", tolerance 1e-4, 100 trials each");
}

// ---------------------------------------------------------------------------
// AC-2: metric oracles
// ---------------------------------------------------------------------------

void ac2() {
  Rng rng(7311);
  double worst_auroc = 0;
  bool exact = true;
  for (int trial = 0; trial < 50; ++trial) {
    ScoreSet s;
    const double shift = rng.uniform(0, 2);
    for (int i = 0; i < 200; ++i) s.id_scores.push_back(rng.normal() + shift);
    for (int i = 0; i < 200; ++i) s.ood_scores.push_back(rng.normal());
    worst_auroc = std::max(
        worst_auroc, std::abs(auroc(s) - testutil::auroc_pairwise(s)));
    exact = exact && aupr(s) == testutil::aupr_enumerate(s);
    const double target = 0.5 + 0.5 * rng.uniform();
    exact = exact &&
            fpr_at_tpr(s, target) == testutil::fpr_at_tpr_enumerate(s, target);
  }
  const bool pass = worst_auroc < 1e-12 && exact;
  report("AC-2", pass,
         "auroc vs pairwise worst=" + fmt(worst_auroc) +
             " (tol 1e-12); aupr/fpr vs enumeration exact=" +
             (exact ? "yes" : "no") + "; 50 random 200+200 sets");
}

// ---------------------------------------------------------------------------
// AC-3: desk-scale baseline + detection
// ---------------------------------------------------------------------------

void ac3(Fixture& fx) {
  auto [net, params] = Network<float>::build(NetworkSpec::c1_small(), 42);
  fx.net = std::move(net);
  fx.params = std::move(params);

  const std::size_t holdout_n = 1000;
  Dataset<float> fit_split = fx.train.subset(0, fx.train.size() - holdout_n);
  Dataset<float> holdout =
      fx.train.subset(fx.train.size() - holdout_n, holdout_n);

  TrainConfig tcfg;
  tcfg.batch_size = 256;
  tcfg.max_iterations = 800;
  tcfg.lr = 0.01;
  tcfg.seed = 42;
  tcfg.eval_every = 40;
  train_baseline(fx.net, fx.params, fit_split, holdout, tcfg);
  fx.baseline_acc = evaluate_accuracy(
      fx.net, std::span<const float>(fx.params.flat), fx.test);

  PnnConfig pcfg;
  pcfg.pi1 = 1.0;
  pcfg.pi2 = 1e-7;
  pcfg.n_train_samples = 2;
  pcfg.lr = 0.1;         // desk-scale schedule; one core, 1708 iterations
  pcfg.batch_size = 256;
  pcfg.max_iterations = 1708;
  pcfg.stop_window = 600;
  pcfg.seed = 42;
  fx.tip = init_pnn(fx.params, 42);
  fx.fit_trace = fit_pnn(fx.net, fx.tip, fx.train, pcfg);

  Rng rng = Rng::stream(777, "sibling_eps");
  const std::vector<float> sibling = sample_sibling(fx.tip, rng);
  fx.sibling_acc = evaluate_accuracy(
      fx.net, std::span<const float>(sibling), fx.test);

  fx.m_id = m_scores_for(fx.net, fx.tip, fx.test.images, 2, 4242);
  fx.m_ood = m_scores_for(fx.net, fx.tip, fx.ood.images, 2, 4242);
  ScoreSet m_set{fx.m_id, fx.m_ood};
  const double m_auroc = auroc(m_set);
  const double m_aupr = aupr(m_set, PositiveClass::id);
  fx.pnn_fpr = fpr_at_tpr(m_set, 0.95);

  const std::vector<double> base_id = max_softmax_scores(
      fx.net, std::span<const float>(fx.params.flat), fx.test.images);
  const std::vector<double> base_ood = max_softmax_scores(
      fx.net, std::span<const float>(fx.params.flat), fx.ood.images);
  const double base_fpr = fpr_at_tpr({base_id, base_ood}, 0.95);

  const bool acc_ok = fx.baseline_acc >= 0.97;
  const bool a = std::abs(fx.sibling_acc - fx.baseline_acc) <= 0.01;
  const bool b = m_auroc >= 0.90;
  const bool c = fx.pnn_fpr < base_fpr;
  const bool d = m_aupr >= 0.95;
  report("AC-3", acc_ok && a && b && c && d,
         "baseline_acc=" + fmt(fx.baseline_acc) + " (>=0.97); sibling_acc=" +
             fmt(fx.sibling_acc) + " (within 0.01); M auroc=" + fmt(m_auroc) +
             " (>=0.90); M fpr@95=" + fmt(fx.pnn_fpr) + " < baseline fpr@95=" +
             fmt(base_fpr) + "; M aupr=" + fmt(m_aupr) + " (>=0.95); fit " +
             std::to_string(fx.fit_trace.iterations) + " iters (" +
             fx.fit_trace.stop_reason + ")");
}

// ---------------------------------------------------------------------------
// AC-4: fixed-strength random perturbation ablation
// ---------------------------------------------------------------------------

void ac4(Fixture& fx) {
  // Perturbation strengths follow the N(mean, variance) reading: the strong
  // arm is unit variance, the weak arm variance 0.01, i.e. std 0.1.
  const double weak_std = 0.1;
  Rng strong_rng = Rng::stream(91, "corruption");
  const double strong_acc = trivial_perturbation_ablation(
      fx.net, std::span<const float>(fx.params.flat), 1.0, fx.test, strong_rng);

  Rng weak_rng = Rng::stream(92, "corruption");
  const double weak_acc = trivial_perturbation_ablation(
      fx.net, std::span<const float>(fx.params.flat), weak_std, fx.test,
      weak_rng);

  // fixed-scale siblings as a detector: sigma = weak_std for every weight
  TrustIntervalParams<float> fixed;
  fixed.mu = fx.params.flat;
  fixed.rho.assign(fx.params.flat.size(),
                   static_cast<float>(std::log(std::expm1(weak_std))));
  const std::vector<double> f_id =
      m_scores_for(fx.net, fixed, fx.test.images, 2, 555);
  const std::vector<double> f_ood =
      m_scores_for(fx.net, fixed, fx.ood.images, 2, 555);
  const double fixed_fpr = fpr_at_tpr({f_id, f_ood}, 0.95);

  const bool strong_ok = strong_acc <= 0.20;
  const bool weak_ok = std::abs(weak_acc - fx.baseline_acc) <= 0.02;
  const bool gap_ok = fixed_fpr >= fx.pnn_fpr + 0.15;
  report("AC-4", strong_ok && weak_ok && gap_ok,
         "N(0,1) acc=" + fmt(strong_acc) + " (<=0.20); N(0,0.01)=std-0.1 acc=" +
             fmt(weak_acc) + " (within 0.02 of " + fmt(fx.baseline_acc) +
             "); fixed-sigma fpr@95=" + fmt(fixed_fpr) +
             " vs fitted fpr@95=" + fmt(fx.pnn_fpr) + " (gap >= 0.15)");
}

// ---------------------------------------------------------------------------
// AC-5: quadratic loss-change medians, ID vs OOD
// ---------------------------------------------------------------------------

void ac5(Fixture& fx) {
  const std::size_t n_each = 500;
  const std::vector<float> sigma = fx.tip.sigma();
  Rng eps_rng = Rng::stream(333, "sibling_eps");

  auto predicted = [&](const Tensor<float>& imgs) {
    Tensor<float> logits = fx.net.forward_values(
        std::span<const float>(fx.tip.mu), imgs);
    std::vector<int> out(imgs.dim(0));
    const std::size_t c = fx.net.num_classes();
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k)
        if (logits.values()[i * c + k] > logits.values()[i * c + best])
          best = k;
      out[i] = static_cast<int>(best);
    }
    return out;
  };

  auto side_medians = [&](const Dataset<float>& set, bool use_true_labels) {
    std::vector<int> labels =
        use_true_labels ? set.labels : predicted(set.images);
    std::vector<double> vals;
    for (std::size_t i = 0; i < n_each; ++i) {
      Dataset<float> one = set.subset(i, 1);
      std::vector<float> delta(fx.tip.mu.size());
      for (std::size_t k = 0; k < delta.size(); ++k)
        delta[k] = sigma[k] * static_cast<float>(eps_rng.normal());
      const std::vector<int> y = {labels[i]};
      vals.push_back(std::abs(delta_error_quadratic(
          fx.net, std::span<const float>(fx.tip.mu),
          std::span<const float>(delta), one.images, y)));
    }
    return median(vals);
  };

  const double med_id = side_medians(fx.test, true);
  const double med_ood = side_medians(fx.ood, false);
  report("AC-5", med_id < med_ood,
         "median |dE_quad| id=" + fmt(med_id) + " < ood=" + fmt(med_ood) +
             " over 500+500 samples");
}

// ---------------------------------------------------------------------------
// AC-6: FGSM sweep direction
// ---------------------------------------------------------------------------

void ac6(Fixture& fx) {
  auto log10_median = [](const std::vector<double>& v) {
    std::vector<double> logs;
    logs.reserve(v.size());
    for (double x : v) logs.push_back(std::log10(x));
    return median(logs);
  };
  const double clean_med = log10_median(fx.m_id);

  std::vector<double> meds;
  for (double eps : {0.05, 0.1, 0.2}) {
    AttackConfig cfg;
    cfg.epsilon = eps;
    Tensor<float> adv = fgsm(fx.net, std::span<const float>(fx.params.flat),
                             fx.test.images, fx.test.labels, cfg);
    meds.push_back(log10_median(m_scores_for(fx.net, fx.tip, adv, 2, 4242)));
  }
  const bool monotone = meds[0] > meds[1] && meds[1] > meds[2];
  const bool below = meds[0] < clean_med && meds[1] < clean_med &&
                     meds[2] < clean_med;
  report("AC-6", monotone && below,
         "median log10(M): clean=" + fmt(clean_med) + ", eps 0.05/0.1/0.2 = " +
             fmt(meds[0]) + "/" + fmt(meds[1]) + "/" + fmt(meds[2]) +
             " (strictly decreasing, all below clean)");
}

// ---------------------------------------------------------------------------
// AC-7: sibling-count stability
// ---------------------------------------------------------------------------

void ac7(Fixture& fx) {
  SiblingCountStudy<float> study = sibling_count_study(
      fx.net, fx.tip, fx.test.images, fx.ood.images, {2, 10}, 4242);
  const double med2 = median(study.ood_log_m[0]);
  const double med10 = median(study.ood_log_m[1]);
  const double diff = std::abs(med2 - med10);
  report("AC-7", diff < 0.5,
         "ood median log10(M): 2 siblings=" + fmt(med2) + ", 10 siblings=" +
             fmt(med10) + ", |diff|=" + fmt(diff) + " (< 0.5)");
}

// ---------------------------------------------------------------------------
// AC-8: collapse property of the interval cost
// ---------------------------------------------------------------------------

void ac8(Fixture& fx) {
  TrustIntervalParams<float> tip0 = init_pnn(fx.params, 84);
  PnnConfig cfg;
  cfg.pi1 = 1.0;
  cfg.pi2 = 0.0;  // no collapse guard
  cfg.n_train_samples = 2;
  cfg.lr = 0.1;
  cfg.batch_size = 256;
  cfg.max_iterations = 300;
  cfg.seed = 84;
  PnnFitTrace<float> trace = fit_pnn(fx.net, tip0, fx.train, cfg);

  bool monotone = trace.median_sigma.size() >= 3;
  for (std::size_t i = 1; i < trace.median_sigma.size(); ++i)
    monotone = monotone && trace.median_sigma[i].second <
                               trace.median_sigma[i - 1].second + 1e-12;

  const double fitted_median = fx.fit_trace.median_sigma.back().second;
  const bool guarded = fitted_median > 1e-6;
  report("AC-8", monotone && guarded,
         "pi2=0 median sigma " + fmt(trace.median_sigma.front().second) +
             " -> " + fmt(trace.median_sigma.back().second) +
             " non-increasing over " + std::to_string(trace.median_sigma.size()) +
             " samples; pi2=1e-7 final median sigma=" + fmt(fitted_median) +
             " (> 1e-6)");
}

// ---------------------------------------------------------------------------
// AC-9: persistence and determinism
// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ac9(Fixture& fx) {
  // checkpoint round trip, bit-exact
  CheckpointContainer c;
  c.set("arch", "c1_small");
  c.set("phase", "pnn");
  c.add_array<float>("mu", fx.tip.mu);
  c.add_array<float>("rho", fx.tip.rho);
  save_checkpoint(c, "acceptance_out/rt.pnn");
  CheckpointContainer back = load_checkpoint("acceptance_out/rt.pnn");
  const std::vector<float> mu2 = back.array_as<float>("mu");
  const std::vector<float> rho2 = back.array_as<float>("rho");
  const bool rt_ok =
      std::memcmp(mu2.data(), fx.tip.mu.data(),
                  mu2.size() * sizeof(float)) == 0 &&
      std::memcmp(rho2.data(), fx.tip.rho.data(),
                  rho2.size() * sizeof(float)) == 0;

  // idx parsing against hand-crafted bytes
  {
    std::ofstream f("acceptance_out/crafted.idx", std::ios::binary);
    const unsigned char bytes[] = {0, 0, 0x08, 0x03, 0, 0, 0, 1, 0, 0, 0, 2,
                                   0, 0, 0, 2, 10, 20, 30, 40};
    f.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
  }
  Tensor<float> crafted = load_idx_images<float>("acceptance_out/crafted.idx");
  auto close = [](double a, double b) { return std::abs(a - b) < 1e-7; };
  const bool idx_ok = crafted.shape() == Shape{1, 1, 2, 2} &&
                      close(crafted.values()[0], 10.0 / 255) &&
                      close(crafted.values()[3], 40.0 / 255);

  // a full command repeated with identical config+seed is byte-identical
  fs::create_directories("acceptance_out/cli");
  write_synth_idx(synth_digits(120, 77), "acceptance_out/cli/tr-img.idx",
                  "acceptance_out/cli/tr-lab.idx");
  write_synth_idx(synth_digits(40, 78), "acceptance_out/cli/te-img.idx",
                  "acceptance_out/cli/te-lab.idx");
  {
    std::ofstream cfg("acceptance_out/cli/run.cfg");
    cfg << "[dataset]\ntrain_images = acceptance_out/cli/tr-img.idx\n"
        << "train_labels = acceptance_out/cli/tr-lab.idx\n"
        << "test_images = acceptance_out/cli/te-img.idx\n"
        << "test_labels = acceptance_out/cli/te-lab.idx\n"
        << "[model]\narch = mlp\n"
        << "[train]\nbatch_size = 30\nmax_iterations = 25\n"
        << "[run]\nseed = 7\n";
  }
  const bool run1 = cli::run({"train", "--config", "acceptance_out/cli/run.cfg",
                              "--out", "acceptance_out/cli/a"}) == 0;
  const bool run2 = cli::run({"train", "--config", "acceptance_out/cli/run.cfg",
                              "--out", "acceptance_out/cli/b"}) == 0;
  const bool cli_ok =
      run1 && run2 &&
      slurp("acceptance_out/cli/a/baseline.pnn") ==
          slurp("acceptance_out/cli/b/baseline.pnn") &&
      slurp("acceptance_out/cli/a/train_metrics.txt") ==
          slurp("acceptance_out/cli/b/train_metrics.txt") &&
      slurp("acceptance_out/cli/a/train_trace.tsv") ==
          slurp("acceptance_out/cli/b/train_trace.tsv");

  report("AC-9", rt_ok && idx_ok && cli_ok,
         std::string("checkpoint round-trip bit-exact=") +
             (rt_ok ? "yes" : "no") + "; crafted idx parse=" +
             (idx_ok ? "yes" : "no") + "; repeated command byte-identical=" +
             (cli_ok ? "yes" : "no"));
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  Fixture* fx = load_fixture();
  std::printf("fixture: %s (%zu train / %zu test / %zu ood)\n\n",
              fx->source.c_str(), fx->train.size(), fx->test.size(),
              fx->ood.size());

  criterion("AC-1", [] { ac1(); });
  criterion("AC-2", [] { ac2(); });
  criterion("AC-3", [&] { ac3(*fx); });
  criterion("AC-4", [&] { ac4(*fx); });
  criterion("AC-5", [&] { ac5(*fx); });
  criterion("AC-6", [&] { ac6(*fx); });
  criterion("AC-7", [&] { ac7(*fx); });
  criterion("AC-8", [&] { ac8(*fx); });
  criterion("AC-9", [&] { ac9(*fx); });

  if (g_failures == 0)
    std::printf("\nall acceptance criteria passed\n");
  else
    std::printf("\n%d criterion(s) FAILED\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
