#include "pnn/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "pnn/agreement.hpp"
#include "pnn/config.hpp"
#include "pnn/data_io.hpp"
#include "pnn/diagnostics.hpp"
#include "pnn/network.hpp"
#include "pnn/ood_metrics.hpp"
#include "pnn/optimizer.hpp"
#include "pnn/perturb.hpp"
#include "pnn/trust_intervals.hpp"

namespace pnn::cli {

namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << content;
  if (!out) throw std::runtime_error(path + ": write failed");
}

void write_json(const std::string& path, const ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

/// "key = value" lines in insertion order.
class MetricsFile {
 public:
  void add(const std::string& key, double value) {
    lines_.push_back(key + " = " + fmt(value));
  }
  void add(const std::string& key, const std::string& value) {
    lines_.push_back(key + " = " + value);
  }
  void save(const std::string& path) const {
    std::string text;
    for (const auto& l : lines_) text += l + "\n";
    write_text(path, text);
  }

 private:
  std::vector<std::string> lines_;
};

NetworkSpec arch_spec(const std::string& arch) {
  if (arch == "c1") return NetworkSpec::c1();
  if (arch == "c1_small") return NetworkSpec::c1_small();
  if (arch == "mlp") return NetworkSpec::mlp(784, {64, 10});
  throw std::invalid_argument("unknown arch '" + arch + "'");
}

/// The mlp arch consumes flat vectors; image datasets get flattened.
template <class S>
Dataset<S> adapt_for_arch(Dataset<S> d, const NetworkSpec& spec) {
  if (spec.input_shape.size() == 1 && d.images.ndim() != 2) {
    const std::size_t n = d.images.dim(0);
    d.images = Tensor<S>::from_span({n, d.images.size() / n},
                                    d.images.values());
  }
  return d;
}

template <class S>
Dataset<S> load_required(const RunConfig& cfg, const std::string& images,
                         const std::string& labels, const char* which) {
  if (images.empty())
    throw std::invalid_argument(std::string("config: missing [dataset] ") +
                                which + " path");
  return adapt_for_arch(load_idx_dataset<S>(images, labels),
                        arch_spec(cfg.arch));
}

template <class S>
void save_params(const std::string& path, const RunConfig& cfg,
                 const Network<S>& net, std::span<const S> mu,
                 std::span<const S> rho, const std::string& phase) {
  CheckpointContainer c;
  c.set("arch", net.spec().name);
  c.set("seed", std::to_string(cfg.seed));
  c.set("precision", cfg.precision);
  c.set("phase", phase);
  c.set("param_count", std::to_string(net.param_count()));
  c.add_array<S>("mu", mu);
  if (!rho.empty()) c.add_array<S>("rho", rho);
  save_checkpoint(c, path);
}

template <class S>
CheckpointContainer load_params(const std::string& path, const RunConfig& cfg,
                                const Network<S>& net,
                                bool want_rho) {
  CheckpointContainer c = load_checkpoint(path);
  const auto arch = c.get("arch");
  if (!arch || *arch != cfg.arch)
    throw std::runtime_error(path + ": checkpoint arch '" +
                             arch.value_or("<none>") +
                             "' does not match configured arch '" + cfg.arch +
                             "'");
  if (!c.has_array("mu") || c.array("mu").data.size() != net.param_count())
    throw std::runtime_error(path + ": mu array missing or wrong length");
  if (want_rho &&
      (!c.has_array("rho") || c.array("rho").data.size() != net.param_count()))
    throw std::runtime_error(path + ": rho array missing or wrong length " +
                             "(not a fitted PNN checkpoint?)");
  return c;
}

// ---------------------------------------------------------------------------
// Scoring helpers shared by eval-ood / attack / corrupt
// ---------------------------------------------------------------------------

/// Per-input scores for one scorer over one image set, oriented so that
/// higher = more ID-like.
template <class S>
struct ScorerOutputs {
  std::vector<std::string> names;
  std::vector<std::vector<double>> id_scores;
  std::vector<std::vector<double>> ood_scores;
  std::vector<double> m_id, m_ood;  // raw M values for histograms
};

template <class S>
std::vector<double> scores_from_probs(const std::vector<Tensor<S>>& mats,
                                      const std::string& kind,
                                      double eps_stab) {
  const std::size_t n_items = mats[0].dim(0);
  const std::size_t c = mats[0].dim(1);
  std::vector<double> out(n_items);
  SiblingSoftmax ss;
  ss.n = mats.size();
  ss.c = c;
  ss.probs.resize(ss.n * c);
  for (std::size_t i = 0; i < n_items; ++i) {
    for (std::size_t j = 0; j < ss.n; ++j)
      for (std::size_t k = 0; k < c; ++k)
        ss.probs[j * c + k] = static_cast<double>(mats[j].values()[i * c + k]);
    if (kind == "m")
      out[i] = measure_M(ss, eps_stab).M;
    else if (kind == "entropy")
      out[i] = -entropy_score(ss);  // high entropy = OOD-like
    else if (kind == "maxavg")
      out[i] = max_avg_softmax_score(ss);
    else if (kind == "kl")
      out[i] = -ensemble_kl_score(ss);  // high divergence = OOD-like
    else
      throw std::invalid_argument("unknown sibling scorer '" + kind + "'");
  }
  return out;
}

template <class S>
std::vector<double> point_estimate_max_softmax(const Network<S>& net,
                                               std::span<const S> mu,
                                               const Tensor<S>& images,
                                               std::size_t batch_size) {
  const std::size_t n = images.dim(0), c = net.num_classes();
  std::vector<double> out(n);
  const std::size_t item = images.size() / n;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    Shape bs = images.shape();
    bs[0] = count;
    Tensor<S> batch = Tensor<S>::from_span(
        std::move(bs), images.values().subspan(start * item, count * item));
    Tensor<S> probs = net.predict_probs(mu, batch);
    auto pv = probs.values();
    for (std::size_t i = 0; i < count; ++i) {
      double best = 0;
      for (std::size_t k = 0; k < c; ++k)
        best = std::max(best, static_cast<double>(pv[i * c + k]));
      out[start + i] = best;
    }
  }
  return out;
}

/// odin_scores over the set in chunks to bound tape memory.
template <class S>
std::vector<double> odin_scores_batched(const Network<S>& net,
                                        std::span<const S> mu,
                                        const Tensor<S>& images, double t,
                                        double eps, std::size_t batch_size) {
  const std::size_t n = images.dim(0);
  const std::size_t item = images.size() / n;
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    Shape bs = images.shape();
    bs[0] = count;
    Tensor<S> batch = Tensor<S>::from_span(
        std::move(bs), images.values().subspan(start * item, count * item));
    const std::vector<double> chunk = odin_scores(net, mu, batch, t, eps);
    out.insert(out.end(), chunk.begin(), chunk.end());
  }
  return out;
}

/// Siblings drawn at a fixed noise scale instead of the fitted intervals.
template <class S>
std::vector<Tensor<S>> fixed_scale_prob_matrices(const Network<S>& net,
                                                 std::span<const S> mu,
                                                 const Tensor<S>& images,
                                                 std::size_t n_siblings,
                                                 double scale, Rng& rng,
                                                 std::size_t batch_size) {
  TrustIntervalParams<S> tip;
  tip.mu.assign(mu.begin(), mu.end());
  // rho chosen so softplus(rho) == scale
  const double rho = scale > 1e-30 ? std::log(std::expm1(scale)) : -90.0;
  tip.rho.assign(mu.size(), static_cast<S>(rho));
  return sibling_prob_matrices(net, tip, images, n_siblings, rng, {},
                               batch_size);
}

struct NamedScores {
  std::string name;
  std::vector<double> id, ood;
};

template <class S>
std::vector<NamedScores> compute_all_scores(
    const RunConfig& cfg, const Network<S>& net, const TrustIntervalParams<S>& tip,
    const Tensor<S>& id_images, const Tensor<S>& ood_images,
    std::vector<double>* m_id_raw = nullptr,
    std::vector<double>* m_ood_raw = nullptr) {
  std::vector<NamedScores> out;
  const std::size_t bs = cfg.eval_batch_size;

  bool want_sibling_scores = false;
  for (const auto& s : cfg.scorers)
    want_sibling_scores |= (s == "m" || s == "entropy" || s == "maxavg" ||
                            s == "kl");

  if (want_sibling_scores) {
    Rng rng_id = Rng::stream(cfg.seed, "sibling_eps");
    auto id_mats = sibling_prob_matrices(net, tip, id_images,
                                         cfg.eval_siblings, rng_id, {}, bs);
    Rng rng_ood = Rng::stream(cfg.seed, "sibling_eps");
    auto ood_mats = sibling_prob_matrices(net, tip, ood_images,
                                          cfg.eval_siblings, rng_ood, {}, bs);
    for (const auto& s : cfg.scorers) {
      if (s != "m" && s != "entropy" && s != "maxavg" && s != "kl") continue;
      NamedScores ns;
      ns.name = s;
      ns.id = scores_from_probs<S>(id_mats, s, cfg.eps_stab);
      ns.ood = scores_from_probs<S>(ood_mats, s, cfg.eps_stab);
      if (s == "m") {
        if (m_id_raw) *m_id_raw = ns.id;
        if (m_ood_raw) *m_ood_raw = ns.ood;
      }
      out.push_back(std::move(ns));
    }
  }

  for (const auto& s : cfg.scorers) {
    if (s == "baseline") {
      NamedScores ns;
      ns.name = "baseline";
      ns.id = point_estimate_max_softmax(net, std::span<const S>(tip.mu),
                                         id_images, bs);
      ns.ood = point_estimate_max_softmax(net, std::span<const S>(tip.mu),
                                          ood_images, bs);
      out.push_back(std::move(ns));
    } else if (s == "odin") {
      for (double t : cfg.odin_temperatures)
        for (double e : cfg.odin_eps) {
          NamedScores ns;
          ns.name = "odin_T" + fmt(t, "%g") + "_e" + fmt(e, "%g");
          ns.id = odin_scores_batched(net, std::span<const S>(tip.mu),
                                      id_images, t, e, bs);
          ns.ood = odin_scores_batched(net, std::span<const S>(tip.mu),
                                       ood_images, t, e, bs);
          out.push_back(std::move(ns));
        }
    } else if (s == "fixed") {
      Rng rng_id = Rng::stream(cfg.seed, "corruption");
      auto id_mats = fixed_scale_prob_matrices(
          net, std::span<const S>(tip.mu), id_images, cfg.eval_siblings,
          cfg.fixed_scale, rng_id, bs);
      Rng rng_ood = Rng::stream(cfg.seed, "corruption");
      auto ood_mats = fixed_scale_prob_matrices(
          net, std::span<const S>(tip.mu), ood_images, cfg.eval_siblings,
          cfg.fixed_scale, rng_ood, bs);
      NamedScores ns;
      ns.name = "fixed_perturbation";
      ns.id = scores_from_probs<S>(id_mats, "m", cfg.eps_stab);
      ns.ood = scores_from_probs<S>(ood_mats, "m", cfg.eps_stab);
      out.push_back(std::move(ns));
    }
  }
  return out;
}

void write_histogram(const std::string& path, const Histogram& h) {
  std::string text = "bin_lo\tbin_hi\tcount\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    text += fmt(h.edges[i], "%.17g") + "\t" + fmt(h.edges[i + 1], "%.17g") +
            "\t" + std::to_string(h.counts[i]) + "\n";
  write_text(path, text);
}

PositiveClass positive_of(const RunConfig& cfg) {
  return cfg.metrics_positive == "ood" ? PositiveClass::ood
                                       : PositiveClass::id;
}

// ---------------------------------------------------------------------------
// Verbs
// ---------------------------------------------------------------------------

template <class S>
int cmd_train(const RunConfig& cfg) {
  Dataset<S> train =
      load_required<S>(cfg, cfg.train_images, cfg.train_labels, "train_images");
  Dataset<S> test =
      load_required<S>(cfg, cfg.test_images, cfg.test_labels, "test_images");
  fs::create_directories(cfg.out_dir);

  // hold out the tail of the training set for early stopping
  const std::size_t holdout_n = std::max<std::size_t>(1, train.size() / 10);
  Dataset<S> fit_split = train.subset(0, train.size() - holdout_n);
  Dataset<S> holdout = train.subset(train.size() - holdout_n, holdout_n);

  auto [net, params] = Network<S>::build(arch_spec(cfg.arch), cfg.seed);
  TrainTrace trace = train_baseline(net, params, fit_split, holdout, cfg.train);
  const double test_acc =
      evaluate_accuracy(net, std::span<const S>(params.flat), test,
                        cfg.train.batch_size);

  save_params<S>(cfg.out_dir + "/baseline.pnn", cfg, net, params.flat, {},
                 "baseline");

  std::string tsv = "iter\tloss\n";
  for (std::size_t i = 0; i < trace.loss.size(); ++i)
    tsv += std::to_string(i + 1) + "\t" + fmt(trace.loss[i], "%.17g") + "\n";
  write_text(cfg.out_dir + "/train_trace.tsv", tsv);

  std::string evals = "iter\tholdout_accuracy\n";
  for (const auto& [it, acc] : trace.evals)
    evals += std::to_string(it) + "\t" + fmt(acc, "%.17g") + "\n";
  write_text(cfg.out_dir + "/train_evals.tsv", evals);

  MetricsFile m;
  m.add("iterations", static_cast<double>(trace.iterations));
  m.add("final_loss", trace.loss.empty() ? 0.0 : trace.loss.back());
  m.add("test_accuracy", test_acc);
  m.save(cfg.out_dir + "/train_metrics.txt");
  std::cout << "train: test_accuracy=" << fmt(test_acc) << " ("
            << trace.iterations << " iterations)\n";
  return 0;
}

template <class S>
int cmd_pnn_fit(const RunConfig& cfg, const std::string& baseline_path) {
  Dataset<S> train =
      load_required<S>(cfg, cfg.train_images, cfg.train_labels, "train_images");
  Dataset<S> test =
      load_required<S>(cfg, cfg.test_images, cfg.test_labels, "test_images");
  fs::create_directories(cfg.out_dir);

  auto [net, params] = Network<S>::build(arch_spec(cfg.arch), cfg.seed);
  CheckpointContainer base = load_params<S>(baseline_path, cfg, net, false);
  params.flat = base.array_as<S>("mu");

  PnnConfig pnn_cfg = cfg.pnn;
  pnn_cfg.seed = cfg.seed;
  TrustIntervalParams<S> tip = init_pnn(params, cfg.seed);
  PnnFitTrace<S> trace = fit_pnn(net, tip, train, pnn_cfg);

  const double mu_acc = evaluate_accuracy(
      net, std::span<const S>(tip.mu), test, cfg.eval_batch_size);
  Rng rng = Rng::stream(cfg.seed, "sibling_eps");
  std::vector<S> sibling = sample_sibling(tip, rng);
  const double sibling_acc = evaluate_accuracy(
      net, std::span<const S>(sibling), test, cfg.eval_batch_size);

  save_params<S>(cfg.out_dir + "/pnn.pnn", cfg, net, tip.mu, tip.rho, "pnn");

  std::string tsv = "iter\tnll\ts2\treg\ttotal\n";
  for (std::size_t i = 0; i < trace.per_iteration.size(); ++i) {
    const auto& p = trace.per_iteration[i];
    tsv += std::to_string(i + 1) + "\t" + fmt(p.nll, "%.17g") + "\t" +
           fmt(p.s2, "%.17g") + "\t" + fmt(p.reg, "%.17g") + "\t" +
           fmt(p.total, "%.17g") + "\n";
  }
  write_text(cfg.out_dir + "/pnn_trace.tsv", tsv);

  std::string sig = "iter\tmedian_sigma\n";
  for (const auto& [it, med] : trace.median_sigma)
    sig += std::to_string(it) + "\t" + fmt(med, "%.17g") + "\n";
  write_text(cfg.out_dir + "/pnn_sigma.tsv", sig);

  MetricsFile m;
  m.add("iterations", static_cast<double>(trace.iterations));
  m.add("stop_reason", trace.stop_reason);
  m.add("point_estimate_test_accuracy", mu_acc);
  m.add("single_sibling_test_accuracy", sibling_acc);
  m.add("final_median_sigma", trace.median_sigma.back().second);
  m.save(cfg.out_dir + "/pnn_metrics.txt");
  std::cout << "pnn-fit: " << trace.iterations << " iterations ("
            << trace.stop_reason
            << "), sibling test accuracy=" << fmt(sibling_acc) << "\n";
  return 0;
}

template <class S>
int cmd_eval_ood(const RunConfig& cfg, const std::string& pnn_path) {
  Dataset<S> id_set =
      load_required<S>(cfg, cfg.test_images, cfg.test_labels, "test_images");
  Dataset<S> ood_set =
      load_required<S>(cfg, cfg.ood_images, cfg.ood_labels, "ood_images");
  if (id_set.size() == 0 || ood_set.size() == 0)
    throw std::invalid_argument("eval-ood: empty evaluation set");
  fs::create_directories(cfg.out_dir);

  auto [net, params] = Network<S>::build(arch_spec(cfg.arch), cfg.seed);
  CheckpointContainer ckpt = load_params<S>(pnn_path, cfg, net, true);
  TrustIntervalParams<S> tip;
  tip.mu = ckpt.array_as<S>("mu");
  tip.rho = ckpt.array_as<S>("rho");

  std::vector<double> m_id, m_ood;
  auto scored = compute_all_scores<S>(cfg, net, tip, id_set.images,
                                      ood_set.images, &m_id, &m_ood);

  ordered_json report;
  MetricsFile metrics;
  for (const auto& ns : scored) {
    ScoreSet set{ns.id, ns.ood};
    DetectionReport r = detection_report(set, positive_of(cfg), cfg.tpr_target);
    report[ns.name] = {{"auroc", r.auroc},
                       {"aupr", r.aupr},
                       {"fpr_at_95tpr", r.fpr_at_95tpr}};
    metrics.add(ns.name + ".auroc", r.auroc);
    metrics.add(ns.name + ".aupr", r.aupr);
    metrics.add(ns.name + ".fpr_at_95tpr", r.fpr_at_95tpr);
    save_score_dump(cfg.out_dir + "/scores_" + ns.name + ".tsv", set);
  }
  if (!m_id.empty()) {
    write_histogram(cfg.out_dir + "/hist_logm_id.tsv",
                    histogram_log_M(m_id, cfg.histogram_bins));
    write_histogram(cfg.out_dir + "/hist_logm_ood.tsv",
                    histogram_log_M(m_ood, cfg.histogram_bins));
  }
  write_json(cfg.out_dir + "/report.json", report);
  metrics.save(cfg.out_dir + "/eval_metrics.txt");
  std::cout << "eval-ood: " << scored.size() << " scorers over "
            << id_set.size() << " id / " << ood_set.size() << " ood inputs\n";
  return 0;
}

template <class S>
int cmd_diagnose(const RunConfig& cfg, const std::string& pnn_path) {
  Dataset<S> id_set =
      load_required<S>(cfg, cfg.test_images, cfg.test_labels, "test_images");
  Dataset<S> ood_set =
      load_required<S>(cfg, cfg.ood_images, cfg.ood_labels, "ood_images");
  fs::create_directories(cfg.out_dir);

  auto [net, params] = Network<S>::build(arch_spec(cfg.arch), cfg.seed);
  CheckpointContainer ckpt = load_params<S>(pnn_path, cfg, net, true);
  TrustIntervalParams<S> tip;
  tip.mu = ckpt.array_as<S>("mu");
  tip.rho = ckpt.array_as<S>("rho");
  const std::vector<S> sigma = tip.sigma();

  Rng eps_rng = Rng::stream(cfg.seed, "sibling_eps");
  const std::size_t n_id = std::min(cfg.diagnose_samples, id_set.size());
  const std::size_t n_ood = std::min(cfg.diagnose_samples, ood_set.size());

  auto predicted_labels = [&](const Tensor<S>& images) {
    Tensor<S> logits = net.forward_values(std::span<const S>(tip.mu), images);
    const std::size_t c = net.num_classes();
    std::vector<int> out(images.dim(0));
    auto lv = logits.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k)
        if (lv[i * c + k] > lv[i * c + best]) best = k;
      out[i] = static_cast<int>(best);
    }
    return out;
  };

  std::vector<DeltaErrorRecord<S>> records;
  auto run_side = [&](const Dataset<S>& set, std::size_t count, bool is_id) {
    std::vector<int> labels = set.labels;
    if (labels.empty()) {
      labels = predicted_labels(set.images);  // unlabeled OOD fallback
    }
    for (std::size_t i = 0; i < count; ++i) {
      Dataset<S> one = set.subset(i, 1);
      const std::vector<int> y = {labels[i]};
      std::vector<S> delta(tip.mu.size());
      for (std::size_t k = 0; k < delta.size(); ++k)
        delta[k] = sigma[k] * static_cast<S>(eps_rng.normal());
      DeltaErrorRecord<S> rec;
      rec.is_id = is_id;
      rec.exact = delta_error_exact(net, std::span<const S>(tip.mu),
                                    std::span<const S>(delta), one.images, y);
      rec.quad = delta_error_quadratic(net, std::span<const S>(tip.mu),
                                       std::span<const S>(delta), one.images,
                                       y);
      auto [lo, hi] = delta_error_bounds(net, std::span<const S>(tip.mu),
                                         std::span<const S>(delta), one.images,
                                         y, cfg.t_grid_size);
      rec.lower_bound = lo;
      rec.upper_bound = hi;
      records.push_back(rec);
    }
  };
  run_side(id_set, n_id, true);
  run_side(ood_set, n_ood, false);

  std::string tsv = "exact\tquad\tlower\tupper\tset\n";
  for (const auto& r : records)
    tsv += fmt(r.exact, "%.17g") + "\t" + fmt(r.quad, "%.17g") + "\t" +
           fmt(r.lower_bound, "%.17g") + "\t" + fmt(r.upper_bound, "%.17g") +
           "\t" + (r.is_id ? "id" : "ood") + "\n";
  write_text(cfg.out_dir + "/delta_error.tsv", tsv);

  auto median_abs_quad = [&](bool id_side) {
    std::vector<double> v;
    for (const auto& r : records)
      if (r.is_id == id_side) v.push_back(std::abs(r.quad));
    std::sort(v.begin(), v.end());
    return v.empty() ? 0.0 : v[v.size() / 2];
  };

  SiblingCountStudy<S> study = sibling_count_study(
      net, tip, id_set.images, ood_set.images, cfg.sibling_counts, cfg.seed);
  std::string stsv = "siblings\tmedian_id_log10m\tmedian_ood_log10m\n";
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.empty() ? 0.0 : v[v.size() / 2];
  };
  for (std::size_t i = 0; i < study.counts.size(); ++i)
    stsv += std::to_string(study.counts[i]) + "\t" +
            fmt(median(study.id_log_m[i]), "%.17g") + "\t" +
            fmt(median(study.ood_log_m[i]), "%.17g") + "\n";
  write_text(cfg.out_dir + "/sibling_study.tsv", stsv);

  const double med_id = median_abs_quad(true);
  const double med_ood = median_abs_quad(false);
  ordered_json j;
  j["median_abs_quad_id"] = med_id;
  j["median_abs_quad_ood"] = med_ood;
  j["samples_id"] = n_id;
  j["samples_ood"] = n_ood;
  j["t_grid_size"] = cfg.t_grid_size;
  write_json(cfg.out_dir + "/diagnose.json", j);
  std::cout << "diagnose: |dE_quad| medians id=" << fmt(med_id)
            << " ood=" << fmt(med_ood) << "\n";
  return 0;
}

template <class S>
int cmd_attack(const RunConfig& cfg, const std::string& pnn_path) {
  Dataset<S> id_set =
      load_required<S>(cfg, cfg.test_images, cfg.test_labels, "test_images");
  fs::create_directories(cfg.out_dir);

  auto [net, params] = Network<S>::build(arch_spec(cfg.arch), cfg.seed);
  CheckpointContainer ckpt = load_params<S>(pnn_path, cfg, net, true);
  TrustIntervalParams<S> tip;
  tip.mu = ckpt.array_as<S>("mu");
  tip.rho = ckpt.array_as<S>("rho");

  auto m_scores_of = [&](const Tensor<S>& images) {
    Rng rng = Rng::stream(cfg.seed, "sibling_eps");
    auto mats = sibling_prob_matrices(net, tip, images, cfg.eval_siblings, rng,
                                      {}, cfg.eval_batch_size);
    return scores_from_probs<S>(mats, "m", cfg.eps_stab);
  };

  const std::vector<double> clean = m_scores_of(id_set.images);
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  auto log10_all = [](std::vector<double> v) {
    for (double& x : v) x = std::log10(x);
    return v;
  };

  ordered_json report;
  report["clean_median_log10_m"] = median(log10_all(clean));
  ordered_json sweep = ordered_json::array();
  for (double eps : cfg.attack_epsilons) {
    AttackConfig acfg{eps, cfg.attack_clip_lo, cfg.attack_clip_hi};
    Tensor<S> adv = fgsm(net, std::span<const S>(tip.mu), id_set.images,
                         id_set.labels, acfg);
    const std::vector<double> scores = m_scores_of(adv);
    ScoreSet set{clean, scores};
    DetectionReport r = detection_report(set, positive_of(cfg), cfg.tpr_target);
    ordered_json entry;
    entry["epsilon"] = eps;
    entry["median_log10_m"] = median(log10_all(scores));
    entry["auroc"] = r.auroc;
    entry["aupr"] = r.aupr;
    entry["fpr_at_95tpr"] = r.fpr_at_95tpr;
    sweep.push_back(entry);
    save_score_dump(cfg.out_dir + "/scores_fgsm_e" + fmt(eps, "%g") + ".tsv",
                    set);
  }
  report["fgsm"] = sweep;
  write_json(cfg.out_dir + "/attack_report.json", report);
  std::cout << "attack: " << cfg.attack_epsilons.size() << " epsilon values\n";
  return 0;
}

template <class S>
int cmd_corrupt(const RunConfig& cfg, const std::string& pnn_path) {
  Dataset<S> id_set =
      load_required<S>(cfg, cfg.test_images, cfg.test_labels, "test_images");
  fs::create_directories(cfg.out_dir);

  auto [net, params] = Network<S>::build(arch_spec(cfg.arch), cfg.seed);
  CheckpointContainer ckpt = load_params<S>(pnn_path, cfg, net, true);
  TrustIntervalParams<S> tip;
  tip.mu = ckpt.array_as<S>("mu");
  tip.rho = ckpt.array_as<S>("rho");

  CorruptionConfig ccfg;
  ccfg.kind = cfg.corrupt_kind == "speckle" ? CorruptionKind::speckle
                                            : CorruptionKind::gaussian;
  ccfg.severity = cfg.corrupt_severity;
  ccfg.clip_lo = cfg.corrupt_clip_lo;
  ccfg.clip_hi = cfg.corrupt_clip_hi;
  Rng noise_rng = Rng::stream(cfg.seed, "corruption");
  Tensor<S> noisy = corrupt(id_set.images, ccfg, noise_rng);

  auto m_scores_of = [&](const Tensor<S>& images) {
    Rng rng = Rng::stream(cfg.seed, "sibling_eps");
    auto mats = sibling_prob_matrices(net, tip, images, cfg.eval_siblings, rng,
                                      {}, cfg.eval_batch_size);
    return scores_from_probs<S>(mats, "m", cfg.eps_stab);
  };
  const std::vector<double> clean = m_scores_of(id_set.images);
  const std::vector<double> corrupted = m_scores_of(noisy);

  ScoreSet set{clean, corrupted};
  DetectionReport r = detection_report(set, positive_of(cfg), cfg.tpr_target);
  ordered_json j;
  j["kind"] = cfg.corrupt_kind;
  j["severity"] = cfg.corrupt_severity;
  j["auroc"] = r.auroc;
  j["aupr"] = r.aupr;
  j["fpr_at_95tpr"] = r.fpr_at_95tpr;
  write_json(cfg.out_dir + "/corrupt_report.json", j);
  save_score_dump(cfg.out_dir + "/scores_corrupt.tsv", set);
  std::cout << "corrupt: " << cfg.corrupt_kind << " severity "
            << fmt(cfg.corrupt_severity) << " auroc=" << fmt(r.auroc) << "\n";
  return 0;
}

int cmd_report(const RunConfig& cfg, const std::string& scores_path) {
  fs::create_directories(cfg.out_dir);
  ScoreSet set = load_score_dump(scores_path);
  DetectionReport r = detection_report(set, positive_of(cfg), cfg.tpr_target);
  MetricsFile m;
  m.add("auroc", r.auroc);
  m.add("aupr", r.aupr);
  m.add("fpr_at_95tpr", r.fpr_at_95tpr);
  m.save(cfg.out_dir + "/report_metrics.txt");
  ordered_json j;
  j["auroc"] = r.auroc;
  j["aupr"] = r.aupr;
  j["fpr_at_95tpr"] = r.fpr_at_95tpr;
  write_json(cfg.out_dir + "/report.json", j);
  std::cout << "report: auroc=" << fmt(r.auroc) << " aupr=" << fmt(r.aupr)
            << " fpr_at_95tpr=" << fmt(r.fpr_at_95tpr) << "\n";
  return 0;
}

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> precision;
  std::optional<std::size_t> siblings;
  std::optional<std::string> arch;

  void attach(CLI::App* sub, bool config_required = true) {
    auto* opt = sub->add_option("--config", config_path,
                                "run configuration file");
    if (config_required) opt->required();
    sub->add_option("--seed", seed, "override [run] seed");
    sub->add_option("--out", out, "override [run] out_dir");
    sub->add_option("--precision", precision, "narrow or wide")
        ->check(CLI::IsMember({"narrow", "wide"}));
    sub->add_option("--siblings", siblings, "override sibling count");
    sub->add_option("--arch", arch, "override [model] arch");
  }

  RunConfig load() const {
    RunConfig cfg = config_path.empty() ? RunConfig{}
                                        : RunConfig::parse_file(config_path);
    if (seed) cfg.seed = *seed;
    if (out) cfg.out_dir = *out;
    if (precision) cfg.precision = *precision;
    if (siblings) {
      cfg.eval_siblings = *siblings;
      cfg.pnn.n_train_samples = *siblings;
    }
    if (arch) cfg.arch = *arch;
    cfg.validate();
    return cfg;
  }
};

template <class F>
int dispatch_precision(const RunConfig& cfg, F&& f) {
  if (cfg.precision == "wide") return f(double{});
  return f(float{});
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"perturbed neural networks: trust-interval fitting and "
               "out-of-distribution detection"};
  app.require_subcommand(1);

  CommonFlags train_flags, fit_flags, eval_flags, diag_flags, attack_flags,
      corrupt_flags, report_flags;
  std::string baseline_path, pnn_path, scores_path;

  auto* train = app.add_subcommand("train", "train the point-estimate baseline");
  train_flags.attach(train);

  auto* fit = app.add_subcommand("pnn-fit", "fit trust intervals on a trained baseline");
  fit_flags.attach(fit);
  fit->add_option("--baseline", baseline_path, "baseline checkpoint")->required();

  auto* evalood = app.add_subcommand("eval-ood", "score id vs ood sets and report metrics");
  eval_flags.attach(evalood);
  evalood->add_option("--pnn", pnn_path, "fitted PNN checkpoint")->required();

  auto* diag = app.add_subcommand("diagnose", "loss-change diagnostics and sibling study");
  diag_flags.attach(diag);
  diag->add_option("--pnn", pnn_path, "fitted PNN checkpoint")->required();

  auto* attack = app.add_subcommand("attack", "FGSM sweep scored by the fitted PNN");
  attack_flags.attach(attack);
  attack->add_option("--pnn", pnn_path, "fitted PNN checkpoint")->required();

  auto* corrupt = app.add_subcommand("corrupt", "noise-corruption scoring");
  corrupt_flags.attach(corrupt);
  corrupt->add_option("--pnn", pnn_path, "fitted PNN checkpoint")->required();

  auto* report = app.add_subcommand("report", "recompute metrics from a score dump");
  report_flags.attach(report, /*config_required=*/false);
  report->add_option("--scores", scores_path, "two-column score dump")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train->parsed()) {
      const RunConfig cfg = train_flags.load();
      return dispatch_precision(cfg, [&](auto tag) {
        return cmd_train<decltype(tag)>(cfg);
      });
    }
    if (fit->parsed()) {
      const RunConfig cfg = fit_flags.load();
      return dispatch_precision(cfg, [&](auto tag) {
        return cmd_pnn_fit<decltype(tag)>(cfg, baseline_path);
      });
    }
    if (evalood->parsed()) {
      const RunConfig cfg = eval_flags.load();
      return dispatch_precision(cfg, [&](auto tag) {
        return cmd_eval_ood<decltype(tag)>(cfg, pnn_path);
      });
    }
    if (diag->parsed()) {
      const RunConfig cfg = diag_flags.load();
      return dispatch_precision(cfg, [&](auto tag) {
        return cmd_diagnose<decltype(tag)>(cfg, pnn_path);
      });
    }
    if (attack->parsed()) {
      const RunConfig cfg = attack_flags.load();
      return dispatch_precision(cfg, [&](auto tag) {
        return cmd_attack<decltype(tag)>(cfg, pnn_path);
      });
    }
    if (corrupt->parsed()) {
      const RunConfig cfg = corrupt_flags.load();
      return dispatch_precision(cfg, [&](auto tag) {
        return cmd_corrupt<decltype(tag)>(cfg, pnn_path);
      });
    }
    if (report->parsed()) {
      return cmd_report(report_flags.load(), scores_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int run(const std::vector<std::string>& args_without_program) {
  std::vector<std::string> args = args_without_program;
  args.insert(args.begin(), "pnn");
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace pnn::cli
