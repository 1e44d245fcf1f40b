#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "pnn/agreement.hpp"
#include "pnn/data_io.hpp"
#include "pnn/diagnostics.hpp"
#include "pnn/network.hpp"
#include "pnn/ood_metrics.hpp"
#include "pnn/optimizer.hpp"
#include "pnn/perturb.hpp"
#include "pnn/synth.hpp"
#include "pnn/trust_intervals.hpp"

namespace py = pybind11;
using namespace pnn;

namespace {

using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> to_tensor(const Arr& a) {
  Shape shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.shape(i));
  std::vector<double> values(a.data(), a.data() + a.size());
  return Tensor<double>::from_values(std::move(shape), std::move(values));
}

Arr to_array(const Tensor<double>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Arr out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Arr vec_to_array(const std::vector<double>& v) {
  Arr out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

SiblingSoftmax sibling_matrix(const Arr& probs) {
  if (probs.ndim() != 2)
    throw std::invalid_argument("expected an (n_siblings, classes) matrix");
  SiblingSoftmax s;
  s.n = static_cast<std::size_t>(probs.shape(0));
  s.c = static_cast<std::size_t>(probs.shape(1));
  s.probs.assign(probs.data(), probs.data() + probs.size());
  return s;
}

ScoreSet score_set(const Arr& id_scores, const Arr& ood_scores) {
  ScoreSet s;
  s.id_scores.assign(id_scores.data(), id_scores.data() + id_scores.size());
  s.ood_scores.assign(ood_scores.data(), ood_scores.data() + ood_scores.size());
  return s;
}

/// Stateful double-precision pipeline: network + parameters + optional
/// fitted trust intervals.
class Model {
 public:
  Model(const std::string& arch, std::uint64_t seed) {
    NetworkSpec spec;
    if (arch == "c1")
      spec = NetworkSpec::c1();
    else if (arch == "c1_small")
      spec = NetworkSpec::c1_small();
    else if (arch == "mlp")
      spec = NetworkSpec::mlp(784, {64, 10});
    else
      throw std::invalid_argument("unknown arch '" + arch + "'");
    auto [net, params] = Network<double>::build(spec, seed);
    net_ = std::move(net);
    params_ = std::move(params);
  }

  std::size_t param_count() const { return net_.param_count(); }

  Arr params() const { return vec_to_array(params_.flat); }
  void set_params(const Arr& p) {
    if (static_cast<std::size_t>(p.size()) != net_.param_count())
      throw std::invalid_argument("wrong parameter count");
    params_.flat.assign(p.data(), p.data() + p.size());
  }

  Arr forward(const Arr& batch) const {
    return to_array(net_.forward_values(params_.flat, to_tensor(batch)));
  }

  Arr predict_probs(const Arr& batch) const {
    return to_array(net_.predict_probs(params_.flat, to_tensor(batch)));
  }

  py::dict train(const Arr& images, const std::vector<int>& labels,
                 std::size_t batch_size, std::size_t max_iterations, double lr,
                 std::uint64_t seed) {
    Dataset<double> data{to_tensor(images), labels};
    TrainConfig cfg;
    cfg.batch_size = batch_size;
    cfg.max_iterations = max_iterations;
    cfg.lr = lr;
    cfg.seed = seed;
    TrainTrace trace = train_baseline(net_, params_, data, Dataset<double>{},
                                      cfg);
    py::dict out;
    out["iterations"] = trace.iterations;
    out["final_loss"] = trace.loss.empty() ? 0.0 : trace.loss.back();
    return out;
  }

  double evaluate(const Arr& images, const std::vector<int>& labels) const {
    Dataset<double> data{to_tensor(images), labels};
    return evaluate_accuracy(net_, std::span<const double>(params_.flat), data);
  }

  void init_pnn_intervals(std::uint64_t seed) {
    tip_ = init_pnn(params_, seed);
  }

  py::dict fit_pnn_intervals(const Arr& images, const std::vector<int>& labels,
                             double pi1, double pi2, std::size_t siblings,
                             std::size_t batch_size, std::size_t max_iterations,
                             double lr, std::uint64_t seed,
                             std::size_t stop_window, double stop_tol) {
    require_tip();
    Dataset<double> data{to_tensor(images), labels};
    PnnConfig cfg;
    cfg.pi1 = pi1;
    cfg.pi2 = pi2;
    cfg.n_train_samples = siblings;
    cfg.batch_size = batch_size;
    cfg.max_iterations = max_iterations;
    cfg.lr = lr;
    cfg.seed = seed;
    cfg.stop_window = stop_window;
    cfg.stop_tol = stop_tol;
    PnnFitTrace<double> trace = fit_pnn(net_, *tip_, data, cfg);
    py::dict out;
    out["iterations"] = trace.iterations;
    out["stop_reason"] = trace.stop_reason;
    out["final_median_sigma"] = trace.median_sigma.back().second;
    return out;
  }

  Arr sigma() const {
    require_tip();
    return vec_to_array(tip_->sigma());
  }

  Arr sample_sibling_weights(std::uint64_t seed) const {
    require_tip();
    Rng rng = Rng::stream(seed, "sibling_eps");
    return vec_to_array(sample_sibling(*tip_, rng));
  }

  /// (n_siblings, n_items, classes) softmax stack from sampled siblings.
  Arr sibling_probs(const Arr& images, std::size_t n_siblings,
                    std::uint64_t seed) const {
    require_tip();
    Rng rng = Rng::stream(seed, "sibling_eps");
    auto mats = sibling_prob_matrices(net_, *tip_, to_tensor(images),
                                      n_siblings, rng);
    const std::size_t n_items = mats[0].dim(0), c = mats[0].dim(1);
    Arr out({static_cast<py::ssize_t>(n_siblings),
             static_cast<py::ssize_t>(n_items), static_cast<py::ssize_t>(c)});
    double* dst = out.mutable_data();
    for (std::size_t j = 0; j < n_siblings; ++j)
      for (std::size_t i = 0; i < n_items * c; ++i)
        *dst++ = mats[j].values()[i];
    return out;
  }

  Arr fgsm_attack(const Arr& images, const std::vector<int>& labels,
                  double epsilon) const {
    AttackConfig cfg;
    cfg.epsilon = epsilon;
    return to_array(
        fgsm(net_, std::span<const double>(params_.flat), to_tensor(images),
             labels, cfg));
  }

  Arr odin(const Arr& images, double temperature, double input_eps) const {
    return vec_to_array(odin_scores(net_,
                                    std::span<const double>(params_.flat),
                                    to_tensor(images), temperature, input_eps));
  }

 private:
  void require_tip() const {
    if (!tip_) throw std::runtime_error("call init_pnn first");
  }

  Network<double> net_;
  ParamStore<double> params_;
  std::optional<TrustIntervalParams<double>> tip_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "perturbed neural networks: trust intervals, agreement scoring "
            "and OOD detection metrics";

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("arch"),
           py::arg("seed") = 0)
      .def_property_readonly("param_count", &Model::param_count)
      .def("params", &Model::params)
      .def("set_params", &Model::set_params)
      .def("forward", &Model::forward)
      .def("predict_probs", &Model::predict_probs)
      .def("train", &Model::train, py::arg("images"), py::arg("labels"),
           py::arg("batch_size") = 64, py::arg("max_iterations") = 200,
           py::arg("lr") = 0.01, py::arg("seed") = 0)
      .def("evaluate", &Model::evaluate)
      .def("init_pnn", &Model::init_pnn_intervals, py::arg("seed") = 0)
      .def("fit_pnn", &Model::fit_pnn_intervals, py::arg("images"),
           py::arg("labels"), py::arg("pi1") = 1.0, py::arg("pi2") = 1e-7,
           py::arg("siblings") = 2, py::arg("batch_size") = 64,
           py::arg("max_iterations") = 200, py::arg("lr") = 0.01,
           py::arg("seed") = 0, py::arg("stop_window") = 50,
           py::arg("stop_tol") = 1e-4)
      .def("sigma", &Model::sigma)
      .def("sample_sibling", &Model::sample_sibling_weights, py::arg("seed") = 0)
      .def("sibling_probs", &Model::sibling_probs, py::arg("images"),
           py::arg("n_siblings") = 2, py::arg("seed") = 0)
      .def("fgsm", &Model::fgsm_attack, py::arg("images"), py::arg("labels"),
           py::arg("epsilon"))
      .def("odin", &Model::odin, py::arg("images"), py::arg("temperature"),
           py::arg("input_eps"));

  m.def("measure_m", [](const Arr& probs, double eps_stab) {
    AgreementStats st = measure_M(sibling_matrix(probs), eps_stab);
    py::dict out;
    out["M"] = st.M;
    out["alpha"] = vec_to_array(st.alpha);
    out["beta"] = vec_to_array(st.beta);
    return out;
  }, py::arg("probs"), py::arg("eps_stab") = 1e-12);

  m.def("entropy_score",
        [](const Arr& p) { return entropy_score(sibling_matrix(p)); });
  m.def("max_avg_softmax_score",
        [](const Arr& p) { return max_avg_softmax_score(sibling_matrix(p)); });
  m.def("ensemble_kl_score",
        [](const Arr& p) { return ensemble_kl_score(sibling_matrix(p)); });
  m.def("classify_ood", [](double m_value, double delta) {
    return classify_ood(m_value, delta) == OodVerdict::ood ? "ood" : "id";
  });

  m.def("auroc", [](const Arr& id_s, const Arr& ood_s) {
    return auroc(score_set(id_s, ood_s));
  });
  m.def("aupr", [](const Arr& id_s, const Arr& ood_s, const std::string& pos) {
    return aupr(score_set(id_s, ood_s),
                pos == "ood" ? PositiveClass::ood : PositiveClass::id);
  }, py::arg("id_scores"), py::arg("ood_scores"), py::arg("positive") = "id");
  m.def("fpr_at_tpr", [](const Arr& id_s, const Arr& ood_s, double target) {
    return fpr_at_tpr(score_set(id_s, ood_s), target);
  }, py::arg("id_scores"), py::arg("ood_scores"), py::arg("tpr_target") = 0.95);

  m.def("synth_digits", [](std::size_t n, std::uint64_t seed) {
    Dataset<double> d = to_dataset<double>(synth_digits(n, seed));
    return py::make_tuple(to_array(d.images), d.labels);
  }, py::arg("n"), py::arg("seed") = 0);
  m.def("synth_garments", [](std::size_t n, std::uint64_t seed) {
    Dataset<double> d = to_dataset<double>(synth_garments(n, seed));
    return py::make_tuple(to_array(d.images), d.labels);
  }, py::arg("n"), py::arg("seed") = 0);
  m.def("gaussian_images", [](std::size_t n, std::uint64_t seed) {
    return to_array(synthetic_gaussian_images<double>(n, {1, 28, 28}, seed));
  }, py::arg("n"), py::arg("seed") = 0);

  m.def("load_idx_images",
        [](const std::string& path) { return to_array(load_idx_images<double>(path)); });
  m.def("load_idx_labels", &load_idx_labels);
}
