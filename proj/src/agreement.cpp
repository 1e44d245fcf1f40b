#include "pnn/agreement.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pnn {

namespace {

void validate(const SiblingSoftmax& s, std::size_t min_rows, const char* op) {
  if (s.n < min_rows)
    throw std::invalid_argument(std::string(op) + ": need at least " +
                                std::to_string(min_rows) + " siblings, have " +
                                std::to_string(s.n));
  if (s.probs.size() != s.n * s.c)
    throw std::invalid_argument(std::string(op) + ": bad matrix size");
  for (std::size_t i = 0; i < s.n; ++i) {
    double row_sum = 0;
    for (std::size_t k = 0; k < s.c; ++k) {
      const double p = s.at(i, k);
      if (p < -1e-9 || p > 1.0 + 1e-9)
        throw std::invalid_argument(std::string(op) +
                                    ": probability out of [0,1]");
      row_sum += p;
    }
    if (std::abs(row_sum - 1.0) > 1e-6)
      throw std::invalid_argument(std::string(op) + ": row " +
                                  std::to_string(i) + " sums to " +
                                  std::to_string(row_sum));
  }
}

std::vector<double> class_means(const SiblingSoftmax& s) {
  std::vector<double> alpha(s.c, 0.0);
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t k = 0; k < s.c; ++k) alpha[k] += s.at(i, k);
  for (double& a : alpha) a /= static_cast<double>(s.n);
  return alpha;
}

}  // namespace

SiblingSoftmax SiblingSoftmax::from_rows(
    const std::vector<std::vector<double>>& rows) {
  SiblingSoftmax s;
  s.n = rows.size();
  s.c = rows.empty() ? 0 : rows[0].size();
  s.probs.reserve(s.n * s.c);
  for (const auto& r : rows) {
    if (r.size() != s.c)
      throw std::invalid_argument("SiblingSoftmax: ragged rows");
    s.probs.insert(s.probs.end(), r.begin(), r.end());
  }
  return s;
}

AgreementStats measure_M(const SiblingSoftmax& s, double eps_stab) {
  validate(s, 2, "measure_M");
  if (eps_stab < 0)
    throw std::invalid_argument("measure_M: eps_stab must be >= 0");

  AgreementStats st;
  st.alpha = class_means(s);
  st.beta.assign(s.c, 0.0);
  for (std::size_t k = 0; k < s.c; ++k) {
    double var = 0;
    for (std::size_t i = 0; i < s.n; ++i) {
      const double d = s.at(i, k) - st.alpha[k];
      var += d * d;
    }
    st.beta[k] = std::sqrt(var / static_cast<double>(s.n));
  }

  double dispersion = 0, entropy = 0;
  for (std::size_t k = 0; k < s.c; ++k) {
    if (st.alpha[k] > 0) {
      dispersion += st.beta[k] * st.beta[k] / st.alpha[k];
      entropy -= st.alpha[k] * std::log(st.alpha[k]);
    }
  }
  st.M = 1.0 / (dispersion + eps_stab) + 1.0 / (entropy + eps_stab);
  if (!std::isfinite(st.M))
    throw std::runtime_error(
        "measure_M: non-finite result (use a positive eps_stab)");
  return st;
}

double entropy_score(const SiblingSoftmax& s) {
  validate(s, 1, "entropy_score");
  double entropy = 0;
  for (double a : class_means(s))
    if (a > 0) entropy -= a * std::log(a);
  return entropy;
}

double max_avg_softmax_score(const SiblingSoftmax& s) {
  validate(s, 1, "max_avg_softmax_score");
  double best = 0;
  for (double a : class_means(s)) best = std::max(best, a);
  return best;
}

double ensemble_kl_score(const SiblingSoftmax& s) {
  validate(s, 2, "ensemble_kl_score");
  const std::vector<double> alpha = class_means(s);
  double kl = 0;
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t k = 0; k < s.c; ++k) {
      const double p = s.at(i, k);
      if (p > 0) kl += p * std::log(p / alpha[k]);
    }
  return kl;
}

OodVerdict classify_ood(double M, double delta) {
  if (!std::isfinite(delta))
    throw std::invalid_argument("classify_ood: delta must be finite");
  return M < delta ? OodVerdict::ood : OodVerdict::id;
}

}  // namespace pnn
