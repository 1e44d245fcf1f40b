#pragma once

#include <cstddef>
#include <vector>

namespace pnn {

/// Softmax outputs of n siblings for one input, n x c row-major.
struct SiblingSoftmax {
  std::size_t n = 0;
  std::size_t c = 0;
  std::vector<double> probs;

  double at(std::size_t row, std::size_t k) const { return probs[row * c + k]; }

  static SiblingSoftmax from_rows(const std::vector<std::vector<double>>& rows);
};

/// Per-class mean (alpha), per-class population standard deviation (beta)
/// and the scalar measure of agreement M.
struct AgreementStats {
  std::vector<double> alpha;
  std::vector<double> beta;
  double M = 0;
};

/// Measure of agreement:
///   M = 1 / (sum_k beta_k^2/alpha_k + eps) + 1 / (sum_k -alpha_k ln alpha_k + eps)
/// The first term is the inverse total index of dispersion across siblings,
/// the second the inverse entropy of the mean scores. Classes with
/// alpha_k = 0 contribute nothing to either sum. Low M flags disagreement.
AgreementStats measure_M(const SiblingSoftmax& s, double eps_stab = 1e-12);

/// Entropy of the mean softmax scores, -sum_k alpha_k ln alpha_k.
double entropy_score(const SiblingSoftmax& s);

/// Largest mean softmax score, max_k alpha_k.
double max_avg_softmax_score(const SiblingSoftmax& s);

/// Sum over siblings of KL(row_j || alpha), natural log.
double ensemble_kl_score(const SiblingSoftmax& s);

enum class OodVerdict { id, ood };

/// OOD iff M < delta; a tie counts as ID.
OodVerdict classify_ood(double M, double delta);

}  // namespace pnn
