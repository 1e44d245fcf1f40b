#pragma once

#include <string>
#include <vector>

namespace pnn {

/// Detection scores with the convention "higher = more ID-like".
struct ScoreSet {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
};

enum class PositiveClass { id, ood };

struct RocPoint {
  double threshold;
  double tpr;
  double fpr;
};

struct PrPoint {
  double threshold;
  double recall;
  double precision;
};

struct DetectionReport {
  double fpr_at_95tpr = 0;
  double aupr = 0;
  double auroc = 0;
  std::vector<RocPoint> roc_curve;
  std::vector<PrPoint> pr_curve;
};

/// Area under the ROC curve by trapezoidal integration over all distinct
/// thresholds; equals P(id > ood) + P(id == ood)/2 over all pairs.
double auroc(const ScoreSet& s);

/// Area under the precision-recall curve with step interpolation
/// (precision summed against recall increments).
double aupr(const ScoreSet& s, PositiveClass positive = PositiveClass::id);

/// False positive rate at the largest threshold that keeps
/// TPR >= tpr_target, with ID as the positive class (score >= threshold is
/// classified ID).
double fpr_at_tpr(const ScoreSet& s, double tpr_target = 0.95);

DetectionReport detection_report(const ScoreSet& s,
                                 PositiveClass aupr_positive = PositiveClass::id,
                                 double tpr_target = 0.95);

/// Two-column delimited dump: "<score>\t<id|ood>\n" per line, scores
/// rendered losslessly.
void save_score_dump(const std::string& path, const ScoreSet& s);
ScoreSet load_score_dump(const std::string& path);

}  // namespace pnn
