#include "pnn/ood_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pnn {

namespace {

void validate(const ScoreSet& s, const char* op) {
  if (s.id_scores.empty() || s.ood_scores.empty())
    throw std::invalid_argument(std::string(op) +
                                ": both score sets must be non-empty");
  for (double v : s.id_scores)
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string(op) + ": non-finite id score");
  for (double v : s.ood_scores)
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string(op) + ": non-finite ood score");
}

// (score, is_id) pairs sorted by descending score.
std::vector<std::pair<double, bool>> sorted_pooled(const ScoreSet& s) {
  std::vector<std::pair<double, bool>> pooled;
  pooled.reserve(s.id_scores.size() + s.ood_scores.size());
  for (double v : s.id_scores) pooled.emplace_back(v, true);
  for (double v : s.ood_scores) pooled.emplace_back(v, false);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  return pooled;
}

}  // namespace

double auroc(const ScoreSet& s) {
  validate(s, "auroc");
  const auto pooled = sorted_pooled(s);
  // Trapezoids over the (FP, TP) staircase, one step per distinct score.
  // Counts are integers, so the accumulated numerator is exact and the
  // result matches the pairwise statistic with half credit for ties.
  double area2 = 0;  // twice the unnormalized area
  std::size_t tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    const double v = pooled[i].first;
    while (i < pooled.size() && pooled[i].first == v) {
      if (pooled[i].second)
        ++tp;
      else
        ++fp;
      ++i;
    }
    area2 += static_cast<double>(fp - prev_fp) *
             static_cast<double>(tp + prev_tp);
    prev_tp = tp;
    prev_fp = fp;
  }
  return area2 / (2.0 * static_cast<double>(s.id_scores.size()) *
                  static_cast<double>(s.ood_scores.size()));
}

double aupr(const ScoreSet& s, PositiveClass positive) {
  validate(s, "aupr");
  if (positive == PositiveClass::ood) {
    // Flip orientation: OOD becomes the high-scoring positive side.
    ScoreSet flipped;
    flipped.id_scores.reserve(s.ood_scores.size());
    for (double v : s.ood_scores) flipped.id_scores.push_back(-v);
    flipped.ood_scores.reserve(s.id_scores.size());
    for (double v : s.id_scores) flipped.ood_scores.push_back(-v);
    return aupr(flipped, PositiveClass::id);
  }
  const auto pooled = sorted_pooled(s);
  const double n_pos = static_cast<double>(s.id_scores.size());
  double area = 0, prev_recall = 0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    const double v = pooled[i].first;
    while (i < pooled.size() && pooled[i].first == v) {
      if (pooled[i].second)
        ++tp;
      else
        ++fp;
      ++i;
    }
    const double recall = static_cast<double>(tp) / n_pos;
    const double precision =
        static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += precision * (recall - prev_recall);
    prev_recall = recall;
  }
  return area;
}

double fpr_at_tpr(const ScoreSet& s, double tpr_target) {
  validate(s, "fpr_at_tpr");
  if (tpr_target <= 0 || tpr_target > 1)
    throw std::invalid_argument("fpr_at_tpr: target must be in (0,1]");
  // Smallest k with k/n_id >= target; the k-th largest id score is then the
  // largest threshold admitting at least that true positive rate.
  std::vector<double> id_sorted = s.id_scores;
  std::sort(id_sorted.begin(), id_sorted.end(), std::greater<>());
  const std::size_t n_id = id_sorted.size();
  std::size_t k = static_cast<std::size_t>(
      std::ceil(tpr_target * static_cast<double>(n_id) - 1e-12));
  if (k == 0) k = 1;
  const double tau = id_sorted[k - 1];
  std::size_t fp = 0;
  for (double v : s.ood_scores)
    if (v >= tau) ++fp;
  return static_cast<double>(fp) / static_cast<double>(s.ood_scores.size());
}

DetectionReport detection_report(const ScoreSet& s,
                                 PositiveClass aupr_positive,
                                 double tpr_target) {
  validate(s, "detection_report");
  DetectionReport r;
  r.auroc = auroc(s);
  r.aupr = aupr(s, aupr_positive);
  r.fpr_at_95tpr = fpr_at_tpr(s, tpr_target);

  const auto pooled = sorted_pooled(s);
  const double n_id = static_cast<double>(s.id_scores.size());
  const double n_ood = static_cast<double>(s.ood_scores.size());
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  r.roc_curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  while (i < pooled.size()) {
    const double v = pooled[i].first;
    while (i < pooled.size() && pooled[i].first == v) {
      if (pooled[i].second)
        ++tp;
      else
        ++fp;
      ++i;
    }
    r.roc_curve.push_back({v, static_cast<double>(tp) / n_id,
                           static_cast<double>(fp) / n_ood});
    r.pr_curve.push_back(
        {v, static_cast<double>(tp) / n_id,
         static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  return r;
}

void save_score_dump(const std::string& path, const ScoreSet& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  char buf[64];
  for (double v : s.id_scores) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf << "\tid\n";
  }
  for (double v : s.ood_scores) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf << "\tood\n";
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

ScoreSet load_score_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  ScoreSet s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    double score;
    std::string label;
    if (!(ls >> score >> label) || (label != "id" && label != "ood"))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected '<score> id|ood'");
    (label == "id" ? s.id_scores : s.ood_scores).push_back(score);
  }
  return s;
}

}  // namespace pnn
