#pragma once

#include <cstddef>
#include <vector>

namespace detect {

enum class Label { Human, Machine };

struct ScoredLabel {
  double score = 0.0;
  Label label = Label::Human;
};

/// Scores oriented so that higher means more machine-like.
struct ScoredLabelSet {
  std::vector<ScoredLabel> entries;

  std::size_t count(Label label) const;
};

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

/// Predicted Machine iff score >= threshold.
Confusion confusion_at(const ScoredLabelSet& set, double threshold);

/// Mann-Whitney statistic with half credit for ties, from one descending sweep.
double auroc(const ScoredLabelSet& set);

/// Trapezoidal area under the precision-recall points taken after each tie
/// block of the descending sweep, starting from recall 0 at the first
/// block's precision.
double aupr(const ScoredLabelSet& set);

double mcc(const ScoredLabelSet& set, double threshold);
double balanced_accuracy(const ScoredLabelSet& set, double threshold);

/// Threshold among the observed scores (and +inf) that maximizes balanced
/// accuracy; the highest such threshold on ties.
double balanced_threshold(const ScoredLabelSet& set);

/// TPR at the smallest observed threshold whose FPR stays within the cap.
double tpr_at_fpr(const ScoredLabelSet& set, double fpr_cap = 0.05);

/// (new - old) / (1 - old). Throws Saturated when old >= 1.
double improvement(double new_value, double old_value);

}  // namespace detect
