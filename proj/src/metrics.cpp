#include "detect/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "detect/error.hpp"

namespace detect {

std::size_t ScoredLabelSet::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ScoredLabel& e) { return e.label == label; }));
}

namespace {

struct Block {
  double score;
  std::uint64_t machines;
  std::uint64_t humans;
};

// Tie blocks in descending score order. Requires both classes.
std::vector<Block> sweep(const ScoredLabelSet& set) {
  std::uint64_t nm = 0;
  std::uint64_t nh = 0;
  for (const auto& e : set.entries) {
    if (std::isnan(e.score)) throw Error(ErrorCode::InvalidArgument, "NaN score");
    (e.label == Label::Machine ? nm : nh) += 1;
  }
  if (nm == 0 || nh == 0) throw Error(ErrorCode::SingleClass, "metric needs both machine and human entries");
  std::vector<ScoredLabel> sorted = set.entries;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  std::vector<Block> blocks;
  for (const auto& e : sorted) {
    if (blocks.empty() || blocks.back().score != e.score) blocks.push_back({e.score, 0, 0});
    (e.label == Label::Machine ? blocks.back().machines : blocks.back().humans) += 1;
  }
  return blocks;
}

}  // namespace

Confusion confusion_at(const ScoredLabelSet& set, double threshold) {
  Confusion c;
  for (const auto& e : set.entries) {
    const bool predicted_machine = e.score >= threshold;
    if (e.label == Label::Machine) {
      ++(predicted_machine ? c.tp : c.fn);
    } else {
      ++(predicted_machine ? c.fp : c.tn);
    }
  }
  return c;
}

double auroc(const ScoredLabelSet& set) {
  const auto blocks = sweep(set);
  std::uint64_t tp = 0;
  std::uint64_t nh = 0;
  std::uint64_t twice_area = 0;
  for (const auto& b : blocks) {
    twice_area += b.humans * (2 * tp + b.machines);
    tp += b.machines;
    nh += b.humans;
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(tp) * static_cast<double>(nh));
}

double aupr(const ScoredLabelSet& set) {
  const auto blocks = sweep(set);
  std::uint64_t nm = 0;
  for (const auto& b : blocks) nm += b.machines;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  double prev_recall = 0.0;
  double prev_precision = -1.0;
  double area = 0.0;
  for (const auto& b : blocks) {
    tp += b.machines;
    fp += b.humans;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(nm);
    if (prev_precision < 0.0) prev_precision = precision;
    area += (recall - prev_recall) * (precision + prev_precision) / 2.0;
    prev_recall = recall;
    prev_precision = precision;
  }
  return area;
}

double mcc(const ScoredLabelSet& set, double threshold) {
  sweep(set);
  const Confusion c = confusion_at(set, threshold);
  const double tp = static_cast<double>(c.tp);
  const double tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(denom);
}

double balanced_accuracy(const ScoredLabelSet& set, double threshold) {
  sweep(set);
  const Confusion c = confusion_at(set, threshold);
  const double tpr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double tnr = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return (tpr + tnr) / 2.0;
}

double balanced_threshold(const ScoredLabelSet& set) {
  const auto blocks = sweep(set);
  std::uint64_t nm = 0;
  std::uint64_t nh = 0;
  for (const auto& b : blocks) {
    nm += b.machines;
    nh += b.humans;
  }
  // At +inf nothing is flagged: tp = 0, tn = nh. Compare tp*nh + tn*nm.
  double best = std::numeric_limits<double>::infinity();
  std::uint64_t best_key = nh * nm;
  std::uint64_t tp = 0;
  std::uint64_t tn = nh;
  for (const auto& b : blocks) {
    tp += b.machines;
    tn -= b.humans;
    const std::uint64_t key = tp * nh + tn * nm;
    if (key > best_key) {
      best_key = key;
      best = b.score;
    }
  }
  return best;
}

double tpr_at_fpr(const ScoredLabelSet& set, double fpr_cap) {
  const auto blocks = sweep(set);
  std::uint64_t nm = 0;
  std::uint64_t nh = 0;
  for (const auto& b : blocks) {
    nm += b.machines;
    nh += b.humans;
  }
  const double fp_budget = fpr_cap * static_cast<double>(nh) + 1e-9;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t best_tp = 0;  // threshold +inf
  for (const auto& b : blocks) {
    tp += b.machines;
    fp += b.humans;
    if (static_cast<double>(fp) > fp_budget) break;
    best_tp = tp;
  }
  return static_cast<double>(best_tp) / static_cast<double>(nm);
}

double improvement(double new_value, double old_value) {
  if (!(old_value < 1.0)) throw Error(ErrorCode::Saturated, "old value leaves no headroom");
  return (new_value - old_value) / (1.0 - old_value);
}

}  // namespace detect
