#include "detect/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "detect/discrepancy.hpp"

namespace detect {

Orientation orientation_of(Method method) {
  switch (method) {
    case Method::LogRank:
    case Method::Entropy:
      return Orientation::LowerIsMachine;
    case Method::Likelihood:
    case Method::LRR:
    case Method::FastDetect:
      break;
  }
  return Orientation::HigherIsMachine;
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Likelihood: return "likelihood";
    case Method::LogRank: return "logrank";
    case Method::Entropy: return "entropy";
    case Method::LRR: return "lrr";
    case Method::FastDetect: return "fastdetect";
  }
  return "unknown";
}

std::string_view to_string(Orientation orientation) {
  return orientation == Orientation::HigherIsMachine ? "higher_is_machine" : "lower_is_machine";
}

namespace {

BaselineScore make(Method method, double value) { return {method, value, orientation_of(method)}; }

}  // namespace

BaselineScore likelihood(const LogProbMatrix& matrix, const TokenSequence& seq) {
  const auto stats = position_stats(matrix, seq);
  double total = 0.0;
  for (const auto& st : stats) total += st.observed_logprob;
  return make(Method::Likelihood, total / static_cast<double>(stats.size()));
}

BaselineScore log_rank(const LogProbMatrix& matrix, const TokenSequence& seq) {
  const auto stats = position_stats(matrix, seq);
  double total = 0.0;
  for (const auto& st : stats) total += std::log(static_cast<double>(st.rank));
  return make(Method::LogRank, total / static_cast<double>(stats.size()));
}

BaselineScore entropy_score(const LogProbMatrix& matrix) {
  double total = 0.0;
  for (const Row& r : matrix.row_list()) total += row_entropy(r);
  return make(Method::Entropy, total / static_cast<double>(matrix.rows()));
}

BaselineScore lrr(const LogProbMatrix& matrix, const TokenSequence& seq) {
  const double ll = likelihood(matrix, seq).value;
  const double lr = log_rank(matrix, seq).value;
  return make(Method::LRR, -ll / std::max(lr, kRankFloor));
}

BaselineScore fast_detect(const LogProbMatrix& matrix, const TokenSequence& seq) {
  return make(Method::FastDetect, conditional_discrepancy(matrix, seq, Analytic{}).d_c);
}

}  // namespace detect
