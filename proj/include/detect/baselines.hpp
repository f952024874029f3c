#pragma once

#include <string_view>

#include "detect/logprob.hpp"

namespace detect {

enum class Method { Likelihood, LogRank, Entropy, LRR, FastDetect };
enum class Orientation { HigherIsMachine, LowerIsMachine };

struct BaselineScore {
  Method method = Method::Likelihood;
  double value = 0.0;
  Orientation orientation = Orientation::HigherIsMachine;
};

inline constexpr double kRankFloor = 1e-6;

Orientation orientation_of(Method method);
std::string_view to_string(Method method);
std::string_view to_string(Orientation orientation);

/// Mean observed log-prob.
BaselineScore likelihood(const LogProbMatrix& matrix, const TokenSequence& seq);
/// Mean ln(rank) of the observed tokens.
BaselineScore log_rank(const LogProbMatrix& matrix, const TokenSequence& seq);
/// Mean row entropy; needs no tokens.
BaselineScore entropy_score(const LogProbMatrix& matrix);
/// -likelihood / max(log_rank, kRankFloor).
BaselineScore lrr(const LogProbMatrix& matrix, const TokenSequence& seq);
/// Analytic conditional discrepancy.
BaselineScore fast_detect(const LogProbMatrix& matrix, const TokenSequence& seq);

}  // namespace detect
