#pragma once

#include <cstddef>
#include <cstdint>
#include <variant>

#include <Eigen/Core>

#include "detect/logprob.hpp"

namespace detect {

/// Below this sigma the standardized discrepancy is reported as 0.
inline constexpr double kSigmaFloor = 1e-8;
inline constexpr std::size_t kDefaultSampleCount = 10000;

struct Analytic {
  bool operator==(const Analytic&) const = default;
};

struct MonteCarlo {
  std::size_t n = kDefaultSampleCount;
  std::uint64_t seed = 0;
  bool operator==(const MonteCarlo&) const = default;
};

using EstimationMode = std::variant<Analytic, MonteCarlo>;

struct DiscrepancyScore {
  double d_c = 0.0;
  double log_prob_observed = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  EstimationMode mode = Analytic{};
};

/// n resampled sequences stored row-per-sample (n x s).
struct ResampleDraw {
  Eigen::Matrix<TokenId, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> samples;
  std::uint64_t seed = 0;

  std::size_t n() const noexcept { return static_cast<std::size_t>(samples.rows()); }
  TokenSequence sample(std::size_t j) const;
};

struct SampleMoments {
  double mu = 0.0;
  double sigma = 0.0;
};

/// Sum over positions of the log-prob of the observed token.
double observed_logprob_sum(const LogProbMatrix& matrix, const TokenSequence& seq);

/// Draws n sequences, each position independently from its row. Sample j
/// uses its own counter-seeded stream, so draws do not depend on evaluation
/// order. Tail draws of top-k rows yield the row's tail token.
ResampleDraw resample(const LogProbMatrix& matrix, std::size_t n, std::uint64_t seed);

/// Sample mean and population standard deviation of the resampled log-probs.
/// Throws EmptyDraw when n == 0.
SampleMoments mc_moments(const LogProbMatrix& matrix, const ResampleDraw& draw);

/// Exact moments: sum over rows of E[ln p] and Var[ln p] under the row itself.
SampleMoments analytic_moments(const LogProbMatrix& matrix);

/// (observed - mu) / sigma, or 0 when sigma < kSigmaFloor.
double standardize(double observed, double mu, double sigma);

DiscrepancyScore conditional_discrepancy(const LogProbMatrix& matrix, const TokenSequence& seq,
                                         const EstimationMode& mode = Analytic{});

}  // namespace detect
