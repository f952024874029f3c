#include <doctest.h>

#include <cmath>

#include "detect/baselines.hpp"
#include "detect/discrepancy.hpp"
#include "oracles.hpp"

using namespace detect;

namespace {

LogProbMatrix probs(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::log(rows[i][j]);
    }
  }
  return LogProbMatrix::from_dense(m);
}

const std::vector<double> kUniform4 = {0.25, 0.25, 0.25, 0.25};
const std::vector<double> kPoint4 = {0.0, 1.0, 0.0, 0.0};

}  // namespace

TEST_CASE("orientations are fixed per method") {
  CHECK(orientation_of(Method::Likelihood) == Orientation::HigherIsMachine);
  CHECK(orientation_of(Method::LogRank) == Orientation::LowerIsMachine);
  CHECK(orientation_of(Method::Entropy) == Orientation::LowerIsMachine);
  CHECK(orientation_of(Method::LRR) == Orientation::HigherIsMachine);
  CHECK(orientation_of(Method::FastDetect) == Orientation::HigherIsMachine);
  CHECK(likelihood(probs({kUniform4}), TokenSequence{{0}}).orientation == Orientation::HigherIsMachine);
  CHECK(log_rank(probs({kUniform4}), TokenSequence{{0}}).orientation == Orientation::LowerIsMachine);
}

TEST_CASE("likelihood") {
  CHECK(likelihood(probs({kUniform4, kUniform4}), TokenSequence{{0, 3}}).value == doctest::Approx(-1.3862944));
  CHECK(likelihood(probs({kPoint4, kPoint4}), TokenSequence{{1, 1}}).value == 0.0);
  CHECK(likelihood(probs({{0.5, 0.5}, {0.25, 0.75}}), TokenSequence{{0, 1}}).value ==
        doctest::Approx(-0.4904146));
}

TEST_CASE("log-rank") {
  CHECK(log_rank(probs({{0.9, 0.1}, {0.6, 0.4}}), TokenSequence{{0, 0}}).value == 0.0);
  CHECK(log_rank(probs({{0.9, 0.1}}), TokenSequence{{1}}).value == doctest::Approx(std::log(2.0)));
  const std::vector<double> falling = {0.4, 0.3, 0.2, 0.1};
  CHECK(log_rank(probs({falling, falling}), TokenSequence{{0, 3}}).value == doctest::Approx(0.6931472));
}

TEST_CASE("entropy") {
  CHECK(entropy_score(probs({kUniform4, kUniform4})).value == doctest::Approx(1.3862944));
  CHECK(entropy_score(probs({kPoint4})).value == 0.0);
  CHECK(entropy_score(probs({kUniform4, kPoint4})).value == doctest::Approx(0.6931472));
}

TEST_CASE("likelihood-log-rank ratio") {
  // All ranks 1 with likelihood -0.1: the guard saturates.
  const double p = std::exp(-0.1);
  const auto saturated = lrr(probs({{p, 1.0 - p}}), TokenSequence{{0}});
  CHECK(saturated.value == doctest::Approx(0.1 / 1e-6).epsilon(1e-9));
  CHECK(lrr(probs({{0.5, 0.25, 0.25}}), TokenSequence{{1}}).value == doctest::Approx(2.0));
  CHECK(lrr(probs({kPoint4}), TokenSequence{{1}}).value == 0.0);
}

TEST_CASE("fast-detect baseline is the analytic discrepancy") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = LogProbMatrix::from_dense(oracle::random_log_matrix(rng, 8, 6));
    TokenSequence seq;
    for (int i = 0; i < 8; ++i) seq.tokens.push_back(static_cast<TokenId>(rng() % 6));
    CHECK(fast_detect(m, seq).value == conditional_discrepancy(m, seq, Analytic{}).d_c);
  }
}

TEST_CASE("baselines are invariant to relabeling that keeps the observed rank") {
  // Swap two non-observed tokens in every row.
  const auto a = probs({{0.5, 0.3, 0.2}, {0.1, 0.6, 0.3}});
  const auto b = probs({{0.5, 0.2, 0.3}, {0.1, 0.6, 0.3}});
  const TokenSequence seq{{0, 1}};
  CHECK(likelihood(a, seq).value == likelihood(b, seq).value);
  CHECK(log_rank(a, seq).value == log_rank(b, seq).value);
  CHECK(lrr(a, seq).value == lrr(b, seq).value);
  CHECK(entropy_score(a).value == doctest::Approx(entropy_score(b).value).epsilon(1e-14));
}
