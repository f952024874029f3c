#include <doctest.h>

#include <cmath>

#include "detect/kernels.hpp"
#include "detect/logprob.hpp"
#include "detect/protocol.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace detect;

namespace {

LogProbMatrix probs(std::initializer_list<std::initializer_list<double>> rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double p : r) m(i, j++) = std::log(p);
    ++i;
  }
  return LogProbMatrix::from_dense(m);
}

}  // namespace

TEST_CASE("validate accepts a normalized row") {
  CHECK(validate(probs({{0.25, 0.25, 0.5}})).empty());
}

TEST_CASE("validate reports a mass deficit") {
  const auto report = validate(probs({{0.5, 0.5}, {0.5, 0.4}}));
  REQUIRE(report.size() == 1);
  CHECK(report[0].row == 1);
  CHECK(report[0].reason == "mass deficit at row 1");
}

TEST_CASE("validate reports tail mass without tail outcomes") {
  TopKRow row;
  row.entries = {{0, std::log(0.98)}};
  row.tail_mass = 0.02;
  row.tail_count = 0;
  const LogProbMatrix m(4, {row});
  CHECK(validate(m).size() == 1);
}

TEST_CASE("validate reports unsorted top-k entries") {
  TopKRow row;
  row.entries = {{0, std::log(0.3)}, {1, std::log(0.7)}};
  CHECK_FALSE(validate(LogProbMatrix(2, {row})).empty());
}

TEST_CASE("uniform row statistics") {
  const auto stats = position_stats(probs({{0.25, 0.25, 0.25, 0.25}}), TokenSequence{{2}});
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].observed_logprob == doctest::Approx(-1.3862944).epsilon(1e-7));
  CHECK(stats[0].rank == 1);
  CHECK(stats[0].entropy == doctest::Approx(std::log(4.0)));
}

TEST_CASE("low token of a two-token row ranks second") {
  const auto stats = position_stats(probs({{0.9, 0.1}}), TokenSequence{{1}});
  CHECK(stats[0].rank == 2);
  CHECK(stats[0].observed_logprob == doctest::Approx(-2.3025851));
}

TEST_CASE("absent top-k token falls into the tail") {
  TopKRow row;
  row.entries = {{3, std::log(0.7)}};
  row.tail_mass = 0.3;
  row.tail_count = 3;
  const LogProbMatrix m(8, {row});
  const auto stats = position_stats(m, TokenSequence{{5}});
  CHECK(stats[0].observed_logprob == doctest::Approx(std::log(0.1)));
  CHECK(stats[0].rank == 2);
  CHECK(m.tail_token(0) == 0);
}

TEST_CASE("incompatible inputs") {
  const auto m = probs({{0.5, 0.5}, {0.5, 0.5}});
  CHECK(support::error_of([&] { position_stats(m, TokenSequence{{0}}); }) == ErrorCode::LengthMismatch);
  CHECK(support::error_of([&] { position_stats(m, TokenSequence{{0, 2}}); }) == ErrorCode::TokenOutOfRange);
}

TEST_CASE("ranks cover 1..v under competition ranking") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index v = 2 + static_cast<Eigen::Index>(rng() % 12);
    // Coarse buckets force ties.
    Eigen::VectorXd w(v);
    for (Eigen::Index t = 0; t < v; ++t) w[t] = 1.0 + static_cast<double>(rng() % 4);
    w /= w.sum();
    Eigen::MatrixXd lp = w.array().log().matrix().transpose();
    const auto m = LogProbMatrix::from_dense(lp);
    std::vector<std::uint32_t> ranks;
    for (Eigen::Index t = 0; t < v; ++t) {
      ranks.push_back(position_stats(m, TokenSequence{{static_cast<TokenId>(t)}})[0].rank);
    }
    for (Eigen::Index t = 0; t < v; ++t) {
      std::uint32_t greater = 0;
      for (Eigen::Index u = 0; u < v; ++u) greater += lp(0, u) > lp(0, t) ? 1 : 0;
      CHECK(ranks[static_cast<std::size_t>(t)] == greater + 1);
      CHECK(ranks[static_cast<std::size_t>(t)] >= 1);
      CHECK(ranks[static_cast<std::size_t>(t)] <= static_cast<std::uint32_t>(v));
    }
    CHECK(*std::min_element(ranks.begin(), ranks.end()) == 1);
  }
}

TEST_CASE("top-k projection changes entropy by at most tail_mass * ln v") {
  SplitMix64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const Eigen::Index v = 4 + static_cast<Eigen::Index>(rng() % 60);
    const auto k = static_cast<std::uint32_t>(1 + rng() % static_cast<std::uint64_t>(v - 1));
    const auto dense = LogProbMatrix::from_dense(oracle::random_log_matrix(rng, 1, v).eval());
    const auto topk = project_topk(dense, k);
    REQUIRE(validate(topk).empty());
    const auto& row = std::get<TopKRow>(topk.row(0));
    const double gap = std::abs(row_entropy(dense.row(0)) - row_entropy(topk.row(0)));
    CHECK(gap <= row.tail_mass * std::log(static_cast<double>(v)) + 1e-12);
  }
}

TEST_CASE("entropy stays within [0, ln v]") {
  SplitMix64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index v = 2 + static_cast<Eigen::Index>(rng() % 40);
    const auto m = LogProbMatrix::from_dense(oracle::random_log_matrix(rng, 3, v, 4.0));
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double h = row_entropy(m.row(i));
      CHECK(h >= -1e-12);
      CHECK(h <= std::log(static_cast<double>(v)) + 1e-12);
    }
  }
}

TEST_CASE("position_stats is deterministic") {
  SplitMix64 rng(14);
  const auto m = LogProbMatrix::from_dense(oracle::random_log_matrix(rng, 5, 9));
  const TokenSequence seq{{0, 3, 8, 2, 2}};
  const auto a = position_stats(m, seq);
  const auto b = position_stats(m, seq);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].observed_logprob == b[i].observed_logprob);
    CHECK(a[i].rank == b[i].rank);
    CHECK(a[i].entropy == b[i].entropy);
    CHECK(a[i].observed_logprob <= 0.0);
  }
}

TEST_CASE("row moments kernel matches a direct sum") {
  SplitMix64 rng(15);
  const Eigen::MatrixXd lp = oracle::random_log_matrix(rng, 4, 7);
  for (Eigen::Index i = 0; i < lp.rows(); ++i) {
    const auto moments = kernels::row_moments(lp.row(i));
    double m = 0.0;
    double m2 = 0.0;
    for (Eigen::Index t = 0; t < lp.cols(); ++t) {
      m += std::exp(lp(i, t)) * lp(i, t);
      m2 += std::exp(lp(i, t)) * lp(i, t) * lp(i, t);
    }
    CHECK(moments.mean == doctest::Approx(m).epsilon(1e-12));
    CHECK(moments.variance == doctest::Approx(m2 - m * m).epsilon(1e-9));
  }
}
