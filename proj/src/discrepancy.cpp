#include "detect/discrepancy.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "detect/error.hpp"
#include "detect/kernels.hpp"
#include "detect/rng.hpp"

namespace detect {

namespace {

// Cumulative distribution over a row's outcomes, tail folded into one slot.
struct RowSampler {
  std::vector<TokenId> tokens;
  std::vector<double> cumulative;

  explicit RowSampler(const LogProbMatrix& matrix, std::size_t i) {
    const Row& r = matrix.row(i);
    double acc = 0.0;
    if (const auto* dense = std::get_if<DenseRow>(&r)) {
      tokens.reserve(static_cast<std::size_t>(dense->logprobs.size()));
      cumulative.reserve(tokens.capacity());
      for (Eigen::Index t = 0; t < dense->logprobs.size(); ++t) {
        acc += std::exp(dense->logprobs[t]);
        tokens.push_back(static_cast<TokenId>(t));
        cumulative.push_back(acc);
      }
    } else {
      const auto& topk = std::get<TopKRow>(r);
      for (const auto& e : topk.entries) {
        acc += std::exp(e.logprob);
        tokens.push_back(e.token);
        cumulative.push_back(acc);
      }
      if (topk.has_tail()) {
        acc += topk.tail_mass;
        tokens.push_back(matrix.tail_token(i));
        cumulative.push_back(acc);
      }
    }
  }

  TokenId draw(double u) const {
    const double x = u * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), x);
    if (it == cumulative.end()) {
      // u * total rounded up to total; take the last outcome with mass.
      it = std::prev(cumulative.end());
      while (it != cumulative.begin() && *it == *std::prev(it)) --it;
    }
    return tokens[static_cast<std::size_t>(it - cumulative.begin())];
  }
};

// Per-row token -> log-prob lookup that avoids a linear scan of top-k rows.
class RowLookup {
public:
  explicit RowLookup(const LogProbMatrix& matrix) : matrix_(matrix), maps_(matrix.rows()) {
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
      if (const auto* topk = std::get_if<TopKRow>(&matrix.row(i))) {
        auto& m = maps_[i];
        m.reserve(topk->entries.size());
        for (const auto& e : topk->entries) m.emplace(e.token, e.logprob);
      }
    }
  }

  double operator()(std::size_t i, TokenId token) const {
    const Row& r = matrix_.row(i);
    if (const auto* dense = std::get_if<DenseRow>(&r)) return dense->logprobs[token];
    const auto& m = maps_[i];
    const auto it = m.find(token);
    return it != m.end() ? it->second : std::get<TopKRow>(r).tail_logprob();
  }

private:
  const LogProbMatrix& matrix_;
  std::vector<std::unordered_map<TokenId, double>> maps_;
};

}  // namespace

TokenSequence ResampleDraw::sample(std::size_t j) const {
  const auto row = samples.row(static_cast<Eigen::Index>(j));
  return TokenSequence{std::vector<TokenId>(row.data(), row.data() + row.size())};
}

double observed_logprob_sum(const LogProbMatrix& matrix, const TokenSequence& seq) {
  double total = 0.0;
  for (const auto& st : position_stats(matrix, seq)) total += st.observed_logprob;
  return total;
}

ResampleDraw resample(const LogProbMatrix& matrix, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "resample needs n >= 1");
  std::vector<RowSampler> samplers;
  samplers.reserve(matrix.rows());
  for (std::size_t i = 0; i < matrix.rows(); ++i) samplers.emplace_back(matrix, i);

  ResampleDraw draw;
  draw.seed = seed;
  draw.samples.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(matrix.rows()));
  for (std::size_t j = 0; j < n; ++j) {
    SplitMix64 rng(seed, j);
    for (std::size_t i = 0; i < samplers.size(); ++i) {
      draw.samples(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
          samplers[i].draw(rng.uniform());
    }
  }
  return draw;
}

SampleMoments mc_moments(const LogProbMatrix& matrix, const ResampleDraw& draw) {
  const std::size_t n = draw.n();
  if (n == 0) throw Error(ErrorCode::EmptyDraw, "draw holds no samples");
  if (static_cast<std::size_t>(draw.samples.cols()) != matrix.rows()) {
    throw Error(ErrorCode::LengthMismatch, "draw width does not match matrix rows");
  }
  const RowLookup lookup(matrix);
  Eigen::VectorXd values(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < matrix.rows(); ++i) {
      total += lookup(i, draw.samples(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
    }
    values[static_cast<Eigen::Index>(j)] = total;
  }
  const double mu = values.mean();
  const double variance = (values.array() - mu).square().mean();
  return {mu, std::sqrt(variance)};
}

SampleMoments analytic_moments(const LogProbMatrix& matrix) {
  double mu = 0.0;
  double variance = 0.0;
  for (const Row& r : matrix.row_list()) {
    if (const auto* dense = std::get_if<DenseRow>(&r)) {
      const auto m = kernels::row_moments(dense->logprobs);
      mu += m.mean;
      variance += m.variance;
      continue;
    }
    double mean = 0.0;
    for_each_outcome(r, [&](double lp, double count) {
      const double p = std::exp(lp);
      if (p > 0.0) mean += count * p * lp;
    });
    double var = 0.0;
    for_each_outcome(r, [&](double lp, double count) {
      const double p = std::exp(lp);
      if (p > 0.0) var += count * p * (lp - mean) * (lp - mean);
    });
    mu += mean;
    variance += var;
  }
  return {mu, std::sqrt(std::max(variance, 0.0))};
}

double standardize(double observed, double mu, double sigma) {
  if (!(sigma >= kSigmaFloor)) return 0.0;
  return (observed - mu) / sigma;
}

DiscrepancyScore conditional_discrepancy(const LogProbMatrix& matrix, const TokenSequence& seq,
                                         const EstimationMode& mode) {
  DiscrepancyScore score;
  score.mode = mode;
  score.log_prob_observed = observed_logprob_sum(matrix, seq);
  SampleMoments m;
  if (const auto* mc = std::get_if<MonteCarlo>(&mode)) {
    m = mc_moments(matrix, resample(matrix, mc->n, mc->seed));
  } else {
    m = analytic_moments(matrix);
  }
  score.mu = m.mu;
  score.sigma = m.sigma;
  score.d_c = standardize(score.log_prob_observed, m.mu, m.sigma);
  return score;
}

}  // namespace detect
