#include "detect/logprob.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "detect/error.hpp"

namespace detect {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::EmptyDraw: return "EmptyDraw";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::BadWindowOrder: return "BadWindowOrder";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::Saturated: return "Saturated";
    case ErrorCode::PoolExhausted: return "PoolExhausted";
    case ErrorCode::BadTask: return "BadTask";
    case ErrorCode::BadRecord: return "BadRecord";
    case ErrorCode::EmptyReport: return "EmptyReport";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::Transport: return "Transport";
    case ErrorCode::BadResponse: return "BadResponse";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

double TopKRow::tail_logprob() const {
  if (!has_tail()) return -std::numeric_limits<double>::infinity();
  return std::log(tail_mass / static_cast<double>(tail_count));
}

LogProbMatrix::LogProbMatrix(std::uint32_t vocab, std::vector<Row> rows)
    : vocab_(vocab), rows_(std::move(rows)) {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (const auto* dense = std::get_if<DenseRow>(&rows_[i])) {
      if (dense->logprobs.size() != static_cast<Eigen::Index>(vocab_)) {
        throw Error(ErrorCode::InvalidArgument,
                    "dense row " + std::to_string(i) + " has width " +
                        std::to_string(dense->logprobs.size()) + ", vocab is " + std::to_string(vocab_));
      }
    } else {
      for (const auto& e : std::get<TopKRow>(rows_[i]).entries) {
        if (e.token >= vocab_) {
          throw Error(ErrorCode::InvalidArgument,
                      "top-k row " + std::to_string(i) + " names token " + std::to_string(e.token));
        }
      }
    }
  }
}

LogProbMatrix LogProbMatrix::from_dense(const Eigen::Ref<const Eigen::MatrixXd>& logprobs) {
  std::vector<Row> rows;
  rows.reserve(static_cast<std::size_t>(logprobs.rows()));
  for (Eigen::Index i = 0; i < logprobs.rows(); ++i) {
    rows.emplace_back(DenseRow{logprobs.row(i).transpose()});
  }
  return LogProbMatrix(static_cast<std::uint32_t>(logprobs.cols()), std::move(rows));
}

bool LogProbMatrix::all_dense() const noexcept {
  return std::all_of(rows_.begin(), rows_.end(),
                     [](const Row& r) { return std::holds_alternative<DenseRow>(r); });
}

bool LogProbMatrix::all_topk() const noexcept {
  return std::all_of(rows_.begin(), rows_.end(),
                     [](const Row& r) { return std::holds_alternative<TopKRow>(r); });
}

double LogProbMatrix::logprob_of(std::size_t i, TokenId token) const {
  const Row& r = rows_.at(i);
  if (const auto* dense = std::get_if<DenseRow>(&r)) return dense->logprobs[token];
  const auto& topk = std::get<TopKRow>(r);
  for (const auto& e : topk.entries) {
    if (e.token == token) return e.logprob;
  }
  return topk.tail_logprob();
}

TokenId LogProbMatrix::tail_token(std::size_t i) const {
  const auto& topk = std::get<TopKRow>(rows_.at(i));
  std::vector<TokenId> ids;
  ids.reserve(topk.entries.size());
  for (const auto& e : topk.entries) ids.push_back(e.token);
  std::sort(ids.begin(), ids.end());
  TokenId candidate = 0;
  for (TokenId id : ids) {
    if (id == candidate) {
      ++candidate;
    } else if (id > candidate) {
      break;
    }
  }
  return candidate;
}

std::vector<Violation> validate(const LogProbMatrix& matrix) {
  std::vector<Violation> out;
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    const Row& r = matrix.row(i);
    double mass = 0.0;
    bool finite = true;
    for_each_outcome(r, [&](double lp, double count) {
      if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity()) finite = false;
      mass += count * std::exp(lp);
    });
    if (!finite) {
      out.push_back({i, "non-finite log-probability at row " + std::to_string(i)});
      continue;
    }
    if (const auto* topk = std::get_if<TopKRow>(&r)) {
      if (topk->tail_mass < 0.0 || std::isnan(topk->tail_mass)) {
        out.push_back({i, "negative tail_mass at row " + std::to_string(i)});
      }
      if (topk->tail_mass > 0.0 && topk->tail_count == 0) {
        out.push_back({i, "tail_count 0 with positive tail_mass at row " + std::to_string(i)});
        mass += topk->tail_mass;
      }
      for (std::size_t j = 1; j < topk->entries.size(); ++j) {
        if (topk->entries[j].logprob > topk->entries[j - 1].logprob) {
          out.push_back({i, "top-k entries not sorted descending at row " + std::to_string(i)});
          break;
        }
      }
      std::vector<TokenId> ids;
      for (const auto& e : topk->entries) ids.push_back(e.token);
      std::sort(ids.begin(), ids.end());
      if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        out.push_back({i, "duplicate token id at row " + std::to_string(i)});
      }
    }
    if (mass < 1.0 - kRowMassTolerance) {
      out.push_back({i, "mass deficit at row " + std::to_string(i)});
    } else if (mass > 1.0 + kRowMassTolerance) {
      out.push_back({i, "mass excess at row " + std::to_string(i)});
    }
  }
  return out;
}

void check_compatible(const LogProbMatrix& matrix, const TokenSequence& seq) {
  if (seq.size() != matrix.rows()) {
    throw Error(ErrorCode::LengthMismatch, "sequence has " + std::to_string(seq.size()) +
                                               " tokens, matrix has " + std::to_string(matrix.rows()) +
                                               " rows");
  }
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.tokens[i] >= matrix.vocab()) {
      throw Error(ErrorCode::TokenOutOfRange, "token " + std::to_string(seq.tokens[i]) + " at position " +
                                                  std::to_string(i) + " exceeds vocab " +
                                                  std::to_string(matrix.vocab()));
    }
  }
}

double row_entropy(const Row& row) {
  double h = 0.0;
  for_each_outcome(row, [&](double lp, double count) {
    const double p = std::exp(lp);
    if (p > 0.0) h -= count * p * lp;
  });
  return std::max(h, 0.0);
}

namespace {

std::uint32_t observed_rank(const Row& row, TokenId token) {
  if (const auto* dense = std::get_if<DenseRow>(&row)) {
    const double observed = dense->logprobs[token];
    return 1u + static_cast<std::uint32_t>((dense->logprobs.array() > observed).count());
  }
  const auto& topk = std::get<TopKRow>(row);
  const auto it = std::find_if(topk.entries.begin(), topk.entries.end(),
                               [&](const TopKEntry& e) { return e.token == token; });
  if (it == topk.entries.end()) return static_cast<std::uint32_t>(topk.entries.size()) + 1u;
  std::uint32_t greater = 0;
  for (const auto& e : topk.entries) {
    if (e.logprob > it->logprob) ++greater;
  }
  return greater + 1u;
}

}  // namespace

std::vector<PositionStats> position_stats(const LogProbMatrix& matrix, const TokenSequence& seq) {
  check_compatible(matrix, seq);
  std::vector<PositionStats> stats(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Row& r = matrix.row(i);
    stats[i].observed_logprob = matrix.logprob_of(i, seq.tokens[i]);
    stats[i].rank = observed_rank(r, seq.tokens[i]);
    stats[i].entropy = row_entropy(r);
  }
  return stats;
}

}  // namespace detect
