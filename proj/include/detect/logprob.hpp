#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace detect {

using TokenId = std::uint32_t;

/// Ordered token ids of one text. Never empty once attached to a matrix.
struct TokenSequence {
  std::vector<TokenId> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool operator==(const TokenSequence&) const = default;
};

/// Full predictive log-distribution over the vocabulary (natural log).
struct DenseRow {
  Eigen::VectorXd logprobs;
};

struct TopKEntry {
  TokenId token = 0;
  double logprob = 0.0;

  bool operator==(const TopKEntry&) const = default;
};

/// Truncated distribution: K retained entries sorted by descending log-prob
/// plus an aggregate tail. The tail is modelled as `tail_count` equal-mass
/// pseudo-outcomes, each with log-prob ln(tail_mass / tail_count).
struct TopKRow {
  std::vector<TopKEntry> entries;
  double tail_mass = 0.0;
  std::uint32_t tail_count = 0;

  bool has_tail() const noexcept { return tail_mass > 0.0 && tail_count > 0; }
  double tail_logprob() const;
};

using Row = std::variant<DenseRow, TopKRow>;

/// Per-position predictive log-distributions for a token sequence.
class LogProbMatrix {
public:
  LogProbMatrix() = default;
  /// Throws InvalidArgument when a dense row has the wrong width or a top-k
  /// entry names a token >= vocab. Mass invariants are checked by validate().
  LogProbMatrix(std::uint32_t vocab, std::vector<Row> rows);

  /// Dense matrix from an s x v table of log-probabilities.
  static LogProbMatrix from_dense(const Eigen::Ref<const Eigen::MatrixXd>& logprobs);

  std::size_t rows() const noexcept { return rows_.size(); }
  std::uint32_t vocab() const noexcept { return vocab_; }
  const Row& row(std::size_t i) const { return rows_.at(i); }
  const std::vector<Row>& row_list() const noexcept { return rows_; }
  bool all_dense() const noexcept;
  bool all_topk() const noexcept;

  /// Log-probability the row assigns to `token`. Tokens absent from a top-k
  /// row fall into the tail pseudo-outcome (-inf when there is no tail).
  double logprob_of(std::size_t i, TokenId token) const;

  /// Token id that stands for the tail pseudo-outcome of a top-k row: the
  /// smallest id not among the retained entries.
  TokenId tail_token(std::size_t i) const;

private:
  std::uint32_t vocab_ = 0;
  std::vector<Row> rows_;
};

/// Visits each distinct outcome of a row as (log-prob, multiplicity).
template <typename Fn>
void for_each_outcome(const Row& row, Fn&& fn) {
  if (const auto* dense = std::get_if<DenseRow>(&row)) {
    for (Eigen::Index t = 0; t < dense->logprobs.size(); ++t) fn(dense->logprobs[t], 1.0);
  } else {
    const auto& topk = std::get<TopKRow>(row);
    for (const auto& e : topk.entries) fn(e.logprob, 1.0);
    if (topk.has_tail()) fn(topk.tail_logprob(), static_cast<double>(topk.tail_count));
  }
}

inline constexpr double kRowMassTolerance = 1e-4;

struct Violation {
  std::size_t row = 0;
  std::string reason;
};

/// Empty iff every row satisfies the mass, ordering and tail invariants.
std::vector<Violation> validate(const LogProbMatrix& matrix);

/// Throws TokenOutOfRange for ids >= vocab and LengthMismatch when the
/// sequence length differs from the row count.
void check_compatible(const LogProbMatrix& matrix, const TokenSequence& seq);

struct PositionStats {
  double observed_logprob = 0.0;
  std::uint32_t rank = 1;  // competition ranking, 1 = most likely
  double entropy = 0.0;    // nats
};

double row_entropy(const Row& row);

std::vector<PositionStats> position_stats(const LogProbMatrix& matrix, const TokenSequence& seq);

}  // namespace detect
