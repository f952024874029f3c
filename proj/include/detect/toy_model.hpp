#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "detect/logprob.hpp"

namespace detect {

/// Tabular context-conditioned softmax model. Row r of the logits table holds
/// the next-token logits for context r, where a context is the previous
/// `order` tokens with positions before the sequence start filled by a pad
/// symbol (id == vocab). Contexts are numbered in base (vocab + 1), oldest
/// token most significant.
class ToyScoringModel {
public:
  ToyScoringModel() = default;
  ToyScoringModel(std::uint32_t order, std::uint32_t vocab);
  ToyScoringModel(std::uint32_t order, std::uint32_t vocab, Eigen::MatrixXd logits);

  std::uint32_t order() const noexcept { return order_; }
  std::uint32_t vocab() const noexcept { return vocab_; }
  std::size_t context_count() const noexcept { return static_cast<std::size_t>(logits_.rows()); }

  const Eigen::MatrixXd& logits() const noexcept { return logits_; }
  Eigen::MatrixXd& logits() noexcept { return logits_; }

  /// Context row used to predict position `position` of `seq`.
  std::size_t context_of(const TokenSequence& seq, std::size_t position) const;

  bool operator==(const ToyScoringModel& other) const {
    return order_ == other.order_ && vocab_ == other.vocab_ && logits_ == other.logits_;
  }

private:
  std::uint32_t order_ = 0;
  std::uint32_t vocab_ = 0;
  Eigen::MatrixXd logits_;
};

std::size_t context_count(std::uint32_t order, std::uint32_t vocab);

/// Logits drawn i.i.d. N(0, scale^2).
ToyScoringModel random_toy_model(std::uint32_t order, std::uint32_t vocab, double scale, std::uint64_t seed);

/// Row i = log-softmax of the logits at the context of position i.
LogProbMatrix toy_logprob_matrix(const ToyScoringModel& model, const TokenSequence& seq);

/// Samples a sequence of `length` tokens from softmax(logits / temperature).
TokenSequence sample_sequence(const ToyScoringModel& model, double temperature, std::size_t length,
                              std::uint64_t seed, std::uint64_t stream);

/// Summed log-prob of `seq` under the model at temperature 1.
double toy_sequence_logprob(const ToyScoringModel& model, const TokenSequence& seq);

// Binary table: "TSM1", u32 order, u32 vocab, then (vocab+1)^order x vocab
// little-endian f64 logits, row-major.
std::vector<std::uint8_t> serialize(const ToyScoringModel& model);
ToyScoringModel deserialize_toy_model(std::span<const std::uint8_t> bytes);
void save(const ToyScoringModel& model, const std::filesystem::path& path);
ToyScoringModel load_toy_model(const std::filesystem::path& path);

struct SynthConfig {
  std::uint64_t seed = 0;
  std::uint32_t vocab = 16;
  std::uint32_t order = 1;
  std::size_t length = 64;
  std::size_t count = 200;
  double machine_temperature = 0.5;
  double human_temperature = 1.5;
  double generator_scale = 1.0;
};

/// human[i] and machine[i] form pair i.
struct PairedCorpus {
  std::vector<TokenSequence> human;
  std::vector<TokenSequence> machine;
  ToyScoringModel generator;
};

/// Machine text comes from a low-temperature copy of a random generator
/// table, human text from a flattened copy of the same table.
PairedCorpus synth_task(const SynthConfig& config);

}  // namespace detect
