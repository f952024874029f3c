#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "detect/toy_model.hpp"

namespace detect {

struct Sgd {};
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};
using Optimizer = std::variant<Sgd, Adam>;

struct DDLConfig {
  double gamma = 100.0;
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  Optimizer optimizer = Adam{};
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;  // 0 = whole corpus each step
};

struct DPOConfig {
  double beta = 0.05;
  std::optional<ToyScoringModel> reference;  // defaults to the initial model
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  Optimizer optimizer = Adam{};
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
};

using TrainConfig = std::variant<DDLConfig, DPOConfig>;

/// human[i] and machine[i] form pair i.
struct PairedBatch {
  std::span<const TokenSequence> human;
  std::span<const TokenSequence> machine;
};

struct LossAndGradient {
  double loss = 0.0;
  Eigen::MatrixXd gradient;  // same shape as the logits table
};

/// Loss is the epoch mean; discrepancies are measured after the epoch's updates.
struct EpochRecord {
  double mean_d_human = 0.0;
  double mean_d_machine = 0.0;
  double delta_d = 0.0;  // mean_d_machine - mean_d_human
  double loss = 0.0;
};

using TrainTrace = std::vector<EpochRecord>;

/// Analytic d_c of each sequence under the toy model.
std::vector<double> toy_discrepancies(const ToyScoringModel& model, std::span<const TokenSequence> seqs);

/// mean |d_c(h)| + mean |gamma - d_c(m)| with exact gradients w.r.t. every
/// logit. Sequences on the sigma floor score 0 and pass no gradient; throws
/// DegenerateBatch when that holds for every sequence.
LossAndGradient ddl_loss(const ToyScoringModel& model, const PairedBatch& batch, double gamma);

/// -mean log sigmoid(beta * (log-ratio(m) - log-ratio(h))), log-ratio taken
/// against the frozen reference; gradients w.r.t. `model` only.
LossAndGradient dpo_loss(const ToyScoringModel& model, const ToyScoringModel& reference,
                         const PairedBatch& batch, double beta);

/// Deterministic given the config. Throws NonFiniteLoss on divergence.
std::pair<ToyScoringModel, TrainTrace> train(ToyScoringModel model, const PairedBatch& data,
                                             const TrainConfig& config);

}  // namespace detect
