#include "detect/ddl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "detect/discrepancy.hpp"
#include "detect/error.hpp"
#include "detect/kernels.hpp"
#include "detect/rng.hpp"

namespace detect {

namespace {

// Per-context log-probs, probabilities and the moments of ln p under p.
struct ContextTable {
  kernels::RowMatrix<double> logprobs;
  kernels::RowMatrix<double> probs;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  explicit ContextTable(const ToyScoringModel& model)
      : logprobs(kernels::log_softmax_rows(model.logits())), probs(logprobs.array().exp()) {
    mean.resize(logprobs.rows());
    variance.resize(logprobs.rows());
    for (Eigen::Index c = 0; c < logprobs.rows(); ++c) {
      const auto m = kernels::row_moments(logprobs.row(c));
      mean[c] = m.mean;
      variance[c] = m.variance;
    }
  }
};

struct Forward {
  double d = 0.0;
  double sigma = 0.0;
  bool degenerate = true;
};

Forward forward(const ToyScoringModel& model, const ContextTable& table, const TokenSequence& seq) {
  double observed = 0.0;
  double mu = 0.0;
  double variance = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(model.context_of(seq, i));
    observed += table.logprobs(c, seq.tokens[i]);
    mu += table.mean[c];
    variance += table.variance[c];
  }
  Forward f;
  f.sigma = std::sqrt(std::max(variance, 0.0));
  f.degenerate = !(f.sigma >= kSigmaFloor);
  f.d = standardize(observed, mu, f.sigma);
  return f;
}

// Accumulates upstream * d(d_c)/d(logits) into grad.
//   d L / dz  = e_x - p
//   d mu / dz = p (l - m)
//   d V / dz  = p ((l - m)^2 - v + 2 (l - m))
// and d_c = (L - mu) / sqrt(V).
void backward(const ToyScoringModel& model, const ContextTable& table, const TokenSequence& seq,
              const Forward& f, double upstream, Eigen::MatrixXd& grad) {
  if (f.degenerate || upstream == 0.0) return;
  const double a = upstream / f.sigma;
  const double b = upstream * f.d / (2.0 * f.sigma * f.sigma);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(model.context_of(seq, i));
    const auto p = table.probs.row(c).array();
    const auto centered = table.logprobs.row(c).array() - table.mean[c];
    auto g = grad.row(c).array();
    g -= a * p;
    g(seq.tokens[i]) += a;
    g -= a * p * centered;
    g -= b * p * (centered.square() - table.variance[c] + 2.0 * centered);
  }
}

// Accumulates upstream * d(sum_i ln p(x_i)) / d(logits) into grad.
void backward_loglik(const ToyScoringModel& model, const ContextTable& table, const TokenSequence& seq,
                     double upstream, Eigen::MatrixXd& grad) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(model.context_of(seq, i));
    grad.row(c) -= upstream * table.probs.row(c);
    grad(c, seq.tokens[i]) += upstream;
  }
}

double sequence_loglik(const ToyScoringModel& model, const ContextTable& table, const TokenSequence& seq) {
  double total = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    total += table.logprobs(static_cast<Eigen::Index>(model.context_of(seq, i)), seq.tokens[i]);
  }
  return total;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void check_batch(const PairedBatch& batch) {
  if (batch.human.empty() || batch.machine.empty()) {
    throw Error(ErrorCode::InvalidArgument, "training batches must be nonempty");
  }
}

class OptimizerState {
public:
  OptimizerState(const Optimizer& opt, double lr, Eigen::Index rows, Eigen::Index cols)
      : opt_(opt), lr_(lr), m_(Eigen::MatrixXd::Zero(rows, cols)), v_(Eigen::MatrixXd::Zero(rows, cols)) {}

  void step(Eigen::MatrixXd& params, const Eigen::MatrixXd& grad) {
    ++t_;
    if (const auto* adam = std::get_if<Adam>(&opt_)) {
      m_ = adam->beta1 * m_ + (1.0 - adam->beta1) * grad;
      v_ = adam->beta2 * v_ + (1.0 - adam->beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(adam->beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(adam->beta2, static_cast<double>(t_));
      params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + adam->eps);
    } else {
      params -= lr_ * grad;
    }
  }

private:
  Optimizer opt_;
  double lr_;
  Eigen::MatrixXd m_;
  Eigen::MatrixXd v_;
  long t_ = 0;
};

EpochRecord summarize(const ToyScoringModel& model, const PairedBatch& data, double loss) {
  EpochRecord rec;
  const auto dh = toy_discrepancies(model, data.human);
  const auto dm = toy_discrepancies(model, data.machine);
  rec.mean_d_human = std::accumulate(dh.begin(), dh.end(), 0.0) / static_cast<double>(dh.size());
  rec.mean_d_machine = std::accumulate(dm.begin(), dm.end(), 0.0) / static_cast<double>(dm.size());
  rec.delta_d = rec.mean_d_machine - rec.mean_d_human;
  rec.loss = loss;
  return rec;
}

}  // namespace

std::vector<double> toy_discrepancies(const ToyScoringModel& model, std::span<const TokenSequence> seqs) {
  const ContextTable table(model);
  std::vector<double> out;
  out.reserve(seqs.size());
  for (const auto& seq : seqs) out.push_back(forward(model, table, seq).d);
  return out;
}

LossAndGradient ddl_loss(const ToyScoringModel& model, const PairedBatch& batch, double gamma) {
  check_batch(batch);
  if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be positive");
  const ContextTable table(model);
  LossAndGradient out;
  out.gradient = Eigen::MatrixXd::Zero(model.logits().rows(), model.logits().cols());
  const double wh = 1.0 / static_cast<double>(batch.human.size());
  const double wm = 1.0 / static_cast<double>(batch.machine.size());
  bool any_live = false;
  for (const auto& seq : batch.human) {
    const Forward f = forward(model, table, seq);
    any_live |= !f.degenerate;
    out.loss += wh * std::abs(f.d);
    backward(model, table, seq, f, wh * sign(f.d), out.gradient);
  }
  for (const auto& seq : batch.machine) {
    const Forward f = forward(model, table, seq);
    any_live |= !f.degenerate;
    out.loss += wm * std::abs(gamma - f.d);
    backward(model, table, seq, f, -wm * sign(gamma - f.d), out.gradient);
  }
  if (!any_live) throw Error(ErrorCode::DegenerateBatch, "every sequence sits on the sigma floor");
  return out;
}

LossAndGradient dpo_loss(const ToyScoringModel& model, const ToyScoringModel& reference,
                         const PairedBatch& batch, double beta) {
  check_batch(batch);
  if (batch.human.size() != batch.machine.size()) {
    throw Error(ErrorCode::InvalidArgument, "DPO needs equally many human and machine sequences");
  }
  if (!(beta > 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be positive");
  if (reference.order() != model.order() || reference.vocab() != model.vocab()) {
    throw Error(ErrorCode::InvalidArgument, "reference model shape differs from the trained model");
  }
  const ContextTable table(model);
  const ContextTable ref_table(reference);
  LossAndGradient out;
  out.gradient = Eigen::MatrixXd::Zero(model.logits().rows(), model.logits().cols());
  const double w = 1.0 / static_cast<double>(batch.human.size());
  for (std::size_t j = 0; j < batch.human.size(); ++j) {
    const auto& h = batch.human[j];
    const auto& m = batch.machine[j];
    const double ratio_m = sequence_loglik(model, table, m) - sequence_loglik(reference, ref_table, m);
    const double ratio_h = sequence_loglik(model, table, h) - sequence_loglik(reference, ref_table, h);
    const double margin = beta * (ratio_m - ratio_h);
    out.loss += w * softplus(-margin);
    const double upstream = -w * sigmoid(-margin) * beta;
    backward_loglik(model, table, m, upstream, out.gradient);
    backward_loglik(model, table, h, -upstream, out.gradient);
  }
  return out;
}

std::pair<ToyScoringModel, TrainTrace> train(ToyScoringModel model, const PairedBatch& data,
                                             const TrainConfig& config) {
  const bool is_ddl = std::holds_alternative<DDLConfig>(config);
  const auto& ddl = is_ddl ? std::get<DDLConfig>(config) : DDLConfig{};
  const auto& dpo = is_ddl ? DPOConfig{} : std::get<DPOConfig>(config);
  const std::size_t epochs = is_ddl ? ddl.epochs : dpo.epochs;
  const double lr = is_ddl ? ddl.learning_rate : dpo.learning_rate;
  const std::size_t batch_size = is_ddl ? ddl.batch_size : dpo.batch_size;
  const std::uint64_t seed = is_ddl ? ddl.seed : dpo.seed;
  if (!(lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (is_ddl && !(ddl.gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be positive");
  if (!is_ddl && !(dpo.beta > 0.0)) throw Error(ErrorCode::InvalidArgument, "beta must be positive");

  const ToyScoringModel reference = (!is_ddl && dpo.reference) ? *dpo.reference : model;
  OptimizerState opt(is_ddl ? ddl.optimizer : dpo.optimizer, lr, model.logits().rows(), model.logits().cols());

  const std::size_t pairs = std::min(data.human.size(), data.machine.size());
  const std::size_t step = (batch_size == 0 || batch_size >= pairs) ? pairs : batch_size;
  std::vector<std::size_t> order(pairs);
  std::iota(order.begin(), order.end(), 0);

  TrainTrace trace;
  trace.reserve(epochs);
  std::vector<TokenSequence> h_buf;
  std::vector<TokenSequence> m_buf;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    if (step < pairs) {
      SplitMix64 rng(seed, epoch);
      for (std::size_t i = pairs; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    }
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < pairs; start += step) {
      PairedBatch batch = data;
      if (step < pairs) {
        h_buf.clear();
        m_buf.clear();
        for (std::size_t k = start; k < std::min(start + step, pairs); ++k) {
          h_buf.push_back(data.human[order[k]]);
          m_buf.push_back(data.machine[order[k]]);
        }
        batch = PairedBatch{h_buf, m_buf};
      }
      const LossAndGradient lg =
          is_ddl ? ddl_loss(model, batch, ddl.gamma) : dpo_loss(model, reference, batch, dpo.beta);
      if (!std::isfinite(lg.loss) || !lg.gradient.allFinite()) {
        throw Error(ErrorCode::NonFiniteLoss, "non-finite loss or gradient at epoch " + std::to_string(epoch));
      }
      epoch_loss += lg.loss;
      ++batches;
      opt.step(model.logits(), lg.gradient);
    }
    trace.push_back(summarize(model, data, epoch_loss / static_cast<double>(batches)));
  }
  return {std::move(model), std::move(trace)};
}

}  // namespace detect
