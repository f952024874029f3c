#include "detect/toy_model.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "detect/bytes.hpp"
#include "detect/error.hpp"
#include "detect/kernels.hpp"
#include "detect/rng.hpp"

namespace detect {

namespace {

constexpr std::string_view kToyMagic = "TSM1";
constexpr std::uint64_t kHumanStream = 0x48554d414eULL;
constexpr std::uint64_t kMachineStream = 0x4d41434849ULL;

}  // namespace

std::size_t context_count(std::uint32_t order, std::uint32_t vocab) {
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < order; ++i) n *= static_cast<std::size_t>(vocab) + 1;
  return n;
}

ToyScoringModel::ToyScoringModel(std::uint32_t order, std::uint32_t vocab)
    : ToyScoringModel(order, vocab,
                      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(detect::context_count(order, vocab)), vocab)) {}

ToyScoringModel::ToyScoringModel(std::uint32_t order, std::uint32_t vocab, Eigen::MatrixXd logits)
    : order_(order), vocab_(vocab), logits_(std::move(logits)) {
  if (vocab_ < 1) throw Error(ErrorCode::InvalidArgument, "toy model needs vocab >= 1");
  if (logits_.rows() != static_cast<Eigen::Index>(detect::context_count(order_, vocab_)) ||
      logits_.cols() != static_cast<Eigen::Index>(vocab_)) {
    throw Error(ErrorCode::InvalidArgument, "logits table shape does not match order/vocab");
  }
  if (!logits_.allFinite()) throw Error(ErrorCode::InvalidArgument, "logits must be finite");
}

std::size_t ToyScoringModel::context_of(const TokenSequence& seq, std::size_t position) const {
  const std::size_t base = static_cast<std::size_t>(vocab_) + 1;
  std::size_t index = 0;
  for (std::uint32_t k = order_; k > 0; --k) {
    const std::size_t digit = position >= k ? seq.tokens[position - k] : vocab_;
    index = index * base + digit;
  }
  return index;
}

ToyScoringModel random_toy_model(std::uint32_t order, std::uint32_t vocab, double scale, std::uint64_t seed) {
  const auto rows = static_cast<Eigen::Index>(context_count(order, vocab));
  Eigen::MatrixXd logits(rows, vocab);
  SplitMix64 rng(seed);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < logits.cols(); ++c) logits(r, c) = scale * standard_normal(rng);
  }
  return ToyScoringModel(order, vocab, std::move(logits));
}

LogProbMatrix toy_logprob_matrix(const ToyScoringModel& model, const TokenSequence& seq) {
  const auto table = kernels::log_softmax_rows(model.logits());
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(seq.size()), model.vocab());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.tokens[i] >= model.vocab()) {
      throw Error(ErrorCode::TokenOutOfRange, "token " + std::to_string(seq.tokens[i]) + " >= vocab");
    }
    rows.row(static_cast<Eigen::Index>(i)) = table.row(static_cast<Eigen::Index>(model.context_of(seq, i)));
  }
  return LogProbMatrix::from_dense(rows);
}

TokenSequence sample_sequence(const ToyScoringModel& model, double temperature, std::size_t length,
                              std::uint64_t seed, std::uint64_t stream) {
  const Eigen::MatrixXd scaled = model.logits() / temperature;
  const auto table = kernels::log_softmax_rows(scaled);
  SplitMix64 rng(seed, stream);
  TokenSequence seq;
  seq.tokens.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    // Context lookup only reads positions < i.
    seq.tokens.push_back(0);
    const auto row = table.row(static_cast<Eigen::Index>(model.context_of(seq, i)));
    const double u = rng.uniform();
    double acc = 0.0;
    TokenId pick = model.vocab() - 1;
    for (Eigen::Index t = 0; t < row.size(); ++t) {
      acc += std::exp(row[t]);
      if (u < acc) {
        pick = static_cast<TokenId>(t);
        break;
      }
    }
    seq.tokens[i] = pick;
  }
  return seq;
}

double toy_sequence_logprob(const ToyScoringModel& model, const TokenSequence& seq) {
  const auto table = kernels::log_softmax_rows(model.logits());
  double total = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    total += table(static_cast<Eigen::Index>(model.context_of(seq, i)), seq.tokens[i]);
  }
  return total;
}

std::vector<std::uint8_t> serialize(const ToyScoringModel& model) {
  bytes::Writer w;
  w.raw(kToyMagic);
  w.u32(model.order());
  w.u32(model.vocab());
  for (Eigen::Index r = 0; r < model.logits().rows(); ++r) {
    for (Eigen::Index c = 0; c < model.logits().cols(); ++c) w.f64(model.logits()(r, c));
  }
  return w.take();
}

ToyScoringModel deserialize_toy_model(std::span<const std::uint8_t> in) {
  bytes::Reader r(in);
  const auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kToyMagic.begin())) {
    throw Error(ErrorCode::BadMagic, "not a TSM1 model file");
  }
  const std::uint32_t order = r.u32();
  const std::uint32_t vocab = r.u32();
  if (vocab == 0 || order > 8) throw Error(ErrorCode::InvariantViolation, "implausible order/vocab header");
  const std::size_t contexts = context_count(order, vocab);
  if (r.remaining() / 8 / vocab < contexts) {
    throw Error(ErrorCode::Truncated, "logits table shorter than header declares");
  }
  Eigen::MatrixXd logits(static_cast<Eigen::Index>(contexts), vocab);
  for (Eigen::Index row = 0; row < logits.rows(); ++row) {
    for (Eigen::Index c = 0; c < logits.cols(); ++c) logits(row, c) = r.f64();
  }
  return ToyScoringModel(order, vocab, std::move(logits));
}

void save(const ToyScoringModel& model, const std::filesystem::path& path) {
  const auto data = serialize(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

ToyScoringModel load_toy_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_toy_model(data);
}

PairedCorpus synth_task(const SynthConfig& config) {
  if (config.vocab < 2) throw Error(ErrorCode::InvalidArgument, "synth_task needs vocab >= 2");
  PairedCorpus corpus;
  corpus.generator = random_toy_model(config.order, config.vocab, config.generator_scale, config.seed);
  corpus.human.reserve(config.count);
  corpus.machine.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    corpus.human.push_back(sample_sequence(corpus.generator, config.human_temperature, config.length,
                                           config.seed ^ kHumanStream, i));
    corpus.machine.push_back(sample_sequence(corpus.generator, config.machine_temperature, config.length,
                                             config.seed ^ kMachineStream, i));
  }
  return corpus;
}

}  // namespace detect
