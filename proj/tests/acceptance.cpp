// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "detect/bench.hpp"
#include "detect/client.hpp"
#include "detect/ddl.hpp"
#include "detect/discrepancy.hpp"
#include "detect/metrics.hpp"
#include "detect/protocol.hpp"
#include "detect/refcluster.hpp"
#include "oracles.hpp"

using namespace detect;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s  %-28s %s (%.2fs)\n", out.pass ? "PASS" : "FAIL", name, out.detail.c_str(), secs);
  std::fflush(stdout);
  if (!out.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(std::stoi(std::string(hex.substr(i, 2)), nullptr, 16)));
  }
  return out;
}

// ---- discrepancy ----

Outcome mc_vs_analytic() {
  const auto start = std::chrono::steady_clock::now();
  SplitMix64 rng(2024);
  const int trials = 1000;
  const std::size_t n = 10000;
  int within = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const Eigen::Index s = 1 + static_cast<Eigen::Index>(rng() % 50);
    const Eigen::Index v = 2 + static_cast<Eigen::Index>(rng() % 63);
    const Eigen::MatrixXd lp = oracle::random_log_matrix(rng, s, v);
    const auto m = LogProbMatrix::from_dense(lp);

    // Independent moments: per-row central moments, combined under independence.
    double mu = 0.0, var = 0.0, excess4 = 0.0;
    for (Eigen::Index i = 0; i < s; ++i) {
      double mi = 0.0;
      for (Eigen::Index t = 0; t < v; ++t) mi += std::exp(lp(i, t)) * lp(i, t);
      double vi = 0.0, ci4 = 0.0;
      for (Eigen::Index t = 0; t < v; ++t) {
        const double c = lp(i, t) - mi;
        vi += std::exp(lp(i, t)) * c * c;
        ci4 += std::exp(lp(i, t)) * c * c * c * c;
      }
      mu += mi;
      var += vi;
      excess4 += ci4 - 3.0 * vi * vi;
    }
    const double mu4 = excess4 + 3.0 * var * var;
    const double se_mu = std::sqrt(var / static_cast<double>(n));
    const double se_var = std::sqrt(std::max(mu4 - var * var, 0.0) / static_cast<double>(n));

    const auto mc = mc_moments(m, resample(m, n, static_cast<std::uint64_t>(trial)));
    const bool mean_ok = std::abs(mc.mu - mu) <= 4.0 * se_mu + 1e-12;
    const bool var_ok = std::abs(mc.sigma * mc.sigma - var) <= 4.0 * se_var + 1e-12;
    within += mean_ok && var_ok ? 1 : 0;
  }
  const double rate = static_cast<double>(within) / trials;
  const double secs = elapsed(start);
  return {rate >= 0.99 && secs < 60.0,
          fmt("%d/%d trials within 4 SE (mean and variance), %.1fs < 60s", within, trials, secs)};
}

Outcome hand_values() {
  Eigen::MatrixXd lp(1, 2);
  lp << std::log(0.9), std::log(0.1);
  const auto m = LogProbMatrix::from_dense(lp);
  const double high = conditional_discrepancy(m, TokenSequence{{0}}).d_c;
  const double low = conditional_discrepancy(m, TokenSequence{{1}}).d_c;
  return {std::abs(high - 0.33333) <= 1e-4 && std::abs(low - -3.0) <= 1e-4,
          fmt("d_c(high) = %.6f, d_c(low) = %.6f", high, low)};
}

// ---- ddl-opt ----

std::vector<TokenSequence> random_sequences(SplitMix64& rng, std::size_t count, std::size_t length,
                                            std::uint32_t vocab) {
  std::vector<TokenSequence> out(count);
  for (auto& seq : out) {
    for (std::size_t i = 0; i < length; ++i) seq.tokens.push_back(static_cast<TokenId>(rng() % vocab));
  }
  return out;
}

Outcome gradients() {
  const auto start = std::chrono::steady_clock::now();
  double worst_ddl = 0.0;
  double worst_dpo = 0.0;
  const int models = 120;
  for (int k = 0; k < models; ++k) {
    SplitMix64 rng(9000 + static_cast<std::uint64_t>(k));
    const auto order = static_cast<std::uint32_t>(rng() % 3);
    const auto vocab = static_cast<std::uint32_t>(2 + rng() % (order == 2 ? 3 : 7));
    const auto model = random_toy_model(order, vocab, 1.0, 2 * static_cast<std::uint64_t>(k) + 1);
    const auto reference = random_toy_model(order, vocab, 1.0, 2 * static_cast<std::uint64_t>(k) + 2);
    const std::size_t pairs = 1 + rng() % 4;
    const auto human = random_sequences(rng, pairs, 3 + rng() % 8, vocab);
    const auto machine = random_sequences(rng, pairs, 3 + rng() % 8, vocab);
    const PairedBatch batch{human, machine};
    const double gamma = 1.0 + static_cast<double>(rng() % 10);
    const double beta = 0.05 + 0.1 * static_cast<double>(rng() % 10);
    auto rebuild = [&](const Eigen::MatrixXd& logits) { return ToyScoringModel(order, vocab, logits); };

    const auto ddl_fd = oracle::central_difference(
        [&](const Eigen::MatrixXd& x) { return ddl_loss(rebuild(x), batch, gamma).loss; }, model.logits());
    worst_ddl = std::max(worst_ddl, oracle::relative_error(ddl_loss(model, batch, gamma).gradient, ddl_fd));
    const auto dpo_fd = oracle::central_difference(
        [&](const Eigen::MatrixXd& x) { return dpo_loss(rebuild(x), reference, batch, beta).loss; }, model.logits());
    worst_dpo = std::max(worst_dpo, oracle::relative_error(dpo_loss(model, reference, batch, beta).gradient, dpo_fd));
  }
  const double secs = elapsed(start);
  return {worst_ddl <= 1e-4 && worst_dpo <= 1e-4 && secs < 30.0,
          fmt("%d models, max rel err ddl %.2e dpo %.2e, %.1fs < 30s", models, worst_ddl, worst_dpo, secs)};
}

struct SynthSplit {
  std::vector<TokenSequence> train_h, train_m, test_h, test_m;
  ToyScoringModel init;
};

const SynthSplit& synth_split() {
  static const SynthSplit split = [] {
    SynthConfig config;
    config.seed = 1;
    config.vocab = 16;
    config.order = 1;
    config.length = 64;
    config.count = 400;
    config.machine_temperature = 0.5;
    config.human_temperature = 1.5;
    const auto corpus = synth_task(config);
    SynthSplit s;
    s.train_h.assign(corpus.human.begin(), corpus.human.begin() + 200);
    s.train_m.assign(corpus.machine.begin(), corpus.machine.begin() + 200);
    s.test_h.assign(corpus.human.begin() + 200, corpus.human.end());
    s.test_m.assign(corpus.machine.begin() + 200, corpus.machine.end());
    s.init = random_toy_model(1, 16, 0.1, 8);
    return s;
  }();
  return split;
}

double held_out_auroc(const ToyScoringModel& model) {
  const auto& s = synth_split();
  ScoredLabelSet set;
  for (double d : toy_discrepancies(model, s.test_h)) set.entries.push_back({d, Label::Human});
  for (double d : toy_discrepancies(model, s.test_m)) set.entries.push_back({d, Label::Machine});
  return auroc(set);
}

Outcome ddl_separates() {
  const auto start = std::chrono::steady_clock::now();
  const auto& s = synth_split();
  const double before = held_out_auroc(s.init);
  const auto [trained, trace] = train(s.init, {s.train_h, s.train_m}, DDLConfig{});
  const double after = held_out_auroc(trained);
  const double secs = elapsed(start);
  return {after >= 0.95 && before <= 0.80 && secs < 300.0,
          fmt("held-out AUROC %.4f (untrained %.4f), delta_d %.2f, %.1fs < 300s", after, before,
              trace.back().delta_d, secs)};
}

Outcome gamma_plateau() {
  const auto& s = synth_split();
  double lo = 1.0, hi = 0.0;
  std::string values;
  for (double gamma : {50.0, 100.0, 500.0, 10000.0}) {
    DDLConfig config;
    config.gamma = gamma;
    const double a = held_out_auroc(train(s.init, {s.train_h, s.train_m}, config).first);
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    values += fmt("%g:%.4f ", gamma, a);
  }
  return {hi - lo <= 0.03, values + fmt("spread %.4f <= 0.03", hi - lo)};
}

Outcome beta_trend() {
  const auto& s = synth_split();
  std::vector<double> delta;
  std::string values;
  for (double beta : {0.05, 0.5, 0.95}) {
    DPOConfig config;
    config.beta = beta;
    delta.push_back(train(s.init, {s.train_h, s.train_m}, config).second.back().delta_d);
    values += fmt("%g:%.3f ", beta, delta.back());
  }
  int inversions = 0;
  bool within = true;
  for (std::size_t i = 0; i + 1 < delta.size(); ++i) {
    if (delta[i + 1] > delta[i]) {
      ++inversions;
      within = within && delta[i + 1] - delta[i] <= 0.05 * std::abs(delta[i]);
    }
  }
  return {inversions == 0 || (inversions == 1 && within), values + fmt("inversions %d", inversions)};
}

// ---- eval-metrics ----

Outcome metric_oracles() {
  SplitMix64 rng(77);
  int agree = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 499;
    ScoredLabelSet set;
    const bool coarse = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Label label = i == 0 ? Label::Machine : i == 1 ? Label::Human : (rng() % 2 ? Label::Machine : Label::Human);
      double score = standard_normal(rng) + (label == Label::Machine ? 0.5 : 0.0);
      if (coarse) score = std::round(score * 3.0);
      set.entries.push_back({score, label});
    }
    agree += auroc(set) == oracle::pairwise_auroc(set) ? 1 : 0;
  }
  const double imp = improvement(0.9525, 0.8597) * 100.0;
  return {agree == 500 && std::abs(imp - 66.14) <= 0.01,
          fmt("%d/500 sets exact, improvement(0.9525, 0.8597) = %.4f%%", agree, imp)};
}

// ---- refcluster ----

Outcome refcluster_oracle() {
  SplitMix64 rng(88);
  int agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t nm = 1 + rng() % 100;
    const std::size_t nh = 1 + rng() % 100;
    std::vector<double> m(nm), h(nh);
    const bool coarse = trial % 2 == 0;
    for (auto& x : m) x = coarse ? std::round(4.0 * standard_normal(rng) + 2.0) / 2.0 : standard_normal(rng) + 1.0;
    for (auto& x : h) x = coarse ? std::round(4.0 * standard_normal(rng) - 2.0) / 2.0 : standard_normal(rng) - 1.0;
    const std::size_t k = 1 + rng() % (nm + nh);
    const double d = coarse ? std::round(6.0 * standard_normal(rng)) / 2.0 : 2.0 * standard_normal(rng);
    agree += estimate_pm(build_reference(m, h, k), d) == oracle::full_scan_pm(m, h, k, d) ? 1 : 0;
  }
  const std::vector<double> m = {2.0, 3.0}, h = {0.0, 1.0}, one = {1.0}, minus = {-1.0};
  const auto ref = build_reference(m, h, 2);
  const double a = estimate_pm(ref, 2.5);
  const double b = estimate_pm(ref, 0.5);
  const double c = estimate_pm(build_reference(one, minus, 2), 0.0);
  return {agree == 1000 && a == 1.0 && b == 0.0 && c == 0.5,
          fmt("%d/1000 instances exact, hand examples %.1f %.1f %.1f", agree, a, b, c)};
}

// ---- bench-harness ----

Outcome cleaning_boundaries() {
  auto words = [](std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i);
    return s;
  };
  auto ok = [](const CleanResult& r) { return std::holds_alternative<Accept>(r); };
  const bool pre = !ok(pre_clean(words(95))) && ok(pre_clean(words(100))) && ok(pre_clean(words(200))) &&
                   !ok(pre_clean(words(201)));
  const bool post = !ok(post_clean(words(89))) && ok(post_clean(words(90))) && ok(post_clean(words(220))) &&
                    !ok(post_clean(words(221)));
  return {pre && post, fmt("pre 95/100/200/201 %s, post 89/90/220/221 %s", pre ? "ok" : "wrong",
                           post ? "ok" : "wrong")};
}

// ---- backend-protocol ----

double as_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

// Stored fields of `a` rounded to f32 equal those of `b`.
bool same_at_f32(const LogProbMatrix& a, const LogProbMatrix& b) {
  if (a.rows() != b.rows() || a.vocab() != b.vocab()) return false;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (a.row(i).index() != b.row(i).index()) return false;
    if (const auto* da = std::get_if<DenseRow>(&a.row(i))) {
      const auto& db = std::get<DenseRow>(b.row(i));
      for (Eigen::Index t = 0; t < da->logprobs.size(); ++t) {
        if (as_f32(da->logprobs[t]) != db.logprobs[t]) return false;
      }
      continue;
    }
    const auto& ta = std::get<TopKRow>(a.row(i));
    const auto& tb = std::get<TopKRow>(b.row(i));
    if (ta.entries.size() != tb.entries.size() || ta.tail_count != tb.tail_count) return false;
    if (as_f32(ta.tail_mass) != tb.tail_mass) return false;
    for (std::size_t k = 0; k < ta.entries.size(); ++k) {
      if (ta.entries[k].token != tb.entries[k].token) return false;
      if (as_f32(ta.entries[k].logprob) != tb.entries[k].logprob) return false;
    }
  }
  return true;
}

Outcome protocol() {
  SplitMix64 rng(99);
  int round_trips = 0;
  const int trials = 300;
  for (int trial = 0; trial < trials; ++trial) {
    const Eigen::Index s = 1 + static_cast<Eigen::Index>(rng() % 20);
    const Eigen::Index v = 2 + static_cast<Eigen::Index>(rng() % 60);
    auto m = LogProbMatrix::from_dense(oracle::random_log_matrix(rng, s, v));
    if (trial % 2) m = project_topk(m, static_cast<std::uint32_t>(1 + rng() % static_cast<std::uint64_t>(v)));
    TokenSequence seq;
    for (Eigen::Index i = 0; i < s; ++i) seq.tokens.push_back(static_cast<TokenId>(rng() % static_cast<std::uint64_t>(v)));
    const auto bytes = encode(m, seq);
    const auto back = decode(bytes);
    round_trips += back.tokens == seq && same_at_f32(m, back.matrix) && encode(back.matrix, back.tokens) == bytes;
  }

  // Fixtures written independently with Python's struct module.
  Eigen::MatrixXd dense(2, 3);
  dense << std::log(0.5), std::log(0.25), std::log(0.25), std::log(0.125), std::log(0.375), std::log(0.5);
  const bool golden_dense =
      encode(LogProbMatrix::from_dense(dense), TokenSequence{{0, 2}}) ==
      from_hex("4c504d3101000200000003000000001872"
               "31bf1872b1bf1872b1bf921505c0a0177bbf187231bf0000000002000000");
  TopKRow r0;
  r0.entries = {{3, std::log(0.6)}, {1, std::log(0.3)}};
  r0.tail_mass = 0.1;
  r0.tail_count = 3;
  TopKRow r1;
  r1.entries = {{0, 0.0}};
  const bool golden_topk = encode(LogProbMatrix(5, {r0, r1}), TokenSequence{{4, 0}}) ==
                           from_hex("4c504d31010002000000050000000102000300000078c502bf01000000c81b9a"
                                    "bfcdcccc3d030000000100000000000000000000000000000000000400000000000000");

  auto backend = std::make_shared<ToyBackend>(random_toy_model(1, 32, 1.0, 3));
  Client client([backend] { return std::make_unique<InProcessConnection>(backend, ReplyOrder::Reversed); });
  std::vector<LogProbRequest> requests;
  for (int i = 0; i < 8; ++i) {
    LogProbRequest r;
    r.request_id = "req-" + std::to_string(i);
    r.text = std::string(static_cast<std::size_t>(i + 1) * 2, 'a');
    for (int w = 0; w < i + 2; ++w) *r.text += " w" + std::to_string(w * 7 + i);
    r.want_tokens = true;
    requests.push_back(r);
  }
  const auto got = client.fetch_all(requests);
  int served = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const auto tokens = toy_tokenize(*requests[i].text, 32);
    served += got[i].tokens == tokens && same_at_f32(toy_logprob_matrix(backend->model(), tokens), got[i].matrix);
  }
  return {round_trips == trials && golden_dense && golden_topk && served == 8,
          fmt("%d/%d round trips, golden dense %s top-k %s, in-process toy backend %d/8 paired", round_trips, trials,
              golden_dense ? "ok" : "CHANGED", golden_topk ? "ok" : "CHANGED", served)};
}

}  // namespace

int main() {
  criterion("discrepancy-oracle", mc_vs_analytic);
  criterion("discrepancy-hand-values", hand_values);
  criterion("gradient-check", gradients);
  criterion("ddl-separates", ddl_separates);
  criterion("gamma-plateau", gamma_plateau);
  criterion("beta-trend", beta_trend);
  criterion("metric-oracles", metric_oracles);
  criterion("refcluster-oracle", refcluster_oracle);
  criterion("cleaning-boundaries", cleaning_boundaries);
  criterion("protocol", protocol);
  std::printf("%d criteria failed\n", failures);
  return failures;
}
