#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "detect/ddl.hpp"
#include "detect/error.hpp"
#include "detect/eval.hpp"

using namespace detect;
using json = nlohmann::ordered_json;

namespace {

constexpr int kValidationFailure = 2;
constexpr int kBackendFailure = 3;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Transport:
    case ErrorCode::Timeout:
    case ErrorCode::BadResponse: return kBackendFailure;
    default: return kValidationFailure;
  }
}

std::uint64_t effective_seed(std::uint64_t flag) {
  if (const char* env = std::getenv("DETECT_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "DETECT_SEED must be an unsigned integer");
    }
  }
  return flag;
}

std::string effective_backend(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DETECT_BACKEND"); env && *env) return env;
  throw Error(ErrorCode::InvalidArgument, "no backend: pass --backend or set DETECT_BACKEND");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot open " + path + " for writing");
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

DetectorOptions detector_options(const std::string& reference, std::size_t n_samples, std::uint64_t seed) {
  DetectorOptions options;
  if (n_samples > 0) options.mode = MonteCarlo{n_samples, seed};
  if (!reference.empty()) options.reference = load_reference(reference);
  return options;
}

std::unique_ptr<LogProbSource> open_source(const std::string& backend, const std::string& cache) {
  auto source = open_backend(effective_backend(backend));
  if (cache.empty()) return source;
  return std::make_unique<CachingSource>(std::move(source), cache);
}

// ---- score ----

struct ScoreArgs {
  std::string backend, method, reference, in, out, cache;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

int run_score(const ScoreArgs& a) {
  const Detector detector = parse_detector(a.method);
  const auto records = read_records(a.in);
  const auto options = detector_options(a.reference, a.n_samples, effective_seed(a.seed));
  auto source = open_source(a.backend, a.cache);
  auto out = open_out(a.out);
  for (const auto& record : records) {
    const FetchResult fetched = source->get(record);
    const TokenSequence& seq = record.token_ids ? *record.token_ids : fetched.tokens;
    const auto result = run_detector(detector, fetched.matrix, seq, options);
    json line;
    line["id"] = record.id;
    line["label"] = to_string(record.label);
    line["method"] = to_string(detector);
    line["score"] = result.score;
    line["orientation"] = to_string(result.orientation);
    if (result.discrepancy) {
      line["d_c"] = result.discrepancy->d_c;
      line["mu"] = result.discrepancy->mu;
      line["sigma"] = result.discrepancy->sigma;
    }
    if (result.p_machine) line["p_machine"] = *result.p_machine;
    out << line.dump() << '\n';
  }
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string backend, in, methods, baseline, report, reference, cache;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

int run_eval_cmd(const EvalArgs& a) {
  EvalOptions options;
  for (const auto& name : split_list(a.methods)) options.detectors.push_back(parse_detector(name));
  if (!a.baseline.empty()) options.baseline = parse_detector(a.baseline);
  options.detector = detector_options(a.reference, a.n_samples, effective_seed(a.seed));
  options.threads = a.threads;
  auto records = read_records(a.in);
  auto source = open_source(a.backend, a.cache);
  const auto report = run_eval(std::move(records), options, *source);
  open_out(a.report) << to_json(report);
  if (!report.errors.empty()) {
    std::cerr << report.errors.size() << " of " << report.records << " records failed\n";
  }
  if (report.aborted) {
    std::cerr << "run aborted: failure rate above " << options.max_failure_rate * 100 << "%\n";
    return kBackendFailure;
  }
  return 0;
}

// ---- train-toy ----

Optimizer parse_optimizer(const json& j) {
  const std::string name = j.value("optimizer", "adam");
  if (name == "sgd") return Sgd{};
  if (name == "adam") return Adam{j.value("beta1", 0.9), j.value("beta2", 0.999), j.value("eps", 1e-8)};
  throw Error(ErrorCode::InvalidArgument, "optimizer must be adam or sgd");
}

int run_train(const std::string& config_path, const std::string& model_out, const std::string& trace_out,
              const std::string& data_out) {
  std::ifstream in(config_path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + config_path);
  json c;
  try {
    c = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  try {
    const std::uint64_t seed = effective_seed(c.value("seed", std::uint64_t{0}));
    SynthConfig synth;
    synth.seed = seed;
    const json s = c.value("synth", json::object());
    synth.vocab = s.value("vocab", synth.vocab);
    synth.order = s.value("order", synth.order);
    synth.length = s.value("length", synth.length);
    synth.count = s.value("count", synth.count);
    synth.machine_temperature = s.value("machine_temperature", synth.machine_temperature);
    synth.human_temperature = s.value("human_temperature", synth.human_temperature);
    synth.generator_scale = s.value("generator_scale", synth.generator_scale);
    const auto corpus = synth_task(synth);

    const ToyScoringModel init = random_toy_model(synth.order, synth.vocab, c.value("init_scale", 0.1), seed + 7);
    const std::string objective = c.value("objective", "ddl");
    TrainConfig config;
    if (objective == "ddl") {
      DDLConfig d;
      d.gamma = c.value("gamma", d.gamma);
      d.learning_rate = c.value("learning_rate", d.learning_rate);
      d.epochs = c.value("epochs", d.epochs);
      d.optimizer = parse_optimizer(c);
      d.seed = seed;
      d.batch_size = c.value("batch_size", d.batch_size);
      config = d;
    } else if (objective == "dpo") {
      DPOConfig d;
      d.beta = c.value("beta", d.beta);
      d.learning_rate = c.value("learning_rate", d.learning_rate);
      d.epochs = c.value("epochs", d.epochs);
      d.optimizer = parse_optimizer(c);
      d.seed = seed;
      d.batch_size = c.value("batch_size", d.batch_size);
      config = d;
    } else {
      throw Error(ErrorCode::InvalidArgument, "objective must be ddl or dpo");
    }

    const auto [model, trace] = train(init, {corpus.human, corpus.machine}, config);
    save(model, model_out);
    if (!trace_out.empty()) {
      auto out = open_out(trace_out);
      for (std::size_t e = 0; e < trace.size(); ++e) {
        json line{{"epoch", e + 1},
                  {"loss", trace[e].loss},
                  {"mean_d_human", trace[e].mean_d_human},
                  {"mean_d_machine", trace[e].mean_d_machine},
                  {"delta_d", trace[e].delta_d}};
        out << line.dump() << '\n';
      }
    }
    if (!data_out.empty()) {
      std::vector<BenchRecord> records;
      for (std::size_t i = 0; i < corpus.human.size(); ++i) {
        for (const bool machine : {false, true}) {
          BenchRecord r;
          r.id = (machine ? "m" : "h") + std::to_string(i);
          r.token_ids = machine ? corpus.machine[i] : corpus.human[i];
          r.label = machine ? Label::Machine : Label::Human;
          r.source_model = machine ? "toy-generator" : "";
          r.task = static_cast<Task>(i % 3);
          r.domain = kDomains[i % kDomains.size()];
          r.scenario = i < corpus.human.size() / 2 ? Scenario::DIG : Scenario::SIG;
          if (machine) r.pair_id = "h" + std::to_string(i);
          records.push_back(std::move(r));
        }
      }
      write_records(records, data_out);
    }
    if (!trace.empty()) {
      std::cerr << "trained " << trace.size() << " epochs: delta_d " << trace.back().delta_d << ", loss "
                << trace.back().loss << '\n';
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  return 0;
}

// ---- cluster build ----

int run_cluster_build(const std::string& scores, std::size_t k, const std::string& out_path) {
  std::ifstream in(scores);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + scores);
  std::vector<double> machine, human;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      const double d = j.contains("d_c") ? j["d_c"].get<double>() : j.at("score").get<double>();
      (parse_label(j.at("label").get<std::string>()) == Label::Machine ? machine : human).push_back(d);
    } catch (const std::exception& e) {
      throw Error(ErrorCode::BadRecord, scores + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (k == 0) k = default_window_order(machine.size() + human.size());
  save(build_reference(machine, human, k), out_path);
  return 0;
}

// ---- clean ----

int run_clean(const std::string& stage, const std::string& in, const std::string& out_path) {
  auto clean = stage == "pre" ? pre_clean : post_clean;
  auto records = read_records(in);
  std::vector<BenchRecord> kept;
  for (auto& r : records) {
    const auto result = clean(r.text);
    if (const auto* ok = std::get_if<Accept>(&result)) {
      r.text = ok->text;
      kept.push_back(std::move(r));
    } else {
      std::cerr << r.id << ": " << std::get<Reject>(result).reason << '\n';
    }
  }
  write_records(kept, out_path);
  std::cerr << "kept " << kept.size() << " of " << records.size() << " records\n";
  return 0;
}

// ---- serve-toy ----

int run_serve(const std::string& model_path, std::uint16_t port) {
  auto backend = std::make_shared<ToyBackend>(load_toy_model(model_path));
  TcpServer server(backend, port);
  std::cout << "listening on tcp://127.0.0.1:" << server.port() << std::endl;
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Machine-generated text detection"};
  app.require_subcommand(1);

  ScoreArgs score;
  auto* score_cmd = app.add_subcommand("score", "Score records with one detector, one JSON line per record");
  score_cmd->add_option("--backend", score.backend, "tcp://host:port, toy:MODEL, or a cache directory");
  score_cmd->add_option("--method", score.method, "ddl|fastdetect|likelihood|logrank|entropy|lrr")->required();
  score_cmd->add_option("--reference", score.reference, "Reference set for p_machine (ddl)");
  score_cmd->add_option("--n-samples", score.n_samples, "Monte-Carlo sample count; 0 = analytic");
  score_cmd->add_option("--seed", score.seed, "Monte-Carlo seed (DETECT_SEED overrides)");
  score_cmd->add_option("--cache", score.cache, "Store fetched matrices in this directory");
  score_cmd->add_option("--in", score.in, "Records (JSON lines)")->required();
  score_cmd->add_option("--out", score.out, "Scores (JSON lines)")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate detectors and write a metrics report");
  eval_cmd->add_option("--backend", ev.backend, "tcp://host:port, toy:MODEL, or a cache directory");
  eval_cmd->add_option("--in", ev.in, "Records (JSON lines)")->required();
  eval_cmd->add_option("--methods", ev.methods, "Comma-separated detectors")->required();
  eval_cmd->add_option("--baseline", ev.baseline, "Detector the improvement rows compare against");
  eval_cmd->add_option("--report", ev.report, "Report (JSON)")->required();
  eval_cmd->add_option("--reference", ev.reference, "Reference set for p_machine (ddl)");
  eval_cmd->add_option("--n-samples", ev.n_samples, "Monte-Carlo sample count for ddl; 0 = analytic");
  eval_cmd->add_option("--seed", ev.seed, "Monte-Carlo seed (DETECT_SEED overrides)");
  eval_cmd->add_option("--threads", ev.threads, "Records scored concurrently")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--cache", ev.cache, "Store fetched matrices in this directory");

  std::string train_config, train_out, train_trace, train_data;
  auto* train_cmd = app.add_subcommand("train-toy", "Train a toy scoring model on a synthetic task");
  train_cmd->add_option("--config", train_config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Trained model (TSM1)")->required();
  train_cmd->add_option("--trace", train_trace, "Per-epoch trace (JSON lines)");
  train_cmd->add_option("--data-out", train_data, "Write the synthetic corpus as records");

  std::string cluster_scores, cluster_out;
  std::size_t cluster_k = 0;
  auto* cluster_cmd = app.add_subcommand("cluster", "Reference clustering");
  cluster_cmd->require_subcommand(1);
  auto* build_cmd = cluster_cmd->add_subcommand("build", "Build a reference set from labelled scores");
  build_cmd->add_option("--scores", cluster_scores, "Output of `detect score`")->required();
  build_cmd->add_option("--k", cluster_k, "Window order; 0 = 2% of the references");
  build_cmd->add_option("--out", cluster_out, "Reference set (JSON)")->required();

  std::string clean_stage, clean_in, clean_out;
  auto* clean_cmd = app.add_subcommand("clean", "Apply the pre- or post-generation cleaning rules");
  clean_cmd->add_option("--stage", clean_stage, "pre|post")->required()->check(CLI::IsMember({"pre", "post"}));
  clean_cmd->add_option("--in", clean_in, "Records (JSON lines)")->required();
  clean_cmd->add_option("--out", clean_out, "Accepted records (JSON lines)")->required();

  std::string serve_model;
  std::uint16_t serve_port = 0;
  auto* serve_cmd = app.add_subcommand("serve-toy", "Serve a toy model over the wire protocol");
  serve_cmd->add_option("--model", serve_model, "Toy model (TSM1)")->required();
  serve_cmd->add_option("--port", serve_port, "Port on 127.0.0.1; 0 picks one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidationFailure;
  }

  try {
    if (*score_cmd) return run_score(score);
    if (*eval_cmd) return run_eval_cmd(ev);
    if (*train_cmd) return run_train(train_config, train_out, train_trace, train_data);
    if (*build_cmd) return run_cluster_build(cluster_scores, cluster_k, cluster_out);
    if (*clean_cmd) return run_clean(clean_stage, clean_in, clean_out);
    if (*serve_cmd) return run_serve(serve_model, serve_port);
  } catch (const Error& e) {
    std::cerr << "detect: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "detect: " << e.what() << '\n';
    return kValidationFailure;
  }
  return 0;
}
