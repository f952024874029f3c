#include "detect/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "detect/error.hpp"
#include "detect/metrics.hpp"

namespace detect {

Detector parse_detector(std::string_view name) {
  if (name == "ddl") return Detector::DDL;
  if (name == "fastdetect") return Detector::FastDetect;
  if (name == "likelihood") return Detector::Likelihood;
  if (name == "logrank") return Detector::LogRank;
  if (name == "entropy") return Detector::Entropy;
  if (name == "lrr") return Detector::LRR;
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Detector detector) {
  switch (detector) {
    case Detector::DDL: return "ddl";
    case Detector::FastDetect: return "fastdetect";
    case Detector::Likelihood: return "likelihood";
    case Detector::LogRank: return "logrank";
    case Detector::Entropy: return "entropy";
    case Detector::LRR: return "lrr";
  }
  return "?";
}

Orientation orientation_of(Detector detector) {
  switch (detector) {
    case Detector::LogRank: return orientation_of(Method::LogRank);
    case Detector::Entropy: return orientation_of(Method::Entropy);
    default: return Orientation::HigherIsMachine;
  }
}

DetectorOutput run_detector(Detector detector, const LogProbMatrix& matrix, const TokenSequence& seq,
                            const DetectorOptions& options) {
  DetectorOutput out;
  out.orientation = orientation_of(detector);
  switch (detector) {
    case Detector::DDL: {
      const auto d = conditional_discrepancy(matrix, seq, options.mode);
      out.score = d.d_c;
      out.discrepancy = d;
      if (options.reference) out.p_machine = estimate_pm(*options.reference, d.d_c);
      break;
    }
    case Detector::FastDetect: {
      const auto d = conditional_discrepancy(matrix, seq, Analytic{});
      out.score = d.d_c;
      out.discrepancy = d;
      break;
    }
    case Detector::Likelihood: out.score = likelihood(matrix, seq).value; break;
    case Detector::LogRank: out.score = log_rank(matrix, seq).value; break;
    case Detector::Entropy:
      check_compatible(matrix, seq);
      out.score = entropy_score(matrix).value;
      break;
    case Detector::LRR: out.score = lrr(matrix, seq).value; break;
  }
  return out;
}

FetchResult ClientSource::get(const BenchRecord& record) {
  LogProbRequest request;
  request.request_id = record.id;
  if (record.token_ids) {
    request.token_ids = *record.token_ids;
  } else {
    request.text = record.text;
  }
  request.top_k = top_k_;
  request.want_tokens = true;
  return client_->fetch(request);
}

FetchResult CacheDirSource::get(const BenchRecord& record) {
  const auto path = dir_ / (record.id + ".lpm");
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Transport, "no cached matrix at " + path.string());
  auto decoded = load_logprob_file(path);
  return {std::move(decoded.matrix), std::move(decoded.tokens)};
}

FetchResult CachingSource::get(const BenchRecord& record) {
  const auto path = dir_ / (record.id + ".lpm");
  if (std::filesystem::exists(path)) {
    auto decoded = load_logprob_file(path);
    return {std::move(decoded.matrix), std::move(decoded.tokens)};
  }
  FetchResult fetched = inner_->get(record);
  std::filesystem::create_directories(dir_);
  save_logprob_file(fetched.matrix, fetched.tokens, path);
  return fetched;
}

std::unique_ptr<LogProbSource> open_backend(std::string_view spec, ClientOptions options) {
  if (spec.starts_with("tcp://")) {
    auto client = std::make_shared<Client>(tcp_factory(spec, options.timeout), options);
    return std::make_unique<ClientSource>(std::move(client), kDefaultTopK);
  }
  if (spec.starts_with("toy:")) {
    auto backend = std::make_shared<ToyBackend>(load_toy_model(std::string(spec.substr(4))));
    auto client = std::make_shared<Client>(
        [backend]() -> std::unique_ptr<Connection> { return std::make_unique<InProcessConnection>(backend); },
        options);
    return std::make_unique<ClientSource>(std::move(client), 0);
  }
  const std::filesystem::path dir{std::string(spec)};
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::InvalidArgument, "backend '" + std::string(spec) + "' is not tcp://, toy: or a directory");
  }
  return std::make_unique<CacheDirSource>(dir);
}

namespace {

struct RecordOutcome {
  std::vector<double> scores;  // one per detector
  std::optional<std::string> error;
};

RecordOutcome score_one(const BenchRecord& record, const EvalOptions& options, LogProbSource& source) {
  RecordOutcome out;
  try {
    const FetchResult fetched = source.get(record);
    const TokenSequence& seq = record.token_ids ? *record.token_ids : fetched.tokens;
    for (Detector d : options.detectors) {
      out.scores.push_back(run_detector(d, fetched.matrix, seq, options.detector).score);
    }
  } catch (const std::exception& e) {
    out.scores.clear();
    out.error = e.what();
  }
  return out;
}

double oriented(Detector detector, double score) {
  return orientation_of(detector) == Orientation::HigherIsMachine ? score : -score;
}

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

MetricCell compute_cell(Detector detector, Task task, Scenario scenario, const std::vector<RecordScore>& scores) {
  ScoredLabelSet set;
  for (const auto& s : scores) {
    if (s.detector == detector && s.task == task && s.scenario == scenario) {
      set.entries.push_back({oriented(detector, s.score), s.label});
    }
  }
  MetricCell cell;
  cell.detector = detector;
  cell.task = task;
  cell.scenario = scenario;
  cell.n = set.entries.size();
  cell.n_machine = set.count(Label::Machine);
  cell.n_human = set.count(Label::Human);
  cell.auroc = auroc(set);
  cell.aupr = aupr(set);
  cell.threshold = balanced_threshold(set);
  cell.balanced_accuracy = balanced_accuracy(set, cell.threshold);
  cell.mcc = mcc(set, cell.threshold);
  cell.tpr_at_5 = tpr_at_fpr(set, 0.05);
  return cell;
}

RunReport run_eval(std::vector<BenchRecord> records, const EvalOptions& options, LogProbSource& source) {
  if (records.empty()) throw Error(ErrorCode::EmptyReport, "no records to evaluate");
  if (options.detectors.empty()) throw Error(ErrorCode::InvalidArgument, "no detectors selected");
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].id == records[i - 1].id) throw Error(ErrorCode::BadRecord, "duplicate id " + records[i].id);
  }

  std::vector<RecordOutcome> outcomes(records.size());
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, records.size()));
  if (threads == 1) {
    for (std::size_t i = 0; i < records.size(); ++i) outcomes[i] = score_one(records[i], options, source);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < records.size(); i = next++) {
          outcomes[i] = score_one(records[i], options, source);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  RunReport report;
  report.records = records.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (outcomes[i].error) {
      report.errors.push_back({r.id, *outcomes[i].error});
      continue;
    }
    for (std::size_t k = 0; k < options.detectors.size(); ++k) {
      report.scores.push_back({r.id, options.detectors[k], r.label, r.task, r.scenario, outcomes[i].scores[k]});
    }
  }
  if (static_cast<double>(report.errors.size()) > options.max_failure_rate * static_cast<double>(records.size())) {
    report.aborted = true;
    return report;
  }

  std::set<std::pair<Task, Scenario>> slices;
  for (const auto& r : records) slices.emplace(r.task, r.scenario);
  for (Detector d : options.detectors) {
    for (const auto& [task, scenario] : slices) {
      try {
        report.cells.push_back(compute_cell(d, task, scenario, report.scores));
      } catch (const Error& e) {
        report.skipped.push_back({d, task, scenario, e.what()});
      }
    }
  }

  if (options.baseline) {
    auto find = [&](Detector d, Task t, Scenario s) -> const MetricCell* {
      for (const auto& c : report.cells) {
        if (c.detector == d && c.task == t && c.scenario == s) return &c;
      }
      return nullptr;
    };
    auto imp = [](double now, double before) -> std::optional<double> {
      if (!(before < 1.0)) return std::nullopt;
      return improvement(now, before);
    };
    for (const auto& c : report.cells) {
      if (c.detector == *options.baseline) continue;
      const MetricCell* base = find(*options.baseline, c.task, c.scenario);
      if (!base) continue;
      report.improvements.push_back({c.detector, *options.baseline, c.task, c.scenario, imp(c.auroc, base->auroc),
                                     imp(c.balanced_accuracy, base->balanced_accuracy), imp(c.mcc, base->mcc),
                                     imp(c.tpr_at_5, base->tpr_at_5)});
    }
  }
  return report;
}

std::string to_json(const RunReport& report) {
  using json = nlohmann::ordered_json;
  json j;
  j["records"] = report.records;
  j["aborted"] = report.aborted;
  j["cells"] = json::array();
  for (const auto& c : report.cells) {
    j["cells"].push_back({{"detector", to_string(c.detector)},
                          {"task", to_string(c.task)},
                          {"scenario", to_string(c.scenario)},
                          {"n", c.n},
                          {"n_machine", c.n_machine},
                          {"n_human", c.n_human},
                          {"auroc", c.auroc},
                          {"aupr", c.aupr},
                          {"balanced_accuracy", c.balanced_accuracy},
                          {"mcc", c.mcc},
                          {"tpr_at_5", c.tpr_at_5},
                          {"threshold", finite_or_null(c.threshold)}});
  }
  j["improvements"] = json::array();
  for (const auto& r : report.improvements) {
    j["improvements"].push_back({{"detector", to_string(r.detector)},
                                 {"baseline", to_string(r.baseline)},
                                 {"task", to_string(r.task)},
                                 {"scenario", to_string(r.scenario)},
                                 {"auroc", optional_number(r.auroc)},
                                 {"balanced_accuracy", optional_number(r.balanced_accuracy)},
                                 {"mcc", optional_number(r.mcc)},
                                 {"tpr_at_5", optional_number(r.tpr_at_5)}});
  }
  j["skipped_cells"] = json::array();
  for (const auto& s : report.skipped) {
    j["skipped_cells"].push_back({{"detector", to_string(s.detector)},
                                  {"task", to_string(s.task)},
                                  {"scenario", to_string(s.scenario)},
                                  {"reason", s.reason}});
  }
  j["errors"] = json::array();
  for (const auto& e : report.errors) j["errors"].push_back({{"id", e.id}, {"error", e.message}});
  j["scores"] = json::array();
  for (const auto& s : report.scores) {
    j["scores"].push_back({{"id", s.id},
                           {"detector", to_string(s.detector)},
                           {"label", to_string(s.label)},
                           {"task", to_string(s.task)},
                           {"scenario", to_string(s.scenario)},
                           {"score", finite_or_null(s.score)},
                           {"orientation", to_string(orientation_of(s.detector))}});
  }
  return j.dump(2) + "\n";
}

}  // namespace detect
