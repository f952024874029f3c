#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "detect/baselines.hpp"
#include "detect/bench.hpp"
#include "detect/client.hpp"
#include "detect/discrepancy.hpp"
#include "detect/refcluster.hpp"

namespace detect {

enum class Detector { DDL, FastDetect, Likelihood, LogRank, Entropy, LRR };

/// "ddl", "fastdetect", "likelihood", "logrank", "entropy", "lrr".
Detector parse_detector(std::string_view name);
std::string_view to_string(Detector detector);
Orientation orientation_of(Detector detector);

struct DetectorOptions {
  EstimationMode mode = Analytic{};            // used by ddl
  std::optional<ReferenceSet> reference;       // ddl: adds p_machine
};

struct DetectorOutput {
  double score = 0.0;
  Orientation orientation = Orientation::HigherIsMachine;
  std::optional<DiscrepancyScore> discrepancy;
  std::optional<double> p_machine;
};

/// ddl scores d_c in the configured estimation mode (the scoring model is
/// expected to be the discrepancy-trained one); fastdetect is always the
/// analytic d_c; the rest delegate to the baselines.
DetectorOutput run_detector(Detector detector, const LogProbMatrix& matrix, const TokenSequence& seq,
                            const DetectorOptions& options);

/// Where a record's log-probability matrix comes from. Must be safe to call
/// from several threads.
class LogProbSource {
public:
  virtual ~LogProbSource() = default;
  virtual FetchResult get(const BenchRecord& record) = 0;
};

/// Asks a backend through the wire protocol; the record id is the request id.
class ClientSource : public LogProbSource {
public:
  ClientSource(std::shared_ptr<Client> client, std::uint32_t top_k) : client_(std::move(client)), top_k_(top_k) {}
  FetchResult get(const BenchRecord& record) override;

private:
  std::shared_ptr<Client> client_;
  std::uint32_t top_k_;
};

/// Reads <dir>/<id>.lpm.
class CacheDirSource : public LogProbSource {
public:
  explicit CacheDirSource(std::filesystem::path dir) : dir_(std::move(dir)) {}
  FetchResult get(const BenchRecord& record) override;

private:
  std::filesystem::path dir_;
};

/// Serves from <dir>/<id>.lpm when present, otherwise fetches and stores it.
class CachingSource : public LogProbSource {
public:
  CachingSource(std::unique_ptr<LogProbSource> inner, std::filesystem::path dir)
      : inner_(std::move(inner)), dir_(std::move(dir)) {}
  FetchResult get(const BenchRecord& record) override;

private:
  std::unique_ptr<LogProbSource> inner_;
  std::filesystem::path dir_;
};

/// "tcp://host:port", "toy:MODEL.tsm" (in-process toy backend), or a cache
/// directory of .lpm files.
std::unique_ptr<LogProbSource> open_backend(std::string_view spec, ClientOptions options = {});

struct EvalOptions {
  std::vector<Detector> detectors;
  std::optional<Detector> baseline;  // improvement rows against this detector
  DetectorOptions detector;
  double max_failure_rate = 0.10;
  std::size_t threads = 1;
};

struct MetricCell {
  Detector detector = Detector::FastDetect;
  Task task = Task::Generate;
  Scenario scenario = Scenario::DIG;
  std::size_t n = 0;
  std::size_t n_machine = 0;
  std::size_t n_human = 0;
  double auroc = 0.0;
  double aupr = 0.0;
  double balanced_accuracy = 0.0;
  double mcc = 0.0;
  double tpr_at_5 = 0.0;
  double threshold = 0.0;
};

struct ImprovementRow {
  Detector detector = Detector::DDL;
  Detector baseline = Detector::FastDetect;
  Task task = Task::Generate;
  Scenario scenario = Scenario::DIG;
  // Empty when the baseline value is saturated at 1.
  std::optional<double> auroc;
  std::optional<double> balanced_accuracy;
  std::optional<double> mcc;
  std::optional<double> tpr_at_5;
};

struct RecordScore {
  std::string id;
  Detector detector = Detector::FastDetect;
  Label label = Label::Human;
  Task task = Task::Generate;
  Scenario scenario = Scenario::DIG;
  double score = 0.0;  // as produced by the detector, not re-oriented
};

struct RecordError {
  std::string id;
  std::string message;
};

struct SkippedCell {
  Detector detector = Detector::FastDetect;
  Task task = Task::Generate;
  Scenario scenario = Scenario::DIG;
  std::string reason;
};

struct RunReport {
  std::size_t records = 0;
  bool aborted = false;
  std::vector<MetricCell> cells;
  std::vector<ImprovementRow> improvements;
  std::vector<SkippedCell> skipped;
  std::vector<RecordError> errors;
  std::vector<RecordScore> scores;
};

/// Scores every record with every detector and aggregates metrics per
/// (detector, task, scenario). Records are folded in id order, so the report
/// does not depend on completion order. Backend failures become error
/// entries; past max_failure_rate the report is marked aborted and carries
/// no metrics. Throws EmptyReport for no records, BadRecord for duplicate ids.
RunReport run_eval(std::vector<BenchRecord> records, const EvalOptions& options, LogProbSource& source);

/// Metric cell for one (detector, task, scenario) slice of raw scores.
MetricCell compute_cell(Detector detector, Task task, Scenario scenario, const std::vector<RecordScore>& scores);

std::string to_json(const RunReport& report);

}  // namespace detect
