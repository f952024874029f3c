#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "detect/logprob.hpp"
#include "detect/metrics.hpp"

namespace detect {

enum class Task { Generate, Polish, Rewrite };
enum class Domain { Academic, Email, Website, News, Comment };
enum class Scenario { DIG, SIG };

std::string_view to_string(Task task);
std::string_view to_string(Domain domain);
std::string_view to_string(Scenario scenario);
std::string_view to_string(Label label);
/// Throws BadTask for names other than Generate/Polish/Rewrite.
Task parse_task(std::string_view name);
Domain parse_domain(std::string_view name);
Scenario parse_scenario(std::string_view name);
Label parse_label(std::string_view name);

inline constexpr std::array<Domain, 5> kDomains = {Domain::Academic, Domain::Email, Domain::Website, Domain::News,
                                                   Domain::Comment};

struct BenchRecord {
  std::string id;
  std::string text;
  std::optional<TokenSequence> token_ids;
  Label label = Label::Human;
  Task task = Task::Generate;
  Domain domain = Domain::Academic;
  std::string source_model;
  Scenario scenario = Scenario::DIG;
  std::optional<std::string> style;
  std::optional<std::string> pair_id;
};

// One JSON object per line, keys named after the BenchRecord fields; enum
// values use their capitalized names ("Machine", "Polish", "SIG", ...).
std::string to_json_line(const BenchRecord& record);
/// Throws BadRecord on malformed input or a Machine record without source_model.
BenchRecord record_from_json_line(std::string_view line);
std::vector<BenchRecord> read_records(const std::filesystem::path& path);
void write_records(const std::vector<BenchRecord>& records, const std::filesystem::path& path);

// ---- cleaning ----

struct Accept {
  std::string text;
};
struct Reject {
  std::string reason;
};
using CleanResult = std::variant<Accept, Reject>;

/// Maximal runs of non-whitespace.
std::size_t word_count(std::string_view text);

/// Drops '\n'; keeps texts of 100..200 words inclusive.
CleanResult pre_clean(std::string_view text);
/// Drops '\n' and '\r'; keeps texts of 90..220 words inclusive.
CleanResult post_clean(std::string_view text);

// ---- DIG / SIG sampling ----

/// HWT ids per domain.
using DomainPools = std::map<Domain, std::vector<std::string>>;
using DomainQuota = std::map<Domain, std::size_t>;

/// 300/100/200/200/200 per 1000 texts.
DomainQuota default_quota();

struct SamplingAssignment {
  std::map<std::string, std::vector<std::string>> dig;  // per real model
  std::vector<std::string> sig;                         // shared by every model
};

/// Each pool is shuffled with the seed; every model then takes its quota per
/// domain, removing the items, and the shared SIG set is taken last.
/// Throws PoolExhausted naming the first domain that runs short.
SamplingAssignment dig_sig_sample(const DomainPools& pools, const std::vector<std::string>& models,
                                  const DomainQuota& quota, std::uint64_t seed);

/// Merges source datasets into one domain pool of `size` items, allotting
/// each source a share proportional to its weight (largest remainder).
std::vector<std::string> mix_sources(const std::vector<std::vector<std::string>>& sources,
                                     const std::vector<double>& weights, std::size_t size, std::uint64_t seed);

// ---- prompts ----

inline constexpr std::array<std::string_view, 16> kStyles = {
    "formal",    "oral",     "academic", "literary",   "critical",   "narrative",     "descriptive",  "lyric",
    "objective", "subjective", "original", "casual", "expository", "argumentative", "journalistic", "poetic"};

inline constexpr std::string_view kSystemPrompt =
    "You are a professional writing assistant who can write high-quality, coherent, and engaging articles. ";

/// Uniform, deterministic in (seed, index).
std::string_view style_pick(std::uint64_t seed, std::uint64_t index);

/// Generate expects the opening of a human text (see opening_words);
/// Polish and Rewrite take the whole text.
std::string prompt_render(Task task, std::string_view style, std::string_view original);
std::string prompt_render(std::string_view task, std::string_view style, std::string_view original);

/// First n whitespace-delimited words, single-space joined.
std::string opening_words(std::string_view text, std::size_t n = 30);

}  // namespace detect
