#include <fstream>

#include <json.hpp>

#include "detect/bench.hpp"
#include "detect/error.hpp"

namespace detect {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::Generate: return "Generate";
    case Task::Polish: return "Polish";
    case Task::Rewrite: return "Rewrite";
  }
  return "?";
}

std::string_view to_string(Domain domain) {
  switch (domain) {
    case Domain::Academic: return "Academic";
    case Domain::Email: return "Email";
    case Domain::Website: return "Website";
    case Domain::News: return "News";
    case Domain::Comment: return "Comment";
  }
  return "?";
}

std::string_view to_string(Scenario scenario) { return scenario == Scenario::DIG ? "DIG" : "SIG"; }

std::string_view to_string(Label label) { return label == Label::Machine ? "Machine" : "Human"; }

Task parse_task(std::string_view name) {
  if (name == "Generate") return Task::Generate;
  if (name == "Polish") return Task::Polish;
  if (name == "Rewrite") return Task::Rewrite;
  throw Error(ErrorCode::BadTask, "unknown task '" + std::string(name) + "'");
}

Domain parse_domain(std::string_view name) {
  for (Domain d : kDomains) {
    if (to_string(d) == name) return d;
  }
  throw Error(ErrorCode::BadRecord, "unknown domain '" + std::string(name) + "'");
}

Scenario parse_scenario(std::string_view name) {
  if (name == "DIG") return Scenario::DIG;
  if (name == "SIG") return Scenario::SIG;
  throw Error(ErrorCode::BadRecord, "unknown scenario '" + std::string(name) + "'");
}

Label parse_label(std::string_view name) {
  if (name == "Machine") return Label::Machine;
  if (name == "Human") return Label::Human;
  throw Error(ErrorCode::BadRecord, "unknown label '" + std::string(name) + "'");
}

std::string to_json_line(const BenchRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["text"] = r.text;
  if (r.token_ids) j["token_ids"] = r.token_ids->tokens;
  j["label"] = to_string(r.label);
  j["task"] = to_string(r.task);
  j["domain"] = to_string(r.domain);
  j["source_model"] = r.source_model;
  j["scenario"] = to_string(r.scenario);
  if (r.style) j["style"] = *r.style;
  if (r.pair_id) j["pair_id"] = *r.pair_id;
  return j.dump();
}

BenchRecord record_from_json_line(std::string_view line) {
  BenchRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.id = j.at("id").get<std::string>();
    r.text = j.value("text", "");
    if (j.contains("token_ids")) r.token_ids = TokenSequence{j["token_ids"].get<std::vector<TokenId>>()};
    r.label = parse_label(j.at("label").get<std::string>());
    r.task = parse_task(j.at("task").get<std::string>());
    r.domain = parse_domain(j.at("domain").get<std::string>());
    r.source_model = j.value("source_model", "");
    r.scenario = parse_scenario(j.at("scenario").get<std::string>());
    if (j.contains("style") && !j["style"].is_null()) r.style = j["style"].get<std::string>();
    if (j.contains("pair_id") && !j["pair_id"].is_null()) r.pair_id = j["pair_id"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadRecord, e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::BadRecord, e.what());
  }
  if (r.id.empty()) throw Error(ErrorCode::BadRecord, "empty id");
  if (r.label == Label::Machine && r.source_model.empty()) {
    throw Error(ErrorCode::BadRecord, "machine record " + r.id + " has no source_model");
  }
  if (r.text.empty() && (!r.token_ids || r.token_ids->size() == 0)) {
    throw Error(ErrorCode::BadRecord, "record " + r.id + " has neither text nor token_ids");
  }
  return r;
}

std::vector<BenchRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  std::vector<BenchRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json_line(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::BadRecord, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_records(const std::vector<BenchRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << to_json_line(r) << '\n';
}

}  // namespace detect
