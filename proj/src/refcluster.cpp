#include "detect/refcluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "detect/error.hpp"

namespace detect {

std::size_t default_window_order(std::size_t total_references) {
  const auto k = static_cast<std::size_t>(std::llround(0.02 * static_cast<double>(total_references)));
  return std::max<std::size_t>(1, k);
}

ReferenceSet build_reference(std::span<const double> scores_machine, std::span<const double> scores_human,
                             std::size_t k) {
  if (scores_machine.empty() || scores_human.empty()) {
    throw Error(ErrorCode::EmptyReference, "both machine and human references are required");
  }
  auto finite = [](double x) { return std::isfinite(x); };
  if (!std::all_of(scores_machine.begin(), scores_machine.end(), finite) ||
      !std::all_of(scores_human.begin(), scores_human.end(), finite)) {
    throw Error(ErrorCode::EmptyReference, "reference discrepancies must be finite");
  }
  const std::size_t total = scores_machine.size() + scores_human.size();
  if (k < 1 || k > total) {
    throw Error(ErrorCode::BadWindowOrder,
                "k = " + std::to_string(k) + " outside [1, " + std::to_string(total) + "]");
  }
  ReferenceSet ref;
  ref.machine_.assign(scores_machine.begin(), scores_machine.end());
  ref.human_.assign(scores_human.begin(), scores_human.end());
  std::sort(ref.machine_.begin(), ref.machine_.end());
  std::sort(ref.human_.begin(), ref.human_.end());
  ref.all_.resize(total);
  std::merge(ref.machine_.begin(), ref.machine_.end(), ref.human_.begin(), ref.human_.end(), ref.all_.begin());
  ref.k_ = k;
  return ref;
}

namespace {

// References r with |r - d| <= delta form a contiguous run of a sorted list.
std::size_t count_within(const std::vector<double>& sorted, double d, double delta) {
  const auto lo = std::partition_point(sorted.begin(), sorted.end(),
                                       [&](double r) { return r < d && d - r > delta; });
  const auto hi = std::partition_point(lo, sorted.end(), [&](double r) { return !(r > d && r - d > delta); });
  return static_cast<std::size_t>(hi - lo);
}

}  // namespace

double estimate_pm(const ReferenceSet& ref, double d) {
  if (!std::isfinite(d)) throw Error(ErrorCode::InvalidArgument, "query discrepancy must be finite");
  const auto& all = ref.all_;
  // Walk outward from d, merging the two distance-sorted halves.
  auto right = static_cast<std::ptrdiff_t>(std::lower_bound(all.begin(), all.end(), d) - all.begin());
  auto left = right - 1;
  const auto n = static_cast<std::ptrdiff_t>(all.size());
  double delta = 0.0;
  for (std::size_t step = 0; step < ref.k_; ++step) {
    const bool take_left = left >= 0 && (right >= n || std::abs(all[left] - d) <= std::abs(all[right] - d));
    if (take_left) {
      delta = std::abs(all[left--] - d);
    } else {
      delta = std::abs(all[right++] - d);
    }
  }
  const auto cnt_m = static_cast<double>(count_within(ref.machine_, d, delta));
  const auto cnt_h = static_cast<double>(count_within(ref.human_, d, delta));
  return cnt_m / (cnt_m + cnt_h);
}

std::string to_json(const ReferenceSet& ref) {
  nlohmann::json j;
  j["format"] = "detect-refset";
  j["version"] = 1;
  j["k"] = ref.k();
  j["d_machine"] = ref.machine();
  j["d_human"] = ref.human();
  return j.dump();
}

ReferenceSet reference_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadRecord, std::string("reference file: ") + e.what());
  }
  if (j.value("format", "") != "detect-refset" || j.value("version", 0) != 1) {
    throw Error(ErrorCode::BadRecord, "not a version 1 detect-refset document");
  }
  try {
    const auto machine = j.at("d_machine").get<std::vector<double>>();
    const auto human = j.at("d_human").get<std::vector<double>>();
    return build_reference(machine, human, j.at("k").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadRecord, std::string("reference file: ") + e.what());
  }
}

void save(const ReferenceSet& ref, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string() + " for writing");
  out << to_json(ref) << '\n';
}

ReferenceSet load_reference(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return reference_from_json(ss.str());
}

}  // namespace detect
