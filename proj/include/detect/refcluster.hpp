#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace detect {

/// Labelled reference discrepancies, each list kept sorted ascending.
class ReferenceSet {
public:
  const std::vector<double>& machine() const noexcept { return machine_; }
  const std::vector<double>& human() const noexcept { return human_; }
  std::size_t k() const noexcept { return k_; }
  std::size_t size() const noexcept { return machine_.size() + human_.size(); }

  bool operator==(const ReferenceSet&) const = default;

private:
  friend double estimate_pm(const ReferenceSet&, double);
  friend ReferenceSet build_reference(std::span<const double>, std::span<const double>, std::size_t);

  std::vector<double> machine_;
  std::vector<double> human_;
  std::vector<double> all_;
  std::size_t k_ = 1;
};

/// max(1, round(0.02 * total references)).
std::size_t default_window_order(std::size_t total_references);

/// Throws EmptyReference for an empty list or non-finite value, and
/// BadWindowOrder unless 1 <= k <= total references.
ReferenceSet build_reference(std::span<const double> scores_machine, std::span<const double> scores_human,
                             std::size_t k);

/// Machine-probability of discrepancy `d`: with delta the k-th smallest
/// distance to any reference, the share of machine references among those
/// within the closed window [d - delta, d + delta].
double estimate_pm(const ReferenceSet& ref, double d);

// JSON document {"format":"detect-refset","version":1,"k":..,"d_machine":[..],"d_human":[..]}.
std::string to_json(const ReferenceSet& ref);
ReferenceSet reference_from_json(const std::string& text);
void save(const ReferenceSet& ref, const std::filesystem::path& path);
ReferenceSet load_reference(const std::filesystem::path& path);

}  // namespace detect
