#include "detect/bench.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "detect/error.hpp"
#include "detect/rng.hpp"

namespace detect {

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

namespace {

std::string strip(std::string_view text, std::string_view drop) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (drop.find(c) == std::string_view::npos) out.push_back(c);
  }
  return out;
}

CleanResult keep_if_length(std::string text, std::size_t lo, std::size_t hi) {
  const std::size_t n = word_count(text);
  if (n < lo) return Reject{"word count " + std::to_string(n) + " < " + std::to_string(lo)};
  if (n > hi) return Reject{"word count " + std::to_string(n) + " > " + std::to_string(hi)};
  return Accept{std::move(text)};
}

void shuffle(std::vector<std::string>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng() % i]);
}

}  // namespace

CleanResult pre_clean(std::string_view text) { return keep_if_length(strip(text, "\n"), 100, 200); }

CleanResult post_clean(std::string_view text) { return keep_if_length(strip(text, "\n\r"), 90, 220); }

DomainQuota default_quota() {
  return {{Domain::Academic, 300}, {Domain::Email, 100}, {Domain::Website, 200}, {Domain::News, 200},
          {Domain::Comment, 200}};
}

SamplingAssignment dig_sig_sample(const DomainPools& pools, const std::vector<std::string>& models,
                                  const DomainQuota& quota, std::uint64_t seed) {
  for (const auto& [domain, need] : quota) {
    const auto it = pools.find(domain);
    const std::size_t have = it == pools.end() ? 0 : it->second.size();
    if (have < need * (models.size() + 1)) {
      throw Error(ErrorCode::PoolExhausted, std::string(to_string(domain)) + ": need " +
                                                std::to_string(need * (models.size() + 1)) + ", have " +
                                                std::to_string(have));
    }
  }
  SamplingAssignment out;
  for (const auto& [domain, need] : quota) {
    if (need == 0) continue;
    std::vector<std::string> pool = pools.at(domain);
    SplitMix64 rng(seed, static_cast<std::uint64_t>(domain));
    shuffle(pool, rng);
    std::size_t next = 0;
    for (const auto& model : models) {
      auto& dst = out.dig[model];
      dst.insert(dst.end(), pool.begin() + static_cast<std::ptrdiff_t>(next),
                 pool.begin() + static_cast<std::ptrdiff_t>(next + need));
      next += need;
    }
    out.sig.insert(out.sig.end(), pool.begin() + static_cast<std::ptrdiff_t>(next),
                   pool.begin() + static_cast<std::ptrdiff_t>(next + need));
  }
  for (const auto& model : models) out.dig.try_emplace(model);
  return out;
}

std::vector<std::string> mix_sources(const std::vector<std::vector<std::string>>& sources,
                                     const std::vector<double>& weights, std::size_t size, std::uint64_t seed) {
  if (sources.size() != weights.size() || sources.empty()) {
    throw Error(ErrorCode::InvalidArgument, "one weight per source required");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0) || std::any_of(weights.begin(), weights.end(), [](double w) { return w < 0.0; })) {
    throw Error(ErrorCode::InvalidArgument, "weights must be non-negative with a positive sum");
  }
  std::vector<std::size_t> take(sources.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const double exact = static_cast<double>(size) * weights[i] / total;
    take[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += take[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < size; ++r, ++assigned) ++take[remainders[r % remainders.size()].second];

  std::vector<std::string> pool;
  pool.reserve(size);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (take[i] > sources[i].size()) {
      throw Error(ErrorCode::PoolExhausted, "source " + std::to_string(i) + " has " +
                                                std::to_string(sources[i].size()) + " items, needs " +
                                                std::to_string(take[i]));
    }
    std::vector<std::string> items = sources[i];
    SplitMix64 rng(seed, i);
    shuffle(items, rng);
    pool.insert(pool.end(), items.begin(), items.begin() + static_cast<std::ptrdiff_t>(take[i]));
  }
  return pool;
}

std::string_view style_pick(std::uint64_t seed, std::uint64_t index) {
  // 2^64 is a multiple of 16, so the modulo is exactly uniform.
  return kStyles[SplitMix64(seed, index)() % kStyles.size()];
}

std::string prompt_render(Task task, std::string_view style, std::string_view original) {
  const std::string s(style);
  const std::string o(original);
  switch (task) {
    case Task::Generate:
      return "Write an article about 150 words in a " + s + " style starting exactly with: " + o;
    case Task::Polish:
      return "Polish the following text in a " + s +
             " style without missing any original details. Ensure that the length of the polished text is "
             "similar to the original text. Directly output your polished text. Here is the original text: " +
             o;
    case Task::Rewrite:
      return "Paraphrase the following text in a " + s +
             " style without missing any original details. Ensure that the length of the paraphrased text is "
             "similar to the original text. Directly output your paraphrased text. Here is the original text: " +
             o;
  }
  throw Error(ErrorCode::BadTask, "unknown task");
}

std::string prompt_render(std::string_view task, std::string_view style, std::string_view original) {
  return prompt_render(parse_task(task), style, original);
}

std::string opening_words(std::string_view text, std::size_t n) {
  std::string out;
  std::size_t taken = 0;
  std::size_t i = 0;
  while (i < text.size() && taken < n) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) {
      if (!out.empty()) out.push_back(' ');
      out.append(text.substr(start, i - start));
      ++taken;
    }
  }
  return out;
}

}  // namespace detect
