#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "detect/logprob.hpp"

namespace detect {

/// Exactly one of `text` / `token_ids` is set. top_k == 0 asks for dense rows.
struct LogProbRequest {
  std::string request_id;
  std::optional<std::string> text;
  std::optional<TokenSequence> token_ids;
  std::uint32_t top_k = 0;
  bool want_tokens = false;
};

inline constexpr std::uint32_t kDefaultTopK = 4096;

std::string to_json(const LogProbRequest& request);
/// Throws BadRecord on malformed JSON or when text/token_ids are not exclusive.
LogProbRequest request_from_json(std::string_view text);

// LogProbFile ("LPM1"), all integers and floats little-endian:
//   magic[4] "LPM1" | version u16 | s u32 | v u32 | mode u8 (0 dense, 1 top-k)
//   dense: s*v f32 row-major
//   top-k: per row K u16, K*(u32 token, f32 logprob), f32 tail_mass, u32 tail_count
//   token ids: s*u32
inline constexpr std::uint16_t kLogProbFileVersion = 1;

struct DecodedFile {
  LogProbMatrix matrix;
  TokenSequence tokens;
};

/// Rows must be all dense or all top-k; values are narrowed to f32.
std::vector<std::uint8_t> encode(const LogProbMatrix& matrix, const TokenSequence& seq);

/// Throws BadMagic, Truncated, or InvariantViolation naming the failing row.
DecodedFile decode(std::span<const std::uint8_t> bytes);

void save_logprob_file(const LogProbMatrix& matrix, const TokenSequence& seq, const std::filesystem::path& path);
DecodedFile load_logprob_file(const std::filesystem::path& path);

/// Keeps the k most likely tokens of every dense row and folds the rest into
/// the tail aggregate. Top-k rows pass through unchanged.
LogProbMatrix project_topk(const LogProbMatrix& matrix, std::uint32_t k);

// Wire framing. Every frame is a u32 little-endian length then the payload.
// Request:  frame(request JSON)
// Reply:    frame(header JSON {"request_id","status":"ok"|"error","error"}) frame(LogProbFile or empty)
std::vector<std::uint8_t> frame(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> frame(std::string_view payload);

struct Reply {
  std::string request_id;
  bool ok = true;
  std::string error;
  std::vector<std::uint8_t> file;
};

std::vector<std::uint8_t> encode_reply(const Reply& reply);
std::string reply_header_json(const Reply& reply);
/// Fills request_id / ok / error from a header frame payload.
Reply reply_from_header(std::string_view header);

}  // namespace detect
