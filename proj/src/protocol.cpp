#include "detect/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include <json.hpp>

#include "detect/bytes.hpp"
#include "detect/error.hpp"

namespace detect {

namespace {

constexpr std::string_view kFileMagic = "LPM1";

}  // namespace

std::string to_json(const LogProbRequest& request) {
  nlohmann::json j;
  j["request_id"] = request.request_id;
  if (request.text) j["text"] = *request.text;
  if (request.token_ids) j["token_ids"] = request.token_ids->tokens;
  j["top_k"] = request.top_k;
  j["want_tokens"] = request.want_tokens;
  return j.dump();
}

LogProbRequest request_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    LogProbRequest r;
    r.request_id = j.at("request_id").get<std::string>();
    if (j.contains("text")) r.text = j["text"].get<std::string>();
    if (j.contains("token_ids")) r.token_ids = TokenSequence{j["token_ids"].get<std::vector<TokenId>>()};
    r.top_k = j.value("top_k", 0u);
    r.want_tokens = j.value("want_tokens", false);
    if (r.text.has_value() == r.token_ids.has_value()) {
      throw Error(ErrorCode::BadRecord, "request needs exactly one of text / token_ids");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadRecord, std::string("request: ") + e.what());
  }
}

std::vector<std::uint8_t> encode(const LogProbMatrix& matrix, const TokenSequence& seq) {
  check_compatible(matrix, seq);
  const bool dense = matrix.all_dense();
  if (!dense && !matrix.all_topk()) {
    throw Error(ErrorCode::InvalidArgument, "cannot encode a matrix mixing dense and top-k rows");
  }
  bytes::Writer w;
  w.raw(kFileMagic);
  w.u16(kLogProbFileVersion);
  w.u32(static_cast<std::uint32_t>(matrix.rows()));
  w.u32(matrix.vocab());
  w.u8(dense ? 0 : 1);
  for (const Row& r : matrix.row_list()) {
    if (dense) {
      const auto& lp = std::get<DenseRow>(r).logprobs;
      for (Eigen::Index t = 0; t < lp.size(); ++t) w.f32(static_cast<float>(lp[t]));
    } else {
      const auto& topk = std::get<TopKRow>(r);
      if (topk.entries.size() > 0xffff) throw Error(ErrorCode::InvalidArgument, "top-k row exceeds 65535 entries");
      w.u16(static_cast<std::uint16_t>(topk.entries.size()));
      for (const auto& e : topk.entries) {
        w.u32(e.token);
        w.f32(static_cast<float>(e.logprob));
      }
      w.f32(static_cast<float>(topk.tail_mass));
      w.u32(topk.tail_count);
    }
  }
  for (TokenId t : seq.tokens) w.u32(t);
  return w.take();
}

DecodedFile decode(std::span<const std::uint8_t> in) {
  bytes::Reader r(in);
  if (in.size() < kFileMagic.size()) throw Error(ErrorCode::Truncated, "shorter than the magic");
  const auto magic = r.raw(4);
  if (!std::equal(magic.begin(), magic.end(), kFileMagic.begin())) {
    throw Error(ErrorCode::BadMagic, "not an LPM1 file");
  }
  const std::uint16_t version = r.u16();
  if (version != kLogProbFileVersion) {
    throw Error(ErrorCode::InvariantViolation, "unsupported LPM1 version " + std::to_string(version));
  }
  const std::uint32_t s = r.u32();
  const std::uint32_t v = r.u32();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw Error(ErrorCode::InvariantViolation, "unknown mode " + std::to_string(mode));

  std::vector<Row> rows;
  if (mode == 0) {
    // Check the size up front so a corrupt header cannot trigger a huge allocation.
    const std::uint64_t need = (static_cast<std::uint64_t>(s) * v + s) * 4;
    if (r.remaining() < need) throw Error(ErrorCode::Truncated, "dense payload shorter than header declares");
    rows.reserve(s);
    for (std::uint32_t i = 0; i < s; ++i) {
      Eigen::VectorXd lp(v);
      for (std::uint32_t t = 0; t < v; ++t) lp[t] = r.f32();
      rows.emplace_back(DenseRow{std::move(lp)});
    }
  } else {
    if (r.remaining() / 10 < s) throw Error(ErrorCode::Truncated, "top-k payload shorter than header declares");
    rows.reserve(s);
    for (std::uint32_t i = 0; i < s; ++i) {
      TopKRow row;
      const std::uint16_t k = r.u16();
      row.entries.resize(k);
      for (auto& e : row.entries) {
        e.token = r.u32();
        e.logprob = r.f32();
        if (e.token >= v) {
          throw Error(ErrorCode::InvariantViolation, "row " + std::to_string(i) + ": token id out of range");
        }
      }
      row.tail_mass = r.f32();
      row.tail_count = r.u32();
      rows.emplace_back(std::move(row));
    }
  }
  TokenSequence seq;
  seq.tokens.resize(s);
  for (auto& t : seq.tokens) t = r.u32();
  if (r.remaining() != 0) throw Error(ErrorCode::InvariantViolation, "trailing bytes after token section");

  DecodedFile out{LogProbMatrix(v, std::move(rows)), std::move(seq)};
  if (const auto violations = validate(out.matrix); !violations.empty()) {
    throw Error(ErrorCode::InvariantViolation,
                "row " + std::to_string(violations.front().row) + ": " + violations.front().reason);
  }
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    if (out.tokens.tokens[i] >= v) {
      throw Error(ErrorCode::InvariantViolation, "row " + std::to_string(i) + ": token id out of range");
    }
  }
  return out;
}

void save_logprob_file(const LogProbMatrix& matrix, const TokenSequence& seq, const std::filesystem::path& path) {
  const auto data = encode(matrix, seq);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

DecodedFile load_logprob_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(data);
}

LogProbMatrix project_topk(const LogProbMatrix& matrix, std::uint32_t k) {
  std::vector<Row> rows;
  rows.reserve(matrix.rows());
  for (const Row& r : matrix.row_list()) {
    const auto* dense = std::get_if<DenseRow>(&r);
    if (!dense) {
      rows.push_back(r);
      continue;
    }
    const auto v = static_cast<std::uint32_t>(dense->logprobs.size());
    std::vector<TokenId> ids(v);
    std::iota(ids.begin(), ids.end(), 0u);
    const std::uint32_t keep = std::min(k, v);
    std::stable_sort(ids.begin(), ids.end(),
                     [&](TokenId a, TokenId b) { return dense->logprobs[a] > dense->logprobs[b]; });
    TopKRow row;
    double kept_mass = 0.0;
    for (std::uint32_t j = 0; j < keep; ++j) {
      row.entries.push_back({ids[j], dense->logprobs[ids[j]]});
      kept_mass += std::exp(dense->logprobs[ids[j]]);
    }
    if (keep < v) {
      double tail = 0.0;
      for (std::uint32_t j = keep; j < v; ++j) tail += std::exp(dense->logprobs[ids[j]]);
      row.tail_mass = tail > 0.0 ? tail : std::max(0.0, 1.0 - kept_mass);
      row.tail_count = v - keep;
    }
    rows.emplace_back(std::move(row));
  }
  return LogProbMatrix(matrix.vocab(), std::move(rows));
}

std::vector<std::uint8_t> frame(std::span<const std::uint8_t> payload) {
  bytes::Writer w;
  w.u32(static_cast<std::uint32_t>(payload.size()));
  auto& out = w.data();
  out.insert(out.end(), payload.begin(), payload.end());
  return w.take();
}

std::vector<std::uint8_t> frame(std::string_view payload) {
  return frame(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size()));
}

std::string reply_header_json(const Reply& reply) {
  nlohmann::json j;
  j["request_id"] = reply.request_id;
  j["status"] = reply.ok ? "ok" : "error";
  if (!reply.ok) j["error"] = reply.error;
  return j.dump();
}

std::vector<std::uint8_t> encode_reply(const Reply& reply) {
  auto out = frame(reply_header_json(reply));
  const auto body = frame(std::span<const std::uint8_t>(reply.file));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

Reply reply_from_header(std::string_view header) {
  try {
    const auto j = nlohmann::json::parse(header);
    Reply r;
    r.request_id = j.at("request_id").get<std::string>();
    r.ok = j.at("status").get<std::string>() == "ok";
    r.error = j.value("error", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadResponse, std::string("reply header: ") + e.what());
  }
}

}  // namespace detect
