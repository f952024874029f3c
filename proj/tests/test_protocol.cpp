#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "detect/bytes.hpp"
#include "detect/protocol.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace detect;

namespace {

std::vector<std::uint8_t> read_file(const std::string& name) {
  std::ifstream in(std::string(DETECT_TEST_DATA) + "/" + name, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Eigen::MatrixXd log_probs(std::initializer_list<std::initializer_list<double>> rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double p : r) m(i, j++) = std::log(p);
    ++i;
  }
  return m;
}

LogProbMatrix golden_topk_matrix() {
  TopKRow a;
  a.entries = {{3, std::log(0.6)}, {1, std::log(0.3)}};
  a.tail_mass = 0.1;
  a.tail_count = 3;
  TopKRow b;
  b.entries = {{0, 0.0}};
  return LogProbMatrix(5, {a, b});
}

double as_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

void check_same(const LogProbMatrix& a, const LogProbMatrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.vocab() == b.vocab());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    REQUIRE(a.row(i).index() == b.row(i).index());
    if (const auto* da = std::get_if<DenseRow>(&a.row(i))) {
      const auto& db = std::get<DenseRow>(b.row(i));
      for (Eigen::Index t = 0; t < da->logprobs.size(); ++t) CHECK(as_f32(da->logprobs[t]) == db.logprobs[t]);
    } else {
      const auto& ta = std::get<TopKRow>(a.row(i));
      const auto& tb = std::get<TopKRow>(b.row(i));
      REQUIRE(ta.entries.size() == tb.entries.size());
      for (std::size_t k = 0; k < ta.entries.size(); ++k) {
        CHECK(ta.entries[k].token == tb.entries[k].token);
        CHECK(as_f32(ta.entries[k].logprob) == tb.entries[k].logprob);
      }
      CHECK(as_f32(ta.tail_mass) == tb.tail_mass);
      CHECK(ta.tail_count == tb.tail_count);
    }
  }
}

}  // namespace

TEST_CASE("dense golden bytes") {
  const auto golden = read_file("golden_dense.lpm");
  const auto m = LogProbMatrix::from_dense(log_probs({{0.5, 0.25, 0.25}, {0.125, 0.375, 0.5}}));
  const TokenSequence seq{{0, 2}};
  CHECK(encode(m, seq) == golden);
  const auto decoded = decode(golden);
  check_same(m, decoded.matrix);
  CHECK(decoded.tokens == seq);
}

TEST_CASE("top-k golden bytes") {
  const auto golden = read_file("golden_topk.lpm");
  const auto m = golden_topk_matrix();
  const TokenSequence seq{{4, 0}};
  CHECK(encode(m, seq) == golden);
  const auto decoded = decode(golden);
  check_same(m, decoded.matrix);
  CHECK(decoded.tokens == seq);
}

TEST_CASE("header layout") {
  const auto bytes = encode(LogProbMatrix::from_dense(log_probs({{0.5, 0.5}})), TokenSequence{{1}});
  bytes::Reader r(bytes);
  CHECK(std::string(reinterpret_cast<const char*>(bytes.data()), 4) == "LPM1");
  r.raw(4);
  CHECK(r.u16() == kLogProbFileVersion);
  CHECK(r.u32() == 1);
  CHECK(r.u32() == 2);
  CHECK(r.u8() == 0);
  CHECK(bytes.size() == 4 + 2 + 4 + 4 + 1 + 2 * 4 + 4);
}

TEST_CASE("dense round trip on random matrices") {
  SplitMix64 rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index s = 1 + static_cast<Eigen::Index>(rng() % 20);
    const Eigen::Index v = 2 + static_cast<Eigen::Index>(rng() % 50);
    const auto m = LogProbMatrix::from_dense(oracle::random_log_matrix(rng, s, v));
    TokenSequence seq;
    for (Eigen::Index i = 0; i < s; ++i) seq.tokens.push_back(static_cast<TokenId>(rng() % static_cast<std::uint64_t>(v)));
    const auto bytes = encode(m, seq);
    const auto decoded = decode(bytes);
    check_same(m, decoded.matrix);
    CHECK(decoded.tokens == seq);
    CHECK(encode(decoded.matrix, decoded.tokens) == bytes);
  }
}

TEST_CASE("top-k round trip on random projections") {
  SplitMix64 rng(72);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index s = 1 + static_cast<Eigen::Index>(rng() % 10);
    const Eigen::Index v = 3 + static_cast<Eigen::Index>(rng() % 60);
    const auto k = static_cast<std::uint32_t>(1 + rng() % static_cast<std::uint64_t>(v));
    const auto m = project_topk(LogProbMatrix::from_dense(oracle::random_log_matrix(rng, s, v)), k);
    REQUIRE(validate(m).empty());
    TokenSequence seq;
    for (Eigen::Index i = 0; i < s; ++i) seq.tokens.push_back(static_cast<TokenId>(rng() % static_cast<std::uint64_t>(v)));
    const auto bytes = encode(m, seq);
    const auto decoded = decode(bytes);
    check_same(m, decoded.matrix);
    CHECK(encode(decoded.matrix, decoded.tokens) == bytes);
  }
}

TEST_CASE("projection keeps the k most likely tokens") {
  const auto dense = LogProbMatrix::from_dense(log_probs({{0.1, 0.4, 0.2, 0.3}}));
  const auto topk = project_topk(dense, 2);
  const auto& row = std::get<TopKRow>(topk.row(0));
  REQUIRE(row.entries.size() == 2);
  CHECK(row.entries[0].token == 1);
  CHECK(row.entries[1].token == 3);
  CHECK(row.tail_mass == doctest::Approx(0.3));
  CHECK(row.tail_count == 2);
  CHECK(project_topk(topk, 1).row(0).index() == 1);
}

TEST_CASE("decode rejects damaged files") {
  const auto golden = read_file("golden_dense.lpm");
  auto bad_magic = golden;
  bad_magic[1] ^= 0x01;
  CHECK(support::error_of([&] { decode(bad_magic); }) == ErrorCode::BadMagic);

  auto cut = golden;
  cut.resize(cut.size() - 4);
  CHECK(support::error_of([&] { decode(cut); }) == ErrorCode::Truncated);
  for (std::size_t n = 0; n < golden.size(); ++n) {
    const std::vector<std::uint8_t> prefix(golden.begin(), golden.begin() + static_cast<std::ptrdiff_t>(n));
    const auto code = support::error_of([&] { decode(prefix); });
    CHECK((code == ErrorCode::Truncated || code == ErrorCode::BadMagic));
  }

  auto trailing = golden;
  trailing.push_back(0);
  CHECK(support::error_of([&] { decode(trailing); }) == ErrorCode::InvariantViolation);
}

TEST_CASE("decode names the row that breaks an invariant") {
  const auto m = LogProbMatrix::from_dense(log_probs({{0.5, 0.5}, {0.5, 0.3}}));
  const auto bytes = encode(m, TokenSequence{{0, 1}});
  try {
    decode(bytes);
    FAIL("expected InvariantViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvariantViolation);
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("file save and load") {
  const auto path = std::filesystem::temp_directory_path() / "detect_test.lpm";
  const auto m = golden_topk_matrix();
  save_logprob_file(m, TokenSequence{{4, 0}}, path);
  const auto back = load_logprob_file(path);
  check_same(m, back.matrix);
  std::filesystem::remove(path);
}

TEST_CASE("request JSON") {
  LogProbRequest r;
  r.request_id = "r1";
  r.token_ids = TokenSequence{{1, 2}};
  r.top_k = 7;
  r.want_tokens = true;
  const auto back = request_from_json(to_json(r));
  CHECK(back.request_id == "r1");
  CHECK(back.token_ids == r.token_ids);
  CHECK_FALSE(back.text);
  CHECK(back.top_k == 7);
  CHECK(back.want_tokens);

  CHECK(support::error_of([] { request_from_json(R"({"request_id":"a"})"); }) == ErrorCode::BadRecord);
  CHECK(support::error_of([] { request_from_json(R"({"request_id":"a","text":"x","token_ids":[1]})"); }) ==
        ErrorCode::BadRecord);
  CHECK(support::error_of([] { request_from_json("]"); }) == ErrorCode::BadRecord);
}

TEST_CASE("reply framing") {
  Reply reply;
  reply.request_id = "abc";
  reply.file = {1, 2, 3};
  const auto bytes = encode_reply(reply);
  bytes::Reader r(bytes);
  const std::uint32_t header_len = r.u32();
  const auto header = r.raw(header_len);
  const Reply parsed = reply_from_header(std::string(header.begin(), header.end()));
  CHECK(parsed.request_id == "abc");
  CHECK(parsed.ok);
  CHECK(r.u32() == 3);
  CHECK(r.remaining() == 3);

  CHECK(frame(std::string_view("hi")) == std::vector<std::uint8_t>{2, 0, 0, 0, 'h', 'i'});
  CHECK(support::error_of([] { reply_from_header("{}"); }) == ErrorCode::BadResponse);
}
