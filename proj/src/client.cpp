#include "detect/client.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <map>
#include <optional>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "detect/bytes.hpp"
#include "detect/error.hpp"

namespace detect {

TokenSequence toy_tokenize(std::string_view text, std::uint32_t vocab) {
  TokenSequence seq;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
      h = (h ^ static_cast<unsigned char>(text[i])) * 0x100000001b3ULL;
      ++i;
    }
    seq.tokens.push_back(static_cast<TokenId>(h % vocab));
  }
  return seq;
}

Reply ToyBackend::handle(const LogProbRequest& request) {
  Reply reply;
  reply.request_id = request.request_id;
  const TokenSequence tokens =
      request.token_ids ? *request.token_ids : toy_tokenize(request.text.value_or(""), model_.vocab());
  if (tokens.size() == 0) {
    reply.ok = false;
    reply.error = "empty input";
    return reply;
  }
  try {
    LogProbMatrix matrix = toy_logprob_matrix(model_, tokens);
    if (request.top_k > 0) matrix = project_topk(matrix, request.top_k);
    reply.file = encode(matrix, tokens);
  } catch (const Error& e) {
    reply.ok = false;
    reply.error = e.what();
  }
  return reply;
}

std::vector<std::uint8_t> serve_frame(Backend& backend, std::span<const std::uint8_t> payload) {
  const std::string_view text(reinterpret_cast<const char*>(payload.data()), payload.size());
  LogProbRequest request;
  try {
    request = request_from_json(text);
  } catch (const Error& e) {
    Reply bad;
    bad.ok = false;
    bad.error = e.what();
    return encode_reply(bad);
  }
  return encode_reply(backend.handle(request));
}

void InProcessConnection::write(std::span<const std::uint8_t> bytes) {
  inbound_.insert(inbound_.end(), bytes.begin(), bytes.end());
  // Split complete request frames off the inbound buffer.
  while (inbound_.size() >= 4) {
    bytes::Reader r(inbound_);
    const std::uint32_t len = r.u32();
    if (inbound_.size() < 4 + static_cast<std::size_t>(len)) break;
    pending_.emplace_back(inbound_.begin() + 4, inbound_.begin() + 4 + len);
    inbound_.erase(inbound_.begin(), inbound_.begin() + 4 + len);
  }
}

void InProcessConnection::read_exact(std::span<std::uint8_t> out, std::chrono::milliseconds) {
  if (outbound_.size() - read_pos_ < out.size() && !pending_.empty()) {
    if (order_ == ReplyOrder::Reversed) std::reverse(pending_.begin(), pending_.end());
    for (const auto& payload : pending_) {
      const auto reply = serve_frame(*backend_, payload);
      outbound_.insert(outbound_.end(), reply.begin(), reply.end());
    }
    pending_.clear();
  }
  if (outbound_.size() - read_pos_ < out.size()) {
    throw Error(ErrorCode::Transport, "in-process peer has no reply pending");
  }
  std::copy_n(outbound_.begin() + static_cast<std::ptrdiff_t>(read_pos_), out.size(), out.begin());
  read_pos_ += out.size();
}

namespace {

void write_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Transport, std::string("send: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

// Returns false on orderly EOF before any byte was read.
bool read_all(int fd, std::span<std::uint8_t> out, std::chrono::milliseconds timeout) {
  std::size_t got = 0;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (got < out.size()) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw Error(ErrorCode::Timeout, "no reply within the deadline");
    pollfd p{fd, POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Transport, std::string("poll: ") + std::strerror(errno));
    }
    if (rc == 0) throw Error(ErrorCode::Timeout, "no reply within the deadline");
    const ssize_t n = ::recv(fd, out.data() + got, out.size() - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::Transport, std::string("recv: ") + std::strerror(errno));
    }
    if (n == 0) {
      if (got == 0) return false;
      throw Error(ErrorCode::Transport, "peer closed mid-frame");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

TcpConnection::TcpConnection(const std::string& host, std::uint16_t port, std::chrono::milliseconds connect_timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw Error(ErrorCode::Transport, "resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::string last_error = "no address";
  for (addrinfo* ai = res; ai != nullptr && fd_ < 0; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      rc = ::poll(&p, 1, static_cast<int>(connect_timeout.count()));
      int err = 0;
      socklen_t len = sizeof(err);
      if (rc == 1 && ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) == 0 && err == 0) {
        rc = 0;
      } else {
        last_error = rc == 0 ? "connect timed out" : std::strerror(err ? err : errno);
        rc = -1;
      }
    } else if (rc < 0) {
      last_error = std::strerror(errno);
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, flags);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      fd_ = fd;
    } else {
      ::close(fd);
    }
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw Error(ErrorCode::Transport, "connect " + host + ":" + service + ": " + last_error);
}

TcpConnection::~TcpConnection() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpConnection::write(std::span<const std::uint8_t> bytes) { write_all(fd_, bytes); }

void TcpConnection::read_exact(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) {
  if (!read_all(fd_, out, timeout)) throw Error(ErrorCode::Transport, "peer closed the connection");
}

TcpServer::TcpServer(std::shared_ptr<Backend> backend, std::uint16_t port) : backend_(std::move(backend)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::Transport, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(listen_fd_, 16) < 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw Error(ErrorCode::Transport, "bind/listen: " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::stop() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    stopping_ = true;
    ::shutdown(listen_fd_, SHUT_RDWR);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  if (acceptor_.joinable()) acceptor_.join();
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
  for (int fd : client_fds_) ::close(fd);
  ::close(listen_fd_);
}

void TcpServer::accept_loop() {
  for (;;) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    std::lock_guard lock(mutex_);
    if (fd < 0 || stopping_) {
      if (fd >= 0) ::close(fd);
      return;
    }
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] {
      try {
        for (;;) {
          std::uint8_t header[4];
          if (!read_all(fd, header, std::chrono::hours(24))) break;
          bytes::Reader r(header);
          std::vector<std::uint8_t> payload(r.u32());
          if (!payload.empty() && !read_all(fd, payload, std::chrono::hours(24))) break;
          write_all(fd, serve_frame(*backend_, payload));
        }
      } catch (const Error&) {
      }
      ::shutdown(fd, SHUT_RDWR);
    });
  }
}

ConnectionFactory tcp_factory(std::string_view endpoint, std::chrono::milliseconds connect_timeout) {
  constexpr std::string_view scheme = "tcp://";
  if (!endpoint.starts_with(scheme)) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must look like tcp://host:port");
  }
  const std::string_view rest = endpoint.substr(scheme.size());
  const auto colon = rest.rfind(':');
  std::uint16_t port = 0;
  if (colon == std::string_view::npos ||
      std::from_chars(rest.data() + colon + 1, rest.data() + rest.size(), port).ec != std::errc{}) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must look like tcp://host:port");
  }
  std::string host(rest.substr(0, colon));
  return [host, port, connect_timeout]() -> std::unique_ptr<Connection> {
    return std::make_unique<TcpConnection>(host, port, connect_timeout);
  };
}

Client::Client(ConnectionFactory factory, ClientOptions options)
    : factory_(std::move(factory)), options_(options) {}

FetchResult Client::fetch(const LogProbRequest& request) {
  return std::move(fetch_all(std::span<const LogProbRequest>(&request, 1)).front());
}

std::vector<FetchResult> Client::fetch_all(std::span<const LogProbRequest> requests) {
  std::lock_guard lock(mutex_);
  return exchange(requests);
}

std::vector<FetchResult> Client::exchange(std::span<const LogProbRequest> requests) {
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (!slot.emplace(requests[i].request_id, i).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate request_id " + requests[i].request_id);
    }
  }
  std::vector<std::optional<FetchResult>> results(requests.size());
  std::size_t answered = 0;

  auto read_frame = [&](Connection& c) {
    std::uint8_t header[4];
    c.read_exact(header, options_.timeout);
    bytes::Reader r(header);
    std::vector<std::uint8_t> payload(r.u32());
    if (!payload.empty()) c.read_exact(payload, options_.timeout);
    return payload;
  };

  for (int attempt = 0;; ++attempt) {
    try {
      if (!connection_) connection_ = factory_();
      for (std::size_t i = 0; i < requests.size(); ++i) {
        if (!results[i]) connection_->write(frame(to_json(requests[i])));
      }
      while (answered < requests.size()) {
        const auto header = read_frame(*connection_);
        const auto body = read_frame(*connection_);
        const Reply reply =
            reply_from_header(std::string_view(reinterpret_cast<const char*>(header.data()), header.size()));
        const auto it = slot.find(reply.request_id);
        if (it == slot.end() || results[it->second]) {
          throw Error(ErrorCode::BadResponse, "reply for unknown request_id '" + reply.request_id + "'");
        }
        if (!reply.ok) throw Error(ErrorCode::BadResponse, "backend error: " + reply.error);
        DecodedFile decoded;
        try {
          decoded = decode(body);
        } catch (const Error& e) {
          throw Error(ErrorCode::BadResponse, e.what());
        }
        results[it->second] = FetchResult{std::move(decoded.matrix), std::move(decoded.tokens)};
        ++answered;
      }
      break;
    } catch (const Error& e) {
      // The stream position is unknown after any failure; start over next time.
      connection_.reset();
      if (e.code() != ErrorCode::Transport || attempt >= options_.retries) throw;
    }
  }

  std::vector<FetchResult> out;
  out.reserve(results.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace detect
