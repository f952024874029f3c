#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "detect/protocol.hpp"
#include "detect/toy_model.hpp"

namespace detect {

/// Byte-stream transport. Implementations throw Transport on I/O failure and
/// Timeout when read_exact cannot complete in time.
class Connection {
public:
  virtual ~Connection() = default;
  virtual void write(std::span<const std::uint8_t> bytes) = 0;
  virtual void read_exact(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) = 0;
};

using ConnectionFactory = std::function<std::unique_ptr<Connection>()>;

/// Server-side request handler.
class Backend {
public:
  virtual ~Backend() = default;
  virtual Reply handle(const LogProbRequest& request) = 0;
};

/// Whitespace-delimited words hashed (FNV-1a) into [0, vocab).
TokenSequence toy_tokenize(std::string_view text, std::uint32_t vocab);

/// Serves log-probabilities from a toy model.
class ToyBackend : public Backend {
public:
  explicit ToyBackend(ToyScoringModel model) : model_(std::move(model)) {}
  Reply handle(const LogProbRequest& request) override;
  const ToyScoringModel& model() const noexcept { return model_; }

private:
  ToyScoringModel model_;
};

/// Parses a request frame payload, runs the backend, and returns reply bytes.
/// Malformed requests produce an error reply, never an exception.
std::vector<std::uint8_t> serve_frame(Backend& backend, std::span<const std::uint8_t> request_payload);

enum class ReplyOrder { Fifo, Reversed };

/// In-process transport: requests written to it are answered by a backend
/// when the client next reads. Reversed order exercises id-based pairing.
class InProcessConnection : public Connection {
public:
  explicit InProcessConnection(std::shared_ptr<Backend> backend, ReplyOrder order = ReplyOrder::Fifo)
      : backend_(std::move(backend)), order_(order) {}

  void write(std::span<const std::uint8_t> bytes) override;
  void read_exact(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override;

private:
  std::shared_ptr<Backend> backend_;
  ReplyOrder order_;
  std::vector<std::uint8_t> inbound_;
  std::vector<std::vector<std::uint8_t>> pending_;
  std::vector<std::uint8_t> outbound_;
  std::size_t read_pos_ = 0;
};

class TcpConnection : public Connection {
public:
  TcpConnection(const std::string& host, std::uint16_t port, std::chrono::milliseconds connect_timeout);
  ~TcpConnection() override;
  TcpConnection(const TcpConnection&) = delete;
  TcpConnection& operator=(const TcpConnection&) = delete;

  void write(std::span<const std::uint8_t> bytes) override;
  void read_exact(std::span<std::uint8_t> out, std::chrono::milliseconds timeout) override;

private:
  int fd_ = -1;
};

/// Accepts connections on 127.0.0.1 and answers frames with a backend, one
/// thread per connection. Port 0 picks a free port.
class TcpServer {
public:
  TcpServer(std::shared_ptr<Backend> backend, std::uint16_t port = 0);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  void stop();

private:
  void accept_loop();

  std::shared_ptr<Backend> backend_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread acceptor_;
  std::mutex mutex_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
  bool stopping_ = false;
};

/// "tcp://host:port" -> factory. Throws InvalidArgument otherwise.
ConnectionFactory tcp_factory(std::string_view endpoint, std::chrono::milliseconds connect_timeout);

struct ClientOptions {
  std::chrono::milliseconds timeout{60000};
  int retries = 2;
};

struct FetchResult {
  LogProbMatrix matrix;
  TokenSequence tokens;
};

/// Pipelining client. Replies are paired with requests by request_id and
/// validated; a transport failure reconnects and resends the unanswered
/// requests, at most `retries` times.
class Client {
public:
  explicit Client(ConnectionFactory factory, ClientOptions options = {});

  FetchResult fetch(const LogProbRequest& request);
  /// Sends every request before reading any reply. Request ids must be distinct.
  std::vector<FetchResult> fetch_all(std::span<const LogProbRequest> requests);

private:
  std::vector<FetchResult> exchange(std::span<const LogProbRequest> requests);

  ConnectionFactory factory_;
  ClientOptions options_;
  std::unique_ptr<Connection> connection_;
  std::mutex mutex_;
};

}  // namespace detect
