#pragma once

#include "tegrid/net/wire.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace tegrid::chain {
class Node;
struct SubmitResult;
struct Tx;
}

namespace tegrid::net {

struct PeerAddress {
  std::uint32_t index = 0;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// Parses "index@host:port".
PeerAddress parse_peer(const std::string& text);

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Framed messages over TCP. A connection starts with a hello carrying the
/// sender index and the genesis hash; peers on a different chain are
/// dropped. Inbound frames are stamped with the authenticated peer index.
class TcpTransport {
 public:
  using MessageHandler = std::function<void(WireMessage)>;
  using ConnectHandler = std::function<void(std::uint32_t peer)>;

  TcpTransport(std::uint32_t self, Digest genesis_hash, MessageHandler on_message,
               ConnectHandler on_connect = {});
  ~TcpTransport();
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  /// Binds and starts accepting; port 0 picks a free port, which is returned.
  std::uint16_t listen(const std::string& host, std::uint16_t port);
  /// Retries until connected or `timeout` expires.
  void connect(const PeerAddress& peer, std::chrono::milliseconds timeout);

  /// Broadcast when `out.to` is empty. Returns false if a unicast target is
  /// not connected.
  bool send(const Outbound& out);
  std::vector<std::uint32_t> peers() const;
  void stop();

 private:
  struct Connection;

  void accept_loop();
  void start_connection(int fd);
  void reader(std::shared_ptr<Connection> conn);

  std::uint32_t self_;
  Digest genesis_hash_;
  MessageHandler on_message_;
  ConnectHandler on_connect_;

  std::atomic<bool> stopping_{false};
  int listen_fd_ = -1;
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::map<std::uint32_t, std::shared_ptr<Connection>> peers_;
  std::vector<std::shared_ptr<Connection>> all_;
  std::vector<std::thread> readers_;
};

/// Drives a consensus node on the wall clock over a TcpTransport. All node
/// access goes through one event thread or with_node().
class TcpNodeRunner {
 public:
  TcpNodeRunner(chain::Node& node, Digest genesis_hash);
  ~TcpNodeRunner();

  std::uint16_t listen(const std::string& host, std::uint16_t port);
  void connect(const PeerAddress& peer, std::chrono::milliseconds timeout);
  void start();
  void stop();

  /// Local submission; admitted transactions are gossiped to peers.
  chain::SubmitResult submit(const chain::Tx& tx);

  template <typename F>
  auto with_node(F&& f) {
    std::lock_guard lock(node_mu_);
    return f(node_);
  }

  static std::int64_t wall_clock_ms();

 private:
  void loop();

  chain::Node& node_;
  std::mutex node_mu_;
  std::mutex inbox_mu_;
  std::condition_variable wake_;
  std::deque<WireMessage> inbox_;
  std::deque<std::uint32_t> connected_;
  std::atomic<bool> running_{false};
  std::thread thread_;
  std::unique_ptr<TcpTransport> transport_;
};

}  // namespace tegrid::net
