#include "tegrid/net/tcp.hpp"

#include "tegrid/chain/node.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace tegrid::net {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'T', 'G', 'R', 'D'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHelloSize = 4 + 1 + 4 + 32;

bool write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return false;
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, data, n, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw TransportError("cannot resolve host " + host);
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(port);
  return addr;
}

}  // namespace

PeerAddress parse_peer(const std::string& text) {
  const auto at = text.find('@');
  const auto colon = text.rfind(':');
  if (at == std::string::npos || colon == std::string::npos || colon < at) {
    throw std::invalid_argument("peer must look like index@host:port: " + text);
  }
  PeerAddress p;
  p.index = static_cast<std::uint32_t>(std::stoul(text.substr(0, at)));
  p.host = text.substr(at + 1, colon - at - 1);
  const unsigned long port = std::stoul(text.substr(colon + 1));
  if (port == 0 || port > 65535) throw std::invalid_argument("bad port in " + text);
  p.port = static_cast<std::uint16_t>(port);
  return p;
}

struct TcpTransport::Connection {
  int fd = -1;
  std::uint32_t peer = 0;
  std::mutex write_mu;
  bool alive = true;

  bool write(const Bytes& frame) {
    std::lock_guard lock(write_mu);
    if (!alive) return false;
    alive = write_all(fd, frame.data(), frame.size());
    return alive;
  }
};

TcpTransport::TcpTransport(std::uint32_t self, Digest genesis_hash, MessageHandler on_message,
                           ConnectHandler on_connect)
    : self_(self),
      genesis_hash_(genesis_hash),
      on_message_(std::move(on_message)),
      on_connect_(std::move(on_connect)) {}

TcpTransport::~TcpTransport() { stop(); }

std::uint16_t TcpTransport::listen(const std::string& host, std::uint16_t port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(host, port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    throw TransportError("cannot bind " + host + ":" + std::to_string(port) + ": " +
                         std::strerror(errno));
  }
  if (::listen(listen_fd_, 64) != 0) throw TransportError("listen() failed");
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  acceptor_ = std::thread([this] { accept_loop(); });
  return ntohs(addr.sin_port);
}

void TcpTransport::accept_loop() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (stopping_) return;
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;
    }
    start_connection(fd);
  }
}

void TcpTransport::connect(const PeerAddress& peer, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  const sockaddr_in addr = resolve(peer.host, peer.port);
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket() failed");
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
      start_connection(fd);
      // Wait for the handshake to register the peer.
      while (std::chrono::steady_clock::now() < deadline) {
        {
          std::lock_guard lock(mu_);
          if (peers_.count(peer.index)) return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
      }
      throw TransportError("handshake with peer " + std::to_string(peer.index) + " failed");
    }
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw TransportError("cannot connect to " + peer.host + ":" + std::to_string(peer.port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

void TcpTransport::start_connection(int fd) {
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  auto conn = std::make_shared<Connection>();
  conn->fd = fd;
  std::lock_guard lock(mu_);
  if (stopping_) {
    ::close(fd);
    return;
  }
  all_.push_back(conn);
  readers_.emplace_back([this, conn] { reader(conn); });
}

void TcpTransport::reader(std::shared_ptr<Connection> conn) {
  ByteWriter hello;
  hello.fixed(kMagic);
  hello.u8(kVersion);
  hello.u32(self_);
  hello.fixed(genesis_hash_);
  if (!conn->write(hello.data())) return;

  std::array<std::uint8_t, kHelloSize> theirs{};
  if (!read_all(conn->fd, theirs.data(), theirs.size())) return;
  ByteReader hr(theirs);
  if (hr.fixed<4>() != kMagic || hr.u8() != kVersion) return;
  conn->peer = hr.u32();
  if (hr.fixed<32>() != genesis_hash_) return;
  {
    std::lock_guard lock(mu_);
    peers_[conn->peer] = conn;
  }
  if (on_connect_) on_connect_(conn->peer);

  std::array<std::uint8_t, kHeaderSize> header{};
  while (!stopping_) {
    if (!read_all(conn->fd, header.data(), header.size())) break;
    FrameHeader h;
    try {
      h = decode_header(header);
    } catch (const DecodeError&) {
      break;
    }
    WireMessage msg{h.kind, conn->peer, Bytes(h.length)};
    if (h.length > 0 && !read_all(conn->fd, msg.payload.data(), h.length)) break;
    on_message_(std::move(msg));
  }
  std::lock_guard lock(mu_);
  auto it = peers_.find(conn->peer);
  if (it != peers_.end() && it->second == conn) peers_.erase(it);
}

bool TcpTransport::send(const Outbound& out) {
  WireMessage msg = out.msg;
  msg.sender = self_;
  const Bytes frame = encode(msg);
  std::vector<std::shared_ptr<Connection>> targets;
  {
    std::lock_guard lock(mu_);
    if (out.to) {
      const auto it = peers_.find(*out.to);
      if (it == peers_.end()) return false;
      targets.push_back(it->second);
    } else {
      for (const auto& [_, c] : peers_) targets.push_back(c);
    }
  }
  bool ok = true;
  for (const auto& c : targets) ok = c->write(frame) && ok;
  return ok;
}

std::vector<std::uint32_t> TcpTransport::peers() const {
  std::lock_guard lock(mu_);
  std::vector<std::uint32_t> out;
  for (const auto& [id, _] : peers_) out.push_back(id);
  return out;
}

void TcpTransport::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
  }
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> readers;
  {
    std::lock_guard lock(mu_);
    for (const auto& c : all_) ::shutdown(c->fd, SHUT_RDWR);
    readers.swap(readers_);
  }
  for (auto& t : readers) t.join();
  std::lock_guard lock(mu_);
  for (const auto& c : all_) ::close(c->fd);
  all_.clear();
  peers_.clear();
}

TcpNodeRunner::TcpNodeRunner(chain::Node& node, Digest genesis_hash) : node_(node) {
  transport_ = std::make_unique<TcpTransport>(
      node.index(), genesis_hash,
      [this](WireMessage msg) {
        std::lock_guard lock(inbox_mu_);
        inbox_.push_back(std::move(msg));
        wake_.notify_one();
      },
      [this](std::uint32_t peer) {
        std::lock_guard lock(inbox_mu_);
        connected_.push_back(peer);
        wake_.notify_one();
      });
}

TcpNodeRunner::~TcpNodeRunner() { stop(); }

std::uint16_t TcpNodeRunner::listen(const std::string& host, std::uint16_t port) {
  return transport_->listen(host, port);
}

void TcpNodeRunner::connect(const PeerAddress& peer, std::chrono::milliseconds timeout) {
  transport_->connect(peer, timeout);
}

chain::SubmitResult TcpNodeRunner::submit(const chain::Tx& tx) {
  std::vector<Outbound> out;
  chain::SubmitResult r;
  {
    std::lock_guard lock(node_mu_);
    r = node_.submit(tx, out);
  }
  for (const auto& o : out) transport_->send(o);
  wake_.notify_one();
  return r;
}

std::int64_t TcpNodeRunner::wall_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void TcpNodeRunner::start() {
  if (running_.exchange(true)) return;
  thread_ = std::thread([this] { loop(); });
}

void TcpNodeRunner::stop() {
  if (running_.exchange(false)) {
    wake_.notify_all();
    thread_.join();
  }
  transport_->stop();
}

void TcpNodeRunner::loop() {
  while (running_) {
    std::deque<WireMessage> batch;
    std::deque<std::uint32_t> joined;
    {
      std::unique_lock lock(inbox_mu_);
      std::int64_t deadline;
      {
        std::lock_guard nl(node_mu_);
        deadline = node_.next_deadline(wall_clock_ms());
      }
      const auto pred = [&] { return !running_ || !inbox_.empty() || !connected_.empty(); };
      if (deadline == chain::kNever) {
        wake_.wait_for(lock, std::chrono::milliseconds(100), pred);
      } else {
        const auto until = std::chrono::system_clock::time_point(std::chrono::milliseconds(deadline));
        wake_.wait_until(lock, until, pred);
      }
      batch.swap(inbox_);
      joined.swap(connected_);
    }
    std::lock_guard nl(node_mu_);
    for (const std::uint32_t peer : joined) {
      // Catch the new peer up on the chain so far.
      for (auto& m : node_.history()) transport_->send({peer, std::move(m)});
    }
    for (const auto& msg : batch) {
      for (const auto& o : node_.handle(msg, wall_clock_ms())) transport_->send(o);
    }
    const std::int64_t now = wall_clock_ms();
    if (node_.next_deadline(now) <= now) {
      for (const auto& o : node_.tick(now)) transport_->send(o);
    }
  }
}

}  // namespace tegrid::net
