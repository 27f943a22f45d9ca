#pragma once

#include "tegrid/net/wire.hpp"

#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <queue>
#include <random>

namespace tegrid::chain {
class Node;
}

namespace tegrid::net {

inline constexpr std::int64_t kNeverUs = std::numeric_limits<std::int64_t>::max();

/// Anything attached to the simulated network. Times are virtual microseconds.
class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual std::vector<Outbound> on_message(const WireMessage& msg, std::int64_t now_us) = 0;
  virtual std::vector<Outbound> on_tick(std::int64_t /*now_us*/) { return {}; }
  virtual std::int64_t deadline_us(std::int64_t /*now_us*/) const { return kNeverUs; }
};

/// Adapts a consensus node (millisecond clock) to the simulator.
class NodeEndpoint final : public Endpoint {
 public:
  explicit NodeEndpoint(chain::Node& node) : node_(node) {}
  std::vector<Outbound> on_message(const WireMessage& msg, std::int64_t now_us) override;
  std::vector<Outbound> on_tick(std::int64_t now_us) override;
  std::int64_t deadline_us(std::int64_t now_us) const override;

 private:
  chain::Node& node_;
};

/// Collects whatever it receives; stands in for external clients.
class Inbox final : public Endpoint {
 public:
  std::vector<Outbound> on_message(const WireMessage& msg, std::int64_t) override {
    received.push_back(msg);
    return {};
  }
  std::vector<WireMessage> received;
};

/// One-way link delay: base_ms + jitter_ms * U[0, 1).
struct LatencyModel {
  double base_ms = 5.0;
  double jitter_ms = 0.0;
  std::uint64_t seed = 1;
};

struct SimStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t failed = 0;   // target down at delivery time, after the retry
  std::uint64_t retried = 0;
};

/// Deterministic discrete-event network. Links are FIFO; a broadcast is one
/// message per attached endpoint other than the sender. The same seed and
/// the same inputs give the same delivery sequence.
class SimNetwork {
 public:
  explicit SimNetwork(LatencyModel latency = {});

  /// Returns the endpoint id; ids are dense and assigned in order.
  std::uint32_t attach(Endpoint& endpoint);
  std::size_t size() const { return endpoints_.size(); }

  void set_down(std::uint32_t id, bool down);
  bool is_down(std::uint32_t id) const { return slots_.at(id).down; }

  /// Enqueues `out` as sent by `from` at the current time.
  void send(std::uint32_t from, std::vector<Outbound> out);
  void post(std::uint32_t from, std::uint32_t to, WireMessage msg);

  std::int64_t now_us() const { return now_us_; }
  /// Processes the next event at or before `limit_us`; false if none.
  bool step(std::int64_t limit_us);
  void run_until(std::int64_t until_us);
  /// Runs until `done()` holds (checked after each event) or `limit_us`.
  bool run_until(const std::function<bool()>& done, std::int64_t limit_us);

  const SimStats& stats() const { return stats_; }
  /// Called for every delivered message (to, message, time).
  std::function<void(std::uint32_t, const WireMessage&, std::int64_t)> on_deliver;

 private:
  struct Event {
    std::int64_t at;
    std::uint64_t seq;
    std::uint32_t from;
    std::uint32_t to;
    bool retry;
    WireMessage msg;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };
  struct Slot {
    Endpoint* endpoint;
    bool down = false;
    std::int64_t deadline = kNeverUs;
  };

  std::int64_t sample_latency_us();
  void enqueue(std::uint32_t from, std::uint32_t to, WireMessage msg);
  void refresh_deadline(std::uint32_t id);

  LatencyModel latency_;
  std::mt19937_64 rng_;
  std::vector<Endpoint*> endpoints_;
  std::vector<Slot> slots_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::int64_t> link_tail_;
  std::uint64_t seq_ = 0;
  std::int64_t now_us_ = 0;
  SimStats stats_;
};

}  // namespace tegrid::net
