#include "tegrid/net/sim.hpp"

#include "tegrid/chain/node.hpp"

#include <cmath>

namespace tegrid::net {

namespace {

std::int64_t to_ms(std::int64_t us) { return us / 1000; }

}  // namespace

std::vector<Outbound> NodeEndpoint::on_message(const WireMessage& msg, std::int64_t now_us) {
  return node_.handle(msg, to_ms(now_us));
}

std::vector<Outbound> NodeEndpoint::on_tick(std::int64_t now_us) {
  return node_.tick(to_ms(now_us));
}

std::int64_t NodeEndpoint::deadline_us(std::int64_t now_us) const {
  const std::int64_t d = node_.next_deadline(to_ms(now_us));
  if (d == chain::kNever) return kNeverUs;
  // Millisecond deadline reached at the start of that millisecond.
  return std::max(now_us, d * 1000);
}

SimNetwork::SimNetwork(LatencyModel latency) : latency_(latency), rng_(latency.seed) {
  if (latency.base_ms < 0 || latency.jitter_ms < 0) {
    throw std::invalid_argument("latency must be non-negative");
  }
}

std::uint32_t SimNetwork::attach(Endpoint& endpoint) {
  const auto id = static_cast<std::uint32_t>(endpoints_.size());
  endpoints_.push_back(&endpoint);
  slots_.push_back({&endpoint});
  refresh_deadline(id);
  return id;
}

void SimNetwork::set_down(std::uint32_t id, bool down) {
  slots_.at(id).down = down;
  refresh_deadline(id);
}

std::int64_t SimNetwork::sample_latency_us() {
  // 53 random bits into [0, 1), independent of the standard library's
  // distribution implementation.
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return std::llround((latency_.base_ms + latency_.jitter_ms * u) * 1000.0);
}

void SimNetwork::enqueue(std::uint32_t from, std::uint32_t to, WireMessage msg) {
  std::int64_t at = now_us_ + sample_latency_us();
  auto& tail = link_tail_[{from, to}];
  at = std::max(at, tail);
  tail = at;
  queue_.push({at, seq_++, from, to, false, std::move(msg)});
  ++stats_.sent;
}

void SimNetwork::send(std::uint32_t from, std::vector<Outbound> out) {
  for (auto& o : out) {
    if (o.to) {
      if (*o.to < endpoints_.size()) enqueue(from, *o.to, std::move(o.msg));
      continue;
    }
    for (std::uint32_t to = 0; to < endpoints_.size(); ++to) {
      if (to != from) enqueue(from, to, o.msg);
    }
  }
}

void SimNetwork::post(std::uint32_t from, std::uint32_t to, WireMessage msg) {
  enqueue(from, to, std::move(msg));
}

void SimNetwork::refresh_deadline(std::uint32_t id) {
  Slot& s = slots_[id];
  s.deadline = s.down ? kNeverUs : s.endpoint->deadline_us(now_us_);
}

bool SimNetwork::step(std::int64_t limit_us) {
  std::int64_t tick_at = kNeverUs;
  std::uint32_t tick_id = 0;
  for (std::uint32_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].deadline < tick_at) tick_at = slots_[i].deadline, tick_id = i;
  }
  // Messages due at the same instant go before timers.
  const bool message = !queue_.empty() && queue_.top().at <= tick_at;
  const std::int64_t at = message ? queue_.top().at : tick_at;
  if (at == kNeverUs || at > limit_us) return false;
  now_us_ = std::max(now_us_, at);

  if (!message) {
    send(tick_id, slots_[tick_id].endpoint->on_tick(now_us_));
    refresh_deadline(tick_id);
    return true;
  }
  Event e = queue_.top();
  queue_.pop();
  Slot& target = slots_[e.to];
  if (target.down) {
    if (!e.retry) {
      // One retransmission after another link delay.
      ++stats_.retried;
      e.retry = true;
      e.at = now_us_ + sample_latency_us();
      e.seq = seq_++;
      queue_.push(std::move(e));
    } else {
      ++stats_.failed;
    }
    return true;
  }
  ++stats_.delivered;
  if (on_deliver) on_deliver(e.to, e.msg, now_us_);
  send(e.to, target.endpoint->on_message(e.msg, now_us_));
  refresh_deadline(e.to);
  return true;
}

void SimNetwork::run_until(std::int64_t until_us) {
  while (step(until_us)) {
  }
  now_us_ = std::max(now_us_, until_us);
  for (std::uint32_t i = 0; i < slots_.size(); ++i) refresh_deadline(i);
}

bool SimNetwork::run_until(const std::function<bool()>& done, std::int64_t limit_us) {
  if (done()) return true;
  while (step(limit_us)) {
    if (done()) return true;
  }
  return false;
}

}  // namespace tegrid::net
