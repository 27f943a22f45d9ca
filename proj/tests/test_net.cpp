#include "tegrid/admm/chain_coordinator.hpp"
#include "tegrid/chain/block_log.hpp"
#include "tegrid/net/bench.hpp"
#include "tegrid/scenario/scenario.hpp"

#include <doctest.h>

#include <set>
#include <thread>

using namespace tegrid;
using namespace tegrid::net;

namespace {

/// Sends `count` numbered unicasts to pseudo-random peers at start, then
/// counts what arrives.
class Counter final : public Endpoint {
 public:
  Counter(std::uint32_t self, std::uint32_t peers, std::size_t count) : self_(self), peers_(peers), count_(count) {}

  std::vector<Outbound> on_message(const WireMessage& msg, std::int64_t) override {
    ByteReader r(msg.payload);
    const std::uint64_t seq = r.u64();
    auto& last = last_seq_[msg.sender];
    if (seq <= last && last != 0) ++out_of_order;
    last = seq;
    received.insert({msg.sender, seq});
    ++deliveries;
    return {};
  }
  std::vector<Outbound> on_tick(std::int64_t) override {
    started_ = true;
    std::vector<Outbound> out;
    std::mt19937_64 rng(self_);
    for (std::size_t k = 1; k <= count_; ++k) {
      std::uint32_t to = static_cast<std::uint32_t>(rng() % (peers_ - 1));
      if (to >= self_) ++to;
      ByteWriter w;
      w.u64(k);
      out.push_back({to, {MessageKind::Ack, self_, std::move(w).take()}});
      ++expected_out[to];
    }
    return out;
  }
  std::int64_t deadline_us(std::int64_t now) const override { return started_ ? kNeverUs : now; }

  std::set<std::pair<std::uint32_t, std::uint64_t>> received;
  std::map<std::uint32_t, std::size_t> expected_out;
  std::map<std::uint32_t, std::uint64_t> last_seq_;
  std::size_t deliveries = 0;
  std::size_t out_of_order = 0;

 private:
  std::uint32_t self_;
  std::uint32_t peers_;
  std::size_t count_;
  bool started_ = false;
};

/// Broadcasts once at start.
class Shouter final : public Endpoint {
 public:
  std::vector<Outbound> on_message(const WireMessage& m, std::int64_t now) override {
    log.emplace_back(m.sender, now);
    return {};
  }
  std::vector<Outbound> on_tick(std::int64_t) override {
    done = true;
    return {{std::nullopt, {MessageKind::TxBroadcast, 0, Bytes{1, 2, 3}}}};
  }
  std::int64_t deadline_us(std::int64_t now) const override { return done ? kNeverUs : now; }
  std::vector<std::pair<std::uint32_t, std::int64_t>> log;
  bool done = false;
};

std::vector<std::tuple<std::uint32_t, std::uint32_t, std::int64_t>> trace_run(std::uint64_t seed) {
  SimNetwork net({5.0, 10.0, seed});
  std::vector<std::unique_ptr<Shouter>> eps;
  for (int i = 0; i < 5; ++i) {
    eps.push_back(std::make_unique<Shouter>());
    net.attach(*eps.back());
  }
  std::vector<std::tuple<std::uint32_t, std::uint32_t, std::int64_t>> trace;
  net.on_deliver = [&](std::uint32_t to, const WireMessage& m, std::int64_t at) {
    trace.emplace_back(m.sender, to, at);
  };
  net.run_until(1'000'000);
  return trace;
}

}  // namespace

TEST_CASE("wire encoding test vector and canonical rejects") {
  const WireMessage m{MessageKind::TxBroadcast, 0x01020304, Bytes{'a', 'b', 'c'}};
  const Bytes enc = encode(m);
  CHECK(to_hex(enc) == "010403020103000000616263");
  CHECK(decode(enc) == m);
  CHECK(to_hex(encode({MessageKind::Ack, 7, {}})) == "040700000000000000");

  Bytes bad = enc;
  bad[0] = 5;
  CHECK_THROWS_AS(decode(bad), DecodeError);
  bad = enc;
  bad.push_back(0);
  CHECK_THROWS_WITH_AS(decode(bad), "trailing bytes", DecodeError);
  bad = enc;
  bad.pop_back();
  CHECK_THROWS_WITH_AS(decode(bad), "truncated input", DecodeError);
  // Length field above 1 MiB is rejected before reading the body.
  Bytes huge = from_hex("020000000001001000");
  CHECK_THROWS_AS(decode(huge), DecodeError);
  CHECK_THROWS_AS(encode({MessageKind::Ack, 0, Bytes(kMaxPayload + 1)}), std::invalid_argument);
  CHECK_NOTHROW(encode({MessageKind::Ack, 0, Bytes(kMaxPayload)}));
}

TEST_CASE("one-node network broadcasts to nobody") {
  SimNetwork net;
  Shouter s;
  net.attach(s);
  net.run_until(1000);
  CHECK(net.stats().sent == 0);
  CHECK(net.stats().delivered == 0);
}

TEST_CASE("simulated delivery is deterministic for a fixed seed") {
  const auto a = trace_run(42);
  const auto b = trace_run(42);
  const auto c = trace_run(43);
  CHECK(a.size() == 20);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("48 nodes x 1000 messages: no loss, no duplicates, FIFO per link") {
  constexpr std::uint32_t kNodes = 48;
  SimNetwork net({2.0, 20.0, 9});
  std::vector<std::unique_ptr<Counter>> eps;
  for (std::uint32_t i = 0; i < kNodes; ++i) {
    eps.push_back(std::make_unique<Counter>(i, kNodes, 1000));
    net.attach(*eps.back());
  }
  net.run_until(10'000'000);
  std::size_t total = 0;
  for (std::uint32_t to = 0; to < kNodes; ++to) {
    std::size_t expected = 0;
    for (const auto& e : eps) {
      const auto it = e->expected_out.find(to);
      if (it != e->expected_out.end()) expected += it->second;
    }
    CHECK(eps[to]->deliveries == expected);
    CHECK(eps[to]->received.size() == expected);  // no duplicates
    CHECK(eps[to]->out_of_order == 0);
    total += eps[to]->deliveries;
  }
  CHECK(total == kNodes * 1000);
  CHECK(net.stats().delivered == total);
  CHECK(net.stats().failed == 0);
}

TEST_CASE("message to a down node is retried once then reported failed") {
  SimNetwork net({5.0, 0.0, 1});
  Shouter a, b, c;
  net.attach(a);
  net.attach(b);
  net.attach(c);
  net.set_down(2, true);
  net.run_until(1'000'000);
  // b and c both broadcast... c is down and never ticks.
  CHECK(net.stats().retried == 2);
  CHECK(net.stats().failed == 2);
  CHECK(a.log.size() == 1);
  CHECK(b.log.size() == 1);
  CHECK(c.log.empty());
}

TEST_CASE("downed node recovers if it comes back before the retry") {
  SimNetwork net({5.0, 0.0, 1});
  Shouter a, b;
  net.attach(a);
  net.attach(b);
  net.set_down(1, true);
  net.step(kNeverUs);                 // a broadcasts at t=0
  net.run_until(6000);                // first attempt fails at 5 ms
  net.set_down(1, false);
  net.run_until(1'000'000);
  CHECK(net.stats().retried == 1);
  CHECK(net.stats().failed == 0);
  REQUIRE(b.log.size() == 1);
  CHECK(b.log[0].second == 10'000);
}

TEST_CASE("benchmark: capacity plateau and idle confirmation delay") {
  BenchConfig cfg;
  cfg.validators = 5;
  cfg.offered_tps = {1, 100, 200, 300};
  cfg.duration_s = 8;
  cfg.warmup_s = 2;
  const BenchResult r = run_bench(cfg);
  REQUIRE(r.points.size() == 4);
  CHECK(r.capacity_tps == doctest::Approx(200));
  CHECK(r.points[1].committed_tps == doctest::Approx(100).epsilon(0.05));
  for (std::size_t i = 1; i < r.points.size(); ++i) {
    CHECK(r.points[i].committed_tps >= r.points[i - 1].committed_tps * 0.98);
  }
  CHECK(std::abs(r.plateau_tps - r.capacity_tps) <= 0.1 * r.capacity_tps);
  CHECK(r.idle_tcd_ms <= 2.0 * static_cast<double>(cfg.block_interval_ms));
  CHECK(r.points[0].censored == 0);
  // Overload queues up: delay grows.
  CHECK(r.points[3].mean_tcd_ms > 5 * r.points[1].mean_tcd_ms);
}

TEST_CASE("tcp transport: handshake, genesis check, framing") {
  const Digest g1 = chain::sha256(std::string_view("chain-1"));
  const Digest g2 = chain::sha256(std::string_view("chain-2"));
  std::mutex mu;
  std::vector<WireMessage> got;
  TcpTransport server(0, g1, [&](WireMessage m) {
    std::lock_guard lock(mu);
    got.push_back(std::move(m));
  });
  const auto port = server.listen("127.0.0.1", 0);

  TcpTransport client(5, g1, [](WireMessage) {});
  client.connect({0, "127.0.0.1", port}, std::chrono::seconds(5));
  CHECK(client.peers() == std::vector<std::uint32_t>{0});
  for (std::uint32_t k = 0; k < 100; ++k) {
    ByteWriter w;
    w.u32(k);
    CHECK(client.send({0, {MessageKind::VoteBroadcast, 999, std::move(w).take()}}));
  }
  CHECK(client.send({std::nullopt, {MessageKind::Ack, 0, Bytes(300'000, 7)}}));

  TcpTransport stranger(6, g2, [](WireMessage) {});
  CHECK_THROWS_AS(stranger.connect({0, "127.0.0.1", port}, std::chrono::milliseconds(500)),
                  TransportError);

  for (int i = 0; i < 200; ++i) {
    {
      std::lock_guard lock(mu);
      if (got.size() == 101) break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  std::lock_guard lock(mu);
  REQUIRE(got.size() == 101);
  for (std::uint32_t k = 0; k < 100; ++k) {
    CHECK(got[k].sender == 5);  // stamped with the handshake identity
    ByteReader r(got[k].payload);
    CHECK(r.u32() == k);
  }
  CHECK(got[100].payload.size() == 300'000);
  CHECK(server.peers() == std::vector<std::uint32_t>{5});
}

TEST_CASE("tcp nodes agree and a late joiner catches up from history") {
  const auto g = admm::coordinator_genesis(3, 50, TcpNodeRunner::wall_clock_ms());
  std::vector<std::unique_ptr<chain::Node>> nodes;
  std::vector<std::unique_ptr<TcpNodeRunner>> runners;
  std::vector<std::uint16_t> ports;
  for (std::uint32_t v = 0; v < 3; ++v) {
    nodes.push_back(std::make_unique<chain::Node>(
        g, std::make_unique<contract::TransactiveContract>(),
        chain::NodeOptions{v, admm::validator_key(v), nullptr}));
    runners.push_back(std::make_unique<TcpNodeRunner>(*nodes.back(), g.hash()));
    ports.push_back(runners.back()->listen("127.0.0.1", 0));
  }
  for (std::uint32_t v = 1; v < 3; ++v) {
    for (std::uint32_t w = 0; w < v; ++w) runners[v]->connect({w, "127.0.0.1", ports[w]}, std::chrono::seconds(5));
  }
  for (auto& r : runners) r->start();
  std::this_thread::sleep_for(std::chrono::milliseconds(600));

  // Observer joins late.
  chain::Node observer(g, std::make_unique<contract::TransactiveContract>(), chain::NodeOptions{7, std::nullopt, nullptr});
  TcpNodeRunner obs(observer, g.hash());
  obs.listen("127.0.0.1", 0);
  obs.connect({0, "127.0.0.1", ports[0]}, std::chrono::seconds(5));
  obs.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  obs.stop();
  for (auto& r : runners) r->stop();

  const auto h = nodes[0]->ledger().height();
  CHECK(h >= 8);
  CHECK(observer.ledger().height() + 2 >= h);
  CHECK(observer.stats().blocks_rejected == 0);
  for (const auto& n : nodes) {
    const auto common = std::min(n->blocks().size(), nodes[0]->blocks().size());
    REQUIRE(common > 0);
    CHECK(n->blocks()[common - 1].hash() == nodes[0]->blocks()[common - 1].hash());
    CHECK(n->stats().blocks_rejected == 0);
  }
  const auto oc = observer.blocks().size();
  REQUIRE(oc > 0);
  CHECK(observer.blocks()[oc - 1].hash() == nodes[0]->blocks()[oc - 1].hash());
}

TEST_CASE("chain-backed ADMM matches the in-process run on two_prosumer_tiny") {
  const auto s = scenario::load_scenario(std::string(TEGRID_SCENARIO_DIR) + "/two_prosumer_tiny.json");
  const auto& prof = s.days.front();
  admm::InProcessCoordinator local(prof.size(), s.admm);
  const auto a = admm::run_admm(prof, s.tariff, s.admm, local);

  admm::SimChainCoordinator chain(prof.size(), s.admm, 3, 1000, {5.0, 5.0, 3});
  const auto b = admm::run_admm(prof, s.tariff, s.admm, chain);
  REQUIRE(a.status == admm::AdmmStatus::Converged);
  REQUIRE(b.status == admm::AdmmStatus::Converged);
  CHECK(a.iterations == b.iterations);
  double worst = 0;
  for (std::size_t u = 0; u < prof.size(); ++u) {
    for (std::size_t v = 0; v < prof.size(); ++v) {
      for (std::size_t t = 0; t < energy::kSlots; ++t) {
        worst = std::max(worst, std::abs(a.trades.at(u, v)[t] - b.trades.at(u, v)[t]));
      }
    }
  }
  CHECK(worst <= 1e-6);

  // Every validator holds the same state and the log replays to it.
  const Digest root = chain.state_root(0);
  CHECK(chain.state_root(1) == root);
  CHECK(chain.state_root(2) == root);
  CHECK(chain::replay(chain.genesis(), contract::TransactiveContract{}, chain.blocks()) == root);
}
