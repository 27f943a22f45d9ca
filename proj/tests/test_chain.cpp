#include "tegrid/chain/block_log.hpp"
#include "tegrid/chain/node.hpp"

#include <doctest.h>

#include <filesystem>
#include <queue>

using namespace tegrid;
using namespace tegrid::chain;

namespace {

/// Records the last value per sender; an empty payload fails.
class KvApp final : public Application {
 public:
  std::unique_ptr<Application> clone() const override { return std::make_unique<KvApp>(*this); }
  void begin_block(std::uint64_t height) override { height_ = height; }
  CallOutcome execute(const AccountId& sender, ByteView call, std::uint64_t) override {
    if (call.empty()) return CallOutcome::failure("empty");
    values_[sender] = Bytes(call.begin(), call.end());
    return CallOutcome::success();
  }
  void encode_state(ByteWriter& w) const override {
    w.u32(static_cast<std::uint32_t>(values_.size()));
    for (const auto& [k, v] : values_) {
      w.fixed(k);
      w.bytes(v);
    }
  }
  const std::map<AccountId, Bytes>& values() const { return values_; }

 private:
  std::uint64_t height_ = 0;
  std::map<AccountId, Bytes> values_;
};

KeyPair validator_key(std::size_t i) { return KeyPair::from_label("validator-" + std::to_string(i)); }

GenesisConfig make_genesis(std::size_t n) {
  GenesisConfig g;
  g.chain_id = "test";
  for (std::size_t i = 0; i < n; ++i) g.validators.push_back(validator_key(i).public_key);
  g.genesis_time_ms = 0;
  g.block_interval_ms = 1000;
  g.max_block_txs = 64;
  return g;
}

Bytes app_call(std::string_view s) {
  return encode_call(AppCall{Bytes(s.begin(), s.end())});
}

/// Full mesh with constant latency, driven by node deadlines.
struct Cluster {
  struct Event {
    std::int64_t at;
    std::uint64_t seq;
    std::uint32_t to;
    net::WireMessage msg;
    bool operator>(const Event& o) const { return std::tie(at, seq) > std::tie(o.at, o.seq); }
  };

  std::vector<Node> nodes;
  std::vector<bool> down;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue;
  std::uint64_t seq = 0;
  std::int64_t now = 0;
  std::int64_t latency = 5;

  Cluster(const GenesisConfig& g, std::size_t extra_keys = 0) {
    auto cache = std::make_shared<SignatureCache>();
    for (std::size_t i = 0; i < g.validators.size() + extra_keys; ++i) {
      nodes.emplace_back(g, std::make_unique<KvApp>(), NodeOptions{static_cast<std::uint32_t>(i), validator_key(i), cache});
    }
    down.assign(nodes.size(), false);
  }

  void send(std::uint32_t from, std::vector<Outbound> out) {
    for (auto& o : out) {
      if (o.to) {
        queue.push({now + latency, seq++, *o.to, std::move(o.msg)});
        continue;
      }
      for (std::uint32_t i = 0; i < nodes.size(); ++i) {
        if (i != from) queue.push({now + latency, seq++, i, o.msg});
      }
    }
  }

  void inject(std::uint32_t to, net::WireMessage msg) { queue.push({now, seq++, to, std::move(msg)}); }

  void run_until(std::int64_t end) {
    while (true) {
      std::int64_t next = kNever;
      std::uint32_t who = 0;
      for (std::uint32_t i = 0; i < nodes.size(); ++i) {
        if (down[i]) continue;
        const auto d = nodes[i].next_deadline(now);
        if (d < next) next = d, who = i;
      }
      const bool msg_first = !queue.empty() && queue.top().at <= next;
      const std::int64_t t = msg_first ? queue.top().at : next;
      if (t > end) break;
      now = t;
      if (msg_first) {
        Event e = queue.top();
        queue.pop();
        if (!down[e.to]) send(e.to, nodes[e.to].handle(e.msg, now));
      } else {
        send(who, nodes[who].tick(now));
      }
    }
    now = end;
  }

  void submit(std::uint32_t to, const Tx& tx) {
    inject(to, {net::MessageKind::TxBroadcast, 999, encode_tx_broadcast(tx)});
  }
};

}  // namespace

TEST_CASE("codecs round trip and reject non-canonical input") {
  const KeyPair k = validator_key(0);
  const Tx tx = Tx::make(k, 7, app_call("hello"));
  CHECK(decode_tx(encode_tx(tx)) == tx);

  const LedgerCall vote = VoteCall{validator_key(3).public_key, false};
  const auto back = std::get<VoteCall>(decode_call(encode_call(vote)));
  CHECK(back.candidate == validator_key(3).public_key);
  CHECK_FALSE(back.add);
  CHECK(encode_call(vote)[0] == 0);
  CHECK(app_call("x")[0] == 1);
  CHECK(encode_call(NopCall{})[0] == 2);
  CHECK_THROWS_AS(decode_call(Bytes{9}), DecodeError);

  Block b;
  b.header.height = 3;
  b.header.skip = 1;
  b.txs = {tx, tx};
  b.signature = k.sign(b.header.hash());
  Bytes enc = encode_block(b);
  CHECK(decode_block(enc) == b);
  enc.push_back(0);
  CHECK_THROWS_AS(decode_block(enc), DecodeError);

  GenesisConfig g = make_genesis(3);
  const Digest h0 = g.hash();
  g.block_interval_ms = 999;
  CHECK(g.hash() != h0);
}

TEST_CASE("ledger enforces signatures and strictly increasing nonces") {
  const GenesisConfig g = make_genesis(1);
  Ledger ledger(g, std::make_unique<KvApp>());
  const KeyPair user = KeyPair::from_label("user");

  Tx tx = Tx::make(user, 5, app_call("a"));
  CHECK(ledger.check_tx(tx) == TxError::None);
  Tx forged = tx;
  forged.call = app_call("b");
  CHECK(ledger.check_tx(forged) == TxError::BadSignature);

  const Block b = ledger.build(validator_key(0), 1000, 0, {tx, forged, Tx::make(user, 5, app_call("c"))});
  REQUIRE(b.txs.size() == 1);
  REQUIRE(ledger.apply(b).ok);
  CHECK(ledger.nonce(user.public_key) == 5u);
  CHECK(ledger.check_tx(Tx::make(user, 5, app_call("d"))) == TxError::StaleNonce);
  CHECK(ledger.check_tx(Tx::make(user, 9, app_call("d"))) == TxError::None);

  // A signed block carrying an invalid transaction is invalid as a whole.
  Block bad = ledger.build(validator_key(0), 2000, 0, {});
  bad.txs = {Tx::make(user, 4, app_call("old"))};
  bad.header.tx_root = tx_root(bad.txs);
  bad.signature = validator_key(0).sign(bad.header.hash());
  const auto r = ledger.apply(bad);
  CHECK_FALSE(r.ok);
  CHECK(r.error.find("stale nonce") != std::string::npos);
  CHECK(ledger.height() == 1);
}

TEST_CASE("failing call is included but its effects are discarded") {
  Ledger ledger(make_genesis(1), std::make_unique<KvApp>());
  const KeyPair user = KeyPair::from_label("user");
  const Digest before = ledger.state_root();
  const Block b = ledger.build(validator_key(0), 1000, 0,
                               {Tx::make(user, 1, encode_call(AppCall{}))});
  REQUIRE(b.txs.size() == 1);
  const auto r = ledger.apply(b);
  REQUIRE(r.ok);
  REQUIRE(r.outcomes.size() == 1);
  CHECK_FALSE(r.outcomes[0].ok);
  CHECK(dynamic_cast<const KvApp&>(ledger.app()).values().empty());
  CHECK(ledger.nonce(user.public_key) == 1u);
  CHECK(ledger.state_root() != before);  // nonce is part of the state
}

TEST_CASE("block checks: header tampering, timestamps, out-of-turn proposers") {
  const GenesisConfig g = make_genesis(3);
  Ledger ledger(g, std::make_unique<KvApp>());
  const Block good = ledger.build(validator_key(0), 1000, 0, {});

  Block early = ledger.build(validator_key(0), 999, 0, {});
  CHECK(ledger.verify(early).error == "timestamp too early");

  Block wrong_turn = ledger.build(validator_key(1), 1000, 0, {});
  CHECK(ledger.verify(wrong_turn).error == "proposer out of turn");

  // Skipping requires waiting the skip timeout.
  CHECK(ledger.verify(ledger.build(validator_key(1), 2500, 1, {})).error == "timestamp too early");
  CHECK(ledger.verify(ledger.build(validator_key(1), 3000, 1, {})).ok);

  Block tampered = good;
  tampered.header.state_root[0] ^= 1;
  CHECK(ledger.verify(tampered).error == "bad proposer signature");
  tampered = good;
  tampered.txs.push_back(Tx::make(validator_key(0), 1, encode_call(NopCall{})));
  CHECK(ledger.verify(tampered).error == "tx root mismatch");
  tampered = good;
  tampered.header.state_root[0] ^= 1;
  tampered.signature = validator_key(0).sign(tampered.header.hash());
  CHECK(ledger.verify(tampered).error == "state root mismatch");

  CHECK(ledger.apply(good).ok);
  CHECK_FALSE(ledger.apply(good).ok);
}

TEST_CASE("round-robin schedule holds for 200 blocks") {
  for (std::size_t n : {5u, 10u, 20u}) {
    CAPTURE(n);
    const GenesisConfig g = make_genesis(n);
    Cluster c(g);
    c.run_until(200 * 1000 + 500);
    for (const auto& node : c.nodes) {
      REQUIRE(node.blocks().size() == 200);
      CHECK(node.stats().blocks_rejected == 0);
      CHECK(node.finalized_count() >= 199);
    }
    const auto& blocks = c.nodes[0].blocks();
    for (std::size_t h = 1; h <= 200; ++h) {
      const auto& hd = blocks[h - 1].header;
      CHECK(hd.proposer == g.validators[(h - 1) % n]);
      CHECK(hd.skip == 0);
      CHECK(hd.timestamp_ms == static_cast<std::int64_t>(h) * 1000);
    }
    for (const auto& node : c.nodes) CHECK(node.ledger().head_hash() == c.nodes[0].ledger().head_hash());
  }
}

TEST_CASE("majority vote adds a validator effective at the next block") {
  const GenesisConfig g = make_genesis(3);
  Cluster c(g, 1);  // node 3 holds the candidate key
  const AccountId cand = validator_key(3).public_key;
  const Bytes add = encode_call(VoteCall{cand, true});

  // A non-validator vote fails and changes nothing.
  c.submit(0, Tx::make(KeyPair::from_label("outsider"), 1, add));
  c.run_until(1500);
  CHECK(c.nodes[0].ledger().committee().pending_votes(VoteCall{cand, true}) == 0);

  c.submit(0, Tx::make(validator_key(0), 1, add));
  c.run_until(2500);
  CHECK(c.nodes[0].ledger().committee().pending_votes(VoteCall{cand, true}) == 1);
  CHECK_FALSE(c.nodes[0].ledger().committee().contains(cand));
  // Duplicate vote by the same validator is idempotent.
  c.submit(0, Tx::make(validator_key(0), 2, add));
  c.run_until(3500);
  CHECK(c.nodes[0].ledger().committee().pending_votes(VoteCall{cand, true}) == 1);

  c.submit(1, Tx::make(validator_key(1), 1, add));
  c.run_until(4500);
  const auto& blocks = c.nodes[0].blocks();
  REQUIRE(blocks.size() == 4);
  const std::uint64_t passed_at = 4;
  for (const auto& node : c.nodes) {
    CHECK(node.ledger().committee().contains(cand));
    CHECK(node.ledger().committee().size() == 4);
    CHECK(node.ledger().committee().anchor() == passed_at + 1);
  }
  c.run_until(4 * 1000 + 8 * 1000 + 500);
  const auto& after = c.nodes[0].blocks();
  REQUIRE(after.size() == 12);
  for (std::uint64_t h = passed_at + 1; h <= 12; ++h) {
    const auto& committee = c.nodes[0].ledger().committee().validators();
    CHECK(after[h - 1].header.proposer == committee[(h - passed_at - 1) % 4]);
  }
  CHECK(after[passed_at + 3].header.proposer == cand);
  for (const auto& node : c.nodes) CHECK(node.ledger().head_hash() == c.nodes[0].ledger().head_hash());
}

TEST_CASE("out-of-turn block is rejected by every honest node") {
  const GenesisConfig g = make_genesis(5);
  Cluster c(g);
  c.run_until(2500);
  const Ledger& l = c.nodes[0].ledger();
  REQUIRE(l.height() == 2);
  // Validator 4 forges height 3 (due to validator 2) at the right time.
  const Block rogue = l.build(validator_key(4), 3000, 0, {});
  c.run_until(2990);
  for (std::uint32_t i = 0; i < 5; ++i) {
    c.inject(i, {net::MessageKind::BlockBroadcast, 4, encode_block(rogue)});
  }
  c.run_until(2995);
  for (const auto& node : c.nodes) {
    CHECK(node.ledger().height() == 2);
    CHECK(node.stats().last_block_rejection == "proposer out of turn");
  }
  c.run_until(5500);
  for (const auto& node : c.nodes) {
    CHECK(node.ledger().height() == 5);
    CHECK(node.blocks()[2].header.proposer == g.validators[2]);
  }
}

TEST_CASE("downed proposer is skipped after the skip timeout") {
  const GenesisConfig g = make_genesis(3);
  Cluster c(g);
  c.down[1] = true;
  c.run_until(1000 + 1000 + 2000 + 500);
  const auto& blocks = c.nodes[0].blocks();
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[1].header.proposer == g.validators[2]);
  CHECK(blocks[1].header.skip == 1);
  CHECK(blocks[1].header.timestamp_ms == 4000);
  // Two of three validators still finalize.
  CHECK(c.nodes[0].finalized_at(2).has_value());
}

TEST_CASE("mempool deduplicates and honours its limit") {
  Mempool m(2);
  const KeyPair u = KeyPair::from_label("u");
  const Tx a = Tx::make(u, 1, app_call("a"));
  CHECK(m.add(a) == Admission::Accepted);
  CHECK(m.add(a) == Admission::Duplicate);
  CHECK(m.add(Tx::make(u, 1, app_call("other"))) == Admission::Duplicate);
  CHECK(m.add(Tx::make(u, 2, app_call("b"))) == Admission::Accepted);
  CHECK(m.add(Tx::make(u, 3, app_call("c"))) == Admission::Full);
  CHECK(m.peek(5).front() == a);
  m.prune([](const Tx& tx) { return tx.nonce == 1; });
  CHECK(m.size() == 1);
  CHECK_FALSE(m.contains(a.hash()));
}

TEST_CASE("block log replay reproduces the state root") {
  const GenesisConfig g = make_genesis(3);
  Cluster c(g);
  for (std::uint64_t k = 1; k <= 20; ++k) {
    c.submit(k % 3, Tx::make(KeyPair::from_label("writer-" + std::to_string(k % 4)), k,
                             app_call(std::to_string(k))));
    c.submit(0, Tx::make(validator_key(2), k, encode_call(AppCall{})));
    c.run_until(static_cast<std::int64_t>(k) * 1000 + 500);
  }
  const Node& n = c.nodes[1];
  REQUIRE(n.blocks().size() == 20);
  const auto path = std::filesystem::temp_directory_path() / "tegrid_test_chain.log";
  write_block_log(path, n.blocks());
  const auto loaded = read_block_log(path);
  CHECK(loaded == n.blocks());
  CHECK(replay(g, KvApp{}, loaded) == n.ledger().state_root());

  auto tampered = loaded;
  tampered[10].txs.pop_back();
  CHECK_THROWS_WITH_AS(replay(g, KvApp{}, tampered), doctest::Contains("block 11"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("client submissions get an admission ack") {
  Cluster c(make_genesis(1));
  Node& n = c.nodes[0];
  const KeyPair u = KeyPair::from_label("u");
  const Tx tx = Tx::make(u, 1, app_call("v"));
  auto out = n.handle({net::MessageKind::TxBroadcast, 42, encode_tx_broadcast(tx)}, 0);
  REQUIRE_FALSE(out.empty());
  const auto& reply = out.back();
  REQUIRE(reply.to == 42u);
  CHECK(reply.msg.kind == net::MessageKind::Ack);
  const auto r = decode_submit_result(reply.msg.payload);
  CHECK(r.accepted);
  CHECK(r.tx_hash == tx.hash());
  out = n.handle({net::MessageKind::TxBroadcast, 42, encode_tx_broadcast(tx)}, 0);
  CHECK_FALSE(decode_submit_result(out.back().msg.payload).accepted);
}
