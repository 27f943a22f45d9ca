#include "tegrid/chain/node.hpp"

#include <algorithm>

namespace tegrid::chain {

using net::MessageKind;
using net::WireMessage;

namespace {

constexpr std::size_t kMaxFutureBlocks = 4096;
constexpr std::uint64_t kAckWindow = 1024;

}  // namespace

Bytes encode_tx_broadcast(const Tx& tx, TxOrigin origin) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(origin));
  encode_tx(w, tx);
  return std::move(w).take();
}

std::pair<Tx, TxOrigin> decode_tx_broadcast(ByteView payload) {
  ByteReader r(payload);
  const std::uint8_t origin = r.u8();
  if (origin > 2) throw DecodeError("unknown transaction origin");
  Tx tx = decode_tx(r);
  r.expect_end();
  return {std::move(tx), static_cast<TxOrigin>(origin)};
}

Bytes encode_submit_result(const SubmitResult& s) {
  ByteWriter w;
  w.fixed(s.tx_hash);
  w.boolean(s.accepted);
  w.string(s.reason);
  return std::move(w).take();
}

SubmitResult decode_submit_result(ByteView payload) {
  ByteReader r(payload);
  SubmitResult s;
  s.tx_hash = r.fixed<32>();
  s.accepted = r.boolean();
  s.reason = r.string();
  r.expect_end();
  return s;
}

Node::Node(GenesisConfig genesis, std::unique_ptr<Application> app, NodeOptions options)
    : options_(std::move(options)),
      ledger_(std::move(genesis), std::move(app), options_.cache),
      mempool_(ledger_.genesis().mempool_limit) {}

WireMessage Node::wrap(MessageKind kind, Bytes payload) const {
  return WireMessage{kind, options_.index, std::move(payload)};
}

std::optional<std::int64_t> Node::finalized_at(std::uint64_t height) const {
  const auto it = finalized_.find(height);
  if (it == finalized_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Node::current_skip(std::int64_t now_ms) const {
  const std::int64_t start = ledger_.min_timestamp(0);
  if (now_ms < start) return 0;
  return static_cast<std::uint32_t>((now_ms - start) / skip_timeout());
}

bool Node::my_turn(std::uint32_t skip) const {
  if (!options_.key || !ledger_.committee().contains(options_.key->public_key)) return false;
  const std::uint64_t h = ledger_.height() + 1;
  if (last_proposal_ && last_proposal_->first == h && last_proposal_->second >= skip) {
    return false;
  }
  return ledger_.committee().proposer(h, skip) == options_.key->public_key;
}

std::int64_t Node::next_deadline(std::int64_t now_ms) const {
  if (!options_.key || !ledger_.committee().contains(options_.key->public_key)) return kNever;
  const std::uint32_t s0 = current_skip(now_ms);
  const std::uint32_t n = static_cast<std::uint32_t>(ledger_.committee().size());
  for (std::uint32_t s = s0; s <= s0 + n; ++s) {
    if (my_turn(s)) return std::max(now_ms, ledger_.min_timestamp(s));
  }
  return kNever;
}

std::vector<Outbound> Node::tick(std::int64_t now_ms) {
  std::vector<Outbound> out;
  if (now_ms < ledger_.min_timestamp(0)) return out;
  const std::uint32_t skip = current_skip(now_ms);
  if (!my_turn(skip)) return out;

  last_proposal_ = {ledger_.height() + 1, skip};
  const Block block = ledger_.build(*options_.key, now_ms, skip,
                                    mempool_.peek(ledger_.genesis().max_block_txs));
  if (!commit(block, now_ms, out)) {
    throw std::logic_error("own block failed validation: " + stats_.last_block_rejection);
  }
  return out;
}

SubmitResult Node::submit(const Tx& tx, std::vector<Outbound>& out) {
  SubmitResult r;
  r.tx_hash = tx.hash();
  if (const TxError e = ledger_.check_tx(tx); e != TxError::None) {
    ++stats_.txs_rejected;
    r.reason = to_string(e);
    return r;
  }
  const Admission a = mempool_.add(tx);
  r.accepted = a == Admission::Accepted;
  r.reason = to_string(a);
  if (r.accepted) {
    const TxOrigin self = options_.key ? TxOrigin::Validator : TxOrigin::NormalNode;
    out.push_back({std::nullopt, wrap(MessageKind::TxBroadcast, encode_tx_broadcast(tx, self))});
  }
  return r;
}

std::vector<Outbound> Node::handle(const WireMessage& msg, std::int64_t now_ms) {
  std::vector<Outbound> out;
  try {
    switch (msg.kind) {
      case MessageKind::TxBroadcast:
        on_tx(msg, out);
        break;
      case MessageKind::BlockBroadcast: {
        // Relayed duplicates are common; the height leads the encoding.
        ByteReader peek(msg.payload);
        if (peek.u64() <= ledger_.height()) break;
        on_block(decode_block(msg.payload), now_ms, out);
        break;
      }
      case MessageKind::VoteBroadcast:
        on_ack(decode_ack(msg.payload), now_ms);
        break;
      case MessageKind::Ack:
        break;
    }
  } catch (const DecodeError&) {
    // Malformed peer input is dropped.
  }
  return out;
}

void Node::on_tx(const WireMessage& msg, std::vector<Outbound>& out) {
  auto [tx, origin] = decode_tx_broadcast(msg.payload);
  if (origin == TxOrigin::Validator) {
    // Validators gossip to the whole committee already.
    if (ledger_.check_tx(tx) == TxError::None) mempool_.add(tx);
    return;
  }
  if (origin == TxOrigin::NormalNode) {
    submit(tx, out);
    return;
  }
  const SubmitResult r = submit(tx, out);
  out.push_back({msg.sender, wrap(MessageKind::Ack, encode_submit_result(r))});
}

void Node::on_block(Block block, std::int64_t now_ms, std::vector<Outbound>& out) {
  const std::uint64_t h = block.header.height;
  // First valid block per height wins.
  if (h <= ledger_.height()) return;
  if (h > ledger_.height() + 1) {
    if (future_.size() < kMaxFutureBlocks) future_.emplace(h, std::move(block));
    return;
  }
  if (block.header.timestamp_ms > now_ms + ledger_.genesis().block_interval_ms) {
    ++stats_.blocks_rejected;
    stats_.last_block_rejection = "timestamp ahead of local clock";
    return;
  }
  if (!commit(block, now_ms, out)) return;
  while (!future_.empty()) {
    auto it = future_.begin();
    if (it->first <= ledger_.height()) {
      future_.erase(it);
      continue;
    }
    if (it->first != ledger_.height() + 1) break;
    Block next = std::move(it->second);
    future_.erase(it);
    if (!commit(next, now_ms, out)) break;
  }
}

bool Node::commit(const Block& block, std::int64_t now_ms, std::vector<Outbound>& out) {
  std::vector<AccountId> voters = ledger_.committee().validators();
  const BlockResult r = ledger_.apply(block);
  if (!r.ok) {
    ++stats_.blocks_rejected;
    stats_.last_block_rejection = r.error;
    return false;
  }
  const std::uint64_t h = block.header.height;
  blocks_.push_back(block);
  committed_at_.push_back(now_ms);
  voters_[h] = std::move(voters);
  mempool_.prune([&](const Tx& tx) {
    const auto n = ledger_.nonce(tx.sender);
    return n && tx.nonce <= *n;
  });

  // Relay as well as propose: peers that are not connected to the proposer
  // still receive every block. Duplicates stop at the height check.
  out.push_back({std::nullopt, wrap(MessageKind::BlockBroadcast, encode_block(block))});
  if (options_.key && std::find(voters_[h].begin(), voters_[h].end(),
                                options_.key->public_key) != voters_[h].end()) {
    const BlockAck ack = BlockAck::make(*options_.key, h, block.hash());
    acks_[h][ack.validator] = ack.block_hash;
    out.push_back({std::nullopt, wrap(MessageKind::VoteBroadcast, encode_ack(ack))});
  }
  try_finalize(h, now_ms);
  return true;
}

void Node::on_ack(const BlockAck& ack, std::int64_t now_ms) {
  if (ack.height == 0 || ack.height > ledger_.height() + kAckWindow) return;
  if (finalized_.count(ack.height)) return;
  const bool ok = options_.cache
                      ? options_.cache->verify(ack.validator, ack.signing_bytes(), ack.signature)
                      : verify(ack.validator, ack.signing_bytes(), ack.signature);
  if (!ok) return;
  acks_[ack.height].try_emplace(ack.validator, ack.block_hash);
  try_finalize(ack.height, now_ms);
}

void Node::try_finalize(std::uint64_t height, std::int64_t now_ms) {
  if (height > ledger_.height() || finalized_.count(height)) return;
  const auto vit = voters_.find(height);
  const auto ait = acks_.find(height);
  if (vit == voters_.end() || ait == acks_.end()) return;
  const Digest& hash = blocks_[height - 1].hash();
  std::size_t count = 0;
  for (const auto& v : vit->second) {
    const auto it = ait->second.find(v);
    if (it != ait->second.end() && it->second == hash) ++count;
  }
  if (count < vit->second.size() / 2 + 1) return;
  finalized_[height] = now_ms;
  voters_.erase(vit);
  acks_.erase(ait);
}

std::vector<WireMessage> Node::history() const {
  std::vector<WireMessage> out;
  out.reserve(blocks_.size());
  for (const auto& b : blocks_) out.push_back(wrap(MessageKind::BlockBroadcast, encode_block(b)));
  return out;
}

}  // namespace tegrid::chain
