#include "tegrid/chain/types.hpp"

#include <set>
#include <stdexcept>

namespace tegrid::chain {
namespace {

enum : std::uint8_t { kCallVote = 0, kCallApp = 1, kCallNop = 2 };

constexpr std::string_view kTxDomain = "tegrid/tx/1";
constexpr std::string_view kAckDomain = "tegrid/ack/1";
constexpr std::uint32_t kMaxTxsPerBlock = 1u << 16;

void domain(ByteWriter& w, std::string_view tag) {
  w.raw(ByteView(reinterpret_cast<const std::uint8_t*>(tag.data()), tag.size()));
}

}  // namespace

Bytes Tx::signing_bytes() const {
  ByteWriter w;
  domain(w, kTxDomain);
  w.fixed(sender);
  w.u64(nonce);
  w.bytes(call);
  return std::move(w).take();
}

Digest Tx::hash() const { return sha256(encode_tx(*this)); }

Tx Tx::make(const KeyPair& key, std::uint64_t nonce, Bytes call) {
  Tx tx;
  tx.sender = key.public_key;
  tx.nonce = nonce;
  tx.call = std::move(call);
  tx.signature = key.sign(tx.signing_bytes());
  return tx;
}

void encode_tx(ByteWriter& w, const Tx& tx) {
  w.fixed(tx.sender);
  w.u64(tx.nonce);
  w.bytes(tx.call);
  w.fixed(tx.signature);
}

Tx decode_tx(ByteReader& r) {
  Tx tx;
  tx.sender = r.fixed<32>();
  tx.nonce = r.u64();
  tx.call = r.bytes();
  tx.signature = r.fixed<64>();
  return tx;
}

Bytes encode_tx(const Tx& tx) {
  ByteWriter w;
  encode_tx(w, tx);
  return std::move(w).take();
}

Tx decode_tx(ByteView bytes) {
  ByteReader r(bytes);
  Tx tx = decode_tx(r);
  r.expect_end();
  return tx;
}

Bytes encode_call(const LedgerCall& call) {
  ByteWriter w;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, VoteCall>) {
          w.u8(kCallVote);
          w.fixed(c.candidate);
          w.boolean(c.add);
        } else if constexpr (std::is_same_v<T, AppCall>) {
          w.u8(kCallApp);
          w.raw(c.payload);
        } else {
          w.u8(kCallNop);
          w.raw(c.padding);
        }
      },
      call);
  return std::move(w).take();
}

LedgerCall decode_call(ByteView bytes) {
  ByteReader r(bytes);
  switch (r.u8()) {
    case kCallVote: {
      VoteCall v;
      v.candidate = r.fixed<32>();
      v.add = r.boolean();
      r.expect_end();
      return v;
    }
    case kCallApp: {
      const ByteView rest = r.raw(r.remaining());
      return AppCall{Bytes(rest.begin(), rest.end())};
    }
    case kCallNop: {
      const ByteView rest = r.raw(r.remaining());
      return NopCall{Bytes(rest.begin(), rest.end())};
    }
    default:
      throw DecodeError("unknown ledger call tag");
  }
}

Digest BlockHeader::hash() const {
  ByteWriter w;
  w.u64(height);
  w.fixed(parent_hash);
  w.fixed(proposer);
  w.i64(timestamp_ms);
  w.u32(skip);
  w.fixed(tx_root);
  w.fixed(state_root);
  return sha256(w.data());
}

Digest tx_root(const std::vector<Tx>& txs) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(txs.size()));
  for (const auto& tx : txs) w.fixed(tx.hash());
  return sha256(w.data());
}

void encode_block(ByteWriter& w, const Block& b) {
  const auto& h = b.header;
  w.u64(h.height);
  w.fixed(h.parent_hash);
  w.fixed(h.proposer);
  w.i64(h.timestamp_ms);
  w.u32(h.skip);
  w.fixed(h.tx_root);
  w.fixed(h.state_root);
  w.u32(static_cast<std::uint32_t>(b.txs.size()));
  for (const auto& tx : b.txs) encode_tx(w, tx);
  w.fixed(b.signature);
}

Block decode_block(ByteReader& r) {
  Block b;
  auto& h = b.header;
  h.height = r.u64();
  h.parent_hash = r.fixed<32>();
  h.proposer = r.fixed<32>();
  h.timestamp_ms = r.i64();
  h.skip = r.u32();
  h.tx_root = r.fixed<32>();
  h.state_root = r.fixed<32>();
  const std::uint32_t n = r.u32();
  if (n > kMaxTxsPerBlock) throw DecodeError("too many transactions in block");
  b.txs.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) b.txs.push_back(decode_tx(r));
  b.signature = r.fixed<64>();
  return b;
}

Bytes encode_block(const Block& b) {
  ByteWriter w;
  encode_block(w, b);
  return std::move(w).take();
}

Block decode_block(ByteView bytes) {
  ByteReader r(bytes);
  Block b = decode_block(r);
  r.expect_end();
  return b;
}

Bytes BlockAck::signing_bytes() const {
  ByteWriter w;
  domain(w, kAckDomain);
  w.u64(height);
  w.fixed(block_hash);
  w.fixed(validator);
  return std::move(w).take();
}

BlockAck BlockAck::make(const KeyPair& key, std::uint64_t height, const Digest& hash) {
  BlockAck a;
  a.height = height;
  a.block_hash = hash;
  a.validator = key.public_key;
  a.signature = key.sign(a.signing_bytes());
  return a;
}

Bytes encode_ack(const BlockAck& a) {
  ByteWriter w;
  w.u64(a.height);
  w.fixed(a.block_hash);
  w.fixed(a.validator);
  w.fixed(a.signature);
  return std::move(w).take();
}

BlockAck decode_ack(ByteView bytes) {
  ByteReader r(bytes);
  BlockAck a;
  a.height = r.u64();
  a.block_hash = r.fixed<32>();
  a.validator = r.fixed<32>();
  a.signature = r.fixed<64>();
  r.expect_end();
  return a;
}

void GenesisConfig::validate() const {
  if (validators.empty()) throw std::invalid_argument("genesis needs at least one validator");
  std::set<AccountId> unique(validators.begin(), validators.end());
  if (unique.size() != validators.size()) {
    throw std::invalid_argument("duplicate validator in genesis");
  }
  if (block_interval_ms <= 0) throw std::invalid_argument("block_interval_ms must be > 0");
  if (skip_timeout_ms < 0) throw std::invalid_argument("skip_timeout_ms must be >= 0");
  if (max_block_txs == 0 || max_block_txs > kMaxTxsPerBlock) {
    throw std::invalid_argument("max_block_txs out of range");
  }
  if (mempool_limit == 0) throw std::invalid_argument("mempool_limit must be > 0");
}

Bytes GenesisConfig::encode() const {
  ByteWriter w;
  w.string(chain_id);
  w.u32(static_cast<std::uint32_t>(validators.size()));
  for (const auto& v : validators) w.fixed(v);
  w.i64(genesis_time_ms);
  w.i64(block_interval_ms);
  w.i64(skip_timeout_ms);
  w.u32(max_block_txs);
  w.u32(mempool_limit);
  return std::move(w).take();
}

Digest GenesisConfig::hash() const { return sha256(encode()); }

}  // namespace tegrid::chain
