#include "tegrid/chain/ledger.hpp"

namespace tegrid::chain {

const char* to_string(TxError e) {
  switch (e) {
    case TxError::None: return "ok";
    case TxError::BadSignature: return "bad signature";
    case TxError::StaleNonce: return "stale nonce";
    case TxError::Malformed: return "malformed call";
  }
  return "?";
}

LedgerState LedgerState::clone() const {
  return LedgerState{committee, nonces, app->clone()};
}

Digest LedgerState::root() const {
  ByteWriter w;
  committee.encode(w);
  w.u32(static_cast<std::uint32_t>(nonces.size()));
  for (const auto& [id, n] : nonces) {
    w.fixed(id);
    w.u64(n);
  }
  app->encode_state(w);
  return sha256(w.data());
}

Ledger::Ledger(GenesisConfig genesis, std::unique_ptr<Application> app,
               std::shared_ptr<SignatureCache> cache)
    : genesis_(std::move(genesis)), cache_(std::move(cache)) {
  genesis_.validate();
  if (!app) throw std::invalid_argument("ledger needs an application");
  state_.committee = Committee(genesis_.validators);
  state_.app = std::move(app);
  head_hash_ = genesis_.hash();
  head_time_ = genesis_.genesis_time_ms;
}

std::optional<std::uint64_t> Ledger::nonce(const AccountId& id) const {
  const auto it = state_.nonces.find(id);
  if (it == state_.nonces.end()) return std::nullopt;
  return it->second;
}

std::int64_t Ledger::min_timestamp(std::uint32_t skip) const {
  return head_time_ + genesis_.block_interval_ms +
         static_cast<std::int64_t>(skip) * genesis_.effective_skip_timeout();
}

bool Ledger::verify_sig(const AccountId& key, ByteView msg, const Signature& sig) const {
  return cache_ ? cache_->verify(key, msg, sig) : chain::verify(key, msg, sig);
}

TxError Ledger::check_nonce(const LedgerState& s, const Tx& tx) {
  const auto it = s.nonces.find(tx.sender);
  if (it != s.nonces.end() && tx.nonce <= it->second) return TxError::StaleNonce;
  return TxError::None;
}

TxError Ledger::check_tx(const Tx& tx) const {
  try {
    decode_call(tx.call);
  } catch (const DecodeError&) {
    return TxError::Malformed;
  }
  if (const auto e = check_nonce(state_, tx); e != TxError::None) return e;
  if (!verify_sig(tx.sender, tx.signing_bytes(), tx.signature)) return TxError::BadSignature;
  return TxError::None;
}

CallOutcome Ledger::execute(LedgerState& s, const Tx& tx, std::uint64_t height) const {
  const LedgerCall call = decode_call(tx.call);
  s.nonces[tx.sender] = tx.nonce;
  if (const auto* v = std::get_if<VoteCall>(&call)) return s.committee.vote(tx.sender, *v, height);
  if (const auto* a = std::get_if<AppCall>(&call)) {
    return s.app->execute(tx.sender, a->payload, height);
  }
  return CallOutcome::success();
}

BlockResult Ledger::run(const Block& block, LedgerState& scratch) const {
  const auto fail = [](std::string why) { return BlockResult{false, std::move(why), {}}; };
  const BlockHeader& h = block.header;
  if (h.height != height_ + 1) return fail("unexpected height");
  if (h.parent_hash != head_hash_) return fail("parent hash mismatch");
  if (h.proposer != state_.committee.proposer(h.height, h.skip)) {
    return fail("proposer out of turn");
  }
  if (h.timestamp_ms < min_timestamp(h.skip)) return fail("timestamp too early");
  if (block.txs.size() > genesis_.max_block_txs) return fail("too many transactions");
  if (h.tx_root != tx_root(block.txs)) return fail("tx root mismatch");
  const Digest hash = h.hash();
  if (!verify_sig(h.proposer, hash, block.signature)) return fail("bad proposer signature");

  BlockResult result{true, {}, {}};
  result.outcomes.reserve(block.txs.size());
  scratch.app->begin_block(h.height);
  for (const auto& tx : block.txs) {
    TxError e = check_nonce(scratch, tx);
    if (e == TxError::None && !verify_sig(tx.sender, tx.signing_bytes(), tx.signature)) {
      e = TxError::BadSignature;
    }
    if (e != TxError::None) return fail(std::string("invalid transaction: ") + to_string(e));
    try {
      result.outcomes.push_back(execute(scratch, tx, h.height));
    } catch (const DecodeError&) {
      return fail("invalid transaction: malformed call");
    }
  }
  if (scratch.root() != h.state_root) return fail("state root mismatch");
  return result;
}

BlockResult Ledger::verify(const Block& block) const {
  LedgerState scratch = state_.clone();
  return run(block, scratch);
}

BlockResult Ledger::apply(const Block& block) {
  LedgerState scratch = state_.clone();
  BlockResult r = run(block, scratch);
  if (!r.ok) return r;
  state_ = std::move(scratch);
  height_ = block.header.height;
  head_hash_ = block.hash();
  head_time_ = block.header.timestamp_ms;
  return r;
}

Block Ledger::build(const KeyPair& proposer, std::int64_t timestamp, std::uint32_t skip,
                    const std::vector<Tx>& candidates) const {
  Block b;
  BlockHeader& h = b.header;
  h.height = height_ + 1;
  h.parent_hash = head_hash_;
  h.proposer = proposer.public_key;
  h.timestamp_ms = timestamp;
  h.skip = skip;

  LedgerState scratch = state_.clone();
  scratch.app->begin_block(h.height);
  for (const auto& tx : candidates) {
    if (b.txs.size() >= genesis_.max_block_txs) break;
    if (check_nonce(scratch, tx) != TxError::None) continue;
    if (!verify_sig(tx.sender, tx.signing_bytes(), tx.signature)) continue;
    try {
      execute(scratch, tx, h.height);
    } catch (const DecodeError&) {
      continue;
    }
    b.txs.push_back(tx);
  }
  h.tx_root = tx_root(b.txs);
  h.state_root = scratch.root();
  b.signature = proposer.sign(h.hash());
  return b;
}

}  // namespace tegrid::chain
