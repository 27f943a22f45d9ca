#include "tegrid/admm/chain_coordinator.hpp"

#include <sstream>

namespace tegrid::admm {

namespace {

constexpr std::uint32_t kClientIndex = 1000;

const contract::TransactiveContract& contract_of(const chain::Node& n) {
  return dynamic_cast<const contract::TransactiveContract&>(n.ledger().app());
}

Bytes contract_tx_call(const contract::ContractCall& c) {
  return chain::encode_call(chain::AppCall{contract::encode_call(c)});
}

}  // namespace

chain::KeyPair prosumer_key(std::size_t u) {
  return chain::KeyPair::from_label("prosumer-" + std::to_string(u));
}
chain::KeyPair operator_key() { return chain::KeyPair::from_label("operator"); }
chain::KeyPair validator_key(std::size_t i) {
  return chain::KeyPair::from_label("validator-" + std::to_string(i));
}

chain::GenesisConfig coordinator_genesis(std::size_t validators, std::int64_t block_interval_ms,
                                         std::int64_t genesis_time_ms) {
  chain::GenesisConfig g;
  g.chain_id = "tegrid-admm";
  for (std::size_t i = 0; i < validators; ++i) g.validators.push_back(validator_key(i).public_key);
  g.genesis_time_ms = genesis_time_ms;
  g.block_interval_ms = block_interval_ms;
  g.max_block_txs = 256;
  return g;
}

ChainCoordinatorBase::ChainCoordinatorBase(std::size_t prosumers, std::size_t validators,
                                           chain::GenesisConfig genesis)
    : validators_(validators), genesis_(std::move(genesis)), nonces_(prosumers, 0) {
  if (prosumers == 0 || validators == 0) throw std::invalid_argument("empty network");
  for (std::size_t u = 0; u < prosumers; ++u) keys_.push_back(prosumer_key(u));
}

void ChainCoordinatorBase::deploy(const AdmmConfig& config) {
  std::vector<AccountId> accounts;
  for (const auto& k : keys_) accounts.push_back(k.public_key);
  const chain::Tx tx = chain::Tx::make(
      operator_key(), ++operator_nonce_,
      contract_tx_call(contract::DeployCall{accounts, contract_config(config)}));
  submit_tx(0, tx);
  const bool ok = wait_for([&] {
    for (std::size_t v = 0; v < validators_; ++v) {
      if (!read_contract(v, keys_[0].public_key).deployed) return false;
    }
    return true;
  });
  if (!ok) throw CoordinatorTimeout("contract deployment was not committed");
}

DualView ChainCoordinatorBase::read(std::size_t prosumer) {
  return to_dual_view(
      read_contract(prosumer % validators_, keys_.at(prosumer).public_key));
}

void ChainCoordinatorBase::submit(std::size_t prosumer, std::uint64_t round,
                                  std::span<const SlotVector> trade_row) {
  const chain::Tx tx = chain::Tx::make(
      keys_.at(prosumer), ++nonces_.at(prosumer),
      contract_tx_call(contract::SubmitTradesCall{round, to_fixed_row(trade_row)}));
  submit_tx(prosumer % validators_, tx);
}

RoundOutcome ChainCoordinatorBase::await_round(std::uint64_t round) {
  const auto& caller = keys_[0].public_key;
  const bool ok = wait_for([&] {
    for (std::size_t v = 0; v < validators_; ++v) {
      if (read_contract(v, caller).round <= round) return false;
    }
    return true;
  });
  if (!ok) {
    std::ostringstream os;
    os << "round " << round << " did not close on every validator";
    throw CoordinatorTimeout(os.str());
  }
  const auto r = read_contract(0, caller);
  return {r.round, r.converged, contract::Fixed::from_raw(r.residual_raw).to_double()};
}

// --- simulated network ---------------------------------------------------

SimChainCoordinator::SimChainCoordinator(std::size_t prosumers, const AdmmConfig& config,
                                         std::size_t validators,
                                         std::int64_t block_interval_ms,
                                         net::LatencyModel latency)
    : ChainCoordinatorBase(prosumers, validators, coordinator_genesis(validators, block_interval_ms)),
      net_(latency) {
  const auto cache = std::make_shared<chain::SignatureCache>();
  for (std::size_t v = 0; v < validators; ++v) {
    nodes_.push_back(std::make_unique<chain::Node>(
        genesis_, std::make_unique<contract::TransactiveContract>(),
        chain::NodeOptions{static_cast<std::uint32_t>(v), validator_key(v), cache}));
    endpoints_.push_back(std::make_unique<net::NodeEndpoint>(*nodes_.back()));
    net_.attach(*endpoints_.back());
  }
  client_id_ = net_.attach(client_);
  // A round needs one block once every submission is in; allow a few more.
  timeout_us_ = 4 * (block_interval_ms + genesis_.effective_skip_timeout()) * 1000;
  deploy(config);
}

void SimChainCoordinator::submit_tx(std::size_t validator, const chain::Tx& tx) {
  net_.post(client_id_, static_cast<std::uint32_t>(validator),
            {net::MessageKind::TxBroadcast, client_id_, chain::encode_tx_broadcast(tx)});
  client_.received.clear();
}

contract::DualRead SimChainCoordinator::read_contract(std::size_t validator,
                                                      const AccountId& caller) {
  return contract_of(*nodes_.at(validator)).read(caller);
}

bool SimChainCoordinator::wait_for(const std::function<bool()>& done) {
  return net_.run_until(done, net_.now_us() + timeout_us_);
}

// --- loopback TCP --------------------------------------------------------

TcpChainCoordinator::TcpChainCoordinator(std::size_t prosumers, const AdmmConfig& config,
                                         std::size_t validators,
                                         std::int64_t block_interval_ms)
    : ChainCoordinatorBase(prosumers, validators,
                           coordinator_genesis(validators, block_interval_ms,
                                               net::TcpNodeRunner::wall_clock_ms())),
      timeout_(std::chrono::milliseconds(
          20 * (block_interval_ms + genesis_.effective_skip_timeout()))) {
  const Digest gh = genesis_.hash();
  std::vector<std::uint16_t> ports;
  for (std::size_t v = 0; v < validators; ++v) {
    nodes_.push_back(std::make_unique<chain::Node>(
        genesis_, std::make_unique<contract::TransactiveContract>(),
        chain::NodeOptions{static_cast<std::uint32_t>(v), validator_key(v), nullptr}));
    runners_.push_back(std::make_unique<net::TcpNodeRunner>(*nodes_.back(), gh));
    ports.push_back(runners_.back()->listen("127.0.0.1", 0));
  }
  for (std::size_t v = 0; v < validators; ++v) {
    for (std::size_t w = 0; w < v; ++w) {
      runners_[v]->connect({static_cast<std::uint32_t>(w), "127.0.0.1", ports[w]},
                           std::chrono::seconds(5));
    }
  }
  client_ = std::make_unique<net::TcpTransport>(kClientIndex, gh, [](net::WireMessage) {});
  for (std::size_t v = 0; v < validators; ++v) {
    client_->connect({static_cast<std::uint32_t>(v), "127.0.0.1", ports[v]},
                     std::chrono::seconds(5));
  }
  for (auto& r : runners_) r->start();
  deploy(config);
}

TcpChainCoordinator::~TcpChainCoordinator() {
  if (client_) client_->stop();
  for (auto& r : runners_) r->stop();
}

void TcpChainCoordinator::submit_tx(std::size_t validator, const chain::Tx& tx) {
  const bool sent = client_->send({static_cast<std::uint32_t>(validator),
                                   {net::MessageKind::TxBroadcast, kClientIndex,
                                    chain::encode_tx_broadcast(tx)}});
  if (!sent) throw net::TransportError("validator " + std::to_string(validator) + " unreachable");
}

contract::DualRead TcpChainCoordinator::read_contract(std::size_t validator,
                                                      const AccountId& caller) {
  return runners_.at(validator)->with_node(
      [&](chain::Node& n) { return contract_of(n).read(caller); });
}

bool TcpChainCoordinator::wait_for(const std::function<bool()>& done) {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (std::chrono::steady_clock::now() < deadline) {
    if (done()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  return done();
}

std::vector<chain::Block> TcpChainCoordinator::blocks() {
  return runners_.front()->with_node([](chain::Node& n) { return n.blocks(); });
}

Digest TcpChainCoordinator::state_root(std::size_t v) {
  return runners_.at(v)->with_node([](chain::Node& n) { return n.ledger().state_root(); });
}

}  // namespace tegrid::admm
