#pragma once

#include "tegrid/admm/contract_coordinator.hpp"
#include "tegrid/chain/node.hpp"
#include "tegrid/net/sim.hpp"
#include "tegrid/net/tcp.hpp"

namespace tegrid::admm {

/// Deterministic prosumer key for index `u` (fixtures, CLI, tests).
chain::KeyPair prosumer_key(std::size_t u);
chain::KeyPair operator_key();
chain::KeyPair validator_key(std::size_t i);

/// Genesis with `validators` deterministic validator keys.
chain::GenesisConfig coordinator_genesis(std::size_t validators, std::int64_t block_interval_ms,
                                         std::int64_t genesis_time_ms = 0);

/// Prosumer side of a chain-hosted contract: signed submissions go through
/// the validators' mempools and only count once included in a block.
class ChainCoordinatorBase : public CoordinatorPort {
 public:
  std::size_t prosumers() const override { return keys_.size(); }
  DualView read(std::size_t prosumer) override;
  void submit(std::size_t prosumer, std::uint64_t round,
              std::span<const SlotVector> trade_row) override;
  RoundOutcome await_round(std::uint64_t round) override;

  /// Blocks committed so far (on validator 0).
  virtual std::vector<chain::Block> blocks() = 0;
  virtual Digest state_root(std::size_t validator) = 0;
  const chain::GenesisConfig& genesis() const { return genesis_; }

 protected:
  ChainCoordinatorBase(std::size_t prosumers, std::size_t validators,
                       chain::GenesisConfig genesis);

  /// Deploys the contract and waits until it is live everywhere.
  void deploy(const AdmmConfig& config);

  virtual void submit_tx(std::size_t validator, const chain::Tx& tx) = 0;
  virtual contract::DualRead read_contract(std::size_t validator, const AccountId& caller) = 0;
  /// Advances the network until `done` holds; false on timeout.
  virtual bool wait_for(const std::function<bool()>& done) = 0;

  std::size_t validators_;
  chain::GenesisConfig genesis_;
  std::vector<chain::KeyPair> keys_;
  std::vector<std::uint64_t> nonces_;
  std::uint64_t operator_nonce_ = 0;
};

/// Validators on the simulated network; virtual time.
class SimChainCoordinator final : public ChainCoordinatorBase {
 public:
  SimChainCoordinator(std::size_t prosumers, const AdmmConfig& config,
                      std::size_t validators = 3, std::int64_t block_interval_ms = 1000,
                      net::LatencyModel latency = {});

  std::vector<chain::Block> blocks() override { return nodes_.front()->blocks(); }
  Digest state_root(std::size_t v) override { return nodes_.at(v)->ledger().state_root(); }
  net::SimNetwork& network() { return net_; }
  chain::Node& node(std::size_t v) { return *nodes_.at(v); }

 private:
  void submit_tx(std::size_t validator, const chain::Tx& tx) override;
  contract::DualRead read_contract(std::size_t validator, const AccountId& caller) override;
  bool wait_for(const std::function<bool()>& done) override;

  net::SimNetwork net_;
  std::vector<std::unique_ptr<chain::Node>> nodes_;
  std::vector<std::unique_ptr<net::NodeEndpoint>> endpoints_;
  net::Inbox client_;
  std::uint32_t client_id_ = 0;
  std::int64_t timeout_us_ = 0;
};

/// Validators in this process talking over loopback TCP; wall-clock time.
class TcpChainCoordinator final : public ChainCoordinatorBase {
 public:
  TcpChainCoordinator(std::size_t prosumers, const AdmmConfig& config,
                      std::size_t validators = 3, std::int64_t block_interval_ms = 100);
  ~TcpChainCoordinator() override;

  std::vector<chain::Block> blocks() override;
  Digest state_root(std::size_t v) override;

 private:
  void submit_tx(std::size_t validator, const chain::Tx& tx) override;
  contract::DualRead read_contract(std::size_t validator, const AccountId& caller) override;
  bool wait_for(const std::function<bool()>& done) override;

  std::vector<std::unique_ptr<chain::Node>> nodes_;
  std::vector<std::unique_ptr<net::TcpNodeRunner>> runners_;
  std::unique_ptr<net::TcpTransport> client_;
  std::chrono::milliseconds timeout_;
};

}  // namespace tegrid::admm
