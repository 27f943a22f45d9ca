#pragma once

#include "tegrid/admm/engine.hpp"
#include "tegrid/contract/transactive_contract.hpp"

namespace tegrid::admm {

contract::FixedRow to_fixed_row(std::span<const SlotVector> row);
std::vector<SlotVector> from_fixed_row(const contract::FixedRow& row);
DualView to_dual_view(const contract::DualRead& read);
contract::ContractConfig contract_config(const AdmmConfig& config);

/// Synthetic account id for prosumer `index` in in-process runs.
AccountId synthetic_account(std::size_t index);

/// Runs the coordinator contract directly in this process; every call is
/// its own block. Produces the same arithmetic as a chain-backed run.
class InProcessCoordinator final : public CoordinatorPort {
 public:
  InProcessCoordinator(std::size_t prosumers, const AdmmConfig& config);

  std::size_t prosumers() const override { return accounts_.size(); }
  DualView read(std::size_t prosumer) override;
  void submit(std::size_t prosumer, std::uint64_t round,
              std::span<const SlotVector> trade_row) override;
  RoundOutcome await_round(std::uint64_t round) override;

  const contract::TransactiveContract& contract() const { return contract_; }

 private:
  void call(const AccountId& sender, const contract::ContractCall& c);

  contract::TransactiveContract contract_;
  std::vector<AccountId> accounts_;
  std::uint64_t height_ = 0;
};

}  // namespace tegrid::admm
