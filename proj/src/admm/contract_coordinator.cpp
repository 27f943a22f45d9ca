#include "tegrid/admm/contract_coordinator.hpp"

#include <sstream>

namespace tegrid::admm {

using contract::Fixed;

contract::FixedRow to_fixed_row(std::span<const SlotVector> row) {
  contract::FixedRow out(row.size());
  for (std::size_t v = 0; v < row.size(); ++v) {
    for (std::size_t t = 0; t < energy::kSlots; ++t) {
      out[v][t] = Fixed::from_double(row[v][t]).raw;
    }
  }
  return out;
}

std::vector<SlotVector> from_fixed_row(const contract::FixedRow& row) {
  std::vector<SlotVector> out(row.size());
  for (std::size_t v = 0; v < row.size(); ++v) {
    for (std::size_t t = 0; t < energy::kSlots; ++t) {
      out[v][t] = Fixed::from_raw(row[v][t]).to_double();
    }
  }
  return out;
}

DualView to_dual_view(const contract::DualRead& read) {
  DualView view;
  view.round = read.round;
  view.converged = read.converged;
  view.residual = Fixed::from_raw(read.residual_raw).to_double();
  view.p_aux_row = from_fixed_row(read.p_aux_row);
  view.lambda_row = from_fixed_row(read.lambda_row);
  return view;
}

contract::ContractConfig contract_config(const AdmmConfig& config) {
  contract::ContractConfig c;
  c.rho = Fixed::from_double(config.rho);
  c.epsilon = Fixed::from_double(config.epsilon);
  if (c.rho.raw <= 0 || c.epsilon.raw <= 0) {
    throw std::invalid_argument("rho and epsilon must be representable at 1e-9");
  }
  return c;
}

AccountId synthetic_account(std::size_t index) {
  AccountId id{};
  id.fill(0xA5);
  const std::uint64_t v = index + 1;
  for (int i = 0; i < 8; ++i) id[i] = static_cast<std::uint8_t>(v >> (8 * i));
  return id;
}

InProcessCoordinator::InProcessCoordinator(std::size_t prosumers, const AdmmConfig& config) {
  accounts_.reserve(prosumers);
  for (std::size_t u = 0; u < prosumers; ++u) accounts_.push_back(synthetic_account(u));
  AccountId op{};
  op.fill(0x5A);
  call(op, contract::DeployCall{accounts_, contract_config(config)});
}

void InProcessCoordinator::call(const AccountId& sender, const contract::ContractCall& c) {
  ++height_;
  contract_.begin_block(height_);
  const Bytes payload = contract::encode_call(c);
  const auto outcome = contract_.execute(sender, payload, height_);
  if (!outcome.ok) throw std::logic_error("contract call rejected: " + outcome.error);
}

DualView InProcessCoordinator::read(std::size_t prosumer) {
  return to_dual_view(contract_.read(accounts_.at(prosumer)));
}

void InProcessCoordinator::submit(std::size_t prosumer, std::uint64_t round,
                                  std::span<const SlotVector> trade_row) {
  call(accounts_.at(prosumer), contract::SubmitTradesCall{round, to_fixed_row(trade_row)});
}

RoundOutcome InProcessCoordinator::await_round(std::uint64_t round) {
  if (contract_.round() <= round) {
    std::ostringstream os;
    os << "round " << round << " did not close";
    throw CoordinatorTimeout(os.str());
  }
  const auto r = contract_.read(accounts_.front());
  return {r.round, r.converged, Fixed::from_raw(r.residual_raw).to_double()};
}

}  // namespace tegrid::admm
