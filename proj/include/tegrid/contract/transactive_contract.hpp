#pragma once

#include "tegrid/chain/application.hpp"
#include "tegrid/common/bytes.hpp"
#include "tegrid/contract/fixed.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <variant>
#include <vector>

namespace tegrid::contract {

inline constexpr std::size_t kSlots = 24;

using FixedSlots = std::array<std::int64_t, kSlots>;
using FixedRow = std::vector<FixedSlots>;

/// U x U x 24 matrix of fixed-point mantissas.
class FixedMatrix {
 public:
  FixedMatrix() = default;
  explicit FixedMatrix(std::size_t n) : n_(n), cells_(n * n) {
    for (auto& c : cells_) c.fill(0);
  }
  std::size_t size() const { return n_; }
  FixedSlots& at(std::size_t u, std::size_t v) { return cells_.at(u * n_ + v); }
  const FixedSlots& at(std::size_t u, std::size_t v) const { return cells_.at(u * n_ + v); }
  FixedRow row(std::size_t u) const {
    return FixedRow(cells_.begin() + static_cast<std::ptrdiff_t>(u * n_),
                    cells_.begin() + static_cast<std::ptrdiff_t>((u + 1) * n_));
  }
  void set_row(std::size_t u, const FixedRow& row);
  bool operator==(const FixedMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<FixedSlots> cells_;
};

struct ContractConfig {
  Fixed rho = Fixed::from_raw(500'000'000);
  Fixed epsilon = Fixed::from_raw(1'000);
  std::uint64_t round_timeout = 30;  // blocks
};

// --- Call payloads -------------------------------------------------------

struct DeployCall {
  std::vector<AccountId> prosumers;
  ContractConfig config;
};

/// Func B: the caller's trade row for round `round`.
struct SubmitTradesCall {
  std::uint64_t round = 0;
  FixedRow row;
};

using ContractCall = std::variant<DeployCall, SubmitTradesCall>;

Bytes encode_call(const ContractCall& call);
ContractCall decode_call(ByteView payload);

// --- Dual update in fixed point -----------------------------------------

struct DualUpdate {
  FixedMatrix p_aux;
  FixedMatrix lambda;
  std::int64_t residual_raw = 0;
};

/// Closed-form auxiliary update under trade reciprocity followed by the
/// multiplier ascent step, with one rounding per output value. The
/// residual compares the trades with `p_aux`, the values they answered.
DualUpdate fixed_dual_update(const FixedMatrix& trades, const FixedMatrix& p_aux,
                             const FixedMatrix& lambda, Fixed rho);

/// Sum over ordered pairs of floor(sqrt(sum_t (a - b)^2)) in mantissa units.
std::int64_t fixed_residual(const FixedMatrix& trades, const FixedMatrix& p_aux);

// --- Func C view ---------------------------------------------------------

struct DualRead {
  bool deployed = false;
  bool known_caller = false;
  std::uint64_t session = 0;
  std::uint64_t round = 0;
  std::uint64_t attempt = 0;
  bool converged = false;
  bool caller_submitted = false;
  std::int64_t residual_raw = 0;
  std::size_t prosumers = 0;
  std::size_t submitted_count = 0;
  // Only filled for registered callers.
  FixedRow p_aux_row;
  FixedRow lambda_row;
};

/// Transactive-energy coordinator contract:
///  * Func B (`SubmitTradesCall`) stores a prosumer's trade row for the open
///    round;
///  * the submission that completes the round triggers Func A, the dual
///    update, atomically within the same call;
///  * Func C (`read`) is a free local query of committed state.
class TransactiveContract final : public chain::Application {
 public:
  TransactiveContract() = default;

  std::unique_ptr<chain::Application> clone() const override;
  void begin_block(std::uint64_t height) override;
  chain::CallOutcome execute(const AccountId& sender, ByteView call,
                             std::uint64_t height) override;
  void encode_state(ByteWriter& out) const override;

  DualRead read(const AccountId& caller) const;

  bool deployed() const { return deployed_; }
  std::uint64_t round() const { return round_; }
  std::uint64_t dual_updates() const { return dual_updates_; }
  bool converged() const { return converged_; }
  std::size_t prosumer_count() const { return prosumers_.size(); }
  std::optional<std::size_t> index_of(const AccountId& id) const;
  const FixedMatrix& trades() const { return trades_; }
  const FixedMatrix& p_aux() const { return p_aux_; }
  const FixedMatrix& lambda() const { return lambda_; }
  const ContractConfig& config() const { return config_; }

 private:
  chain::CallOutcome deploy(const DeployCall& call, std::uint64_t height);
  chain::CallOutcome submit(const AccountId& sender, const SubmitTradesCall& call,
                            std::uint64_t height);
  void run_dual_update(std::uint64_t height);

  bool deployed_ = false;
  std::uint64_t session_ = 0;
  AccountId operator_{};
  std::vector<AccountId> prosumers_;
  std::map<AccountId, std::size_t> index_;
  ContractConfig config_;
  std::uint64_t round_ = 0;
  std::uint64_t attempt_ = 0;
  std::uint64_t round_opened_at_ = 0;
  std::uint64_t dual_updates_ = 0;
  std::vector<std::uint8_t> submitted_;
  FixedMatrix trades_;
  FixedMatrix p_aux_;
  FixedMatrix lambda_;
  bool converged_ = false;
  std::int64_t residual_raw_ = 0;
};

}  // namespace tegrid::contract
