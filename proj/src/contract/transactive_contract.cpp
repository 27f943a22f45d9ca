#include "tegrid/contract/transactive_contract.hpp"

#include <algorithm>
#include <set>

namespace tegrid::contract {
namespace {

enum : std::uint8_t { kTagDeploy = 1, kTagSubmit = 2 };

// 1e6 kWh; keeps every intermediate product well inside 128 bits.
constexpr std::int64_t kMaxTradeRaw = 1'000'000LL * Fixed::kScale;

void write_row(ByteWriter& w, const FixedRow& row) {
  w.u32(static_cast<std::uint32_t>(row.size()));
  for (const auto& slots : row) {
    for (auto v : slots) w.i64(v);
  }
}

FixedRow read_row(ByteReader& r) {
  const std::uint32_t n = r.u32();
  if (n > 4096) throw DecodeError("trade row too wide");
  FixedRow row(n);
  for (auto& slots : row) {
    for (auto& v : slots) v = r.i64();
  }
  return row;
}

void write_matrix(ByteWriter& w, const FixedMatrix& m) {
  w.u32(static_cast<std::uint32_t>(m.size()));
  for (std::size_t u = 0; u < m.size(); ++u) {
    for (std::size_t v = 0; v < m.size(); ++v) {
      for (auto x : m.at(u, v)) w.i64(x);
    }
  }
}

}  // namespace

void FixedMatrix::set_row(std::size_t u, const FixedRow& row) {
  if (row.size() != n_) throw std::out_of_range("row width mismatch");
  std::copy(row.begin(), row.end(), cells_.begin() + static_cast<std::ptrdiff_t>(u * n_));
}

Bytes encode_call(const ContractCall& call) {
  ByteWriter w;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, DeployCall>) {
          w.u8(kTagDeploy);
          w.u32(static_cast<std::uint32_t>(c.prosumers.size()));
          for (const auto& id : c.prosumers) w.fixed(id);
          w.i64(c.config.rho.raw);
          w.i64(c.config.epsilon.raw);
          w.u64(c.config.round_timeout);
        } else {
          w.u8(kTagSubmit);
          w.u64(c.round);
          write_row(w, c.row);
        }
      },
      call);
  return std::move(w).take();
}

ContractCall decode_call(ByteView payload) {
  ByteReader r(payload);
  const std::uint8_t tag = r.u8();
  if (tag == kTagDeploy) {
    DeployCall c;
    const std::uint32_t n = r.u32();
    if (n > 4096) throw DecodeError("too many prosumers");
    c.prosumers.resize(n);
    for (auto& id : c.prosumers) id = r.fixed<32>();
    c.config.rho = Fixed::from_raw(r.i64());
    c.config.epsilon = Fixed::from_raw(r.i64());
    c.config.round_timeout = r.u64();
    r.expect_end();
    return c;
  }
  if (tag == kTagSubmit) {
    SubmitTradesCall c;
    c.round = r.u64();
    c.row = read_row(r);
    r.expect_end();
    return c;
  }
  throw DecodeError("unknown contract call tag");
}

DualUpdate fixed_dual_update(const FixedMatrix& trades, const FixedMatrix& p_aux,
                             const FixedMatrix& lambda, Fixed rho) {
  const std::size_t n = trades.size();
  const int128 R = rho.raw;
  const int128 S = Fixed::kScale;
  DualUpdate out{FixedMatrix(n), lambda, 0};
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const FixedSlots& p_uv = trades.at(u, v);
      const FixedSlots& p_vu = trades.at(v, u);
      const FixedSlots& l_uv = lambda.at(u, v);
      const FixedSlots& l_vu = lambda.at(v, u);
      for (std::size_t t = 0; t < kSlots; ++t) {
        // x = (p_uv - p_vu)/2 - (l_uv - l_vu)/(2 rho), over the common
        // denominator 2R so only one rounding happens.
        const int128 trade_gap = int128(p_uv[t]) - p_vu[t];
        const int128 price_gap = int128(l_uv[t]) - l_vu[t];
        const std::int64_t x = div_round_half_even(trade_gap * R - price_gap * S, 2 * R);
        out.p_aux.at(u, v)[t] = x;
        out.p_aux.at(v, u)[t] = -x;
        out.lambda.at(u, v)[t] += div_round_half_even(R * (int128(x) - p_uv[t]), S);
        out.lambda.at(v, u)[t] += div_round_half_even(R * (int128(-x) - p_vu[t]), S);
      }
    }
  }
  out.residual_raw = fixed_residual(trades, p_aux);
  return out;
}

std::int64_t fixed_residual(const FixedMatrix& trades, const FixedMatrix& p_aux) {
  const std::size_t n = trades.size();
  std::int64_t total = 0;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      if (u == v) continue;
      uint128 sq = 0;
      for (std::size_t t = 0; t < kSlots; ++t) {
        const int128 diff = int128(p_aux.at(u, v)[t]) - trades.at(u, v)[t];
        sq += static_cast<uint128>(diff * diff);
      }
      total += static_cast<std::int64_t>(isqrt(sq));
    }
  }
  return total;
}

std::unique_ptr<chain::Application> TransactiveContract::clone() const {
  return std::make_unique<TransactiveContract>(*this);
}

std::optional<std::size_t> TransactiveContract::index_of(const AccountId& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void TransactiveContract::begin_block(std::uint64_t height) {
  if (!deployed_ || converged_) return;
  const auto pending = std::count(submitted_.begin(), submitted_.end(), 1);
  // Straggler policy: an incomplete round is discarded and re-opened; no
  // stale values are substituted for the missing rows.
  if (pending > 0 && height >= round_opened_at_ + config_.round_timeout) {
    std::fill(submitted_.begin(), submitted_.end(), 0);
    ++attempt_;
    round_opened_at_ = height;
  }
}

chain::CallOutcome TransactiveContract::execute(const AccountId& sender, ByteView call,
                                                std::uint64_t height) {
  ContractCall decoded;
  try {
    decoded = decode_call(call);
  } catch (const DecodeError& e) {
    return chain::CallOutcome::failure(std::string("malformed call: ") + e.what());
  }
  if (auto* d = std::get_if<DeployCall>(&decoded)) {
    // The deployer becomes the operator; only it may start a new session.
    if (deployed_ && !(converged_ && sender == operator_)) {
      return chain::CallOutcome::failure("contract already deployed");
    }
    auto outcome = deploy(*d, height);
    if (outcome.ok) operator_ = sender;
    return outcome;
  }
  return submit(sender, std::get<SubmitTradesCall>(decoded), height);
}

chain::CallOutcome TransactiveContract::deploy(const DeployCall& call, std::uint64_t height) {
  if (call.prosumers.empty()) return chain::CallOutcome::failure("no prosumers");
  std::set<AccountId> unique(call.prosumers.begin(), call.prosumers.end());
  if (unique.size() != call.prosumers.size()) {
    return chain::CallOutcome::failure("duplicate prosumer");
  }
  if (call.config.rho.raw <= 0 || call.config.epsilon.raw <= 0 ||
      call.config.round_timeout == 0) {
    return chain::CallOutcome::failure("invalid contract config");
  }
  const std::size_t n = call.prosumers.size();
  deployed_ = true;
  ++session_;
  prosumers_ = call.prosumers;
  index_.clear();
  for (std::size_t i = 0; i < n; ++i) index_[prosumers_[i]] = i;
  config_ = call.config;
  round_ = 0;
  attempt_ = 0;
  round_opened_at_ = height;
  submitted_.assign(n, 0);
  trades_ = FixedMatrix(n);
  p_aux_ = FixedMatrix(n);
  lambda_ = FixedMatrix(n);
  converged_ = false;
  residual_raw_ = 0;
  return chain::CallOutcome::success();
}

chain::CallOutcome TransactiveContract::submit(const AccountId& sender,
                                               const SubmitTradesCall& call,
                                               std::uint64_t height) {
  if (!deployed_) return chain::CallOutcome::failure("contract not deployed");
  if (converged_) return chain::CallOutcome::failure("session already converged");
  const auto idx = index_of(sender);
  if (!idx) return chain::CallOutcome::failure("caller not registered");
  if (call.round != round_) return chain::CallOutcome::failure("wrong round");
  if (submitted_[*idx]) return chain::CallOutcome::failure("duplicate submission");
  if (call.row.size() != prosumers_.size()) {
    return chain::CallOutcome::failure("trade row width mismatch");
  }
  for (std::size_t v = 0; v < call.row.size(); ++v) {
    for (auto x : call.row[v]) {
      if (v == *idx && x != 0) return chain::CallOutcome::failure("self trade");
      if (x > kMaxTradeRaw || x < -kMaxTradeRaw) {
        return chain::CallOutcome::failure("trade out of range");
      }
    }
  }
  trades_.set_row(*idx, call.row);
  submitted_[*idx] = 1;
  if (std::all_of(submitted_.begin(), submitted_.end(), [](auto s) { return s == 1; })) {
    run_dual_update(height);
  }
  return chain::CallOutcome::success();
}

void TransactiveContract::run_dual_update(std::uint64_t height) {
  DualUpdate upd = fixed_dual_update(trades_, p_aux_, lambda_, config_.rho);
  p_aux_ = std::move(upd.p_aux);
  lambda_ = std::move(upd.lambda);
  residual_raw_ = upd.residual_raw;
  converged_ = residual_raw_ < config_.epsilon.raw;
  ++round_;
  ++dual_updates_;
  attempt_ = 0;
  round_opened_at_ = height;
  std::fill(submitted_.begin(), submitted_.end(), 0);
}

DualRead TransactiveContract::read(const AccountId& caller) const {
  DualRead out;
  out.deployed = deployed_;
  out.session = session_;
  out.round = round_;
  out.attempt = attempt_;
  out.converged = converged_;
  out.residual_raw = residual_raw_;
  out.prosumers = prosumers_.size();
  out.submitted_count =
      static_cast<std::size_t>(std::count(submitted_.begin(), submitted_.end(), 1));
  const auto idx = index_of(caller);
  if (!idx) return out;
  out.known_caller = true;
  out.caller_submitted = submitted_[*idx] == 1;
  out.p_aux_row = p_aux_.row(*idx);
  out.lambda_row = lambda_.row(*idx);
  return out;
}

void TransactiveContract::encode_state(ByteWriter& w) const {
  w.boolean(deployed_);
  w.u64(session_);
  w.fixed(operator_);
  w.u32(static_cast<std::uint32_t>(prosumers_.size()));
  for (const auto& id : prosumers_) w.fixed(id);
  w.i64(config_.rho.raw);
  w.i64(config_.epsilon.raw);
  w.u64(config_.round_timeout);
  w.u64(round_);
  w.u64(attempt_);
  w.u64(round_opened_at_);
  w.u64(dual_updates_);
  for (auto s : submitted_) w.u8(s);
  write_matrix(w, trades_);
  write_matrix(w, p_aux_);
  write_matrix(w, lambda_);
  w.boolean(converged_);
  w.i64(residual_raw_);
}

}  // namespace tegrid::contract
