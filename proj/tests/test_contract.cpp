#include "doctest.h"

#include "tegrid/contract/transactive_contract.hpp"

#include <random>

using namespace tegrid;
using namespace tegrid::contract;

namespace {

AccountId account(std::uint8_t tag) {
  AccountId id{};
  id.fill(tag);
  return id;
}

const AccountId kOperator = account(0xEE);

struct Harness {
  TransactiveContract c;
  std::vector<AccountId> ids;
  std::uint64_t height = 0;

  explicit Harness(std::size_t n, ContractConfig cfg = {}) {
    for (std::size_t i = 0; i < n; ++i) ids.push_back(account(static_cast<std::uint8_t>(i + 1)));
    REQUIRE(call(kOperator, DeployCall{ids, cfg}).ok);
  }

  chain::CallOutcome call(const AccountId& who, const ContractCall& cc) {
    ++height;
    c.begin_block(height);
    return c.execute(who, encode_call(cc), height);
  }

  chain::CallOutcome submit(std::size_t u, const FixedRow& row) {
    return call(ids[u], SubmitTradesCall{c.round(), row});
  }

  FixedRow zero_row() const {
    FixedRow r(ids.size());
    for (auto& s : r) s.fill(0);
    return r;
  }

  Bytes state() const {
    ByteWriter w;
    c.encode_state(w);
    return std::move(w).take();
  }
};

// Independent closed form in long double.
long double oracle_aux(long double p_uv, long double p_vu, long double l_uv, long double l_vu,
                       long double rho) {
  return (p_uv - p_vu) / 2 - (l_uv - l_vu) / (2 * rho);
}

}  // namespace

TEST_CASE("round half even division") {
  CHECK(div_round_half_even(5, 2) == 2);
  CHECK(div_round_half_even(7, 2) == 4);
  CHECK(div_round_half_even(-5, 2) == -2);
  CHECK(div_round_half_even(-7, 2) == -4);
  CHECK(div_round_half_even(1, 3) == 0);
  CHECK(div_round_half_even(2, 3) == 1);
  CHECK(div_round_half_even(-2, 3) == -1);
  CHECK(div_round_half_even(5, -2) == -2);
  CHECK(div_round_half_even(0, 7) == 0);
}

TEST_CASE("integer square root") {
  CHECK(isqrt(0) == 0);
  CHECK(isqrt(1) == 1);
  CHECK(isqrt(15) == 3);
  CHECK(isqrt(16) == 4);
  const uint128 big = uint128(3'000'000'000'000ULL) * 3'000'000'000'000ULL;
  CHECK(isqrt(big) == 3'000'000'000'000ULL);
  CHECK(isqrt(big - 1) == 3'000'000'000'000ULL - 1);
}

TEST_CASE("fixed conversion") {
  CHECK(Fixed::from_double(1.0).raw == 1'000'000'000);
  CHECK(Fixed::from_double(-0.25).raw == -250'000'000);
  CHECK(Fixed::from_double(1e-6).raw == 1000);
  CHECK(Fixed::from_raw(123).to_double() == doctest::Approx(123e-9));
  CHECK_THROWS_AS(Fixed::from_double(1e12), std::range_error);
  CHECK_THROWS_AS(Fixed::from_double(std::nan("")), std::range_error);
}

TEST_CASE("call codec round trip and canonical decoding") {
  SubmitTradesCall s{7, FixedRow(2)};
  s.row[0].fill(0);
  s.row[1].fill(-42);
  const Bytes enc = encode_call(s);
  const auto dec = std::get<SubmitTradesCall>(decode_call(enc));
  CHECK(dec.round == 7);
  CHECK(dec.row == s.row);

  Bytes trailing = enc;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_call(trailing), DecodeError);
  Bytes truncated(enc.begin(), enc.end() - 1);
  CHECK_THROWS_AS(decode_call(truncated), DecodeError);
  CHECK_THROWS_AS(decode_call(Bytes{9}), DecodeError);

  DeployCall d{{account(1), account(2)}, {}};
  const auto dd = std::get<DeployCall>(decode_call(encode_call(d)));
  CHECK(dd.prosumers == d.prosumers);
  CHECK(dd.config.rho == d.config.rho);
}

TEST_CASE("read at round zero returns zeros") {
  Harness h(3);
  const DualRead r = h.c.read(h.ids[1]);
  CHECK(r.deployed);
  CHECK(r.known_caller);
  CHECK(r.round == 0);
  CHECK_FALSE(r.converged);
  REQUIRE(r.p_aux_row.size() == 3);
  for (std::size_t v = 0; v < 3; ++v) {
    for (std::size_t t = 0; t < kSlots; ++t) {
      CHECK(r.p_aux_row[v][t] == 0);
      CHECK(r.lambda_row[v][t] == 0);
    }
  }
}

TEST_CASE("unknown caller sees aggregates only") {
  Harness h(2);
  REQUIRE(h.submit(0, h.zero_row()).ok);
  const DualRead r = h.c.read(account(0x77));
  CHECK_FALSE(r.known_caller);
  CHECK(r.prosumers == 2);
  CHECK(r.submitted_count == 1);
  CHECK(r.p_aux_row.empty());
  CHECK(r.lambda_row.empty());
}

TEST_CASE("submission rules") {
  Harness h(3);
  SUBCASE("first valid submission") {
    CHECK(h.submit(0, h.zero_row()).ok);
    CHECK(h.c.read(h.ids[0]).caller_submitted);
    CHECK(h.c.read(h.ids[0]).submitted_count == 1);
  }
  SUBCASE("duplicate rejected") {
    REQUIRE(h.submit(0, h.zero_row()).ok);
    const auto before = h.state();
    const auto out = h.submit(0, h.zero_row());
    CHECK_FALSE(out.ok);
    CHECK(out.error == "duplicate submission");
    CHECK(h.state() == before);
  }
  SUBCASE("wrong round rejected") {
    CHECK_FALSE(h.call(h.ids[0], SubmitTradesCall{1, h.zero_row()}).ok);
  }
  SUBCASE("unregistered caller rejected") {
    CHECK_FALSE(h.call(account(0x70), SubmitTradesCall{0, h.zero_row()}).ok);
  }
  SUBCASE("self trade rejected") {
    FixedRow row = h.zero_row();
    row[1][3] = 5;
    CHECK_FALSE(h.submit(1, row).ok);
  }
  SUBCASE("row width rejected") {
    CHECK_FALSE(h.submit(0, FixedRow(2)).ok);
  }
  SUBCASE("malformed payload rejected") {
    CHECK_FALSE(h.c.execute(h.ids[0], Bytes{2, 0}, ++h.height).ok);
  }
}

TEST_CASE("barrier: final submission runs the dual update") {
  Harness h(3);
  FixedRow r0 = h.zero_row();
  r0[1].fill(1'000'000'000);  // prosumer 0 buys 1 kWh from 1 in every slot
  REQUIRE(h.submit(0, r0).ok);
  REQUIRE(h.submit(1, h.zero_row()).ok);
  CHECK(h.c.round() == 0);
  CHECK(h.c.dual_updates() == 0);
  REQUIRE(h.submit(2, h.zero_row()).ok);
  CHECK(h.c.round() == 1);
  CHECK(h.c.dual_updates() == 1);
  CHECK(h.c.read(h.ids[0]).submitted_count == 0);
  // p'_01 = (1 - 0)/2 = 0.5, p'_10 = -0.5
  CHECK(h.c.p_aux().at(0, 1)[0] == 500'000'000);
  CHECK(h.c.p_aux().at(1, 0)[0] == -500'000'000);
  // lambda_01 += 0.5 * (0.5 - 1) = -0.25; lambda_10 += 0.5 * (-0.5 - 0) = -0.25
  CHECK(h.c.lambda().at(0, 1)[0] == -250'000'000);
  CHECK(h.c.lambda().at(1, 0)[0] == -250'000'000);
  // residual against the zero auxiliary values the trades answered:
  // only (0, 1) differs, by 1 in each of 24 slots.
  const double expect = std::sqrt(24.0) * 1e9;
  CHECK(std::abs(static_cast<double>(h.c.read(h.ids[0]).residual_raw) - expect) <= 1.0);
  CHECK_FALSE(h.c.converged());
}

TEST_CASE("consistent trades converge and keep lambda at zero") {
  Harness h(2);
  FixedRow r0 = h.zero_row(), r1 = h.zero_row();
  r0[1][5] = 2'000'000'000;
  r1[0][5] = -2'000'000'000;
  REQUIRE(h.submit(0, r0).ok);
  REQUIRE(h.submit(1, r1).ok);
  // The first round answers p' = 0, so it cannot be converged yet.
  CHECK_FALSE(h.c.converged());
  CHECK(h.c.read(h.ids[0]).residual_raw == 4'000'000'000);
  CHECK(h.c.p_aux().at(0, 1)[5] == 2'000'000'000);
  REQUIRE(h.submit(0, r0).ok);
  REQUIRE(h.submit(1, r1).ok);
  CHECK(h.c.converged());
  CHECK(h.c.read(h.ids[0]).converged);
  CHECK(h.c.read(h.ids[0]).residual_raw == 0);
  CHECK(h.c.lambda() == FixedMatrix(2));
  CHECK(h.c.p_aux().at(0, 1)[5] == 2'000'000'000);
  CHECK_FALSE(h.submit(0, r0).ok);
}

TEST_CASE("deploy authority") {
  Harness h(2);
  CHECK_FALSE(h.call(kOperator, DeployCall{h.ids, {}}).ok);
  FixedRow z = h.zero_row();
  REQUIRE(h.submit(0, z).ok);
  REQUIRE(h.submit(1, z).ok);
  REQUIRE(h.c.converged());
  CHECK_FALSE(h.call(h.ids[0], DeployCall{h.ids, {}}).ok);
  CHECK(h.call(kOperator, DeployCall{h.ids, {}}).ok);
  CHECK(h.c.round() == 0);
  CHECK_FALSE(h.c.converged());

  TransactiveContract fresh;
  CHECK_FALSE(fresh.execute(kOperator, encode_call(DeployCall{{}, {}}), 1).ok);
  CHECK_FALSE(
      fresh.execute(kOperator, encode_call(DeployCall{{account(1), account(1)}, {}}), 1).ok);
  ContractConfig bad;
  bad.rho = Fixed::from_raw(0);
  CHECK_FALSE(fresh.execute(kOperator, encode_call(DeployCall{{account(1)}, bad}), 1).ok);
  CHECK_FALSE(fresh.deployed());
}

TEST_CASE("straggler round aborts and re-opens") {
  ContractConfig cfg;
  cfg.round_timeout = 5;
  Harness h(3, cfg);
  // The round opened at the deploy height; the timeout counts from there.
  const std::uint64_t opened = h.height;
  REQUIRE(h.submit(0, h.zero_row()).ok);
  while (h.height < opened + 4) {
    ++h.height;
    h.c.begin_block(h.height);
  }
  CHECK(h.c.read(h.ids[0]).submitted_count == 1);
  ++h.height;
  h.c.begin_block(h.height);
  const DualRead r = h.c.read(h.ids[0]);
  CHECK(r.submitted_count == 0);
  CHECK(r.attempt == 1);
  CHECK(r.round == 0);
  // Every prosumer must submit again; nothing stale is reused.
  REQUIRE(h.submit(1, h.zero_row()).ok);
  REQUIRE(h.submit(2, h.zero_row()).ok);
  CHECK(h.c.round() == 0);
  REQUIRE(h.submit(0, h.zero_row()).ok);
  CHECK(h.c.round() == 1);
  CHECK(h.c.read(h.ids[0]).attempt == 0);
}

TEST_CASE("fixed dual update matches the real-valued closed form") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> trade(-5.0, 5.0), price(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 4);
    const double rho = 0.1 + 0.3 * (trial % 5);
    FixedMatrix p(n), aux(n), lam(n);
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = 0; v < n; ++v) {
        if (u == v) continue;
        for (std::size_t t = 0; t < kSlots; ++t) {
          p.at(u, v)[t] = Fixed::from_double(trade(rng)).raw;
          lam.at(u, v)[t] = Fixed::from_double(price(rng)).raw;
          aux.at(u, v)[t] = Fixed::from_double(trade(rng)).raw;
        }
      }
    }
    const Fixed frho = Fixed::from_double(rho);
    const DualUpdate out = fixed_dual_update(p, aux, lam, frho);
    const long double r = frho.raw * 1e-9L;
    long double resid = 0;
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = 0; v < n; ++v) {
        if (u == v) continue;
        long double sq = 0;
        for (std::size_t t = 0; t < kSlots; ++t) {
          const long double x =
              oracle_aux(p.at(u, v)[t] * 1e-9L, p.at(v, u)[t] * 1e-9L, lam.at(u, v)[t] * 1e-9L,
                         lam.at(v, u)[t] * 1e-9L, r);
          CHECK(std::abs(static_cast<double>(out.p_aux.at(u, v)[t] * 1e-9L - x)) <= 1e-9);
          CHECK(out.p_aux.at(u, v)[t] == -out.p_aux.at(v, u)[t]);
          const long double lnew = lam.at(u, v)[t] * 1e-9L + r * (x - p.at(u, v)[t] * 1e-9L);
          CHECK(std::abs(static_cast<double>(out.lambda.at(u, v)[t] * 1e-9L - lnew)) <= 2e-9);
          const long double diff = (aux.at(u, v)[t] - p.at(u, v)[t]) * 1e-9L;
          sq += diff * diff;
        }
        resid += std::sqrt(sq);
      }
    }
    CHECK(std::abs(static_cast<double>(out.residual_raw * 1e-9L - resid)) <= 1e-7);
  }
}

TEST_CASE("clones evolve identically") {
  Harness h(2);
  auto copy = h.c.clone();
  FixedRow r = h.zero_row();
  r[1][0] = 123'456'789;
  const Bytes call = encode_call(SubmitTradesCall{0, r});
  CHECK(h.c.execute(h.ids[0], call, 10).ok);
  CHECK(copy->execute(h.ids[0], call, 10).ok);
  ByteWriter a, b;
  h.c.encode_state(a);
  copy->encode_state(b);
  CHECK(a.data() == b.data());
}
