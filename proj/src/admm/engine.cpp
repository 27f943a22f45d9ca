#include "tegrid/admm/engine.hpp"

#include "tegrid/contract/fixed.hpp"

#include <cmath>
#include <functional>
#include <sstream>

namespace tegrid::admm {

using energy::kSlots;
using qp::kInf;

namespace {

using Triplet = Eigen::Triplet<double>;

/// Accumulates a sparse QP column by column and row by row.
struct Assembly {
  std::vector<Triplet> Q, A;
  std::vector<double> q, lo, hi, b;

  explicit Assembly(std::size_t vars) : q(vars, 0.0), lo(vars, 0.0), hi(vars, kInf) {}

  std::size_t add_row(double rhs) {
    b.push_back(rhs);
    return b.size() - 1;
  }
  void coef(std::size_t row, std::size_t col, double v) {
    A.emplace_back(static_cast<int>(row), static_cast<int>(col), v);
  }
  void quad(std::size_t col, double v) {
    Q.emplace_back(static_cast<int>(col), static_cast<int>(col), v);
  }
  void bounds(std::size_t col, double l, double h) {
    lo[col] = l;
    hi[col] = h;
  }

  qp::QpProblem finish() const {
    const auto n = static_cast<Eigen::Index>(q.size());
    const auto m = static_cast<Eigen::Index>(b.size());
    qp::SparseMatrix Qs(n, n), As(m, n);
    Qs.setFromTriplets(Q.begin(), Q.end());
    As.setFromTriplets(A.begin(), A.end());
    return qp::QpProblem(std::move(Qs), Eigen::Map<const qp::Vector>(q.data(), n),
                         std::move(As), Eigen::Map<const qp::Vector>(b.data(), m),
                         Eigen::Map<const qp::Vector>(lo.data(), n),
                         Eigen::Map<const qp::Vector>(hi.data(), n));
  }
};

constexpr std::size_t kPerProsumer = PrimalLayout::kBlocks * kSlots + 1;

/// Columns of one prosumer's own (non-trade) variables.
struct OwnColumns {
  std::size_t base;  // first column of the 9 x 24 slot blocks
  std::size_t peak;
  std::size_t at(PrimalLayout::Block blk, std::size_t t) const {
    return base + blk * kSlots + t;
  }
};

/// Adds the prosumer's cost terms, bounds and rows. `trade_col(v, t)`
/// names the column of p_{u,v}[t] for every counterparty v.
void add_prosumer(Assembly& as, const ProsumerProfile& prof, const Tariff& tariff,
                  const OwnColumns& col, std::size_t prosumers,
                  const std::function<std::size_t(std::size_t, std::size_t)>& trade_col) {
  using B = PrimalLayout;
  const auto& bat = prof.battery;
  const double eta = bat.efficiency;
  double preferred_total = 0.0;
  for (std::size_t t = 0; t < kSlots; ++t) {
    preferred_total += prof.preferred_flexible[t];

    as.q[col.at(B::kG, t)] = tariff.alpha;
    as.bounds(col.at(B::kG, t), 0.0, kInf);
    as.bounds(col.at(B::kR, t), 0.0, prof.renewable_avail[t]);
    // (l - ref)^2 = l^2 - 2 ref l + const
    as.quad(col.at(B::kL, t), 2.0);
    as.q[col.at(B::kL, t)] = -2.0 * prof.preferred_flexible[t];
    as.bounds(col.at(B::kL, t), 0.0, kInf);
    as.q[col.at(B::kC, t)] = tariff.wear_price;
    as.bounds(col.at(B::kC, t), 0.0, bat.charge_limit);
    as.q[col.at(B::kD, t)] = tariff.wear_price;
    as.bounds(col.at(B::kD, t), 0.0, bat.discharge_limit);
    as.q[col.at(B::kE, t)] = -tariff.pi_as[t];
    as.bounds(col.at(B::kE, t), 0.0, bat.capacity);
    as.bounds(col.at(B::kSoc, t), 0.0, bat.capacity);
    as.bounds(col.at(B::kReserve, t), 0.0, bat.capacity);
    as.bounds(col.at(B::kPeakGap, t), 0.0, kInf);

    // l + c - r - g - d - sum_v p_v = -L_if
    const std::size_t bal = as.add_row(-prof.inflexible[t]);
    as.coef(bal, col.at(B::kL, t), 1.0);
    as.coef(bal, col.at(B::kC, t), 1.0);
    as.coef(bal, col.at(B::kR, t), -1.0);
    as.coef(bal, col.at(B::kG, t), -1.0);
    as.coef(bal, col.at(B::kD, t), -1.0);
    for (std::size_t v = 0; v < prosumers; ++v) {
      if (v != prof.id) as.coef(bal, trade_col(v, t), -1.0);
    }

    // soc[t] - soc[t-1] - eta c[t] + d[t]/eta = 0 (soc[-1] = initial)
    const std::size_t soc = as.add_row(t == 0 ? bat.initial_soc : 0.0);
    as.coef(soc, col.at(B::kSoc, t), 1.0);
    if (t > 0) as.coef(soc, col.at(B::kSoc, t - 1), -1.0);
    as.coef(soc, col.at(B::kC, t), -eta);
    as.coef(soc, col.at(B::kD, t), 1.0 / eta);

    // soc - e_as - reserve = 0, so e_as <= soc.
    const std::size_t res = as.add_row(0.0);
    as.coef(res, col.at(B::kSoc, t), 1.0);
    as.coef(res, col.at(B::kE, t), -1.0);
    as.coef(res, col.at(B::kReserve, t), -1.0);

    // peak - g - gap = 0, so g <= peak.
    const std::size_t pk = as.add_row(0.0);
    as.coef(pk, col.peak, 1.0);
    as.coef(pk, col.at(B::kG, t), -1.0);
    as.coef(pk, col.at(B::kPeakGap, t), -1.0);
  }
  const std::size_t cons = as.add_row(preferred_total);
  for (std::size_t t = 0; t < kSlots; ++t) as.coef(cons, col.at(B::kL, t), 1.0);

  as.q[col.peak] = tariff.beta;
  as.bounds(col.peak, 0.0, kInf);
}

Schedule extract_schedule(const qp::Vector& x, const OwnColumns& col) {
  using B = PrimalLayout;
  Schedule s;
  for (std::size_t t = 0; t < kSlots; ++t) {
    auto at = [&](B::Block blk) { return x[static_cast<Eigen::Index>(col.at(blk, t))]; };
    // Interior-point iterates may sit a hair outside a bound; the schedule
    // reports the clipped value only for the sign-constrained quantities.
    s.g[t] = std::max(0.0, at(B::kG));
    s.r[t] = std::max(0.0, at(B::kR));
    s.l_fl[t] = std::max(0.0, at(B::kL));
    s.c[t] = std::max(0.0, at(B::kC));
    s.d[t] = std::max(0.0, at(B::kD));
    s.e_as[t] = std::max(0.0, at(B::kE));
    s.soc[t] = at(B::kSoc);
  }
  return s;
}

void check_rows(const ProsumerProfile& profile, std::span<const SlotVector> row,
                std::size_t prosumers) {
  if (row.size() != prosumers) throw energy::DomainError("dual row width mismatch");
  if (profile.id >= prosumers) throw energy::DomainError("profile id out of range");
  profile.validate();
}

}  // namespace

void AdmmConfig::validate() const {
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be > 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (!(p_max > 0.0)) throw std::invalid_argument("p_max must be > 0");
  if (max_iterations == 0) throw std::invalid_argument("max_iterations must be >= 1");
}

PrimalLayout::PrimalLayout(std::size_t n, std::size_t u)
    : prosumers(n),
      self(u),
      per_prosumer_vars(kPerProsumer),
      num_vars(kBlocks * kSlots + kSlots * (n - 1) + 1) {}

std::size_t PrimalLayout::trade(std::size_t v, std::size_t t) const {
  const std::size_t slot_index = v < self ? v : v - 1;
  return kBlocks * kSlots + slot_index * kSlots + t;
}

qp::QpProblem build_primal(const ProsumerProfile& profile, const Tariff& tariff,
                           std::span<const SlotVector> p_aux_row,
                           std::span<const SlotVector> lambda_row, double rho,
                           double p_max) {
  const std::size_t n = p_aux_row.size();
  check_rows(profile, p_aux_row, n);
  check_rows(profile, lambda_row, n);
  tariff.validate();
  const PrimalLayout layout(n, profile.id);
  Assembly as(layout.num_vars);
  const OwnColumns own{0, layout.peak()};
  add_prosumer(as, profile, tariff, own, n,
               [&](std::size_t v, std::size_t t) { return layout.trade(v, t); });
  for (std::size_t v = 0; v < n; ++v) {
    if (v == profile.id) continue;
    for (std::size_t t = 0; t < kSlots; ++t) {
      const std::size_t c = layout.trade(v, t);
      // pi p + rho/2 (p' - p)^2 - lambda p  ->  rho/2 p^2 + (pi - rho p' - lambda) p
      as.quad(c, rho);
      as.q[c] = tariff.pi_p2p - rho * p_aux_row[v][t] - lambda_row[v][t];
      as.bounds(c, -p_max, p_max);
    }
  }
  return as.finish();
}

qp::QpProblem build_primal(const ProsumerProfile& profile, const Tariff& tariff,
                           const DualState& dual, double rho, double p_max) {
  return build_primal(profile, tariff, dual.p_aux.row(profile.id),
                      dual.lambda.row(profile.id), rho, p_max);
}

PrimalSolution solve_primal(const ProsumerProfile& profile, const Tariff& tariff,
                            std::span<const SlotVector> p_aux_row,
                            std::span<const SlotVector> lambda_row,
                            const AdmmConfig& config) {
  const qp::QpProblem problem =
      build_primal(profile, tariff, p_aux_row, lambda_row, config.rho, config.p_max);
  PrimalSolution out;
  out.qp = qp::solve_qp(problem, config.qp);
  const std::size_t n = p_aux_row.size();
  const PrimalLayout layout(n, profile.id);
  out.schedule = extract_schedule(out.qp.x, OwnColumns{0, layout.peak()});
  out.trades.assign(n, SlotVector{});
  for (std::size_t v = 0; v < n; ++v) {
    if (v == profile.id) continue;
    for (std::size_t t = 0; t < kSlots; ++t) {
      out.trades[v][t] = out.qp.x[static_cast<Eigen::Index>(layout.trade(v, t))];
    }
  }
  return out;
}

DualState solve_dual(const TradeMatrix& trades, const DualState& dual, double rho) {
  const std::size_t n = trades.size();
  DualState out = dual;
  for (std::size_t u = 0; u < n; ++u) {
    out.p_aux.at(u, u).fill(0.0);
    for (std::size_t v = u + 1; v < n; ++v) {
      for (std::size_t t = 0; t < kSlots; ++t) {
        const double x = 0.5 * (trades.at(u, v)[t] - trades.at(v, u)[t]) -
                         (dual.lambda.at(u, v)[t] - dual.lambda.at(v, u)[t]) / (2.0 * rho);
        out.p_aux.at(u, v)[t] = x;
        out.p_aux.at(v, u)[t] = -x;
      }
    }
  }
  return out;
}

DualState update_multipliers(const DualState& dual, const TradeMatrix& trades, double rho) {
  const std::size_t n = trades.size();
  DualState out = dual;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      if (u == v) continue;
      for (std::size_t t = 0; t < kSlots; ++t) {
        out.lambda.at(u, v)[t] += rho * (dual.p_aux.at(u, v)[t] - trades.at(u, v)[t]);
      }
    }
  }
  ++out.k;
  return out;
}

double residual(const TradeMatrix& trades, const DualState& dual) {
  const std::size_t n = trades.size();
  double total = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) {
      if (u == v) continue;
      double sq = 0.0;
      for (std::size_t t = 0; t < kSlots; ++t) {
        const double diff = dual.p_aux.at(u, v)[t] - trades.at(u, v)[t];
        sq += diff * diff;
      }
      total += std::sqrt(sq);
    }
  }
  return total;
}

std::vector<SlotVector> quantize_row(std::span<const SlotVector> row) {
  std::vector<SlotVector> out(row.begin(), row.end());
  for (auto& slots : out) {
    for (auto& v : slots) v = contract::Fixed::from_double(v).to_double();
  }
  return out;
}

const char* to_string(AdmmStatus s) {
  switch (s) {
    case AdmmStatus::Converged: return "converged";
    case AdmmStatus::MaxIterations: return "max_iterations";
    case AdmmStatus::Aborted: return "aborted";
  }
  return "unknown";
}

double total_cost(std::span<const ProsumerProfile> profiles,
                  std::span<const Schedule> schedules, const TradeMatrix& trades,
                  const Tariff& tariff) {
  double total = 0.0;
  for (std::size_t u = 0; u < profiles.size(); ++u) {
    total += energy::prosumer_cost(profiles[u], schedules[u], trades.row(u), tariff).total;
  }
  return total;
}

AdmmResult run_admm(std::span<const ProsumerProfile> profiles, const Tariff& tariff,
                    const AdmmConfig& config, CoordinatorPort& coordinator) {
  config.validate();
  const std::size_t n = profiles.size();
  if (n == 0) throw std::invalid_argument("run_admm needs at least one prosumer");
  if (coordinator.prosumers() != n) {
    throw std::invalid_argument("coordinator prosumer count mismatch");
  }
  for (std::size_t u = 0; u < n; ++u) {
    if (profiles[u].id != u) throw std::invalid_argument("profile ids must be 0..U-1");
  }

  AdmmResult result;
  result.schedules.resize(n);
  result.trades = TradeMatrix(n);

  for (std::size_t iter = 0; iter < config.max_iterations; ++iter) {
    std::uint64_t round = 0;
    for (std::size_t u = 0; u < n; ++u) {
      const DualView view = coordinator.read(u);
      round = view.round;
      PrimalSolution sol =
          solve_primal(profiles[u], tariff, view.p_aux_row, view.lambda_row, config);
      if (sol.qp.status != qp::QpStatus::Optimal) {
        std::ostringstream os;
        os << "primal subproblem of prosumer " << u << " ended "
           << qp::to_string(sol.qp.status) << " at round " << round;
        result.status = AdmmStatus::Aborted;
        result.abort_reason = os.str();
        result.total_cost = total_cost(profiles, result.schedules, result.trades, tariff);
        return result;
      }
      const auto row = quantize_row(sol.trades);
      std::copy(row.begin(), row.end(), result.trades.row(u).begin());
      result.schedules[u] = sol.schedule;
      coordinator.submit(u, round, row);
    }

    RoundOutcome outcome;
    try {
      outcome = coordinator.await_round(round);
    } catch (const CoordinatorTimeout& e) {
      result.status = AdmmStatus::Aborted;
      result.abort_reason = e.what();
      break;
    }

    IterationReport report;
    report.k = outcome.round;
    report.residual = outcome.residual;
    report.converged = outcome.converged;
    report.per_prosumer_cost.reserve(n);
    for (std::size_t u = 0; u < n; ++u) {
      report.per_prosumer_cost.push_back(energy::prosumer_cost(
          profiles[u], result.schedules[u], result.trades.row(u), tariff));
    }
    result.history.push_back(std::move(report));
    result.iterations = outcome.round;
    if (outcome.converged) {
      result.status = AdmmStatus::Converged;
      break;
    }
  }
  result.total_cost = total_cost(profiles, result.schedules, result.trades, tariff);
  return result;
}

CentralizedResult solve_centralized(std::span<const ProsumerProfile> profiles,
                                    const Tariff& tariff, const AdmmConfig& config) {
  const std::size_t n = profiles.size();
  if (n == 0) throw std::invalid_argument("solve_centralized needs at least one prosumer");
  for (std::size_t u = 0; u < n; ++u) {
    if (profiles[u].id != u) throw std::invalid_argument("profile ids must be 0..U-1");
  }
  tariff.validate();
  for (const auto& p : profiles) p.validate();
  const std::size_t trade_base = n * kPerProsumer;
  auto trade_col = [&](std::size_t u, std::size_t v, std::size_t t) {
    return trade_base + (u * n + v) * kSlots + t;
  };
  Assembly as(trade_base + n * n * kSlots);
  for (std::size_t u = 0; u < n; ++u) {
    const OwnColumns own{u * kPerProsumer, u * kPerProsumer + kPerProsumer - 1};
    add_prosumer(as, profiles[u], tariff, own, n,
                 [&](std::size_t v, std::size_t t) { return trade_col(u, v, t); });
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t t = 0; t < kSlots; ++t) {
        const std::size_t c = trade_col(u, v, t);
        if (u == v) {
          as.bounds(c, 0.0, 0.0);
        } else {
          as.q[c] = tariff.pi_p2p;
          as.bounds(c, -config.p_max, config.p_max);
        }
      }
    }
  }
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      for (std::size_t t = 0; t < kSlots; ++t) {
        const std::size_t row = as.add_row(0.0);
        as.coef(row, trade_col(u, v, t), 1.0);
        as.coef(row, trade_col(v, u, t), 1.0);
      }
    }
  }
  const qp::QpSolution sol = qp::solve_qp(as.finish(), config.qp);

  CentralizedResult out;
  out.status = sol.status;
  out.trades = TradeMatrix(n);
  for (std::size_t u = 0; u < n; ++u) {
    out.schedules.push_back(extract_schedule(
        sol.x, OwnColumns{u * kPerProsumer, u * kPerProsumer + kPerProsumer - 1}));
    for (std::size_t v = 0; v < n; ++v) {
      if (u == v) continue;
      for (std::size_t t = 0; t < kSlots; ++t) {
        out.trades.at(u, v)[t] = sol.x[static_cast<Eigen::Index>(trade_col(u, v, t))];
      }
    }
  }
  out.total_cost = total_cost(profiles, out.schedules, out.trades, tariff);
  return out;
}

}  // namespace tegrid::admm
