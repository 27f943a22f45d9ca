#pragma once

#include "tegrid/energy/model.hpp"
#include "tegrid/qp/solver.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace tegrid::admm {

using energy::CostBreakdown;
using energy::ProsumerProfile;
using energy::Schedule;
using energy::SlotVector;
using energy::Tariff;
using energy::TradeMatrix;

struct AdmmConfig {
  double rho = 0.5;
  double epsilon = 1e-6;
  std::size_t max_iterations = 2000;
  double p_max = 10.0;  // |p_uv[t]| bound, kWh
  // Subproblem noise feeds straight into the residual, so the local solves
  // run well below the convergence threshold.
  qp::QpSettings qp{.tol = 1e-11};

  void validate() const;
};

/// Auxiliary trades p' and multipliers lambda held by the coordinator.
struct DualState {
  DualState() = default;
  explicit DualState(std::size_t prosumers)
      : p_aux(prosumers), lambda(prosumers) {}

  TradeMatrix p_aux;
  TradeMatrix lambda;
  std::uint64_t k = 0;
};

struct IterationReport {
  std::uint64_t k = 0;
  double residual = 0.0;
  std::vector<CostBreakdown> per_prosumer_cost;
  bool converged = false;
};

/// Column layout of one prosumer's primal QP. Per slot: g, r, l_fl, c, d,
/// e_as, soc, reserve headroom (soc - e_as), peak headroom (peak - g); then
/// one 24-block per trading partner; then the scalar peak.
struct PrimalLayout {
  PrimalLayout(std::size_t prosumers, std::size_t self);

  enum Block : std::size_t { kG, kR, kL, kC, kD, kE, kSoc, kReserve, kPeakGap, kBlocks };

  std::size_t slot(Block b, std::size_t t) const { return b * energy::kSlots + t; }
  /// Trade column for counterparty v (v != self).
  std::size_t trade(std::size_t v, std::size_t t) const;
  std::size_t peak() const { return num_vars - 1; }

  std::size_t prosumers;
  std::size_t self;
  std::size_t per_prosumer_vars;
  std::size_t num_vars;
};

/// Prosumer u's local subproblem: its own cost plus, per trade entry,
/// rho/2 (p' - p)^2 - lambda p. Rows: energy balance, flexible-load
/// conservation, state-of-charge recursion, reserve and peak epigraph.
qp::QpProblem build_primal(const ProsumerProfile& profile, const Tariff& tariff,
                           std::span<const SlotVector> p_aux_row,
                           std::span<const SlotVector> lambda_row, double rho,
                           double p_max);
qp::QpProblem build_primal(const ProsumerProfile& profile, const Tariff& tariff,
                           const DualState& dual, double rho, double p_max);

struct PrimalSolution {
  Schedule schedule;
  std::vector<SlotVector> trades;  // row of the trade matrix, self entry zero
  qp::QpSolution qp;
};

PrimalSolution solve_primal(const ProsumerProfile& profile, const Tariff& tariff,
                            std::span<const SlotVector> p_aux_row,
                            std::span<const SlotVector> lambda_row,
                            const AdmmConfig& config);

/// Closed-form minimizer of the coordinator problem under reciprocity
/// p'_uv = -p'_vu. Returns `dual` with p_aux replaced.
DualState solve_dual(const TradeMatrix& trades, const DualState& dual, double rho);

/// lambda += rho (p' - p); increments k.
DualState update_multipliers(const DualState& dual, const TradeMatrix& trades, double rho);

/// Sum over ordered pairs (u, v) of ||p'_uv - p_uv||_2, where p' is the
/// auxiliary value the trades responded to (before solve_dual).
double residual(const TradeMatrix& trades, const DualState& dual);

// --- Coordination port ---------------------------------------------------

class CoordinatorTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DualView {
  std::uint64_t round = 0;
  bool converged = false;
  double residual = 0.0;
  std::vector<SlotVector> p_aux_row;
  std::vector<SlotVector> lambda_row;
};

struct RoundOutcome {
  std::uint64_t round = 0;  // round now open (previous one closed)
  bool converged = false;
  double residual = 0.0;
};

/// The contract functions as seen by prosumers: read duals (Func C),
/// submit trades (Func B), and wait for the barrier/dual update (Func A).
class CoordinatorPort {
 public:
  virtual ~CoordinatorPort() = default;

  virtual std::size_t prosumers() const = 0;
  virtual DualView read(std::size_t prosumer) = 0;
  virtual void submit(std::size_t prosumer, std::uint64_t round,
                      std::span<const SlotVector> trade_row) = 0;
  /// Blocks until `round` has closed; throws CoordinatorTimeout.
  virtual RoundOutcome await_round(std::uint64_t round) = 0;
};

/// Quantizes a trade row to the coordinator's fixed-point grid.
std::vector<SlotVector> quantize_row(std::span<const SlotVector> row);

enum class AdmmStatus { Converged, MaxIterations, Aborted };

const char* to_string(AdmmStatus s);

struct AdmmResult {
  AdmmStatus status = AdmmStatus::MaxIterations;
  std::vector<Schedule> schedules;
  TradeMatrix trades;
  std::vector<IterationReport> history;
  double total_cost = 0.0;
  std::uint64_t iterations = 0;
  std::string abort_reason;
};

/// Iteration driver: every prosumer reads its duals, solves its primal
/// problem and submits its (quantized) trade row; the coordinator closes
/// the round with the dual update. Stops when the coordinator reports
/// residual < epsilon or after max_iterations rounds.
AdmmResult run_admm(std::span<const ProsumerProfile> profiles, const Tariff& tariff,
                    const AdmmConfig& config, CoordinatorPort& coordinator);

struct CentralizedResult {
  qp::QpStatus status = qp::QpStatus::MaxIterations;
  std::vector<Schedule> schedules;
  TradeMatrix trades;
  double total_cost = 0.0;
};

/// Joint problem over all prosumers with p_uv + p_vu = 0 imposed directly.
CentralizedResult solve_centralized(std::span<const ProsumerProfile> profiles,
                                    const Tariff& tariff, const AdmmConfig& config = {});

double total_cost(std::span<const ProsumerProfile> profiles,
                  std::span<const Schedule> schedules, const TradeMatrix& trades,
                  const Tariff& tariff);

}  // namespace tegrid::admm
