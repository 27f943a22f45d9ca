#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tegrid::energy {

/// Day-ahead horizon: 24 one-hour slots.
inline constexpr std::size_t kSlots = 24;
inline constexpr double kSlotHours = 1.0;

using SlotVector = std::array<double, kSlots>;

/// Raised when a model input violates a domain precondition
/// (negative energy, wrong vector length, inconsistent shapes).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Horizon {
  std::size_t slots = kSlots;
  double slot_duration_h = kSlotHours;
};

struct Tariff {
  double alpha = 0.0;       // energy rate, currency/kWh
  double beta = 0.0;        // peak rate, currency/kW
  double pi_p2p = 0.0;      // fixed peer-to-peer price
  SlotVector pi_as{};       // ancillary reward price per slot
  double wear_price = 1.0;  // multiplies charge + discharge throughput

  void validate() const;
};

struct BatterySpec {
  double capacity = 10.0;
  double charge_limit = 3.0;
  double discharge_limit = 3.0;
  double efficiency = 0.95;
  double initial_soc = 0.0;

  void validate() const;
};

struct ProsumerProfile {
  std::size_t id = 0;
  SlotVector inflexible{};
  SlotVector preferred_flexible{};
  SlotVector renewable_avail{};
  BatterySpec battery{};

  void validate() const;
};

/// One prosumer's decisions over the horizon. `soc` is the battery
/// energy level implied by `c` and `d`; it is carried so callers do not
/// have to re-integrate it.
struct Schedule {
  SlotVector g{};
  SlotVector r{};
  SlotVector l_fl{};
  SlotVector c{};
  SlotVector d{};
  SlotVector e_as{};
  SlotVector soc{};
};

/// p[u][v][t]: energy prosumer u buys from v in slot t (negative = sells).
class TradeMatrix {
 public:
  TradeMatrix() = default;
  explicit TradeMatrix(std::size_t prosumers)
      : n_(prosumers), data_(prosumers * prosumers) {
    for (auto& row : data_) row.fill(0.0);
  }

  std::size_t size() const { return n_; }

  SlotVector& at(std::size_t u, std::size_t v) { return data_.at(u * n_ + v); }
  const SlotVector& at(std::size_t u, std::size_t v) const {
    return data_.at(u * n_ + v);
  }

  /// Prosumer u's row: n entries, one per counterparty.
  std::span<const SlotVector> row(std::size_t u) const {
    return {data_.data() + u * n_, n_};
  }
  std::span<SlotVector> row(std::size_t u) {
    return {data_.data() + u * n_, n_};
  }

  bool operator==(const TradeMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<SlotVector> data_;
};

struct CostBreakdown {
  double grid = 0.0;
  double discomfort = 0.0;
  double battery_wear = 0.0;
  double p2p = 0.0;
  double ancillary_reward = 0.0;
  double total = 0.0;
};

double grid_cost(std::span<const double> g, const Tariff& tariff);
double discomfort_cost(std::span<const double> l_fl,
                       std::span<const double> preferred);
double battery_wear_cost(std::span<const double> c, std::span<const double> d,
                         double wear_price = 1.0);
double p2p_cost(std::span<const SlotVector> p_row, double pi_p2p);
double ancillary_reward(std::span<const double> e_as,
                        std::span<const double> pi_as);

/// b[t] = b[t-1] + eta*c[t] - d[t]/eta starting from initial_soc.
/// Not clamped; use check_feasibility to detect violations.
SlotVector soc_trajectory(const BatterySpec& battery, std::span<const double> c,
                          std::span<const double> d);

/// Per-slot (l_fl + L_if + c) - (r + g + d + sum_v p[v]).
SlotVector balance_residual(const ProsumerProfile& profile,
                            const Schedule& sched,
                            std::span<const SlotVector> p_row);

CostBreakdown prosumer_cost(const ProsumerProfile& profile,
                            const Schedule& sched,
                            std::span<const SlotVector> p_row,
                            const Tariff& tariff);

/// Empty result means the schedule satisfies every bound, the energy
/// balance, flexible-load conservation and reserve <= state of charge,
/// all to within `tol`.
std::vector<std::string> check_feasibility(const ProsumerProfile& profile,
                                           const Schedule& sched,
                                           std::span<const SlotVector> p_row,
                                           double tol = 1e-6);

}  // namespace tegrid::energy
