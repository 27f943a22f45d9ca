#include "tegrid/energy/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tegrid::energy {
namespace {

void require_length(std::span<const double> v, const char* name) {
  if (v.size() != kSlots) {
    throw DomainError(std::string(name) + ": expected " +
                      std::to_string(kSlots) + " slots, got " +
                      std::to_string(v.size()));
  }
}

void require_nonnegative(std::span<const double> v, const char* name) {
  for (std::size_t t = 0; t < v.size(); ++t) {
    if (!(v[t] >= 0.0)) {
      throw DomainError(std::string(name) + "[" + std::to_string(t) +
                        "] is negative or NaN");
    }
  }
}

double sum(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace

void Tariff::validate() const {
  if (!(alpha > 0.0)) throw DomainError("tariff.alpha must be > 0");
  if (!(beta >= 0.0)) throw DomainError("tariff.beta must be >= 0");
  if (!(pi_p2p > 0.0 && pi_p2p < alpha)) {
    throw DomainError("tariff.pi_p2p must lie in (0, alpha)");
  }
  require_nonnegative(pi_as, "tariff.pi_as");
  if (!(wear_price >= 0.0)) throw DomainError("tariff.wear_price must be >= 0");
}

void BatterySpec::validate() const {
  if (!(capacity >= 0.0)) throw DomainError("battery.capacity must be >= 0");
  if (!(charge_limit > 0.0)) throw DomainError("battery.charge_limit must be > 0");
  if (!(discharge_limit > 0.0)) {
    throw DomainError("battery.discharge_limit must be > 0");
  }
  if (!(efficiency > 0.0 && efficiency <= 1.0)) {
    throw DomainError("battery.efficiency must lie in (0, 1]");
  }
  if (!(initial_soc >= 0.0 && initial_soc <= capacity)) {
    throw DomainError("battery.initial_soc must lie in [0, capacity]");
  }
}

void ProsumerProfile::validate() const {
  require_nonnegative(inflexible, "inflexible");
  require_nonnegative(preferred_flexible, "preferred_flexible");
  require_nonnegative(renewable_avail, "renewable_avail");
  battery.validate();
}

double grid_cost(std::span<const double> g, const Tariff& tariff) {
  require_length(g, "g");
  require_nonnegative(g, "g");
  return tariff.alpha * sum(g) + tariff.beta * *std::max_element(g.begin(), g.end());
}

double discomfort_cost(std::span<const double> l_fl,
                       std::span<const double> preferred) {
  if (l_fl.size() != preferred.size()) {
    throw DomainError("discomfort_cost: length mismatch");
  }
  require_length(l_fl, "l_fl");
  double acc = 0.0;
  for (std::size_t t = 0; t < l_fl.size(); ++t) {
    const double dev = l_fl[t] - preferred[t];
    acc += dev * dev;
  }
  return acc;
}

double battery_wear_cost(std::span<const double> c, std::span<const double> d,
                         double wear_price) {
  require_length(c, "c");
  require_length(d, "d");
  require_nonnegative(c, "c");
  require_nonnegative(d, "d");
  return wear_price * (sum(c) + sum(d));
}

double p2p_cost(std::span<const SlotVector> p_row, double pi_p2p) {
  double acc = 0.0;
  for (const auto& slots : p_row) acc += sum(slots);
  return pi_p2p * acc;
}

double ancillary_reward(std::span<const double> e_as,
                        std::span<const double> pi_as) {
  require_length(e_as, "e_as");
  require_length(pi_as, "pi_as");
  require_nonnegative(e_as, "e_as");
  return std::inner_product(e_as.begin(), e_as.end(), pi_as.begin(), 0.0);
}

SlotVector soc_trajectory(const BatterySpec& battery, std::span<const double> c,
                          std::span<const double> d) {
  require_length(c, "c");
  require_length(d, "d");
  SlotVector b{};
  double level = battery.initial_soc;
  const double eta = battery.efficiency;
  for (std::size_t t = 0; t < kSlots; ++t) {
    level = level + eta * c[t] - d[t] / eta;
    b[t] = level;
  }
  return b;
}

SlotVector balance_residual(const ProsumerProfile& profile,
                            const Schedule& sched,
                            std::span<const SlotVector> p_row) {
  SlotVector res{};
  for (std::size_t t = 0; t < kSlots; ++t) {
    double bought = 0.0;
    for (const auto& slots : p_row) bought += slots[t];
    const double lhs = sched.l_fl[t] + profile.inflexible[t] + sched.c[t];
    const double rhs = sched.r[t] + sched.g[t] + sched.d[t] + bought;
    res[t] = lhs - rhs;
  }
  return res;
}

CostBreakdown prosumer_cost(const ProsumerProfile& profile,
                            const Schedule& sched,
                            std::span<const SlotVector> p_row,
                            const Tariff& tariff) {
  CostBreakdown cb;
  cb.grid = grid_cost(sched.g, tariff);
  cb.discomfort = discomfort_cost(sched.l_fl, profile.preferred_flexible);
  cb.battery_wear = battery_wear_cost(sched.c, sched.d, tariff.wear_price);
  cb.p2p = p2p_cost(p_row, tariff.pi_p2p);
  cb.ancillary_reward = ancillary_reward(sched.e_as, tariff.pi_as);
  cb.total = cb.grid + cb.discomfort + cb.battery_wear + cb.p2p -
             cb.ancillary_reward;
  return cb;
}

std::vector<std::string> check_feasibility(const ProsumerProfile& profile,
                                           const Schedule& sched,
                                           std::span<const SlotVector> p_row,
                                           double tol) {
  std::vector<std::string> issues;
  auto report = [&](const char* what, std::size_t t, double value) {
    std::ostringstream os;
    os << "prosumer " << profile.id << " slot " << t << ": " << what << " ("
       << value << ")";
    issues.push_back(os.str());
  };
  const auto& bat = profile.battery;
  const SlotVector soc = soc_trajectory(bat, sched.c, sched.d);
  const SlotVector res = balance_residual(profile, sched, p_row);
  for (std::size_t t = 0; t < kSlots; ++t) {
    if (sched.g[t] < -tol) report("g < 0", t, sched.g[t]);
    if (sched.r[t] < -tol || sched.r[t] > profile.renewable_avail[t] + tol) {
      report("r outside [0, renewable_avail]", t, sched.r[t]);
    }
    if (sched.l_fl[t] < -tol) report("l_fl < 0", t, sched.l_fl[t]);
    if (sched.c[t] < -tol || sched.c[t] > bat.charge_limit + tol) {
      report("c outside [0, charge_limit]", t, sched.c[t]);
    }
    if (sched.d[t] < -tol || sched.d[t] > bat.discharge_limit + tol) {
      report("d outside [0, discharge_limit]", t, sched.d[t]);
    }
    if (soc[t] < -tol || soc[t] > bat.capacity + tol) {
      report("soc outside [0, capacity]", t, soc[t]);
    }
    if (sched.e_as[t] < -tol || sched.e_as[t] > soc[t] + tol) {
      report("e_as outside [0, soc]", t, sched.e_as[t]);
    }
    if (std::abs(res[t]) > tol) report("energy balance residual", t, res[t]);
  }
  for (std::size_t v = 0; v < p_row.size(); ++v) {
    if (v == profile.id) {
      for (std::size_t t = 0; t < kSlots; ++t) {
        if (p_row[v][t] != 0.0) report("self trade", t, p_row[v][t]);
      }
    }
  }
  const double shifted = sum(sched.l_fl) - sum(profile.preferred_flexible);
  if (std::abs(shifted) > tol * kSlots) {
    report("flexible load not conserved", 0, shifted);
  }
  return issues;
}

}  // namespace tegrid::energy
