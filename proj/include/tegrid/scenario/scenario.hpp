#pragma once

#include "tegrid/admm/engine.hpp"
#include "tegrid/chain/types.hpp"

#include <filesystem>
#include <map>
#include <optional>

namespace tegrid::scenario {

inline constexpr std::string_view kSchema = "tegrid-scenario/1";

/// Input problem; the message names the file, line or field at fault.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChainSettings {
  std::size_t validators = 3;
  std::int64_t block_interval_ms = 1000;
  std::uint32_t max_block_txs = 256;
};

/// Scenario file (JSON) plus one profile table per simulated day.
///
///   {"schema": "tegrid-scenario/1", "name": ..., "tariff": {...},
///    "admm": {...}, "chain": {...},
///    "prosumers": [{"id": 0, "battery": {...}}, ...],
///    "days": ["day1.tsv", ...], "reference": {"centralized_total_cost": ...}}
///
/// Profile tables are tab-separated with the header
/// `prosumer series h00 .. h23` and one row per prosumer and series
/// (inflexible, preferred_flexible, renewable).
struct Scenario {
  std::string name;
  std::string description;
  energy::Tariff tariff;
  admm::AdmmConfig admm;
  ChainSettings chain;
  std::vector<std::vector<energy::ProsumerProfile>> days;
  /// Frozen values from earlier verified runs, keyed by name.
  std::map<std::string, double> reference;

  std::size_t prosumers() const { return days.empty() ? 0 : days.front().size(); }
};

Scenario load_scenario(const std::filesystem::path& path);
/// Writes `<dir>/<name>.json` and one table per day; returns the JSON path.
std::filesystem::path save_scenario(const std::filesystem::path& dir, const Scenario& s);

/// Genesis for the scenario's committee with the deterministic validator keys.
chain::GenesisConfig scenario_genesis(const Scenario& s, std::int64_t genesis_time_ms = 0);

// --- Results -------------------------------------------------------------

struct RunResults {
  std::string mode;
  std::string status;
  std::uint64_t iterations = 0;
  double total_cost = 0.0;
  std::vector<energy::Schedule> schedules;
  energy::TradeMatrix trades;
  std::vector<std::pair<std::uint64_t, double>> residuals;  // (k, residual)
};

/// Writes schedules.tsv, trades.tsv, residuals.tsv and summary.json.
void write_results(const std::filesystem::path& dir, const RunResults& r);
RunResults read_results(const std::filesystem::path& dir);

RunResults from_admm(const admm::AdmmResult& r);
RunResults from_centralized(const admm::CentralizedResult& r);

// --- Genesis files -------------------------------------------------------

void write_genesis(const std::filesystem::path& path, const chain::GenesisConfig& g);
chain::GenesisConfig read_genesis(const std::filesystem::path& path);

}  // namespace tegrid::scenario
