// Command-line entry point: solve, node, bench, keygen, genesis, replay.

#include "tegrid/admm/chain_coordinator.hpp"
#include "tegrid/chain/block_log.hpp"
#include "tegrid/net/bench.hpp"
#include "tegrid/scenario/scenario.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sodium.h>

namespace fs = std::filesystem;
using namespace tegrid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitMaxIter = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct SolveOptions {
  std::string scenario;
  std::string mode = "admm";
  std::string transport = "sim";
  std::optional<double> rho;
  std::optional<double> epsilon;
  std::optional<std::size_t> max_iter;
  std::optional<std::int64_t> block_interval_ms;
  std::string out;
  std::size_t day = 0;  // 0 = all
};

fs::path resolve_scenario(const std::string& arg) {
  fs::path p(arg);
  if (fs::exists(p)) return p;
  const fs::path bundled = fs::path(TEGRID_SCENARIO_DIR) / (arg + ".json");
  if (fs::exists(bundled)) return bundled;
  throw scenario::ScenarioError(arg + ": no such scenario file or bundled scenario");
}

int solve_day(const SolveOptions& o, const scenario::Scenario& s, std::size_t d,
              const fs::path& out) {
  const auto& profiles = s.days[d];
  admm::AdmmConfig cfg = s.admm;
  if (o.rho) cfg.rho = *o.rho;
  if (o.epsilon) cfg.epsilon = *o.epsilon;
  if (o.max_iter) cfg.max_iterations = *o.max_iter;
  cfg.validate();

  scenario::RunResults results;
  int code = kExitOk;
  if (o.mode == "centralized") {
    const auto r = admm::solve_centralized(profiles, s.tariff, cfg);
    results = scenario::from_centralized(r);
    if (r.status != qp::QpStatus::Optimal) code = kExitFailure;
  } else {
    std::unique_ptr<admm::CoordinatorPort> port;
    admm::ChainCoordinatorBase* chain = nullptr;
    if (o.mode == "admm") {
      port = std::make_unique<admm::InProcessCoordinator>(profiles.size(), cfg);
    } else if (o.transport == "sim") {
      auto c = std::make_unique<admm::SimChainCoordinator>(
          profiles.size(), cfg, s.chain.validators, o.block_interval_ms.value_or(s.chain.block_interval_ms));
      chain = c.get();
      port = std::move(c);
    } else {
      auto c = std::make_unique<admm::TcpChainCoordinator>(
          profiles.size(), cfg, s.chain.validators, o.block_interval_ms.value_or(100));
      chain = c.get();
      port = std::move(c);
    }
    const auto r = admm::run_admm(profiles, s.tariff, cfg, *port);
    results = scenario::from_admm(r);
    results.mode = o.mode;
    if (r.status == admm::AdmmStatus::MaxIterations) code = kExitMaxIter;
    if (r.status == admm::AdmmStatus::Aborted) {
      std::cerr << "aborted: " << r.abort_reason << "\n";
      code = kExitFailure;
    }
    if (chain && !out.empty()) {
      fs::create_directories(out);
      const auto blocks = chain->blocks();
      chain::write_block_log(out / "blocks.log", blocks);
      scenario::write_genesis(out / "genesis.json", chain->genesis());
      std::cout << "blocks: " << blocks.size() << "  state root: " << to_hex(chain->state_root(0))
                << "\n";
    }
  }
  if (!out.empty()) scenario::write_results(out, results);
  std::cout << std::setprecision(10) << s.name << " day " << d + 1 << ": mode=" << results.mode
            << " status=" << results.status << " iterations=" << results.iterations
            << " total_cost=" << results.total_cost << "\n";
  return code;
}

int cmd_solve(const SolveOptions& o) {
  const scenario::Scenario s = scenario::load_scenario(resolve_scenario(o.scenario));
  if (o.mode != "centralized" && o.mode != "admm" && o.mode != "chain") {
    throw std::invalid_argument("--mode must be centralized, admm or chain");
  }
  if (o.day > s.days.size()) throw std::invalid_argument("--day out of range");
  int worst = kExitOk;
  for (std::size_t d = 0; d < s.days.size(); ++d) {
    if (o.day && d + 1 != o.day) continue;
    fs::path out;
    if (!o.out.empty()) out = s.days.size() > 1 ? fs::path(o.out) / ("day" + std::to_string(d + 1)) : fs::path(o.out);
    const int code = solve_day(o, s, d, out);
    if (code == kExitFailure || (code == kExitMaxIter && worst == kExitOk)) worst = code;
  }
  return worst;
}

// --- keys ----------------------------------------------------------------


void write_key(const fs::path& path, const std::array<std::uint8_t, 32>& seed) {
  const auto key = chain::KeyPair::from_seed(seed);
  const nlohmann::json doc = {{"public_key", to_hex(key.public_key)}, {"seed", to_hex(seed)}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << doc.dump(2) << "\n";
}

chain::KeyPair read_key(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read key file " + path.string());
  const auto doc = nlohmann::json::parse(f);
  const Bytes seed = from_hex(doc.at("seed").get<std::string>());
  if (seed.size() != 32) throw std::invalid_argument(path.string() + ": seed must be 32 bytes");
  std::array<std::uint8_t, 32> s{};
  std::copy(seed.begin(), seed.end(), s.begin());
  return chain::KeyPair::from_seed(s);
}

int cmd_keygen(const std::string& label, const std::string& out) {
  std::array<std::uint8_t, 32> seed{};
  if (!label.empty()) {
    seed = chain::sha256(std::string_view(label));
  } else {
    if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
    randombytes_buf(seed.data(), seed.size());
  }
  if (!out.empty()) write_key(out, seed);
  std::cout << to_hex(chain::KeyPair::from_seed(seed).public_key) << "\n";
  return kExitOk;
}

int cmd_genesis(std::size_t validators, const std::vector<std::string>& keys,
                std::int64_t interval, std::uint32_t max_txs, std::int64_t time_ms,
                const std::string& out) {
  chain::GenesisConfig g = admm::coordinator_genesis(validators, interval, time_ms);
  if (!keys.empty()) {
    g.validators.clear();
    for (const auto& k : keys) g.validators.push_back(read_key(k).public_key);
  }
  g.max_block_txs = max_txs;
  g.validate();
  scenario::write_genesis(out, g);
  std::cout << "genesis " << to_hex(g.hash()) << " with " << g.validators.size()
            << " validators\n";
  return kExitOk;
}

// --- node ----------------------------------------------------------------

struct NodeOptions {
  std::string genesis;
  std::string key;
  std::string role = "validator";
  std::uint32_t index = 0;
  std::string listen = "127.0.0.1:0";
  std::vector<std::string> peers;
  std::string block_log;
  double duration_s = 0;  // 0 = until interrupted
  bool demo_submit = false;
};

/// Height of the block holding `hash`, if committed.
std::optional<std::uint64_t> included_at(const chain::Node& n, const Digest& hash) {
  for (const auto& b : n.blocks()) {
    for (const auto& tx : b.txs) {
      if (tx.hash() == hash) return b.header.height;
    }
  }
  return std::nullopt;
}

/// Deploys a two-prosumer contract and submits one Func B row, reporting
/// how many blocks each took to be included.
class DemoSubmitter {
 public:
  explicit DemoSubmitter(std::size_t committee) : committee_(committee) {}

  /// Returns false once finished; sets `failed` if a bound was missed.
  bool step(net::TcpNodeRunner& runner) {
    const auto height = runner.with_node([](chain::Node& n) { return n.ledger().height(); });
    if (!pending_) {
      if (stage_ == 2) return false;
      chain::Tx tx;
      if (stage_ == 0) {
        admm::AdmmConfig cfg;
        tx = chain::Tx::make(admm::operator_key(), 1, deploy_call(cfg));
      } else {
        contract::FixedRow row(2);
        for (auto& slots : row) slots.fill(0);
        tx = chain::Tx::make(admm::prosumer_key(0), 1,
                             chain::encode_call(chain::AppCall{contract::encode_call(
                                 contract::SubmitTradesCall{0, row})}));
      }
      const auto r = runner.submit(tx);
      if (!r.accepted) {
        std::cerr << "demo submission rejected: " << r.reason << "\n";
        failed = true;
        stage_ = 2;
        return false;
      }
      pending_ = tx.hash();
      submitted_at_ = height;
      return true;
    }
    const auto at = runner.with_node([&](chain::Node& n) { return included_at(n, *pending_); });
    if (!at) {
      if (height > submitted_at_ + committee_) {
        std::cerr << "demo tx not included within " << committee_ << " blocks\n";
        failed = true;
        stage_ = 2;
        return false;
      }
      return true;
    }
    std::cout << (stage_ == 0 ? "deploy" : "func_b") << " included at height " << *at << ", "
              << (*at - submitted_at_) << " block(s) after submission" << std::endl;
    pending_.reset();
    ++stage_;
    return stage_ < 2;
  }

  bool failed = false;

 private:
  static Bytes deploy_call(const admm::AdmmConfig& cfg) {
    return chain::encode_call(chain::AppCall{contract::encode_call(contract::DeployCall{
        {admm::prosumer_key(0).public_key, admm::prosumer_key(1).public_key},
        admm::contract_config(cfg)})});
  }

  std::size_t committee_;
  int stage_ = 0;
  std::optional<Digest> pending_;
  std::uint64_t submitted_at_ = 0;
};

int cmd_node(const NodeOptions& o) {
  const chain::GenesisConfig g = scenario::read_genesis(o.genesis);
  chain::NodeOptions opts;
  opts.index = o.index;
  if (o.role == "validator") {
    if (o.key.empty()) throw std::invalid_argument("validators need --key");
    opts.key = read_key(o.key);
    if (std::find(g.validators.begin(), g.validators.end(), opts.key->public_key) ==
        g.validators.end()) {
      std::cerr << "note: key is not in the genesis committee; it may be voted in later\n";
    }
  } else if (o.role != "normal") {
    throw std::invalid_argument("--role must be validator or normal");
  }
  chain::Node node(g, std::make_unique<contract::TransactiveContract>(), opts);
  net::TcpNodeRunner runner(node, g.hash());
  const auto colon = o.listen.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("--listen must be host:port");
  const auto port = runner.listen(o.listen.substr(0, colon),
                                  static_cast<std::uint16_t>(std::stoul(o.listen.substr(colon + 1))));
  std::cout << "node " << o.index << " listening on port " << port << " genesis "
            << to_hex(g.hash()) << std::endl;
  for (const auto& p : o.peers) runner.connect(net::parse_peer(p), std::chrono::seconds(30));
  runner.start();

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto start = std::chrono::steady_clock::now();
  std::uint64_t reported = 0;
  std::optional<DemoSubmitter> demo;
  if (o.demo_submit) demo.emplace(g.validators.size());
  bool demo_running = o.demo_submit;
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    if (demo_running) demo_running = demo->step(runner);
    const auto h = runner.with_node([](chain::Node& n) { return n.ledger().height(); });
    if (h != reported) {
      reported = h;
      std::cout << "height " << h << std::endl;
    }
    if (o.duration_s > 0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= o.duration_s) {
      break;
    }
  }
  runner.stop();
  std::cout << "stopped at height " << node.ledger().height() << " state root "
            << to_hex(node.ledger().state_root()) << "\n";
  if (!o.block_log.empty()) chain::write_block_log(o.block_log, node.blocks());
  if (demo && (demo->failed || demo_running)) return kExitFailure;
  return kExitOk;
}

int cmd_replay(const std::string& genesis, const std::string& log) {
  const chain::GenesisConfig g = scenario::read_genesis(genesis);
  const auto blocks = chain::read_block_log(log);
  const Digest root = chain::replay(g, contract::TransactiveContract{}, blocks);
  std::cout << "replayed " << blocks.size() << " blocks, state root " << to_hex(root) << "\n";
  return kExitOk;
}

// --- bench ---------------------------------------------------------------

int cmd_bench(const std::vector<std::size_t>& sizes, const std::vector<double>& rates,
              double duration, std::int64_t interval, std::uint32_t max_txs,
              const std::string& out) {
  if (!out.empty()) fs::create_directories(out);
  for (const std::size_t n : sizes) {
    net::BenchConfig cfg;
    cfg.validators = n;
    if (!rates.empty()) cfg.offered_tps = rates;
    cfg.duration_s = duration;
    cfg.warmup_s = std::min(cfg.warmup_s, duration / 4);
    cfg.block_interval_ms = interval;
    cfg.max_block_txs = max_txs;
    const auto r = net::run_bench(cfg);
    net::write_table(std::cout, r);
    if (!out.empty()) {
      std::ofstream f(fs::path(out) / ("bench_n" + std::to_string(n) + ".tsv"));
      net::write_table(f, r);
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transactive-energy scheduling on a proof-of-authority ledger"};
  app.require_subcommand(1);

  SolveOptions so;
  auto* solve = app.add_subcommand("solve", "Schedule a scenario (centralized, ADMM, or ADMM on chain)");
  solve->add_option("scenario", so.scenario, "Scenario JSON path or bundled scenario name")->required();
  solve->add_option("--mode", so.mode, "centralized | admm | chain")->capture_default_str();
  solve->add_option("--transport", so.transport, "chain mode: sim | tcp")->capture_default_str();
  solve->add_option("--rho", so.rho, "ADMM penalty (overrides the scenario)");
  solve->add_option("--epsilon", so.epsilon, "Convergence threshold (default 1e-6)");
  solve->add_option("--max-iter", so.max_iter, "Iteration cap");
  solve->add_option("--block-interval", so.block_interval_ms, "Chain mode block interval, ms");
  solve->add_option("--day", so.day, "Only this day (1-based) of a multi-day scenario");
  solve->add_option("--out", so.out, "Results directory");

  NodeOptions no;
  auto* node = app.add_subcommand("node", "Run a ledger node over TCP");
  node->add_option("--genesis", no.genesis, "Genesis JSON")->required();
  node->add_option("--key", no.key, "Key file (validators)");
  node->add_option("--role", no.role, "validator | normal")->capture_default_str();
  node->add_option("--index", no.index, "Node index on the wire")->required();
  node->add_option("--listen", no.listen, "host:port")->capture_default_str();
  node->add_option("--peers", no.peers, "index@host:port, repeatable")->delimiter(',');
  node->add_option("--block-log", no.block_log, "Write the committed chain here on exit");
  node->add_option("--duration", no.duration_s, "Seconds to run (0 = until SIGINT)");
  node->add_flag("--demo-submit", no.demo_submit,
                 "Deploy a two-prosumer contract and submit one trade row; fail if either "
                 "takes more than committee-size blocks");

  std::vector<std::size_t> sizes{5, 10, 20};
  std::vector<double> rates;
  double duration = 20.0;
  std::int64_t interval = 100;
  std::uint32_t max_txs = 20;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "TCD/TPS sweep on the simulated network");
  bench->add_option("--validators", sizes, "Committee sizes")->delimiter(',')->capture_default_str();
  bench->add_option("--rate", rates, "Offered loads, tx/s")->delimiter(',');
  bench->add_option("--duration", duration, "Virtual seconds per load level")->capture_default_str();
  bench->add_option("--block-interval", interval, "ms")->capture_default_str();
  bench->add_option("--max-block-txs", max_txs)->capture_default_str();
  bench->add_option("--out", bench_out, "Directory for bench_n<N>.tsv tables");

  std::string label, key_out;
  auto* keygen = app.add_subcommand("keygen", "Create an Ed25519 key file");
  keygen->add_option("--label", label, "Derive deterministically from a label");
  keygen->add_option("--out", key_out, "Key file to write");

  std::size_t gval = 3;
  std::vector<std::string> gkeys;
  std::int64_t ginterval = 1000, gtime = -1;
  std::uint32_t gmax = 256;
  std::string gout;
  auto* genesis = app.add_subcommand("genesis", "Write a genesis file");
  genesis->add_option("--validators", gval, "Number of label-derived validator keys")->capture_default_str();
  genesis->add_option("--keys", gkeys, "Validator key files instead")->delimiter(',');
  genesis->add_option("--block-interval", ginterval, "ms")->capture_default_str();
  genesis->add_option("--max-block-txs", gmax)->capture_default_str();
  genesis->add_option("--time", gtime, "Genesis time, ms since epoch (default: now)");
  genesis->add_option("--out", gout, "Output path")->required();

  std::string rgenesis, rlog;
  auto* replay = app.add_subcommand("replay", "Re-execute a block log and print the state root");
  replay->add_option("--genesis", rgenesis)->required();
  replay->add_option("--log", rlog)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitFailure;
  }

  try {
    if (*solve) return cmd_solve(so);
    if (*node) return cmd_node(no);
    if (*bench) return cmd_bench(sizes, rates, duration, interval, max_txs, bench_out);
    if (*keygen) return cmd_keygen(label, key_out);
    if (*genesis) {
      if (gtime < 0) gtime = net::TcpNodeRunner::wall_clock_ms();
      return cmd_genesis(gval, gkeys, ginterval, gmax, gtime, gout);
    }
    if (*replay) return cmd_replay(rgenesis, rlog);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
