#include "tegrid/scenario/scenario.hpp"

#include "tegrid/admm/chain_coordinator.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace tegrid::scenario {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 3> kSeries{"inflexible", "preferred_flexible", "renewable"};
constexpr std::array<std::string_view, 7> kScheduleRows{"g", "r", "l_fl", "c", "d", "e_as", "soc"};

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ScenarioError(where + ": " + what);
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ScenarioError(p.string() + ": cannot open file");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(p.string() + ": cannot write file");
  f << text;
  if (!f) throw std::runtime_error(p.string() + ": write failed");
}

json parse_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    fail(p.string(), e.what());
  }
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s, const std::string& where) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    fail(where, "not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

/// Tab-separated table; blank lines and lines starting with '#' are skipped.
struct Table {
  std::vector<std::string_view> header;
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;  // (line, cells)
  std::string text;
};

Table read_table(const fs::path& p) {
  Table t;
  t.text = read_file(p);
  std::string_view all = t.text;
  std::size_t line_no = 0;
  while (!all.empty()) {
    const auto nl = all.find('\n');
    std::string_view line = all.substr(0, nl);
    all = nl == std::string_view::npos ? std::string_view{} : all.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto cells = split_tabs(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      fail(p.string() + ":" + std::to_string(line_no),
           "expected " + std::to_string(t.header.size()) + " columns, found " +
               std::to_string(cells.size()));
    }
    t.rows.emplace_back(line_no, std::move(cells));
  }
  if (t.header.empty()) fail(p.string(), "missing header row");
  return t;
}

std::string slot_header() {
  std::string h;
  for (std::size_t t = 0; t < energy::kSlots; ++t) {
    h += (t < 10 ? "\th0" : "\th") + std::to_string(t);
  }
  return h;
}

void check_slot_header(const Table& t, std::size_t lead, const fs::path& p) {
  if (t.header.size() != lead + energy::kSlots) {
    fail(p.string() + ":header", "expected " + std::to_string(lead) + " key columns and " +
                                     std::to_string(energy::kSlots) + " slots, found " +
                                     std::to_string(t.header.size()) + " columns");
  }
}

void append_slots(std::string& out, const energy::SlotVector& v) {
  for (double x : v) out += '\t' + fmt(x);
}

energy::SlotVector parse_slots(const std::vector<std::string_view>& cells, std::size_t lead,
                               const std::string& where) {
  energy::SlotVector v{};
  for (std::size_t t = 0; t < energy::kSlots; ++t) v[t] = parse_double(cells[lead + t], where);
  return v;
}

std::size_t parse_index(std::string_view s, const std::string& where) {
  std::size_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    fail(where, "not a non-negative integer: '" + std::string(s) + "'");
  }
  return v;
}

// JSON field access with a dotted path for diagnostics.
struct Field {
  const json& j;
  std::string path;

  const json* find(const std::string& key) const {
    const auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
  }
  Field at(const std::string& key) const {
    const json* v = find(key);
    if (!v) fail(path, "missing field '" + key + "'");
    return {*v, path + "." + key};
  }
  double number() const {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
  }
  double number_or(const std::string& key, double dflt) const {
    return find(key) ? at(key).number() : dflt;
  }
  std::uint64_t count() const {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
      fail(path, "expected a non-negative integer");
    }
    return j.get<std::uint64_t>();
  }
  std::uint64_t count_or(const std::string& key, std::uint64_t dflt) const {
    return find(key) ? at(key).count() : dflt;
  }
  std::string string() const {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }
  void object() const {
    if (!j.is_object()) fail(path, "expected an object");
  }
  std::size_t array() const {
    if (!j.is_array()) fail(path, "expected an array");
    return j.size();
  }
  Field item(std::size_t i) const { return {j[i], path + "[" + std::to_string(i) + "]"}; }
  energy::SlotVector slots() const {
    const std::size_t n = array();
    if (n != energy::kSlots) {
      fail(path, "expected " + std::to_string(energy::kSlots) + " values, found " +
                     std::to_string(n));
    }
    energy::SlotVector v{};
    for (std::size_t t = 0; t < n; ++t) v[t] = item(t).number();
    return v;
  }
};

energy::BatterySpec parse_battery(const Field& f) {
  f.object();
  energy::BatterySpec b;
  b.capacity = f.number_or("capacity", b.capacity);
  b.charge_limit = f.number_or("charge_limit", b.charge_limit);
  b.discharge_limit = f.number_or("discharge_limit", b.discharge_limit);
  b.efficiency = f.number_or("efficiency", b.efficiency);
  b.initial_soc = f.number_or("initial_soc", b.initial_soc);
  try {
    b.validate();
  } catch (const energy::DomainError& e) {
    fail(f.path, e.what());
  }
  return b;
}

std::vector<energy::ProsumerProfile> load_day(const fs::path& p,
                                              const std::vector<energy::ProsumerProfile>& base) {
  const Table t = read_table(p);
  check_slot_header(t, 2, p);
  std::vector<energy::ProsumerProfile> day = base;
  std::set<std::pair<std::size_t, std::string>> seen;
  std::map<std::size_t, std::size_t> slot_of;
  for (std::size_t i = 0; i < base.size(); ++i) slot_of[base[i].id] = i;

  for (const auto& [line, cells] : t.rows) {
    const std::string where = p.string() + ":" + std::to_string(line);
    const std::size_t id = parse_index(cells[0], where);
    const auto it = slot_of.find(id);
    if (it == slot_of.end()) fail(where, "unknown prosumer id " + std::to_string(id));
    const std::string series(cells[1]);
    if (!seen.insert({id, series}).second) fail(where, "duplicate row for " + series);
    const energy::SlotVector v = parse_slots(cells, 2, where);
    for (double x : v) {
      if (!(x >= 0.0)) fail(where, series + " must be non-negative");
    }
    auto& prof = day[it->second];
    if (series == "inflexible") {
      prof.inflexible = v;
    } else if (series == "preferred_flexible") {
      prof.preferred_flexible = v;
    } else if (series == "renewable") {
      prof.renewable_avail = v;
    } else {
      fail(where, "unknown series '" + series + "'");
    }
  }
  for (const auto& prof : base) {
    for (const auto s : kSeries) {
      if (!seen.count({prof.id, std::string(s)})) {
        fail(p.string(), "prosumer " + std::to_string(prof.id) + " has no " + std::string(s) + " row");
      }
    }
  }
  return day;
}

}  // namespace

Scenario load_scenario(const fs::path& path) {
  const json doc = parse_json(path);
  const Field root{doc, path.string()};
  root.object();
  if (root.at("schema").string() != kSchema) {
    fail(root.path + ".schema", "unsupported schema, expected " + std::string(kSchema));
  }
  Scenario s;
  s.name = root.at("name").string();
  if (root.find("description")) s.description = root.at("description").string();

  const Field tf = root.at("tariff");
  tf.object();
  s.tariff.alpha = tf.at("alpha").number();
  s.tariff.beta = tf.at("beta").number();
  s.tariff.pi_p2p = tf.at("pi_p2p").number();
  s.tariff.wear_price = tf.number_or("wear_price", s.tariff.wear_price);
  s.tariff.pi_as = tf.at("pi_as").slots();
  try {
    s.tariff.validate();
  } catch (const energy::DomainError& e) {
    fail(tf.path, e.what());
  }

  if (root.find("admm")) {
    const Field af = root.at("admm");
    af.object();
    s.admm.rho = af.number_or("rho", s.admm.rho);
    s.admm.epsilon = af.number_or("epsilon", s.admm.epsilon);
    s.admm.max_iterations = af.count_or("max_iterations", s.admm.max_iterations);
    s.admm.p_max = af.number_or("p_max", s.admm.p_max);
    try {
      s.admm.validate();
    } catch (const std::exception& e) {
      fail(af.path, e.what());
    }
  }
  if (root.find("chain")) {
    const Field cf = root.at("chain");
    cf.object();
    s.chain.validators = cf.count_or("validators", s.chain.validators);
    s.chain.block_interval_ms = static_cast<std::int64_t>(
        cf.count_or("block_interval_ms", static_cast<std::uint64_t>(s.chain.block_interval_ms)));
    s.chain.max_block_txs = static_cast<std::uint32_t>(cf.count_or("max_block_txs", s.chain.max_block_txs));
    if (s.chain.validators == 0) fail(cf.path + ".validators", "must be >= 1");
    if (s.chain.block_interval_ms == 0) fail(cf.path + ".block_interval_ms", "must be >= 1");
    if (s.chain.max_block_txs == 0) fail(cf.path + ".max_block_txs", "must be >= 1");
  }

  const Field pf = root.at("prosumers");
  const std::size_t n = pf.array();
  if (n == 0) fail(pf.path, "at least one prosumer required");
  std::vector<energy::ProsumerProfile> base(n);
  std::set<std::size_t> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const Field item = pf.item(i);
    item.object();
    base[i].id = item.at("id").count();
    if (!ids.insert(base[i].id).second) fail(item.path + ".id", "duplicate prosumer id");
    if (item.find("battery")) base[i].battery = parse_battery(item.at("battery"));
  }

  const Field df = root.at("days");
  const std::size_t days = df.array();
  if (days == 0) fail(df.path, "at least one day required");
  for (std::size_t d = 0; d < days; ++d) {
    const fs::path table = path.parent_path() / df.item(d).string();
    s.days.push_back(load_day(table, base));
  }

  if (root.find("reference")) {
    const Field rf = root.at("reference");
    rf.object();
    for (const auto& [k, v] : rf.j.items()) s.reference[k] = Field{v, rf.path + "." + k}.number();
  }
  return s;
}

fs::path save_scenario(const fs::path& dir, const Scenario& s) {
  if (s.days.empty()) throw std::invalid_argument("scenario has no days");
  fs::create_directories(dir / "profiles");
  json doc;
  doc["schema"] = kSchema;
  doc["name"] = s.name;
  doc["description"] = s.description;
  doc["tariff"] = {{"alpha", s.tariff.alpha},
                   {"beta", s.tariff.beta},
                   {"pi_p2p", s.tariff.pi_p2p},
                   {"wear_price", s.tariff.wear_price},
                   {"pi_as", s.tariff.pi_as}};
  doc["admm"] = {{"rho", s.admm.rho},
                 {"epsilon", s.admm.epsilon},
                 {"max_iterations", s.admm.max_iterations},
                 {"p_max", s.admm.p_max}};
  doc["chain"] = {{"validators", s.chain.validators},
                  {"block_interval_ms", s.chain.block_interval_ms},
                  {"max_block_txs", s.chain.max_block_txs}};
  json prosumers = json::array();
  for (const auto& p : s.days.front()) {
    const auto& b = p.battery;
    prosumers.push_back({{"id", p.id},
                         {"battery",
                          {{"capacity", b.capacity},
                           {"charge_limit", b.charge_limit},
                           {"discharge_limit", b.discharge_limit},
                           {"efficiency", b.efficiency},
                           {"initial_soc", b.initial_soc}}}});
  }
  doc["prosumers"] = prosumers;
  json days = json::array();
  for (std::size_t d = 0; d < s.days.size(); ++d) {
    const std::string rel = "profiles/" + s.name + "_day" + std::to_string(d + 1) + ".tsv";
    std::string text = "prosumer\tseries" + slot_header() + "\n";
    for (const auto& p : s.days[d]) {
      const std::array<const energy::SlotVector*, 3> rows{&p.inflexible, &p.preferred_flexible,
                                                          &p.renewable_avail};
      for (std::size_t k = 0; k < rows.size(); ++k) {
        text += std::to_string(p.id) + "\t" + std::string(kSeries[k]);
        append_slots(text, *rows[k]);
        text += "\n";
      }
    }
    write_file(dir / rel, text);
    days.push_back(rel);
  }
  doc["days"] = days;
  if (!s.reference.empty()) doc["reference"] = s.reference;
  const fs::path out = dir / (s.name + ".json");
  write_file(out, doc.dump(2) + "\n");
  return out;
}

chain::GenesisConfig scenario_genesis(const Scenario& s, std::int64_t genesis_time_ms) {
  chain::GenesisConfig g =
      admm::coordinator_genesis(s.chain.validators, s.chain.block_interval_ms, genesis_time_ms);
  g.chain_id = "tegrid-" + s.name;
  g.max_block_txs = s.chain.max_block_txs;
  return g;
}

// --- Results -------------------------------------------------------------

RunResults from_admm(const admm::AdmmResult& r) {
  RunResults out;
  out.mode = "admm";
  out.status = admm::to_string(r.status);
  out.iterations = r.iterations;
  out.total_cost = r.total_cost;
  out.schedules = r.schedules;
  out.trades = r.trades;
  for (const auto& h : r.history) out.residuals.emplace_back(h.k, h.residual);
  return out;
}

RunResults from_centralized(const admm::CentralizedResult& r) {
  RunResults out;
  out.mode = "centralized";
  out.status = qp::to_string(r.status);
  out.total_cost = r.total_cost;
  out.schedules = r.schedules;
  out.trades = r.trades;
  return out;
}

void write_results(const fs::path& dir, const RunResults& r) {
  fs::create_directories(dir);
  std::string sched = "prosumer\tvariable" + slot_header() + "\n";
  for (std::size_t u = 0; u < r.schedules.size(); ++u) {
    const auto& s = r.schedules[u];
    const std::array<const energy::SlotVector*, 7> rows{&s.g, &s.r, &s.l_fl, &s.c,
                                                        &s.d, &s.e_as, &s.soc};
    for (std::size_t k = 0; k < rows.size(); ++k) {
      sched += std::to_string(u) + "\t" + std::string(kScheduleRows[k]);
      append_slots(sched, *rows[k]);
      sched += "\n";
    }
  }
  write_file(dir / "schedules.tsv", sched);

  std::string trades = "from\tto" + slot_header() + "\n";
  for (std::size_t u = 0; u < r.trades.size(); ++u) {
    for (std::size_t v = 0; v < r.trades.size(); ++v) {
      if (u == v) continue;
      trades += std::to_string(u) + "\t" + std::to_string(v);
      append_slots(trades, r.trades.at(u, v));
      trades += "\n";
    }
  }
  write_file(dir / "trades.tsv", trades);

  std::string res = "k\tresidual\n";
  for (const auto& [k, v] : r.residuals) res += std::to_string(k) + "\t" + fmt(v) + "\n";
  write_file(dir / "residuals.tsv", res);

  const json summary = {{"mode", r.mode},
                        {"status", r.status},
                        {"iterations", r.iterations},
                        {"total_cost", r.total_cost},
                        {"prosumers", r.schedules.size()}};
  write_file(dir / "summary.json", summary.dump(2) + "\n");
}

RunResults read_results(const fs::path& dir) {
  RunResults r;
  const fs::path sp = dir / "summary.json";
  const json summary = parse_json(sp);
  const Field sf{summary, sp.string()};
  r.mode = sf.at("mode").string();
  r.status = sf.at("status").string();
  r.iterations = sf.at("iterations").count();
  r.total_cost = sf.at("total_cost").number();
  const std::size_t n = sf.at("prosumers").count();
  r.schedules.resize(n);
  r.trades = energy::TradeMatrix(n);

  const fs::path schp = dir / "schedules.tsv";
  const Table st = read_table(schp);
  check_slot_header(st, 2, schp);
  for (const auto& [line, cells] : st.rows) {
    const std::string where = schp.string() + ":" + std::to_string(line);
    const std::size_t u = parse_index(cells[0], where);
    if (u >= n) fail(where, "prosumer index out of range");
    const auto it = std::find(kScheduleRows.begin(), kScheduleRows.end(), cells[1]);
    if (it == kScheduleRows.end()) fail(where, "unknown variable '" + std::string(cells[1]) + "'");
    auto& s = r.schedules[u];
    const std::array<energy::SlotVector*, 7> rows{&s.g, &s.r, &s.l_fl, &s.c, &s.d, &s.e_as, &s.soc};
    *rows[static_cast<std::size_t>(it - kScheduleRows.begin())] = parse_slots(cells, 2, where);
  }

  const fs::path tp = dir / "trades.tsv";
  const Table tt = read_table(tp);
  check_slot_header(tt, 2, tp);
  for (const auto& [line, cells] : tt.rows) {
    const std::string where = tp.string() + ":" + std::to_string(line);
    const std::size_t u = parse_index(cells[0], where);
    const std::size_t v = parse_index(cells[1], where);
    if (u >= n || v >= n) fail(where, "prosumer index out of range");
    r.trades.at(u, v) = parse_slots(cells, 2, where);
  }

  const fs::path rp = dir / "residuals.tsv";
  const Table rt = read_table(rp);
  for (const auto& [line, cells] : rt.rows) {
    const std::string where = rp.string() + ":" + std::to_string(line);
    if (cells.size() != 2) fail(where, "expected 2 columns");
    r.residuals.emplace_back(parse_index(cells[0], where), parse_double(cells[1], where));
  }
  return r;
}

// --- Genesis files -------------------------------------------------------

void write_genesis(const fs::path& path, const chain::GenesisConfig& g) {
  json validators = json::array();
  for (const auto& v : g.validators) validators.push_back(to_hex(v));
  const json doc = {{"chain_id", g.chain_id},
                    {"validators", validators},
                    {"genesis_time_ms", g.genesis_time_ms},
                    {"block_interval_ms", g.block_interval_ms},
                    {"skip_timeout_ms", g.skip_timeout_ms},
                    {"max_block_txs", g.max_block_txs},
                    {"mempool_limit", g.mempool_limit}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, doc.dump(2) + "\n");
}

chain::GenesisConfig read_genesis(const fs::path& path) {
  const json doc = parse_json(path);
  const Field root{doc, path.string()};
  root.object();
  chain::GenesisConfig g;
  g.chain_id = root.at("chain_id").string();
  const Field vf = root.at("validators");
  for (std::size_t i = 0; i < vf.array(); ++i) {
    const Field item = vf.item(i);
    Bytes key;
    try {
      key = from_hex(item.string());
    } catch (const std::exception& e) {
      fail(item.path, e.what());
    }
    if (key.size() != 32) fail(item.path, "validator key must be 32 bytes of hex");
    AccountId id{};
    std::copy(key.begin(), key.end(), id.begin());
    g.validators.push_back(id);
  }
  const auto int_field = [&](const char* k, std::int64_t dflt) {
    if (!root.find(k)) return dflt;
    const Field f = root.at(k);
    if (!f.j.is_number_integer()) fail(f.path, "expected an integer");
    return f.j.get<std::int64_t>();
  };
  g.genesis_time_ms = int_field("genesis_time_ms", 0);
  g.block_interval_ms = int_field("block_interval_ms", g.block_interval_ms);
  g.skip_timeout_ms = int_field("skip_timeout_ms", g.skip_timeout_ms);
  g.max_block_txs = static_cast<std::uint32_t>(root.count_or("max_block_txs", g.max_block_txs));
  g.mempool_limit = static_cast<std::uint32_t>(root.count_or("mempool_limit", g.mempool_limit));
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    fail(path.string(), e.what());
  }
  return g;
}

}  // namespace tegrid::scenario
