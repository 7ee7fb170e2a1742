#include "raymin/scenario.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace raymin {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail_at(const std::string& path, int line, const std::string& msg) {
  throw InvalidInput(path + ":" + std::to_string(line) + ": " + msg);
}

std::string block_label(const ScenarioBlock& b) {
  return b.name.empty() ? std::string("<root>") : b.name;
}

double parse_double(const ScenarioBlock& b, const std::string& key, const std::string& tok) {
  const char* s = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(s, &end);
  if (end == s || *end != '\0' || !std::isfinite(v))
    throw InvalidInput("scenario block '" + block_label(b) + "': key '" + key +
                       "': not a finite number: '" + tok + "'");
  return v;
}

long long parse_int(const ScenarioBlock& b, const std::string& key, const std::string& tok) {
  const char* s = tok.c_str();
  char* end = nullptr;
  long long v = std::strtoll(s, &end, 10);
  if (end == s || *end != '\0')
    throw InvalidInput("scenario block '" + block_label(b) + "': key '" + key +
                       "': not an integer: '" + tok + "'");
  return v;
}

}  // namespace

bool ScenarioBlock::has(const std::string& key) const {
  for (const auto& [k, v] : kv)
    if (k == key) return true;
  return false;
}

const std::string& ScenarioBlock::get(const std::string& key) const {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  throw InvalidInput("scenario block '" + block_label(*this) + "': missing key '" + key + "'");
}

double ScenarioBlock::num(const std::string& key) const {
  return parse_double(*this, key, get(key));
}

double ScenarioBlock::num_or(const std::string& key, double dflt) const {
  return has(key) ? num(key) : dflt;
}

long long ScenarioBlock::int_or(const std::string& key, long long dflt) const {
  return has(key) ? parse_int(*this, key, get(key)) : dflt;
}

Vec ScenarioBlock::vec(const std::string& key) const {
  std::istringstream in(get(key));
  Vec out;
  std::string tok;
  while (in >> tok) out.push_back(parse_double(*this, key, tok));
  if (out.empty())
    throw InvalidInput("scenario block '" + block_label(*this) + "': key '" + key +
                       "' has no values");
  return out;
}

const ScenarioBlock* ScenarioBlock::find(const std::string& child_name) const {
  for (const ScenarioBlock& c : children)
    if (c.name == child_name) return &c;
  return nullptr;
}

const ScenarioBlock& ScenarioBlock::child(const std::string& child_name) const {
  const ScenarioBlock* c = find(child_name);
  if (!c)
    throw InvalidInput("scenario block '" + block_label(*this) + "': missing block '" +
                       child_name + "'");
  return *c;
}

namespace {

void validate(Scenario& sc) {
  const ScenarioBlock& sysb = sc.root.child("system");
  int d = static_cast<int>(sysb.int_or("d", 2));
  require(d >= 1 && d <= 3, "system: d must be 1, 2, or 3");
  Vec masses = sysb.vec("masses");
  require(masses.size() >= 2, "system: need at least two masses");
  for (double m : masses)
    require(m > 0, "system: masses must be positive");
  sc.system = MassSystem::make(std::vector<double>(masses.begin(), masses.end()), d);

  long long seed = sc.root.int_or("seed", 0);
  require(seed >= 0, "seed must be non-negative");
  sc.seed = static_cast<std::uint64_t>(seed);

  if (const ScenarioBlock* init = sc.root.find("initial")) {
    sc.x0 = init->vec("x");
    check_shape(sc.system, sc.x0, "initial.x");
    if (init->has("v")) {
      sc.v0 = init->vec("v");
      check_shape(sc.system, sc.v0, "initial.v");
    } else {
      sc.v0.assign(sc.x0.size(), 0.0);
    }
    sc.has_initial = true;
  }
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& path) {
  Scenario sc;
  sc.path = path;
  std::vector<ScenarioBlock*> stack{&sc.root};
  std::vector<int> open_lines;

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::size_t hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;

    if (line == "}") {
      if (stack.size() == 1) fail_at(path, lineno, "unmatched '}'");
      stack.pop_back();
      open_lines.pop_back();
      continue;
    }
    if (line.back() == '{') {
      std::string name = trim(line.substr(0, line.size() - 1));
      if (name.empty() || name.find_first_of("={}") != std::string::npos)
        fail_at(path, lineno, "bad block header '" + line + "'");
      ScenarioBlock* parent = stack.back();
      parent->children.push_back(ScenarioBlock{name, {}, {}});
      // Safe to hold: a sibling can only be appended after this block closes
      // and its pointer leaves the stack.
      stack.push_back(&parent->children.back());
      open_lines.push_back(lineno);
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail_at(path, lineno, "expected 'key = value', 'name {', or '}'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || key.find_first_of("{}") != std::string::npos)
      fail_at(path, lineno, "bad key in '" + line + "'");
    stack.back()->kv.emplace_back(key, val);
  }
  if (stack.size() != 1) fail_at(path, open_lines.back(), "unclosed block");

  try {
    validate(sc);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path + ": " + e.what());
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput(path + ": cannot open scenario file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

}  // namespace raymin
