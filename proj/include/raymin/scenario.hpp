#pragma once
// Line-oriented scenario files: `key = value` pairs grouped into `name { ... }`
// blocks, '#' starts a comment. The file parses into a tree first; the system
// block, optional initial data, and the seed are validated eagerly so every
// command starts from a checked configuration.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "raymin/nbody.hpp"
#include "raymin/types.hpp"

namespace raymin {

struct ScenarioBlock {
  std::string name;  // empty for the root
  std::vector<std::pair<std::string, std::string>> kv;  // file order
  std::vector<ScenarioBlock> children;

  bool has(const std::string& key) const;
  // Throws InvalidInput naming the block and key when absent.
  const std::string& get(const std::string& key) const;
  double num(const std::string& key) const;
  double num_or(const std::string& key, double dflt) const;
  long long int_or(const std::string& key, long long dflt) const;
  Vec vec(const std::string& key) const;
  const ScenarioBlock* find(const std::string& child_name) const;
  const ScenarioBlock& child(const std::string& child_name) const;
};

struct Scenario {
  std::string path;
  ScenarioBlock root;
  MassSystem system;
  bool has_initial = false;
  Vec x0, v0;
  std::uint64_t seed = 0;
};

// Parse errors carry "path:line:" prefixes; validation never leaves a
// half-built Scenario behind.
Scenario parse_scenario(const std::string& text, const std::string& path);
Scenario load_scenario(const std::string& path);

}  // namespace raymin
