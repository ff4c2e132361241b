#include "steerlab/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace steerlab {

namespace {

[[noreturn]] void fail(const std::string& source, int line, const std::string& message) {
  throw ConfigError(source + ":" + std::to_string(line) + ": " + message);
}

std::string trim(const std::string& s) {
  std::size_t begin = 0, end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

// Strips a trailing comment, respecting quoted strings.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (c == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (std::size_t i = 0; i < key.size(); ++i) {
    const char c = key[i];
    const bool word = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    if (!word && c != '.') return false;
    if (c == '.' && (i == 0 || i + 1 == key.size() || key[i - 1] == '.')) return false;
  }
  return true;
}

ConfigTable::Value parse_scalar(const std::string& source, int line, const std::string& text);

ConfigTable::Value parse_value(const std::string& source, int line, const std::string& text) {
  ConfigTable::Value value;
  value.line = line;
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') fail(source, line, "unterminated array");
    value.kind = ConfigTable::Value::Kind::Array;
    const std::string inner = trim(text.substr(1, text.size() - 2));
    if (inner.empty()) return value;
    // Split on commas outside quotes; nested arrays are not supported.
    std::size_t start = 0;
    bool in_string = false;
    for (std::size_t i = 0; i <= inner.size(); ++i) {
      if (i < inner.size() && inner[i] == '"' && (i == 0 || inner[i - 1] != '\\')) {
        in_string = !in_string;
      }
      if (i == inner.size() || (inner[i] == ',' && !in_string)) {
        const std::string piece = trim(inner.substr(start, i - start));
        if (piece.empty()) fail(source, line, "empty array element");
        value.as_array.push_back(parse_scalar(source, line, piece));
        start = i + 1;
      }
    }
    return value;
  }
  return parse_scalar(source, line, text);
}

ConfigTable::Value parse_scalar(const std::string& source, int line, const std::string& text) {
  ConfigTable::Value value;
  value.line = line;
  if (text == "true" || text == "false") {
    value.kind = ConfigTable::Value::Kind::Bool;
    value.as_bool = text == "true";
    return value;
  }
  if (!text.empty() && text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') fail(source, line, "unterminated string");
    value.kind = ConfigTable::Value::Kind::String;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
      char c = text[i];
      if (c == '\\' && i + 2 < text.size()) {
        const char next = text[i + 1];
        if (next == '"' || next == '\\') {
          c = next;
          ++i;
        }
      }
      value.as_string.push_back(c);
    }
    return value;
  }
  // Numbers: anything with '.', 'e', or 'E' is a float, otherwise an integer.
  const bool looks_float = text.find_first_of(".eE") != std::string::npos;
  errno = 0;
  char* end = nullptr;
  if (looks_float) {
    value.kind = ConfigTable::Value::Kind::Float;
    value.as_float = std::strtod(text.c_str(), &end);
  } else {
    value.kind = ConfigTable::Value::Kind::Int;
    value.as_int = std::strtoll(text.c_str(), &end, 10);
    value.as_float = static_cast<double>(value.as_int);
  }
  if (end == text.c_str() || *end != '\0' || errno == ERANGE) {
    fail(source, line, "cannot parse value '" + text + "'");
  }
  return value;
}

const char* kind_name(ConfigTable::Value::Kind kind) {
  switch (kind) {
    case ConfigTable::Value::Kind::Int: return "integer";
    case ConfigTable::Value::Kind::Float: return "float";
    case ConfigTable::Value::Kind::Bool: return "boolean";
    case ConfigTable::Value::Kind::String: return "string";
    case ConfigTable::Value::Kind::Array: return "array";
  }
  return "value";
}

}  // namespace

ConfigTable ConfigTable::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_string(buffer.str(), path);
}

ConfigTable ConfigTable::parse_string(const std::string& text, const std::string& source_name) {
  ConfigTable table;
  table.source_ = source_name;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(source_name, line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_key(section)) fail(source_name, line_no, "bad section name '" + section + "'");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail(source_name, line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value_text = trim(line.substr(eq + 1));
    if (!valid_key(key)) fail(source_name, line_no, "bad key '" + key + "'");
    if (value_text.empty()) fail(source_name, line_no, "missing value for '" + key + "'");
    const std::string path = section.empty() ? key : section + "." + key;
    if (table.values_.count(path)) {
      fail(source_name, line_no, "duplicate key '" + path + "'");
    }
    table.values_[path] = parse_value(source_name, line_no, value_text);
  }
  return table;
}

const ConfigTable::Value* ConfigTable::find(const std::string& path) const {
  auto it = values_.find(path);
  if (it == values_.end()) return nullptr;
  read_.insert(path);
  return &it->second;
}

void ConfigTable::type_error(const std::string& path, const Value& value,
                             const char* expected) const {
  throw ConfigError(source_ + ":" + std::to_string(value.line) + ": key '" + path +
                    "' must be " + expected + ", got " + kind_name(value.kind));
}

bool ConfigTable::has(const std::string& path) const { return find(path) != nullptr; }

int ConfigTable::line_of(const std::string& path) const {
  const Value* value = find(path);
  return value ? value->line : 0;
}

std::int64_t ConfigTable::get_int(const std::string& path, std::int64_t fallback) const {
  const Value* value = find(path);
  if (!value) return fallback;
  if (value->kind != Value::Kind::Int) type_error(path, *value, "an integer");
  return value->as_int;
}

double ConfigTable::get_double(const std::string& path, double fallback) const {
  const Value* value = find(path);
  if (!value) return fallback;
  if (value->kind != Value::Kind::Int && value->kind != Value::Kind::Float) {
    type_error(path, *value, "a number");
  }
  return value->as_float;
}

bool ConfigTable::get_bool(const std::string& path, bool fallback) const {
  const Value* value = find(path);
  if (!value) return fallback;
  if (value->kind != Value::Kind::Bool) type_error(path, *value, "a boolean");
  return value->as_bool;
}

std::string ConfigTable::get_string(const std::string& path, const std::string& fallback) const {
  const Value* value = find(path);
  if (!value) return fallback;
  if (value->kind != Value::Kind::String) type_error(path, *value, "a string");
  return value->as_string;
}

std::vector<std::int64_t> ConfigTable::get_int_array(const std::string& path,
                                                     std::vector<std::int64_t> fallback) const {
  const Value* value = find(path);
  if (!value) return fallback;
  if (value->kind != Value::Kind::Array) type_error(path, *value, "an array of integers");
  std::vector<std::int64_t> out;
  for (const Value& element : value->as_array) {
    if (element.kind != Value::Kind::Int) type_error(path, element, "an array of integers");
    out.push_back(element.as_int);
  }
  return out;
}

std::vector<std::string> ConfigTable::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [path, value] : values_) {
    if (!read_.count(path)) out.push_back(path);
  }
  return out;
}

namespace {

GameSource game_source_from_string(const ConfigTable& table, const std::string& s) {
  if (s == "generate") return GameSource::Generate;
  if (s == "file") return GameSource::File;
  throw ConfigError(table.source_name() + ": game.source must be 'generate' or 'file', got '" + s + "'");
}

PrincipalUtilityKind principal_utility_kind_from_string(const ConfigTable& table,
                                                        const std::string& s) {
  if (s == "zero") return PrincipalUtilityKind::Zero;
  if (s == "random") return PrincipalUtilityKind::Random;
  if (s == "game") return PrincipalUtilityKind::FromGame;
  throw ConfigError(table.source_name() +
                    ": principal_utility.kind must be 'zero', 'random', or 'game', got '" + s + "'");
}

}  // namespace

GameKind game_kind_from_string(const std::string& s) {
  if (s == "random") return GameKind::Random;
  if (s == "lower-bound") return GameKind::LowerBound;
  if (s == "signal-dependence") return GameKind::SignalDependence;
  throw ConfigError("game.kind must be 'random', 'lower-bound', or 'signal-dependence', got '" + s + "'");
}

AgentModel agent_model_from_string(const std::string& s) {
  if (s == "mwu") return AgentModel::Mwu;
  if (s == "rationalizable") return AgentModel::Rationalizable;
  throw ConfigError("agents.model must be 'mwu' or 'rationalizable', got '" + s + "'");
}

const char* to_string(GameSource v) {
  return v == GameSource::Generate ? "generate" : "file";
}

const char* to_string(GameKind v) {
  switch (v) {
    case GameKind::Random: return "random";
    case GameKind::LowerBound: return "lower-bound";
    case GameKind::SignalDependence: return "signal-dependence";
  }
  return "random";
}

const char* to_string(AgentModel v) {
  return v == AgentModel::Mwu ? "mwu" : "rationalizable";
}

const char* to_string(PrincipalUtilityKind v) {
  switch (v) {
    case PrincipalUtilityKind::Zero: return "zero";
    case PrincipalUtilityKind::Random: return "random";
    case PrincipalUtilityKind::FromGame: return "game";
  }
  return "random";
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_table(ConfigTable::parse_file(path));
}

ExperimentConfig ExperimentConfig::from_table(const ConfigTable& table) {
  ExperimentConfig config;
  const std::string& source = table.source_name();

  config.master_seed = static_cast<std::uint64_t>(table.get_int("master_seed", 1));
  config.replications = static_cast<int>(table.get_int("replications", 1));
  if (config.replications < 1) {
    throw ConfigError(source + ": replications must be at least 1");
  }

  config.game.source = game_source_from_string(table, table.get_string("game.source", "generate"));
  try {
    config.game.kind = game_kind_from_string(table.get_string("game.kind", "random"));
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  config.game.actions.clear();
  for (std::int64_t m : table.get_int_array("game.actions", {2, 2})) {
    if (m < 2 || m > 64) {
      throw ConfigError(source + ": game.actions entries must lie in [2, 64]");
    }
    config.game.actions.push_back(static_cast<int>(m));
  }
  if (config.game.actions.empty()) {
    throw ConfigError(source + ": game.actions must not be empty");
  }
  config.game.epsilon = table.get_double("game.epsilon", 0.25);
  config.game.penalty = table.get_double("game.penalty", 100.0);
  config.game.seed = static_cast<std::uint64_t>(table.get_int("game.seed", 1));
  config.game.path = table.get_string("game.path", "");
  if (config.game.source == GameSource::File && config.game.path.empty()) {
    throw ConfigError(source + ": game.source = 'file' requires game.path");
  }

  try {
    config.agents.model = agent_model_from_string(table.get_string("agents.model", "mwu"));
    config.agents.policy =
        tie_policy_from_string(table.get_string("agents.policy", "greedy-uniform"));
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }

  config.principal.epsilon = table.get_double("principal.epsilon", 0.0078125);
  config.principal.horizon = table.get_int("principal.T", 10000);
  config.principal.phase_length = table.get_int("principal.L", 0);
  config.principal.rho = table.get_double("principal.rho", 0.0);
  config.principal.epsilon_cap = table.get_double("principal.epsilon_cap", 0.25);
  config.principal.penalty_payment = table.get_double("principal.penalty_payment", 2.0);
  if (config.principal.epsilon <= 0.0 || config.principal.epsilon > 1.0) {
    throw ConfigError(source + ": principal.epsilon must lie in (0, 1]");
  }
  if (config.principal.horizon < 1) {
    throw ConfigError(source + ": principal.T must be positive");
  }
  if (config.principal.phase_length < 0) {
    throw ConfigError(source + ": principal.L must be nonnegative");
  }

  config.cep.epsilon = table.get_double("cep.epsilon", 0.0);
  config.cep.payment_cap = table.get_double("cep.payment_cap", 1.0);
  config.cep.signal_independent = table.get_bool("cep.signal_independent", false);
  if (config.cep.epsilon < 0.0 || config.cep.payment_cap < 0.0) {
    throw ConfigError(source + ": cep.epsilon and cep.payment_cap must be nonnegative");
  }

  config.principal_utility.kind = principal_utility_kind_from_string(
      table, table.get_string("principal_utility.kind", "random"));
  config.principal_utility.seed =
      static_cast<std::uint64_t>(table.get_int("principal_utility.seed", 2));

  config.output.dir = table.get_string("output.dir", "out");

  const std::vector<std::string> unknown = table.unused_keys();
  if (!unknown.empty()) {
    std::string joined;
    for (const std::string& key : unknown) {
      if (!joined.empty()) joined += ", ";
      joined += key + " (line " + std::to_string(table.line_of(key)) + ")";
    }
    throw ConfigError(source + ": unknown keys: " + joined);
  }
  return config;
}

}  // namespace steerlab
