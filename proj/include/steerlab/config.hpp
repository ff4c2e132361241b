#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "steerlab/agents.hpp"

namespace steerlab {

// Configuration problems carry the file name, line, and offending key in the
// message. The CLI maps this exception to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parsed key/value file in a TOML-like dialect: `[section]` headers, bare or
// dotted keys, `#` comments, and values that are integers, floats, booleans,
// quoted strings, or single-line arrays of those. Keys are stored flat as
// full dotted paths ("game.actions"). Every lookup marks the key as read;
// unused_keys() reports what a strict consumer should reject.
class ConfigTable {
 public:
  struct Value {
    enum class Kind { Int, Float, Bool, String, Array };
    Kind kind = Kind::Int;
    std::int64_t as_int = 0;
    double as_float = 0.0;
    bool as_bool = false;
    std::string as_string;
    std::vector<Value> as_array;
    int line = 0;
  };

  static ConfigTable parse_file(const std::string& path);
  static ConfigTable parse_string(const std::string& text, const std::string& source_name);

  bool has(const std::string& path) const;
  int line_of(const std::string& path) const;

  std::int64_t get_int(const std::string& path, std::int64_t fallback) const;
  double get_double(const std::string& path, double fallback) const;
  bool get_bool(const std::string& path, bool fallback) const;
  std::string get_string(const std::string& path, const std::string& fallback) const;
  std::vector<std::int64_t> get_int_array(const std::string& path,
                                          std::vector<std::int64_t> fallback) const;

  // Keys present in the file that no getter has touched.
  std::vector<std::string> unused_keys() const;
  const std::string& source_name() const { return source_; }

 private:
  const Value* find(const std::string& path) const;
  [[noreturn]] void type_error(const std::string& path, const Value& value,
                               const char* expected) const;

  std::string source_;
  std::map<std::string, Value> values_;
  mutable std::set<std::string> read_;
};

enum class GameSource { Generate, File };
enum class GameKind { Random, LowerBound, SignalDependence };
enum class AgentModel { Mwu, Rationalizable };
enum class PrincipalUtilityKind { Zero, Random, FromGame };

struct GameConfig {
  GameSource source = GameSource::Generate;
  GameKind kind = GameKind::Random;
  std::vector<int> actions = {2, 2};
  double epsilon = 0.25;    // lower-bound generator grid step
  double penalty = 100.0;   // signal-dependence generator penalty
  std::uint64_t seed = 1;
  std::string path;         // when source == File
};

struct AgentSection {
  AgentModel model = AgentModel::Mwu;
  TiePolicy policy = TiePolicy::GreedyUniform;
};

struct PrincipalSection {
  double epsilon = 0.0078125;  // bisection / escalation precision, 2^-7
  long horizon = 10000;        // T
  long phase_length = 0;       // L; 0 = derived default
  double rho = 0.0;            // 0 = T^{-1/4}
  double epsilon_cap = 0.25;
  double penalty_payment = 2.0;
};

struct CepSection {
  double epsilon = 0.0;
  double payment_cap = 1.0;
  bool signal_independent = false;
};

struct PrincipalUtilitySection {
  PrincipalUtilityKind kind = PrincipalUtilityKind::Random;
  std::uint64_t seed = 2;
};

struct OutputSection {
  std::string dir = "out";
};

struct ExperimentConfig {
  std::uint64_t master_seed = 1;
  int replications = 1;
  GameConfig game;
  AgentSection agents;
  PrincipalSection principal;
  CepSection cep;
  PrincipalUtilitySection principal_utility;
  OutputSection output;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_table(const ConfigTable& table);
};

const char* to_string(GameSource v);
const char* to_string(GameKind v);
const char* to_string(AgentModel v);
const char* to_string(PrincipalUtilityKind v);

GameKind game_kind_from_string(const std::string& s);
AgentModel agent_model_from_string(const std::string& s);

}  // namespace steerlab
