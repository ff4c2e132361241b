#include "steerlab/game.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "steerlab/rng.hpp"

namespace steerlab {

void NormalFormGame::validate() const {
  if (num_agents < 1) throw std::invalid_argument("game: num_agents must be >= 1");
  if (static_cast<int>(action_counts.size()) != num_agents) {
    throw std::invalid_argument("game: action_counts size != num_agents");
  }
  for (int c : action_counts) {
    if (c < 1) throw std::invalid_argument("game: every agent needs at least one action");
  }
  if (static_cast<int>(utilities.size()) != num_agents) {
    throw std::invalid_argument("game: utilities size != num_agents");
  }
  const std::int64_t m = num_profiles();
  const double lo = extended_range ? range_lo : 0.0;
  const double hi = extended_range ? range_hi : 1.0;
  for (int i = 0; i < num_agents; ++i) {
    if (utilities[i].size() != m) {
      throw std::invalid_argument("game: utility tensor has wrong length for agent " +
                                  std::to_string(i));
    }
    for (std::int64_t k = 0; k < m; ++k) {
      const double v = utilities[i](k);
      if (!std::isfinite(v)) {
        throw std::invalid_argument("game: non-finite utility entry");
      }
      if (v < lo - 1e-12 || v > hi + 1e-12) {
        throw std::invalid_argument("game: utility entry outside declared range");
      }
    }
  }
}

OpponentIndexer::OpponentIndexer(std::vector<int> action_counts, int agent)
    : counts_(std::move(action_counts)), agent_(agent) {
  const int n = static_cast<int>(counts_.size());
  std::int64_t total = 1;
  own_stride_ = 1;
  for (int j = 0; j < n; ++j) {
    if (j == agent) own_stride_ = total;
    total *= counts_[j];
  }
  const std::int64_t count = total / counts_[agent];
  bases_.reserve(count);
  // Walk all profiles with the own action fixed at 0, in index order. That
  // enumerates opponent profiles lowest-agent-fastest.
  std::vector<int> profile(n, 0);
  for (std::int64_t k = 0; k < count; ++k) {
    std::int64_t idx = 0;
    std::int64_t s = 1;
    for (int j = 0; j < n; ++j) {
      idx += static_cast<std::int64_t>(profile[j]) * s;
      s *= counts_[j];
    }
    bases_.push_back(idx);
    for (int j = 0; j < n; ++j) {
      if (j == agent) continue;
      if (++profile[j] < counts_[j]) break;
      profile[j] = 0;
    }
  }
}

std::vector<int> OpponentIndexer::profile_with(std::int64_t opp_index, int own_action) const {
  std::int64_t idx = bases_[opp_index];
  std::vector<int> profile(counts_.size());
  for (std::size_t j = 0; j < counts_.size(); ++j) {
    profile[j] = static_cast<int>(idx % counts_[j]);
    idx /= counts_[j];
  }
  profile[agent_] = own_action;
  return profile;
}

double strategic_distance(const NormalFormGame& game,
                          const std::vector<Eigen::VectorXd>& estimates, int agent) {
  OpponentIndexer opp(game, agent);
  const int m = game.action_counts[agent];
  double worst = 0.0;
  for (std::int64_t k = 0; k < opp.count(); ++k) {
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < m; ++a) {
      const std::int64_t idx = opp.joint_index(k, a);
      const double d = estimates[agent](idx) - game.utilities[agent](idx);
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
    }
    worst = std::max(worst, (dmax - dmin) / 2.0);
  }
  return worst;
}

DistanceReport strategic_distance(const NormalFormGame& game,
                                  const std::vector<Eigen::VectorXd>& estimates) {
  DistanceReport report;
  report.per_agent.resize(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    report.per_agent(i) = strategic_distance(game, estimates, i);
  }
  report.max_distance = game.num_agents > 0 ? report.per_agent.maxCoeff() : 0.0;
  return report;
}

NormalFormGame augment_with_payments(const NormalFormGame& game,
                                     const std::vector<Eigen::VectorXd>& payments) {
  NormalFormGame out = game;
  const std::int64_t total = game.num_profiles();
  double lo = game.extended_range ? game.range_lo : 0.0;
  double hi = game.extended_range ? game.range_hi : 1.0;
  for (int i = 0; i < game.num_agents; ++i) {
    const std::int64_t s = game.stride(i);
    const int m = game.action_counts[i];
    for (std::int64_t idx = 0; idx < total; ++idx) {
      const int a_i = static_cast<int>((idx / s) % m);
      out.utilities[i](idx) += payments[i](a_i);
      lo = std::min(lo, out.utilities[i](idx));
      hi = std::max(hi, out.utilities[i](idx));
    }
  }
  out.extended_range = true;
  out.range_lo = lo;
  out.range_hi = hi;
  return out;
}

NormalFormGame generate_random_game(const std::vector<int>& action_counts,
                                    std::uint64_t seed) {
  NormalFormGame game;
  game.num_agents = static_cast<int>(action_counts.size());
  game.action_counts = action_counts;
  const std::int64_t total = game.num_profiles();
  CounterRng rng(seed, "game");
  game.utilities.resize(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    game.utilities[i].resize(total);
    for (std::int64_t k = 0; k < total; ++k) game.utilities[i](k) = rng.next_double();
  }
  game.validate();
  return game;
}

NormalFormGame generate_lower_bound_game(const std::vector<int>& action_counts,
                                         double eps, std::uint64_t seed) {
  if (!(eps > 0.0 && eps <= 0.5)) {
    throw std::invalid_argument("lower bound game: eps must be in (0, 1/2]");
  }
  NormalFormGame game;
  game.num_agents = static_cast<int>(action_counts.size());
  game.action_counts = action_counts;
  const std::int64_t total = game.num_profiles();
  const int grid_max = static_cast<int>(std::floor(1.0 / (2.0 * eps) + 1e-12));
  CounterRng rng(seed, "game");
  game.utilities.resize(game.num_agents);
  for (int i = 0; i < game.num_agents; ++i) {
    game.utilities[i].resize(total);
    const std::int64_t s = game.stride(i);
    const int m = game.action_counts[i];
    for (std::int64_t k = 0; k < total; ++k) {
      const int a_i = static_cast<int>((k / s) % m);
      game.utilities[i](k) = a_i == 0 ? 0.0 : 2.0 * eps * rng.next_int(grid_max + 1);
    }
  }
  game.validate();
  return game;
}

GameBundle generate_signal_dependence_game(double penalty) {
  if (!(penalty >= 10.0)) {
    throw std::invalid_argument("signal dependence game: penalty must be >= 10");
  }
  GameBundle bundle;
  NormalFormGame& game = bundle.game;
  game.num_agents = 2;
  game.action_counts = {2, 2};
  // Profile order (agent 0 fastest): (0,0), (1,0), (0,1), (1,1).
  game.utilities.resize(2);
  game.utilities[0].resize(4);
  game.utilities[1].resize(4);
  game.utilities[0] << 0.0, 1.0, 1.0, 0.0;  // mismatcher
  game.utilities[1] << 1.0, 0.0, 0.0, 1.0;  // matcher
  game.extended_range = true;
  game.range_lo = -penalty;
  game.range_hi = 1.0;
  bundle.principal_utility.resize(4);
  bundle.principal_utility << -penalty, 0.0, 0.0, 0.0;
  return bundle;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void append_array(std::string& out, const Eigen::VectorXd& v) {
  out += '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    append_double(out, v(i));
  }
  out += ']';
}

}  // namespace

std::string game_to_json(const GameBundle& bundle) {
  const NormalFormGame& game = bundle.game;
  std::string out;
  out += "{\n  \"n\": " + std::to_string(game.num_agents) + ",\n  \"action_counts\": [";
  for (int i = 0; i < game.num_agents; ++i) {
    if (i > 0) out += ',';
    out += std::to_string(game.action_counts[i]);
  }
  out += "],\n  \"extended_range\": ";
  out += game.extended_range ? "true" : "false";
  if (game.extended_range) {
    out += ",\n  \"range\": [";
    append_double(out, game.range_lo);
    out += ',';
    append_double(out, game.range_hi);
    out += ']';
  }
  out += ",\n  \"utilities\": [\n";
  for (int i = 0; i < game.num_agents; ++i) {
    out += "    ";
    append_array(out, game.utilities[i]);
    if (i + 1 < game.num_agents) out += ',';
    out += '\n';
  }
  out += "  ]";
  if (bundle.has_principal()) {
    out += ",\n  \"principal_utility\": ";
    append_array(out, bundle.principal_utility);
  }
  out += "\n}\n";
  return out;
}

GameBundle game_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("game JSON parse error: ") + e.what());
  }
  GameBundle bundle;
  NormalFormGame& game = bundle.game;
  try {
    game.num_agents = j.at("n").get<int>();
    game.action_counts = j.at("action_counts").get<std::vector<int>>();
    game.extended_range = j.value("extended_range", false);
    if (game.extended_range) {
      const auto& r = j.at("range");
      game.range_lo = r.at(0).get<double>();
      game.range_hi = r.at(1).get<double>();
    }
    const auto& us = j.at("utilities");
    game.utilities.resize(us.size());
    for (std::size_t i = 0; i < us.size(); ++i) {
      const auto vals = us[i].get<std::vector<double>>();
      game.utilities[i] = Eigen::Map<const Eigen::VectorXd>(vals.data(), vals.size());
    }
    if (j.contains("principal_utility")) {
      const auto vals = j["principal_utility"].get<std::vector<double>>();
      bundle.principal_utility = Eigen::Map<const Eigen::VectorXd>(vals.data(), vals.size());
      if (bundle.principal_utility.size() != game.num_profiles()) {
        throw std::invalid_argument("game JSON: principal_utility has wrong length");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("game JSON field error: ") + e.what());
  }
  game.validate();
  return bundle;
}

void save_game(const std::string& path, const GameBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << game_to_json(bundle);
  if (!out) throw std::runtime_error("write failed: " + path);
}

GameBundle load_game(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return game_from_json(ss.str());
}

std::uint64_t game_digest(const GameBundle& bundle) {
  return fnv1a64(game_to_json(bundle));
}

}  // namespace steerlab
