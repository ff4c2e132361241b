#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace steerlab {

// Finite normal-form game. Each agent i has action_counts[i] actions and a
// payoff tensor stored flat with agent 0 varying fastest:
//
//   index(a) = sum_i a_i * stride(i),   stride(i) = prod_{j<i} action_counts[j].
//
// Payoffs live in [0, 1] unless extended_range is set, in which case
// [range_lo, range_hi] records the actual bounds (generators that embed a
// large penalty in an attached principal tensor use this).
struct NormalFormGame {
  int num_agents = 0;
  std::vector<int> action_counts;
  std::vector<Eigen::VectorXd> utilities;
  bool extended_range = false;
  double range_lo = 0.0;
  double range_hi = 1.0;

  std::int64_t num_profiles() const {
    std::int64_t m = 1;
    for (int c : action_counts) m *= c;
    return m;
  }

  std::int64_t stride(int agent) const {
    std::int64_t s = 1;
    for (int j = 0; j < agent; ++j) s *= action_counts[j];
    return s;
  }

  std::int64_t index_of(const std::vector<int>& profile) const {
    std::int64_t idx = 0;
    std::int64_t s = 1;
    for (int i = 0; i < num_agents; ++i) {
      idx += static_cast<std::int64_t>(profile[i]) * s;
      s *= action_counts[i];
    }
    return idx;
  }

  std::vector<int> profile_of(std::int64_t index) const {
    std::vector<int> profile(num_agents);
    for (int i = 0; i < num_agents; ++i) {
      profile[i] = static_cast<int>(index % action_counts[i]);
      index /= action_counts[i];
    }
    return profile;
  }

  double utility(int agent, std::int64_t profile_index) const {
    return utilities[agent](profile_index);
  }

  // Throws std::invalid_argument on shape mismatches, non-finite entries, or
  // entries outside the declared range.
  void validate() const;
};

// Enumerates the opponents' joint actions for one agent. Opponent profiles
// are indexed 0..count()-1 in the same lowest-agent-fastest order as full
// profiles with agent `agent` deleted; joint_index() recombines an opponent
// profile with an own action into a full profile index. Only the action
// counts are needed, so principals that never see payoffs can share the
// enumeration order with everything else.
class OpponentIndexer {
 public:
  OpponentIndexer(std::vector<int> action_counts, int agent);
  OpponentIndexer(const NormalFormGame& game, int agent)
      : OpponentIndexer(game.action_counts, agent) {}

  std::int64_t count() const { return static_cast<std::int64_t>(bases_.size()); }
  std::int64_t joint_index(std::int64_t opp_index, int own_action) const {
    return bases_[opp_index] + own_stride_ * own_action;
  }
  // Full profile with the own slot filled in.
  std::vector<int> profile_with(std::int64_t opp_index, int own_action) const;

 private:
  std::vector<int> counts_;
  int agent_;
  std::int64_t own_stride_;
  std::vector<std::int64_t> bases_;
};

// Utility estimates for every agent, same tensor layout as the game they were
// learned from. epsilon records the accuracy target the producer was run with.
struct LearnedUtilities {
  std::vector<Eigen::VectorXd> values;
  double epsilon = 0.0;
};

struct DistanceReport {
  Eigen::VectorXd per_agent;
  double max_distance = 0.0;
};

// Distance between an agent's true payoffs and an estimate, modulo payoffs
// that differ only by a function of the opponents' actions. Two tensors that
// differ by W_i(a_{-i}) induce identical preferences over own actions, so for
// each opponent profile only the spread of the difference matters:
//
//   dist_i = max_{a_{-i}} (max_{a_i} d(a) - min_{a_i} d(a)) / 2,
//   d(a) = estimate_i(a) - utility_i(a).
//
// This is the tightest eps such that some W_i makes the estimate pointwise
// eps-accurate, and it is invariant under adding any W_i(a_{-i}) to either
// argument.
double strategic_distance(const NormalFormGame& game,
                          const std::vector<Eigen::VectorXd>& estimates, int agent);
DistanceReport strategic_distance(const NormalFormGame& game,
                                  const std::vector<Eigen::VectorXd>& estimates);

// Game plus per-action payments: utilities[i](a) += payments[i](a_i). The
// result usually leaves [0, 1], so the range markers are widened.
NormalFormGame augment_with_payments(const NormalFormGame& game,
                                     const std::vector<Eigen::VectorXd>& payments);

// A game together with an optional principal payoff tensor over the same
// profile space (empty when absent).
struct GameBundle {
  NormalFormGame game;
  Eigen::VectorXd principal_utility;
  bool has_principal() const { return principal_utility.size() > 0; }
};

// All payoffs iid uniform on [0, 1), drawn from the counter stream
// (seed, "game") in agent-major, profile-minor order.
NormalFormGame generate_random_game(const std::vector<int>& action_counts,
                                    std::uint64_t seed);

// Hard instance for payment-based learning: each agent's first action pays 0
// against everything, and every other payoff sits on the grid
// {0, 2*eps, 4*eps, ...} capped at 1, drawn uniformly from the grid. Requires
// eps in (0, 1/2].
NormalFormGame generate_lower_bound_game(const std::vector<int>& action_counts,
                                         double eps, std::uint64_t seed);

// 2x2 matching-pennies pair with a principal who is penalized on the (0,0)
// profile: agent 0 wants to mismatch, agent 1 wants to match, the principal
// utility is -penalty on (0,0) and 0 elsewhere. The interesting property is
// that the optimal recommendation scheme must pay agents differently
// depending on the recommendation they got. Requires penalty >= 10.
GameBundle generate_signal_dependence_game(double penalty = 100.0);

// JSON round trip. Doubles are written in decimal with 17 significant digits
// so parsing returns bit-identical values. Fields: n, action_counts,
// extended_range, range (only when extended), utilities (one flat array per
// agent), principal_utility (optional).
std::string game_to_json(const GameBundle& bundle);
GameBundle game_from_json(const std::string& text);
void save_game(const std::string& path, const GameBundle& bundle);
GameBundle load_game(const std::string& path);

// FNV-1a of the serialized bundle; transcript headers carry it so an audit
// can detect a game file that does not match the run.
std::uint64_t game_digest(const GameBundle& bundle);

}  // namespace steerlab
