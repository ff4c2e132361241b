#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "steerlab/config.hpp"
#include "steerlab/harness.hpp"
#include "steerlab/protocol.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int replications = 0;
};

void add_common_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config, "experiment config file (TOML subset)")
      ->envname("STEERLAB_CONFIG");
  cmd->add_option("-s,--seed", opts.seed, "override master_seed")->envname("STEERLAB_SEED");
  cmd->add_option("-o,--out", opts.out, "override output.dir")->envname("STEERLAB_OUT");
  cmd->add_option("-r,--replications", opts.replications, "override replications")
      ->envname("STEERLAB_REPLICATIONS");
}

int run_family(steerlab::RunFamily family, const CLI::App* cmd, const CommonOpts& opts) {
  steerlab::ExperimentConfig config = opts.config.empty()
                                          ? steerlab::ExperimentConfig{}
                                          : steerlab::ExperimentConfig::from_file(opts.config);
  if (cmd->count("--seed") > 0) config.master_seed = opts.seed;
  if (cmd->count("--out") > 0) config.output.dir = opts.out;
  if (cmd->count("--replications") > 0) {
    if (opts.replications < 1) throw steerlab::ConfigError("replications must be at least 1");
    config.replications = opts.replications;
  }

  const steerlab::ExperimentResult result = steerlab::run_experiment(config, family);
  std::cout << to_string(family) << ": wrote " << result.summary_path << "\n";
  for (const std::string& row : result.summary_rows) std::cout << "  " << row << "\n";
  if (!result.cep_path.empty()) std::cout << "solution: " << result.cep_path << "\n";
  std::cout << "game: " << result.game_path << " (digest " << result.game_digest_value << ")\n";
  return 0;
}

int run_audit(const std::string& path) {
  const steerlab::AuditReport report = steerlab::audit_file(path);
  std::cout << "transcript: " << path << "\n";
  std::cout << "rounds: " << report.rounds << "\n";
  std::cout << "digest: " << (report.digest_ok ? "ok" : "MISMATCH") << "\n";
  if (report.replay_ok) {
    std::cout << "replay: ok\n";
  } else {
    std::cout << "replay: MISMATCH at round " << report.first_mismatch_round << ", agent "
              << report.first_mismatch_agent << "\n";
  }
  if (!report.corrupt_lines.empty()) {
    std::cout << "corrupt lines:";
    for (long line : report.corrupt_lines) std::cout << " " << line;
    std::cout << "\n";
  }
  if (!report.value_mismatch_rounds.empty()) {
    std::cout << "value mismatches at rounds:";
    for (long t : report.value_mismatch_rounds) std::cout << " " << t;
    std::cout << "\n";
  }
  std::cout << "pin violations per agent:";
  for (long v : report.pin_violations_per_agent) std::cout << " " << v;
  std::cout << "\n";
  std::cout << "peak regret per agent:";
  for (double v : report.peak_regret_per_agent) std::cout << " " << v;
  std::cout << "\n";
  std::cout << "regret constant: " << report.regret_constant << "\n";
  std::cout << "average objective: " << report.ledger.average_objective() << "\n";
  std::cout << "disobedient steering rounds: " << report.ledger.disobedient_rounds << "\n";
  std::cout << (report.passed() ? "AUDIT PASS" : "AUDIT FAIL") << "\n";
  return report.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"steerlab: learning and steering agent incentives in repeated games"};
  app.require_subcommand(1);

  struct FamilyCommand {
    steerlab::RunFamily family;
    CLI::App* cmd;
    CommonOpts opts;
  };
  std::vector<std::pair<steerlab::RunFamily, const char*>> families = {
      {steerlab::RunFamily::GenerateGame, "write the configured game bundle to game.json"},
      {steerlab::RunFamily::LearnRationalizable,
       "learn utilities of rationalizable agents by bisection over payments"},
      {steerlab::RunFamily::LearnNoRegret,
       "learn utilities of no-regret agents by payment gradient descent"},
      {steerlab::RunFamily::MinPayment,
       "learn a single agent's utilities with escalating minimal payments"},
      {steerlab::RunFamily::ComputeCep,
       "solve for the payment-augmented correlated equilibrium maximizing the principal"},
      {steerlab::RunFamily::Steer,
       "full pipeline: learn, solve, then steer no-regret agents with recommendations"},
  };
  std::vector<FamilyCommand> commands;
  commands.reserve(families.size());
  for (const auto& [family, help] : families) {
    FamilyCommand fc;
    fc.family = family;
    fc.cmd = app.add_subcommand(to_string(family), help);
    commands.push_back(std::move(fc));
  }
  for (FamilyCommand& fc : commands) add_common_options(fc.cmd, fc.opts);

  std::string audit_path;
  CLI::App* audit_cmd =
      app.add_subcommand("audit", "replay a transcript and verify it against its header");
  audit_cmd->add_option("transcript", audit_path, "transcript file (.ndjson or .ndjson.gz)")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (audit_cmd->parsed()) return run_audit(audit_path);
    for (const FamilyCommand& fc : commands) {
      if (fc.cmd->parsed()) return run_family(fc.family, fc.cmd, fc.opts);
    }
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const steerlab::ProtocolViolation& e) {
    std::cerr << "protocol violation: " << e.what() << "\n";
    return 2;
  } catch (const steerlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
