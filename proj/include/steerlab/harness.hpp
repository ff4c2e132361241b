#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "steerlab/config.hpp"
#include "steerlab/equilibrium.hpp"
#include "steerlab/game.hpp"
#include "steerlab/protocol.hpp"
#include "steerlab/steering.hpp"

namespace steerlab {

// The pipelines the CLI exposes as subcommands.
enum class RunFamily {
  GenerateGame,
  LearnRationalizable,
  LearnNoRegret,
  MinPayment,
  ComputeCep,
  Steer,
};

const char* to_string(RunFamily family);

// Line 1 of every transcript: a JSON object carrying everything a replay
// needs with no access to the original config. The game bundle (including
// the principal utility actually used) is embedded verbatim, so an audit is
// self-contained given only the transcript file.
struct TranscriptHeader {
  int version = 1;
  std::string command;         // run family name
  std::uint64_t master_seed = 0;
  int replication = 0;
  std::uint64_t seed = 0;      // derive_replication_seed(master_seed, replication)
  std::string game_json;       // serialized GameBundle
  std::uint64_t digest = 0;    // game_digest of that bundle
  std::string agent_model;     // "mwu" or "rationalizable"
  std::string tie_policy;      // rationalizable models only
  double epsilon = 0.0;        // learning accuracy target
  long horizon = 0;            // agent horizon T (drives the MWU step size on replay)
  long phase_length = 0;       // L actually used (0 when the run has no phases)
  double rho = 0.0;            // steering bonus margin actually used
  double epsilon_cap = 0.0;
  double penalty_payment = 0.0;
};

std::string header_to_json(const TranscriptHeader& header);
TranscriptHeader header_from_json(const std::string& text);

// One transcript row per round:
//   {"t":..,"stage":..,"sig":["b","p1"],"act":[..],"pay":[[..],[..]],
//    "paid":[..],"u":[..],"u0":..}
// "pay" holds each agent's full counterfactual payment vector (payment for
// every own action with the others' realized actions fixed), which is what
// regret recomputation needs. Doubles are written with 17 significant
// digits, so parsing returns bit-identical values.
std::string round_to_json(const RoundRecord& record);
RoundRecord round_from_json(const std::string& line);

// Streams rounds to an NDJSON file, header first. When the expected round
// count exceeds the threshold the file is gzip-compressed and ".gz" is
// appended to the path. Readers auto-detect either form.
class TranscriptWriter : public RoundSink {
 public:
  TranscriptWriter(const std::string& path, const TranscriptHeader& header,
                   long expected_rounds);
  ~TranscriptWriter() override;
  TranscriptWriter(const TranscriptWriter&) = delete;
  TranscriptWriter& operator=(const TranscriptWriter&) = delete;

  void on_round(const RoundRecord& record) override;
  void close();

  const std::string& path() const { return path_; }
  long rounds_written() const { return rounds_; }

  static bool should_compress(long expected_rounds) { return expected_rounds > 100000; }

 private:
  void write_line(const std::string& line);

  std::string path_;
  void* file_ = nullptr;  // zlib gzFile; transparent (uncompressed) mode below the threshold
  long rounds_ = 0;
};

struct Transcript {
  TranscriptHeader header;
  GameBundle bundle;  // decoded from header.game_json
  std::vector<RoundRecord> rounds;
  std::vector<long> corrupt_lines;  // 1-based lines that failed to parse (lenient mode)
};

// Reads a transcript, transparently decompressing gzip. In strict mode any
// malformed line throws std::runtime_error; in lenient mode bad lines are
// recorded in corrupt_lines and skipped.
Transcript read_transcript(const std::string& path, bool strict = true);

// Everything an audit establishes about a transcript.
//
// Replay: agents are reconstructed from the header (model, seeds, step
// size) and every round is re-simulated from the recorded signals and
// payment vectors. The first round where a reconstructed agent's action
// differs from the recorded one is reported as a mismatch; a forged action
// also desynchronizes every later round for that signal, so the first hit
// is the authoritative one.
//
// Value checks: each row's realized payment and realized totals must equal
// what the embedded game and the row's payment vectors imply.
//
// Regret: per-agent, per-signal regret ledgers are folded from the rows with
// the same arithmetic the learning agent uses, giving bit-identical peaks.
struct AuditReport {
  long rounds = 0;
  bool digest_ok = false;   // header digest matches the embedded game
  bool replay_ok = false;   // every recorded action reproduced
  long first_mismatch_round = -1;
  int first_mismatch_agent = -1;
  std::vector<long> corrupt_lines;
  std::vector<long> value_mismatch_rounds;

  // Recomputed from rows alone; matches the online ledger bit-for-bit.
  ObjectiveLedger ledger;

  std::vector<double> peak_regret_per_agent;  // max over that agent's signals
  double max_peak_regret = 0.0;
  // max(0, max_peak_regret) / sqrt(rounds): the measured no-regret constant.
  double regret_constant = 0.0;
  std::vector<long> pin_violations_per_agent;

  bool passed() const {
    return digest_ok && replay_ok && corrupt_lines.empty() && value_mismatch_rounds.empty();
  }
};

AuditReport audit_transcript(const Transcript& transcript);
AuditReport audit_file(const std::string& path);

// Game and principal-utility construction shared by the CLI and tests.
// The bundle's principal_utility is filled with the utility the run will
// use (zeros, a seeded uniform draw, or the generator-supplied tensor).
GameBundle build_game_bundle(const ExperimentConfig& config);

struct ExperimentResult {
  std::string output_dir;
  std::uint64_t game_digest_value = 0;
  std::string game_path;
  std::string summary_path;
  std::vector<std::string> transcript_paths;  // one per replication, index order
  std::string cep_path;                       // compute-cep only
  std::vector<std::string> summary_rows;      // formatted CSV rows, header first
};

// Runs `config.replications` independent replications of the family, one
// worker thread per hardware thread (capped by the replication count).
// Replication r draws every stream from derive_replication_seed(master, r).
// Outputs under config.output.dir:
//   game.json                     the bundle all replications share
//   transcript_rNNN.ndjson[.gz]   one per replication (protocol families)
//   phases_rNNN.csv               per-phase diagnostics (learn-noregret)
//   rounds_rNNN.csv               per-round metrics (steer)
//   cep.json                      solution (compute-cep)
//   summary.csv                   one row per replication, written after all
//                                 workers finish, byte-deterministic
ExperimentResult run_experiment(const ExperimentConfig& config, RunFamily family);

}  // namespace steerlab
