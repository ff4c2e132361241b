#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "steerlab/config.hpp"
#include "steerlab/game.hpp"
#include "steerlab/harness.hpp"

#ifndef STEERLAB_SOURCE_DIR
#define STEERLAB_SOURCE_DIR "."
#endif

using namespace steerlab;
namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

std::string fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("harness_test_out") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string config_path(const char* name) {
  return std::string(STEERLAB_SOURCE_DIR) + "/configs/" + name;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

GameBundle tiny_bundle() {
  GameBundle bundle;
  bundle.game = generate_random_game({2}, 77);
  bundle.principal_utility = Eigen::VectorXd::Zero(2);
  return bundle;
}

TranscriptHeader tiny_header(const GameBundle& bundle) {
  TranscriptHeader h;
  h.command = "learn-noregret";
  h.master_seed = 5;
  h.replication = 0;
  h.seed = 12345;
  h.game_json = game_to_json(bundle);
  h.digest = game_digest(bundle);
  h.agent_model = "mwu";
  h.epsilon = 0.0078125;
  h.horizon = 10;
  return h;
}

RoundRecord tiny_round(long t) {
  RoundRecord r;
  r.t = t;
  r.stage = 0;
  r.signals = {Signal::bot()};
  r.actions = {static_cast<int>(t % 2)};
  Eigen::VectorXd pay(2);
  pay << 0.5 + t, 1.0 / 3.0;
  r.payment_vectors = {pay};
  r.realized_payment = Eigen::VectorXd::Constant(1, pay(r.actions[0]));
  r.realized_total = Eigen::VectorXd::Constant(1, pay(r.actions[0]) + 0.25);
  r.principal_utility = 0.1 * t;
  return r;
}

}  // namespace

TEST_CASE("the config dialect parses sections, types, and comments") {
  const char* text = R"(# leading comment
master_seed = 7
count = 5
ratio = 1.5

[game]
kind = "random"  # trailing comment
actions = [3, 4]
epsilon = 0.25
label = "a # not a comment"
flag = true
escaped = "say \"hi\" done"
nested.deep = 2
)";
  const ConfigTable table = ConfigTable::parse_string(text, "inline");
  CHECK(table.get_int("master_seed", 0) == 7);
  CHECK(table.get_double("ratio", 0.0) == 1.5);
  CHECK(table.get_double("count", 0.0) == 5.0);  // integers promote
  CHECK(table.get_string("game.kind", "") == "random");
  CHECK(table.get_int_array("game.actions", {}) == std::vector<std::int64_t>{3, 4});
  CHECK(table.get_double("game.epsilon", 0.0) == 0.25);
  CHECK(table.get_string("game.label", "") == "a # not a comment");
  CHECK(table.get_bool("game.flag", false));
  CHECK(table.get_string("game.escaped", "") == "say \"hi\" done");
  CHECK(table.get_int("game.nested.deep", 0) == 2);
  CHECK(table.has("game.flag"));
  CHECK_FALSE(table.has("game.missing"));
  CHECK(table.get_int("game.missing", 42) == 42);  // fallback path
  CHECK(table.line_of("master_seed") == 2);
  CHECK(table.unused_keys().empty());  // everything above was read
}

TEST_CASE("config errors carry the source location") {
  CHECK_THROWS_AS(ConfigTable::parse_string("a = 1\na = 2\n", "dup"), ConfigError);
  try {
    ConfigTable::parse_string("a = 1\na = 2\n", "dup");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dup:2") != std::string::npos);
    CHECK(msg.find("duplicate key 'a'") != std::string::npos);
  }
  CHECK_THROWS_AS(ConfigTable::parse_string("just some words\n", "bad"), ConfigError);
  CHECK_THROWS_AS(ConfigTable::parse_string("s = \"unterminated\n", "bad"), ConfigError);
  CHECK_THROWS_AS(ConfigTable::parse_file("/no/such/path.toml"), ConfigError);

  const ConfigTable table = ConfigTable::parse_string("[game]\nkind = \"random\"\n", "t");
  CHECK_THROWS_AS(table.get_int("game.kind", 0), ConfigError);
  try {
    table.get_int("game.kind", 0);
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("t:2") != std::string::npos);
    CHECK(msg.find("must be an integer") != std::string::npos);
  }
}

TEST_CASE("experiment configs reject unknown keys and bad values") {
  const ConfigTable bogus =
      ConfigTable::parse_string("master_seed = 4\n[game]\nbogus = 1\n", "inline");
  CHECK_THROWS_AS(ExperimentConfig::from_table(bogus), ConfigError);
  try {
    ExperimentConfig::from_table(bogus);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("game.bogus") != std::string::npos);
  }

  const ConfigTable zero_reps = ConfigTable::parse_string("replications = 0\n", "inline");
  CHECK_THROWS_AS(ExperimentConfig::from_table(zero_reps), ConfigError);

  const ConfigTable good = ConfigTable::parse_string(
      "master_seed = 11\nreplications = 3\n[game]\nactions = [2, 3]\nseed = 8\n"
      "[agents]\nmodel = \"rationalizable\"\npolicy = \"adversarial-max\"\n",
      "inline");
  const ExperimentConfig cfg = ExperimentConfig::from_table(good);
  CHECK(cfg.master_seed == 11);
  CHECK(cfg.replications == 3);
  CHECK(cfg.game.actions == std::vector<int>{2, 3});
  CHECK(cfg.game.seed == 8);
  CHECK(cfg.agents.model == AgentModel::Rationalizable);
  CHECK(cfg.agents.policy == TiePolicy::AdversarialMax);
}

TEST_CASE("transcript headers survive JSON round trips bit for bit") {
  const GameBundle bundle = tiny_bundle();
  TranscriptHeader h = tiny_header(bundle);
  h.master_seed = 0xDEADBEEFDEADBEEFull;  // above int64 range
  h.seed = 0xFFFFFFFFFFFFFFFFull;
  h.tie_policy = "greedy-uniform";
  h.epsilon = 1.0 / 3.0;
  h.phase_length = 1000;
  h.rho = 0.1;
  h.epsilon_cap = 0.25;
  h.penalty_payment = 2.0;
  const TranscriptHeader back = header_from_json(header_to_json(h));
  CHECK(back.version == h.version);
  CHECK(back.command == h.command);
  CHECK(back.master_seed == h.master_seed);
  CHECK(back.replication == h.replication);
  CHECK(back.seed == h.seed);
  CHECK(back.digest == h.digest);
  CHECK(back.agent_model == h.agent_model);
  CHECK(back.tie_policy == h.tie_policy);
  CHECK(back.epsilon == h.epsilon);
  CHECK(back.horizon == h.horizon);
  CHECK(back.phase_length == h.phase_length);
  CHECK(back.rho == h.rho);
  CHECK(back.epsilon_cap == h.epsilon_cap);
  CHECK(back.penalty_payment == h.penalty_payment);
  // The embedded game re-serializes to the same canonical bytes.
  CHECK(game_to_json(game_from_json(back.game_json)) == game_to_json(bundle));
}

TEST_CASE("round records survive JSON round trips bit for bit") {
  RoundRecord r;
  r.t = 41;
  r.stage = 1;
  r.signals = {Signal::recommend(1), Signal::pin(0), Signal::bot()};
  r.actions = {1, 0, 2};
  Eigen::VectorXd p0(2), p1(2), p2(3);
  p0 << 1.0 / 3.0, 0.0078125;
  p1 << 0.1, 2.0;
  p2 << 0.0, 1e-17, 0.9999999999999999;
  r.payment_vectors = {p0, p1, p2};
  Eigen::VectorXd paid(3), total(3);
  paid << 1.0 / 3.0, 0.1, 1e-17;
  total << 0.5, 0.7, 1e-17;
  r.realized_payment = paid;
  r.realized_total = total;
  r.principal_utility = -1.0 / 7.0;
  const RoundRecord back = round_from_json(round_to_json(r));
  CHECK(back.t == r.t);
  CHECK(back.stage == r.stage);
  REQUIRE(back.signals.size() == 3);
  CHECK(back.signals[0] == r.signals[0]);
  CHECK(back.signals[1] == r.signals[1]);
  CHECK(back.signals[2] == r.signals[2]);
  CHECK(back.actions == r.actions);
  REQUIRE(back.payment_vectors.size() == 3);
  CHECK(back.payment_vectors[0] == p0);
  CHECK(back.payment_vectors[1] == p1);
  CHECK(back.payment_vectors[2] == p2);
  CHECK(back.realized_payment == paid);
  CHECK(back.realized_total == total);
  CHECK(back.principal_utility == r.principal_utility);
}

TEST_CASE("transcripts compress only past the expected-size threshold") {
  const std::string dir = fresh_dir("writer");
  const GameBundle bundle = tiny_bundle();
  const TranscriptHeader h = tiny_header(bundle);

  const std::string plain_path = dir + "/plain.ndjson";
  TranscriptWriter plain(plain_path, h, 100000);
  for (long t = 0; t < 3; ++t) plain.on_round(tiny_round(t));
  plain.close();
  CHECK(plain.path() == plain_path);
  CHECK(plain.rounds_written() == 3);
  const std::string plain_bytes = slurp(plain_path);
  REQUIRE(!plain_bytes.empty());
  CHECK(plain_bytes[0] == '{');

  const std::string gz_base = dir + "/compressed.ndjson";
  TranscriptWriter gz(gz_base, h, 100001);
  for (long t = 0; t < 3; ++t) gz.on_round(tiny_round(t));
  gz.close();
  CHECK(gz.path() == gz_base + ".gz");
  const std::string gz_bytes = slurp(gz.path());
  REQUIRE(gz_bytes.size() >= 2);
  CHECK(static_cast<unsigned char>(gz_bytes[0]) == 0x1f);
  CHECK(static_cast<unsigned char>(gz_bytes[1]) == 0x8b);

  // Both forms read back identically.
  for (const std::string& path : {plain.path(), gz.path()}) {
    const Transcript t = read_transcript(path);
    CHECK(t.header.command == "learn-noregret");
    CHECK(t.header.seed == 12345);
    REQUIRE(t.rounds.size() == 3);
    CHECK(t.rounds[2].t == 2);
    CHECK(t.rounds[1].payment_vectors[0] == tiny_round(1).payment_vectors[0]);
    CHECK(t.corrupt_lines.empty());
  }
}

TEST_CASE("a broken header is fatal even in lenient mode") {
  const std::string dir = fresh_dir("badheader");
  const std::string path = dir + "/t.ndjson";
  spit(path, "definitely not json\n");
  CHECK_THROWS_AS(read_transcript(path, false), std::runtime_error);
  CHECK_THROWS_AS(read_transcript(path, true), std::runtime_error);
}

TEST_CASE("the bisection pipeline runs from its shipped config and audits clean") {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path("rationalizable.toml"));
  cfg.replications = 1;
  cfg.output.dir = fresh_dir("rationalizable");
  const ExperimentResult result = run_experiment(cfg, RunFamily::LearnRationalizable);

  REQUIRE(result.transcript_paths.size() == 1);
  const AuditReport audit = audit_file(result.transcript_paths[0]);
  CHECK(audit.passed());
  CHECK(audit.rounds == 144);  // 8 probes x (3 actions x 3 opponent profiles) x 2 agents
  CHECK(audit.digest_ok);
  CHECK(audit.replay_ok);
  CHECK(result.game_digest_value == game_digest(load_game(result.game_path)));
  REQUIRE(result.summary_rows.size() == 2);
  CHECK(result.summary_rows[0] ==
        "replication,seed,rounds,total_payment,distance_max,escalation_total");
  const std::vector<std::string> row = split_csv(result.summary_rows[1]);
  REQUIRE(row.size() == 6);
  CHECK(row[0] == "0");
  CHECK(row[2] == "144");
  CHECK(std::stod(row[4]) <= cfg.principal.epsilon);
}

TEST_CASE("the payment-minimization pipeline audits clean") {
  ExperimentConfig cfg;
  cfg.master_seed = 19;
  cfg.replications = 2;
  cfg.game.actions = {4};
  cfg.game.seed = 3;
  cfg.agents.model = AgentModel::Rationalizable;
  cfg.principal.epsilon = 0.01;
  cfg.principal_utility.kind = PrincipalUtilityKind::Zero;
  cfg.output.dir = fresh_dir("minpay");
  const ExperimentResult result = run_experiment(cfg, RunFamily::MinPayment);
  REQUIRE(result.transcript_paths.size() == 2);
  for (const std::string& path : result.transcript_paths) {
    const AuditReport audit = audit_file(path);
    CHECK(audit.passed());
    CHECK(audit.rounds >= 1);
  }
  // Multi-agent games are rejected up front.
  ExperimentConfig multi = cfg;
  multi.game.actions = {2, 2};
  multi.output.dir = fresh_dir("minpay_multi");
  CHECK_THROWS_AS(run_experiment(multi, RunFamily::MinPayment), ConfigError);
}

TEST_CASE("the no-regret pipeline writes phase diagnostics and audits clean") {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path("noregret.toml"));
  cfg.replications = 1;
  cfg.output.dir = fresh_dir("noregret");
  const ExperimentResult result = run_experiment(cfg, RunFamily::LearnNoRegret);

  REQUIRE(result.transcript_paths.size() == 1);
  const AuditReport audit = audit_file(result.transcript_paths[0]);
  CHECK(audit.passed());
  CHECK(audit.rounds == 8000);  // 4 phases of L = 2000
  CHECK(audit.ledger.learning.rounds == 8000);
  CHECK(audit.max_peak_regret >= 0.0);
  CHECK(audit.regret_constant < 10.0);

  const std::string phases = slurp(cfg.output.dir + "/phases_r000.csv");
  CHECK(phases.rfind("replication,phase,agent,opp_index,rounds,pin_violations,"
                     "principal_regret\n", 0) == 0);
  // Header plus one line per (agent, opponent action) phase.
  CHECK(std::count(phases.begin(), phases.end(), '\n') == 5);
}

TEST_CASE("family and model pairings are enforced") {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path("noregret.toml"));
  cfg.output.dir = fresh_dir("pairing");
  CHECK_THROWS_AS(run_experiment(cfg, RunFamily::LearnRationalizable), ConfigError);
  cfg.agents.model = AgentModel::Rationalizable;
  CHECK_THROWS_AS(run_experiment(cfg, RunFamily::LearnNoRegret), ConfigError);
  CHECK_THROWS_AS(run_experiment(cfg, RunFamily::Steer), ConfigError);
}

TEST_CASE("the steering pipeline's summary matches an independent audit") {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path("steer_small.toml"));
  cfg.replications = 1;
  cfg.output.dir = fresh_dir("steer");
  const ExperimentResult result = run_experiment(cfg, RunFamily::Steer);

  REQUIRE(result.transcript_paths.size() == 1);
  const AuditReport audit = audit_file(result.transcript_paths[0]);
  CHECK(audit.passed());
  CHECK(audit.rounds == cfg.principal.horizon);
  CHECK(audit.ledger.learning.rounds == 1600);  // L = 400, 4 phases
  CHECK(audit.ledger.steering.rounds == cfg.principal.horizon - 1600);

  REQUIRE(result.summary_rows.size() == 2);
  const std::vector<std::string> row = split_csv(result.summary_rows[1]);
  REQUIRE(row.size() == 9);
  CHECK(row[2] == std::to_string(cfg.principal.horizon));
  CHECK(row[3] == "1600");
  // The published average objective is byte-identical to the replayed one.
  CHECK(row[5] == fmt17(audit.ledger.average_objective()));
  CHECK(row[7] == std::to_string(audit.ledger.disobedient_rounds));

  const std::string rounds_csv = slurp(cfg.output.dir + "/rounds_r000.csv");
  CHECK(rounds_csv.rfind("t,stage,u0,pay_total,F_cum,disobey_0,disobey_1\n", 0) == 0);
  CHECK(std::count(rounds_csv.begin(), rounds_csv.end(), '\n') ==
        cfg.principal.horizon + 1);
}

TEST_CASE("replicated runs are byte-deterministic") {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path("steer_small.toml"));
  cfg.replications = 1;
  cfg.output.dir = fresh_dir("det_a");
  const ExperimentResult first = run_experiment(cfg, RunFamily::Steer);
  cfg.output.dir = fresh_dir("det_b");
  const ExperimentResult second = run_experiment(cfg, RunFamily::Steer);
  CHECK(slurp(first.summary_path) == slurp(second.summary_path));
  CHECK(slurp(first.transcript_paths[0]) == slurp(second.transcript_paths[0]));
  CHECK(slurp(first.game_path) == slurp(second.game_path));
}

TEST_CASE("every replication gets its own files and seed") {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path("noregret.toml"));
  cfg.replications = 3;
  cfg.principal.phase_length = 250;  // keep the run small
  cfg.output.dir = fresh_dir("reps");
  const ExperimentResult result = run_experiment(cfg, RunFamily::LearnNoRegret);

  REQUIRE(result.transcript_paths.size() == 3);
  std::vector<std::uint64_t> seeds;
  for (int r = 0; r < 3; ++r) {
    CHECK(fs::exists(result.transcript_paths[r]));
    CHECK(fs::exists(fs::path(cfg.output.dir) / ("phases_r00" + std::to_string(r) + ".csv")));
    const Transcript t = read_transcript(result.transcript_paths[r]);
    CHECK(t.header.replication == r);
    seeds.push_back(t.header.seed);
  }
  CHECK(seeds[0] != seeds[1]);
  CHECK(seeds[1] != seeds[2]);
  // Directory contents: game.json + summary.csv + 3 transcripts + 3 phase files.
  int files = 0;
  for (const auto& entry : fs::directory_iterator(cfg.output.dir)) {
    (void)entry;
    ++files;
  }
  CHECK(files == 8);
  REQUIRE(result.summary_rows.size() == 4);
}

TEST_CASE("an audit catches a forged action") {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path("noregret.toml"));
  cfg.replications = 1;
  cfg.principal.phase_length = 250;
  cfg.output.dir = fresh_dir("forged");
  const ExperimentResult result = run_experiment(cfg, RunFamily::LearnNoRegret);

  std::string text = slurp(result.transcript_paths[0]);
  const std::size_t pos = text.find("\"act\":[0");
  REQUIRE(pos != std::string::npos);
  text[pos + 7] = '1';
  const std::string forged_path = cfg.output.dir + "/forged.ndjson";
  spit(forged_path, text);

  const AuditReport audit = audit_file(forged_path);
  CHECK_FALSE(audit.passed());
  // The lie shows up either as a replay divergence or as a value mismatch
  // (the recorded totals no longer match the flipped action), usually both.
  const bool replay_caught = !audit.replay_ok && audit.first_mismatch_round >= 0;
  const bool value_caught = !audit.value_mismatch_rounds.empty();
  CHECK(replay_caught);
  CHECK(value_caught);
  CHECK(audit.digest_ok);  // the game itself was not tampered with
}

TEST_CASE("an audit reports corrupt lines without dying") {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path("noregret.toml"));
  cfg.replications = 1;
  cfg.principal.phase_length = 250;
  cfg.output.dir = fresh_dir("corrupt");
  const ExperimentResult result = run_experiment(cfg, RunFamily::LearnNoRegret);

  std::string text = slurp(result.transcript_paths[0]);
  text += "{{{ not a round\n";
  const std::string bad_path = cfg.output.dir + "/corrupt.ndjson";
  spit(bad_path, text);

  const Transcript lenient = read_transcript(bad_path, false);
  REQUIRE(lenient.corrupt_lines.size() == 1);
  CHECK(lenient.corrupt_lines[0] == 1002);  // header + 1000 rounds + garbage
  CHECK(lenient.rounds.size() == 1000);
  CHECK_THROWS_AS(read_transcript(bad_path, true), std::runtime_error);

  const AuditReport audit = audit_file(bad_path);
  CHECK_FALSE(audit.passed());
  CHECK(audit.corrupt_lines == std::vector<long>{1002});
}

TEST_CASE("long runs compress and still audit clean") {
  ExperimentConfig cfg;
  cfg.master_seed = 6;
  cfg.replications = 1;
  cfg.game.actions = {2};
  cfg.game.seed = 44;
  cfg.agents.model = AgentModel::Mwu;
  cfg.principal.horizon = 100001;
  cfg.principal_utility.kind = PrincipalUtilityKind::Zero;
  cfg.output.dir = fresh_dir("gzip");
  const ExperimentResult result = run_experiment(cfg, RunFamily::LearnNoRegret);
  REQUIRE(result.transcript_paths.size() == 1);
  CHECK(result.transcript_paths[0].size() > 3);
  CHECK(result.transcript_paths[0].substr(result.transcript_paths[0].size() - 3) == ".gz");
  const AuditReport audit = audit_file(result.transcript_paths[0]);
  CHECK(audit.passed());
  CHECK(audit.rounds == 100001);
}

TEST_CASE("the equilibrium pipeline writes a verifiable solution") {
  ExperimentConfig cfg = ExperimentConfig::from_file(config_path("cep.toml"));
  cfg.output.dir = fresh_dir("cep");
  const ExperimentResult result = run_experiment(cfg, RunFamily::ComputeCep);
  REQUIRE(!result.cep_path.empty());
  const CepSolution sol = cep_from_json(slurp(result.cep_path));
  CHECK(sol.mu.size() == 4);
  const GameBundle bundle = load_game(result.game_path);
  const CepReport report = verify_cep(bundle.game, bundle.principal_utility, sol);
  CHECK(report.passes);
  REQUIRE(result.summary_rows.size() == 2);
  const std::vector<std::string> row = split_csv(result.summary_rows[1]);
  REQUIRE(row.size() == 7);
  CHECK(row[3] == "0");  // not signal-independent
  CHECK(row[6] == "1");  // verification passed
  CHECK(std::stod(row[0]) == doctest::Approx(sol.objective).epsilon(1e-15));
}

TEST_CASE("game generation reports the digest of the saved file") {
  ExperimentConfig cfg;
  cfg.game.actions = {2, 3};
  cfg.game.seed = 9;
  cfg.output.dir = fresh_dir("gen");
  const ExperimentResult result = run_experiment(cfg, RunFamily::GenerateGame);
  const GameBundle bundle = load_game(result.game_path);
  CHECK(game_digest(bundle) == result.game_digest_value);
  REQUIRE(result.summary_rows.size() == 2);
  const std::vector<std::string> row = split_csv(result.summary_rows[1]);
  REQUIRE(row.size() == 3);
  CHECK(row[0] == std::to_string(result.game_digest_value));
  CHECK(row[1] == "2");
  CHECK(row[2] == "6");
  CHECK(bundle.game.action_counts == std::vector<int>{2, 3});
}
