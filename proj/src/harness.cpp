#include "steerlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "steerlab/agents.hpp"
#include "steerlab/principal_noregret.hpp"
#include "steerlab/principal_rationalizable.hpp"
#include "steerlab/rng.hpp"

namespace steerlab {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_vector(std::string& out, const Eigen::VectorXd& v) {
  out += '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += fmt(v(i));
  }
  out += ']';
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string replication_tag(int r) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "r%03d", r);
  return buf;
}

}  // namespace

const char* to_string(RunFamily family) {
  switch (family) {
    case RunFamily::GenerateGame: return "generate-game";
    case RunFamily::LearnRationalizable: return "learn-rationalizable";
    case RunFamily::LearnNoRegret: return "learn-noregret";
    case RunFamily::MinPayment: return "min-payment";
    case RunFamily::ComputeCep: return "compute-cep";
    case RunFamily::Steer: return "steer";
  }
  return "unknown";
}

std::string header_to_json(const TranscriptHeader& h) {
  json j;
  j["version"] = h.version;
  j["command"] = h.command;
  j["master_seed"] = h.master_seed;
  j["replication"] = h.replication;
  j["seed"] = h.seed;
  j["game"] = json::parse(h.game_json);
  j["digest"] = h.digest;
  j["agent_model"] = h.agent_model;
  j["tie_policy"] = h.tie_policy;
  j["epsilon"] = h.epsilon;
  j["T"] = h.horizon;
  j["L"] = h.phase_length;
  j["rho"] = h.rho;
  j["epsilon_cap"] = h.epsilon_cap;
  j["penalty_payment"] = h.penalty_payment;
  return j.dump();
}

TranscriptHeader header_from_json(const std::string& text) {
  const json j = json::parse(text);
  TranscriptHeader h;
  h.version = j.at("version").get<int>();
  h.command = j.at("command").get<std::string>();
  h.master_seed = j.at("master_seed").get<std::uint64_t>();
  h.replication = j.at("replication").get<int>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.game_json = j.at("game").dump();
  h.digest = j.at("digest").get<std::uint64_t>();
  h.agent_model = j.at("agent_model").get<std::string>();
  h.tie_policy = j.at("tie_policy").get<std::string>();
  h.epsilon = j.at("epsilon").get<double>();
  h.horizon = j.at("T").get<long>();
  h.phase_length = j.at("L").get<long>();
  h.rho = j.at("rho").get<double>();
  h.epsilon_cap = j.at("epsilon_cap").get<double>();
  h.penalty_payment = j.at("penalty_payment").get<double>();
  return h;
}

std::string round_to_json(const RoundRecord& r) {
  const std::size_t n = r.signals.size();
  std::string out;
  out.reserve(96 + 24 * n);
  out += "{\"t\":";
  out += std::to_string(r.t);
  out += ",\"stage\":";
  out += std::to_string(r.stage);
  out += ",\"sig\":[";
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out += ',';
    out += '"';
    out += r.signals[i].encode();
    out += '"';
  }
  out += "],\"act\":[";
  for (std::size_t i = 0; i < r.actions.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(r.actions[i]);
  }
  out += "],\"pay\":[";
  for (std::size_t i = 0; i < r.payment_vectors.size(); ++i) {
    if (i > 0) out += ',';
    append_vector(out, r.payment_vectors[i]);
  }
  out += "],\"paid\":";
  append_vector(out, r.realized_payment);
  out += ",\"u\":";
  append_vector(out, r.realized_total);
  out += ",\"u0\":";
  out += fmt(r.principal_utility);
  out += '}';
  return out;
}

RoundRecord round_from_json(const std::string& line) {
  const json j = json::parse(line);
  RoundRecord r;
  r.t = j.at("t").get<long>();
  r.stage = j.at("stage").get<int>();
  for (const auto& s : j.at("sig")) {
    r.signals.push_back(Signal::decode(s.get<std::string>()));
  }
  for (const auto& a : j.at("act")) {
    r.actions.push_back(a.get<int>());
  }
  for (const auto& pv : j.at("pay")) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(pv.size()));
    Eigen::Index k = 0;
    for (const auto& x : pv) v(k++) = x.get<double>();
    r.payment_vectors.push_back(std::move(v));
  }
  const auto read_vec = [&](const char* key) {
    const auto& arr = j.at(key);
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    Eigen::Index k = 0;
    for (const auto& x : arr) v(k++) = x.get<double>();
    return v;
  };
  r.realized_payment = read_vec("paid");
  r.realized_total = read_vec("u");
  r.principal_utility = j.at("u0").get<double>();
  return r;
}

TranscriptWriter::TranscriptWriter(const std::string& path, const TranscriptHeader& header,
                                   long expected_rounds)
    : path_(path) {
  const bool compress = should_compress(expected_rounds);
  if (compress) path_ += ".gz";
  // Mode "T" writes the file transparently (no gzip framing), so one handle
  // type covers both forms and readers always gzopen.
  gzFile f = gzopen(path_.c_str(), compress ? "wb6" : "wT");
  if (f == nullptr) throw std::runtime_error("TranscriptWriter: cannot open " + path_);
  file_ = f;
  write_line(header_to_json(header));
}

TranscriptWriter::~TranscriptWriter() {
  try {
    close();
  } catch (...) {
    // Destructors must not throw; an explicit close() reports errors.
  }
}

void TranscriptWriter::write_line(const std::string& line) {
  if (file_ == nullptr) throw std::logic_error("TranscriptWriter: write after close");
  gzFile f = static_cast<gzFile>(file_);
  if (gzwrite(f, line.data(), static_cast<unsigned>(line.size())) !=
          static_cast<int>(line.size()) ||
      gzwrite(f, "\n", 1) != 1) {
    throw std::runtime_error("TranscriptWriter: write failed on " + path_);
  }
}

void TranscriptWriter::on_round(const RoundRecord& record) {
  write_line(round_to_json(record));
  ++rounds_;
}

void TranscriptWriter::close() {
  if (file_ == nullptr) return;
  gzFile f = static_cast<gzFile>(file_);
  file_ = nullptr;
  if (gzclose(f) != Z_OK) {
    throw std::runtime_error("TranscriptWriter: close failed on " + path_);
  }
}

Transcript read_transcript(const std::string& path, bool strict) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw std::runtime_error("read_transcript: cannot open " + path);
  std::string text;
  char buf[1 << 16];
  int got = 0;
  while ((got = gzread(f, buf, sizeof(buf))) > 0) text.append(buf, static_cast<std::size_t>(got));
  const bool read_error = got < 0;
  gzclose(f);
  if (read_error) throw std::runtime_error("read_transcript: read failed on " + path);

  Transcript t;
  bool have_header = false;
  int n = 0;
  std::size_t pos = 0;
  long line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!have_header) {
      try {
        t.header = header_from_json(line);
        t.bundle = game_from_json(t.header.game_json);
        t.bundle.game.validate();
      } catch (const std::exception& e) {
        throw std::runtime_error(path + ":1: bad transcript header: " + e.what());
      }
      have_header = true;
      n = t.bundle.game.num_agents;
      continue;
    }
    try {
      RoundRecord r = round_from_json(line);
      if (static_cast<int>(r.signals.size()) != n || static_cast<int>(r.actions.size()) != n ||
          static_cast<int>(r.payment_vectors.size()) != n ||
          r.realized_payment.size() != n || r.realized_total.size() != n) {
        throw std::runtime_error("row shape does not match the game");
      }
      for (int i = 0; i < n; ++i) {
        if (r.actions[i] < 0 || r.actions[i] >= t.bundle.game.action_counts[i] ||
            r.payment_vectors[i].size() != t.bundle.game.action_counts[i]) {
          throw std::runtime_error("row entries out of range");
        }
      }
      t.rounds.push_back(std::move(r));
    } catch (const std::exception& e) {
      if (strict) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
      }
      t.corrupt_lines.push_back(line_no);
    }
  }
  if (!have_header) throw std::runtime_error(path + ": empty transcript");
  return t;
}

namespace {

// Mirror of the per-signal learning state, folded from transcript rows with
// the same arithmetic the live agent applies, so peaks match bit-for-bit.
struct ReplayLearner {
  Eigen::VectorXd cumulative;
  Eigen::VectorXd ledger;
  double peak = 0.0;
  CounterRng rng;
};

}  // namespace

AuditReport audit_transcript(const Transcript& t) {
  AuditReport rep;
  rep.rounds = static_cast<long>(t.rounds.size());
  rep.corrupt_lines = t.corrupt_lines;
  const GameBundle& bundle = t.bundle;
  const NormalFormGame& game = bundle.game;
  const int n = game.num_agents;
  rep.digest_ok = game_digest(bundle) == t.header.digest;
  rep.ledger = evaluate_objective(t.rounds);
  rep.pin_violations_per_agent.assign(n, 0);
  rep.peak_regret_per_agent.assign(n, 0.0);
  rep.replay_ok = true;

  const bool is_mwu = t.header.agent_model == "mwu";
  std::vector<double> eta(n, 0.0);
  std::vector<std::unordered_map<Signal, ReplayLearner, SignalHash>> learners(n);
  std::vector<std::unique_ptr<RationalizableAgent>> rational;
  if (is_mwu) {
    const long horizon = std::max<long>(1, t.header.horizon);
    for (int i = 0; i < n; ++i) {
      eta[i] = std::sqrt(std::log(static_cast<double>(game.action_counts[i])) /
                         static_cast<double>(horizon));
    }
  } else {
    const TiePolicy policy = tie_policy_from_string(
        t.header.tie_policy.empty() ? "greedy-uniform" : t.header.tie_policy);
    for (int i = 0; i < n; ++i) {
      rational.push_back(std::make_unique<RationalizableAgent>(game, i, policy));
    }
  }

  std::vector<int> counterfactual;
  const std::vector<Eigen::VectorXd> no_offers;
  for (const RoundRecord& r : t.rounds) {
    counterfactual = r.actions;
    bool value_bad = false;
    for (int i = 0; i < n; ++i) {
      const int a = r.actions[i];
      if (r.signals[i].kind == Signal::Kind::Pin && a != r.signals[i].action) {
        ++rep.pin_violations_per_agent[i];
      }
      const int m = game.action_counts[i];
      Eigen::VectorXd total(m);
      for (int b = 0; b < m; ++b) {
        counterfactual[i] = b;
        total(b) = game.utility(i, game.index_of(counterfactual)) + r.payment_vectors[i](b);
      }
      counterfactual[i] = a;
      if (r.payment_vectors[i](a) != r.realized_payment(i) || total(a) != r.realized_total(i)) {
        value_bad = true;
      }

      int drawn = a;
      if (is_mwu) {
        auto it = learners[i].find(r.signals[i]);
        if (it == learners[i].end()) {
          ReplayLearner fresh;
          fresh.cumulative = Eigen::VectorXd::Zero(m);
          fresh.ledger = Eigen::VectorXd::Zero(m);
          fresh.rng = CounterRng(t.header.seed,
                                 "agent" + std::to_string(i) + "/" + r.signals[i].encode());
          it = learners[i].emplace(r.signals[i], std::move(fresh)).first;
        }
        ReplayLearner& learner = it->second;
        drawn = learner.rng.sample_discrete(mwu_strategy(learner.cumulative, eta[i]));
        learner.cumulative += total;
        learner.ledger.array() += total.array() - total(a);
        learner.peak = std::max(learner.peak, learner.ledger.maxCoeff());
        rep.peak_regret_per_agent[i] = std::max(rep.peak_regret_per_agent[i], learner.peak);
      } else {
        const std::vector<Eigen::VectorXd>& offers =
            r.stage == 0 ? r.payment_vectors : no_offers;
        drawn = rational[i]->act(r.signals[i], offers, r.t);
      }
      if (drawn != a && rep.replay_ok) {
        rep.replay_ok = false;
        rep.first_mismatch_round = r.t;
        rep.first_mismatch_agent = i;
      }
    }
    const double expected_u0 =
        bundle.has_principal() ? bundle.principal_utility(game.index_of(r.actions)) : 0.0;
    if (expected_u0 != r.principal_utility) value_bad = true;
    if (value_bad) rep.value_mismatch_rounds.push_back(r.t);
  }

  for (int i = 0; i < n; ++i) {
    rep.max_peak_regret = std::max(rep.max_peak_regret, rep.peak_regret_per_agent[i]);
  }
  rep.regret_constant = std::max(0.0, rep.max_peak_regret) /
                        std::sqrt(static_cast<double>(std::max<long>(1, rep.rounds)));
  return rep;
}

AuditReport audit_file(const std::string& path) {
  return audit_transcript(read_transcript(path, /*strict=*/false));
}

GameBundle build_game_bundle(const ExperimentConfig& config) {
  GameBundle bundle;
  if (config.game.source == GameSource::File) {
    bundle = load_game(config.game.path);
  } else {
    switch (config.game.kind) {
      case GameKind::Random:
        bundle.game = generate_random_game(config.game.actions, config.game.seed);
        break;
      case GameKind::LowerBound:
        bundle.game =
            generate_lower_bound_game(config.game.actions, config.game.epsilon, config.game.seed);
        break;
      case GameKind::SignalDependence:
        bundle = generate_signal_dependence_game(config.game.penalty);
        break;
    }
  }
  switch (config.principal_utility.kind) {
    case PrincipalUtilityKind::Zero:
      bundle.principal_utility = Eigen::VectorXd::Zero(bundle.game.num_profiles());
      break;
    case PrincipalUtilityKind::Random: {
      CounterRng rng(config.principal_utility.seed, "principal-utility");
      Eigen::VectorXd u0(bundle.game.num_profiles());
      for (Eigen::Index k = 0; k < u0.size(); ++k) u0(k) = rng.next_double();
      bundle.principal_utility = std::move(u0);
      break;
    }
    case PrincipalUtilityKind::FromGame:
      if (!bundle.has_principal()) {
        throw ConfigError("principal_utility.kind = 'game' needs a game that carries one");
      }
      break;
  }
  return bundle;
}

namespace {

struct ReplicationOutput {
  std::string summary_row;
  std::string transcript_path;
};

TranscriptHeader make_header(const ExperimentConfig& config, const GameBundle& bundle,
                             RunFamily family, int r) {
  TranscriptHeader h;
  h.command = to_string(family);
  h.master_seed = config.master_seed;
  h.replication = r;
  h.seed = derive_replication_seed(config.master_seed, r);
  h.game_json = game_to_json(bundle);
  h.digest = game_digest(bundle);
  h.agent_model = to_string(config.agents.model);
  h.tie_policy = to_string(config.agents.policy);
  h.epsilon = config.principal.epsilon;
  h.epsilon_cap = config.principal.epsilon_cap;
  h.penalty_payment = config.principal.penalty_payment;
  return h;
}

std::vector<Agent*> make_agents(const ExperimentConfig& config, const NormalFormGame& game,
                                std::uint64_t seed, long horizon,
                                std::vector<std::unique_ptr<Agent>>& owned) {
  std::vector<Agent*> out;
  for (int i = 0; i < game.num_agents; ++i) {
    if (config.agents.model == AgentModel::Mwu) {
      owned.push_back(std::make_unique<MwuAgent>(i, game.action_counts[i], horizon, seed));
    } else {
      owned.push_back(std::make_unique<RationalizableAgent>(game, i, config.agents.policy));
    }
    out.push_back(owned.back().get());
  }
  return out;
}

// Forwards rounds to the transcript and accumulates the per-round metrics
// CSV for steering runs.
class MetricsSink : public RoundSink {
 public:
  MetricsSink(RoundSink* next, int num_agents) : next_(next) {
    csv = "t,stage,u0,pay_total,F_cum";
    for (int i = 0; i < num_agents; ++i) csv += ",disobey_" + std::to_string(i);
    csv += "\n";
  }

  void on_round(const RoundRecord& rec) override {
    if (next_ != nullptr) next_->on_round(rec);
    ledger_add_round(ledger_, rec);
    csv += std::to_string(rec.t);
    csv += ',';
    csv += std::to_string(rec.stage);
    csv += ',';
    csv += fmt(rec.principal_utility);
    csv += ',';
    csv += fmt(rec.realized_payment.sum());
    csv += ',';
    csv += fmt(ledger_.average_objective());
    for (std::size_t i = 0; i < rec.signals.size(); ++i) {
      const bool disobeyed = rec.stage != 0 &&
                             rec.signals[i].kind == Signal::Kind::Recommend &&
                             rec.actions[i] != rec.signals[i].action;
      csv += disobeyed ? ",1" : ",0";
    }
    csv += '\n';
  }

  std::string csv;

 private:
  RoundSink* next_;
  ObjectiveLedger ledger_;
};

ReplicationOutput run_learn_rationalizable(const ExperimentConfig& config,
                                           const GameBundle& bundle, const std::string& dir,
                                           int r) {
  const NormalFormGame& game = bundle.game;
  const double eps = config.principal.epsilon;
  TranscriptHeader h = make_header(config, bundle, RunFamily::LearnRationalizable, r);

  long expected = 0;
  for (int i = 0; i < game.num_agents; ++i) {
    expected += static_cast<long>(bisection_probes(eps)) * game.action_counts[i] *
                OpponentIndexer(game, i).count();
  }

  std::vector<std::unique_ptr<Agent>> owned;
  std::vector<Agent*> agents = make_agents(config, game, h.seed, 0, owned);
  const std::string base =
      (std::filesystem::path(dir) / ("transcript_" + replication_tag(r) + ".ndjson")).string();
  TranscriptWriter writer(base, h, expected);
  LearnResult res;
  if (game.num_agents == 1) {
    SingleAgentBisectionPrincipal principal(game.action_counts[0], eps);
    run_protocol(principal, game, &bundle.principal_utility, agents, &writer);
    res = principal.result();
  } else {
    MultiAgentBisectionPrincipal principal(game.action_counts, eps);
    run_protocol(principal, game, &bundle.principal_utility, agents, &writer);
    res = principal.result();
  }
  writer.close();

  const DistanceReport dist = strategic_distance(game, res.estimates.values);
  ReplicationOutput out;
  out.transcript_path = writer.path();
  out.summary_row = std::to_string(r) + "," + std::to_string(h.seed) + "," +
                    std::to_string(res.rounds_used) + "," + fmt(res.total_payment) + "," +
                    fmt(dist.max_distance) + ",0";
  return out;
}

ReplicationOutput run_min_payment(const ExperimentConfig& config, const GameBundle& bundle,
                                  const std::string& dir, int r) {
  const NormalFormGame& game = bundle.game;
  const double eps = config.principal.epsilon;
  TranscriptHeader h = make_header(config, bundle, RunFamily::MinPayment, r);

  const long steps_bound = static_cast<long>(std::ceil((1.0 + eps) / eps)) + 2;
  const long expected = 1 + (game.action_counts[0] - 1) * steps_bound;

  std::vector<std::unique_ptr<Agent>> owned;
  std::vector<Agent*> agents = make_agents(config, game, h.seed, 0, owned);
  const std::string base =
      (std::filesystem::path(dir) / ("transcript_" + replication_tag(r) + ".ndjson")).string();
  TranscriptWriter writer(base, h, expected);
  MinPaymentPrincipal principal(game.action_counts[0], eps);
  run_protocol(principal, game, &bundle.principal_utility, agents, &writer);
  const LearnResult res = principal.result();
  writer.close();

  const DistanceReport dist = strategic_distance(game, res.estimates.values);
  long escalation_total = 0;
  for (long k : res.escalation_steps) escalation_total += k;
  ReplicationOutput out;
  out.transcript_path = writer.path();
  out.summary_row = std::to_string(r) + "," + std::to_string(h.seed) + "," +
                    std::to_string(res.rounds_used) + "," + fmt(res.total_payment) + "," +
                    fmt(dist.max_distance) + "," + std::to_string(escalation_total);
  return out;
}

ReplicationOutput run_learn_noregret(const ExperimentConfig& config, const GameBundle& bundle,
                                     const std::string& dir, int r) {
  const NormalFormGame& game = bundle.game;
  TranscriptHeader h = make_header(config, bundle, RunFamily::LearnNoRegret, r);
  const std::string base =
      (std::filesystem::path(dir) / ("transcript_" + replication_tag(r) + ".ndjson")).string();

  NoRegretLearnResult res;
  std::string transcript_path;
  if (game.num_agents == 1) {
    const long rounds = config.principal.horizon;
    h.horizon = rounds;
    std::vector<std::unique_ptr<Agent>> owned;
    std::vector<Agent*> agents = make_agents(config, game, h.seed, rounds, owned);
    TranscriptWriter writer(base, h, rounds);
    SingleAgentGdPrincipal principal(game.action_counts[0], rounds);
    run_protocol(principal, game, &bundle.principal_utility, agents, &writer);
    res = principal.result();
    writer.close();
    transcript_path = writer.path();
  } else {
    const long phase_length = config.principal.phase_length > 0
                                  ? config.principal.phase_length
                                  : default_phase_length(config.principal.epsilon);
    MultiAgentGdPrincipal principal(game.action_counts, phase_length);
    const long rounds = principal.total_rounds();
    h.horizon = rounds;
    h.phase_length = phase_length;
    std::vector<std::unique_ptr<Agent>> owned;
    std::vector<Agent*> agents = make_agents(config, game, h.seed, rounds, owned);
    TranscriptWriter writer(base, h, rounds);
    run_protocol(principal, game, &bundle.principal_utility, agents, &writer);
    res = principal.result();
    writer.close();
    transcript_path = writer.path();
  }

  std::string phases = "replication,phase,agent,opp_index,rounds,pin_violations,principal_regret\n";
  for (const PhaseDiagnostics& ph : res.phases) {
    phases += std::to_string(r) + "," + std::to_string(ph.phase) + "," +
              std::to_string(ph.agent) + "," + std::to_string(ph.opp_index) + "," +
              std::to_string(ph.rounds) + "," + std::to_string(ph.pin_violations) + "," +
              fmt(ph.principal_regret) + "\n";
  }
  write_text_file(
      (std::filesystem::path(dir) / ("phases_" + replication_tag(r) + ".csv")).string(), phases);

  const DistanceReport dist = strategic_distance(game, res.estimates.values);
  ReplicationOutput out;
  out.transcript_path = transcript_path;
  out.summary_row = std::to_string(r) + "," + std::to_string(h.seed) + "," +
                    std::to_string(res.rounds_used) + "," + fmt(res.total_payment) + "," +
                    fmt(dist.max_distance);
  return out;
}

ReplicationOutput run_steer(const ExperimentConfig& config, const GameBundle& bundle,
                            const std::string& dir, int r) {
  const NormalFormGame& game = bundle.game;
  SteeringConfig sc;
  sc.total_rounds = config.principal.horizon;
  sc.phase_length = config.principal.phase_length;
  sc.rho = config.principal.rho;
  sc.epsilon_cap = config.principal.epsilon_cap;
  sc.penalty_payment = config.principal.penalty_payment;
  sc.validate(game.action_counts);

  TranscriptHeader h = make_header(config, bundle, RunFamily::Steer, r);
  h.horizon = sc.total_rounds;
  h.phase_length = sc.resolved_phase_length();
  h.rho = sc.resolved_rho();

  std::vector<std::unique_ptr<Agent>> owned;
  std::vector<Agent*> agents = make_agents(config, game, h.seed, sc.total_rounds, owned);
  const std::string base =
      (std::filesystem::path(dir) / ("transcript_" + replication_tag(r) + ".ndjson")).string();
  TranscriptWriter writer(base, h, sc.total_rounds);
  MetricsSink metrics(&writer, game.num_agents);
  const SteeringOutcome outcome =
      steer(agents, game, bundle.principal_utility, sc, h.seed, &metrics);
  writer.close();
  write_text_file(
      (std::filesystem::path(dir) / ("rounds_" + replication_tag(r) + ".csv")).string(),
      metrics.csv);

  ReplicationOutput out;
  out.transcript_path = writer.path();
  out.summary_row = std::to_string(r) + "," + std::to_string(h.seed) + "," +
                    std::to_string(outcome.ledger.total_rounds()) + "," +
                    std::to_string(outcome.ledger.learning.rounds) + "," +
                    fmt(outcome.epsilon_used) + "," + fmt(outcome.ledger.average_objective()) +
                    "," + fmt(outcome.cep.objective) + "," +
                    std::to_string(outcome.ledger.disobedient_rounds) + "," +
                    std::to_string(outcome.dominance_flagged_rounds);
  return out;
}

ReplicationOutput run_replication(const ExperimentConfig& config, const GameBundle& bundle,
                                  RunFamily family, const std::string& dir, int r) {
  switch (family) {
    case RunFamily::LearnRationalizable:
      return run_learn_rationalizable(config, bundle, dir, r);
    case RunFamily::MinPayment:
      return run_min_payment(config, bundle, dir, r);
    case RunFamily::LearnNoRegret:
      return run_learn_noregret(config, bundle, dir, r);
    case RunFamily::Steer:
      return run_steer(config, bundle, dir, r);
    default:
      throw std::logic_error("run_replication: family has no protocol pipeline");
  }
}

std::string summary_header(RunFamily family) {
  switch (family) {
    case RunFamily::GenerateGame:
      return "digest,num_agents,num_profiles";
    case RunFamily::LearnRationalizable:
    case RunFamily::MinPayment:
      return "replication,seed,rounds,total_payment,distance_max,escalation_total";
    case RunFamily::LearnNoRegret:
      return "replication,seed,rounds,total_payment,distance_max";
    case RunFamily::ComputeCep:
      return "objective,epsilon,payment_cap,signal_independent,expected_total_payment,"
             "max_violation,passes";
    case RunFamily::Steer:
      return "replication,seed,rounds,learning_rounds,epsilon_used,objective_avg,cep_objective,"
             "disobedient_rounds,dominance_flagged_rounds";
  }
  return "";
}

void validate_family(const ExperimentConfig& config, RunFamily family) {
  const bool needs_rationalizable =
      family == RunFamily::LearnRationalizable || family == RunFamily::MinPayment;
  const bool needs_mwu = family == RunFamily::LearnNoRegret || family == RunFamily::Steer;
  if (needs_rationalizable && config.agents.model != AgentModel::Rationalizable) {
    throw ConfigError(std::string(to_string(family)) +
                      " requires agents.model = 'rationalizable'");
  }
  if (needs_mwu && config.agents.model != AgentModel::Mwu) {
    throw ConfigError(std::string(to_string(family)) + " requires agents.model = 'mwu'");
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, RunFamily family) {
  validate_family(config, family);
  GameBundle bundle = build_game_bundle(config);
  bundle.game.validate();
  if (family == RunFamily::MinPayment && bundle.game.num_agents != 1) {
    throw ConfigError("min-payment runs on single-agent games");
  }

  namespace fs = std::filesystem;
  fs::create_directories(config.output.dir);
  ExperimentResult result;
  result.output_dir = config.output.dir;
  result.game_digest_value = game_digest(bundle);
  result.game_path = (fs::path(config.output.dir) / "game.json").string();
  save_game(result.game_path, bundle);

  std::vector<std::string> rows;
  std::vector<std::string> transcript_paths;

  if (family == RunFamily::GenerateGame) {
    rows.push_back(std::to_string(result.game_digest_value) + "," +
                   std::to_string(bundle.game.num_agents) + "," +
                   std::to_string(bundle.game.num_profiles()));
  } else if (family == RunFamily::ComputeCep) {
    const CepSolution sol =
        config.cep.signal_independent
            ? solve_optimal_cep_signal_independent(bundle.game, bundle.principal_utility,
                                                   config.cep.epsilon)
            : solve_optimal_cep(bundle.game, bundle.principal_utility, config.cep.epsilon,
                                config.cep.payment_cap);
    const CepReport report = verify_cep(bundle.game, bundle.principal_utility, sol);
    result.cep_path = (fs::path(config.output.dir) / "cep.json").string();
    write_text_file(result.cep_path, cep_to_json(sol));
    rows.push_back(fmt(sol.objective) + "," + fmt(sol.epsilon) + "," +
                   fmt(config.cep.payment_cap) + "," +
                   (config.cep.signal_independent ? "1" : "0") + "," +
                   fmt(sol.expected_total_payment()) + "," + fmt(report.max_violation) + "," +
                   (report.passes ? "1" : "0"));
  } else {
    const int replications = config.replications;
    rows.assign(replications, "");
    transcript_paths.assign(replications, "");

    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&] {
      for (;;) {
        if (failed.load()) return;
        const int r = next.fetch_add(1);
        if (r >= replications) return;
        try {
          ReplicationOutput out =
              run_replication(config, bundle, family, config.output.dir, r);
          rows[r] = std::move(out.summary_row);
          transcript_paths[r] = std::move(out.transcript_path);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    };
    const unsigned hardware = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers = std::min<unsigned>(static_cast<unsigned>(replications), hardware);
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::string csv = summary_header(family) + "\n";
  for (const std::string& row : rows) csv += row + "\n";
  result.summary_path = (fs::path(config.output.dir) / "summary.csv").string();
  write_text_file(result.summary_path, csv);

  result.summary_rows.push_back(summary_header(family));
  for (std::string& row : rows) result.summary_rows.push_back(std::move(row));
  result.transcript_paths = std::move(transcript_paths);
  return result;
}

}  // namespace steerlab
