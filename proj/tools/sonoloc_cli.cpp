// sonoloc command line: pool generation, MLP training, session evaluation,
// offline rendering, agent simulation and the WebSocket service.
//
// Exit codes: 0 success, 1 domain error, 2 usage or I/O error.

#include "sonoloc/agent.hpp"
#include "sonoloc/errors.hpp"
#include "sonoloc/geometry_io.hpp"
#include "sonoloc/metrics.hpp"
#include "sonoloc/mlp.hpp"
#include "sonoloc/service.hpp"
#include "sonoloc/session.hpp"
#include "sonoloc/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <pthread.h>

using namespace sonoloc;

namespace {

MappingConfig load_mapping(const std::string& path) {
  if (path.empty()) return {};
  const std::string text = read_text_file(path);
  try {
    return mapping_config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

ShapePool pool_for(const std::string& pool_path, std::size_t pool_n, std::uint64_t seed) {
  if (!pool_path.empty()) return load_pool(pool_path);
  return generate_pool(pool_n, seed);
}

int cmd_pool_gen(std::size_t n, std::uint64_t seed, double min_mm, double max_mm, const std::string& out) {
  if (n == 0) throw ValidationError("pool size must be positive");
  save_pool(generate_pool(n, seed, {min_mm, max_mm}), out);
  std::printf("wrote %zu shapes to %s\n", n, out.c_str());
  return 0;
}

int cmd_train(const std::string& data, const std::string& out, std::uint64_t seed,
              const std::vector<int>& hidden, TrainConfig cfg) {
  const TrainingSet set = load_training_csv(data);
  if (set.size() == 0) throw ValidationError(data + " has no rows");
  std::vector<int> sizes{static_cast<int>(set.inputs.front().size())};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(static_cast<int>(set.targets.front().size()));
  cfg.rng_seed = seed;
  const TrainResult r = train(Mlp::init(sizes, seed), set, cfg);
  save_mlp(r.model, out);
  std::printf("final mse %.9g after %d epochs\n", r.loss_history.back(), cfg.epochs);
  return 0;
}

int cmd_eval(const std::string& session_path, const std::string& pool_path, const std::string& out) {
  const SessionRecord rec = load_session(session_path);
  ShapePool pool;
  if (!pool_path.empty()) {
    pool = load_pool(pool_path);
  } else if (rec.pool) {
    pool = *rec.pool;
  } else {
    throw ValidationError("session has no pool snapshot; pass --pool");
  }
  const auto rows = evaluate_session(rec, pool);
  write_text_file(out, metrics_csv(rows));
  std::printf("scored %zu of %zu trials\n", rows.size(), rec.trials.size());
  return 0;
}

int cmd_render(const std::string& session_path, const std::string& trial_id, const std::string& pool_path,
               const std::string& config_path, const std::string& out) {
  const SessionRecord rec = load_session(session_path);
  const Trial* trial = nullptr;
  for (const auto& t : rec.trials)
    if (t.trial_id == trial_id) trial = &t;
  if (!trial) throw NotFoundError("no trial '" + trial_id + "' in " + session_path);
  const ShapePool pool = !pool_path.empty() ? load_pool(pool_path)
                         : rec.pool         ? *rec.pool
                                            : throw ValidationError("session has no pool snapshot; pass --pool");
  const MappingConfig mapping = !config_path.empty() ? load_mapping(config_path)
                                : rec.config         ? *rec.config
                                                     : throw ValidationError("session has no config snapshot; pass --config");
  const PcmBuffer pcm = render_trial_audio(*trial, pool.find(trial->shape_id).scene(), mapping);
  write_wav(pcm, out);
  std::printf("wrote %.3f s to %s\n", pcm.duration_s(), out.c_str());
  return 0;
}

int cmd_agent(const std::string& policy, const std::string& model, double noise_mm, std::size_t trials,
              std::uint64_t seed, const std::string& pool_path, std::size_t pool_n,
              const std::string& config_path, const std::string& out) {
  AgentConfig cfg;
  const auto p = parse_agent_policy(policy);
  if (!p) throw ValidationError("unknown policy '" + policy + "'");
  const auto m = parse_model_kind(model);
  if (!m) throw ValidationError("unknown model '" + model + "'");
  if (!(noise_mm >= 0)) throw ValidationError("noise must be non-negative");
  cfg.policy = *p;
  cfg.model = *m;
  cfg.noise_mm = noise_mm;
  const ShapePool pool = pool_for(pool_path, pool_n, seed);
  const SessionRecord rec = simulate_session(pool, load_mapping(config_path), cfg, trials, seed, "agent");
  if (!out.empty()) save_session(rec, out);

  double sum = 0.0;
  for (const auto& t : rec.trials) sum += t.metrics->dice;
  std::printf("%s: %zu trials, mean dice %.4f\n", rec.participant.c_str(), rec.trials.size(),
              rec.trials.empty() ? 0.0 : sum / static_cast<double>(rec.trials.size()));
  return 0;
}

int cmd_serve(const std::string& bind, const std::string& pool_path, const std::string& config_path,
              const std::string& out_dir, bool record_audio, std::uint64_t trial_seed) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ValidationError("--bind expects host:port");
  const std::string host = bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535) throw ValidationError("bad port in --bind " + bind);

  ServiceConfig cfg;
  cfg.pool = load_pool(pool_path);
  cfg.mapping = load_mapping(config_path);
  cfg.out_dir = out_dir;
  cfg.record_audio = record_audio;
  cfg.trial_seed = trial_seed;

  // Handle SIGINT/SIGTERM synchronously on this thread.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  Server server(std::move(cfg), host, static_cast<unsigned short>(port));
  server.start();
  std::printf("listening on ws://%s:%u\n", host.c_str(), server.port());
  std::fflush(stdout);
  int sig = 0;
  sigwait(&sigs, &sig);
  server.stop();
  const auto lat = server.config().latency;
  std::printf("stopped; %zu probes, p99 %.3f ms\n", lat->samples().size(), lat->percentile(99));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sonoloc: shape sonification and localization-task engine"};
  app.require_subcommand(1);

  auto* pool = app.add_subcommand("pool", "shape pools");
  pool->require_subcommand(1);
  auto* gen = pool->add_subcommand("gen", "generate a random shape pool");
  std::size_t n = 15;
  std::uint64_t seed = 1;
  double min_mm = 20, max_mm = 50;
  std::string out;
  gen->add_option("--n", n, "number of shapes")->required();
  gen->add_option("--seed", seed, "RNG seed")->required();
  gen->add_option("--min-mm", min_mm, "smallest major diameter");
  gen->add_option("--max-mm", max_mm, "largest major diameter");
  gen->add_option("--out", out, "pool JSON")->required();

  auto* tr = app.add_subcommand("train", "fit an MLP to a training CSV (in_* / out_* columns)");
  std::string data;
  std::vector<int> hidden{16, 16};
  TrainConfig tcfg;
  tr->add_option("--data", data)->required();
  tr->add_option("--out", out)->required();
  tr->add_option("--seed", seed);
  tr->add_option("--hidden", hidden, "hidden layer widths")->delimiter(',');
  tr->add_option("--epochs", tcfg.epochs);
  tr->add_option("--lr", tcfg.learning_rate);
  tr->add_option("--batch", tcfg.batch_size);

  auto* ev = app.add_subcommand("eval", "score a session into a metrics CSV");
  std::string session, pool_path, config_path, trial_id;
  ev->add_option("--session", session)->required();
  ev->add_option("--pool", pool_path, "defaults to the session's pool snapshot");
  ev->add_option("--out", out)->required();

  auto* rd = app.add_subcommand("render", "render what was heard during a trial to WAV");
  rd->add_option("--session", session)->required();
  rd->add_option("--trial", trial_id)->required();
  rd->add_option("--pool", pool_path);
  rd->add_option("--config", config_path);
  rd->add_option("--out", out)->required();

  auto* ag = app.add_subcommand("agent", "simulate a scripted participant (not human data)");
  std::string policy = "margin-following", model = "sine";
  double noise_mm = 0;
  std::size_t trials = 15, pool_n = 15;
  ag->add_option("--policy", policy)->check(CLI::IsMember({"seed-only", "margin-following"}));
  ag->add_option("--model", model);
  ag->add_option("--noise-mm", noise_mm);
  ag->add_option("--trials", trials);
  ag->add_option("--seed", seed);
  ag->add_option("--pool", pool_path, "pool JSON; otherwise one is generated from --seed");
  ag->add_option("--pool-n", pool_n);
  ag->add_option("--config", config_path);
  ag->add_option("--out", out, "session JSONL");

  auto* sv = app.add_subcommand("serve", "run the WebSocket session service");
  std::string bind = "127.0.0.1:8765", out_dir = ".";
  bool record_audio = false;
  sv->add_option("--bind", bind, "host:port");
  sv->add_option("--pool", pool_path)->required();
  sv->add_option("--config", config_path);
  sv->add_option("--out-dir", out_dir);
  sv->add_flag("--record-audio", record_audio);
  sv->add_option("--trial-seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_pool_gen(n, seed, min_mm, max_mm, out);
    if (tr->parsed()) return cmd_train(data, out, seed, hidden, tcfg);
    if (ev->parsed()) return cmd_eval(session, pool_path, out);
    if (rd->parsed()) return cmd_render(session, trial_id, pool_path, config_path, out);
    if (ag->parsed())
      return cmd_agent(policy, model, noise_mm, trials, seed, pool_path, pool_n, config_path, out);
    if (sv->parsed()) return cmd_serve(bind, pool_path, config_path, out_dir, record_audio, seed);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
