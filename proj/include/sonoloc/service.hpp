#pragma once

// Real-time session endpoint. SessionEngine is the per-connection protocol
// state machine (one JSON object in, JSON objects out); Server carries it over
// WebSocket text frames.

#include "sonoloc/geometry_io.hpp"
#include "sonoloc/session.hpp"
#include "sonoloc/sonification.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace sonoloc {

// Server-side processing times of probe messages, in milliseconds.
class LatencyRecorder {
 public:
  void add(double ms);
  std::vector<double> samples() const;
  double percentile(double p) const;  // p in [0,100]; 0 when empty
  void clear();

 private:
  mutable std::mutex mu_;
  std::vector<double> samples_;
};

struct ServiceConfig {
  ShapePool pool;
  MappingConfig mapping;
  std::filesystem::path out_dir = ".";
  bool record_audio = false;
  std::uint64_t trial_seed = 1;  // order of shapes when start_trial omits shape_id
  GridSpec grid = sheet_grid();
  std::shared_ptr<LatencyRecorder> latency = std::make_shared<LatencyRecorder>();
};

class SessionEngine {
 public:
  SessionEngine(std::shared_ptr<const ServiceConfig> cfg, std::function<std::string()> next_session_id);
  ~SessionEngine();

  // Handles one client frame and returns the reply frames in order.
  std::vector<std::string> handle_text(std::string_view frame);
  std::vector<nlohmann::json> handle(const nlohmann::json& msg);

  // Flushes completed trials and records an unfinished trial as partial.
  // Safe to call repeatedly. Returns false if writing failed; in-memory state
  // is kept either way.
  bool shutdown();

  bool session_active() const { return record_.has_value(); }
  const std::optional<SessionRecord>& record() const { return record_; }
  std::filesystem::path session_path() const;

 private:
  nlohmann::json on_start_session(const nlohmann::json& msg);
  nlohmann::json on_start_trial(const nlohmann::json& msg);
  nlohmann::json on_probe(const nlohmann::json& msg);
  nlohmann::json on_mark_margin(const nlohmann::json& msg);
  nlohmann::json on_mark_seed(const nlohmann::json& msg);
  std::vector<nlohmann::json> on_finish_trial();
  nlohmann::json on_end_session();

  bool append_line(const std::string& line);
  bool persist_all();

  std::shared_ptr<const ServiceConfig> cfg_;
  std::function<std::string()> next_session_id_;
  std::optional<SessionRecord> record_;
  std::optional<Trial> active_;
  std::optional<Scene> active_scene_;
  std::vector<std::string> shape_order_;
  std::size_t next_shape_ = 0;
  std::size_t trial_counter_ = 0;
  bool file_dirty_ = false;
  bool closed_ = false;
};

nlohmann::json error_message(std::string_view code, std::string_view message);

class Server {
 public:
  // Port 0 picks an ephemeral port; see port().
  Server(ServiceConfig cfg, std::string host, unsigned short port);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const { return port_; }
  const ServiceConfig& config() const { return *cfg_; }

  void start();  // accept loop on a background thread
  void run();    // accept loop on the calling thread, returns after stop()
  void stop();   // idempotent; persists every open session

 private:
  struct Impl;
  std::shared_ptr<const ServiceConfig> cfg_;
  std::unique_ptr<Impl> impl_;
  unsigned short port_ = 0;
  std::thread accept_thread_;
  std::atomic<bool> stopping_{false};
};

}  // namespace sonoloc
