#include "sonoloc/service.hpp"

#include "sonoloc/errors.hpp"
#include "sonoloc/synth.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <list>

namespace sonoloc {

using nlohmann::json;

void LatencyRecorder::add(double ms) {
  std::lock_guard lock(mu_);
  samples_.push_back(ms);
}

std::vector<double> LatencyRecorder::samples() const {
  std::lock_guard lock(mu_);
  return samples_;
}

double LatencyRecorder::percentile(double p) const {
  auto s = samples();
  if (s.empty()) return 0.0;
  std::sort(s.begin(), s.end());
  const double rank = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (rank - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

void LatencyRecorder::clear() {
  std::lock_guard lock(mu_);
  samples_.clear();
}

json error_message(std::string_view code, std::string_view message) {
  return {{"type", "error"}, {"code", code}, {"message", message}};
}

namespace {

// Raised inside handlers to produce an error reply.
struct ProtocolError {
  std::string code;
  std::string message;
};

double number_field(const json& msg, const char* key) {
  const auto it = msg.find(key);
  if (it == msg.end() || !it->is_number())
    throw ProtocolError{"malformed_message", std::string("field '") + key + "' must be a number"};
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ProtocolError{"malformed_message", std::string("field '") + key + "' is not finite"};
  return v;
}

Point2 point_field(const json& v) {
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  if (v.is_object() && v.contains("x_mm") && v.contains("y_mm"))
    return {number_field(v, "x_mm"), number_field(v, "y_mm")};
  throw ProtocolError{"malformed_message", "points must be [x, y] or {x_mm, y_mm}"};
}

}  // namespace

SessionEngine::SessionEngine(std::shared_ptr<const ServiceConfig> cfg,
                             std::function<std::string()> next_session_id)
    : cfg_(std::move(cfg)), next_session_id_(std::move(next_session_id)) {}

SessionEngine::~SessionEngine() {
  try {
    shutdown();
  } catch (...) {
  }
}

std::filesystem::path SessionEngine::session_path() const {
  if (!record_) return {};
  return cfg_->out_dir / (record_->session_id + ".jsonl");
}

std::vector<std::string> SessionEngine::handle_text(std::string_view frame) {
  const auto t0 = std::chrono::steady_clock::now();
  json msg = json::parse(frame, nullptr, false);
  std::vector<json> replies;
  bool is_probe = false;
  if (msg.is_discarded()) {
    replies.push_back(error_message("malformed_message", "frame is not valid JSON"));
  } else {
    is_probe = msg.is_object() && msg.value("type", "") == "probe";
    replies = handle(msg);
  }
  std::vector<std::string> out;
  out.reserve(replies.size());
  for (const auto& r : replies) out.push_back(r.dump());
  if (is_probe) {
    const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
    cfg_->latency->add(dt.count());
  }
  return out;
}

std::vector<json> SessionEngine::handle(const json& msg) {
  try {
    if (!msg.is_object()) throw ProtocolError{"malformed_message", "message must be a JSON object"};
    const auto it = msg.find("type");
    if (it == msg.end() || !it->is_string())
      throw ProtocolError{"malformed_message", "message has no string 'type'"};
    const std::string type = it->get<std::string>();
    if (type == "start_session") return {on_start_session(msg)};
    if (type == "start_trial") return {on_start_trial(msg)};
    if (type == "probe") return {on_probe(msg)};
    if (type == "mark_margin") return {on_mark_margin(msg)};
    if (type == "mark_seed") return {on_mark_seed(msg)};
    if (type == "finish_trial") return on_finish_trial();
    if (type == "end_session") return {on_end_session()};
    throw ProtocolError{"unknown_type", "unknown message type '" + type + "'"};
  } catch (const ProtocolError& e) {
    return {error_message(e.code, e.message)};
  } catch (const json::exception& e) {
    return {error_message("malformed_message", e.what())};
  } catch (const Error& e) {
    return {error_message("malformed_message", e.what())};
  }
}

json SessionEngine::on_start_session(const json& msg) {
  if (record_) throw ProtocolError{"session_active", "a session is already running"};
  SessionRecord r;
  MappingConfig mapping = cfg_->mapping;
  if (const auto c = msg.find("config"); c != msg.end() && !c->is_null()) {
    if (!c->is_object()) throw ProtocolError{"malformed_message", "config must be an object"};
    mapping = mapping_config_from_json(*c);
  }
  if (const auto p = msg.find("participant"); p != msg.end() && p->is_string())
    r.participant = p->get<std::string>();
  r.session_id = next_session_id_();
  r.config = mapping;
  r.pool = cfg_->pool;
  record_ = std::move(r);
  closed_ = false;
  trial_counter_ = 0;
  next_shape_ = 0;
  shape_order_ = select_trials(cfg_->pool, cfg_->pool.shapes.size(), cfg_->trial_seed);

  file_dirty_ = !persist_all();
  json ids = json::array();
  for (const auto& s : cfg_->pool.shapes) ids.push_back(s.id);
  json meta = {{"n_shapes", cfg_->pool.shapes.size()},
               {"shape_ids", ids},
               {"sheet_mm", cfg_->grid.width * cfg_->grid.resolution_mm}};
  meta["generation_seed"] = cfg_->pool.generation_seed ? json(*cfg_->pool.generation_seed) : json(nullptr);
  json ack = {{"type", "session_ack"}, {"session_id", record_->session_id}, {"pool_meta", meta}};
  if (file_dirty_) ack["warning"] = "session file could not be written";
  return ack;
}

json SessionEngine::on_start_trial(const json& msg) {
  if (!record_) throw ProtocolError{"no_session", "start_session first"};
  if (active_) throw ProtocolError{"trial_active", "finish the current trial first"};
  const auto m = msg.find("model");
  if (m == msg.end() || !m->is_string()) throw ProtocolError{"malformed_message", "start_trial needs a model"};
  const auto model = parse_model_kind(m->get<std::string>());
  if (!model) throw ProtocolError{"malformed_message", "unknown model '" + m->get<std::string>() + "'"};

  std::string shape_id;
  if (const auto s = msg.find("shape_id"); s != msg.end() && !s->is_null()) {
    if (!s->is_string()) throw ProtocolError{"malformed_message", "shape_id must be a string"};
    shape_id = s->get<std::string>();
  } else {
    if (shape_order_.empty()) throw ProtocolError{"malformed_message", "pool is empty"};
    shape_id = shape_order_[next_shape_++ % shape_order_.size()];
  }
  const PoolShape* target = nullptr;
  try {
    target = &cfg_->pool.find(shape_id);
  } catch (const NotFoundError& e) {
    throw ProtocolError{"malformed_message", e.what()};
  }

  Trial t;
  char id[32];
  std::snprintf(id, sizeof id, "t%03zu", ++trial_counter_);
  t.trial_id = id;
  t.shape_id = shape_id;
  t.model = *model;
  active_ = std::move(t);
  active_scene_ = target->scene();
  return {{"type", "trial_ack"}, {"trial_id", active_->trial_id}, {"shape_id", shape_id}};
}

json SessionEngine::on_probe(const json& msg) {
  if (!active_) throw ProtocolError{"no_active_trial", "probe outside a trial"};
  const Point2 p(number_field(msg, "x_mm"), number_field(msg, "y_mm"));
  const double t_ms = number_field(msg, "t_ms");
  if (!active_->trace.empty() && !(t_ms > active_->trace.back().t_ms))
    throw ProtocolError{"non_monotone_time", "probe timestamps must be strictly increasing"};
  if (active_->trace.empty()) active_->started_ms = t_ms;
  active_->trace.push_back({t_ms, p});
  active_->ended_ms = t_ms;
  const SoundParams s = map_params(active_->model, compute_features(*active_scene_, p), *record_->config);
  return {{"type", "params"}, {"params", to_json(s)}, {"t_ms", t_ms}};
}

json SessionEngine::on_mark_margin(const json& msg) {
  if (!active_) throw ProtocolError{"no_active_trial", "mark_margin outside a trial"};
  const auto path = msg.find("path");
  if (path == msg.end() || !path->is_array()) throw ProtocolError{"malformed_message", "path must be an array"};
  std::vector<Point2> pts;
  for (const auto& v : *path) pts.push_back(point_field(v));
  if (pts.size() < 3) throw ProtocolError{"malformed_message", "margin path needs at least 3 points"};
  active_->margin_marking = std::move(pts);
  return {{"type", "ack"}, {"of", "mark_margin"}, {"points", active_->margin_marking.size()}};
}

json SessionEngine::on_mark_seed(const json& msg) {
  if (!active_) throw ProtocolError{"no_active_trial", "mark_seed outside a trial"};
  active_->seed_marking = Point2(number_field(msg, "x_mm"), number_field(msg, "y_mm"));
  return {{"type", "ack"}, {"of", "mark_seed"}};
}

std::vector<json> SessionEngine::on_finish_trial() {
  if (!active_) throw ProtocolError{"no_active_trial", "no trial to finish"};
  if (!active_->has_markings()) throw ProtocolError{"missing_marking", "mark both margin and seed first"};

  Trial t = std::move(*active_);
  active_.reset();
  std::optional<ProtocolError> failure;
  try {
    t.metrics = score_trial(t, cfg_->pool, cfg_->grid);
  } catch (const Error& e) {
    failure = ProtocolError{"scoring_failed", e.what()};
  }
  // The trial is complete either way; an I/O error below is reported after the score.
  record_->trials.push_back(t);
  if (!append_line(trial_line(t))) failure = ProtocolError{"io_error", "could not write " + session_path().string()};

  if (cfg_->record_audio) {
    try {
      const auto pcm = render_trial_audio(t, *active_scene_, *record_->config);
      write_wav(pcm, cfg_->out_dir / (record_->session_id + "_" + t.trial_id + ".wav"));
    } catch (const IoError& e) {
      failure = ProtocolError{"io_error", e.what()};
    }
  }
  active_scene_.reset();
  std::vector<json> out;
  if (t.metrics)
    out.push_back({{"type", "score"}, {"trial_id", t.trial_id}, {"metrics", metrics_to_json(*t.metrics)}});
  if (failure) out.push_back(error_message(failure->code, failure->message));
  return out;
}

json SessionEngine::on_end_session() {
  if (!record_) throw ProtocolError{"no_session", "no session to end"};
  const std::string id = record_->session_id;
  const std::size_t n = record_->trials.size() + (active_ ? 1 : 0);
  const bool ok = shutdown();
  const std::string path = session_path().string();
  record_.reset();
  active_.reset();
  active_scene_.reset();
  if (!ok) throw ProtocolError{"io_error", "could not write " + path};
  return {{"type", "session_end"}, {"session_id", id}, {"trials", n}};
}

bool SessionEngine::append_line(const std::string& line) {
  if (file_dirty_) return persist_all();
  std::ofstream f(session_path(), std::ios::binary | std::ios::app);
  f << line;
  f.flush();
  if (!f) {
    file_dirty_ = true;
    return false;
  }
  return true;
}

bool SessionEngine::persist_all() {
  try {
    save_session(*record_, session_path());
    file_dirty_ = false;
    return true;
  } catch (const IoError&) {
    file_dirty_ = true;
    return false;
  }
}

bool SessionEngine::shutdown() {
  if (!record_ || closed_) return true;
  if (active_) {
    active_->partial = true;
    record_->trials.push_back(std::move(*active_));
    active_.reset();
    active_scene_.reset();
    if (!append_line(trial_line(record_->trials.back()))) return false;
  } else if (file_dirty_ && !persist_all()) {
    return false;
  }
  closed_ = true;
  return true;
}

// ---------------------------------------------------------------------------

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct Server::Impl {
  struct Connection {
    std::thread thread;
    std::shared_ptr<tcp::socket> socket;
    std::shared_ptr<std::atomic<bool>> done = std::make_shared<std::atomic<bool>>(false);
  };

  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::string host;
  std::mutex mu;
  std::list<Connection> connections;
  std::atomic<std::uint64_t> sessions{0};
  std::string id_prefix;

  void reap() {
    std::lock_guard lock(mu);
    for (auto it = connections.begin(); it != connections.end();) {
      if (*it->done) {
        it->thread.join();
        it = connections.erase(it);
      } else {
        ++it;
      }
    }
  }
};

namespace {

void serve_connection(std::shared_ptr<tcp::socket> sock, std::shared_ptr<const ServiceConfig> cfg,
                      std::function<std::string()> ids) {
  SessionEngine engine(cfg, std::move(ids));
  try {
    websocket::stream<tcp::socket&> ws(*sock);
    ws.accept();
    ws.text(true);
    beast::flat_buffer buf;
    for (;;) {
      buf.clear();
      ws.read(buf);
      const std::string frame = beast::buffers_to_string(buf.data());
      for (const auto& reply : engine.handle_text(frame)) ws.write(net::buffer(reply));
    }
  } catch (const std::exception&) {
    // Disconnect or shutdown; the engine persists what it has.
  }
  engine.shutdown();
}

}  // namespace

Server::Server(ServiceConfig cfg, std::string host, unsigned short port)
    : cfg_(std::make_shared<const ServiceConfig>(std::move(cfg))), impl_(std::make_unique<Impl>()) {
  std::error_code fs_ec;
  std::filesystem::create_directories(cfg_->out_dir, fs_ec);
  if (!std::filesystem::is_directory(cfg_->out_dir))
    throw IoError("output directory " + cfg_->out_dir.string() + " is not usable");

  impl_->host = host;
  beast::error_code ec;
  const auto addr = net::ip::make_address(host, ec);
  if (ec) throw ValidationError("bad bind address '" + host + "'");
  const tcp::endpoint ep(addr, port);
  impl_->acceptor.open(ep.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(ep, ec);
  if (!ec) impl_->acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw IoError("cannot listen on " + host + ":" + std::to_string(port) + ": " + ec.message());
  port_ = impl_->acceptor.local_endpoint().port();

  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char prefix[32];
  std::strftime(prefix, sizeof prefix, "%Y%m%dT%H%M%S", &tm);
  impl_->id_prefix = prefix;
}

Server::~Server() { stop(); }

void Server::start() {
  accept_thread_ = std::thread([this] { run(); });
}

void Server::run() {
  while (!stopping_) {
    auto sock = std::make_shared<tcp::socket>(impl_->ioc);
    beast::error_code ec;
    impl_->acceptor.accept(*sock, ec);
    if (stopping_) break;
    if (ec) continue;
    sock->set_option(tcp::no_delay(true), ec);
    impl_->reap();

    Impl::Connection c;
    c.socket = sock;
    auto done = c.done;
    Impl* impl = impl_.get();
    auto ids = [impl] {
      char id[64];
      std::snprintf(id, sizeof id, "%s-%03llu", impl->id_prefix.c_str(),
                    static_cast<unsigned long long>(++impl->sessions));
      return std::string(id);
    };
    c.thread = std::thread([sock, cfg = cfg_, ids, done] {
      serve_connection(sock, cfg, ids);
      *done = true;
    });
    std::lock_guard lock(impl_->mu);
    impl_->connections.push_back(std::move(c));
  }
}

void Server::stop() {
  if (stopping_.exchange(true)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  // Wake a blocking accept with a throwaway connection.
  {
    beast::error_code ec;
    tcp::socket poke(impl_->ioc);
    auto addr = impl_->acceptor.local_endpoint().address();
    if (addr.is_unspecified()) addr = addr.is_v6() ? net::ip::address(net::ip::address_v6::loopback())
                                                    : net::ip::address(net::ip::address_v4::loopback());
    poke.connect(tcp::endpoint(addr, port_), ec);
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  beast::error_code ec;
  impl_->acceptor.close(ec);

  std::lock_guard lock(impl_->mu);
  for (auto& c : impl_->connections) c.socket->shutdown(tcp::socket::shutdown_both, ec);
  for (auto& c : impl_->connections)
    if (c.thread.joinable()) c.thread.join();
  impl_->connections.clear();
}

}  // namespace sonoloc
