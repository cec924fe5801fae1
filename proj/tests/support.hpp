#pragma once

// Shared helpers for the test executables.

#include "sonoloc/geometry.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace testing {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("sonoloc-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<sonoloc::Point2> square_ring(double x0, double y0, double side) {
  return {{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}};
}

// Blocking WebSocket client speaking one JSON object per text frame.
class WsClient {
 public:
  WsClient(const std::string& host, unsigned short port) : ws_(ioc_) {
    namespace net = boost::asio;
    net::ip::tcp::resolver resolver(ioc_);
    net::connect(ws_.next_layer(), resolver.resolve(host, std::to_string(port)));
    ws_.next_layer().set_option(net::ip::tcp::no_delay(true));
    ws_.handshake(host, "/");
    ws_.text(true);
  }
  ~WsClient() {
    boost::beast::error_code ec;
    ws_.close(boost::beast::websocket::close_code::normal, ec);
  }

  void send_raw(const std::string& text) { ws_.write(boost::asio::buffer(text)); }
  void send(const nlohmann::json& msg) { send_raw(msg.dump()); }
  nlohmann::json receive() {
    boost::beast::flat_buffer buf;
    ws_.read(buf);
    return nlohmann::json::parse(boost::beast::buffers_to_string(buf.data()));
  }
  nlohmann::json request(const nlohmann::json& msg) {
    send(msg);
    return receive();
  }

 private:
  boost::asio::io_context ioc_;
  boost::beast::websocket::stream<boost::asio::ip::tcp::socket> ws_;
};

}  // namespace testing
