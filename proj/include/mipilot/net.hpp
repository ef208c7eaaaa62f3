#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mipilot/protocol.hpp"

namespace mipilot::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

// Accepts "tcp:<host>:<port>" and "<host>:<port>".
Endpoint parse_endpoint(std::string_view text);

// Connected TCP byte stream (owns the descriptor).
class TcpStream {
 public:
  explicit TcpStream(int fd = -1) : fd_(fd) {}
  TcpStream(TcpStream&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  TcpStream& operator=(TcpStream&& o) noexcept;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;
  ~TcpStream();

  static TcpStream connect(const Endpoint& ep);

  void write_all(std::string_view bytes);
  // Returns an empty string at end of stream.
  std::string read_some(std::size_t max = 4096);
  // Reads exactly n bytes; returns fewer only at end of stream.
  std::string read_exact(std::size_t n);
  void shutdown_write();
  bool valid() const { return fd_ >= 0; }

 private:
  int fd_;
};

class TcpListener {
 public:
  // Port 0 picks a free port.
  explicit TcpListener(const Endpoint& ep);
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener();

  std::uint16_t port() const { return port_; }
  TcpStream accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// Runs the robot simulator for `sessions` consecutive decoder connections (one at a time); each
// session starts from a fresh simulator. Returns the final state of the last session.
robot::RobotState serve_robot(TcpListener& listener, const robot::MotionConfig& motion, int sessions,
                              const protocol::ServerSession::PoseLog& log = {});

// Decoder side of the robot link.
class RobotClient {
 public:
  static RobotClient connect_robot(const Endpoint& ep);

  // Sends one command and blocks until its ACK. Poses received meanwhile are returned.
  std::vector<protocol::PoseLine> send(const protocol::CmdLine& cmd);
  // Sends a raw line (tests use this for off-grammar input) and returns the server lines that
  // follow until ACK, ERR or end of stream.
  std::vector<std::string> send_raw(std::string_view bytes);
  void close();

 private:
  explicit RobotClient(TcpStream s) : stream_(std::move(s)) {}
  std::optional<std::string> read_line();

  TcpStream stream_;
  std::string pending_;
};

}  // namespace mipilot::net
