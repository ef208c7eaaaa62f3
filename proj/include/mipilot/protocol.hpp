#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "mipilot/robot.hpp"

// Line protocol between decoder and robot simulator:
//   client: MIBOT/1            server: MIBOT/1
//   client: CMD <seq> <t_ms> <N|R|L|K>
//   server: POSE <t_ms> <x> <y> <yaw>   (every 100 ms of simulated time, up to t_ms)
//   server: ACK <seq>
//   server: ERR <reason>                (then the connection closes)
namespace mipilot::protocol {

inline constexpr std::string_view kHandshake = "MIBOT/1";
inline constexpr std::size_t kMaxLineLength = 256;

struct CmdLine {
  std::int64_t seq = 0;
  std::int64_t t_ms = 0;
  MiClass cmd = MiClass::N;
};
struct AckLine {
  std::int64_t seq = 0;
};
struct PoseLine {
  std::int64_t t_ms = 0;
  double x = 0, y = 0, yaw = 0;
};
struct ErrLine {
  std::string reason;
};
struct HelloLine {};

using ServerMessage = std::variant<HelloLine, AckLine, PoseLine, ErrLine>;

std::string format_cmd(const CmdLine& c);
std::string format_ack(std::int64_t seq);
std::string format_pose(std::int64_t t_ms, const robot::RobotState& s);
std::string format_err(std::string_view reason);

// Parses one line (without its newline). Throws ProtocolError on anything off-grammar.
CmdLine parse_cmd(std::string_view line);
ServerMessage parse_server_line(std::string_view line);

// Splits a byte stream into newline-terminated lines.
class LineBuffer {
 public:
  // Appends bytes; throws ProtocolError("line-too-long") if a pending line exceeds the limit.
  void append(std::string_view bytes);
  std::optional<std::string> next_line();

 private:
  std::string buf_;
  std::size_t start_ = 0;
};

// Simulator side of one connection, independent of any socket. Feed received bytes, send
// back whatever feed() returns. After an error the session is closed and ignores input.
class ServerSession {
 public:
  using PoseLog = std::function<void(std::int64_t t_ms, const robot::RobotState&)>;

  explicit ServerSession(robot::RobotSim& sim, PoseLog log = {});

  std::string feed(std::string_view bytes);
  bool closed() const { return closed_; }
  const std::optional<std::string>& error() const { return error_; }
  bool handshaken() const { return handshaken_; }

 private:
  std::string handle_line(const std::string& line);

  robot::RobotSim& sim_;
  PoseLog log_;
  LineBuffer lines_;
  bool handshaken_ = false;
  bool closed_ = false;
  std::optional<std::string> error_;
  std::optional<std::int64_t> last_seq_;
  std::int64_t last_t_ms_ = 0;
};

}  // namespace mipilot::protocol
