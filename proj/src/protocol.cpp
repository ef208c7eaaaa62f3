#include "mipilot/protocol.hpp"

#include <charconv>
#include <cstdio>
#include <vector>

namespace mipilot::protocol {

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto sp = line.find(' ', pos);
    out.push_back(line.substr(pos, sp == std::string_view::npos ? std::string_view::npos : sp - pos));
    if (sp == std::string_view::npos) break;
    pos = sp + 1;
  }
  return out;
}

std::int64_t parse_uint(std::string_view s, const char* field) {
  if (s.empty() || s.size() > 18) throw ProtocolError(std::string("malformed ") + field);
  for (char c : s)
    if (c < '0' || c > '9') throw ProtocolError(std::string("malformed ") + field);
  std::int64_t v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

double parse_real(std::string_view s, const char* field) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || end != s.data() + s.size())
    throw ProtocolError(std::string("malformed ") + field);
  return v;
}

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_cmd(const CmdLine& c) {
  return "CMD " + std::to_string(c.seq) + " " + std::to_string(c.t_ms) + " " + class_letter(c.cmd) +
         "\n";
}
std::string format_ack(std::int64_t seq) { return "ACK " + std::to_string(seq) + "\n"; }
std::string format_pose(std::int64_t t_ms, const robot::RobotState& s) {
  return "POSE " + std::to_string(t_ms) + " " + fmt_real(s.x) + " " + fmt_real(s.y) + " " +
         fmt_real(s.yaw) + "\n";
}
std::string format_err(std::string_view reason) { return "ERR " + std::string(reason) + "\n"; }

CmdLine parse_cmd(std::string_view line) {
  const auto t = split_spaces(line);
  if (t.size() != 4 || t[0] != "CMD") throw ProtocolError("malformed");
  CmdLine c;
  c.seq = parse_uint(t[1], "seq");
  c.t_ms = parse_uint(t[2], "t_ms");
  if (t[3].size() != 1) throw ProtocolError("malformed command");
  const auto cls = class_from_letter(t[3][0]);
  if (!cls) throw ProtocolError("malformed command");
  c.cmd = *cls;
  return c;
}

ServerMessage parse_server_line(std::string_view line) {
  if (line == kHandshake) return HelloLine{};
  const auto t = split_spaces(line);
  if (t[0] == "ACK" && t.size() == 2) return AckLine{parse_uint(t[1], "seq")};
  if (t[0] == "POSE" && t.size() == 5)
    return PoseLine{parse_uint(t[1], "t_ms"), parse_real(t[2], "x"), parse_real(t[3], "y"),
                    parse_real(t[4], "yaw")};
  if (t[0] == "ERR" && t.size() >= 2) return ErrLine{std::string(line.substr(4))};
  throw ProtocolError("malformed server line '" + std::string(line) + "'");
}

void LineBuffer::append(std::string_view bytes) {
  if (start_ > 0 && start_ == buf_.size()) {
    buf_.clear();
    start_ = 0;
  }
  buf_.append(bytes);
  const auto nl = buf_.find('\n', start_);
  const std::size_t pending = (nl == std::string::npos ? buf_.size() : nl) - start_;
  if (pending > kMaxLineLength) throw ProtocolError("line-too-long");
}

std::optional<std::string> LineBuffer::next_line() {
  const auto nl = buf_.find('\n', start_);
  if (nl == std::string::npos) return std::nullopt;
  std::string line = buf_.substr(start_, nl - start_);
  start_ = nl + 1;
  if (line.size() > kMaxLineLength) throw ProtocolError("line-too-long");
  // The next pending line may already be over the limit.
  const auto next = buf_.find('\n', start_);
  if ((next == std::string::npos ? buf_.size() : next) - start_ > kMaxLineLength)
    throw ProtocolError("line-too-long");
  return line;
}

ServerSession::ServerSession(robot::RobotSim& sim, PoseLog log) : sim_(sim), log_(std::move(log)) {}

std::string ServerSession::handle_line(const std::string& line) {
  if (!handshaken_) {
    if (line != kHandshake) throw ProtocolError("handshake");
    handshaken_ = true;
    return std::string(kHandshake) + "\n";
  }
  CmdLine c;
  try {
    c = parse_cmd(line);
  } catch (const ProtocolError&) {
    throw ProtocolError("malformed");
  }
  if (last_seq_ && c.seq <= *last_seq_) throw ProtocolError("seq-regression");
  if (c.t_ms < last_t_ms_ || c.t_ms < sim_.now_ms()) throw ProtocolError("time-regression");
  std::string out;
  sim_.command(c.t_ms, c.cmd, [&](std::int64_t t, const robot::RobotState& s) {
    out += format_pose(t, s);
    if (log_) log_(t, s);
  });
  last_seq_ = c.seq;
  last_t_ms_ = c.t_ms;
  out += format_ack(c.seq);
  return out;
}

std::string ServerSession::feed(std::string_view bytes) {
  if (closed_) return {};
  std::string out;
  try {
    lines_.append(bytes);
    while (auto line = lines_.next_line()) out += handle_line(*line);
  } catch (const ProtocolError& e) {
    closed_ = true;
    error_ = e.what();
    out += format_err(e.what());
  }
  return out;
}

}  // namespace mipilot::protocol
