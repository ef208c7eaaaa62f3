#include "mipilot/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

namespace mipilot::net {

namespace {
[[noreturn]] void fail(const std::string& what) {
  throw ProtocolError(what + ": " + std::strerror(errno));
}
}  // namespace

Endpoint parse_endpoint(std::string_view text) {
  if (text.starts_with("tcp:")) text.remove_prefix(4);
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw ArgumentError("endpoint needs host:port");
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  if (ep.host.empty()) ep.host = "127.0.0.1";
  if (ep.host.find(':') != std::string::npos)
    throw ArgumentError("bad host in endpoint '" + std::string(text) + "'");
  const auto port = text.substr(colon + 1);
  unsigned v = 0;
  auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), v);
  if (ec != std::errc{} || end != port.data() + port.size() || v > 65535)
    throw ArgumentError("bad port in endpoint '" + std::string(text) + "'");
  ep.port = static_cast<std::uint16_t>(v);
  return ep;
}

TcpStream& TcpStream::operator=(TcpStream&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

TcpStream::~TcpStream() {
  if (fd_ >= 0) ::close(fd_);
}

TcpStream TcpStream::connect(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
    throw ProtocolError("cannot resolve " + ep.host);
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    fail("socket");
  }
  const int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    ::close(fd);
    fail("connect to " + ep.host + ":" + port);
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return TcpStream(fd);
}

void TcpStream::write_all(std::string_view bytes) {
  while (!bytes.empty()) {
    const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("send");
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string TcpStream::read_some(std::size_t max) {
  std::string buf(max, '\0');
  while (true) {
    const ssize_t n = ::recv(fd_, buf.data(), max, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == ECONNRESET) return {};
      fail("recv");
    }
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }
}

std::string TcpStream::read_exact(std::size_t n) {
  std::string out;
  while (out.size() < n) {
    auto chunk = read_some(n - out.size());
    if (chunk.empty()) break;
    out += chunk;
  }
  return out;
}

void TcpStream::shutdown_write() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

TcpListener::TcpListener(const Endpoint& ep) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) fail("socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw ArgumentError("listen address must be a dotted IPv4 address, got '" + ep.host + "'");
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 4) != 0) {
    const int err = errno;
    ::close(fd_);
    errno = err;
    fail("listen on " + ep.host + ":" + std::to_string(ep.port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

TcpStream TcpListener::accept() {
  while (true) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return TcpStream(fd);
    }
    if (errno != EINTR) fail("accept");
  }
}

robot::RobotState serve_robot(TcpListener& listener, const robot::MotionConfig& motion, int sessions,
                              const protocol::ServerSession::PoseLog& log) {
  robot::RobotState last;
  for (int s = 0; s < sessions; ++s) {
    auto stream = listener.accept();
    robot::RobotSim sim(motion);
    protocol::ServerSession session(sim, log);
    while (!session.closed()) {
      const auto bytes = stream.read_some();
      if (bytes.empty()) break;
      const auto reply = session.feed(bytes);
      if (!reply.empty()) stream.write_all(reply);
    }
    stream.shutdown_write();
    last = sim.state();
  }
  return last;
}

RobotClient RobotClient::connect_robot(const Endpoint& ep) {
  RobotClient c(TcpStream::connect(ep));
  c.stream_.write_all(std::string(protocol::kHandshake) + "\n");
  const auto line = c.read_line();
  if (!line || *line != protocol::kHandshake)
    throw ProtocolError("handshake failed: got '" + line.value_or("<eof>") + "'");
  return c;
}

std::optional<std::string> RobotClient::read_line() {
  while (true) {
    const auto nl = pending_.find('\n');
    if (nl != std::string::npos) {
      std::string line = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      return line;
    }
    const auto chunk = stream_.read_some();
    if (chunk.empty()) return std::nullopt;
    pending_ += chunk;
  }
}

std::vector<protocol::PoseLine> RobotClient::send(const protocol::CmdLine& cmd) {
  stream_.write_all(protocol::format_cmd(cmd));
  std::vector<protocol::PoseLine> poses;
  while (true) {
    const auto line = read_line();
    if (!line) throw ProtocolError("robot closed the connection");
    const auto msg = protocol::parse_server_line(*line);
    if (const auto* p = std::get_if<protocol::PoseLine>(&msg)) {
      poses.push_back(*p);
    } else if (const auto* a = std::get_if<protocol::AckLine>(&msg)) {
      if (a->seq != cmd.seq)
        throw ProtocolError("ACK " + std::to_string(a->seq) + " for CMD " + std::to_string(cmd.seq));
      return poses;
    } else if (const auto* e = std::get_if<protocol::ErrLine>(&msg)) {
      throw ProtocolError("robot error: " + e->reason);
    } else {
      throw ProtocolError("unexpected line '" + *line + "'");
    }
  }
}

std::vector<std::string> RobotClient::send_raw(std::string_view bytes) {
  stream_.write_all(bytes);
  std::vector<std::string> out;
  while (auto line = read_line()) {
    out.push_back(*line);
    if (line->starts_with("ACK ") || line->starts_with("ERR ")) break;
  }
  return out;
}

void RobotClient::close() { stream_.shutdown_write(); }

}  // namespace mipilot::net
