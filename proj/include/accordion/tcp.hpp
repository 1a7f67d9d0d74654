#pragma once
// TCP transport for the transfer protocol: a listener serving endpoint
// sessions over the framed byte stream, and a client fetch that connects,
// negotiates, assembles, and optionally upgrades. One thread per connection;
// the shared endpoint is immutable, per-session state lives on the thread.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "accordion/protocol.hpp"

namespace accordion {

namespace detail {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close_fd(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void send_all(const std::uint8_t* data, std::size_t n) const {
    std::size_t sent = 0;
    while (sent < n) {
      const ssize_t k = ::send(fd_, data + sent, n - sent, MSG_NOSIGNAL);
      if (k < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(k);
    }
  }

  // One receive; 0 means the peer closed the stream cleanly.
  std::size_t recv_some(std::uint8_t* buf, std::size_t cap) const {
    for (;;) {
      const ssize_t k = ::recv(fd_, buf, cap, 0);
      if (k >= 0) return static_cast<std::size_t>(k);
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) throw ProtocolError("receive timed out");
      throw ProtocolError(std::string("receive failed: ") + std::strerror(errno));
    }
  }

  void set_recv_timeout(long seconds) const {
    timeval tv{};
    tv.tv_sec = seconds;
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  }

 private:
  void close_fd() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
};

inline sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
    throw ConfigError("not an IPv4 address: " + host);
  return addr;
}

// Sends every reply the endpoint produced for one inbound message.
inline void send_replies(const Socket& sock, const std::vector<Message>& replies) {
  for (const Message& m : replies) {
    const std::vector<std::uint8_t> frame = encode_frame(m);
    sock.send_all(frame.data(), frame.size());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Server

class TcpServer {
 public:
  // Binds and listens immediately; port 0 picks a free port (see port()).
  TcpServer(const Endpoint& endpoint, const std::string& bind_host, std::uint16_t port)
      : endpoint_(&endpoint) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw ConfigError(std::string("socket failed: ") + std::strerror(errno));
    listener_ = detail::Socket(fd);
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = detail::make_addr(bind_host, port);
    if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
      throw ConfigError("cannot bind " + bind_host + ":" + std::to_string(port) + ": " +
                        std::strerror(errno));
    if (::listen(fd, 16) != 0)
      throw ConfigError(std::string("listen failed: ") + std::strerror(errno));
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len) != 0)
      throw ConfigError(std::string("getsockname failed: ") + std::strerror(errno));
    port_ = ntohs(bound.sin_port);
  }

  std::uint16_t port() const { return port_; }

  // Accepts and serves connections, one thread per session, until
  // `max_sessions` connections have been accepted (0: no limit).
  void run(std::size_t max_sessions = 0) {
    std::vector<std::thread> workers;
    for (std::size_t served = 0; max_sessions == 0 || served < max_sessions; ++served) {
      const int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) {
          --served;
          continue;
        }
        break;  // listener shut down
      }
      workers.emplace_back([this, fd] { serve_connection(detail::Socket(fd)); });
    }
    for (std::thread& w : workers) w.join();
  }

 private:
  void serve_connection(detail::Socket sock) const {
    sock.set_recv_timeout(60);
    const int one = 1;
    ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    Endpoint::Session session;
    std::vector<std::uint8_t> buf;
    std::uint8_t scratch[1 << 16];
    try {
      for (;;) {
        const std::size_t k = sock.recv_some(scratch, sizeof(scratch));
        if (k == 0) return;  // client hung up; session over
        buf.insert(buf.end(), scratch, scratch + k);
        std::size_t at = 0, consumed = 0;
        while (auto msg = decode_frame(buf.data() + at, buf.size() - at, &consumed)) {
          detail::send_replies(sock, endpoint_->handle(*msg, session));
          at += consumed;
        }
        buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(at));
      }
    } catch (const std::exception& e) {
      // best effort: tell the peer why before dropping the connection
      try {
        detail::send_replies(sock, {ErrorReply{ReplyCode::bad_request, e.what()}});
      } catch (...) {
      }
    }
  }

  const Endpoint* endpoint_;
  detail::Socket listener_;
  std::uint16_t port_ = 0;
};

// ---------------------------------------------------------------------------
// Client

// Connects, fetches under the requirements, then runs the upgrade goals in
// order. Returns the completed session holding the assembled model.
inline FetchSession fetch_tcp(const std::string& host, std::uint16_t port,
                              const FetchRequirements& req,
                              const std::vector<UpgradeGoal>& upgrades = {}) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ConfigError(std::string("socket failed: ") + std::strerror(errno));
  detail::Socket sock(fd);
  sock.set_recv_timeout(60);
  sockaddr_in addr = detail::make_addr(host, port);
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
    throw ConfigError("cannot connect " + host + ":" + std::to_string(port) + ": " +
                      std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

  FetchSession session(req);
  std::vector<std::uint8_t> buf;
  std::uint8_t scratch[1 << 16];

  auto pump = [&](const Message& request) {
    const std::vector<std::uint8_t> frame = encode_frame(request);
    sock.send_all(frame.data(), frame.size());
    for (;;) {
      std::size_t at = 0, consumed = 0;
      bool finished = false;
      while (auto msg = decode_frame(buf.data() + at, buf.size() - at, &consumed)) {
        at += consumed;
        finished = session.consume(*msg);
        if (finished) break;
      }
      buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(at));
      if (finished) return;
      const std::size_t k = sock.recv_some(scratch, sizeof(scratch));
      if (k == 0) throw ProtocolError("server closed the stream mid-transfer");
      buf.insert(buf.end(), scratch, scratch + k);
    }
  };

  pump(session.start());
  for (const UpgradeGoal& goal : upgrades)
    pump(goal.target_error ? session.upgrade_to_error(*goal.target_error)
                           : session.upgrade_to_depth(goal.target_n.value()));
  return session;
}

}  // namespace accordion
