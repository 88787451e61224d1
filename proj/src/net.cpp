#include "mbconn/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

namespace mbconn {

namespace {

std::string errno_text(int err) { return std::strerror(err); }

int poll_timeout_ms(Clock::time_point deadline) {
  if (deadline == Clock::time_point::max()) return -1;
  const auto left = std::chrono::ceil<std::chrono::milliseconds>(deadline - Clock::now());
  return left.count() < 0 ? 0 : static_cast<int>(left.count());
}

// Waits for `events`; false on timeout.
bool wait_for(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, poll_timeout_ms(deadline));
    if (rc > 0) return true;
    if (rc == 0) {
      if (Clock::now() >= deadline) return false;
      continue;
    }
    if (errno != EINTR) throw NetError(NetError::Kind::Io, "poll: " + errno_text(errno));
  }
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

struct AddrInfo {
  addrinfo* head = nullptr;
  ~AddrInfo() {
    if (head) ::freeaddrinfo(head);
  }
};

void resolve(const Endpoint& ep, bool passive, AddrInfo& out) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  const auto port = std::to_string(ep.port);
  const char* host = ep.host.empty() ? nullptr : ep.host.c_str();
  const int rc = ::getaddrinfo(host, port.c_str(), &hints, &out.head);
  if (rc != 0 || !out.head) {
    throw NetError(passive ? NetError::Kind::Bind : NetError::Kind::Connect,
                   "cannot resolve " + ep.to_string() + ": " + ::gai_strerror(rc));
  }
}

}  // namespace

std::string Endpoint::to_string() const {
  return host + ":" + std::to_string(port);
}

std::optional<Endpoint> Endpoint::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  Endpoint ep;
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) {
    ep.host = std::string(text);
    return ep;
  }
  const auto digits = text.substr(colon + 1);
  unsigned port = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (colon == 0 || digits.empty() || ec != std::errc{} ||
      p != digits.data() + digits.size() || port > 0xFFFF) {
    return std::nullopt;
  }
  ep.host = std::string(text.substr(0, colon));
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout) {
  AddrInfo ai;
  resolve(ep, false, ai);
  const auto deadline = Clock::now() + timeout;

  Socket s(::socket(ai.head->ai_family, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s) throw NetError(NetError::Kind::Connect, "socket: " + errno_text(errno));
  const int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);

  if (::connect(s.fd(), ai.head->ai_addr, ai.head->ai_addrlen) != 0) {
    if (errno != EINPROGRESS) {
      throw NetError(NetError::Kind::Connect,
                     "connect " + ep.to_string() + ": " + errno_text(errno));
    }
    if (!wait_for(s.fd(), POLLOUT, deadline)) {
      throw NetError(NetError::Kind::Timeout,
                     "connect " + ep.to_string() + ": timed out after " +
                         std::to_string(timeout.count()) + " ms");
    }
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      throw NetError(NetError::Kind::Connect,
                     "connect " + ep.to_string() + ": " + errno_text(err));
    }
  }
  ::fcntl(s.fd(), F_SETFL, flags);
  set_nodelay(s.fd());
  return s;
}

Socket listen_tcp(const Endpoint& ep, int backlog) {
  AddrInfo ai;
  resolve(ep, true, ai);
  Socket s(::socket(ai.head->ai_family, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s) throw NetError(NetError::Kind::Bind, "socket: " + errno_text(errno));
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(s.fd(), ai.head->ai_addr, ai.head->ai_addrlen) != 0) {
    throw NetError(NetError::Kind::Bind, "bind " + ep.to_string() + ": " + errno_text(errno));
  }
  if (::listen(s.fd(), backlog) != 0) {
    throw NetError(NetError::Kind::Bind, "listen " + ep.to_string() + ": " + errno_text(errno));
  }
  return s;
}

std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) return 0;
  return ntohs(addr.sin_port);
}

Socket accept_tcp(const Socket& listener) {
  for (;;) {
    const int fd = ::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      set_nodelay(fd);
      return Socket(fd);
    }
    if (errno == EINTR || errno == ECONNABORTED) continue;
    return Socket();
  }
}

void send_all(const Socket& s, std::span<const std::uint8_t> bytes) {
  while (!bytes.empty()) {
    const auto n = ::send(s.fd(), bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET) {
        throw NetError(NetError::Kind::Closed, "connection lost: " + errno_text(errno));
      }
      throw NetError(NetError::Kind::Io, "send: " + errno_text(errno));
    }
    bytes = bytes.subspan(static_cast<std::size_t>(n));
  }
}

std::size_t recv_some(const Socket& s, std::span<std::uint8_t> buffer,
                      Clock::time_point deadline) {
  for (;;) {
    if (!wait_for(s.fd(), POLLIN, deadline)) {
      throw NetError(NetError::Kind::Timeout, "response timed out");
    }
    const auto n = ::recv(s.fd(), buffer.data(), buffer.size(), 0);
    if (n > 0) return static_cast<std::size_t>(n);
    if (n == 0) throw NetError(NetError::Kind::Closed, "connection closed by peer");
    if (errno == EINTR || errno == EAGAIN) continue;
    if (errno == ECONNRESET) {
      throw NetError(NetError::Kind::Closed, "connection reset by peer");
    }
    throw NetError(NetError::Kind::Io, "recv: " + errno_text(errno));
  }
}

void recv_exact(const Socket& s, std::span<std::uint8_t> buffer,
                Clock::time_point deadline) {
  while (!buffer.empty()) {
    const auto n = recv_some(s, buffer, deadline);
    buffer = buffer.subspan(n);
  }
}

}  // namespace mbconn
