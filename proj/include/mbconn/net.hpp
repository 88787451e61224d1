#pragma once

// Thin blocking TCP layer with deadlines (POSIX sockets).

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mbconn {

using Clock = std::chrono::steady_clock;

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 502;

  std::string to_string() const;
  // "host:port"; a bare host keeps port 502.
  static std::optional<Endpoint> parse(std::string_view text);
  bool operator==(const Endpoint&) const = default;
};

class NetError : public std::runtime_error {
 public:
  enum class Kind { Connect, Timeout, Closed, Io, Bind };
  NetError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = other.release();
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  int release() noexcept {
    const int fd = fd_;
    fd_ = -1;
    return fd;
  }
  void close() noexcept;
  // Wakes up any thread blocked on this socket without releasing the fd.
  void shutdown() noexcept;

 private:
  int fd_ = -1;
};

// TCP_NODELAY is set on every connected socket.
Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout);
Socket listen_tcp(const Endpoint& ep, int backlog = 64);
std::uint16_t local_port(const Socket& s);

// Returns an invalid socket once the listener is shut down.
Socket accept_tcp(const Socket& listener);

void send_all(const Socket& s, std::span<const std::uint8_t> bytes);

// Reads at least one byte before `deadline`. Throws Timeout, or Closed on EOF.
std::size_t recv_some(const Socket& s, std::span<std::uint8_t> buffer,
                      Clock::time_point deadline);

// Reads exactly buffer.size() bytes before `deadline`.
void recv_exact(const Socket& s, std::span<std::uint8_t> buffer,
                Clock::time_point deadline);

}  // namespace mbconn
