#pragma once

// Software Modbus/TCP device: a register store served over TCP with a
// per-request latency model and optional exception injection.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mbconn/net.hpp"
#include "mbconn/protocol.hpp"

namespace mbconn {

// Four spaces of 65536 cells each; unset cells read as zero. Every call is
// atomic with respect to the others, so multi-register values never tear.
class RegisterStore {
 public:
  RegisterStore();

  std::vector<bool> read_bits(RegisterSpace space, std::uint16_t address,
                              std::uint16_t quantity) const;
  std::vector<std::uint16_t> read_registers(RegisterSpace space, std::uint16_t address,
                                            std::uint16_t quantity) const;

  // Writes go to any space; the protocol layer decides what clients may touch.
  void write_bits(RegisterSpace space, std::uint16_t address,
                  const std::vector<bool>& values);
  void write_registers(RegisterSpace space, std::uint16_t address,
                       std::span<const std::uint16_t> values);

 private:
  std::vector<std::uint8_t>& bits(RegisterSpace s);
  const std::vector<std::uint8_t>& bits(RegisterSpace s) const;
  std::vector<std::uint16_t>& regs(RegisterSpace s);
  const std::vector<std::uint16_t>& regs(RegisterSpace s) const;

  mutable std::shared_mutex mutex_;
  std::vector<std::uint8_t> coils_;
  std::vector<std::uint8_t> discrete_inputs_;
  std::vector<std::uint16_t> input_registers_;
  std::vector<std::uint16_t> holding_registers_;
};

struct Jitter {
  enum class Kind { None, Uniform, Normal };
  Kind kind = Kind::None;
  double a = 0;  // uniform: lower bound; normal: mean  (µs)
  double b = 0;  // uniform: upper bound; normal: sigma (µs)

  std::string to_string() const;
  // "none", "uniform(A,B)" or "normal(MEAN,SIGMA)", values in µs.
  static std::optional<Jitter> parse(std::string_view text);
  bool operator==(const Jitter&) const = default;
};

struct LatencyProfile {
  std::chrono::microseconds fixed_delay{0};
  Jitter jitter;
  std::uint64_t seed = 0;
  // The first `warmup_requests` requests served carry `warmup_extra` on top.
  std::uint64_t warmup_requests = 0;
  std::chrono::microseconds warmup_extra{0};
};

// fixed_delay + one jitter sample, truncated at zero.
std::chrono::microseconds apply_latency(const LatencyProfile& profile,
                                        std::mt19937_64& rng);

struct InitialValue {
  RegisterSpace space = RegisterSpace::HoldingRegisters;
  std::uint16_t offset = 0;
  std::vector<std::uint16_t> words;  // 0/1 per cell for bit spaces
};

// Requests touching [first, last] in `space` are answered with `code`.
struct FaultRule {
  RegisterSpace space = RegisterSpace::HoldingRegisters;
  std::uint16_t first = 0;
  std::uint16_t last = 0xFFFF;
  ExceptionCode code = ExceptionCode::IllegalDataAddress;
};

struct DeviceProfile {
  std::string name = "default";
  std::vector<InitialValue> initial_values;
  LatencyProfile latency;
  bool writes_allowed = true;
  std::vector<FaultRule> faults;
};

class ProfileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Empty document yields the default profile: no latency, all cells zero.
DeviceProfile load_profile(std::string_view document);

// Document text of a bundled preset ("sentron-like", "eem-like").
std::optional<std::string_view> bundled_profile(std::string_view name);
std::vector<std::string_view> bundled_profile_names();

// A bundled preset name or a path to a profile document.
DeviceProfile resolve_profile(const std::string& name_or_path);

void apply_initial_values(RegisterStore& store, const DeviceProfile& profile);

struct ServerOptions {
  std::function<void(std::string_view)> log;  // per-connection errors
};

class Emulator {
 public:
  // Binds and starts serving; port 0 picks a free port. Throws NetError(Bind).
  static std::unique_ptr<Emulator> serve(const Endpoint& endpoint, DeviceProfile profile,
                                         ServerOptions options = {});
  ~Emulator();
  Emulator(const Emulator&) = delete;
  Emulator& operator=(const Emulator&) = delete;

  // Stops accepting, closes every connection and releases the port.
  void stop();
  // Closes client connections but keeps listening.
  void drop_connections();

  Endpoint endpoint() const { return endpoint_; }
  std::uint16_t port() const { return endpoint_.port; }
  RegisterStore& store() { return store_; }
  const DeviceProfile& profile() const { return profile_; }

  // Answers one request PDU against the store: fault rules, write policy
  // and exception mapping, but no latency.
  ResponsePdu process(const RequestPdu& request);

  // Full frame handling without latency: nullopt means the framing is
  // unrecoverable and the connection would be closed.
  std::optional<std::vector<std::uint8_t>> handle_adu(std::span<const std::uint8_t> adu);

  std::uint64_t requests_served() const { return requests_.load(); }
  std::uint64_t connections_accepted() const { return accepted_.load(); }
  std::uint64_t connection_errors() const { return conn_errors_.load(); }

 private:
  struct Connection {
    Socket socket;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  Emulator(Socket listener, DeviceProfile profile, ServerOptions options);
  void accept_loop();
  void serve_connection(Connection& conn);
  std::vector<std::uint8_t> answer(const MbapHeader& header,
                                   std::span<const std::uint8_t> pdu);
  std::chrono::microseconds next_delay();
  void reap_finished();
  void log(std::string_view message);

  Socket listener_;
  Endpoint endpoint_;
  DeviceProfile profile_;
  ServerOptions options_;
  RegisterStore store_;

  std::mutex rng_mutex_;
  std::mt19937_64 rng_;

  std::mutex conn_mutex_;
  std::vector<std::unique_ptr<Connection>> connections_;
  std::thread acceptor_;
  std::atomic<bool> stopping_{false};

  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> accepted_{0};
  std::atomic<std::uint64_t> conn_errors_{0};
};

// Sleeps until 5 ms before the deadline, then spins (yielding) to it.
void wait_until_precise(Clock::time_point deadline);

}  // namespace mbconn
