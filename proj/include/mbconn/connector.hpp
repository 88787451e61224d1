#pragma once

// Polling Modbus/TCP connector: executes a batch plan over one connection,
// one outstanding request at a time, and decodes the result into a record.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <string_view>

#include "mbconn/codec.hpp"
#include "mbconn/model.hpp"
#include "mbconn/net.hpp"
#include "mbconn/planner.hpp"
#include "mbconn/protocol.hpp"

namespace mbconn {

struct ConnectorConfig {
  Endpoint endpoint;
  std::uint8_t unit_id = 1;
  std::chrono::milliseconds response_timeout{1000};
  std::chrono::milliseconds connect_timeout{1000};
  std::chrono::microseconds poll_interval{std::chrono::seconds(1)};

  static ConnectorConfig for_model(const ConnectorModel& model) {
    ConnectorConfig c;
    c.endpoint = model.endpoint;
    c.unit_id = model.unit_id;
    return c;
  }
};

struct SpanRef {
  RegisterSpace space = RegisterSpace::HoldingRegisters;
  std::uint16_t start = 0;
  std::uint16_t count = 0;
};

class ConnectorError : public std::runtime_error {
 public:
  enum class Kind {
    Connect,
    Timeout,
    ConnectionLost,
    Exception,  // the device answered with an exception response
    Protocol,   // malformed or mismatched response
    ReadOnly,
    UnknownField,
    Config,
  };

  ConnectorError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ConnectorError(std::uint8_t function, ExceptionCode code,
                 std::optional<SpanRef> span, const std::string& what)
      : std::runtime_error(what),
        kind_(Kind::Exception),
        function_(function),
        code_(code),
        span_(span) {}

  Kind kind() const noexcept { return kind_; }
  std::uint8_t function() const noexcept { return function_; }
  ExceptionCode exception_code() const noexcept { return code_; }
  const std::optional<SpanRef>& span() const noexcept { return span_; }

 private:
  Kind kind_;
  std::uint8_t function_ = 0;
  ExceptionCode code_ = ExceptionCode::IllegalFunction;
  std::optional<SpanRef> span_;
};

std::string_view to_string(ConnectorError::Kind k);

struct FieldSample {
  Value value;
  Clock::time_point timestamp;
};

using Record = std::map<std::string, FieldSample, std::less<>>;

struct PollItem {
  std::uint64_t sequence = 0;
  std::optional<Record> record;
  std::optional<ConnectorError> error;
  std::chrono::microseconds duration{0};
};

using PollSink = std::function<void(const PollItem&)>;

struct PollOptions {
  std::chrono::microseconds interval{std::chrono::seconds(1)};
  bool stop_on_error = false;
  std::uint64_t max_polls = 0;  // 0 = until stopped
};

class Connector {
 public:
  // Throws ConnectorError (Connect or Timeout). The model supplies field
  // metadata for write_field; read_batch only needs the plan.
  static Connector connect(const ConnectorConfig& config, ConnectorModel model = {});

  Connector(Connector&&) noexcept = default;
  Connector& operator=(Connector&&) noexcept = default;

  // One request/response exchange per span, strictly sequential.
  Record read_batch(const BatchPlan& plan);

  // Bits use WriteSingleCoil, one-register values WriteSingleRegister,
  // wider values WriteMultipleRegisters. Read-only and unknown fields are
  // rejected before any traffic; encoding errors surface as CodecError.
  void write_field(std::string_view name, const Value& value);

  // Calls read_batch at a fixed cadence until `stop` is requested, max_polls
  // is reached, or (with stop_on_error) a read fails. Returns polls done.
  std::uint64_t poll(const BatchPlan& plan, const PollOptions& options,
                     const PollSink& sink, std::stop_token stop = {});

  // A single exchange. Exception responses are returned, not thrown.
  ResponsePdu transact(const RequestPdu& request);

  bool connected() const noexcept { return static_cast<bool>(socket_); }
  void close() noexcept { socket_.close(); }

  std::uint16_t next_transaction_id() const noexcept { return next_tid_; }
  std::uint64_t requests_sent() const noexcept { return requests_; }
  std::uint64_t discarded_responses() const noexcept { return discarded_; }
  const ConnectorConfig& config() const noexcept { return config_; }
  const ConnectorModel& model() const noexcept { return model_; }

 private:
  Connector(ConnectorConfig config, ConnectorModel model, Socket socket)
      : config_(std::move(config)), model_(std::move(model)), socket_(std::move(socket)) {}

  ConnectorConfig config_;
  ConnectorModel model_;
  Socket socket_;
  std::uint16_t next_tid_ = 0;
  std::uint64_t requests_ = 0;
  std::uint64_t discarded_ = 0;
};

}  // namespace mbconn
