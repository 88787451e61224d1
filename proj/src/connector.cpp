#include "mbconn/connector.hpp"

#include <array>
#include <thread>

namespace mbconn {

namespace {

std::string exception_name(ExceptionCode c) {
  switch (c) {
    case ExceptionCode::IllegalFunction: return "illegal function";
    case ExceptionCode::IllegalDataAddress: return "illegal data address";
    case ExceptionCode::IllegalDataValue: return "illegal data value";
    case ExceptionCode::ServerDeviceFailure: return "server device failure";
  }
  return "exception";
}

ConnectorError exception_error(const ExceptionResponse& ex, std::optional<SpanRef> span) {
  std::string what = "exception " + std::to_string(static_cast<int>(ex.code)) + " (" +
                     exception_name(ex.code) + ") for function " +
                     std::to_string(ex.function);
  if (span) {
    what += " on " + std::string(to_string(span->space)) + "@" +
            std::to_string(span->start) + "+" + std::to_string(span->count);
  }
  return ConnectorError(ex.function, ex.code, span, what);
}

}  // namespace

std::string_view to_string(ConnectorError::Kind k) {
  switch (k) {
    case ConnectorError::Kind::Connect: return "connect";
    case ConnectorError::Kind::Timeout: return "timeout";
    case ConnectorError::Kind::ConnectionLost: return "connection-lost";
    case ConnectorError::Kind::Exception: return "exception";
    case ConnectorError::Kind::Protocol: return "protocol";
    case ConnectorError::Kind::ReadOnly: return "read-only";
    case ConnectorError::Kind::UnknownField: return "unknown-field";
    case ConnectorError::Kind::Config: return "config";
  }
  return "?";
}

Connector Connector::connect(const ConnectorConfig& config, ConnectorModel model) {
  if (config.response_timeout.count() <= 0 || config.connect_timeout.count() <= 0) {
    throw ConnectorError(ConnectorError::Kind::Config, "timeouts must be positive");
  }
  try {
    auto socket = connect_tcp(config.endpoint, config.connect_timeout);
    return Connector(config, std::move(model), std::move(socket));
  } catch (const NetError& e) {
    throw ConnectorError(e.kind() == NetError::Kind::Timeout ? ConnectorError::Kind::Timeout
                                                             : ConnectorError::Kind::Connect,
                         e.what());
  }
}

ResponsePdu Connector::transact(const RequestPdu& request) {
  if (!socket_) {
    throw ConnectorError(ConnectorError::Kind::ConnectionLost, "not connected");
  }
  const std::uint16_t tid = next_tid_++;
  const auto adu = encode_request(tid, config_.unit_id, request);
  const auto deadline = Clock::now() + config_.response_timeout;

  try {
    send_all(socket_, adu);
    ++requests_;
    std::array<std::uint8_t, kMaxAduSize> buf{};
    for (;;) {
      recv_exact(socket_, std::span(buf).first(kMbapHeaderSize), deadline);
      auto header = parse_mbap_header(std::span(buf).first(kMbapHeaderSize));
      if (!ok(header)) {
        socket_.close();
        throw ConnectorError(ConnectorError::Kind::Protocol,
                             "bad response header: " + std::get<ParseError>(header).message);
      }
      const auto& h = std::get<MbapHeader>(header);
      const std::size_t total = 6u + h.length;
      recv_exact(socket_, std::span(buf).subspan(kMbapHeaderSize, total - kMbapHeaderSize),
                 deadline);

      if (h.transaction_id != tid) {
        // Stale answer to an earlier, timed-out request.
        ++discarded_;
        continue;
      }
      if (h.unit_id != config_.unit_id) {
        throw ConnectorError(ConnectorError::Kind::Protocol,
                             "response from unit " + std::to_string(h.unit_id));
      }
      auto decoded = decode_response(std::span(buf).first(total), &request);
      if (!ok(decoded)) {
        throw ConnectorError(ConnectorError::Kind::Protocol,
                             "bad response: " + std::get<ParseError>(decoded).message);
      }
      return std::get<DecodedResponse>(std::move(decoded)).pdu;
    }
  } catch (const NetError& e) {
    if (e.kind() == NetError::Kind::Timeout) {
      throw ConnectorError(ConnectorError::Kind::Timeout, e.what());
    }
    socket_.close();
    throw ConnectorError(ConnectorError::Kind::ConnectionLost, e.what());
  }
}

Record Connector::read_batch(const BatchPlan& plan) {
  Record record;
  for (const auto& span : plan.spans) {
    const auto request = span.request();
    auto response = transact(request);
    const auto now = Clock::now();

    if (const auto* ex = std::get_if<ExceptionResponse>(&response)) {
      throw exception_error(*ex, SpanRef{span.space, span.start, span.count});
    }
    if (const auto* bits = std::get_if<ReadBitsResponse>(&response)) {
      for (const auto& f : span.fields) {
        if (f.at >= bits->bits.size()) {
          throw ConnectorError(ConnectorError::Kind::Protocol,
                               "short bit payload for '" + f.name + "'");
        }
        record[f.name] = FieldSample{Value{static_cast<bool>(bits->bits[f.at])}, now};
      }
      continue;
    }
    const auto& regs = std::get<ReadRegistersResponse>(response).registers;
    for (const auto& f : span.fields) {
      const auto n = register_count(f.type);
      if (f.at + n > regs.size()) {
        throw ConnectorError(ConnectorError::Kind::Protocol,
                             "short register payload for '" + f.name + "'");
      }
      record[f.name] = FieldSample{
          decode_value(std::span(regs).subspan(f.at, n), f.type, f.order), now};
    }
  }
  return record;
}

void Connector::write_field(std::string_view name, const Value& value) {
  const auto* f = model_.find(name);
  if (!f) {
    throw ConnectorError(ConnectorError::Kind::UnknownField,
                         "unknown field '" + std::string(name) + "'");
  }
  if (!is_writable(f->space) || !f->writable) {
    throw ConnectorError(ConnectorError::Kind::ReadOnly,
                         "read-only field '" + f->name + "'");
  }

  RequestPdu request;
  if (f->type.kind == TypeKind::Bit) {
    bool bit = false;
    if (const auto* b = std::get_if<bool>(&value)) {
      bit = *b;
    } else if (const auto* u = std::get_if<std::uint64_t>(&value); u && *u <= 1) {
      bit = *u == 1;
    } else if (const auto* s = std::get_if<std::int64_t>(&value); s && (*s == 0 || *s == 1)) {
      bit = *s == 1;
    } else {
      throw CodecError(CodecError::Kind::TagMismatch, "bit field needs true/false");
    }
    request = WriteSingleCoil{f->offset, bit};
  } else {
    auto regs = encode_value(value, f->type, model_.order_of(*f));
    if (regs.size() == 1) {
      request = WriteSingleRegister{f->offset, regs.front()};
    } else if (regs.size() > kMaxWriteRegisters) {
      throw CodecError(CodecError::Kind::RangeOverflow,
                       "field '" + f->name + "' exceeds the write limit");
    } else {
      request = WriteMultipleRegisters{f->offset, std::move(regs)};
    }
  }

  auto response = transact(request);
  if (const auto* ex = std::get_if<ExceptionResponse>(&response)) {
    throw exception_error(*ex, SpanRef{f->space, f->offset,
                                       static_cast<std::uint16_t>(span_of(*f))});
  }
}

std::uint64_t Connector::poll(const BatchPlan& plan, const PollOptions& options,
                              const PollSink& sink, std::stop_token stop) {
  if (options.interval.count() <= 0) {
    throw ConnectorError(ConnectorError::Kind::Config, "poll interval must be positive");
  }
  std::uint64_t done = 0;
  auto next = Clock::now();
  while (!stop.stop_requested() && (options.max_polls == 0 || done < options.max_polls)) {
    PollItem item;
    item.sequence = done;
    const auto t0 = Clock::now();
    try {
      item.record = read_batch(plan);
    } catch (const ConnectorError& e) {
      item.error = e;
    } catch (const CodecError& e) {
      item.error = ConnectorError(ConnectorError::Kind::Protocol, e.what());
    }
    item.duration = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0);
    ++done;
    sink(item);
    if (item.error && options.stop_on_error) break;
    if (options.max_polls != 0 && done >= options.max_polls) break;

    next += options.interval;
    const auto now = Clock::now();
    if (next < now) next = now;  // overran: do not burst to catch up
    while (!stop.stop_requested() && Clock::now() < next) {
      const auto left = next - Clock::now();
      std::this_thread::sleep_for(std::min<Clock::duration>(left, std::chrono::milliseconds(5)));
    }
  }
  return done;
}

}  // namespace mbconn
