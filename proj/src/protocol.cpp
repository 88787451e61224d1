#include "mbconn/protocol.hpp"

#include <optional>
#include <string>

namespace mbconn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::uint16_t kCoilOn = 0xFF00;
constexpr std::uint16_t kCoilOff = 0x0000;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  void bits(const std::vector<bool>& values) {
    const std::size_t n = (values.size() + 7) / 8;
    const std::size_t base = out_.size();
    out_.resize(base + n, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i]) out_[base + i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    }
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

std::vector<bool> unpack_bits(std::span<const std::uint8_t> packed,
                              std::size_t count) {
  std::vector<bool> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = (packed[i / 8] >> (i % 8)) & 1u;
  }
  return out;
}

ParseError fail(ParseErrc code, std::string message) {
  return ParseError{code, std::move(message)};
}

void check_range(const char* what, std::uint16_t address, std::size_t quantity,
                 std::size_t max_quantity) {
  if (quantity < 1 || quantity > max_quantity) {
    throw EncodeError(std::string(what) + ": quantity " +
                      std::to_string(quantity) + " outside 1.." +
                      std::to_string(max_quantity));
  }
  if (address + quantity > kAddressSpaceSize) {
    throw EncodeError(std::string(what) + ": address " +
                      std::to_string(address) + " + quantity " +
                      std::to_string(quantity) + " exceeds 65536");
  }
}

// Quantity is checked before address, as a server would.
std::optional<ParseError> check_request_range(std::uint16_t address,
                                              std::size_t quantity,
                                              std::size_t max_quantity) {
  if (quantity < 1 || quantity > max_quantity) {
    return fail(ParseErrc::IllegalQuantity,
                "quantity " + std::to_string(quantity) + " outside 1.." +
                    std::to_string(max_quantity));
  }
  if (address + quantity > kAddressSpaceSize) {
    return fail(ParseErrc::IllegalAddress,
                "address " + std::to_string(address) + " + quantity " +
                    std::to_string(quantity) + " exceeds 65536");
  }
  return std::nullopt;
}

std::optional<RegisterSpace> read_space_for(std::uint8_t function) {
  switch (function) {
    case fc::kReadCoils: return RegisterSpace::Coils;
    case fc::kReadDiscreteInputs: return RegisterSpace::DiscreteInputs;
    case fc::kReadHoldingRegisters: return RegisterSpace::HoldingRegisters;
    case fc::kReadInputRegisters: return RegisterSpace::InputRegisters;
    default: return std::nullopt;
  }
}

std::vector<std::uint8_t> frame(std::uint16_t tid, std::uint8_t unit,
                                std::vector<std::uint8_t> pdu) {
  std::vector<std::uint8_t> out;
  out.reserve(kMbapHeaderSize + pdu.size());
  const auto length = static_cast<std::uint16_t>(pdu.size() + 1);
  out.push_back(static_cast<std::uint8_t>(tid >> 8));
  out.push_back(static_cast<std::uint8_t>(tid & 0xFF));
  out.push_back(0);
  out.push_back(0);
  out.push_back(static_cast<std::uint8_t>(length >> 8));
  out.push_back(static_cast<std::uint8_t>(length & 0xFF));
  out.push_back(unit);
  out.insert(out.end(), pdu.begin(), pdu.end());
  return out;
}

Parsed<MbapHeader> split_adu(std::span<const std::uint8_t> bytes) {
  auto header = parse_mbap_header(bytes);
  if (!ok(header)) return header;
  const auto& h = std::get<MbapHeader>(header);
  if (bytes.size() != 6u + h.length) {
    return fail(ParseErrc::LengthMismatch,
                "header declares length " + std::to_string(h.length) + " but " +
                    std::to_string(bytes.size() - 6) + " bytes follow");
  }
  return header;
}

}  // namespace

std::string_view to_string(RegisterSpace s) {
  switch (s) {
    case RegisterSpace::Coils: return "coils";
    case RegisterSpace::DiscreteInputs: return "discrete_inputs";
    case RegisterSpace::InputRegisters: return "input_registers";
    case RegisterSpace::HoldingRegisters: return "holding_registers";
  }
  return "?";
}

std::string_view to_string(ParseErrc e) {
  switch (e) {
    case ParseErrc::ShortFrame: return "short frame";
    case ParseErrc::LengthMismatch: return "length mismatch";
    case ParseErrc::BadProtocolId: return "nonzero protocol id";
    case ParseErrc::UnknownFunction: return "unknown function code";
    case ParseErrc::IllegalQuantity: return "illegal quantity";
    case ParseErrc::IllegalAddress: return "illegal address";
    case ParseErrc::ByteCountMismatch: return "byte count mismatch";
    case ParseErrc::IllegalCoilValue: return "illegal coil value";
    case ParseErrc::UnexpectedResponse: return "unexpected response";
  }
  return "?";
}

ExceptionCode exception_for(ParseErrc e) {
  switch (e) {
    case ParseErrc::UnknownFunction: return ExceptionCode::IllegalFunction;
    case ParseErrc::IllegalAddress: return ExceptionCode::IllegalDataAddress;
    default: return ExceptionCode::IllegalDataValue;
  }
}

std::uint8_t read_function_for(RegisterSpace s) {
  switch (s) {
    case RegisterSpace::Coils: return fc::kReadCoils;
    case RegisterSpace::DiscreteInputs: return fc::kReadDiscreteInputs;
    case RegisterSpace::InputRegisters: return fc::kReadInputRegisters;
    case RegisterSpace::HoldingRegisters: return fc::kReadHoldingRegisters;
  }
  return 0;
}

std::uint8_t function_code(const RequestPdu& req) {
  return std::visit(
      overloaded{
          [](const ReadRequest& r) { return read_function_for(r.space); },
          [](const WriteSingleCoil&) { return fc::kWriteSingleCoil; },
          [](const WriteSingleRegister&) { return fc::kWriteSingleRegister; },
          [](const WriteMultipleCoils&) { return fc::kWriteMultipleCoils; },
          [](const WriteMultipleRegisters&) {
            return fc::kWriteMultipleRegisters;
          },
      },
      req);
}

std::uint8_t function_code(const ResponsePdu& rsp) {
  return std::visit(
      overloaded{
          [](const ReadBitsResponse& r) { return read_function_for(r.space); },
          [](const ReadRegistersResponse& r) {
            return read_function_for(r.space);
          },
          [](const WriteSingleCoil&) { return fc::kWriteSingleCoil; },
          [](const WriteSingleRegister&) { return fc::kWriteSingleRegister; },
          [](const WriteMultipleResponse& r) { return r.function; },
          [](const ExceptionResponse& r) {
            return static_cast<std::uint8_t>(r.function | fc::kExceptionFlag);
          },
      },
      rsp);
}

// --- Request PDU ------------------------------------------------------------

std::vector<std::uint8_t> encode_request_pdu(const RequestPdu& req) {
  Writer w;
  w.u8(function_code(req));
  std::visit(
      overloaded{
          [&](const ReadRequest& r) {
            check_range("read", r.address, r.quantity,
                        max_read_quantity(r.space));
            w.u16(r.address);
            w.u16(r.quantity);
          },
          [&](const WriteSingleCoil& r) {
            w.u16(r.address);
            w.u16(r.value ? kCoilOn : kCoilOff);
          },
          [&](const WriteSingleRegister& r) {
            w.u16(r.address);
            w.u16(r.value);
          },
          [&](const WriteMultipleCoils& r) {
            check_range("write coils", r.address, r.values.size(),
                        kMaxWriteBits);
            w.u16(r.address);
            w.u16(static_cast<std::uint16_t>(r.values.size()));
            w.u8(static_cast<std::uint8_t>((r.values.size() + 7) / 8));
            w.bits(r.values);
          },
          [&](const WriteMultipleRegisters& r) {
            check_range("write registers", r.address, r.values.size(),
                        kMaxWriteRegisters);
            w.u16(r.address);
            w.u16(static_cast<std::uint16_t>(r.values.size()));
            w.u8(static_cast<std::uint8_t>(r.values.size() * 2));
            for (auto v : r.values) w.u16(v);
          },
      },
      req);
  return w.take();
}

Parsed<RequestPdu> decode_request_pdu(std::span<const std::uint8_t> pdu) {
  if (pdu.empty()) return fail(ParseErrc::ShortFrame, "empty PDU");
  const std::uint8_t function = pdu[0];

  auto need = [&](std::size_t n) -> std::optional<ParseError> {
    if (pdu.size() < n) {
      return fail(ParseErrc::ShortFrame,
                  "function " + std::to_string(function) + " needs " +
                      std::to_string(n) + " bytes, got " +
                      std::to_string(pdu.size()));
    }
    if (pdu.size() > n) {
      return fail(ParseErrc::LengthMismatch,
                  "function " + std::to_string(function) + " expects " +
                      std::to_string(n) + " bytes, got " +
                      std::to_string(pdu.size()));
    }
    return std::nullopt;
  };

  if (auto space = read_space_for(function)) {
    if (auto e = need(5)) return *e;
    ReadRequest r{*space, be16(pdu, 1), be16(pdu, 3)};
    if (auto e = check_request_range(r.address, r.quantity,
                                     max_read_quantity(r.space)))
      return *e;
    return RequestPdu{r};
  }

  switch (function) {
    case fc::kWriteSingleCoil: {
      if (auto e = need(5)) return *e;
      const auto raw = be16(pdu, 3);
      if (raw != kCoilOn && raw != kCoilOff) {
        return fail(ParseErrc::IllegalCoilValue,
                    "coil value must be 0xFF00 or 0x0000");
      }
      return RequestPdu{WriteSingleCoil{be16(pdu, 1), raw == kCoilOn}};
    }
    case fc::kWriteSingleRegister: {
      if (auto e = need(5)) return *e;
      return RequestPdu{WriteSingleRegister{be16(pdu, 1), be16(pdu, 3)}};
    }
    case fc::kWriteMultipleCoils:
    case fc::kWriteMultipleRegisters: {
      const bool coils = function == fc::kWriteMultipleCoils;
      if (pdu.size() < 6) return fail(ParseErrc::ShortFrame, "truncated write");
      const auto address = be16(pdu, 1);
      const auto quantity = be16(pdu, 3);
      const std::size_t byte_count = pdu[5];
      if (auto e = check_request_range(
              address, quantity, coils ? kMaxWriteBits : kMaxWriteRegisters))
        return *e;
      const std::size_t expected =
          coils ? (quantity + 7u) / 8u : quantity * 2u;
      if (byte_count != expected) {
        return fail(ParseErrc::ByteCountMismatch,
                    "byte count " + std::to_string(byte_count) +
                        " does not match quantity " + std::to_string(quantity));
      }
      if (pdu.size() != 6 + byte_count) {
        return fail(ParseErrc::ByteCountMismatch,
                    "byte count " + std::to_string(byte_count) + " but " +
                        std::to_string(pdu.size() - 6) + " payload bytes");
      }
      const auto payload = pdu.subspan(6);
      if (coils) {
        return RequestPdu{
            WriteMultipleCoils{address, unpack_bits(payload, quantity)}};
      }
      WriteMultipleRegisters r{address, {}};
      r.values.reserve(quantity);
      for (std::size_t i = 0; i < quantity; ++i) r.values.push_back(be16(payload, 2 * i));
      return RequestPdu{std::move(r)};
    }
    default:
      return fail(ParseErrc::UnknownFunction,
                  "unsupported function code " + std::to_string(function));
  }
}

// --- Response PDU -----------------------------------------------------------

std::vector<std::uint8_t> encode_response_pdu(const ResponsePdu& rsp) {
  Writer w;
  w.u8(function_code(rsp));
  std::visit(
      overloaded{
          [&](const ReadBitsResponse& r) {
            if (r.bits.empty() || r.bits.size() > kMaxReadBits) {
              throw EncodeError("read bits response: bit count " +
                                std::to_string(r.bits.size()) +
                                " outside 1..2000");
            }
            w.u8(static_cast<std::uint8_t>((r.bits.size() + 7) / 8));
            w.bits(r.bits);
          },
          [&](const ReadRegistersResponse& r) {
            if (r.registers.empty() || r.registers.size() > kMaxReadRegisters) {
              throw EncodeError("read registers response: register count " +
                                std::to_string(r.registers.size()) +
                                " outside 1..125");
            }
            w.u8(static_cast<std::uint8_t>(r.registers.size() * 2));
            for (auto v : r.registers) w.u16(v);
          },
          [&](const WriteSingleCoil& r) {
            w.u16(r.address);
            w.u16(r.value ? kCoilOn : kCoilOff);
          },
          [&](const WriteSingleRegister& r) {
            w.u16(r.address);
            w.u16(r.value);
          },
          [&](const WriteMultipleResponse& r) {
            if (r.function != fc::kWriteMultipleCoils &&
                r.function != fc::kWriteMultipleRegisters) {
              throw EncodeError("write multiple response: bad function code");
            }
            w.u16(r.address);
            w.u16(r.quantity);
          },
          [&](const ExceptionResponse& r) {
            if (r.function & fc::kExceptionFlag) {
              throw EncodeError("exception response: function code " +
                                std::to_string(r.function) +
                                " outside 0..127");
            }
            w.u8(static_cast<std::uint8_t>(r.code));
          },
      },
      rsp);
  return w.take();
}

Parsed<ResponsePdu> decode_response_pdu(std::span<const std::uint8_t> pdu,
                                        const RequestPdu* request) {
  if (pdu.empty()) return fail(ParseErrc::ShortFrame, "empty PDU");
  const std::uint8_t function = pdu[0];

  if (function & fc::kExceptionFlag) {
    if (pdu.size() != 2) {
      return fail(ParseErrc::LengthMismatch,
                  "exception response must be 2 bytes");
    }
    ExceptionResponse ex{static_cast<std::uint8_t>(function & 0x7F),
                         static_cast<ExceptionCode>(pdu[1])};
    if (request && function_code(*request) != ex.function) {
      return fail(ParseErrc::UnexpectedResponse,
                  "exception for function " + std::to_string(ex.function) +
                      " does not match request");
    }
    return ResponsePdu{ex};
  }

  if (request && function_code(*request) != function) {
    return fail(ParseErrc::UnexpectedResponse,
                "response function " + std::to_string(function) +
                    " does not match request function " +
                    std::to_string(function_code(*request)));
  }

  if (auto space = read_space_for(function)) {
    if (pdu.size() < 2) return fail(ParseErrc::ShortFrame, "missing byte count");
    const std::size_t byte_count = pdu[1];
    if (pdu.size() != 2 + byte_count) {
      return fail(ParseErrc::ByteCountMismatch,
                  "byte count " + std::to_string(byte_count) + " but " +
                      std::to_string(pdu.size() - 2) + " payload bytes");
    }
    if (byte_count == 0) {
      return fail(ParseErrc::ByteCountMismatch, "empty read payload");
    }
    const auto payload = pdu.subspan(2);
    const auto* read = request ? std::get_if<ReadRequest>(request) : nullptr;
    if (is_bit_space(*space)) {
      std::size_t count = byte_count * 8;
      if (read) {
        if (byte_count != (read->quantity + 7u) / 8u) {
          return fail(ParseErrc::ByteCountMismatch,
                      "byte count " + std::to_string(byte_count) +
                          " does not cover " + std::to_string(read->quantity) +
                          " bits");
        }
        count = read->quantity;
      }
      return ResponsePdu{ReadBitsResponse{*space, unpack_bits(payload, count)}};
    }
    if (byte_count % 2 != 0) {
      return fail(ParseErrc::ByteCountMismatch, "odd register byte count");
    }
    if (read && byte_count != read->quantity * 2u) {
      return fail(ParseErrc::ByteCountMismatch,
                  "got " + std::to_string(byte_count / 2) +
                      " registers, requested " + std::to_string(read->quantity));
    }
    ReadRegistersResponse r{*space, {}};
    r.registers.reserve(byte_count / 2);
    for (std::size_t i = 0; i < byte_count / 2; ++i) r.registers.push_back(be16(payload, 2 * i));
    return ResponsePdu{std::move(r)};
  }

  switch (function) {
    case fc::kWriteSingleCoil:
    case fc::kWriteSingleRegister:
    case fc::kWriteMultipleCoils:
    case fc::kWriteMultipleRegisters:
      break;
    default:
      return fail(ParseErrc::UnknownFunction,
                  "unsupported function code " + std::to_string(function));
  }
  if (pdu.size() != 5) {
    return fail(pdu.size() < 5 ? ParseErrc::ShortFrame
                               : ParseErrc::LengthMismatch,
                "write response must be 5 bytes");
  }
  const auto address = be16(pdu, 1);
  const auto value = be16(pdu, 3);

  ResponsePdu out;
  switch (function) {
    case fc::kWriteSingleCoil:
      if (value != kCoilOn && value != kCoilOff) {
        return fail(ParseErrc::IllegalCoilValue,
                    "coil value must be 0xFF00 or 0x0000");
      }
      out = WriteSingleCoil{address, value == kCoilOn};
      break;
    case fc::kWriteSingleRegister:
      out = WriteSingleRegister{address, value};
      break;
    default:
      out = WriteMultipleResponse{function, address, value};
      break;
  }

  if (request) {
    const bool matches = std::visit(
        overloaded{
            [&](const WriteSingleCoil& r) {
              return std::get<WriteSingleCoil>(out) == r;
            },
            [&](const WriteSingleRegister& r) {
              return std::get<WriteSingleRegister>(out) == r;
            },
            [&](const WriteMultipleCoils& r) {
              return address == r.address && value == r.values.size();
            },
            [&](const WriteMultipleRegisters& r) {
              return address == r.address && value == r.values.size();
            },
            [](const ReadRequest&) { return false; },
        },
        *request);
    if (!matches) {
      return fail(ParseErrc::UnexpectedResponse,
                  "write acknowledgement does not echo the request");
    }
  }
  return out;
}

// --- ADU --------------------------------------------------------------------

Parsed<MbapHeader> parse_mbap_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMbapHeaderSize) {
    return fail(ParseErrc::ShortFrame,
                "need 7 header bytes, got " + std::to_string(bytes.size()));
  }
  MbapHeader h{be16(bytes, 0), be16(bytes, 2), be16(bytes, 4), bytes[6]};
  if (h.protocol_id != 0) {
    return fail(ParseErrc::BadProtocolId,
                "protocol id " + std::to_string(h.protocol_id));
  }
  if (h.length < 2) {
    return fail(ParseErrc::ShortFrame, "length field leaves no PDU");
  }
  if (h.length > kMaxPduSize + 1) {
    return fail(ParseErrc::LengthMismatch,
                "length field " + std::to_string(h.length) + " exceeds 254");
  }
  return h;
}

std::vector<std::uint8_t> encode_request(std::uint16_t transaction_id,
                                         std::uint8_t unit_id,
                                         const RequestPdu& req) {
  return frame(transaction_id, unit_id, encode_request_pdu(req));
}

Parsed<DecodedRequest> decode_request(std::span<const std::uint8_t> bytes) {
  auto header = split_adu(bytes);
  if (!ok(header)) return std::get<ParseError>(std::move(header));
  auto pdu = decode_request_pdu(bytes.subspan(kMbapHeaderSize));
  if (!ok(pdu)) return std::get<ParseError>(std::move(pdu));
  return DecodedRequest{std::get<MbapHeader>(header),
                        std::get<RequestPdu>(std::move(pdu))};
}

std::vector<std::uint8_t> encode_response(std::uint16_t transaction_id,
                                          std::uint8_t unit_id,
                                          const ResponsePdu& rsp) {
  return frame(transaction_id, unit_id, encode_response_pdu(rsp));
}

Parsed<DecodedResponse> decode_response(std::span<const std::uint8_t> bytes,
                                        const RequestPdu* request) {
  auto header = split_adu(bytes);
  if (!ok(header)) return std::get<ParseError>(std::move(header));
  auto pdu = decode_response_pdu(bytes.subspan(kMbapHeaderSize), request);
  if (!ok(pdu)) return std::get<ParseError>(std::move(pdu));
  return DecodedResponse{std::get<MbapHeader>(header),
                         std::get<ResponsePdu>(std::move(pdu))};
}

}  // namespace mbconn
