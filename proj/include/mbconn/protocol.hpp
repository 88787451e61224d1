#pragma once

// Modbus/TCP application data units: MBAP header + PDU, bit-exact.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mbconn {

enum class RegisterSpace : std::uint8_t {
  Coils,
  DiscreteInputs,
  InputRegisters,
  HoldingRegisters,
};

inline constexpr RegisterSpace kAllSpaces[] = {
    RegisterSpace::Coils, RegisterSpace::DiscreteInputs,
    RegisterSpace::InputRegisters, RegisterSpace::HoldingRegisters};

constexpr bool is_bit_space(RegisterSpace s) {
  return s == RegisterSpace::Coils || s == RegisterSpace::DiscreteInputs;
}

constexpr bool is_writable(RegisterSpace s) {
  return s == RegisterSpace::Coils || s == RegisterSpace::HoldingRegisters;
}

std::string_view to_string(RegisterSpace s);

namespace fc {
inline constexpr std::uint8_t kReadCoils = 0x01;
inline constexpr std::uint8_t kReadDiscreteInputs = 0x02;
inline constexpr std::uint8_t kReadHoldingRegisters = 0x03;
inline constexpr std::uint8_t kReadInputRegisters = 0x04;
inline constexpr std::uint8_t kWriteSingleCoil = 0x05;
inline constexpr std::uint8_t kWriteSingleRegister = 0x06;
inline constexpr std::uint8_t kWriteMultipleCoils = 0x0F;
inline constexpr std::uint8_t kWriteMultipleRegisters = 0x10;
inline constexpr std::uint8_t kExceptionFlag = 0x80;
}  // namespace fc

std::uint8_t read_function_for(RegisterSpace s);

enum class ExceptionCode : std::uint8_t {
  IllegalFunction = 0x01,
  IllegalDataAddress = 0x02,
  IllegalDataValue = 0x03,
  ServerDeviceFailure = 0x04,
};

// Protocol limits per request.
inline constexpr std::uint16_t kMaxReadRegisters = 125;
inline constexpr std::uint16_t kMaxReadBits = 2000;
inline constexpr std::uint16_t kMaxWriteRegisters = 123;
inline constexpr std::uint16_t kMaxWriteBits = 1968;
inline constexpr std::size_t kAddressSpaceSize = 65536;

inline constexpr std::size_t kMbapHeaderSize = 7;
inline constexpr std::size_t kMaxPduSize = 253;
inline constexpr std::size_t kMaxAduSize = kMbapHeaderSize + kMaxPduSize;

constexpr std::uint16_t max_read_quantity(RegisterSpace s) {
  return is_bit_space(s) ? kMaxReadBits : kMaxReadRegisters;
}

struct MbapHeader {
  std::uint16_t transaction_id = 0;
  std::uint16_t protocol_id = 0;
  // Bytes following the length field: unit id + PDU.
  std::uint16_t length = 0;
  std::uint8_t unit_id = 0;

  bool operator==(const MbapHeader&) const = default;
};

// --- Requests ---------------------------------------------------------------

// Covers function codes 0x01..0x04; the space selects the function code.
struct ReadRequest {
  RegisterSpace space = RegisterSpace::HoldingRegisters;
  std::uint16_t address = 0;
  std::uint16_t quantity = 0;
  bool operator==(const ReadRequest&) const = default;
};

struct WriteSingleCoil {
  std::uint16_t address = 0;
  bool value = false;
  bool operator==(const WriteSingleCoil&) const = default;
};

struct WriteSingleRegister {
  std::uint16_t address = 0;
  std::uint16_t value = 0;
  bool operator==(const WriteSingleRegister&) const = default;
};

struct WriteMultipleCoils {
  std::uint16_t address = 0;
  std::vector<bool> values;
  bool operator==(const WriteMultipleCoils&) const = default;
};

struct WriteMultipleRegisters {
  std::uint16_t address = 0;
  std::vector<std::uint16_t> values;
  bool operator==(const WriteMultipleRegisters&) const = default;
};

using RequestPdu = std::variant<ReadRequest, WriteSingleCoil,
                                WriteSingleRegister, WriteMultipleCoils,
                                WriteMultipleRegisters>;

std::uint8_t function_code(const RequestPdu& req);

// --- Responses --------------------------------------------------------------

struct ReadBitsResponse {
  RegisterSpace space = RegisterSpace::Coils;
  std::vector<bool> bits;
  bool operator==(const ReadBitsResponse&) const = default;
};

struct ReadRegistersResponse {
  RegisterSpace space = RegisterSpace::HoldingRegisters;
  std::vector<std::uint16_t> registers;
  bool operator==(const ReadRegistersResponse&) const = default;
};

// Acknowledgement for 0x0F / 0x10.
struct WriteMultipleResponse {
  std::uint8_t function = fc::kWriteMultipleRegisters;
  std::uint16_t address = 0;
  std::uint16_t quantity = 0;
  bool operator==(const WriteMultipleResponse&) const = default;
};

struct ExceptionResponse {
  // Function code of the failed request, without the 0x80 flag.
  std::uint8_t function = 0;
  ExceptionCode code = ExceptionCode::IllegalFunction;
  bool operator==(const ExceptionResponse&) const = default;
};

// Single writes are answered with an echo of the request.
using ResponsePdu =
    std::variant<ReadBitsResponse, ReadRegistersResponse, WriteSingleCoil,
                 WriteSingleRegister, WriteMultipleResponse, ExceptionResponse>;

std::uint8_t function_code(const ResponsePdu& rsp);

// --- Errors -----------------------------------------------------------------

class EncodeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ParseErrc {
  ShortFrame,
  LengthMismatch,
  BadProtocolId,
  UnknownFunction,
  IllegalQuantity,
  IllegalAddress,
  ByteCountMismatch,
  IllegalCoilValue,
  UnexpectedResponse,
};

std::string_view to_string(ParseErrc e);

struct ParseError {
  ParseErrc code;
  std::string message;
};

// Decoders are total: every input yields a value or a ParseError.
template <class T>
using Parsed = std::variant<T, ParseError>;

template <class T>
bool ok(const Parsed<T>& p) {
  return std::holds_alternative<T>(p);
}

// Exception code a server answers with when a request PDU fails to parse.
ExceptionCode exception_for(ParseErrc e);

struct DecodedRequest {
  MbapHeader header;
  RequestPdu pdu;
};

struct DecodedResponse {
  MbapHeader header;
  ResponsePdu pdu;
};

// --- PDU level --------------------------------------------------------------

std::vector<std::uint8_t> encode_request_pdu(const RequestPdu& req);
Parsed<RequestPdu> decode_request_pdu(std::span<const std::uint8_t> pdu);

std::vector<std::uint8_t> encode_response_pdu(const ResponsePdu& rsp);

// With `request` given, the response is also checked against it: function
// code, register/bit count and write echo. Bit lists are trimmed to the
// requested quantity. Without it, bit lists hold byte_count * 8 bits.
Parsed<ResponsePdu> decode_response_pdu(std::span<const std::uint8_t> pdu,
                                        const RequestPdu* request = nullptr);

// --- ADU level --------------------------------------------------------------

// Validates the 7-byte prefix of a frame. Length must be in 2..254.
Parsed<MbapHeader> parse_mbap_header(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_request(std::uint16_t transaction_id,
                                         std::uint8_t unit_id,
                                         const RequestPdu& req);
Parsed<DecodedRequest> decode_request(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_response(std::uint16_t transaction_id,
                                          std::uint8_t unit_id,
                                          const ResponsePdu& rsp);
Parsed<DecodedResponse> decode_response(std::span<const std::uint8_t> bytes,
                                        const RequestPdu* request = nullptr);

}  // namespace mbconn
