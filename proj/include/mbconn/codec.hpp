#pragma once

// Typed values <-> 16-bit register sequences under a vendor byte order.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mbconn {

enum class TypeKind : std::uint8_t {
  Bit,
  UInt16,
  Int16,
  UInt32,
  Int32,
  UInt64,
  Int64,
  Float32,
  Float64,
  AsciiString,
};

struct DataType {
  TypeKind kind = TypeKind::UInt16;
  // Register count, only meaningful for AsciiString.
  std::uint16_t length = 0;

  static DataType ascii(std::uint16_t registers) {
    return {TypeKind::AsciiString, registers};
  }
  bool operator==(const DataType&) const = default;
};

// Bit lives in the bit spaces and occupies no registers.
std::size_t register_count(DataType t);
std::string to_string(DataType t);
// Accepts e.g. "float32", "u16", "ascii(8)".
std::optional<DataType> parse_data_type(std::string_view text);

enum class ByteOrder : std::uint8_t {
  BigEndian,                // A B C D
  LittleEndian,             // D C B A
  BigEndianWordSwapped,     // C D A B
  LittleEndianWordSwapped,  // B A D C
};

inline constexpr ByteOrder kAllOrders[] = {
    ByteOrder::BigEndian, ByteOrder::LittleEndian,
    ByteOrder::BigEndianWordSwapped, ByteOrder::LittleEndianWordSwapped};

std::string_view to_string(ByteOrder o);
// Accepts big, little, big-swap, little-swap and the device presets
// sentron (big) and eem (little).
std::optional<ByteOrder> parse_byte_order(std::string_view text);

// bool for Bit, int64 for signed, uint64 for unsigned, double for floats,
// string for AsciiString.
using Value = std::variant<bool, std::int64_t, std::uint64_t, double, std::string>;

class CodecError : public std::runtime_error {
 public:
  enum class Kind { LengthMismatch, RangeOverflow, TagMismatch, NonAscii, BitType };
  CodecError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Single-register values are order independent: a 16-bit register is always
// big-endian on the wire. AsciiString under the little orders swaps the two
// characters within each register but never reorders registers.
Value decode_value(std::span<const std::uint16_t> registers, DataType type,
                   ByteOrder order);

// Floats are range checked against the target width; a float32 NaN keeps its
// payload but signaling NaNs come back quieted.
std::vector<std::uint16_t> encode_value(const Value& value, DataType type,
                                        ByteOrder order);

std::vector<std::uint16_t> swap_words(std::span<const std::uint16_t> registers);

// Text form used by the CLI and the profile documents.
Value parse_value(std::string_view text, DataType type);
std::string format_value(const Value& value, DataType type);

}  // namespace mbconn
