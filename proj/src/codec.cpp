#include "mbconn/codec.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>

namespace mbconn {

namespace {

CodecError error(CodecError::Kind kind, std::string what) {
  return CodecError(kind, what);
}

struct IntRange {
  bool is_signed;
  std::int64_t min;
  std::uint64_t max;
};

IntRange int_range(TypeKind k) {
  switch (k) {
    case TypeKind::UInt16: return {false, 0, 0xFFFF};
    case TypeKind::Int16: return {true, -32768, 32767};
    case TypeKind::UInt32: return {false, 0, 0xFFFFFFFFu};
    case TypeKind::Int32: return {true, std::numeric_limits<std::int32_t>::min(), std::numeric_limits<std::int32_t>::max()};
    case TypeKind::UInt64: return {false, 0, std::numeric_limits<std::uint64_t>::max()};
    default: return {true, std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::max()};
  }
}

bool is_integer(TypeKind k) {
  return k == TypeKind::UInt16 || k == TypeKind::Int16 ||
         k == TypeKind::UInt32 || k == TypeKind::Int32 ||
         k == TypeKind::UInt64 || k == TypeKind::Int64;
}

bool is_float(TypeKind k) {
  return k == TypeKind::Float32 || k == TypeKind::Float64;
}

// Each order is an involution on the register list, so the same transform
// maps wire registers to big-endian registers and back.
std::vector<std::uint16_t> reorder(std::span<const std::uint16_t> regs,
                                   TypeKind kind, ByteOrder order) {
  std::vector<std::uint16_t> out(regs.begin(), regs.end());
  auto byteswap_each = [&] {
    for (auto& r : out) r = static_cast<std::uint16_t>((r << 8) | (r >> 8));
  };
  if (kind == TypeKind::AsciiString) {
    if (order == ByteOrder::LittleEndian ||
        order == ByteOrder::LittleEndianWordSwapped) {
      byteswap_each();
    }
    return out;
  }
  if (out.size() <= 1) return out;
  switch (order) {
    case ByteOrder::BigEndian:
      break;
    case ByteOrder::LittleEndian:
      std::reverse(out.begin(), out.end());
      byteswap_each();
      break;
    case ByteOrder::BigEndianWordSwapped:
      std::reverse(out.begin(), out.end());
      break;
    case ByteOrder::LittleEndianWordSwapped:
      byteswap_each();
      break;
  }
  return out;
}

std::uint64_t to_bits(std::span<const std::uint16_t> be) {
  std::uint64_t v = 0;
  for (auto r : be) v = (v << 16) | r;
  return v;
}

std::vector<std::uint16_t> from_bits(std::uint64_t v, std::size_t count) {
  std::vector<std::uint16_t> out(count);
  for (std::size_t i = count; i-- > 0;) {
    out[i] = static_cast<std::uint16_t>(v & 0xFFFF);
    v >>= 16;
  }
  return out;
}

std::int64_t sign_extend(std::uint64_t raw, unsigned bits) {
  if (bits == 64) return static_cast<std::int64_t>(raw);
  const std::uint64_t sign = 1ull << (bits - 1);
  return static_cast<std::int64_t>((raw ^ sign) - sign);
}

// Integer payload of any integer-tagged value, range checked for `kind`.
std::uint64_t integer_bits(const Value& value, TypeKind kind, DataType type) {
  const auto range = int_range(kind);
  if (const auto* s = std::get_if<std::int64_t>(&value)) {
    if (*s < range.min || (*s >= 0 && static_cast<std::uint64_t>(*s) > range.max)) {
      throw error(CodecError::Kind::RangeOverflow,
                  std::to_string(*s) + " out of range for " + to_string(type));
    }
    return static_cast<std::uint64_t>(*s);
  }
  if (const auto* u = std::get_if<std::uint64_t>(&value)) {
    if (*u > range.max) {
      throw error(CodecError::Kind::RangeOverflow,
                  std::to_string(*u) + " out of range for " + to_string(type));
    }
    return *u;
  }
  throw error(CodecError::Kind::TagMismatch,
              "integer value required for " + to_string(type));
}

double float_of(const Value& value, DataType type) {
  if (const auto* d = std::get_if<double>(&value)) return *d;
  if (const auto* s = std::get_if<std::int64_t>(&value)) return static_cast<double>(*s);
  if (const auto* u = std::get_if<std::uint64_t>(&value)) return static_cast<double>(*u);
  throw error(CodecError::Kind::TagMismatch,
              "numeric value required for " + to_string(type));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

template <class T>
std::string shortest(T v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  if (std::isfinite(v) && s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

std::size_t register_count(DataType t) {
  switch (t.kind) {
    case TypeKind::Bit: return 0;
    case TypeKind::UInt16:
    case TypeKind::Int16: return 1;
    case TypeKind::UInt32:
    case TypeKind::Int32:
    case TypeKind::Float32: return 2;
    case TypeKind::UInt64:
    case TypeKind::Int64:
    case TypeKind::Float64: return 4;
    case TypeKind::AsciiString: return t.length;
  }
  return 0;
}

std::string to_string(DataType t) {
  switch (t.kind) {
    case TypeKind::Bit: return "bit";
    case TypeKind::UInt16: return "uint16";
    case TypeKind::Int16: return "int16";
    case TypeKind::UInt32: return "uint32";
    case TypeKind::Int32: return "int32";
    case TypeKind::UInt64: return "uint64";
    case TypeKind::Int64: return "int64";
    case TypeKind::Float32: return "float32";
    case TypeKind::Float64: return "float64";
    case TypeKind::AsciiString: return "ascii(" + std::to_string(t.length) + ")";
  }
  return "?";
}

std::optional<DataType> parse_data_type(std::string_view text) {
  const auto s = lower(trim(text));
  static constexpr std::pair<std::string_view, TypeKind> kNames[] = {
      {"bit", TypeKind::Bit},         {"bool", TypeKind::Bit},
      {"uint16", TypeKind::UInt16},   {"u16", TypeKind::UInt16},
      {"int16", TypeKind::Int16},     {"i16", TypeKind::Int16},
      {"uint32", TypeKind::UInt32},   {"u32", TypeKind::UInt32},
      {"int32", TypeKind::Int32},     {"i32", TypeKind::Int32},
      {"uint64", TypeKind::UInt64},   {"u64", TypeKind::UInt64},
      {"int64", TypeKind::Int64},     {"i64", TypeKind::Int64},
      {"float32", TypeKind::Float32}, {"f32", TypeKind::Float32},
      {"float64", TypeKind::Float64}, {"f64", TypeKind::Float64},
  };
  for (auto [name, kind] : kNames) {
    if (s == name) return DataType{kind, 0};
  }
  for (std::string_view prefix : {"ascii(", "string("}) {
    if (s.starts_with(prefix) && s.ends_with(')')) {
      const auto digits = std::string_view(s).substr(prefix.size(), s.size() - prefix.size() - 1);
      unsigned n = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
      if (ec != std::errc{} || p != digits.data() + digits.size() || n < 1 || n > 0xFFFF) {
        return std::nullopt;
      }
      return DataType::ascii(static_cast<std::uint16_t>(n));
    }
  }
  return std::nullopt;
}

std::string_view to_string(ByteOrder o) {
  switch (o) {
    case ByteOrder::BigEndian: return "big";
    case ByteOrder::LittleEndian: return "little";
    case ByteOrder::BigEndianWordSwapped: return "big-swap";
    case ByteOrder::LittleEndianWordSwapped: return "little-swap";
  }
  return "?";
}

std::optional<ByteOrder> parse_byte_order(std::string_view text) {
  const auto s = lower(trim(text));
  if (s == "big" || s == "big-endian" || s == "be" || s == "abcd" || s == "sentron")
    return ByteOrder::BigEndian;
  if (s == "little" || s == "little-endian" || s == "le" || s == "dcba" || s == "eem")
    return ByteOrder::LittleEndian;
  if (s == "big-swap" || s == "big-endian-word-swapped" || s == "cdab")
    return ByteOrder::BigEndianWordSwapped;
  if (s == "little-swap" || s == "little-endian-word-swapped" || s == "badc")
    return ByteOrder::LittleEndianWordSwapped;
  return std::nullopt;
}

std::vector<std::uint16_t> swap_words(std::span<const std::uint16_t> registers) {
  return {registers.rbegin(), registers.rend()};
}

Value decode_value(std::span<const std::uint16_t> registers, DataType type,
                   ByteOrder order) {
  if (type.kind == TypeKind::Bit) {
    throw error(CodecError::Kind::BitType, "bit values are not register encoded");
  }
  if (registers.size() != register_count(type)) {
    throw error(CodecError::Kind::LengthMismatch,
                to_string(type) + " needs " + std::to_string(register_count(type)) +
                    " registers, got " + std::to_string(registers.size()));
  }
  const auto be = reorder(registers, type.kind, order);

  if (type.kind == TypeKind::AsciiString) {
    std::string text;
    text.reserve(be.size() * 2);
    for (auto r : be) {
      text.push_back(static_cast<char>(r >> 8));
      text.push_back(static_cast<char>(r & 0xFF));
    }
    while (!text.empty() && text.back() == '\0') text.pop_back();
    return text;
  }

  const std::uint64_t raw = to_bits(be);
  switch (type.kind) {
    case TypeKind::UInt16:
    case TypeKind::UInt32:
    case TypeKind::UInt64:
      return raw;
    case TypeKind::Int16: return sign_extend(raw, 16);
    case TypeKind::Int32: return sign_extend(raw, 32);
    case TypeKind::Int64: return sign_extend(raw, 64);
    case TypeKind::Float32:
      return static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw)));
    case TypeKind::Float64:
      return std::bit_cast<double>(raw);
    default:
      break;
  }
  throw error(CodecError::Kind::TagMismatch, "unsupported type");
}

std::vector<std::uint16_t> encode_value(const Value& value, DataType type,
                                        ByteOrder order) {
  const std::size_t count = register_count(type);
  std::vector<std::uint16_t> be;

  if (type.kind == TypeKind::Bit) {
    throw error(CodecError::Kind::BitType, "bit values are not register encoded");
  } else if (type.kind == TypeKind::AsciiString) {
    const auto* text = std::get_if<std::string>(&value);
    if (!text) {
      throw error(CodecError::Kind::TagMismatch, "text value required for " + to_string(type));
    }
    if (text->size() > count * 2) {
      throw error(CodecError::Kind::RangeOverflow,
                  "text of " + std::to_string(text->size()) + " chars exceeds " +
                      to_string(type));
    }
    for (unsigned char c : *text) {
      if (c == 0 || c > 0x7F) {
        throw error(CodecError::Kind::NonAscii, "text contains non-ASCII byte");
      }
    }
    std::string padded = *text;
    padded.resize(count * 2, '\0');
    be.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      be[i] = static_cast<std::uint16_t>(
          (static_cast<unsigned char>(padded[2 * i]) << 8) |
          static_cast<unsigned char>(padded[2 * i + 1]));
    }
  } else if (is_integer(type.kind)) {
    if (std::holds_alternative<bool>(value) || std::holds_alternative<double>(value) ||
        std::holds_alternative<std::string>(value)) {
      throw error(CodecError::Kind::TagMismatch,
                  "integer value required for " + to_string(type));
    }
    std::uint64_t raw = integer_bits(value, type.kind, type);
    if (count < 4) raw &= (1ull << (16 * count)) - 1;
    be = from_bits(raw, count);
  } else if (is_float(type.kind)) {
    const double d = float_of(value, type);
    if (type.kind == TypeKind::Float32) {
      if (std::isfinite(d) && std::fabs(d) > std::numeric_limits<float>::max()) {
        throw error(CodecError::Kind::RangeOverflow,
                    std::to_string(d) + " out of range for float32");
      }
      be = from_bits(std::bit_cast<std::uint32_t>(static_cast<float>(d)), 2);
    } else {
      be = from_bits(std::bit_cast<std::uint64_t>(d), 4);
    }
  }
  return reorder(be, type.kind, order);
}

Value parse_value(std::string_view text, DataType type) {
  const auto t = trim(text);
  auto bad = [&] {
    return error(CodecError::Kind::TagMismatch,
                 "cannot parse '" + std::string(t) + "' as " + to_string(type));
  };
  switch (type.kind) {
    case TypeKind::Bit: {
      const auto s = lower(t);
      if (s == "1" || s == "true" || s == "on") return true;
      if (s == "0" || s == "false" || s == "off") return false;
      throw bad();
    }
    case TypeKind::AsciiString:
      return std::string(t);
    case TypeKind::Float32:
    case TypeKind::Float64: {
      double d = 0;
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), d);
      if (ec != std::errc{} || p != t.data() + t.size()) throw bad();
      return d;
    }
    default: {
      int base = 10;
      std::string_view digits = t;
      bool negative = false;
      if (digits.starts_with('-')) {
        negative = true;
        digits.remove_prefix(1);
      }
      if (digits.starts_with("0x") || digits.starts_with("0X")) {
        base = 16;
        digits.remove_prefix(2);
      }
      std::uint64_t magnitude = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), magnitude, base);
      if (ec == std::errc::result_out_of_range) {
        throw error(CodecError::Kind::RangeOverflow,
                    std::string(t) + " out of range for " + to_string(type));
      }
      if (ec != std::errc{} || p != digits.data() + digits.size() || digits.empty()) throw bad();
      if (!negative) return magnitude;
      if (magnitude > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()) + 1) {
        throw error(CodecError::Kind::RangeOverflow,
                    std::string(t) + " out of range for " + to_string(type));
      }
      return static_cast<std::int64_t>(0 - magnitude);
    }
  }
}

std::string format_value(const Value& value, DataType type) {
  return std::visit(
      [&](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, double>) {
          if (type.kind == TypeKind::Float32) return shortest(static_cast<float>(v));
          return shortest(v);
        } else if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else {
          return std::to_string(v);
        }
      },
      value);
}

}  // namespace mbconn
