#pragma once

// Declarative connector models: a device block plus a flat table of fields,
// each with a register space, offset, data type and optional byte order.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mbconn/codec.hpp"
#include "mbconn/net.hpp"
#include "mbconn/protocol.hpp"

namespace mbconn {

inline constexpr int kModelFormatVersion = 1;

// "holding", "input", "coil", "discrete" and their long forms.
std::optional<RegisterSpace> parse_register_space(std::string_view text);

struct FieldSpec {
  std::string name;
  RegisterSpace space = RegisterSpace::HoldingRegisters;
  std::uint16_t offset = 0;
  DataType type;
  std::optional<ByteOrder> order;  // falls back to the model default
  bool writable = false;

  bool operator==(const FieldSpec&) const = default;
};

struct ConnectorModel {
  std::string device_name = "device";
  Endpoint endpoint;
  std::uint8_t unit_id = 1;
  ByteOrder default_order = ByteOrder::BigEndian;
  std::vector<FieldSpec> fields;

  ByteOrder order_of(const FieldSpec& f) const {
    return f.order.value_or(default_order);
  }
  const FieldSpec* find(std::string_view name) const;
  bool operator==(const ConnectorModel&) const = default;
};

class ModelError : public std::runtime_error {
 public:
  ModelError(std::size_t line, std::string field, const std::string& message);
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

// Throws ModelError with line and field context.
ConnectorModel parse_model(std::string_view document);
ConnectorModel load_model(const std::string& path);

// Writes a document that parse_model reads back to an equal model.
std::string format_model(const ConnectorModel& model);

enum class Severity { Error, Warning };

struct Violation {
  Severity severity = Severity::Error;
  std::string field;
  std::string rule;
  std::string detail;

  bool operator==(const Violation&) const = default;
};

namespace rule {
inline constexpr std::string_view kTypeNotApplicable = "type not applicable to space";
inline constexpr std::string_view kExceedsAddressSpace = "exceeds address space";
inline constexpr std::string_view kExceedsRequestLimit = "exceeds request limit";
inline constexpr std::string_view kWritableReadOnly = "writable field in read-only space";
inline constexpr std::string_view kDuplicateName = "duplicate field name";
inline constexpr std::string_view kInvalidName = "invalid field name";
inline constexpr std::string_view kOverlap = "overlapping fields";
}  // namespace rule

// Sorted by (field, rule, detail), so the result does not depend on the
// order fields were declared in. Overlaps are warnings.
std::vector<Violation> validate(const ConnectorModel& model);
bool has_errors(const std::vector<Violation>& violations);
std::string to_string(const Violation& v);

// Registers (or bits) a field occupies: [offset, offset + span_of(f)).
std::size_t span_of(const FieldSpec& f);

}  // namespace mbconn
