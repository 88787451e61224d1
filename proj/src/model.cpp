#include "mbconn/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>
#include <tuple>

#include "mbconn/document.hpp"

namespace mbconn {

namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const auto start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::optional<std::uint64_t> parse_number(std::string_view s) {
  int base = 10;
  if (s.starts_with("0x") || s.starts_with("0X")) {
    base = 16;
    s.remove_prefix(2);
  }
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string_view short_name(RegisterSpace s) {
  switch (s) {
    case RegisterSpace::Coils: return "coil";
    case RegisterSpace::DiscreteInputs: return "discrete";
    case RegisterSpace::InputRegisters: return "input";
    case RegisterSpace::HoldingRegisters: return "holding";
  }
  return "?";
}

bool is_nested_marker(std::string_view v) {
  return v.starts_with('{') || v.starts_with('[') || v == "struct" ||
         v == "record" || v == "array";
}

bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  const auto first = static_cast<unsigned char>(s.front());
  if (!(std::isalpha(first) || first == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
}

FieldSpec parse_field(const DocEntry& e) {
  auto err = [&](const std::string& msg) {
    return ModelError(e.line, e.key, msg);
  };
  if (e.key.find('.') != std::string::npos || is_nested_marker(e.value)) {
    throw err("nested types prohibited");
  }
  const auto tokens = split_ws(e.value);
  if (tokens.empty()) throw err("missing space, offset and type");

  FieldSpec f;
  f.name = e.key;

  const auto location = tokens[0];
  const auto at = location.find('@');
  if (at == std::string_view::npos) {
    if (parse_register_space(location)) throw err("missing offset");
    if (parse_data_type(location)) throw err("missing space and offset");
    throw err("expected <space>@<offset>, got '" + std::string(location) + "'");
  }
  const auto space_text = location.substr(0, at);
  const auto offset_text = location.substr(at + 1);
  if (space_text.empty()) throw err("missing space");
  auto space = parse_register_space(space_text);
  if (!space) throw err("unknown space '" + std::string(space_text) + "'");
  f.space = *space;
  if (offset_text.empty()) throw err("missing offset");
  auto offset = parse_number(offset_text);
  if (!offset) throw err("malformed number '" + std::string(offset_text) + "'");
  if (*offset > 0xFFFF) {
    throw err("offset " + std::to_string(*offset) + " outside 0..65535");
  }
  f.offset = static_cast<std::uint16_t>(*offset);

  if (tokens.size() < 2) throw err("missing type");
  if (is_nested_marker(tokens[1])) throw err("nested types prohibited");
  auto type = parse_data_type(tokens[1]);
  if (!type) throw err("unknown type '" + std::string(tokens[1]) + "'");
  f.type = *type;

  for (std::size_t i = 2; i < tokens.size(); ++i) {
    const auto t = tokens[i];
    if (t == "writable" || t == "rw") {
      f.writable = true;
    } else if (t == "readonly" || t == "ro") {
      f.writable = false;
    } else if (t.starts_with("order=")) {
      auto order = parse_byte_order(t.substr(6));
      if (!order) throw err("unknown byte order '" + std::string(t.substr(6)) + "'");
      f.order = *order;
    } else {
      throw err("unknown attribute '" + std::string(t) + "'");
    }
  }
  return f;
}

}  // namespace

std::optional<RegisterSpace> parse_register_space(std::string_view s) {
  static constexpr std::pair<std::string_view, RegisterSpace> kNames[] = {
      {"coil", RegisterSpace::Coils},
      {"coils", RegisterSpace::Coils},
      {"discrete", RegisterSpace::DiscreteInputs},
      {"discrete_input", RegisterSpace::DiscreteInputs},
      {"discrete_inputs", RegisterSpace::DiscreteInputs},
      {"input", RegisterSpace::InputRegisters},
      {"input_register", RegisterSpace::InputRegisters},
      {"input_registers", RegisterSpace::InputRegisters},
      {"holding", RegisterSpace::HoldingRegisters},
      {"holding_register", RegisterSpace::HoldingRegisters},
      {"holding_registers", RegisterSpace::HoldingRegisters},
  };
  for (auto [name, space] : kNames) {
    if (s == name) return space;
  }
  return std::nullopt;
}

const FieldSpec* ConnectorModel::find(std::string_view name) const {
  for (const auto& f : fields) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

ModelError::ModelError(std::size_t line, std::string field,
                       const std::string& message)
    : std::runtime_error((line ? "line " + std::to_string(line) + ": " : std::string()) +
                         (field.empty() ? std::string() : "field '" + field + "': ") +
                         message),
      line_(line),
      field_(std::move(field)) {}

ConnectorModel parse_model(std::string_view text) {
  Document doc;
  try {
    doc = parse_document(text);
  } catch (const DocumentError& e) {
    throw ModelError(e.line(), "", e.message());
  }

  ConnectorModel model;
  for (const auto& e : doc.sections.front().entries) {
    if (e.key != "format") throw ModelError(e.line, "", "unknown key '" + e.key + "'");
    auto v = parse_number(e.value);
    if (!v) throw ModelError(e.line, "", "malformed number '" + e.value + "'");
    if (*v != kModelFormatVersion) {
      throw ModelError(e.line, "", "unsupported format version " + e.value);
    }
  }

  const DocSection* device = nullptr;
  const DocSection* fields = nullptr;
  for (std::size_t i = 1; i < doc.sections.size(); ++i) {
    const auto& s = doc.sections[i];
    if (s.name == "device") {
      device = &s;
    } else if (s.name == "fields") {
      fields = &s;
    } else if (s.name.find('.') != std::string::npos) {
      throw ModelError(s.line, "", "nested types prohibited: [" + s.name + "]");
    } else {
      throw ModelError(s.line, "", "unknown section [" + s.name + "]");
    }
  }
  if (!device) throw ModelError(0, "", "missing [device] section");

  bool have_order = false;
  for (const auto& e : device->entries) {
    if (e.key == "name") {
      model.device_name = e.value;
    } else if (e.key == "endpoint") {
      auto ep = Endpoint::parse(e.value);
      if (!ep) throw ModelError(e.line, "", "malformed endpoint '" + e.value + "'");
      model.endpoint = *ep;
    } else if (e.key == "unit") {
      auto v = parse_number(e.value);
      if (!v) throw ModelError(e.line, "", "malformed number '" + e.value + "'");
      if (*v > 255) throw ModelError(e.line, "", "unit " + e.value + " outside 0..255");
      model.unit_id = static_cast<std::uint8_t>(*v);
    } else if (e.key == "order") {
      auto o = parse_byte_order(e.value);
      if (!o) throw ModelError(e.line, "", "unknown byte order '" + e.value + "'");
      model.default_order = *o;
      have_order = true;
    } else {
      throw ModelError(e.line, "", "unknown key '" + e.key + "' in [device]");
    }
  }
  if (!have_order) {
    throw ModelError(device->line, "", "[device] requires a default byte order");
  }

  if (fields) {
    for (const auto& e : fields->entries) model.fields.push_back(parse_field(e));
  }
  return model;
}

ConnectorModel load_model(const std::string& path) {
  return parse_model(read_text_file(path));
}

std::string format_model(const ConnectorModel& model) {
  std::ostringstream out;
  out << "format = " << kModelFormatVersion << "\n\n[device]\n"
      << "name = " << model.device_name << "\n"
      << "endpoint = " << model.endpoint.to_string() << "\n"
      << "unit = " << static_cast<int>(model.unit_id) << "\n"
      << "order = " << to_string(model.default_order) << "\n\n[fields]\n";
  for (const auto& f : model.fields) {
    out << f.name << " = " << short_name(f.space) << "@" << f.offset << " "
        << to_string(f.type);
    if (f.order) out << " order=" << to_string(*f.order);
    if (f.writable) out << " writable";
    out << "\n";
  }
  return out.str();
}

std::size_t span_of(const FieldSpec& f) {
  return f.type.kind == TypeKind::Bit ? 1 : register_count(f.type);
}

std::vector<Violation> validate(const ConnectorModel& model) {
  std::vector<Violation> out;
  auto add = [&](Severity s, const std::string& field, std::string_view rule,
                 std::string detail) {
    out.push_back(Violation{s, field, std::string(rule), std::move(detail)});
  };

  std::map<std::string, std::vector<std::uint16_t>> by_name;
  for (const auto& f : model.fields) by_name[f.name].push_back(f.offset);
  for (auto& [name, offsets] : by_name) {
    if (offsets.size() < 2) continue;
    std::sort(offsets.begin(), offsets.end());
    std::string detail = std::to_string(offsets.size()) + " declarations at offsets";
    for (auto o : offsets) detail += " " + std::to_string(o);
    add(Severity::Error, name, rule::kDuplicateName, detail);
  }

  for (const auto& f : model.fields) {
    if (!valid_identifier(f.name)) {
      add(Severity::Error, f.name, rule::kInvalidName,
          "'" + f.name + "' is not an identifier");
    }
    const bool bit_type = f.type.kind == TypeKind::Bit;
    if (bit_type != is_bit_space(f.space)) {
      add(Severity::Error, f.name, rule::kTypeNotApplicable,
          to_string(f.type) + " in " + std::string(to_string(f.space)));
    }
    const std::size_t span = span_of(f);
    if (span == 0 || f.offset + span > kAddressSpaceSize) {
      add(Severity::Error, f.name, rule::kExceedsAddressSpace,
          "offset " + std::to_string(f.offset) + " + " + std::to_string(span) +
              " > 65536");
    }
    if (span > max_read_quantity(f.space)) {
      add(Severity::Error, f.name, rule::kExceedsRequestLimit,
          std::to_string(span) + " registers > " +
              std::to_string(max_read_quantity(f.space)));
    }
    if (f.writable && !is_writable(f.space)) {
      add(Severity::Error, f.name, rule::kWritableReadOnly,
          std::string(to_string(f.space)) + " is read-only");
    }
  }

  for (std::size_t i = 0; i < model.fields.size(); ++i) {
    for (std::size_t j = i + 1; j < model.fields.size(); ++j) {
      const auto* a = &model.fields[i];
      const auto* b = &model.fields[j];
      if (a->space != b->space || a->name == b->name) continue;
      const auto a_end = a->offset + span_of(*a);
      const auto b_end = b->offset + span_of(*b);
      if (a->offset < b_end && b->offset < a_end) {
        if (b->name < a->name) std::swap(a, b);
        add(Severity::Warning, a->name, rule::kOverlap,
            "shares registers with '" + b->name + "' in " +
                std::string(to_string(a->space)));
      }
    }
  }

  std::sort(out.begin(), out.end(), [](const Violation& x, const Violation& y) {
    return std::tie(x.field, x.rule, x.detail, x.severity) <
           std::tie(y.field, y.rule, y.detail, y.severity);
  });
  return out;
}

bool has_errors(const std::vector<Violation>& violations) {
  return std::any_of(violations.begin(), violations.end(),
                     [](const Violation& v) { return v.severity == Severity::Error; });
}

std::string to_string(const Violation& v) {
  return std::string(v.severity == Severity::Error ? "error" : "warning") +
         ": field '" + v.field + "': " + v.rule + " (" + v.detail + ")";
}

}  // namespace mbconn
