#include "mbconn/descriptor.hpp"

#include <json.hpp>

#include "mbconn/document.hpp"

namespace mbconn {

namespace {

using nlohmann::json;

json field_json(const ConnectorModel& model, const FieldSpec& f) {
  json j{{"name", f.name},
         {"space", to_string(f.space)},
         {"offset", f.offset},
         {"type", to_string(f.type)},
         {"order", to_string(model.order_of(f))},
         {"writable", f.writable}};
  j["order_explicit"] = f.order.has_value();
  return j;
}

template <class T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw DescriptorError(std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DescriptorError(std::string("bad value for '") + key + "'");
  }
}

RegisterSpace space_of(const json& j) {
  auto s = parse_register_space(required<std::string>(j, "space"));
  if (!s) throw DescriptorError("unknown space");
  return *s;
}

DataType type_of(const json& j) {
  auto t = parse_data_type(required<std::string>(j, "type"));
  if (!t) throw DescriptorError("unknown type");
  return *t;
}

ByteOrder order_of(const json& j) {
  auto o = parse_byte_order(required<std::string>(j, "order"));
  if (!o) throw DescriptorError("unknown byte order");
  return *o;
}

std::uint16_t u16_of(const json& j, const char* key) {
  const auto v = required<std::int64_t>(j, key);
  if (v < 0 || v > 0xFFFF) throw DescriptorError(std::string("'") + key + "' out of range");
  return static_cast<std::uint16_t>(v);
}

}  // namespace

InstanceDescriptor make_descriptor(ConnectorModel model, std::size_t gap_threshold) {
  auto plan = build_plan(model, gap_threshold);
  return InstanceDescriptor{std::move(model), std::move(plan)};
}

std::string write_descriptor(const InstanceDescriptor& d) {
  const auto& m = d.model;
  json fields = json::array();
  for (const auto& f : m.fields) fields.push_back(field_json(m, f));

  json spans = json::array();
  for (const auto& s : d.plan.spans) {
    json decode = json::array();
    for (const auto& c : s.fields) {
      decode.push_back({{"name", c.name},
                        {"at", c.at},
                        {"type", to_string(c.type)},
                        {"order", to_string(c.order)}});
    }
    spans.push_back({{"space", to_string(s.space)},
                     {"function", read_function_for(s.space)},
                     {"start", s.start},
                     {"count", s.count},
                     {"fields", decode}});
  }

  json out{{"descriptor_version", kDescriptorVersion},
           {"device",
            {{"name", m.device_name},
             {"endpoint", m.endpoint.to_string()},
             {"unit", m.unit_id},
             {"order", to_string(m.default_order)}}},
           {"fields", fields},
           {"plan",
            {{"gap_threshold", d.plan.gap_threshold},
             {"request_count", d.plan.request_count()},
             {"spans", spans}}}};
  return out.dump(2) + "\n";
}

namespace {

InstanceDescriptor from_json(const json& j) {
  if (!j.is_object()) throw DescriptorError("descriptor must be a JSON object");
  const auto version = required<int>(j, "descriptor_version");
  if (version != kDescriptorVersion) {
    throw DescriptorError("unsupported descriptor version " + std::to_string(version));
  }

  InstanceDescriptor d;
  const auto dev = required<json>(j, "device");
  d.model.device_name = required<std::string>(dev, "name");
  auto ep = Endpoint::parse(required<std::string>(dev, "endpoint"));
  if (!ep) throw DescriptorError("malformed endpoint");
  d.model.endpoint = *ep;
  const auto unit = required<int>(dev, "unit");
  if (unit < 0 || unit > 255) throw DescriptorError("unit out of range");
  d.model.unit_id = static_cast<std::uint8_t>(unit);
  d.model.default_order = order_of(dev);

  for (const auto& f : required<json>(j, "fields")) {
    FieldSpec spec;
    spec.name = required<std::string>(f, "name");
    spec.space = space_of(f);
    spec.offset = u16_of(f, "offset");
    spec.type = type_of(f);
    if (f.value("order_explicit", true)) spec.order = order_of(f);
    spec.writable = required<bool>(f, "writable");
    d.model.fields.push_back(std::move(spec));
  }

  const auto plan = required<json>(j, "plan");
  d.plan.gap_threshold = required<std::size_t>(plan, "gap_threshold");
  for (const auto& s : required<json>(plan, "spans")) {
    ReadSpan span;
    span.space = space_of(s);
    span.start = u16_of(s, "start");
    span.count = u16_of(s, "count");
    for (const auto& c : required<json>(s, "fields")) {
      span.fields.push_back(CoveredField{required<std::string>(c, "name"),
                                         required<std::size_t>(c, "at"),
                                         type_of(c), order_of(c)});
    }
    d.plan.spans.push_back(std::move(span));
  }

  if (has_errors(validate(d.model))) throw DescriptorError("descriptor model is invalid");
  const auto problems = check_plan(d.model, d.plan);
  if (!problems.empty()) throw DescriptorError("inconsistent plan: " + problems.front());
  return d;
}

}  // namespace

InstanceDescriptor parse_descriptor(std::string_view json_text) {
  try {
    return from_json(json::parse(json_text));
  } catch (const json::exception& e) {
    throw DescriptorError(std::string("malformed descriptor: ") + e.what());
  }
}

InstanceDescriptor load_instance(const std::string& path, std::size_t gap_threshold) {
  const auto text = read_text_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return parse_descriptor(text);
  return make_descriptor(parse_model(text), gap_threshold);
}

}  // namespace mbconn
