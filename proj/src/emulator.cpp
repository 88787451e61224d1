#include "mbconn/emulator.hpp"

#include <sys/prctl.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>

#include "mbconn/codec.hpp"
#include "mbconn/document.hpp"
#include "mbconn/model.hpp"

namespace mbconn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Ten float32 readings at holding 0..19: voltages, currents, power, frequency.
constexpr std::string_view kSentronLike = R"(# Meter with a fast request cycle, big-endian registers.
[profile]
name = sentron-like
latency_fixed_us = 700
latency_jitter = none
writable = true

[registers]
holding@0 = float32 big 230.1
holding@2 = float32 big 229.8
holding@4 = float32 big 231.0
holding@6 = float32 big 4.25
holding@8 = float32 big 4.5
holding@10 = float32 big 3.75
holding@12 = float32 big 978.5
holding@14 = float32 big 1034.25
holding@16 = float32 big 866.0
holding@18 = float32 big 50.0
)";

constexpr std::string_view kEemLike = R"(# Meter with a slower request cycle, little-endian registers.
[profile]
name = eem-like
latency_fixed_us = 1300
latency_jitter = none
writable = true

[registers]
holding@0 = float32 little 230.1
holding@2 = float32 little 229.8
holding@4 = float32 little 231.0
holding@6 = float32 little 4.25
holding@8 = float32 little 4.5
holding@10 = float32 little 3.75
holding@12 = float32 little 978.5
holding@14 = float32 little 1034.25
holding@16 = float32 little 866.0
holding@18 = float32 little 50.0
)";

void check_bounds(std::uint16_t address, std::size_t quantity) {
  if (address + quantity > kAddressSpaceSize) {
    throw std::out_of_range("register range exceeds 65536");
  }
}

std::optional<std::uint64_t> parse_uint(std::string_view s) {
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

std::optional<double> parse_double(std::string_view s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

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

// "<space>@<offset>" as used by the profile [registers] and [faults] rows;
// faults allow "<space>@<first>-<last>".
std::pair<RegisterSpace, std::pair<std::uint16_t, std::uint16_t>> parse_location(
    const DocEntry& e, bool allow_range) {
  const auto at = e.key.find('@');
  if (at == std::string::npos) {
    throw DocumentError(e.line, "expected <space>@<offset>, got '" + e.key + "'");
  }
  auto space = parse_register_space(std::string_view(e.key).substr(0, at));
  if (!space) throw DocumentError(e.line, "unknown space in '" + e.key + "'");
  auto rest = std::string_view(e.key).substr(at + 1);
  std::string_view first_text = rest;
  std::string_view last_text = rest;
  if (allow_range) {
    if (const auto dash = rest.find('-'); dash != std::string_view::npos) {
      first_text = rest.substr(0, dash);
      last_text = rest.substr(dash + 1);
    }
  }
  auto first = parse_uint(first_text);
  auto last = parse_uint(last_text);
  if (!first || !last || *first > 0xFFFF || *last > 0xFFFF || *last < *first) {
    throw DocumentError(e.line, "bad address in '" + e.key + "'");
  }
  return {*space, {static_cast<std::uint16_t>(*first), static_cast<std::uint16_t>(*last)}};
}

InitialValue parse_initial_value(const DocEntry& e) {
  auto [space, range] = parse_location(e, false);
  InitialValue iv{space, range.first, {}};
  const auto tokens = split_ws(e.value);
  if (tokens.empty()) throw DocumentError(e.line, "missing value for " + e.key);

  if (auto type = parse_data_type(tokens[0]); type && type->kind != TypeKind::Bit) {
    if (is_bit_space(space)) throw DocumentError(e.line, "typed value in a bit space");
    std::size_t value_at = 1;
    ByteOrder order = ByteOrder::BigEndian;
    if (tokens.size() > 2) {
      if (auto o = parse_byte_order(tokens[1])) {
        order = *o;
        value_at = 2;
      }
    }
    if (tokens.size() <= value_at) throw DocumentError(e.line, "missing value for " + e.key);
    // Text values keep their inner spaces.
    const auto value_text =
        std::string_view(e.value).substr(static_cast<std::size_t>(tokens[value_at].data() - e.value.data()));
    try {
      iv.words = encode_value(parse_value(value_text, *type), *type, order);
    } catch (const CodecError& err) {
      throw DocumentError(e.line, err.what());
    }
  } else {
    for (auto t : tokens) {
      auto v = parse_uint(t);
      if (!v || *v > 0xFFFF || (is_bit_space(space) && *v > 1)) {
        throw DocumentError(e.line, "bad word '" + std::string(t) + "'");
      }
      iv.words.push_back(static_cast<std::uint16_t>(*v));
    }
  }
  if (iv.offset + iv.words.size() > kAddressSpaceSize) {
    throw DocumentError(e.line, "initial value exceeds the address space");
  }
  return iv;
}

bool parse_bool(const DocEntry& e) {
  if (e.value == "true" || e.value == "yes" || e.value == "1") return true;
  if (e.value == "false" || e.value == "no" || e.value == "0") return false;
  throw DocumentError(e.line, "expected true/false for " + e.key);
}

std::uint64_t parse_count(const DocEntry& e) {
  auto v = parse_uint(e.value);
  if (!v) throw DocumentError(e.line, "malformed number '" + e.value + "'");
  return *v;
}

DeviceProfile parse_profile(std::string_view text) {
  const auto doc = parse_document(text);
  DeviceProfile p;
  if (!doc.sections.front().entries.empty()) {
    throw DocumentError(doc.sections.front().entries.front().line,
                        "entries must be inside a section");
  }
  for (std::size_t i = 1; i < doc.sections.size(); ++i) {
    const auto& s = doc.sections[i];
    if (s.name == "profile") {
      for (const auto& e : s.entries) {
        if (e.key == "name") {
          p.name = e.value;
        } else if (e.key == "latency_fixed_us") {
          p.latency.fixed_delay = std::chrono::microseconds(parse_count(e));
        } else if (e.key == "latency_jitter") {
          auto j = Jitter::parse(e.value);
          if (!j) throw DocumentError(e.line, "bad jitter '" + e.value + "'");
          p.latency.jitter = *j;
        } else if (e.key == "seed") {
          p.latency.seed = parse_count(e);
        } else if (e.key == "warmup_requests") {
          p.latency.warmup_requests = parse_count(e);
        } else if (e.key == "warmup_extra_us") {
          p.latency.warmup_extra = std::chrono::microseconds(parse_count(e));
        } else if (e.key == "writable") {
          p.writes_allowed = parse_bool(e);
        } else {
          throw DocumentError(e.line, "unknown key '" + e.key + "' in [profile]");
        }
      }
    } else if (s.name == "registers") {
      for (const auto& e : s.entries) p.initial_values.push_back(parse_initial_value(e));
    } else if (s.name == "faults") {
      for (const auto& e : s.entries) {
        auto [space, range] = parse_location(e, true);
        auto code = parse_uint(e.value);
        if (!code || *code < 1 || *code > 0xFF) {
          throw DocumentError(e.line, "bad exception code '" + e.value + "'");
        }
        p.faults.push_back(FaultRule{space, range.first, range.second,
                                     static_cast<ExceptionCode>(*code)});
      }
    } else {
      throw DocumentError(s.line, "unknown section [" + s.name + "]");
    }
  }
  return p;
}

struct Touch {
  RegisterSpace space;
  std::size_t first;
  std::size_t count;
};

Touch touched(const RequestPdu& req) {
  return std::visit(
      overloaded{
          [](const ReadRequest& r) { return Touch{r.space, r.address, r.quantity}; },
          [](const WriteSingleCoil& r) { return Touch{RegisterSpace::Coils, r.address, 1}; },
          [](const WriteSingleRegister& r) {
            return Touch{RegisterSpace::HoldingRegisters, r.address, 1};
          },
          [](const WriteMultipleCoils& r) {
            return Touch{RegisterSpace::Coils, r.address, r.values.size()};
          },
          [](const WriteMultipleRegisters& r) {
            return Touch{RegisterSpace::HoldingRegisters, r.address, r.values.size()};
          },
      },
      req);
}

}  // namespace

// --- RegisterStore ------------------------------------------------------------

RegisterStore::RegisterStore()
    : coils_(kAddressSpaceSize, 0),
      discrete_inputs_(kAddressSpaceSize, 0),
      input_registers_(kAddressSpaceSize, 0),
      holding_registers_(kAddressSpaceSize, 0) {}

std::vector<std::uint8_t>& RegisterStore::bits(RegisterSpace s) {
  if (s == RegisterSpace::Coils) return coils_;
  if (s == RegisterSpace::DiscreteInputs) return discrete_inputs_;
  throw std::invalid_argument("not a bit space");
}

const std::vector<std::uint8_t>& RegisterStore::bits(RegisterSpace s) const {
  return const_cast<RegisterStore*>(this)->bits(s);
}

std::vector<std::uint16_t>& RegisterStore::regs(RegisterSpace s) {
  if (s == RegisterSpace::InputRegisters) return input_registers_;
  if (s == RegisterSpace::HoldingRegisters) return holding_registers_;
  throw std::invalid_argument("not a register space");
}

const std::vector<std::uint16_t>& RegisterStore::regs(RegisterSpace s) const {
  return const_cast<RegisterStore*>(this)->regs(s);
}

std::vector<bool> RegisterStore::read_bits(RegisterSpace space, std::uint16_t address,
                                           std::uint16_t quantity) const {
  check_bounds(address, quantity);
  const auto& cells = bits(space);
  std::shared_lock lock(mutex_);
  std::vector<bool> out(quantity);
  for (std::size_t i = 0; i < quantity; ++i) out[i] = cells[address + i] != 0;
  return out;
}

std::vector<std::uint16_t> RegisterStore::read_registers(RegisterSpace space,
                                                         std::uint16_t address,
                                                         std::uint16_t quantity) const {
  check_bounds(address, quantity);
  const auto& cells = regs(space);
  std::shared_lock lock(mutex_);
  return {cells.begin() + address, cells.begin() + address + quantity};
}

void RegisterStore::write_bits(RegisterSpace space, std::uint16_t address,
                               const std::vector<bool>& values) {
  check_bounds(address, values.size());
  auto& cells = bits(space);
  std::unique_lock lock(mutex_);
  for (std::size_t i = 0; i < values.size(); ++i) cells[address + i] = values[i] ? 1 : 0;
}

void RegisterStore::write_registers(RegisterSpace space, std::uint16_t address,
                                    std::span<const std::uint16_t> values) {
  check_bounds(address, values.size());
  auto& cells = regs(space);
  std::unique_lock lock(mutex_);
  std::copy(values.begin(), values.end(), cells.begin() + address);
}

// --- Latency ------------------------------------------------------------------

std::string Jitter::to_string() const {
  auto num = [](double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
  };
  switch (kind) {
    case Kind::None: return "none";
    case Kind::Uniform: return "uniform(" + num(a) + "," + num(b) + ")";
    case Kind::Normal: return "normal(" + num(a) + "," + num(b) + ")";
  }
  return "none";
}

std::optional<Jitter> Jitter::parse(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty() || text == "none") return Jitter{};
  Jitter j;
  std::string_view args;
  if (text.starts_with("uniform(") && text.ends_with(')')) {
    j.kind = Kind::Uniform;
    args = text.substr(8, text.size() - 9);
  } else if (text.starts_with("normal(") && text.ends_with(')')) {
    j.kind = Kind::Normal;
    args = text.substr(7, text.size() - 8);
  } else {
    return std::nullopt;
  }
  const auto comma = args.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  auto strip = [](std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
  };
  auto a = parse_double(strip(args.substr(0, comma)));
  auto b = parse_double(strip(args.substr(comma + 1)));
  if (!a || !b || !std::isfinite(*a) || !std::isfinite(*b)) return std::nullopt;
  if (j.kind == Kind::Uniform && *b < *a) return std::nullopt;
  if (j.kind == Kind::Normal && *b < 0) return std::nullopt;
  j.a = *a;
  j.b = *b;
  return j;
}

std::chrono::microseconds apply_latency(const LatencyProfile& profile, std::mt19937_64& rng) {
  double jitter = 0;
  switch (profile.jitter.kind) {
    case Jitter::Kind::None:
      break;
    case Jitter::Kind::Uniform:
      jitter = std::uniform_real_distribution<double>(profile.jitter.a, profile.jitter.b)(rng);
      break;
    case Jitter::Kind::Normal:
      jitter = std::normal_distribution<double>(profile.jitter.a, profile.jitter.b)(rng);
      break;
  }
  const double total = static_cast<double>(profile.fixed_delay.count()) + jitter;
  return std::chrono::microseconds(total <= 0 ? 0 : std::llround(total));
}

void wait_until_precise(Clock::time_point deadline) {
  // Letting the CPU idle costs tens of microseconds on wake-up, so only the
  // part of a delay beyond this window is slept.
  constexpr auto kSpin = std::chrono::microseconds(5000);
  const auto now = Clock::now();
  if (deadline - now > kSpin) std::this_thread::sleep_until(deadline - kSpin);
  while (Clock::now() < deadline) std::this_thread::yield();
}

// --- Profiles -----------------------------------------------------------------

DeviceProfile load_profile(std::string_view document) {
  try {
    return parse_profile(document);
  } catch (const DocumentError& e) {
    throw ProfileError(std::string("profile: ") + e.what());
  }
}

std::optional<std::string_view> bundled_profile(std::string_view name) {
  if (name == "sentron-like") return kSentronLike;
  if (name == "eem-like") return kEemLike;
  if (name == "default") return std::string_view{};
  return std::nullopt;
}

std::vector<std::string_view> bundled_profile_names() {
  return {"default", "sentron-like", "eem-like"};
}

DeviceProfile resolve_profile(const std::string& name_or_path) {
  if (auto text = bundled_profile(name_or_path)) return load_profile(*text);
  std::string text;
  try {
    text = read_text_file(name_or_path);
  } catch (const std::runtime_error& e) {
    throw ProfileError(std::string("profile: ") + e.what());
  }
  return load_profile(text);
}

void apply_initial_values(RegisterStore& store, const DeviceProfile& profile) {
  for (const auto& iv : profile.initial_values) {
    if (is_bit_space(iv.space)) {
      std::vector<bool> values(iv.words.begin(), iv.words.end());
      store.write_bits(iv.space, iv.offset, values);
    } else {
      store.write_registers(iv.space, iv.offset, iv.words);
    }
  }
}

// --- Emulator -----------------------------------------------------------------

Emulator::Emulator(Socket listener, DeviceProfile profile, ServerOptions options)
    : listener_(std::move(listener)),
      profile_(std::move(profile)),
      options_(std::move(options)),
      rng_(profile_.latency.seed) {
  apply_initial_values(store_, profile_);
}

std::unique_ptr<Emulator> Emulator::serve(const Endpoint& endpoint, DeviceProfile profile,
                                          ServerOptions options) {
  auto listener = listen_tcp(endpoint);
  std::unique_ptr<Emulator> e(new Emulator(std::move(listener), std::move(profile),
                                           std::move(options)));
  e->endpoint_ = Endpoint{endpoint.host.empty() ? "127.0.0.1" : endpoint.host,
                          local_port(e->listener_)};
  e->acceptor_ = std::thread([raw = e.get()] { raw->accept_loop(); });
  return e;
}

Emulator::~Emulator() { stop(); }

void Emulator::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  listener_.close();
  std::vector<std::unique_ptr<Connection>> conns;
  {
    std::lock_guard lock(conn_mutex_);
    conns.swap(connections_);
  }
  for (auto& c : conns) c->socket.shutdown();
  for (auto& c : conns) {
    if (c->thread.joinable()) c->thread.join();
  }
}

void Emulator::drop_connections() {
  std::lock_guard lock(conn_mutex_);
  for (auto& c : connections_) c->socket.shutdown();
}

void Emulator::reap_finished() {
  std::vector<std::unique_ptr<Connection>> finished;
  {
    std::lock_guard lock(conn_mutex_);
    auto it = std::stable_partition(connections_.begin(), connections_.end(),
                                    [](const auto& c) { return !c->done.load(); });
    finished.insert(finished.end(), std::make_move_iterator(it),
                    std::make_move_iterator(connections_.end()));
    connections_.erase(it, connections_.end());
  }
  for (auto& c : finished) {
    if (c->thread.joinable()) c->thread.join();
  }
}

void Emulator::accept_loop() {
  while (!stopping_.load()) {
    Socket s = accept_tcp(listener_);
    if (!s) break;
    if (stopping_.load()) break;
    ++accepted_;
    reap_finished();
    auto conn = std::make_unique<Connection>();
    conn->socket = std::move(s);
    auto* raw = conn.get();
    std::lock_guard lock(conn_mutex_);
    connections_.push_back(std::move(conn));
    raw->thread = std::thread([this, raw] { serve_connection(*raw); });
  }
}

void Emulator::log(std::string_view message) {
  if (options_.log) options_.log(message);
}

std::chrono::microseconds Emulator::next_delay() {
  std::lock_guard lock(rng_mutex_);
  auto delay = apply_latency(profile_.latency, rng_);
  if (requests_.load() < profile_.latency.warmup_requests) delay += profile_.latency.warmup_extra;
  return delay;
}

void Emulator::serve_connection(Connection& conn) {
  ::prctl(PR_SET_TIMERSLACK, 1UL);
  std::array<std::uint8_t, kMaxAduSize> buf{};
  try {
    for (;;) {
      recv_exact(conn.socket, std::span(buf).first(kMbapHeaderSize), Clock::time_point::max());
      auto header = parse_mbap_header(std::span(buf).first(kMbapHeaderSize));
      if (!ok(header)) {
        ++conn_errors_;
        log("closing connection: " + std::get<ParseError>(header).message);
        break;
      }
      const auto h = std::get<MbapHeader>(header);
      const auto pdu = std::span(buf).subspan(kMbapHeaderSize, h.length - 1u);
      recv_exact(conn.socket, pdu, Clock::time_point::max());

      auto response = answer(h, pdu);
      const auto delay = next_delay();
      ++requests_;
      if (delay.count() > 0) wait_until_precise(Clock::now() + delay);
      send_all(conn.socket, response);
    }
  } catch (const NetError& e) {
    if (e.kind() != NetError::Kind::Closed) {
      ++conn_errors_;
      log(std::string("connection error: ") + e.what());
    }
  } catch (const std::exception& e) {
    ++conn_errors_;
    log(std::string("connection error: ") + e.what());
  }
  conn.done.store(true);
}

ResponsePdu Emulator::process(const RequestPdu& request) {
  const auto fn = function_code(request);
  const auto t = touched(request);
  for (const auto& f : profile_.faults) {
    if (f.space == t.space && t.first <= f.last && f.first < t.first + t.count) {
      return ExceptionResponse{fn, f.code};
    }
  }
  if (!profile_.writes_allowed && !std::holds_alternative<ReadRequest>(request)) {
    return ExceptionResponse{fn, ExceptionCode::IllegalFunction};
  }

  return std::visit(
      overloaded{
          [&](const ReadRequest& r) -> ResponsePdu {
            if (is_bit_space(r.space)) {
              return ReadBitsResponse{r.space, store_.read_bits(r.space, r.address, r.quantity)};
            }
            return ReadRegistersResponse{r.space,
                                         store_.read_registers(r.space, r.address, r.quantity)};
          },
          [&](const WriteSingleCoil& r) -> ResponsePdu {
            store_.write_bits(RegisterSpace::Coils, r.address, {r.value});
            return r;
          },
          [&](const WriteSingleRegister& r) -> ResponsePdu {
            store_.write_registers(RegisterSpace::HoldingRegisters, r.address,
                                   std::span(&r.value, 1));
            return r;
          },
          [&](const WriteMultipleCoils& r) -> ResponsePdu {
            store_.write_bits(RegisterSpace::Coils, r.address, r.values);
            return WriteMultipleResponse{fc::kWriteMultipleCoils, r.address,
                                         static_cast<std::uint16_t>(r.values.size())};
          },
          [&](const WriteMultipleRegisters& r) -> ResponsePdu {
            store_.write_registers(RegisterSpace::HoldingRegisters, r.address, r.values);
            return WriteMultipleResponse{fc::kWriteMultipleRegisters, r.address,
                                         static_cast<std::uint16_t>(r.values.size())};
          },
      },
      request);
}

std::vector<std::uint8_t> Emulator::answer(const MbapHeader& header,
                                           std::span<const std::uint8_t> pdu) {
  auto request = decode_request_pdu(pdu);
  ResponsePdu response;
  if (const auto* err = std::get_if<ParseError>(&request)) {
    const std::uint8_t fn = pdu.empty() ? 0 : static_cast<std::uint8_t>(pdu[0] & 0x7F);
    response = ExceptionResponse{fn, exception_for(err->code)};
  } else {
    response = process(std::get<RequestPdu>(request));
  }
  return encode_response(header.transaction_id, header.unit_id, response);
}

std::optional<std::vector<std::uint8_t>> Emulator::handle_adu(
    std::span<const std::uint8_t> adu) {
  auto header = parse_mbap_header(adu);
  if (!ok(header)) return std::nullopt;
  const auto& h = std::get<MbapHeader>(header);
  if (adu.size() != 6u + h.length) return std::nullopt;
  return answer(h, adu.subspan(kMbapHeaderSize));
}

}  // namespace mbconn
