// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mbconn/bench.hpp"
#include "mbconn/codec.hpp"
#include "mbconn/connector.hpp"
#include "mbconn/emulator.hpp"
#include "mbconn/planner.hpp"
#include "mbconn/protocol.hpp"
#include "support/loopback.hpp"
#include "support/oracles.hpp"
#include "support/protocol_cases.hpp"

using namespace mbconn;
using namespace std::chrono_literals;
using testing_support::Loopback;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects failed checks; the first few are reported.
struct Checks {
  std::vector<std::string> failures;
  std::size_t count = 0;

  void expect(bool ok, const std::string& what) {
    ++count;
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok) ++failed;
  }
  bool ok() const { return failed == 0; }
  std::string summary() const {
    std::string s = std::to_string(failed) + " of " + std::to_string(count) + " checks failed";
    for (const auto& f : failures) s += "; " + f;
    return s;
  }
  std::size_t failed = 0;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 2) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

bool same_value(const Value& a, const Value& b) {
  if (a.index() != b.index()) return false;
  if (const auto* x = std::get_if<double>(&a)) {
    return std::bit_cast<std::uint64_t>(*x) == std::bit_cast<std::uint64_t>(std::get<double>(b));
  }
  return a == b;
}

FieldSpec field(std::string name, RegisterSpace space, std::uint16_t offset, DataType type,
                bool writable = false, std::optional<ByteOrder> order = std::nullopt) {
  FieldSpec f;
  f.name = std::move(name);
  f.space = space;
  f.offset = offset;
  f.type = type;
  f.writable = writable;
  f.order = order;
  return f;
}

ConnectorModel ten_float32(ByteOrder order) {
  ConnectorModel m;
  m.default_order = order;
  for (int i = 0; i < 10; ++i) {
    m.fields.push_back(field("v" + std::to_string(i), RegisterSpace::HoldingRegisters,
                             static_cast<std::uint16_t>(2 * i), DataType{TypeKind::Float32, 0}));
  }
  return m;
}

std::size_t oracle_requests(const ConnectorModel& m, std::size_t gap) {
  std::size_t total = 0;
  for (auto space : kAllSpaces) {
    std::vector<oracle::Extent> extents;
    for (const auto& f : m.fields) {
      if (f.space == space) extents.push_back({f.offset, f.offset + span_of(f)});
    }
    total += oracle::min_requests(extents, gap, max_read_quantity(space));
  }
  return total;
}

// Runs the benchmark and averages the per-repetition statistics.
BenchStats measure(const DeviceProfile& profile, const ConnectorModel& model, std::size_t batches,
                   std::size_t reps, std::size_t settle, std::vector<SampleLog>* logs = nullptr) {
  auto lb = Loopback(profile);
  auto c = lb.connect(model);
  BenchOptions opts;
  opts.batches = batches;
  opts.repetitions = reps;
  opts.subject = profile.name;
  const auto runs = run_benchmark(c, build_plan(model, 8), opts);
  std::vector<BenchStats> stats;
  for (const auto& r : runs) stats.push_back(compute_stats(r, settle));
  if (logs) *logs = runs;
  return average_stats(stats);
}

// --- 1 ----------------------------------------------------------------------

Outcome protocol_conformance() {
  const auto t0 = Clock::now();
  Checks checks;
  std::mt19937_64 rng(1001);
  std::size_t cases = 0;
  for (auto function : oracle::kFunctions) {
    for (int i = 0; i < 1000; ++i) {
      auto [req, pdu] = oracle::random_request(function, rng);
      const auto tid = static_cast<std::uint16_t>(rng());
      const auto unit = static_cast<std::uint8_t>(rng());
      const auto bytes = encode_request(tid, unit, req);
      checks.expect(bytes == oracle::adu(tid, unit, pdu), "request bytes fc " + std::to_string(function));
      const auto d = decode_request(bytes);
      checks.expect(ok(d) && std::get<DecodedRequest>(d).pdu == req &&
                        std::get<DecodedRequest>(d).header.transaction_id == tid,
                    "request round trip fc " + std::to_string(function));

      auto rc = oracle::random_response(function, rng);
      const auto rbytes = encode_response(tid, unit, rc.response);
      checks.expect(rbytes == oracle::adu(tid, unit, rc.pdu),
                    "response bytes fc " + std::to_string(function));
      const auto r = decode_response(rbytes, &rc.request);
      checks.expect(ok(r) && std::get<DecodedResponse>(r).pdu == rc.response,
                    "response round trip fc " + std::to_string(function));
      cases += 2;
    }
  }
  const auto v1 = encode_request(1, 1, ReadRequest{RegisterSpace::HoldingRegisters, 0, 2});
  checks.expect(v1 == oracle::adu(1, 1, oracle::read_request_pdu(3, 0, 2)) &&
                    v1 == oracle::hex("00 01 00 00 00 06 01 03 00 00 00 02"),
                "vector ReadHoldingRegisters(0, 2)");
  const auto v2 = encode_request(0, 0, WriteSingleRegister{0, 0});
  checks.expect(v2 == oracle::adu(0, 0, oracle::write_single_pdu(6, 0, 0)) &&
                    v2 == oracle::hex("00 00 00 00 00 06 00 06 00 00 00 00"),
                "vector WriteSingleRegister(0, 0)");
  const double secs = seconds_since(t0);
  checks.expect(secs < 5.0, "runtime " + fmt(secs) + " s");
  return {checks.ok(), checks.ok() ? std::to_string(cases) + " round trips over 8 function codes, 2 vectors, " +
                                         fmt(secs) + " s"
                                   : checks.summary()};
}

// --- 2 ----------------------------------------------------------------------

Outcome codec_correctness() {
  const auto t0 = Clock::now();
  Checks checks;
  std::mt19937_64 rng(2002);
  for (int i = 0; i < 10000; ++i) {
    const auto type = oracle::random_type(rng);
    const auto order = kAllOrders[rng() % 4];
    const auto v = oracle::random_value(type, rng);
    const auto back = decode_value(encode_value(v, type, order), type, order);
    checks.expect(same_value(back, v), to_string(type) + " " + std::string(to_string(order)) +
                                           " " + format_value(v, type));
  }
  using W = std::vector<std::uint16_t>;
  const DataType f32{TypeKind::Float32, 0};
  checks.expect(decode_value(W{0, 0}, f32, ByteOrder::BigEndian) ==
                    Value{oracle::float32_from_bits(0x00000000)},
                "0x00000000 -> 0.0");
  checks.expect(decode_value(W{0x3F80, 0}, f32, ByteOrder::BigEndian) ==
                        Value{oracle::float32_from_bits(0x3F800000)} &&
                    oracle::float32_from_bits(0x3F800000) == 1.0,
                "0x3F800000 big -> 1.0");
  checks.expect(decode_value(W{0xFFFF}, DataType{TypeKind::Int16, 0}, ByteOrder::BigEndian) ==
                    Value{oracle::signed_from_bits(0xFFFF, 16)},
                "0xFFFF i16 -> -1");
  checks.expect(decode_value(W{1, 0}, DataType{TypeKind::UInt32, 0}, ByteOrder::BigEndian) ==
                    Value{std::uint64_t{65536}},
                "0x00010000 u32 -> 65536");
  checks.expect(oracle::lay_out(oracle::hex("3F 80 00 00"), ByteOrder::LittleEndian) == W{0, 0x803F} &&
                    decode_value(W{0, 0x803F}, f32, ByteOrder::LittleEndian) ==
                        Value{oracle::float32_from_bits(0x3F800000)},
                "0x3F800000 little -> 1.0");
  const double secs = seconds_since(t0);
  checks.expect(secs < 5.0, "runtime " + fmt(secs) + " s");
  return {checks.ok(), checks.ok() ? "10000 random triples, 5 fixed examples, " + fmt(secs) + " s"
                                   : checks.summary()};
}

// --- 3 ----------------------------------------------------------------------

Outcome planner_optimality() {
  const auto t0 = Clock::now();
  Checks checks;
  // Eight slots 8 registers apart, offsets 0..56, each empty or one of three
  // types: every such model with up to 8 fields and offsets below 64.
  const DataType types[] = {DataType{TypeKind::UInt16, 0}, DataType{TypeKind::Float32, 0},
                            DataType{TypeKind::Float64, 0}};
  const std::size_t gaps[] = {0, 2, 4, 6, 7, 8, 12, 16};
  std::size_t models = 0;
  for (auto gap : gaps) {
    for (unsigned code = 0; code < 65536; ++code) {
      ConnectorModel m;
      unsigned c = code;
      for (int slot = 0; slot < 8; ++slot, c /= 4) {
        if (c % 4 == 0) continue;
        m.fields.push_back(field("s" + std::to_string(slot), RegisterSpace::HoldingRegisters,
                                 static_cast<std::uint16_t>(slot * 8), types[c % 4 - 1]));
      }
      const auto plan = build_plan(m, gap);
      checks.expect(plan.request_count() == oracle_requests(m, gap) && check_plan(m, plan).empty(),
                    "grid code " + std::to_string(code) + " gap " + std::to_string(gap));
      ++models;
    }
  }
  // Unaligned offsets below 64, overlaps allowed.
  std::mt19937_64 rng(3003);
  for (int i = 0; i < 20000; ++i) {
    ConnectorModel m;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int k = 0; k < n; ++k) {
      auto type = oracle::random_type(rng);
      if (type.kind == TypeKind::AsciiString) type.length = static_cast<std::uint16_t>(1 + rng() % 8);
      const auto offset = static_cast<std::uint16_t>(rng() % (64 - register_count(type) + 1));
      m.fields.push_back(field("f" + std::to_string(k), RegisterSpace::HoldingRegisters, offset, type));
    }
    const std::size_t gap = rng() % 17;
    const auto plan = build_plan(m, gap);
    checks.expect(plan.request_count() == oracle_requests(m, gap) && check_plan(m, plan).empty(),
                  "random model " + std::to_string(i));
    ++models;
  }
  const auto ten = build_plan(ten_float32(ByteOrder::BigEndian), 8);
  checks.expect(ten.request_count() == 1 && ten.spans[0].start == 0 && ten.spans[0].count == 20,
                "10 contiguous float32 fields -> 1 span");
  return {checks.ok(), checks.ok() ? std::to_string(models) + " models match the exhaustive minimum, "
                                         "10 float32 fields -> 1 span of 20, " +
                                         fmt(seconds_since(t0), 1) + " s"
                                   : checks.summary()};
}

// --- 4 ----------------------------------------------------------------------

Outcome end_to_end_coherence() {
  Checks checks;
  {
    auto lb = Loopback();
    std::mt19937_64 rng(4004);
    const TypeKind kinds[] = {TypeKind::UInt16,  TypeKind::Int16,   TypeKind::UInt32,
                              TypeKind::Int32,   TypeKind::UInt64,  TypeKind::Int64,
                              TypeKind::Float32, TypeKind::Float64, TypeKind::AsciiString};
    ConnectorModel m;
    std::uint16_t offset = 0;
    for (auto kind : kinds) {
      for (auto order : kAllOrders) {
        const DataType type = kind == TypeKind::AsciiString ? DataType::ascii(6) : DataType{kind, 0};
        m.fields.push_back(field(to_string(type) + "/" + std::string(to_string(order)),
                                 RegisterSpace::HoldingRegisters, offset, type, true, order));
        offset = static_cast<std::uint16_t>(offset + register_count(type) + 3);
      }
    }
    m.fields.push_back(field("coil", RegisterSpace::Coils, 17, DataType{TypeKind::Bit, 0}, true));
    auto c = lb.connect(m);
    const auto plan = build_plan(m, 8);
    for (int round = 0; round < 25; ++round) {
      std::map<std::string, Value> written;
      for (const auto& f : m.fields) {
        const auto v = f.type.kind == TypeKind::Bit ? Value{(rng() & 1) == 1}
                                                    : oracle::random_value(f.type, rng);
        c.write_field(f.name, v);
        written[f.name] = v;
      }
      const auto r = c.read_batch(plan);
      for (const auto& [name, v] : written) {
        checks.expect(r.count(name) && same_value(r.at(name).value, v), "write/read " + name);
      }
    }
  }
  {
    DeviceProfile p;
    p.faults = {FaultRule{RegisterSpace::HoldingRegisters, 1000, 0xFFFF,
                          ExceptionCode::IllegalDataAddress}};
    auto lb = Loopback(p);
    ConnectorModel m;
    m.fields = {field("ok", RegisterSpace::HoldingRegisters, 990, DataType{TypeKind::Float32, 0}),
                field("bad", RegisterSpace::HoldingRegisters, 998, DataType{TypeKind::Float64, 0}, true)};
    auto c = lb.connect(m);
    const auto plan = build_plan(m, 8);
    try {
      c.read_batch(plan);
      checks.expect(false, "read touching 1000 succeeded");
    } catch (const ConnectorError& e) {
      checks.expect(e.kind() == ConnectorError::Kind::Exception, "exception kind");
      checks.expect(e.exception_code() == ExceptionCode::IllegalDataAddress, "exception code 2");
      checks.expect(e.function() == fc::kReadHoldingRegisters, "exception function");
      checks.expect(e.span() && e.span()->start == 990 && e.span()->count == 12 &&
                        e.span()->space == RegisterSpace::HoldingRegisters,
                    "exception span 990+12");
    }
    try {
      c.write_field("bad", Value{1.5});
      checks.expect(false, "write touching 1000 succeeded");
    } catch (const ConnectorError& e) {
      checks.expect(e.exception_code() == ExceptionCode::IllegalDataAddress &&
                        e.function() == fc::kWriteMultipleRegisters && e.span() &&
                        e.span()->start == 998 && e.span()->count == 4,
                    "write exception code and span");
    }
  }
  return {checks.ok(), checks.ok() ? "36 type/order combinations and a coil, 25 rounds each; "
                                     "exception code 2 on span 990+12"
                                   : checks.summary()};
}

// --- 5 ----------------------------------------------------------------------

Outcome benchmark_methodology() {
  const auto t0 = Clock::now();
  Checks checks;
  const auto model = ten_float32(ByteOrder::BigEndian);
  checks.expect(build_plan(model, 8).request_count() == 1, "1-span plan");

  DeviceProfile baseline_profile;
  baseline_profile.name = "baseline";
  const auto base = measure(baseline_profile, model, 5000, 3, 1500);
  DeviceProfile delayed_profile;
  delayed_profile.name = "delayed";
  delayed_profile.latency.fixed_delay = 2000us;
  const auto delayed = measure(delayed_profile, model, 5000, 3, 1500);

  const double shift = delayed.avg - base.avg;
  const double upper = 2000 + base.avg + 3 * base.stddev;
  const double secs = seconds_since(t0);
  checks.expect(base.count == 3 * 3500, "retained samples " + std::to_string(base.count));
  checks.expect(base.avg < 5000, "baseline avg " + fmt(base.avg) + " us");
  checks.expect(shift >= 2000 && shift <= upper,
                "shift " + fmt(shift) + " us outside [2000, " + fmt(upper) + "]");
  checks.expect(secs < 180, "runtime " + fmt(secs, 1) + " s");
  return {checks.ok(), "baseline avg " + fmt(base.avg) + " us (stddev " + fmt(base.stddev) +
                           "), +2000 us shifts avg by " + fmt(shift) + " us (bound " + fmt(upper) +
                           "), " + fmt(secs, 1) + " s" + (checks.ok() ? "" : "; " + checks.summary())};
}

// --- 6 ----------------------------------------------------------------------

Outcome settling() {
  Checks checks;
  DeviceProfile p;
  p.name = "warmup";
  p.latency.warmup_requests = 1500;
  p.latency.warmup_extra = 5000us;
  const auto model = ten_float32(ByteOrder::BigEndian);
  std::vector<SampleLog> logs;
  const auto retained = measure(p, model, 3000, 1, 1500, &logs);
  const auto full = compute_stats(logs.at(0), 0);
  std::int64_t inflated_min = INT64_MAX;
  for (const auto& s : logs[0].samples) {
    if (s.batch_index < 1500) inflated_min = std::min(inflated_min, s.duration_us);
  }
  checks.expect(inflated_min >= 5000, "first 1500 batches inflated");
  checks.expect(retained.max < full.max,
                "retained max " + fmt(retained.max, 0) + " vs full max " + fmt(full.max, 0));
  checks.expect(retained.max < 5000, "retained set still holds an inflated sample");
  return {checks.ok(), "full max " + fmt(full.max, 0) + " us, retained max " + fmt(retained.max, 0) +
                           " us, full avg " + fmt(full.avg) + " us, retained avg " +
                           fmt(retained.avg) + " us" + (checks.ok() ? "" : "; " + checks.summary())};
}

// --- 7 ----------------------------------------------------------------------

SampleLog log_of(const std::vector<std::int64_t>& durations) {
  SampleLog log;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    log.samples.push_back(Sample{i, static_cast<std::int64_t>(i) * 10000, durations[i]});
  }
  return log;
}

Outcome stats_oracle() {
  Checks checks;
  const auto st = compute_stats(log_of({100, 200, 300, 400, 500}), 0);
  // Hand values: mean 300, squared deviations 40000+10000+0+10000+40000 over 4.
  checks.expect(st.min == 100 && st.avg == 300 && st.median == 300 && st.max == 500,
                "fixed 5-sample log");
  checks.expect(std::abs(st.stddev - std::sqrt(100000.0 / 4)) < 1e-9 &&
                    std::abs(st.stddev - 158.11) <= 0.01,
                "stddev 158.11");
  std::mt19937_64 rng(7007);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = 1 + rng() % 200;
    std::vector<std::int64_t> d(n);
    const std::int64_t range = std::int64_t{1} << (rng() % 24);
    for (auto& x : d) x = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(range));
    const std::size_t settle = rng() % n;
    const auto s = compute_stats(log_of(d), settle);
    const auto lo = *std::min_element(d.begin() + settle, d.end());
    const auto hi = *std::max_element(d.begin() + settle, d.end());
    checks.expect(s.count == n - settle && s.settled == settle, "count");
    checks.expect(s.min == lo && s.max == hi, "extremes");
    checks.expect(s.min <= s.median && s.median <= s.max, "min <= median <= max");
    checks.expect(s.min <= s.avg && s.avg <= s.max, "min <= avg <= max");
    checks.expect(s.stddev >= 0 && s.stddev <= (hi - lo), "0 <= stddev <= range");
    checks.expect((lo != hi) || s.stddev == 0, "constant log has zero stddev");
  }
  return {checks.ok(), checks.ok() ? "min 100, avg 300, median 300, max 500, stddev " +
                                         fmt(st.stddev, 4) + "; invariants hold over 10000 random logs"
                                   : checks.summary()};
}

// --- 8 ----------------------------------------------------------------------

Outcome preset_plausibility() {
  Checks checks;
  const auto sentron_profile = resolve_profile("sentron-like");
  const auto eem_profile = resolve_profile("eem-like");
  const auto sentron_model = ten_float32(ByteOrder::BigEndian);
  const auto eem_model = ten_float32(ByteOrder::LittleEndian);
  checks.expect(build_plan(sentron_model, 8).request_count() == 1, "1-span plan");
  const auto sentron = measure(sentron_profile, sentron_model, 5000, 3, 1500);
  const auto eem = measure(eem_profile, eem_model, 5000, 3, 1500);
  const double ratio = eem.avg / sentron.avg;
  checks.expect(ratio >= 1.5 && ratio <= 2.5, "ratio " + fmt(ratio, 3));
  return {checks.ok(), "sentron-like avg " + fmt(sentron.avg) + " us, eem-like avg " +
                           fmt(eem.avg) + " us, ratio " + fmt(ratio, 3)};
}

// --- 9 ----------------------------------------------------------------------

oracle::Bytes random_frame(std::mt19937_64& rng) {
  oracle::Bytes f;
  switch (rng() % 4) {
    case 0: {  // pure noise
      f.resize(rng() % 300);
      for (auto& b : f) b = static_cast<std::uint8_t>(rng());
      break;
    }
    case 1: {  // well-formed header, random PDU
      const std::size_t pdu = rng() % 254;
      f = {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()), 0, 0,
           static_cast<std::uint8_t>((pdu + 1) >> 8), static_cast<std::uint8_t>(pdu + 1),
           static_cast<std::uint8_t>(rng())};
      f.push_back(static_cast<std::uint8_t>(1 + rng() % 20));
      for (std::size_t i = 1; i < pdu; ++i) f.push_back(static_cast<std::uint8_t>(rng()));
      break;
    }
    default: {  // mutated valid request or response
      const auto function = oracle::kFunctions[rng() % 8];
      if (rng() & 1) {
        f = encode_request(static_cast<std::uint16_t>(rng()), 1,
                           oracle::random_request(function, rng).first);
      } else {
        f = oracle::adu(static_cast<std::uint16_t>(rng()), 1,
                        oracle::random_response(function, rng).pdu);
      }
      const int edits = 1 + static_cast<int>(rng() % 4);
      for (int e = 0; e < edits && !f.empty(); ++e) {
        switch (rng() % 3) {
          case 0: f[rng() % f.size()] = static_cast<std::uint8_t>(rng()); break;
          case 1: f.resize(rng() % f.size()); break;
          default: f.push_back(static_cast<std::uint8_t>(rng())); break;
        }
      }
    }
  }
  return f;
}

Outcome robustness() {
  const auto t0 = Clock::now();
  Checks checks;
  std::size_t parsed = 0, rejected = 0;
  auto lb = Loopback();
  std::mt19937_64 rng(9009);
  const RequestPdu probe = ReadRequest{RegisterSpace::HoldingRegisters, 0, 4};
  for (int i = 0; i < 100000; ++i) {
    const auto f = random_frame(rng);
    try {
      const auto rq = decode_request(f);
      const auto rs = decode_response(f);
      const auto rs2 = decode_response(f, &probe);
      parsed += ok(rq) + ok(rs) + ok(rs2);
      rejected += !ok(rq) + !ok(rs) + !ok(rs2);
      if (ok(rq)) {
        const auto& d = std::get<DecodedRequest>(rq);
        // Canonical up to the padding bits of a coil list.
        const auto again = encode_request(d.header.transaction_id, d.header.unit_id, d.pdu);
        const auto back = decode_request(again);
        checks.expect(again.size() == f.size() && ok(back) &&
                          std::get<DecodedRequest>(back).pdu == d.pdu,
                      "accepted request does not re-encode to an equal frame");
      }
      const auto reply = lb.server->handle_adu(f);
      if (reply) {
        checks.expect(ok(decode_response(*reply)), "server reply is not a valid response");
      }
    } catch (const std::exception& e) {
      checks.expect(false, std::string("exception: ") + e.what());
    }
  }
  const double decode_secs = seconds_since(t0);

  // Over the wire: junk frames on fresh connections, then a normal exchange.
  for (int i = 0; i < 500; ++i) {
    try {
      auto s = connect_tcp(lb.server->endpoint(), 1000ms);
      const auto f = random_frame(rng);
      send_all(s, f);
      if (i % 2) {
        std::array<std::uint8_t, 300> buf{};
        try {
          recv_some(s, buf, Clock::now() + 5ms);
        } catch (const NetError&) {
        }
      }
    } catch (const NetError&) {
    }
  }
  {
    auto c = lb.connect();
    const auto r = c.transact(ReadRequest{RegisterSpace::HoldingRegisters, 0, 1});
    checks.expect(std::holds_alternative<ReadRegistersResponse>(r), "server answers after fuzzing");
  }

  // Client side: a device answering with junk yields structured errors.
  auto listener = listen_tcp(Endpoint{"127.0.0.1", 0});
  const Endpoint junk_ep{"127.0.0.1", local_port(listener)};
  std::mt19937_64 junk_rng(99);
  std::thread junk_server([&] {
    for (;;) {
      auto s = accept_tcp(listener);
      if (!s) return;
      try {
        std::array<std::uint8_t, 300> buf{};
        recv_some(s, buf, Clock::now() + 1s);
        auto f = random_frame(junk_rng);
        if (junk_rng() & 1 && f.size() >= 2) f[0] = buf[0], f[1] = buf[1];
        send_all(s, f);
      } catch (const NetError&) {
      }
    }
  });
  std::size_t client_errors = 0, client_ok = 0;
  for (int i = 0; i < 300; ++i) {
    ConnectorConfig cfg;
    cfg.endpoint = junk_ep;
    cfg.response_timeout = 50ms;
    try {
      auto c = Connector::connect(cfg);
      c.transact(probe);
      ++client_ok;
    } catch (const ConnectorError&) {
      ++client_errors;
    } catch (const std::exception& e) {
      checks.expect(false, std::string("client exception: ") + e.what());
    }
  }
  listener.shutdown();
  junk_server.join();

  const double secs = seconds_since(t0);
  checks.expect(secs < 120, "runtime " + fmt(secs, 1) + " s");
  return {checks.ok(),
          checks.ok() ? "100000 frames (" + std::to_string(parsed) + " parses, " +
                            std::to_string(rejected) + " structured errors) in " +
                            fmt(decode_secs) + " s; 500 junk connections; " +
                            std::to_string(client_errors) + "/300 junk replies rejected; " +
                            fmt(secs, 1) + " s total"
                      : checks.summary()};
}

}  // namespace

// Optional arguments select criteria by number, e.g. `acceptance 5 8`.
int main(int argc, char** argv) {
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::stoul(argv[i]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"protocol conformance", protocol_conformance},
      {"codec correctness", codec_correctness},
      {"planner optimality", planner_optimality},
      {"end-to-end coherence", end_to_end_coherence},
      {"benchmark methodology", benchmark_methodology},
      {"settling behaviour", settling},
      {"stats oracle", stats_oracle},
      {"device preset plausibility", preset_plausibility},
      {"robustness", robustness},
  };
  int failed = 0;
  std::size_t ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), i + 1) == selected.end()) {
      continue;
    }
    ++ran;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("unexpected error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  std::cout << (ran - failed) << "/" << ran << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
