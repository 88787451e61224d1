#include "mbconn/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "mbconn/bench.hpp"
#include "mbconn/codec.hpp"
#include "mbconn/connector.hpp"
#include "mbconn/descriptor.hpp"
#include "mbconn/document.hpp"
#include "mbconn/emulator.hpp"
#include "mbconn/model.hpp"
#include "mbconn/planner.hpp"

namespace mbconn {

namespace {

struct CliError : std::runtime_error {
  CliError(int code, std::string kind, const std::string& text)
      : std::runtime_error(text), code(code), kind(std::move(kind)) {}
  int code;
  std::string kind;
};

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

// Installs SIGINT/SIGTERM handlers for the lifetime of a long-running command.
class InterruptGuard {
 public:
  InterruptGuard() {
    g_interrupted.store(false);
    struct sigaction sa {};
    sa.sa_handler = on_signal;
    sigemptyset(&sa.sa_mask);
    ::sigaction(SIGINT, &sa, &old_int_);
    ::sigaction(SIGTERM, &sa, &old_term_);
  }
  ~InterruptGuard() {
    ::sigaction(SIGINT, &old_int_, nullptr);
    ::sigaction(SIGTERM, &old_term_, nullptr);
  }
  InterruptGuard(const InterruptGuard&) = delete;
  InterruptGuard& operator=(const InterruptGuard&) = delete;

 private:
  struct sigaction old_int_ {};
  struct sigaction old_term_ {};
};

CliError from_connector(const ConnectorError& e) {
  using K = ConnectorError::Kind;
  const std::string kind(to_string(e.kind()));
  switch (e.kind()) {
    case K::Connect:
    case K::ConnectionLost: return {exit_code::kConnection, kind, e.what()};
    case K::Timeout: return {exit_code::kTimeout, kind, e.what()};
    case K::Exception:
    case K::Protocol: return {exit_code::kException, kind, e.what()};
    case K::ReadOnly:
    case K::UnknownField:
    case K::Config: return {exit_code::kValidation, kind, e.what()};
  }
  return {exit_code::kIo, kind, e.what()};
}

// Maps any library error to an exit code and a diagnostic kind.
CliError classify(std::exception_ptr ep, const std::string& context) {
  const std::string prefix = context.empty() ? "" : context + ": ";
  try {
    std::rethrow_exception(ep);
  } catch (const CliError& e) {
    return e;
  } catch (const FileError& e) {
    return {exit_code::kIo, "io", e.what()};
  } catch (const ModelError& e) {
    return {exit_code::kValidation, "model", prefix + e.what()};
  } catch (const DescriptorError& e) {
    return {exit_code::kValidation, "descriptor", prefix + e.what()};
  } catch (const ProfileError& e) {
    return {exit_code::kValidation, "profile", prefix + e.what()};
  } catch (const DocumentError& e) {
    return {exit_code::kValidation, "document", prefix + e.what()};
  } catch (const CodecError& e) {
    return {exit_code::kValidation, "codec", e.what()};
  } catch (const ConnectorError& e) {
    return from_connector(e);
  } catch (const BenchError& e) {
    if (e.cause()) {
      auto mapped = from_connector(ConnectorError(*e.cause(), e.what()));
      mapped.kind = "bench";
      return mapped;
    }
    return {exit_code::kValidation, "bench", e.what()};
  } catch (const NetError& e) {
    if (e.kind() == NetError::Kind::Timeout) return {exit_code::kTimeout, "timeout", e.what()};
    return {exit_code::kConnection, e.kind() == NetError::Kind::Bind ? "bind" : "net", e.what()};
  } catch (const std::invalid_argument& e) {
    return {exit_code::kValidation, "invalid", prefix + e.what()};
  } catch (const std::filesystem::filesystem_error& e) {
    return {exit_code::kIo, "io", e.what()};
  } catch (const std::exception& e) {
    return {exit_code::kIo, "internal", e.what()};
  }
  return {exit_code::kIo, "internal", "unknown error"};
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

void diagnose(std::ostream& err, const CliError& e) {
  err << "mbconn: error[" << e.kind << "]: " << one_line(e.what()) << '\n';
}

ConnectorModel checked(ConnectorModel model, std::ostream& err) {
  const auto violations = validate(model);
  for (const auto& v : violations) {
    if (v.severity == Severity::Warning) err << "mbconn: warning[model]: " << to_string(v) << '\n';
  }
  for (const auto& v : violations) {
    if (v.severity == Severity::Error) {
      throw CliError(exit_code::kValidation, "model", to_string(v));
    }
  }
  return model;
}

InstanceDescriptor instance_from(const std::string& path, std::optional<std::size_t> gap,
                                 std::ostream& err) {
  auto d = load_instance(path, gap.value_or(kDefaultGapThreshold));
  d.model = checked(std::move(d.model), err);
  if (gap && d.plan.gap_threshold != *gap) d = make_descriptor(std::move(d.model), *gap);
  return d;
}

ConnectorConfig config_for(const ConnectorModel& model, const std::string& endpoint_flag,
                           std::size_t timeout_ms) {
  auto config = ConnectorConfig::for_model(model);
  std::string text = endpoint_flag;
  if (text.empty()) {
    if (const char* env = std::getenv(kEndpointEnv); env && *env) text = env;
  }
  if (!text.empty()) {
    auto ep = Endpoint::parse(text);
    if (!ep) throw CliError(exit_code::kValidation, "usage", "bad endpoint '" + text + "'");
    config.endpoint = *ep;
  }
  config.response_timeout = std::chrono::milliseconds(timeout_ms);
  config.connect_timeout = std::chrono::milliseconds(timeout_ms);
  return config;
}

std::string json_value(const Value& v, DataType type) {
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  if (const auto* s = std::get_if<std::string>(&v)) return nlohmann::json(*s).dump();
  if (const auto* d = std::get_if<double>(&v); d && !std::isfinite(*d)) return "null";
  return format_value(v, type);
}

std::string record_line(std::uint64_t seq, const InstanceDescriptor& d, const Record& r) {
  std::string line = "{\"seq\":" + std::to_string(seq) + ",\"fields\":{";
  bool first = true;
  for (const auto& f : d.model.fields) {
    auto it = r.find(f.name);
    if (it == r.end()) continue;
    if (!first) line += ',';
    first = false;
    line += nlohmann::json(f.name).dump() + ":" + json_value(it->second.value, f.type);
  }
  return line + "}}";
}

std::vector<std::uint16_t> parse_words(const std::vector<std::string>& tokens) {
  std::vector<std::uint16_t> words;
  for (auto t : tokens) {
    if (t.starts_with("0x") || t.starts_with("0X")) t = t.substr(2);
    if (t.empty() || t.size() % 4 != 0 && t.size() > 4) {
      throw CliError(exit_code::kValidation, "usage", "bad register word '" + t + "'");
    }
    // "3F800000" is read as two words.
    const std::size_t step = t.size() > 4 ? 4 : t.size();
    for (std::size_t i = 0; i < t.size(); i += step) {
      const auto part = t.substr(i, step);
      unsigned v = 0;
      auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v, 16);
      if (ec != std::errc{} || p != part.data() + part.size() || v > 0xFFFF) {
        throw CliError(exit_code::kValidation, "usage", "bad register word '" + part + "'");
      }
      words.push_back(static_cast<std::uint16_t>(v));
    }
  }
  return words;
}

DataType type_arg(const std::string& text) {
  auto t = parse_data_type(text);
  if (!t) throw CliError(exit_code::kValidation, "usage", "unknown type '" + text + "'");
  return *t;
}

ByteOrder order_arg(const std::string& text) {
  auto o = parse_byte_order(text);
  if (!o) throw CliError(exit_code::kValidation, "usage", "unknown byte order '" + text + "'");
  return *o;
}

// --- commands ----------------------------------------------------------------

int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  ConnectorModel model;
  try {
    model = load_model(path);
  } catch (...) {
    throw classify(std::current_exception(), path);
  }
  const auto violations = validate(model);
  std::size_t errors = 0;
  for (const auto& v : violations) {
    out << to_string(v) << '\n';
    if (v.severity == Severity::Error) ++errors;
  }
  if (errors) {
    throw CliError(exit_code::kValidation, "model",
                   path + ": " + std::to_string(errors) + " error(s)");
  }
  out << "ok: " << model.device_name << ", " << model.fields.size() << " field(s), "
      << violations.size() << " warning(s)\n";
  (void)err;
  return exit_code::kOk;
}

int cmd_gen(const std::string& path, std::optional<std::size_t> gap, const std::string& output,
            std::ostream& out, std::ostream& err) {
  ConnectorModel model;
  try {
    model = load_model(path);
  } catch (...) {
    throw classify(std::current_exception(), path);
  }
  const auto d = make_descriptor(checked(std::move(model), err), gap.value_or(kDefaultGapThreshold));
  const auto text = write_descriptor(d) + "\n";
  if (output.empty() || output == "-") {
    out << text;
  } else {
    std::ofstream f(output);
    f << text;
    f.close();
    if (!f) throw CliError(exit_code::kIo, "io", "cannot write " + output);
  }
  return exit_code::kOk;
}

struct ServeArgs {
  std::string profile;
  std::string host = "0.0.0.0";
  std::uint16_t port = 502;
  std::optional<std::int64_t> latency_fixed;
  std::string latency_jitter;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> warmup_requests;
  std::optional<std::int64_t> warmup_extra;
  std::int64_t duration_ms = 0;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  DeviceProfile profile;
  try {
    profile = resolve_profile(a.profile);
  } catch (...) {
    throw classify(std::current_exception(), a.profile);
  }
  if (a.latency_fixed) {
    if (*a.latency_fixed < 0) throw CliError(exit_code::kValidation, "usage", "negative latency");
    profile.latency.fixed_delay = std::chrono::microseconds(*a.latency_fixed);
  }
  if (!a.latency_jitter.empty()) {
    auto j = Jitter::parse(a.latency_jitter);
    if (!j) throw CliError(exit_code::kValidation, "usage", "bad jitter '" + a.latency_jitter + "'");
    profile.latency.jitter = *j;
  }
  if (a.seed) profile.latency.seed = *a.seed;
  if (a.warmup_requests) profile.latency.warmup_requests = *a.warmup_requests;
  if (a.warmup_extra) profile.latency.warmup_extra = std::chrono::microseconds(*a.warmup_extra);

  InterruptGuard guard;
  auto log_mutex = std::make_shared<std::mutex>();
  ServerOptions options;
  options.log = [&err, log_mutex](std::string_view msg) {
    std::lock_guard lock(*log_mutex);
    err << "mbconn: warning[connection]: " << msg << '\n';
  };
  auto server = Emulator::serve(Endpoint{a.host, a.port}, profile, options);
  out << "serving " << profile.name << " on " << a.host << ":" << server->port()
      << " (latency " << profile.latency.fixed_delay.count() << " us, jitter "
      << profile.latency.jitter.to_string() << ")" << std::endl;

  const auto until = a.duration_ms > 0
                         ? Clock::now() + std::chrono::milliseconds(a.duration_ms)
                         : Clock::time_point::max();
  while (!g_interrupted.load() && Clock::now() < until) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  server->stop();
  out << "served " << server->requests_served() << " request(s)" << std::endl;
  return exit_code::kOk;
}

struct ReadArgs {
  std::string instance;
  bool once = false;
  std::optional<std::int64_t> poll_ms;
  std::optional<std::size_t> gap;
  std::uint64_t count = 0;
  std::string endpoint;
  std::size_t timeout_ms = 1000;
};

int cmd_read(const ReadArgs& a, std::ostream& out, std::ostream& err) {
  InstanceDescriptor d;
  try {
    d = instance_from(a.instance, a.gap, err);
  } catch (...) {
    throw classify(std::current_exception(), a.instance);
  }
  auto connector = Connector::connect(config_for(d.model, a.endpoint, a.timeout_ms), d.model);
  if (!a.poll_ms) {
    out << record_line(0, d, connector.read_batch(d.plan)) << std::endl;
    return exit_code::kOk;
  }
  if (*a.poll_ms <= 0) throw CliError(exit_code::kValidation, "usage", "--poll must be positive");

  InterruptGuard guard;
  std::stop_source stop;
  std::jthread watcher([&stop](std::stop_token st) {
    while (!st.stop_requested() && !g_interrupted.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    stop.request_stop();
  });
  PollOptions opts;
  opts.interval = std::chrono::milliseconds(*a.poll_ms);
  opts.stop_on_error = true;
  opts.max_polls = a.count;
  std::optional<ConnectorError> failure;
  connector.poll(d.plan, opts,
                 [&](const PollItem& item) {
                   if (item.record) {
                     out << record_line(item.sequence, d, *item.record) << std::endl;
                   } else if (item.error) {
                     failure = item.error;
                   }
                 },
                 stop.get_token());
  watcher.request_stop();
  if (failure) throw from_connector(*failure);
  return exit_code::kOk;
}

struct WriteArgs {
  std::string instance;
  std::string field;
  std::string value;
  std::string endpoint;
  std::size_t timeout_ms = 1000;
};

int cmd_write(const WriteArgs& a, std::ostream& out, std::ostream& err) {
  InstanceDescriptor d;
  try {
    d = instance_from(a.instance, std::nullopt, err);
  } catch (...) {
    throw classify(std::current_exception(), a.instance);
  }
  const auto* f = d.model.find(a.field);
  if (!f) throw CliError(exit_code::kValidation, "unknown-field", "unknown field '" + a.field + "'");
  const auto value = parse_value(a.value, f->type);
  auto connector = Connector::connect(config_for(d.model, a.endpoint, a.timeout_ms), d.model);
  connector.write_field(a.field, value);
  out << "ok: " << a.field << " = " << format_value(value, f->type) << '\n';
  return exit_code::kOk;
}

struct BenchArgs {
  std::string instance;
  std::size_t batches = kDefaultBatches;
  std::size_t reps = kDefaultRepetitions;
  std::size_t settle = kDefaultSettle;
  std::optional<std::size_t> gap;
  std::string out_dir;
  std::string label;
  std::string endpoint;
  std::size_t timeout_ms = 1000;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  if (a.batches < 1 || a.reps < 1) {
    throw CliError(exit_code::kValidation, "usage", "--batches and --reps must be at least 1");
  }
  if (a.settle >= a.batches) {
    throw CliError(exit_code::kValidation, "usage",
                   "--settle must be smaller than --batches");
  }
  InstanceDescriptor d;
  try {
    d = instance_from(a.instance, a.gap, err);
  } catch (...) {
    throw classify(std::current_exception(), a.instance);
  }
  auto connector = Connector::connect(config_for(d.model, a.endpoint, a.timeout_ms), d.model);

  BenchOptions opts;
  opts.batches = a.batches;
  opts.repetitions = a.reps;
  opts.subject = a.label.empty() ? d.model.device_name : a.label;
  if (!a.out_dir.empty()) opts.archive_dir = std::filesystem::path(a.out_dir);
  opts.on_repetition = [&err](const SampleLog& log) {
    err << "mbconn: repetition " << log.repetition << ": " << log.samples.size()
        << " sample(s), " << log.failed << " failed" << std::endl;
  };
  const auto logs = run_benchmark(connector, d.plan, opts);

  StatsGroup group{opts.subject, {}};
  std::size_t failed = 0;
  for (const auto& log : logs) {
    group.runs.push_back(compute_stats(log, a.settle));
    failed += log.failed;
  }
  const auto table = emit_table({group});
  out << table.text;
  out << "batches " << a.batches << " x " << a.reps << ", settle " << a.settle << ", "
      << d.plan.request_count() << " request(s) per batch, " << failed << " failed\n";
  if (opts.archive_dir) {
    const auto path = *opts.archive_dir / "stats.csv";
    std::ofstream f(path);
    f << table.csv;
    f.close();
    if (!f) throw CliError(exit_code::kIo, "io", "cannot write " + path.string());
  }
  return exit_code::kOk;
}

int cmd_codec_encode(const std::string& type, const std::string& order,
                     const std::string& value, std::ostream& out) {
  const auto t = type_arg(type);
  const auto words = encode_value(parse_value(value, t), t, order_arg(order));
  for (std::size_t i = 0; i < words.size(); ++i) {
    out << (i ? " " : "") << std::uppercase << std::hex << std::setw(4) << std::setfill('0')
        << words[i];
  }
  out << std::dec << std::setfill(' ') << std::nouppercase << '\n';
  return exit_code::kOk;
}

int cmd_codec_decode(const std::string& type, const std::string& order,
                     const std::vector<std::string>& tokens, std::ostream& out) {
  const auto t = type_arg(type);
  const auto words = parse_words(tokens);
  out << format_value(decode_value(words, t, order_arg(order)), t) << '\n';
  return exit_code::kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Modbus/TCP connector toolkit", "mbconn"};
  app.require_subcommand(1);
  app.fallthrough(false);

  std::string model_path;
  std::optional<std::size_t> gap;
  std::string gen_output;

  auto* validate_cmd = app.add_subcommand("validate", "Check a model document");
  validate_cmd->add_option("model", model_path, "Model document")->required();

  auto* gen_cmd = app.add_subcommand("gen", "Emit the connector instance descriptor for a model");
  gen_cmd->add_option("model", model_path, "Model document")->required();
  gen_cmd->add_option("--gap", gap, "Maximum register gap merged into one read");
  gen_cmd->add_option("-o,--output", gen_output, "Write to a file instead of stdout");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the device emulator");
  serve_cmd
      ->add_option("profile", serve.profile,
                   "Bundled profile (default, sentron-like, eem-like) or profile document")
      ->required();
  serve_cmd->add_option("--host", serve.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("-p,--port", serve.port, "TCP port (0 picks a free port)")
      ->capture_default_str();
  serve_cmd->add_option("--latency-fixed", serve.latency_fixed, "Fixed delay per request, us");
  serve_cmd->add_option("--latency-jitter", serve.latency_jitter,
                        "none | uniform(A,B) | normal(MEAN,SIGMA), us");
  serve_cmd->add_option("--seed", serve.seed, "Jitter seed");
  serve_cmd->add_option("--warmup-requests", serve.warmup_requests,
                        "Number of first requests carrying extra delay");
  serve_cmd->add_option("--warmup-extra", serve.warmup_extra, "Extra warm-up delay, us");
  serve_cmd->add_option("--duration", serve.duration_ms, "Stop after this many ms (0 = until signal)");

  ReadArgs read;
  auto* read_cmd = app.add_subcommand("read", "Read all model fields and print records");
  read_cmd->add_option("instance", read.instance, "Model document or instance descriptor")
      ->required();
  auto* once_flag = read_cmd->add_flag("--once", read.once, "Read one batch (default)");
  read_cmd->add_option("--poll", read.poll_ms, "Poll every MS milliseconds")->excludes(once_flag);
  read_cmd->add_option("--gap", read.gap, "Re-plan with this gap threshold");
  read_cmd->add_option("--count", read.count, "Stop after N polls (0 = until signal)");
  read_cmd->add_option("--endpoint", read.endpoint, "host:port, overrides the model");
  read_cmd->add_option("--timeout", read.timeout_ms, "Connect and response timeout, ms")
      ->capture_default_str();

  WriteArgs write;
  auto* write_cmd = app.add_subcommand("write", "Write one writable field");
  write_cmd->add_option("instance", write.instance, "Model document or instance descriptor")
      ->required();
  write_cmd->add_option("field", write.field, "Field name")->required();
  write_cmd->add_option("value", write.value, "Value text")->required();
  write_cmd->add_option("--endpoint", write.endpoint, "host:port, overrides the model");
  write_cmd->add_option("--timeout", write.timeout_ms, "Connect and response timeout, ms")
      ->capture_default_str();

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Measure batch read latency");
  bench_cmd->add_option("instance", bench.instance, "Model document or instance descriptor")
      ->required();
  bench_cmd->add_option("--batches", bench.batches, "Batches per repetition")->capture_default_str();
  bench_cmd->add_option("--reps", bench.reps, "Repetitions")->capture_default_str();
  bench_cmd->add_option("--settle", bench.settle, "Leading batches left out of the statistics")
      ->capture_default_str();
  bench_cmd->add_option("--gap", bench.gap, "Re-plan with this gap threshold");
  bench_cmd->add_option("--out", bench.out_dir, "Archive sample logs and stats.csv here");
  bench_cmd->add_option("--label", bench.label, "Column label (default: device name)");
  bench_cmd->add_option("--endpoint", bench.endpoint, "host:port, overrides the model");
  bench_cmd->add_option("--timeout", bench.timeout_ms, "Connect and response timeout, ms")
      ->capture_default_str();

  std::string codec_type;
  std::string codec_order = "big";
  std::string codec_value;
  std::vector<std::string> codec_words;
  auto* codec_cmd = app.add_subcommand("codec", "Convert between values and register words");
  codec_cmd->require_subcommand(1);
  auto* encode_cmd = codec_cmd->add_subcommand("encode", "Value to register words (hex)");
  encode_cmd->add_option("--type", codec_type, "Data type")->required();
  encode_cmd->add_option("--order", codec_order, "Byte order")->capture_default_str();
  encode_cmd->add_option("value", codec_value, "Value text")->required();
  auto* decode_cmd = codec_cmd->add_subcommand("decode", "Register words (hex) to value");
  decode_cmd->add_option("--type", codec_type, "Data type")->required();
  decode_cmd->add_option("--order", codec_order, "Byte order")->capture_default_str();
  decode_cmd->add_option("words", codec_words, "Register words, e.g. 3F80 0000")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return exit_code::kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return exit_code::kOk;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e, out, err);
    return exit_code::kOk;
  } catch (const CLI::ParseError& e) {
    diagnose(err, CliError(exit_code::kValidation, "usage", e.what()));
    err << app.help();
    return exit_code::kValidation;
  }

  try {
    if (*validate_cmd) return cmd_validate(model_path, out, err);
    if (*gen_cmd) return cmd_gen(model_path, gap, gen_output, out, err);
    if (*serve_cmd) return cmd_serve(serve, out, err);
    if (*read_cmd) return cmd_read(read, out, err);
    if (*write_cmd) return cmd_write(write, out, err);
    if (*bench_cmd) return cmd_bench(bench, out, err);
    if (*encode_cmd) return cmd_codec_encode(codec_type, codec_order, codec_value, out);
    if (*decode_cmd) return cmd_codec_decode(codec_type, codec_order, codec_words, out);
  } catch (...) {
    const auto e = classify(std::current_exception(), "");
    diagnose(err, e);
    return e.code;
  }
  return exit_code::kValidation;
}

}  // namespace mbconn
