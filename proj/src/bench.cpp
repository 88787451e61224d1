#include "mbconn/bench.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace mbconn {

namespace {

std::int64_t micros(Clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::microseconds>(t.time_since_epoch()).count();
}

std::string csv_number(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::uint64_t to_uint(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size() || s.front() == '-') throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw BenchError(std::string("archive: bad ") + what + " '" + s + "'");
  }
}

std::int64_t to_int(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const auto v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw BenchError(std::string("archive: bad ") + what + " '" + s + "'");
  }
}

constexpr const char* kHeaderRow = "batch_index,start_us,duration_us";

}  // namespace

std::vector<SampleLog> run_benchmark(Connector& connector, const BatchPlan& plan,
                                     const BenchOptions& options) {
  if (options.batches < 1 || options.repetitions < 1) {
    throw BenchError("batches and repetitions must be at least 1");
  }
  const auto allowed_failures =
      static_cast<std::size_t>(options.max_failure_ratio * static_cast<double>(options.batches));

  std::vector<SampleLog> logs;
  for (std::size_t rep = 0; rep < options.repetitions; ++rep) {
    SampleLog log;
    log.subject = options.subject;
    log.endpoint = connector.config().endpoint.to_string();
    log.batch_size = plan.request_count();
    log.repetition = rep;
    log.samples.reserve(options.batches);

    for (std::size_t i = 0; i < options.batches; ++i) {
      const auto t0 = Clock::now();
      try {
        connector.read_batch(plan);
      } catch (const ConnectorError& e) {
        if (++log.failed > allowed_failures) {
          throw BenchError("aborted: " + std::to_string(log.failed) + " of " +
                               std::to_string(i + 1) + " batches failed in repetition " +
                               std::to_string(rep) + ", last: " + e.what(),
                           e.kind());
        }
        if (!connector.connected()) {
          // Reconnect so a dropped link costs one sample, not the rest of the run.
          try {
            connector = Connector::connect(connector.config(), connector.model());
          } catch (const ConnectorError&) {
          }
        }
        continue;
      }
      const auto t1 = Clock::now();
      log.samples.push_back(Sample{i, micros(t0), micros(t1) - micros(t0)});
    }

    if (options.archive_dir) write_archive_file(log, *options.archive_dir);
    if (options.on_repetition) options.on_repetition(log);
    logs.push_back(std::move(log));
  }
  return logs;
}

BenchStats compute_stats(const SampleLog& log, std::size_t settle) {
  std::vector<double> xs;
  xs.reserve(log.samples.size());
  for (const auto& s : log.samples) {
    if (s.batch_index >= settle) xs.push_back(static_cast<double>(s.duration_us));
  }
  if (xs.empty()) {
    throw BenchError("settle " + std::to_string(settle) + " leaves no samples out of " +
                     std::to_string(log.samples.size()));
  }
  BenchStats st;
  st.count = xs.size();
  st.settled = log.samples.size() - xs.size();

  std::sort(xs.begin(), xs.end());
  const auto n = xs.size();
  st.min = xs.front();
  st.max = xs.back();
  st.median = n % 2 ? xs[n / 2] : (xs[n / 2 - 1] + xs[n / 2]) / 2.0;
  const double sum = std::accumulate(xs.begin(), xs.end(), 0.0);
  st.avg = std::clamp(sum / static_cast<double>(n), st.min, st.max);
  if (n > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - st.avg) * (x - st.avg);
    st.stddev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return st;
}

std::string archive_file_name(const SampleLog& log) {
  std::string name;
  for (char c : log.subject) {
    name += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  }
  if (name.empty()) name = "subject";
  return name + "-rep" + std::to_string(log.repetition) + ".csv";
}

void write_archive(const SampleLog& log, std::ostream& out) {
  out << "# samples-format: 1\n"
      << "# subject: " << log.subject << "\n"
      << "# endpoint: " << log.endpoint << "\n"
      << "# batch_size: " << log.batch_size << "\n"
      << "# repetition: " << log.repetition << "\n"
      << "# failed: " << log.failed << "\n"
      << kHeaderRow << "\n";
  for (const auto& s : log.samples) {
    out << s.batch_index << ',' << s.start_us << ',' << s.duration_us << '\n';
  }
}

SampleLog read_archive(std::istream& in) {
  SampleLog log;
  std::string line;
  bool in_body = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!in_body) {
      if (line == kHeaderRow) {
        in_body = true;
        continue;
      }
      if (line[0] != '#') throw BenchError("archive: missing column header");
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      const auto key = trim(line.substr(1, colon - 1));
      const auto value = trim(line.substr(colon + 1));
      if (key == "samples-format" && value != "1") {
        throw BenchError("archive: unsupported format " + value);
      }
      if (key == "subject") log.subject = value;
      if (key == "endpoint") log.endpoint = value;
      if (key == "batch_size") log.batch_size = to_uint(value, "batch_size");
      if (key == "repetition") log.repetition = to_uint(value, "repetition");
      if (key == "failed") log.failed = to_uint(value, "failed");
      continue;
    }
    std::istringstream row(line);
    std::string a, b, c, extra;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c, ',') ||
        std::getline(row, extra)) {
      throw BenchError("archive: malformed row at line " + std::to_string(lineno));
    }
    Sample s{to_uint(a, "batch_index"), to_int(b, "start_us"), to_int(c, "duration_us")};
    if (s.duration_us < 0) throw BenchError("archive: negative duration");
    if (!log.samples.empty() && s.batch_index <= log.samples.back().batch_index) {
      throw BenchError("archive: batch_index not increasing at line " + std::to_string(lineno));
    }
    log.samples.push_back(s);
  }
  if (!in_body) throw BenchError("archive: missing column header");
  return log;
}

std::filesystem::path write_archive_file(const SampleLog& log,
                                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / archive_file_name(log);
  std::ofstream out(path);
  write_archive(log, out);
  out.close();
  if (!out) throw BenchError("cannot write " + path.string());
  return path;
}

SampleLog read_archive_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BenchError("cannot open " + path.string());
  return read_archive(in);
}

BenchStats average_stats(const std::vector<BenchStats>& runs) {
  if (runs.empty()) throw BenchError("no runs to average");
  BenchStats out;
  for (const auto& r : runs) {
    out.min += r.min;
    out.avg += r.avg;
    out.median += r.median;
    out.max += r.max;
    out.stddev += r.stddev;
    out.count += r.count;
    out.settled += r.settled;
  }
  const auto n = static_cast<double>(runs.size());
  out.min /= n;
  out.avg /= n;
  out.median /= n;
  out.max /= n;
  out.stddev /= n;
  return out;
}

StatsTable emit_table(const std::vector<StatsGroup>& groups) {
  std::vector<std::pair<std::string, BenchStats>> columns;
  std::vector<std::string> omitted;
  for (const auto& g : groups) {
    if (g.runs.empty()) {
      omitted.push_back(g.label);
    } else {
      columns.emplace_back(g.label, average_stats(g.runs));
    }
  }

  const std::vector<std::pair<const char*, double BenchStats::*>> rows = {
      {"Min", &BenchStats::min},       {"Avg", &BenchStats::avg},
      {"Median", &BenchStats::median}, {"Max", &BenchStats::max},
      {"Stddev", &BenchStats::stddev},
  };

  std::ostringstream text;
  std::ostringstream csv;
  csv << "subject,runs,count,min_us,avg_us,median_us,max_us,stddev_us\n";

  std::size_t label_width = std::string("[us]").size();
  for (const auto& r : rows) label_width = std::max(label_width, std::string(r.first).size());
  std::vector<std::size_t> widths;
  for (const auto& [label, st] : columns) widths.push_back(std::max<std::size_t>(label.size(), 8));

  text << std::left << std::setw(static_cast<int>(label_width)) << "[us]";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    text << "  " << std::right << std::setw(static_cast<int>(widths[i])) << columns[i].first;
  }
  text << '\n';
  for (const auto& [name, member] : rows) {
    text << std::left << std::setw(static_cast<int>(label_width)) << name;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      text << "  " << std::right << std::setw(static_cast<int>(widths[i]))
           << std::llround(columns[i].second.*member);
    }
    text << '\n';
  }
  if (!omitted.empty()) {
    text << "omitted (no data):";
    for (const auto& o : omitted) text << ' ' << o;
    text << '\n';
  }

  for (std::size_t i = 0; i < columns.size(); ++i) {
    const auto& st = columns[i].second;
    std::size_t runs = 0;
    for (const auto& g : groups) {
      if (g.label == columns[i].first && !g.runs.empty()) runs = g.runs.size();
    }
    csv << columns[i].first << ',' << runs << ',' << st.count << ',' << csv_number(st.min)
        << ',' << csv_number(st.avg) << ',' << csv_number(st.median) << ','
        << csv_number(st.max) << ',' << csv_number(st.stddev) << '\n';
  }
  return {text.str(), csv.str()};
}

}  // namespace mbconn
