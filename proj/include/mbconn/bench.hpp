#pragma once

// Batch-read latency benchmark: timed repetitions of read_batch, archived
// sample logs, settle-cut statistics and a Min/Avg/Median/Max/Stddev table.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbconn/connector.hpp"
#include "mbconn/planner.hpp"

namespace mbconn {

inline constexpr std::size_t kDefaultBatches = 5000;
inline constexpr std::size_t kDefaultRepetitions = 3;
inline constexpr std::size_t kDefaultSettle = 1500;

struct Sample {
  std::uint64_t batch_index = 0;
  std::int64_t start_us = 0;  // monotonic clock
  std::int64_t duration_us = 0;
  bool operator==(const Sample&) const = default;
};

struct SampleLog {
  std::string subject;
  std::string endpoint;
  std::size_t batch_size = 0;  // requests per batch
  std::size_t repetition = 0;
  std::size_t failed = 0;      // failed batches, not present in `samples`
  std::vector<Sample> samples;
  bool operator==(const SampleLog&) const = default;
};

struct BenchStats {
  double min = 0;
  double avg = 0;
  double median = 0;
  double max = 0;
  double stddev = 0;
  std::size_t count = 0;    // samples used
  std::size_t settled = 0;  // samples removed by the settle cut
};

class BenchError : public std::runtime_error {
 public:
  explicit BenchError(const std::string& what,
                      std::optional<ConnectorError::Kind> cause = std::nullopt)
      : std::runtime_error(what), cause_(cause) {}
  // Kind of the last read failure when a run was aborted.
  const std::optional<ConnectorError::Kind>& cause() const noexcept { return cause_; }

 private:
  std::optional<ConnectorError::Kind> cause_;
};

struct BenchOptions {
  std::size_t batches = kDefaultBatches;
  std::size_t repetitions = kDefaultRepetitions;
  std::string subject = "subject";
  double max_failure_ratio = 0.10;
  // When set, each log is written here as soon as its repetition ends.
  std::optional<std::filesystem::path> archive_dir;
  std::function<void(const SampleLog&)> on_repetition;
};

// Back-to-back read_batch calls, `batches` per repetition. Throws BenchError
// once failures in a repetition exceed max_failure_ratio of `batches`.
std::vector<SampleLog> run_benchmark(Connector& connector, const BatchPlan& plan,
                                     const BenchOptions& options);

// Statistics over samples with batch_index >= settle. Throws BenchError
// when nothing is left after the cut.
BenchStats compute_stats(const SampleLog& log, std::size_t settle = kDefaultSettle);

std::string archive_file_name(const SampleLog& log);
void write_archive(const SampleLog& log, std::ostream& out);
SampleLog read_archive(std::istream& in);
std::filesystem::path write_archive_file(const SampleLog& log,
                                         const std::filesystem::path& dir);
SampleLog read_archive_file(const std::filesystem::path& path);

// One table column. Several runs are averaged statistic by statistic; a
// column without runs is left out of the table and listed in the footer.
struct StatsGroup {
  std::string label;
  std::vector<BenchStats> runs;
};

BenchStats average_stats(const std::vector<BenchStats>& runs);

struct StatsTable {
  std::string text;  // aligned table, values in whole µs
  std::string csv;   // subject,runs,count,min_us,avg_us,median_us,max_us,stddev_us
};

StatsTable emit_table(const std::vector<StatsGroup>& groups);

}  // namespace mbconn
