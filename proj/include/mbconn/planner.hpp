#pragma once

// Batch read planning: cover every model field with the fewest read requests.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mbconn/codec.hpp"
#include "mbconn/model.hpp"
#include "mbconn/protocol.hpp"

namespace mbconn {

// Reading a few dead registers is cheaper than another round trip.
inline constexpr std::size_t kDefaultGapThreshold = 8;

// One row of the decode table: where a field sits inside its span.
struct CoveredField {
  std::string name;
  std::size_t at = 0;  // offset relative to the span start
  DataType type;
  ByteOrder order = ByteOrder::BigEndian;

  bool operator==(const CoveredField&) const = default;
};

struct ReadSpan {
  RegisterSpace space = RegisterSpace::HoldingRegisters;
  std::uint16_t start = 0;
  std::uint16_t count = 0;
  std::vector<CoveredField> fields;

  ReadRequest request() const { return {space, start, count}; }
  bool operator==(const ReadSpan&) const = default;
};

struct BatchPlan {
  std::size_t gap_threshold = kDefaultGapThreshold;
  // Grouped by space (coils, discrete inputs, input, holding), sorted by start.
  std::vector<ReadSpan> spans;

  std::size_t request_count() const { return spans.size(); }
  bool operator==(const BatchPlan&) const = default;
};

// Fields within one space are sorted by offset. Consecutive fields may share a
// span when the dead gap before each one is at most `gap_threshold` and the
// span stays within the protocol read limit. Among all such partitions the
// plan uses the minimum number of spans.
//
// Expects a model without error-class violations; throws
// std::invalid_argument for fields that can never be read in one request.
BatchPlan build_plan(const ConnectorModel& model,
                     std::size_t gap_threshold = kDefaultGapThreshold);

// Structural check of a plan against a model: every field covered exactly
// once and fully inside its span, spans disjoint, sorted and within limits,
// decode table matching the model. Empty result means consistent.
std::vector<std::string> check_plan(const ConnectorModel& model,
                                    const BatchPlan& plan);

}  // namespace mbconn
