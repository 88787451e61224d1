#pragma once

// Connector instance descriptor: a model together with its resolved batch
// plan and per-field decode table, serialized as versioned JSON. `gen` writes
// it; `read` and `bench` execute it without re-planning.

#include <stdexcept>
#include <string>
#include <string_view>

#include "mbconn/model.hpp"
#include "mbconn/planner.hpp"

namespace mbconn {

inline constexpr int kDescriptorVersion = 1;

struct InstanceDescriptor {
  ConnectorModel model;
  BatchPlan plan;

  bool operator==(const InstanceDescriptor&) const = default;
};

class DescriptorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

InstanceDescriptor make_descriptor(ConnectorModel model,
                                   std::size_t gap_threshold = kDefaultGapThreshold);

std::string write_descriptor(const InstanceDescriptor& d);

// Rejects unknown versions and plans that fail check_plan.
InstanceDescriptor parse_descriptor(std::string_view json_text);

// Loads either a model document or a descriptor (JSON object). A model is
// planned with `gap_threshold`; a descriptor keeps its recorded plan.
InstanceDescriptor load_instance(const std::string& path,
                                 std::size_t gap_threshold = kDefaultGapThreshold);

}  // namespace mbconn
