#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mbconn {

// Process exit codes; scripts depend on these values.
namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;  // also usage errors
inline constexpr int kConnection = 2;
inline constexpr int kException = 3;   // exception or malformed response
inline constexpr int kIo = 4;
inline constexpr int kTimeout = 5;
}  // namespace exit_code

// Overrides the model endpoint for read, write and bench ("host:port").
inline constexpr const char* kEndpointEnv = "MBCONN_ENDPOINT";

// Runs one command line (without the program name). Errors are reported on
// `err` as a single line "mbconn: error[<kind>]: <text>".
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mbconn
