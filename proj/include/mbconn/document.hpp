#pragma once

// Line-oriented configuration documents shared by connector models and
// emulator profiles:
//
//   # comment
//   key = value
//   [section]
//   key = value   # trailing comment
//   key: value
//
// The first '=' or ':' separates key and value. Keys and section names are case sensitive. Values keep inner whitespace.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mbconn {

class DocumentError : public std::runtime_error {
 public:
  DocumentError(std::size_t line, const std::string& message)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message
                                : message),
        line_(line),
        message_(message) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::size_t line_;
  std::string message_;
};

// A file could not be opened or read.
class FileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DocEntry {
  std::size_t line = 0;
  std::string key;
  std::string value;
};

struct DocSection {
  std::size_t line = 0;
  std::string name;  // empty for entries before the first header
  std::vector<DocEntry> entries;
};

struct Document {
  std::vector<DocSection> sections;  // sections[0] is the unnamed preamble

  const DocSection* find(std::string_view name) const;
};

Document parse_document(std::string_view text);

std::string read_text_file(const std::string& path);

}  // namespace mbconn
