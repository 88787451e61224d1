#include "mbconn/document.hpp"

#include <fstream>
#include <sstream>

namespace mbconn {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

// '#' starts a comment at line start or after whitespace.
std::string_view strip_comment(std::string_view line) {
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

const DocSection* Document::find(std::string_view name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

Document parse_document(std::string_view text) {
  Document doc;
  doc.sections.push_back(DocSection{0, "", {}});
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;

    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw DocumentError(line_no, "unterminated section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) throw DocumentError(line_no, "empty section name");
      if (doc.find(name)) {
        throw DocumentError(line_no, "duplicate section [" + std::string(name) + "]");
      }
      doc.sections.push_back(DocSection{line_no, std::string(name), {}});
      continue;
    }

    // "key = value" or "key: value"; the first separator wins.
    const auto eq = line.find_first_of("=:");
    if (eq == std::string_view::npos) {
      throw DocumentError(line_no, "expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw DocumentError(line_no, "missing key before separator");
    doc.sections.back().entries.push_back(
        DocEntry{line_no, std::string(key), std::string(trim(line.substr(eq + 1)))});
  }
  return doc;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mbconn
