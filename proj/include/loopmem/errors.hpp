#pragma once

#include <stdexcept>
#include <string>

namespace loopmem {

// Malformed input file. line() is 1-based; 0 when the problem is not tied to
// a single line (e.g. a missing key).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, int line, const std::string& what)
      : std::runtime_error(format(file, line, what)), file_(std::move(file)), line_(line) {}

  const std::string& file() const { return file_; }
  int line() const { return line_; }

 private:
  static std::string format(const std::string& file, int line, const std::string& what) {
    std::string out = file.empty() ? std::string("<input>") : file;
    if (line > 0) {
      out += ":" + std::to_string(line);
    }
    return out + ": " + what;
  }

  std::string file_;
  int line_;
};

}  // namespace loopmem
