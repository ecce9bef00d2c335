#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace geobias::csv {

using Record = std::vector<std::string>;

// Comma-separated, double-quote escaped, LF or CRLF line endings.
class Reader {
 public:
  explicit Reader(std::string_view text);
  explicit Reader(const char* text) : Reader(std::string_view(text)) {}
  Reader(std::string&&) = delete;  // would dangle

  // Reads the next record. Returns false at end of input. Blank lines are
  // skipped. Throws InputError on an unterminated quoted field.
  bool next(Record& out);

  // 1-based line on which the most recently returned record started.
  std::size_t line() const { return record_line_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t cur_line_ = 1;
  std::size_t record_line_ = 0;
};

void write_field(std::ostream& os, std::string_view field);
void write_record(std::ostream& os, const Record& record);

// 17 significant digits ("%.17g"); non-finite values are written as
// nan / inf / -inf.
std::string format_double(double value);
std::string format_optional(const std::optional<double>& value);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

}  // namespace geobias::csv
