#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rtlguard::io {

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal text that round-trips bit-exactly.
std::string format_double(double v);
std::string format_float(float v);

double parse_double(std::string_view text);
long long parse_int(std::string_view text);

std::string join_doubles(std::span<const double> values, char sep = ',');
std::vector<double> split_doubles(std::string_view text, char sep = ',');

std::vector<std::string_view> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

/// Splits on '\n', dropping a trailing '\r' from each line.
std::vector<std::string_view> lines(std::string_view text);

void append_floats(std::string& out, std::span<const float> values);
void append_doubles(std::string& out, std::span<const double> values);

/// Cursor over a byte buffer for the text/binary hybrid checkpoint formats.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  bool done() const { return pos_ >= data_.size(); }
  /// Next '\n'-terminated line; throws FormatError at end of data.
  std::string_view line();
  void floats(std::span<float> out);
  void doubles(std::span<double> out);

 private:
  void take(void* dst, std::size_t n);

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace rtlguard::io
