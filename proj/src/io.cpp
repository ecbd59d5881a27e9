#include "rtlguard/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rtlguard/error.hpp"

namespace rtlguard::io {

static_assert(std::endian::native == std::endian::little,
              "binary checkpoint sections are stored little-endian");

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw Error("write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_float(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError("invalid number: '" + std::string(text) + "'");
  }
  return v;
}

long long parse_int(std::string_view text) {
  text = trim(text);
  long long v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError("invalid integer: '" + std::string(text) + "'");
  }
  return v;
}

std::string join_doubles(std::span<const double> values, char sep) {
  std::string out;
  out.reserve(values.size() * 12);
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.push_back(sep);
    auto res = std::to_chars(buf, buf + sizeof buf, values[i]);
    out.append(buf, res.ptr);
  }
  return out;
}

std::vector<double> split_doubles(std::string_view text, char sep) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (auto piece : split(text, sep)) out.push_back(parse_double(piece));
  return out;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(text.substr(start));
      return out;
    }
    out.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view text) {
  const char* ws = " \t\r\n";
  auto b = text.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = text.find_last_not_of(ws);
  return text.substr(b, e - b + 1);
}

std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    auto ln = text.substr(start, pos - start);
    if (!ln.empty() && ln.back() == '\r') ln.remove_suffix(1);
    out.push_back(ln);
    start = pos + 1;
  }
  return out;
}

void append_floats(std::string& out, std::span<const float> values) {
  out.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
}

void append_doubles(std::string& out, std::span<const double> values) {
  out.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
}

std::string_view Reader::line() {
  if (pos_ >= data_.size()) throw FormatError("unexpected end of file");
  auto end = data_.find('\n', pos_);
  if (end == std::string_view::npos) throw FormatError("truncated file: unterminated line");
  auto out = data_.substr(pos_, end - pos_);
  pos_ = end + 1;
  return out;
}

void Reader::take(void* dst, std::size_t n) {
  if (data_.size() - pos_ < n) throw FormatError("truncated file: binary section too short");
  std::memcpy(dst, data_.data() + pos_, n);
  pos_ += n;
}

void Reader::floats(std::span<float> out) { take(out.data(), out.size_bytes()); }
void Reader::doubles(std::span<double> out) { take(out.data(), out.size_bytes()); }

}  // namespace rtlguard::io
