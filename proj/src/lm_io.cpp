#include <string>

#include "rtlguard/io.hpp"
#include "rtlguard/lm.hpp"

namespace rtlguard {

namespace {

constexpr std::string_view kLmMagic = "CGLM1";
constexpr std::string_view kActMagic = "CGACT1";

/// Parses "key value" and checks the key.
long long keyed_int(std::string_view line, std::string_view key) {
  auto parts = io::split(line, ' ');
  if (parts.size() != 2 || parts[0] != key) {
    throw FormatError("expected '" + std::string(key) + " <n>', got '" + std::string(line) + "'");
  }
  return io::parse_int(parts[1]);
}

}  // namespace

std::string format_checkpoint(const LanguageModel& model) {
  const LmConfig& c = model.config();
  std::string out;
  out += std::string(kLmMagic) + "\n";
  out += "layers " + std::to_string(c.layers) + "\n";
  out += "hidden " + std::to_string(c.hidden) + "\n";
  out += "heads " + std::to_string(c.heads) + "\n";
  out += "context " + std::to_string(c.context) + "\n";
  out += "seed " + std::to_string(c.seed) + "\n";
  out += "vocab " + std::to_string(kVocab) + "\n";
  out += "tensors " + std::to_string(model.tensors().size()) + "\n";
  for (const auto& t : model.tensors()) {
    out += t.name + " " + std::to_string(t.rows) + " " + std::to_string(t.cols) + "\n";
  }
  out += "data " + std::to_string(model.parameters().size()) + "\n";
  io::append_floats(out, model.parameters());
  return out;
}

LanguageModel parse_checkpoint(std::string_view data) {
  io::Reader r(data);
  if (r.line() != kLmMagic) throw FormatError("not a CGLM1 checkpoint");
  LmConfig c;
  c.layers = static_cast<int>(keyed_int(r.line(), "layers"));
  c.hidden = static_cast<int>(keyed_int(r.line(), "hidden"));
  c.heads = static_cast<int>(keyed_int(r.line(), "heads"));
  c.context = static_cast<int>(keyed_int(r.line(), "context"));
  c.seed = static_cast<std::uint64_t>(keyed_int(r.line(), "seed"));
  if (keyed_int(r.line(), "vocab") != kVocab) throw FormatError("checkpoint vocabulary size mismatch");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  LanguageModel model(c);
  const auto n_tensors = keyed_int(r.line(), "tensors");
  if (n_tensors != static_cast<long long>(model.tensors().size())) {
    throw FormatError("checkpoint tensor count mismatch");
  }
  for (const auto& t : model.tensors()) {
    const std::string expect = t.name + " " + std::to_string(t.rows) + " " + std::to_string(t.cols);
    const auto line = r.line();
    if (line != expect) {
      throw FormatError("checkpoint tensor '" + std::string(line) + "' does not match expected '" + expect + "'");
    }
  }
  if (keyed_int(r.line(), "data") != static_cast<long long>(model.parameters().size())) {
    throw FormatError("checkpoint parameter count mismatch");
  }
  r.floats(model.parameters());
  if (!r.done()) throw FormatError("trailing bytes after checkpoint data");
  return model;
}

void save_checkpoint(const LanguageModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_checkpoint(model));
}

LanguageModel load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(io::read_file(path)); }

ActivationWriter::ActivationWriter(int hidden) : hidden_(hidden) {
  data_ = std::string(kActMagic) + "\nhidden " + std::to_string(hidden) + "\n";
}

void ActivationWriter::add(const ActivationRecord& rec) {
  if (rec.values.size() != static_cast<std::size_t>(hidden_)) {
    throw DimensionError("activation record of length " + std::to_string(rec.values.size()) +
                         ", expected " + std::to_string(hidden_));
  }
  if (rec.sample.find_first_of("\t\n") != std::string::npos) {
    throw FormatError("sample id contains a tab or newline");
  }
  data_ += "rec\t" + rec.sample + "\t" + std::to_string(rec.layer) + "\t" + std::string(to_string(rec.tap)) +
           "\t" + std::to_string(rec.position) + "\t" + std::to_string(hidden_) + "\n";
  io::append_floats(data_, rec.values);
}

void ActivationWriter::add(std::string_view sample, const ActivationSet& set) {
  for (const auto& [spec, rows] : set.values) {
    for (std::size_t pos = 0; pos < rows.size(); ++pos) {
      add(ActivationRecord{std::string(sample), spec.layer, spec.tap, static_cast<int>(pos), rows[pos]});
    }
  }
}

std::vector<ActivationRecord> parse_activations(std::string_view data, int* hidden) {
  io::Reader r(data);
  if (r.line() != kActMagic) throw FormatError("not a CGACT1 activation dump");
  const auto d = keyed_int(r.line(), "hidden");
  if (d < 1) throw FormatError("activation dump hidden size must be >= 1");
  if (hidden) *hidden = static_cast<int>(d);
  std::vector<ActivationRecord> out;
  while (!r.done()) {
    auto fields = io::split(r.line(), '\t');
    if (fields.size() != 6 || fields[0] != "rec") throw FormatError("malformed activation record header");
    ActivationRecord rec;
    rec.sample = std::string(fields[1]);
    rec.layer = static_cast<int>(io::parse_int(fields[2]));
    rec.tap = parse_tap(fields[3]);
    rec.position = static_cast<int>(io::parse_int(fields[4]));
    if (io::parse_int(fields[5]) != d) throw FormatError("activation record length differs from header");
    rec.values.resize(static_cast<std::size_t>(d));
    r.floats(rec.values);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace rtlguard
