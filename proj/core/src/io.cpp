#include "proulearn/io.hpp"

#include <charconv>
#include <cmath>
#include <string>
#include <vector>

#include "binio.hpp"
#include "proulearn/errors.hpp"

namespace proulearn {

namespace {

using namespace binio;

constexpr char kFeatureMagic[4] = {'P', 'U', 'L', 'F'};
constexpr char kLabelMagic[4] = {'P', 'U', 'L', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

FeatureMatrix load_features_binary(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  check_magic(in, kFeatureMagic, "feature");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kFormatVersion)
    throw format_error(format_fault::malformed_header,
                       "unsupported feature file version " + std::to_string(version));
  const std::uint64_t rows = read_u64(in, "rows");
  const std::uint64_t cols = read_u64(in, "cols");
  if (rows < 1 || cols < 2)
    throw format_error(format_fault::dimension_mismatch,
                       "feature file declares " + std::to_string(rows) + "x" +
                           std::to_string(cols) + ", need rows >= 1 and cols >= 2");
  FeatureMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const float v = read_f32(in, "payload");
      if (!std::isfinite(v))
        throw format_error(format_fault::non_finite_value, "non-finite value", r, c);
      m.at(r, c) = static_cast<double>(v);
    }
  }
  return m;
}

FeatureMatrix load_features_csv(const std::filesystem::path& path, bool csv_header) {
  auto in = open_in(path, false);
  std::string line;
  std::size_t data_row = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  bool skip_next = csv_header;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_next) {
      skip_next = false;
      continue;
    }
    if (line.empty()) continue;
    std::size_t col = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      std::size_t begin = pos, end = comma;
      while (begin < end && (line[begin] == ' ' || line[begin] == '\t')) ++begin;
      while (end > begin && (line[end - 1] == ' ' || line[end - 1] == '\t')) --end;
      double v = 0.0;
      const auto res = std::from_chars(line.data() + begin, line.data() + end, v);
      if (res.ec != std::errc() || res.ptr != line.data() + end)
        throw format_error(format_fault::bad_value,
                           "cannot parse \"" + line.substr(begin, end - begin) + "\"",
                           data_row, col);
      if (!std::isfinite(v))
        throw format_error(format_fault::non_finite_value, "non-finite value",
                           data_row, col);
      values.push_back(v);
      ++col;
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (cols == 0) {
      cols = col;
    } else if (col != cols) {
      throw format_error(format_fault::dimension_mismatch,
                         "row has " + std::to_string(col) + " columns, expected " +
                             std::to_string(cols),
                         data_row);
    }
    ++data_row;
  }
  if (data_row < 1 || cols < 2)
    throw format_error(format_fault::dimension_mismatch,
                       "need at least 1 row and 2 columns, got " +
                           std::to_string(data_row) + "x" + std::to_string(cols));
  FeatureMatrix m;
  m.rows = data_row;
  m.cols = cols;
  m.values = std::move(values);
  return m;
}

}  // namespace

FeatureMatrix load_features(const std::filesystem::path& path, FileFormat format,
                            bool csv_header) {
  return format == FileFormat::binary ? load_features_binary(path)
                                      : load_features_csv(path, csv_header);
}

void save_features(const FeatureMatrix& m, const std::filesystem::path& path,
                   FileFormat format, bool csv_header) {
  m.validate();
  if (format == FileFormat::binary) {
    auto out = open_out(path, true);
    write_bytes(out, kFeatureMagic, 4);
    write_u32(out, kFormatVersion);
    write_u64(out, m.rows);
    write_u64(out, m.cols);
    for (const double v : m.values) write_f32(out, static_cast<float>(v));
    if (!out) throw io_error("write failed: " + path.string());
    return;
  }
  auto out = open_out(path, false);
  if (csv_header) {
    for (std::size_t c = 0; c < m.cols; ++c) out << (c ? ",f" : "f") << c;
    out << '\n';
  }
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out << ',';
      out << format_double(m.at(r, c));
    }
    out << '\n';
  }
  if (!out) throw io_error("write failed: " + path.string());
}

LabelVector load_labels(const std::filesystem::path& path) {
  auto in = open_in(path, true);
  check_magic(in, kLabelMagic, "label");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kFormatVersion)
    throw format_error(format_fault::malformed_header,
                       "unsupported label file version " + std::to_string(version));
  const std::uint64_t n = read_u64(in, "count");
  const std::uint32_t num_classes = read_u32(in, "num_classes");
  LabelVector v;
  v.num_classes = num_classes;
  v.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    v.labels[i] = read_u32(in, "labels");
    if (v.labels[i] >= num_classes)
      throw format_error(format_fault::bad_value,
                         "label " + std::to_string(v.labels[i]) + " >= num_classes", i);
  }
  return v;
}

void save_labels(const LabelVector& v, const std::filesystem::path& path) {
  v.validate();
  auto out = open_out(path, true);
  write_bytes(out, kLabelMagic, 4);
  write_u32(out, kFormatVersion);
  write_u64(out, v.labels.size());
  write_u32(out, v.num_classes);
  for (const std::uint32_t label : v.labels) write_u32(out, label);
  if (!out) throw io_error("write failed: " + path.string());
}

}  // namespace proulearn
