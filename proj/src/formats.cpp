// SPDX-License-Identifier: Apache-2.0
#include "ddsr/formats.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>
#include <vector>

#include "ddsr/errors.hpp"

namespace ddsr {
namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

double parse_double(std::string_view s, const std::string& path, std::size_t line) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw parse_error(path, line, "malformed number '" + std::string(s) + "'");
  return v;
}

std::size_t parse_count(std::string_view s, const std::string& path, std::size_t line) {
  s = trim(s);
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw parse_error(path, line, "malformed integer '" + std::string(s) + "'");
  return v;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  return in;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_prediction_matrix(const std::filesystem::path& path, const PredictionMatrix& m) {
  auto out = open_for_write(path);
  out << "id";
  for (std::size_t j = 0; j < m.class_count(); ++j) out << ",p" << j;
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << m.ids()[i];
    for (double v : m.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw io_error("failed writing " + path.string());
}

PredictionMatrix read_prediction_matrix(const std::filesystem::path& path, std::size_t expected_classes) {
  auto in = open_for_read(path);
  const std::string p = path.string();
  std::string line;
  if (!std::getline(in, line)) throw parse_error(p, 1, "missing header");
  const auto header = split_csv(trim(line));
  if (header.size() < 3 || trim(header[0]) != "id") throw parse_error(p, 1, "header must be id,p0,...,p{C-1}");
  const std::size_t classes = header.size() - 1;
  for (std::size_t j = 0; j < classes; ++j)
    if (trim(header[j + 1]) != "p" + std::to_string(j)) throw parse_error(p, 1, "header must be id,p0,...,p{C-1}");
  if (expected_classes != 0 && classes != expected_classes)
    throw parse_error(p, 1, "expected " + std::to_string(expected_classes) + " classes, found " + std::to_string(classes));

  std::vector<std::string> ids;
  std::vector<double> values;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  std::vector<double> row(classes);
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto cells = split_csv(text);
    if (cells.size() != classes + 1)
      throw parse_error(p, lineno, "expected " + std::to_string(classes + 1) + " columns, found " + std::to_string(cells.size()));
    std::string id(trim(cells[0]));
    if (id.empty()) throw parse_error(p, lineno, "empty id");
    if (!seen.insert(id).second) throw parse_error(p, lineno, "duplicate id " + id);
    double total = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      row[j] = parse_double(cells[j + 1], p, lineno);
      if (!std::isfinite(row[j]) || row[j] < 0.0) throw parse_error(p, lineno, "probability must be finite and >= 0");
      total += row[j];
    }
    if (std::abs(total - 1.0) > kRowSumTolerance)
      throw parse_error(p, lineno, "row sums to " + format_double(total) + ", outside tolerance");
    // Rows already on the simplex are kept bit-exact; small drift is renormalized.
    const bool renormalize = std::abs(total - 1.0) > kSimplexTolerance;
    for (double v : row) values.push_back(renormalize ? v / total : v);
    ids.push_back(std::move(id));
  }
  const std::size_t n = ids.size();
  if (n == 0) throw parse_error(p, lineno, "no prediction rows");
  return PredictionMatrix(std::move(ids), Matrix(n, classes, std::move(values)));
}

void write_dataset(const std::filesystem::path& path, const Dataset& data, bool with_labels) {
  validate_dataset(data);
  auto out = open_for_write(path);
  out << "ddsr-dataset," << data.dim() << ',' << data.class_count << ',' << data.size() << '\n';
  const bool labels = with_labels && data.labels.has_value();
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.ids[i];
    for (double v : data.features.row(i)) out << ',' << format_double(v);
    if (labels) out << ',' << (*data.labels)[i];
    out << '\n';
  }
  if (!out) throw io_error("failed writing " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  const std::string p = path.string();
  std::string line;
  if (!std::getline(in, line)) throw parse_error(p, 1, "missing header");
  const auto header = split_csv(trim(line));
  if (header.size() != 4 || trim(header[0]) != "ddsr-dataset") throw parse_error(p, 1, "header must be ddsr-dataset,d,C,n");
  const std::size_t d = parse_count(header[1], p, 1);
  const std::size_t c = parse_count(header[2], p, 1);
  const std::size_t n = parse_count(header[3], p, 1);
  if (d == 0 || c < 2) throw parse_error(p, 1, "need d >= 1 and C >= 2");

  Dataset data;
  data.class_count = c;
  std::vector<double> values;
  values.reserve(n * d);
  std::vector<std::size_t> labels;
  std::optional<bool> has_labels;
  std::unordered_set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto cells = split_csv(text);
    bool labeled = false;
    if (cells.size() == d + 2) labeled = true;
    else if (cells.size() != d + 1)
      throw parse_error(p, lineno, "expected " + std::to_string(d + 1) + " or " + std::to_string(d + 2) + " columns");
    if (has_labels && *has_labels != labeled) throw parse_error(p, lineno, "label column present on some rows only");
    has_labels = labeled;
    std::string id(trim(cells[0]));
    if (id.empty()) throw parse_error(p, lineno, "empty id");
    if (!seen.insert(id).second) throw parse_error(p, lineno, "duplicate id " + id);
    for (std::size_t k = 0; k < d; ++k) {
      const double v = parse_double(cells[k + 1], p, lineno);
      if (!std::isfinite(v)) throw parse_error(p, lineno, "non-finite feature");
      values.push_back(v);
    }
    if (labeled) {
      const auto y = parse_count(cells[d + 1], p, lineno);
      if (y >= c) throw parse_error(p, lineno, "label out of range");
      labels.push_back(y);
    }
    data.ids.push_back(std::move(id));
  }
  if (data.ids.size() != n)
    throw parse_error(p, lineno, "header declares " + std::to_string(n) + " samples, found " + std::to_string(data.ids.size()));
  data.features = Matrix(n, d, std::move(values));
  if (has_labels.value_or(false)) data.labels = std::move(labels);
  return data;
}

std::string file_digest(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

}  // namespace ddsr
