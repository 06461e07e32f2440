#include "vrcn/libsvm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>
#include <utility>
#include <vector>

#include "vrcn/errors.hpp"

namespace vrcn {

namespace {

struct SparseRow {
  double label;
  std::vector<std::pair<std::size_t, double>> entries;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view token, std::size_t line, const char* what) {
  // from_chars rejects a leading '+', which LIBSVM labels commonly carry.
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(value)) {
    throw ParseError(std::string("invalid ") + what + " '" + std::string(token) + "'", line);
  }
  return value;
}

SparseRow parse_line(std::string_view text, std::size_t line) {
  SparseRow row{0.0, {}};
  std::size_t pos = 0;
  bool first = true;
  std::size_t last_index = 0;
  while (pos < text.size()) {
    const auto start = text.find_first_not_of(" \t", pos);
    if (start == std::string_view::npos) break;
    auto end = text.find_first_of(" \t", start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view token = text.substr(start, end - start);
    pos = end;
    if (first) {
      row.label = parse_double(token, line, "label");
      first = false;
      continue;
    }
    const auto colon = token.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError("expected idx:val, got '" + std::string(token) + "'", line);
    }
    const std::string_view idx_text = token.substr(0, colon);
    std::size_t index = 0;
    const auto [ptr, ec] = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), index);
    if (ec != std::errc() || ptr != idx_text.data() + idx_text.size() || index == 0) {
      throw ParseError("invalid feature index '" + std::string(idx_text) + "'", line);
    }
    if (index <= last_index) {
      throw ParseError("feature indices must be strictly increasing", line);
    }
    last_index = index;
    row.entries.emplace_back(index - 1, parse_double(token.substr(colon + 1), line, "value"));
  }
  return row;
}

}  // namespace

Dataset parse_libsvm(std::istream& in, const LibsvmOptions& options) {
  std::vector<SparseRow> rows;
  std::vector<std::size_t> line_numbers;
  std::size_t max_index = 0;
  std::string buffer;
  std::size_t line = 0;
  while (std::getline(in, buffer)) {
    ++line;
    const std::string_view text = trim(buffer);
    if (text.empty() || text.front() == '#') continue;
    SparseRow row = parse_line(text, line);
    double& label = row.label;
    if (options.map_zero_label && label == 0.0) label = -1.0;
    if (options.require_binary && label != 1.0 && label != -1.0) {
      throw ParseError("label must be +1 or -1 for classification", line);
    }
    if (!row.entries.empty()) max_index = std::max(max_index, row.entries.back().first + 1);
    rows.push_back(std::move(row));
    line_numbers.push_back(line);
  }
  if (rows.empty()) throw ParseError("no samples", 0);

  const std::size_t dim = options.dim == 0 ? max_index : options.dim;
  if (dim == 0) throw ParseError("no features", 0);
  Dataset data{Matrix(rows.size(), dim), std::vector<double>(rows.size())};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    data.labels[r] = rows[r].label;
    for (const auto& [idx, val] : rows[r].entries) {
      if (idx >= dim) {
        throw ParseError("feature index " + std::to_string(idx + 1) + " exceeds dimension " +
                             std::to_string(dim),
                         line_numbers[r]);
      }
      data.features(r, idx) = val;
    }
    if (options.normalize_rows) {
      auto row = data.features.row(r);
      const double nr = norm(row);
      if (nr > 0.0) {
        for (double& v : row) v /= nr;
      }
    }
  }
  return data;
}

Dataset load_libsvm(const std::string& path, const LibsvmOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open LIBSVM file '" + path + "'");
  return parse_libsvm(in, options);
}

void write_libsvm(std::ostream& out, const Dataset& data) {
  require_same_dim(data.features.rows(), data.labels.size(), "write_libsvm");
  char buf[64];
  auto emit = [&](double v) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
  };
  for (std::size_t r = 0; r < data.features.rows(); ++r) {
    const double label = data.labels[r];
    if (label == 1.0) {
      out << "+1";
    } else {
      emit(label);
    }
    const auto row = data.features.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (row[j] == 0.0) continue;
      out << ' ' << (j + 1) << ':';
      emit(row[j]);
    }
    out << '\n';
  }
}

void save_libsvm(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write LIBSVM file '" + path + "'");
  write_libsvm(out, data);
  if (!out) throw std::runtime_error("error while writing '" + path + "'");
}

}  // namespace vrcn
