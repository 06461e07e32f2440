#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "vrcn/problems.hpp"

namespace vrcn {

struct LibsvmOptions {
  // Number of features; 0 means the largest index seen.
  std::size_t dim = 0;
  bool normalize_rows = false;
  // Reject labels other than +1/-1 (0 is accepted as -1 when map_zero_label is set).
  bool require_binary = true;
  bool map_zero_label = false;
};

// Lines are "label idx:val idx:val ..." with 1-based, strictly increasing
// indices. Blank lines and lines starting with '#' are skipped.
Dataset parse_libsvm(std::istream& in, const LibsvmOptions& options = {});
Dataset load_libsvm(const std::string& path, const LibsvmOptions& options = {});

// Zero entries are omitted; values are written with round-trip precision.
void write_libsvm(std::ostream& out, const Dataset& data);
void save_libsvm(const std::string& path, const Dataset& data);

}  // namespace vrcn
