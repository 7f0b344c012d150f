#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stlsgd {

// Sparse binary-classification dataset in libsvm layout.
struct Dataset {
  struct Row {
    std::vector<std::uint32_t> idx;  // 0-based, strictly ascending
    std::vector<double> val;
  };

  std::vector<Row> rows;
  std::vector<double> labels;  // each -1.0 or +1.0
  std::size_t num_features = 0;

  std::size_t size() const { return rows.size(); }
  std::uint64_t content_hash() const;
};

struct ParseOptions {
  // Raw label values mapped to +1 / -1.  When a pair is set, rows carrying
  // any other label are dropped (class-pair extraction, e.g. two digits).
  std::optional<double> positive_class;
  std::optional<double> negative_class;
  std::optional<std::size_t> num_features;  // override for the max-index default
};

Dataset parse_libsvm(std::string_view text, const ParseOptions& opts = {});

// Reads a libsvm file; gzip is detected by magic bytes and inflated.
Dataset load_libsvm_file(const std::string& path, const ParseOptions& opts = {});

// Two Gaussian blobs at +/- mean, dense rows, balanced labels.  Serves as the
// bundled stand-in when no real dataset file is available.
Dataset synthetic_two_class(std::size_t n, std::size_t dim, std::uint64_t seed);

}  // namespace stlsgd
