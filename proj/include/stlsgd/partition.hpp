#pragma once

#include <cstdint>
#include <vector>

#include "stlsgd/dataset.hpp"

namespace stlsgd {

struct PartitionSpec {
  std::size_t num_clients = 1;
  double iid_fraction = 100.0;  // s: percent of examples split uniformly at random
  std::uint64_t seed = 0;
};

using Shards = std::vector<std::vector<std::uint32_t>>;

// Splits example indices into N disjoint covering shards: an s% uniformly
// random portion is divided evenly, the remainder is sorted by label (ties by
// original index) and assigned contiguously.  Deterministic in (data, spec).
Shards partition(const Dataset& data, const PartitionSpec& spec);

}  // namespace stlsgd
