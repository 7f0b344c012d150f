#include "stlsgd/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "stlsgd/rng.hpp"

namespace stlsgd {

// Similarity knob: iid_fraction percent of the examples are shuffled and dealt
// evenly across clients; the remainder is sorted by label and handed out in
// contiguous blocks, so low fractions give label-skewed shards.
Shards partition(const Dataset& data, const PartitionSpec& spec) {
  if (spec.num_clients == 0) throw std::invalid_argument("num_clients must be positive");
  if (spec.iid_fraction < 0.0 || spec.iid_fraction > 100.0) {
    throw std::invalid_argument("iid_fraction must lie in [0, 100]");
  }
  const std::size_t n = data.size();
  if (n < spec.num_clients) {
    throw std::invalid_argument("fewer examples than clients");
  }

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  RngStream rng(spec.seed, kMetaStream + 1, 0);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = rng.next_below(i + 1);
    std::swap(order[i], order[j]);
  }

  const auto m = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * spec.iid_fraction / 100.0));
  std::vector<std::uint32_t> mixed(order.begin(), order.begin() + m);
  std::vector<std::uint32_t> skewed(order.begin() + m, order.end());
  std::sort(skewed.begin(), skewed.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (data.labels[a] != data.labels[b]) return data.labels[a] < data.labels[b];
    return a < b;
  });

  Shards shards(spec.num_clients);
  // Extras rotate across deals so combined shard sizes stay within one of
  // each other.
  std::size_t extra_at = 0;
  auto deal = [&](const std::vector<std::uint32_t>& part) {
    const std::size_t cnt = part.size();
    const std::size_t base = cnt / spec.num_clients;
    const std::size_t extra = cnt % spec.num_clients;
    std::size_t at = 0;
    for (std::size_t c = 0; c < spec.num_clients; ++c) {
      std::size_t from_start = (c + spec.num_clients - extra_at) % spec.num_clients;
      std::size_t take = base + (from_start < extra ? 1 : 0);
      auto& shard = shards[c];
      shard.insert(shard.end(), part.begin() + at, part.begin() + at + take);
      at += take;
    }
    extra_at = (extra_at + extra) % spec.num_clients;
  };
  deal(mixed);
  deal(skewed);

  for (const auto& shard : shards) {
    if (shard.empty()) throw std::invalid_argument("a client received an empty shard");
  }
  return shards;
}

}  // namespace stlsgd
