// SPDX-License-Identifier: Apache-2.0
#include "lnnfama/common.hpp"

#include <numeric>

namespace lnnfama {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) + index);
}

std::vector<int> top_indices_among(std::span<const double> values, std::span<const int> candidates,
                                   int count) {
  if (count < 0 || static_cast<std::size_t>(count) > candidates.size())
    throw std::invalid_argument("top_indices: count " + std::to_string(count) + " exceeds " +
                                std::to_string(candidates.size()) + " candidates");
  std::vector<int> order(candidates.begin(), candidates.end());
  auto before = [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + count, order.end(), before);
  order.resize(static_cast<std::size_t>(count));
  return order;
}

std::vector<int> top_indices(std::span<const double> values, int count) {
  std::vector<int> all(values.size());
  std::iota(all.begin(), all.end(), 0);
  return top_indices_among(values, all, count);
}

}  // namespace lnnfama
