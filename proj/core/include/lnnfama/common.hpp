// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace lnnfama {

/// Base class for all errors raised by the toolkit. Subclasses map to
/// distinct CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Checksum, version or truncation problems in a persisted artifact.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based seed derivation: the seed of item `index` in stream
/// `stream` depends only on (master, stream, index), never on execution order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

// Stream identifiers for derive_seed.
namespace streams {
inline constexpr std::uint64_t kChannel = 0x01;
inline constexpr std::uint64_t kDataset = 0x02;
inline constexpr std::uint64_t kSplit = 0x03;
inline constexpr std::uint64_t kTraining = 0x04;
inline constexpr std::uint64_t kTrial = 0x05;
inline constexpr std::uint64_t kOutage = 0x06;
}  // namespace streams

/// Indices of the `count` largest values, in descending order of value.
/// Ties go to the lower index.
std::vector<int> top_indices(std::span<const double> values, int count);

/// Same ranking rule restricted to the candidate indices.
std::vector<int> top_indices_among(std::span<const double> values, std::span<const int> candidates,
                                   int count);

/// Runs fn(begin, end) over contiguous chunks of [0, count) using up to
/// `workers` threads. Exceptions from workers are rethrown on the caller.
template <class Fn>
void parallel_chunks(std::size_t count, int workers, Fn&& fn) {
  const std::size_t n_workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), count));
  if (n_workers <= 1) {
    if (count > 0) fn(std::size_t{0}, count);
    return;
  }
  std::vector<std::exception_ptr> errors(n_workers);
  std::vector<std::thread> threads;
  threads.reserve(n_workers);
  const std::size_t chunk = (count + n_workers - 1) / n_workers;
  for (std::size_t w = 0; w < n_workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  parallel_chunks(count, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace lnnfama
