/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hierax {

struct HieraxError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic RNG used throughout the project. Wraps mt19937_64 but
/// implements the uniform/normal mappings by hand so that identical seeds
/// give identical streams on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi], inclusive. Requires lo <= hi.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p);
  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Derives an independent stream seed, e.g. one per image index, so that
  /// parallel generation does not depend on scheduling order.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads in contiguous
/// chunks. Exceptions from workers are rethrown on the calling thread.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

/// Worker count from HIERAX_WORKERS, defaulting to the hardware concurrency.
unsigned worker_count();

// --- small string / file helpers -------------------------------------------

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);
std::string join(const std::vector<std::string>& parts, const std::string& sep);

/// Strict numeric parsing; throws HieraxError with `context` on failure.
long parse_long(std::string_view s, const std::string& context);
double parse_double(std::string_view s, const std::string& context);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Splits file content into lines, tolerating trailing CR and a missing
/// final newline.
std::vector<std::string> split_lines(std::string_view content);

/// FNV-1a 64-bit, used for taxonomy checksums.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace hierax
