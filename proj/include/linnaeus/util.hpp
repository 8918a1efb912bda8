#pragma once

#include <cstddef>
#include <filesystem>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace linnaeus::util {

/// Splits one RFC 4180 record. Quoted fields may contain commas and doubled quotes.
/// Returns false on an unterminated quote.
bool split_csv_line(std::string_view line, std::vector<std::string>& fields);
std::string csv_escape(std::string_view field);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename, then fsyncs.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions from workers are rethrown
/// (the one with the lowest index wins so failures are deterministic).
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

std::size_t default_jobs();

/// Seeded generator whose derived draws do not depend on the standard library's
/// distribution implementations, so seeded runs reproduce across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  /// Uniform real in [0, 1).
  double uniform();
  double normal();

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) std::swap(first[i - 1], first[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace linnaeus::util
