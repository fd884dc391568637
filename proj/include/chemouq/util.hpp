#pragma once

#include <cstdint>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace chemouq {

// Error hierarchy. Every failure surfaced by the library derives from Error so
// callers can catch broadly, while tests can pin the specific kind.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class ArgumentError : public Error {
public:
  using Error::Error;
};

class SingularParameterError : public Error {
public:
  using Error::Error;
};

class IncompatibleError : public Error {
public:
  using Error::Error;
};

class DependencyError : public Error {
public:
  using Error::Error;
};

// 64-bit FNV-1a. Used for cache keys, content hashes and seed derivation;
// not a cryptographic hash.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a_doubles(const double* data, std::size_t n,
                            std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

std::uint64_t splitmix64(std::uint64_t x);

// Seed for a named substream of a global seed. Stable across runs and
// platforms, so partial reruns of a pipeline stage reproduce its randomness.
std::uint64_t substream_seed(std::uint64_t global_seed, std::string_view name);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t global_seed, std::string_view name) {
  return Rng(substream_seed(global_seed, name));
}

// Runs body(i) for i in [0, n) on up to `workers` threads (0 = hardware
// concurrency). The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)>& body);

// Shortest round-trip decimal representation of a double (for CSV output).
std::string format_double(double v);

// Writes `content` to `path`, creating parent directories.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace chemouq
