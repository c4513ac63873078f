#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace b4g {

// 64-bit FNV-1a. Used for content keys (parse cache, feature cache, config
// hash); not a cryptographic digest.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::string hex64(std::uint64_t value);

// Hash of a token sequence joined by single spaces.
std::uint64_t hash_tokens(const std::vector<std::string>& tokens) noexcept;

// Portable draws from mt19937_64. The standard distributions are
// implementation-defined, which would break cross-platform determinism.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // Uniform integer in [0, bound), rejection sampled.
  std::uint64_t below(std::uint64_t bound);
  double bernoulli_keep(double keep_probability) {
    return uniform01() < keep_probability ? 1.0 : 0.0;
  }
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::vector<std::string> split_whitespace(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

enum class LogLevel { quiet = 0, warning = 1, info = 2 };
void set_log_level(LogLevel level) noexcept;
LogLevel log_level() noexcept;
void log_warning(const std::string& message);
void log_info(const std::string& message);

}  // namespace b4g
