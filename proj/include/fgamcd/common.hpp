#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fgamcd {

inline constexpr const char* kVersion = "0.1.0";

// 64-bit FNV-1a, used to derive substream seeds and config hashes.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG stream. All randomness in the project flows from one
// master seed through named substreams, so ablations can share every stream
// except the one under study. Distribution code is hand-rolled to keep
// outputs identical across standard-library implementations.
class RngStream {
 public:
  RngStream() : engine_(0x9e3779b97f4a7c15ull) {}
  explicit RngStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static RngStream substream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
    return RngStream(splitmix64(master ^ fnv1a(name)) ^ splitmix64(index * 0x9e3779b97f4a7c15ull + 1));
  }

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0,1) with 53-bit resolution
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // standard normal via Box-Muller (cached second value)
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cache_ = r * std::sin(2.0 * M_PI * u2);
    has_cache_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  // CN(0,1): complex normal, unit variance overall
  std::complex<double> normal_c() {
    return {normal() * M_SQRT1_2, normal() * M_SQRT1_2};
  }

  std::mt19937_64& engine() { return engine_; }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    if (has_cache_) os << " 1 " << cache_;
    else os << " 0 0";
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    int flag = 0;
    is >> flag >> cache_;
    has_cache_ = (flag == 1);
    if (!is) throw std::runtime_error("RngStream: malformed state string");
  }

 private:
  std::mt19937_64 engine_;
  double cache_ = 0.0;
  bool has_cache_ = false;
};

// CSV emitter with fixed formatting so identical runs produce identical bytes.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("CsvWriter: cannot open " + path);
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }

  static std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

inline double sq(double x) { return x * x; }

}  // namespace fgamcd
