#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace modepool {

// Thrown when a configuration field fails validation; the message names the field.
class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class io_error : public std::runtime_error {
 public:
  enum class kind {
    open_failed,
    empty_file,
    malformed_header,
    bad_token,
    count_mismatch,
    bad_magic,
    bad_version,
    truncated,
    checksum_mismatch,
  };

  io_error(kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  kind error_kind() const { return kind_; }

 private:
  kind kind_;
};

// Deterministic random source. All draw routines are spelled out here (instead
// of <random> distributions) so a given seed yields the same sequence on every
// platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal, Box-Muller with one cached draw
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // unbiased integer in [0, n)
  std::size_t index(std::size_t n) {
    const std::uint64_t nn = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / nn * nn;
    std::uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return static_cast<std::size_t>(x % nn);
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// k distinct indices from [0, n), ascending
inline std::vector<int> sample_without_replacement(Rng& rng, int n, int k) {
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(rng.index(static_cast<std::size_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(what) + " contains non-finite values");
  }
}

// 64-bit FNV-1a, used for config hashes and file checksums
inline std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

// seed mixer for deriving per-item seeds from a base seed (splitmix64 finalizer)
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// shortest decimal form that round-trips the exact double
std::string format_double(double v);

// write-temp-then-rename so interrupted runs leave no partial files
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace modepool
