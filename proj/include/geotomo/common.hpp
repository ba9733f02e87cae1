#pragma once

// Shared small utilities: error taxonomy, 2-vectors, reproducible RNG,
// quantiles, thread helper, content hashing.

#include <cmath>
#include <cstdint>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace geotomo {

//----------------------------------------------------------------------------
// Error taxonomy. CLI maps these to exit codes (usage 1, numeric 2, io 3).
//----------------------------------------------------------------------------

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

//----------------------------------------------------------------------------
// Plain 2-vector. Eigen is used for linear algebra proper; geometry inner
// loops stay on this POD type.
//----------------------------------------------------------------------------

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm2() const { return x * x + y * y; }
  double norm() const { return std::sqrt(norm2()); }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

constexpr double kPi = 3.14159265358979323846;

//----------------------------------------------------------------------------
// Reproducible RNG. mt19937_64's bitstream is pinned by the standard;
// std::normal_distribution is not, so normals use the polar Box-Muller
// transform by hand. Same seed => bit-identical draw sequence everywhere.
//----------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform on [0, 1).
  double uniform() {
    // 53-bit mantissa draw.
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via polar Box-Muller with cached spare.
  double gauss() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

//----------------------------------------------------------------------------
// Statistics helpers.
//----------------------------------------------------------------------------

// Hyndman-Fan type 7 quantile (the R/numpy default). p in [0, 1].
double quantile(std::vector<double> values, double p);

// Inverse standard normal CDF (Acklam's rational approximation refined with
// one Halley step through std::erfc).
double normal_quantile(double p);

//----------------------------------------------------------------------------
// Parallel loop over [0, n). Thread count from the GEOTOMO_THREADS env var,
// else hardware concurrency. Static contiguous chunks so results do not
// depend on scheduling; fn(i) must only write state owned by index i.
//----------------------------------------------------------------------------

int thread_count();

template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  const int nt = static_cast<int>(std::min<std::int64_t>(thread_count(), n));
  if (nt <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  std::mutex err_mutex;
  std::exception_ptr first_error;
  const std::int64_t chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    const std::int64_t lo = t * chunk;
    const std::int64_t hi = std::min<std::int64_t>(lo + chunk, n);
    pool.emplace_back([lo, hi, &fn, &err_mutex, &first_error] {
      try {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

//----------------------------------------------------------------------------
// FNV-1a 64-bit content hash (manifests).
//----------------------------------------------------------------------------

std::uint64_t fnv1a64(const void* data, std::size_t size);
inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace geotomo
