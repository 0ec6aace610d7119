#pragma once

// Shared primitives: 2-D image container, UTM geometry, deterministic RNG,
// compensated accumulation, seed mixing, and the error types thrown across
// the library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace flgpr {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Malformed on-disk artifact (bad magic, bad version, schema violation).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Underlying I/O failure (missing file, truncated payload, write error).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

struct UtmPoint {
  double easting = 0.0;
  double northing = 0.0;

  friend bool operator==(const UtmPoint& a, const UtmPoint& b) {
    return a.easting == b.easting && a.northing == b.northing;
  }
};

inline double distance(const UtmPoint& a, const UtmPoint& b) {
  const double de = a.easting - b.easting;
  const double dn = a.northing - b.northing;
  return std::sqrt(de * de + dn * dn);
}

enum class Channel : std::uint8_t { HH = 0, VV = 1, VH = 2 };

inline const char* channel_name(Channel c) {
  switch (c) {
    case Channel::HH: return "HH";
    case Channel::VV: return "VV";
    case Channel::VH: return "VH";
  }
  throw std::invalid_argument("unknown channel");
}

inline Channel channel_from_name(const std::string& s) {
  if (s == "HH") return Channel::HH;
  if (s == "VV") return Channel::VV;
  if (s == "VH") return Channel::VH;
  throw std::invalid_argument("unknown channel name: " + s);
}

inline constexpr int kNumChannels = 3;

// ---------------------------------------------------------------------------
// Image container
// ---------------------------------------------------------------------------

/// Dense row-major 2-D array. The pixel type is a template parameter so the
/// same container backs complex radar frames, magnitude images, confidence
/// images, and frequency-domain filters.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("negative image dims");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool in_bounds(int r, int c) const { return r >= 0 && r < rows_ && c >= 0 && c < cols_; }

  friend bool operator==(const Image& a, const Image& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using ImageF = Image<double>;
using ImageCf = Image<std::complex<float>>;
using ImageCd = Image<std::complex<double>>;

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a stream tag. Used everywhere
/// a stage needs its own independent, order-insensitive random stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

/// mt19937_64 with hand-rolled uniform/normal transforms so sampled values
/// are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    const int v = static_cast<int>(uniform() * n);
    return std::min(v, n - 1);
  }

  /// Standard normal via Box-Muller (cached pair).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// ---------------------------------------------------------------------------
// Compensated accumulation
// ---------------------------------------------------------------------------

/// Neumaier running sum; error stays near one ulp of the result instead of
/// growing with the number of terms.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Double-double value (hi + lo) with exact two-sum accumulation. Integral
/// images built on these keep window sums accurate to ~1 ulp of the window
/// total even when prefix magnitudes dwarf the window.
struct DD {
  double hi = 0.0;
  double lo = 0.0;
};

inline DD dd_add(DD a, double b) {
  const double s = a.hi + b;
  const double bb = s - a.hi;
  const double err = (a.hi - (s - bb)) + (b - bb);
  DD r;
  r.hi = s;
  r.lo = a.lo + err;
  return r;
}

inline DD dd_add(DD a, DD b) {
  DD r = dd_add(a, b.hi);
  r.lo += b.lo;
  return r;
}

inline DD dd_sub(DD a, DD b) { return dd_add(a, DD{-b.hi, -b.lo}); }

inline double dd_value(DD a) { return a.hi + a.lo; }

// ---------------------------------------------------------------------------
// Hashing (artifact content addressing)
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

// ---------------------------------------------------------------------------
// Parallel loop
// ---------------------------------------------------------------------------

/// Global worker count for parallel_for. 0 = hardware concurrency.
inline int& thread_count() {
  static int n = 0;
  return n;
}

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks so the
/// result is identical for any thread count as long as iterations are
/// independent.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int workers = thread_count() > 0 ? thread_count()
                                   : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  workers = static_cast<int>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace flgpr
