#pragma once

// Thin FFTW3 wrapper for 2-D complex transforms. Plans are cached per shape
// behind a mutex (FFTW plan creation is not thread-safe); execution uses the
// thread-safe new-array interface. FFTW_ESTIMATE keeps planning deterministic.

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

#include "flgpr/core.hpp"

namespace flgpr {

namespace detail {

class FftwPlanCache {
 public:
  static FftwPlanCache& instance() {
    static FftwPlanCache cache;
    return cache;
  }

  fftw_plan plan(int rows, int cols, int sign) {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto key = std::make_tuple(rows, cols, sign);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    std::vector<std::complex<double>> in(static_cast<std::size_t>(rows) * cols);
    std::vector<std::complex<double>> out(in.size());
    fftw_plan p = fftw_plan_dft_2d(
        rows, cols, reinterpret_cast<fftw_complex*>(in.data()),
        reinterpret_cast<fftw_complex*>(out.data()), sign,
        FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p) throw std::runtime_error("fftw plan creation failed");
    plans_.emplace(key, p);
    return p;
  }

 private:
  FftwPlanCache() = default;
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

inline ImageCd transform2d(const ImageCd& in, int sign) {
  ImageCd out(in.rows(), in.cols());
  fftw_plan p = FftwPlanCache::instance().plan(in.rows(), in.cols(), sign);
  // The input is logically const; FFTW's API takes non-const pointers but an
  // out-of-place c2c transform does not write to the source.
  fftw_execute_dft(p,
                   reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

}  // namespace detail

/// Forward 2-D DFT, unnormalized.
inline ImageCd fft2d(const ImageCd& in) { return detail::transform2d(in, FFTW_FORWARD); }

/// Inverse 2-D DFT, scaled by 1/(rows*cols) so ifft2d(fft2d(x)) == x.
inline ImageCd ifft2d(const ImageCd& in) {
  ImageCd out = detail::transform2d(in, FFTW_BACKWARD);
  const double scale = 1.0 / (static_cast<double>(in.rows()) * in.cols());
  for (auto& v : out.storage()) v *= scale;
  return out;
}

}  // namespace flgpr
