#pragma once

// Handcrafted feature extractors over alarm patches: rasterized pixels,
// whole-patch SIFT, local statistics, windowed 2-D FFT quadrant, and
// log-Gabor filter-response statistics.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "flgpr/core.hpp"
#include "flgpr/fft.hpp"
#include "flgpr/patch.hpp"

namespace flgpr {

enum class FeatureKind : std::uint8_t {
  Raw = 0,
  Sift = 1,
  Lstat = 2,
  Fft2d = 3,
  LogGabor = 4,
  BovRaw = 5,
  BovSift = 6,
  FvRaw = 7,
  FvSift = 8,
};

inline const char* feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::Raw: return "raw";
    case FeatureKind::Sift: return "sift";
    case FeatureKind::Lstat: return "lstat";
    case FeatureKind::Fft2d: return "fft2d";
    case FeatureKind::LogGabor: return "loggabor";
    case FeatureKind::BovRaw: return "bov_raw";
    case FeatureKind::BovSift: return "bov_sift";
    case FeatureKind::FvRaw: return "fv_raw";
    case FeatureKind::FvSift: return "fv_sift";
  }
  throw std::invalid_argument("unknown feature kind");
}

inline FeatureKind feature_kind_from_name(const std::string& s) {
  static const std::array<FeatureKind, 9> kinds = {
      FeatureKind::Raw,    FeatureKind::Sift,   FeatureKind::Lstat,
      FeatureKind::Fft2d,  FeatureKind::LogGabor, FeatureKind::BovRaw,
      FeatureKind::BovSift, FeatureKind::FvRaw,  FeatureKind::FvSift};
  for (FeatureKind k : kinds)
    if (s == feature_kind_name(k)) return k;
  throw std::invalid_argument("unknown feature kind: " + s);
}

struct FeatureVector {
  std::vector<double> values;
  FeatureKind kind = FeatureKind::Raw;
  int dim() const { return static_cast<int>(values.size()); }
};

/// Contracted dimensionality of the five handcrafted kinds on 100x100 patches.
inline int handcrafted_dim(FeatureKind k) {
  switch (k) {
    case FeatureKind::Raw: return 10000;
    case FeatureKind::Sift: return 128;
    case FeatureKind::Lstat: return 18;
    case FeatureKind::Fft2d: return 2500;
    case FeatureKind::LogGabor: return 1620;
    default: throw std::invalid_argument("not a handcrafted feature kind");
  }
}

// ---------------------------------------------------------------------------
// Raw pixels
// ---------------------------------------------------------------------------

/// Row-major rasterization of the normalized patch.
inline FeatureVector feat_raw(const NormalizedPatch& xp) {
  FeatureVector f;
  f.kind = FeatureKind::Raw;
  f.values.assign(xp.pixels.data(), xp.pixels.data() + xp.pixels.size());
  return f;
}

// ---------------------------------------------------------------------------
// SIFT (whole-image variant: no keypoints, no spatial weighting, no
// descriptor normalization)
// ---------------------------------------------------------------------------

/// Central-difference gradient magnitude/orientation histograms over a 4x4
/// grid of cells, 8 orientation bins of 45 degrees, magnitude-weighted.
/// Borders use symmetric padding (out-of-range neighbor clamps to the edge).
inline FeatureVector sift_descriptor(const ImageF& img) {
  const int rows = img.rows();
  const int cols = img.cols();
  if (rows < 4 || cols < 4)
    throw std::invalid_argument("sift_descriptor: image must be at least 4x4");

  FeatureVector f;
  f.kind = FeatureKind::Sift;
  f.values.assign(128, 0.0);
  constexpr double kTwoPi = 2.0 * M_PI;
  for (int r = 0; r < rows; ++r) {
    const int r_up = std::min(r + 1, rows - 1);
    const int r_dn = std::max(r - 1, 0);
    const int cell_r = std::min(3, (r * 4) / rows);
    for (int c = 0; c < cols; ++c) {
      const int c_up = std::min(c + 1, cols - 1);
      const int c_dn = std::max(c - 1, 0);
      const double d_row = img(r_up, c) - img(r_dn, c);
      const double d_col = img(r, c_up) - img(r, c_dn);
      const double mag = std::sqrt(d_row * d_row + d_col * d_col);
      if (mag == 0.0) continue;
      double theta = std::atan2(d_col, d_row);
      if (theta < 0.0) theta += kTwoPi;
      int bin = static_cast<int>(theta / (kTwoPi / 8.0));
      bin = std::min(bin, 7);
      const int cell_c = std::min(3, (c * 4) / cols);
      f.values[(cell_r * 4 + cell_c) * 8 + bin] += mag;
    }
  }
  return f;
}

inline FeatureVector feat_sift(const NormalizedPatch& xp) {
  return sift_descriptor(xp.pixels);
}

// ---------------------------------------------------------------------------
// Local statistics
// ---------------------------------------------------------------------------

/// Ceil-split 3-way partition boundaries {0, 34, 67, 100} for n = 100.
inline std::array<int, 4> lstat_region_edges(int n) {
  return {0, (n + 2) / 3, (2 * n + 2) / 3, n};
}

/// Mean and population variance per region of a 3x3 non-overlapping grid,
/// regions row-major, ordered (mean_1, var_1, ..., mean_9, var_9).
inline FeatureVector feat_lstat(const NormalizedPatch& xp) {
  const auto row_edges = lstat_region_edges(xp.pixels.rows());
  const auto col_edges = lstat_region_edges(xp.pixels.cols());
  FeatureVector f;
  f.kind = FeatureKind::Lstat;
  f.values.reserve(18);
  for (int gr = 0; gr < 3; ++gr) {
    for (int gc = 0; gc < 3; ++gc) {
      CompensatedSum sum, sumsq;
      std::size_t n = 0;
      for (int r = row_edges[gr]; r < row_edges[gr + 1]; ++r) {
        for (int c = col_edges[gc]; c < col_edges[gc + 1]; ++c) {
          const double v = xp.pixels(r, c);
          sum.add(v);
          sumsq.add(v * v);
          ++n;
        }
      }
      const double mean = sum.value() / static_cast<double>(n);
      const double var = std::max(0.0, sumsq.value() / static_cast<double>(n) - mean * mean);
      f.values.push_back(mean);
      f.values.push_back(var);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// 2-D FFT quadrant
// ---------------------------------------------------------------------------

inline std::vector<double> hamming_window(int n) {
  std::vector<double> w(n, 1.0);
  if (n > 1)
    for (int i = 0; i < n; ++i)
      w[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (n - 1));
  return w;
}

/// |FFT2D(Re(H o X))| restricted to the non-negative-frequency quadrant
/// (rows 0..R/2-1, cols 0..C/2-1 of the unshifted transform), row-major.
/// The Hamming window is the outer product of two 1-D windows;
/// `apply_window = false` is the windowless unit-test mode.
inline FeatureVector feat_fft2d(const ComplexPatch& x, bool apply_window = true) {
  const int rows = x.pixels.rows();
  const int cols = x.pixels.cols();
  const std::vector<double> wr = hamming_window(rows);
  const std::vector<double> wc = hamming_window(cols);

  ImageCd input(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double h = apply_window ? wr[r] * wc[c] : 1.0;
      input(r, c) = std::complex<double>(h * static_cast<double>(x.pixels(r, c).real()), 0.0);
    }

  const ImageCd spectrum = fft2d(input);
  FeatureVector f;
  f.kind = FeatureKind::Fft2d;
  f.values.reserve(static_cast<std::size_t>(rows / 2) * (cols / 2));
  for (int r = 0; r < rows / 2; ++r)
    for (int c = 0; c < cols / 2; ++c)
      f.values.push_back(std::abs(spectrum(r, c)));
  return f;
}

// ---------------------------------------------------------------------------
// Log-Gabor statistics
// ---------------------------------------------------------------------------

struct LogGaborParams {
  int size = kPatchSize;
  int scales = 6;
  int orientations = 6;
  double min_wavelength_px = 3.0;  // wavelength at scale 0; doubles per scale
  double wavelength_mult = 2.0;
  double sigma_on_f = 0.65;          // radial log-bandwidth term
  double dtheta_on_sigma = 1.2;      // angular spread = (pi/orientations)/this
};

struct LogGaborBank {
  LogGaborParams params;
  std::vector<ImageF> filters;  // scale-major then orientation

  int count() const { return static_cast<int>(filters.size()); }
};

/// Frequency-domain log-Gabor bank. Radial part is Gaussian in log-frequency
/// around f0 = 1/wavelength; angular part Gaussian in orientation distance.
/// Every filter has exactly zero DC gain.
inline LogGaborBank build_log_gabor_bank(const LogGaborParams& params = {}) {
  LogGaborBank bank;
  bank.params = params;
  const int n = params.size;
  const double log_sigma = std::log(params.sigma_on_f);
  const double theta_sigma = (M_PI / params.orientations) / params.dtheta_on_sigma;

  auto freq_of = [n](int idx) {
    return (idx <= (n - 1) / 2 ? idx : idx - n) / static_cast<double>(n);
  };

  for (int s = 0; s < params.scales; ++s) {
    const double wavelength = params.min_wavelength_px * std::pow(params.wavelength_mult, s);
    const double f0 = 1.0 / wavelength;
    for (int o = 0; o < params.orientations; ++o) {
      const double theta0 = o * M_PI / params.orientations;
      ImageF filt(n, n, 0.0);
      for (int u = 0; u < n; ++u) {
        const double fy = freq_of(u);
        for (int v = 0; v < n; ++v) {
          const double fx = freq_of(v);
          const double f = std::sqrt(fx * fx + fy * fy);
          if (f == 0.0) continue;  // DC gain pinned to zero
          const double lr = std::log(f / f0);
          const double radial = std::exp(-(lr * lr) / (2.0 * log_sigma * log_sigma));
          const double phi = std::atan2(fy, fx);
          const double dt = std::atan2(std::sin(phi - theta0), std::cos(phi - theta0));
          const double angular = std::exp(-(dt * dt) / (2.0 * theta_sigma * theta_sigma));
          filt(u, v) = radial * angular;
        }
      }
      bank.filters.push_back(std::move(filt));
    }
  }
  return bank;
}

namespace detail {

/// {mean, population variance, kurtosis, skewness, l2 norm} of a region.
/// Kurtosis is the standardized (non-excess) 4th moment; zero-variance
/// regions report kurtosis = skewness = 0.
inline void region_stats(const ImageF& img, int r0, int r1, int c0, int c1,
                         std::vector<double>& out) {
  CompensatedSum sum;
  std::size_t n = 0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) { sum.add(img(r, c)); ++n; }
  const double mean = sum.value() / static_cast<double>(n);

  CompensatedSum m2s, m3s, m4s, normsq;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) {
      const double v = img(r, c);
      const double d = v - mean;
      const double d2 = d * d;
      m2s.add(d2);
      m3s.add(d2 * d);
      m4s.add(d2 * d2);
      normsq.add(v * v);
    }
  const double var = std::max(0.0, m2s.value() / static_cast<double>(n));
  double kurt = 0.0, skew = 0.0;
  if (var > 0.0) {
    const double m3 = m3s.value() / static_cast<double>(n);
    const double m4 = m4s.value() / static_cast<double>(n);
    skew = m3 / std::pow(var, 1.5);
    kurt = m4 / (var * var);
  }
  out.push_back(mean);
  out.push_back(var);
  out.push_back(kurt);
  out.push_back(skew);
  out.push_back(std::sqrt(std::max(0.0, normsq.value())));
}

}  // namespace detail

/// Filter the normalized patch with every bank filter (frequency-domain
/// product, inverse FFT, magnitude) and take the five region statistics over
/// a 3x3 grid. Ordering: filters scale-major then orientation; regions
/// row-major within a filter; stats (mean, var, kurt, skew, norm) per region.
inline FeatureVector feat_loggabor(const NormalizedPatch& xp, const LogGaborBank& bank) {
  const int rows = xp.pixels.rows();
  const int cols = xp.pixels.cols();
  if (rows != bank.params.size || cols != bank.params.size)
    throw std::invalid_argument("feat_loggabor: patch size does not match bank");

  ImageCd input(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) input(r, c) = std::complex<double>(xp.pixels(r, c), 0.0);
  const ImageCd spectrum = fft2d(input);

  const auto row_edges = lstat_region_edges(rows);
  const auto col_edges = lstat_region_edges(cols);

  FeatureVector f;
  f.kind = FeatureKind::LogGabor;
  f.values.reserve(static_cast<std::size_t>(bank.count()) * 45);
  std::vector<std::vector<double>> per_filter(bank.filters.size());
  parallel_for(bank.filters.size(), [&](std::size_t i) {
    const ImageF& filt = bank.filters[i];
    ImageCd prod(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) prod(r, c) = spectrum(r, c) * filt(r, c);
    const ImageCd resp = ifft2d(prod);
    ImageF mag(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) mag(r, c) = std::abs(resp(r, c));
    auto& vals = per_filter[i];
    vals.reserve(45);
    for (int gr = 0; gr < 3; ++gr)
      for (int gc = 0; gc < 3; ++gc)
        detail::region_stats(mag, row_edges[gr], row_edges[gr + 1], col_edges[gc],
                             col_edges[gc + 1], vals);
  });
  for (const auto& vals : per_filter)
    f.values.insert(f.values.end(), vals.begin(), vals.end());
  return f;
}

}  // namespace flgpr
