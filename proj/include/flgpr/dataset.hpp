#pragma once

// Synthetic multi-polarization lane generation and the on-disk lane format.
//
// A lane is a strip of ground imaged as a sequence of overlapping frames per
// polarization channel. Targets and clutter are planted as anisotropic
// Gaussian amplitude bumps with per-channel amplitude and phase on top of
// complex circular-Gaussian speckle. Frame geometry: each frame covers
// frame_extent_m of down-track ground starting frame_near_m ahead of the
// sensor, frames are spaced frame_spacing_m apart, and lead-in frames with
// negative start keep every ground point covered by multiple looks.
//
// Lane file format (little-endian, version 1):
//   magic "FLGL" | u32 version
//   spec block (see write_lane)
//   u32 n_channels, then per channel: u8 channel, u32 n_frames, frames
//   frame: u32 rows, u32 cols, f64 resolution_m, f64 origin_e, f64 origin_n,
//          f64 standoff_m, f64 sensor_northing, rows*cols * (f32 re, f32 im)
// Ground truth lives in a CSV sidecar at <path>.truth.csv with columns
// target_id, easting_m, northing_m, metal_class.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "flgpr/core.hpp"
#include "flgpr/serialize.hpp"

namespace flgpr {

struct SnrRangeDb {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const SnrRangeDb&, const SnrRangeDb&) = default;
};

struct LaneSpec {
  std::string lane_id;
  double length_m = 100.0;  // down-track
  double width_m = 12.0;    // cross-track
  int n_targets = 0;
  // Per-channel target amplitude ranges, dB relative to the per-component
  // speckle sigma. Defaults are disjoint so HH > VV > VH holds per target.
  std::array<SnrRangeDb, kNumChannels> target_snr_db{
      SnrRangeDb{18.0, 24.0}, SnrRangeDb{13.0, 17.0}, SnrRangeDb{7.0, 11.0}};
  double clutter_density = 0.003;  // objects per m^2
  double frame_spacing_m = 2.0;
  std::uint64_t seed = 0;

  // Generator knobs (config-exposed; the source papers do not pin these).
  std::array<double, 2> target_extent_range_m{0.2, 1.0};  // 2-sigma footprint
  SnrRangeDb clutter_snr_db{4.0, 10.0};
  double speckle_sigma = 1.0;
  double frame_extent_m = 6.0;
  double frame_near_m = 2.0;
  double resolution_m = 0.03;
  double standoff_m = 5.0;
  double target_margin_m = 2.0;
  double min_target_separation_m = 3.0;
  double metal_fraction = 0.37;
  UtmPoint origin;  // UTM of the lane's (easting, northing) corner

  friend bool operator==(const LaneSpec&, const LaneSpec&) = default;
};

enum class MetalClass : std::uint8_t { Metal = 0, LowMetal = 1 };

inline const char* metal_class_name(MetalClass m) {
  return m == MetalClass::Metal ? "metal" : "low-metal";
}

inline MetalClass metal_class_from_name(const std::string& s) {
  if (s == "metal") return MetalClass::Metal;
  if (s == "low-metal") return MetalClass::LowMetal;
  throw FormatError("unknown metal class: " + s);
}

struct GroundTruthTarget {
  std::string target_id;
  UtmPoint utm;
  MetalClass metal_class = MetalClass::Metal;
  friend bool operator==(const GroundTruthTarget&, const GroundTruthTarget&) = default;
};

struct Frame {
  Channel channel = Channel::HH;
  ImageCf pixels;  // row = down-track (northing), col = cross-track (easting)
  double resolution_m = 0.03;
  UtmPoint origin_utm;       // UTM of pixel (0,0) center
  double standoff_m = 5.0;   // nominal sensor-to-patch down-track distance
  double sensor_northing = 0.0;

  UtmPoint utm_of(int row, int col) const {
    return {origin_utm.easting + col * resolution_m,
            origin_utm.northing + row * resolution_m};
  }
  double row_of(double northing) const {
    return (northing - origin_utm.northing) / resolution_m;
  }
  double col_of(double easting) const {
    return (easting - origin_utm.easting) / resolution_m;
  }
  /// Down-track distance from this frame's sensor position to a ground point.
  double downtrack_distance(double northing) const { return northing - sensor_northing; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Lane {
  LaneSpec spec;
  std::array<std::vector<Frame>, kNumChannels> frames;  // indexed by Channel
  std::vector<GroundTruthTarget> truth;

  const std::vector<Frame>& frames_of(Channel c) const {
    return frames[static_cast<int>(c)];
  }
  std::vector<Frame>& frames_of(Channel c) { return frames[static_cast<int>(c)]; }

  int width_px() const { return static_cast<int>(std::llround(spec.width_m / spec.resolution_m)); }
  int length_px() const { return static_cast<int>(std::llround(spec.length_m / spec.resolution_m)); }
  double realized_width_m() const { return width_px() * spec.resolution_m; }
  double realized_length_m() const { return length_px() * spec.resolution_m; }
  double area_m2() const { return realized_width_m() * realized_length_m(); }

  bool in_bounds(const UtmPoint& p) const {
    const double e = p.easting - spec.origin.easting;
    const double n = p.northing - spec.origin.northing;
    return e >= 0.0 && e < realized_width_m() && n >= 0.0 && n < realized_length_m();
  }

  friend bool operator==(const Lane&, const Lane&) = default;
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

struct Scatterer {
  double easting = 0.0;   // lane-local
  double northing = 0.0;
  double sigma_e = 0.1;
  double sigma_n = 0.1;
  double angle = 0.0;
  std::array<double, kNumChannels> amplitude{};
  std::array<double, kNumChannels> phase{};
};

inline constexpr std::uint64_t kTagTargets = 0x7a26;
inline constexpr std::uint64_t kTagClutter = 0xc1d7;
inline constexpr std::uint64_t kTagSpeckle = 0x5bec;

inline double snr_db_to_amplitude(double snr_db, double sigma) {
  return sigma * std::pow(10.0, snr_db / 20.0);
}

inline void add_scatterers(Frame& frame, const std::vector<Scatterer>& scatterers,
                           const UtmPoint& lane_origin) {
  const int ch = static_cast<int>(frame.channel);
  const double res = frame.resolution_m;
  for (const auto& s : scatterers) {
    const double amp = s.amplitude[ch];
    if (amp <= 0.0) continue;
    const std::complex<float> rot(static_cast<float>(std::cos(s.phase[ch])),
                                  static_cast<float>(std::sin(s.phase[ch])));
    const double reach = 3.0 * std::max(s.sigma_e, s.sigma_n);
    const double se = lane_origin.easting + s.easting;
    const double sn = lane_origin.northing + s.northing;
    const int r0 = std::max(0, static_cast<int>(std::floor(frame.row_of(sn - reach))));
    const int r1 = std::min(frame.pixels.rows() - 1,
                            static_cast<int>(std::ceil(frame.row_of(sn + reach))));
    const int c0 = std::max(0, static_cast<int>(std::floor(frame.col_of(se - reach))));
    const int c1 = std::min(frame.pixels.cols() - 1,
                            static_cast<int>(std::ceil(frame.col_of(se + reach))));
    const double ca = std::cos(s.angle), sa = std::sin(s.angle);
    for (int r = r0; r <= r1; ++r) {
      const double dn = frame.origin_utm.northing + r * res - sn;
      for (int c = c0; c <= c1; ++c) {
        const double de = frame.origin_utm.easting + c * res - se;
        const double xr = ca * de + sa * dn;
        const double yr = -sa * de + ca * dn;
        const double q = (xr / s.sigma_e) * (xr / s.sigma_e) +
                         (yr / s.sigma_n) * (yr / s.sigma_n);
        if (q > 18.0) continue;  // below exp(-9), invisible against speckle
        const float v = static_cast<float>(amp * std::exp(-0.5 * q));
        frame.pixels(r, c) += rot * v;
      }
    }
  }
}

}  // namespace detail

/// Builds a lane from a spec. Pure function of (spec, seed): identical inputs
/// produce byte-identical lanes.
inline Lane generate_lane(const LaneSpec& spec) {
  if (!(spec.length_m > 0.0) || !(spec.width_m > 0.0))
    throw std::invalid_argument("lane dimensions must be positive");
  if (spec.n_targets < 0) throw std::invalid_argument("n_targets must be >= 0");
  if (!(spec.frame_spacing_m > 0.0))
    throw std::invalid_argument("frame_spacing_m must be positive");
  if (!(spec.resolution_m > 0.0))
    throw std::invalid_argument("resolution_m must be positive");

  Lane lane;
  lane.spec = spec;
  const double width = lane.realized_width_m();
  const double length = lane.realized_length_m();

  // Plant targets.
  std::vector<detail::Scatterer> scatterers;
  Rng target_rng(mix_seed(spec.seed, detail::kTagTargets));
  double margin = std::min({spec.target_margin_m, width / 2.0 - spec.resolution_m,
                            length / 2.0 - spec.resolution_m});
  margin = std::max(margin, 0.0);
  for (int i = 0; i < spec.n_targets; ++i) {
    detail::Scatterer s;
    for (int attempt = 0; attempt < 64; ++attempt) {
      s.easting = target_rng.uniform(margin, width - margin);
      s.northing = target_rng.uniform(margin, length - margin);
      bool ok = true;
      for (const auto& other : scatterers) {
        const double d = std::hypot(other.easting - s.easting, other.northing - s.northing);
        if (d < spec.min_target_separation_m) { ok = false; break; }
      }
      if (ok) break;
    }
    s.sigma_e = target_rng.uniform(spec.target_extent_range_m[0], spec.target_extent_range_m[1]) / 2.0;
    s.sigma_n = target_rng.uniform(spec.target_extent_range_m[0], spec.target_extent_range_m[1]) / 2.0;
    s.angle = target_rng.uniform(0.0, M_PI);
    for (int ch = 0; ch < kNumChannels; ++ch) {
      const auto& range = spec.target_snr_db[ch];
      s.amplitude[ch] = detail::snr_db_to_amplitude(target_rng.uniform(range.lo, range.hi),
                                                    spec.speckle_sigma);
      s.phase[ch] = target_rng.uniform(0.0, 2.0 * M_PI);
    }
    const bool metal = target_rng.uniform() < spec.metal_fraction;

    GroundTruthTarget t;
    t.target_id = spec.lane_id + "_t" + std::to_string(i);
    t.utm = {spec.origin.easting + s.easting, spec.origin.northing + s.northing};
    t.metal_class = metal ? MetalClass::Metal : MetalClass::LowMetal;
    lane.truth.push_back(std::move(t));
    scatterers.push_back(s);
  }
  const std::size_t first_clutter = scatterers.size();

  // Clutter: same blob family, weaker and identical across channels.
  Rng clutter_rng(mix_seed(spec.seed, detail::kTagClutter));
  const int n_clutter = static_cast<int>(std::llround(spec.clutter_density * lane.area_m2()));
  for (int i = 0; i < n_clutter; ++i) {
    detail::Scatterer s;
    s.easting = clutter_rng.uniform(0.0, width);
    s.northing = clutter_rng.uniform(0.0, length);
    s.sigma_e = clutter_rng.uniform(spec.target_extent_range_m[0], spec.target_extent_range_m[1]) / 2.0;
    s.sigma_n = clutter_rng.uniform(spec.target_extent_range_m[0], spec.target_extent_range_m[1]) / 2.0;
    s.angle = clutter_rng.uniform(0.0, M_PI);
    const double amp = detail::snr_db_to_amplitude(
        clutter_rng.uniform(spec.clutter_snr_db.lo, spec.clutter_snr_db.hi), spec.speckle_sigma);
    for (int ch = 0; ch < kNumChannels; ++ch) {
      s.amplitude[ch] = amp;
      s.phase[ch] = clutter_rng.uniform(0.0, 2.0 * M_PI);
    }
    scatterers.push_back(s);
  }
  (void)first_clutter;

  // Frames. Lead-in frames (negative start) give full multi-look coverage of
  // the lane head; the last frame covers the tail.
  const int frame_rows = static_cast<int>(std::llround(spec.frame_extent_m / spec.resolution_m));
  const int frame_cols = lane.width_px();
  const int looks = static_cast<int>(std::ceil(spec.frame_extent_m / spec.frame_spacing_m));
  const int k_lo = -(looks - 1);
  const int k_hi = static_cast<int>(std::ceil(length / spec.frame_spacing_m)) - 1;
  for (int ch = 0; ch < kNumChannels; ++ch) {
    auto& frames = lane.frames[ch];
    for (int k = k_lo; k <= k_hi; ++k) {
      Frame f;
      f.channel = static_cast<Channel>(ch);
      f.resolution_m = spec.resolution_m;
      f.origin_utm = {spec.origin.easting, spec.origin.northing + k * spec.frame_spacing_m};
      f.standoff_m = spec.standoff_m;
      f.sensor_northing = f.origin_utm.northing - spec.frame_near_m;
      f.pixels = ImageCf(frame_rows, frame_cols);

      Rng speckle_rng(mix_seed(spec.seed, detail::kTagSpeckle,
                               static_cast<std::uint64_t>(ch) * 1000003ULL +
                                   static_cast<std::uint64_t>(k - k_lo)));
      auto* px = f.pixels.data();
      const std::size_t n = f.pixels.size();
      for (std::size_t i = 0; i < n; ++i) {
        px[i] = std::complex<float>(
            static_cast<float>(speckle_rng.normal(0.0, spec.speckle_sigma)),
            static_cast<float>(speckle_rng.normal(0.0, spec.speckle_sigma)));
      }
      detail::add_scatterers(f, scatterers, spec.origin);
      frames.push_back(std::move(f));
    }
  }
  return lane;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline std::string lane_truth_path(const std::string& lane_path) {
  return lane_path + ".truth.csv";
}

inline void write_lane(const Lane& lane, const std::string& path) {
  BinaryWriter w(path);
  w.bytes("FLGL", 4);
  w.u32(1);  // version
  const LaneSpec& s = lane.spec;
  w.str(s.lane_id);
  w.f64(s.length_m);
  w.f64(s.width_m);
  w.u32(static_cast<std::uint32_t>(s.n_targets));
  for (const auto& r : s.target_snr_db) { w.f64(r.lo); w.f64(r.hi); }
  w.f64(s.clutter_density);
  w.f64(s.frame_spacing_m);
  w.u64(s.seed);
  w.f64(s.target_extent_range_m[0]);
  w.f64(s.target_extent_range_m[1]);
  w.f64(s.clutter_snr_db.lo);
  w.f64(s.clutter_snr_db.hi);
  w.f64(s.speckle_sigma);
  w.f64(s.frame_extent_m);
  w.f64(s.frame_near_m);
  w.f64(s.resolution_m);
  w.f64(s.standoff_m);
  w.f64(s.target_margin_m);
  w.f64(s.min_target_separation_m);
  w.f64(s.metal_fraction);
  w.f64(s.origin.easting);
  w.f64(s.origin.northing);

  w.u32(kNumChannels);
  for (int ch = 0; ch < kNumChannels; ++ch) {
    const auto& frames = lane.frames[ch];
    w.u8(static_cast<std::uint8_t>(ch));
    w.u32(static_cast<std::uint32_t>(frames.size()));
    for (const Frame& f : frames) {
      w.u32(static_cast<std::uint32_t>(f.pixels.rows()));
      w.u32(static_cast<std::uint32_t>(f.pixels.cols()));
      w.f64(f.resolution_m);
      w.f64(f.origin_utm.easting);
      w.f64(f.origin_utm.northing);
      w.f64(f.standoff_m);
      w.f64(f.sensor_northing);
      w.bytes(f.pixels.data(), f.pixels.size() * sizeof(std::complex<float>));
    }
  }
  w.close();

  CsvTable truth;
  truth.header = {"target_id", "easting_m", "northing_m", "metal_class"};
  for (const auto& t : lane.truth) {
    truth.rows.push_back({t.target_id, format_double(t.utm.easting),
                          format_double(t.utm.northing), metal_class_name(t.metal_class)});
  }
  write_csv(lane_truth_path(path), truth);
}

inline Lane read_lane(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic("FLGL");
  const std::uint32_t version = r.u32();
  if (version != 1) throw FormatError("unsupported lane version in " + path);

  Lane lane;
  LaneSpec& s = lane.spec;
  s.lane_id = r.str();
  s.length_m = r.f64();
  s.width_m = r.f64();
  s.n_targets = static_cast<int>(r.u32());
  for (auto& range : s.target_snr_db) { range.lo = r.f64(); range.hi = r.f64(); }
  s.clutter_density = r.f64();
  s.frame_spacing_m = r.f64();
  s.seed = r.u64();
  s.target_extent_range_m[0] = r.f64();
  s.target_extent_range_m[1] = r.f64();
  s.clutter_snr_db.lo = r.f64();
  s.clutter_snr_db.hi = r.f64();
  s.speckle_sigma = r.f64();
  s.frame_extent_m = r.f64();
  s.frame_near_m = r.f64();
  s.resolution_m = r.f64();
  s.standoff_m = r.f64();
  s.target_margin_m = r.f64();
  s.min_target_separation_m = r.f64();
  s.metal_fraction = r.f64();
  s.origin.easting = r.f64();
  s.origin.northing = r.f64();

  const std::uint32_t n_channels = r.u32();
  if (n_channels != kNumChannels) throw FormatError("unexpected channel count in " + path);
  for (std::uint32_t i = 0; i < n_channels; ++i) {
    const std::uint8_t ch = r.u8();
    if (ch >= kNumChannels) throw FormatError("bad channel id in " + path);
    const std::uint32_t n_frames = r.u32();
    auto& frames = lane.frames[ch];
    frames.reserve(n_frames);
    for (std::uint32_t k = 0; k < n_frames; ++k) {
      Frame f;
      f.channel = static_cast<Channel>(ch);
      const std::uint32_t rows = r.u32();
      const std::uint32_t cols = r.u32();
      if (rows > (1u << 20) || cols > (1u << 20))
        throw FormatError("unreasonable frame dims in " + path);
      f.resolution_m = r.f64();
      f.origin_utm.easting = r.f64();
      f.origin_utm.northing = r.f64();
      f.standoff_m = r.f64();
      f.sensor_northing = r.f64();
      f.pixels = ImageCf(static_cast<int>(rows), static_cast<int>(cols));
      r.bytes(f.pixels.data(), f.pixels.size() * sizeof(std::complex<float>));
      frames.push_back(std::move(f));
    }
  }

  const CsvTable truth = read_csv(lane_truth_path(path));
  for (const auto& row : truth.rows) {
    if (row.size() != 4) throw FormatError("bad truth row in " + lane_truth_path(path));
    GroundTruthTarget t;
    t.target_id = row[0];
    t.utm.easting = std::stod(row[1]);
    t.utm.northing = std::stod(row[2]);
    t.metal_class = metal_class_from_name(row[3]);
    lane.truth.push_back(std::move(t));
  }
  return lane;
}

}  // namespace flgpr
