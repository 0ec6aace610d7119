#pragma once

// RX anomaly prescreening and DP-means alarm clustering.
//
// The RX statistic at a pixel is lambda = (mu_t - mu_b)^2 / var_b, where the
// foreground window (fore x fore) is centered at the pixel and the background
// ring is the back x back window minus the foreground region. Alarm
// declarations are strict 8-neighbor local maxima of the confidence image,
// clustered in UTM with DP-means at a fixed radius.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "flgpr/core.hpp"
#include "flgpr/dataset.hpp"

namespace flgpr {

struct ConfidenceImage {
  ImageF values;
  double resolution_m = 0.03;
  UtmPoint origin_utm;

  UtmPoint utm_of(int row, int col) const {
    return {origin_utm.easting + col * resolution_m,
            origin_utm.northing + row * resolution_m};
  }
};

enum class AlarmSource : std::uint8_t { Prescreener = 0, Classifier = 1, Fusion = 2 };

inline const char* alarm_source_name(AlarmSource s) {
  switch (s) {
    case AlarmSource::Prescreener: return "prescreener";
    case AlarmSource::Classifier: return "classifier";
    case AlarmSource::Fusion: return "fusion";
  }
  throw std::invalid_argument("unknown alarm source");
}

inline AlarmSource alarm_source_from_name(const std::string& s) {
  if (s == "prescreener") return AlarmSource::Prescreener;
  if (s == "classifier") return AlarmSource::Classifier;
  if (s == "fusion") return AlarmSource::Fusion;
  throw FormatError("unknown alarm source: " + s);
}

struct Alarm {
  UtmPoint utm;
  double confidence = 0.0;
  AlarmSource source = AlarmSource::Prescreener;
  int cluster_members = 1;
};

namespace detail {

/// Integral image with two-sum compensated (double-double) accumulation.
/// Window sums stay accurate to ~1 ulp of the window total, which the RX
/// affine-invariance contract depends on.
class IntegralImage {
 public:
  IntegralImage(const ImageF& img, bool squared) : rows_(img.rows()), cols_(img.cols()) {
    table_.assign(static_cast<std::size_t>(rows_ + 1) * (cols_ + 1), DD{});
    for (int r = 0; r < rows_; ++r) {
      DD row_sum{};
      for (int c = 0; c < cols_; ++c) {
        const double v = img(r, c);
        row_sum = dd_add(row_sum, squared ? v * v : v);
        at(r + 1, c + 1) = dd_add(at(r, c + 1), row_sum);
      }
    }
  }

  /// Sum over rows [r0, r1) x cols [c0, c1).
  double window_sum(int r0, int r1, int c0, int c1) const {
    const DD s = dd_add(dd_sub(dd_sub(at(r1, c1), at(r0, c1)), at(r1, c0)), at(r0, c0));
    return dd_value(s);
  }

 private:
  DD& at(int r, int c) { return table_[static_cast<std::size_t>(r) * (cols_ + 1) + c]; }
  const DD& at(int r, int c) const {
    return table_[static_cast<std::size_t>(r) * (cols_ + 1) + c];
  }
  int rows_, cols_;
  std::vector<DD> table_;
};

}  // namespace detail

/// RX detector over a real magnitude image. Border pixels whose background
/// window does not fit get lambda = 0, as do pixels with zero background
/// variance.
inline ImageF rx_confidence_image(const ImageF& magnitude, int fore = 40, int back = 80) {
  if (fore <= 0 || back <= fore)
    throw std::invalid_argument("rx_confidence: need 0 < fore < back");
  if (magnitude.rows() < back || magnitude.cols() < back)
    throw std::invalid_argument("rx_confidence: frame smaller than background window");

  const detail::IntegralImage sum1(magnitude, false);
  const detail::IntegralImage sum2(magnitude, true);

  const int rows = magnitude.rows();
  const int cols = magnitude.cols();
  const int f_lo = fore / 2, f_hi = fore - f_lo;
  const int b_lo = back / 2, b_hi = back - b_lo;
  const double n_fore = static_cast<double>(fore) * fore;
  const double n_back = static_cast<double>(back) * back - n_fore;

  ImageF out(rows, cols, 0.0);
  parallel_for(static_cast<std::size_t>(rows), [&](std::size_t ri) {
    const int r = static_cast<int>(ri);
    if (r - b_lo < 0 || r + b_hi > rows) return;
    for (int c = 0; c < cols; ++c) {
      if (c - b_lo < 0 || c + b_hi > cols) continue;
      const double s_fore = sum1.window_sum(r - f_lo, r + f_hi, c - f_lo, c + f_hi);
      const double s_back_all = sum1.window_sum(r - b_lo, r + b_hi, c - b_lo, c + b_hi);
      const double q_fore = sum2.window_sum(r - f_lo, r + f_hi, c - f_lo, c + f_hi);
      const double q_back_all = sum2.window_sum(r - b_lo, r + b_hi, c - b_lo, c + b_hi);
      const double mu_t = s_fore / n_fore;
      const double s_back = s_back_all - s_fore;
      const double q_back = q_back_all - q_fore;
      const double mu_b = s_back / n_back;
      const double var_b = q_back / n_back - mu_b * mu_b;
      if (!(var_b > 0.0)) continue;  // flat background carries no anomaly
      const double d = mu_t - mu_b;
      out(r, c) = d * d / var_b;
    }
  });
  return out;
}

inline ImageF magnitude_image(const Frame& frame) {
  ImageF mag(frame.pixels.rows(), frame.pixels.cols());
  const auto* px = frame.pixels.data();
  auto* out = mag.data();
  for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
    const double re = px[i].real();
    const double im = px[i].imag();
    out[i] = std::sqrt(re * re + im * im);
  }
  return mag;
}

inline ConfidenceImage rx_confidence(const Frame& frame, int fore = 40, int back = 80) {
  ConfidenceImage conf;
  conf.values = rx_confidence_image(magnitude_image(frame), fore, back);
  conf.resolution_m = frame.resolution_m;
  conf.origin_utm = frame.origin_utm;
  return conf;
}

/// Pixels strictly greater than all 8 neighbors with lambda >= min_confidence.
/// Image borders are excluded; plateaus produce no alarm.
inline std::vector<Alarm> local_maxima(const ConfidenceImage& conf, double min_confidence) {
  std::vector<Alarm> alarms;
  const ImageF& v = conf.values;
  for (int r = 1; r + 1 < v.rows(); ++r) {
    for (int c = 1; c + 1 < v.cols(); ++c) {
      const double x = v(r, c);
      if (!(x >= min_confidence)) continue;
      bool is_max = true;
      for (int dr = -1; dr <= 1 && is_max; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (!(x > v(r + dr, c + dc))) { is_max = false; break; }
        }
      if (!is_max) continue;
      Alarm a;
      a.utm = conf.utm_of(r, c);
      a.confidence = x;
      a.source = AlarmSource::Prescreener;
      alarms.push_back(a);
    }
  }
  return alarms;
}

namespace detail {

/// Uniform grid over cluster centers with cell size = radius; any center
/// within `radius` of a query point lies in the 3x3 cell neighborhood, so
/// nearest-within-radius lookups are exact.
class CenterGrid {
 public:
  explicit CenterGrid(double cell) : cell_(cell) {}

  void insert(int id, const UtmPoint& p) {
    cells_[key_of(p)].push_back(id);
  }

  /// Nearest center within `radius`, -1 if none. Ties go to the lower id so
  /// lookups are order-independent.
  int nearest_within(const UtmPoint& p, double radius,
                     const std::vector<UtmPoint>& centers) const {
    const std::int64_t ce = cell_index(p.easting);
    const std::int64_t cn = cell_index(p.northing);
    int best = -1;
    double best_d = radius;
    for (std::int64_t de = -1; de <= 1; ++de) {
      for (std::int64_t dn = -1; dn <= 1; ++dn) {
        const auto it = cells_.find(pack(ce + de, cn + dn));
        if (it == cells_.end()) continue;
        for (int id : it->second) {
          const double d = distance(p, centers[id]);
          if (d < best_d || (d == best_d && best >= 0 && id < best)) {
            best_d = d;
            best = id;
          } else if (best < 0 && d <= radius) {
            best_d = d;
            best = id;
          }
        }
      }
    }
    return best;
  }

 private:
  std::int64_t cell_index(double v) const {
    return static_cast<std::int64_t>(std::floor(v / cell_));
  }
  std::uint64_t key_of(const UtmPoint& p) const {
    return pack(cell_index(p.easting), cell_index(p.northing));
  }
  static std::uint64_t pack(std::int64_t e, std::int64_t n) {
    return (static_cast<std::uint64_t>(e) << 32) ^
           (static_cast<std::uint64_t>(n) & 0xffffffffULL);
  }
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace detail

/// DP-means spatial clustering: scan points in a fixed order, assigning each
/// to the nearest center within `radius` or opening a new cluster, then move
/// centers to member means; repeat to convergence. One output alarm per
/// cluster at the centroid, confidence = l2-norm of member confidences.
///
/// Scan order is descending confidence with UTM lexicographic tie-break, so
/// the result is deterministic. `objective_trace`, when given, records
/// sum of squared member-center distances + radius^2 * n_clusters after each
/// iteration (non-increasing by construction).
inline std::vector<Alarm> dp_means_cluster(const std::vector<Alarm>& alarms, double radius,
                                           std::vector<double>* objective_trace = nullptr,
                                           int max_iterations = 100) {
  if (!(radius > 0.0)) throw std::invalid_argument("dp_means_cluster: radius must be positive");
  if (alarms.empty()) return {};

  std::vector<int> order(alarms.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (alarms[a].confidence != alarms[b].confidence)
      return alarms[a].confidence > alarms[b].confidence;
    if (alarms[a].utm.easting != alarms[b].utm.easting)
      return alarms[a].utm.easting < alarms[b].utm.easting;
    return alarms[a].utm.northing < alarms[b].utm.northing;
  });

  std::vector<UtmPoint> centers;
  std::vector<int> assign(alarms.size(), -1);

  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    detail::CenterGrid grid(radius);
    for (std::size_t k = 0; k < centers.size(); ++k)
      grid.insert(static_cast<int>(k), centers[k]);
    for (int idx : order) {
      const Alarm& a = alarms[idx];
      int best = grid.nearest_within(a.utm, radius, centers);
      if (best < 0) {
        centers.push_back(a.utm);
        best = static_cast<int>(centers.size()) - 1;
        grid.insert(best, a.utm);
      }
      if (assign[idx] != best) { assign[idx] = best; changed = true; }
    }

    // Means update; drop empty clusters and remap.
    std::vector<double> se(centers.size(), 0.0), sn(centers.size(), 0.0);
    std::vector<int> count(centers.size(), 0);
    for (std::size_t i = 0; i < alarms.size(); ++i) {
      se[assign[i]] += alarms[i].utm.easting;
      sn[assign[i]] += alarms[i].utm.northing;
      ++count[assign[i]];
    }
    std::vector<int> remap(centers.size(), -1);
    std::vector<UtmPoint> new_centers;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (count[k] == 0) continue;
      remap[k] = static_cast<int>(new_centers.size());
      new_centers.push_back({se[k] / count[k], sn[k] / count[k]});
    }
    centers = std::move(new_centers);
    for (auto& a : assign) a = remap[a];

    if (objective_trace) {
      double obj = radius * radius * static_cast<double>(centers.size());
      for (std::size_t i = 0; i < alarms.size(); ++i) {
        const double d = distance(alarms[i].utm, centers[assign[i]]);
        obj += d * d;
      }
      objective_trace->push_back(obj);
    }
    if (!changed) break;
  }

  std::vector<Alarm> clustered(centers.size());
  for (std::size_t k = 0; k < centers.size(); ++k) {
    clustered[k].utm = centers[k];
    clustered[k].source = AlarmSource::Prescreener;
    clustered[k].cluster_members = 0;
    clustered[k].confidence = 0.0;
  }
  for (std::size_t i = 0; i < alarms.size(); ++i) {
    Alarm& c = clustered[assign[i]];
    c.cluster_members += 1;
    c.confidence += alarms[i].confidence * alarms[i].confidence;
  }
  for (auto& c : clustered) c.confidence = std::sqrt(c.confidence);
  return clustered;
}

struct PrescreenParams {
  int fore_px = 40;
  int back_px = 80;
  double min_confidence = 0.002;
  double cluster_radius_m = 1.0;
};

/// Full prescreener over a lane: RX + local maxima on every VV frame, pooled
/// in UTM, DP-means clustered, sorted by confidence descending.
inline std::vector<Alarm> prescreen_lane(const Lane& lane,
                                         const PrescreenParams& params = {}) {
  const auto& vv_frames = lane.frames_of(Channel::VV);
  if (vv_frames.empty()) throw std::invalid_argument("prescreen_lane: lane has no VV frames");

  std::vector<std::vector<Alarm>> per_frame(vv_frames.size());
  parallel_for(vv_frames.size(), [&](std::size_t i) {
    const ConfidenceImage conf =
        rx_confidence(vv_frames[i], params.fore_px, params.back_px);
    per_frame[i] = local_maxima(conf, params.min_confidence);
  });

  std::vector<Alarm> pooled;
  for (const auto& alarms : per_frame)
    for (const Alarm& a : alarms)
      if (lane.in_bounds(a.utm)) pooled.push_back(a);

  std::vector<Alarm> clustered = dp_means_cluster(pooled, params.cluster_radius_m);
  std::sort(clustered.begin(), clustered.end(), [](const Alarm& a, const Alarm& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.utm.easting != b.utm.easting) return a.utm.easting < b.utm.easting;
    return a.utm.northing < b.utm.northing;
  });
  return clustered;
}

// ---------------------------------------------------------------------------
// Alarm list CSV (easting_m, northing_m, confidence, source, cluster_members)
// ---------------------------------------------------------------------------

inline void write_alarms_csv(const std::vector<Alarm>& alarms, const std::string& path) {
  CsvTable t;
  t.header = {"easting_m", "northing_m", "confidence", "source", "cluster_members"};
  for (const Alarm& a : alarms) {
    t.rows.push_back({format_double(a.utm.easting), format_double(a.utm.northing),
                      format_double(a.confidence), alarm_source_name(a.source),
                      std::to_string(a.cluster_members)});
  }
  write_csv(path, t);
}

inline std::vector<Alarm> read_alarms_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  std::vector<Alarm> alarms;
  for (const auto& row : t.rows) {
    if (row.size() != 5) throw FormatError("bad alarm row in " + path);
    Alarm a;
    a.utm.easting = std::stod(row[0]);
    a.utm.northing = std::stod(row[1]);
    a.confidence = std::stod(row[2]);
    a.source = alarm_source_from_name(row[3]);
    a.cluster_members = std::stoi(row[4]);
    alarms.push_back(a);
  }
  return alarms;
}

}  // namespace flgpr
