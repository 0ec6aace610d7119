#pragma once

// Halo scoring, ROC construction, normalized partial AUC, vertical ROC
// averaging, and bootstrap evaluation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "flgpr/core.hpp"
#include "flgpr/dataset.hpp"
#include "flgpr/prescreen.hpp"

namespace flgpr {

inline constexpr double kDefaultHaloM = 1.0;
inline constexpr double kDefaultFarMax = 0.02;  // FA per m^2

struct ScoredAlarm {
  Alarm alarm;
  bool hit = false;
  int target_index = -1;  // index into the truth list; -1 for false alarms
};

/// Credits each alarm within `halo_m` of a truth location to the nearest
/// target (lower index on exact ties); everything else is a false alarm.
inline std::vector<ScoredAlarm> score_alarms(const std::vector<Alarm>& alarms,
                                             const std::vector<GroundTruthTarget>& truth,
                                             double halo_m = kDefaultHaloM) {
  std::vector<ScoredAlarm> scored;
  scored.reserve(alarms.size());
  for (const Alarm& a : alarms) {
    ScoredAlarm s;
    s.alarm = a;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < truth.size(); ++t) {
      const double d = distance(a.utm, truth[t].utm);
      if (d < best) { best = d; s.target_index = static_cast<int>(t); }
    }
    s.hit = s.target_index >= 0 && best <= halo_m;
    if (!s.hit) s.target_index = -1;
    scored.push_back(s);
  }
  return scored;
}

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (FAR per m^2, P_d), FAR ascending
  double lane_area_m2 = 0.0;
  int n_targets = 0;
};

/// Threshold sweep over the distinct alarm confidences, descending. A target
/// counts as detected at threshold tau if any alarm credited to it has
/// confidence >= tau.
inline RocCurve roc_curve(const std::vector<ScoredAlarm>& scored, int n_targets,
                          double area_m2) {
  if (!(area_m2 > 0.0)) throw std::invalid_argument("roc_curve: area must be positive");
  if (n_targets <= 0) throw std::invalid_argument("roc_curve: n_targets must be positive");

  std::vector<double> thresholds;
  thresholds.reserve(scored.size());
  std::vector<double> target_best(static_cast<std::size_t>(n_targets),
                                  -std::numeric_limits<double>::infinity());
  std::vector<double> fa_conf;
  for (const auto& s : scored) {
    thresholds.push_back(s.alarm.confidence);
    if (s.hit && s.target_index >= 0 && s.target_index < n_targets)
      target_best[s.target_index] = std::max(target_best[s.target_index], s.alarm.confidence);
    else if (!s.hit)
      fa_conf.push_back(s.alarm.confidence);
  }
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::sort(target_best.begin(), target_best.end(), std::greater<>());
  std::sort(fa_conf.begin(), fa_conf.end(), std::greater<>());

  RocCurve roc;
  roc.lane_area_m2 = area_m2;
  roc.n_targets = n_targets;
  std::size_t detected = 0, false_alarms = 0;
  for (double tau : thresholds) {
    while (detected < target_best.size() && target_best[detected] >= tau) ++detected;
    while (false_alarms < fa_conf.size() && fa_conf[false_alarms] >= tau) ++false_alarms;
    roc.points.emplace_back(static_cast<double>(false_alarms) / area_m2,
                            static_cast<double>(detected) / n_targets);
  }
  return roc;
}

/// Right-continuous step value of the ROC at a FAR: the best P_d attained at
/// or below that FAR.
inline double roc_pd_at(const RocCurve& roc, double far) {
  double pd = 0.0;
  for (const auto& [f, p] : roc.points) {
    if (f <= far) pd = std::max(pd, p);
  }
  return pd;
}

/// Step integration of P_d over FAR in [0, far_max], normalized by far_max so
/// a perfect detector scores 1.
inline double pauc(const RocCurve& roc, double far_max = kDefaultFarMax) {
  if (!(far_max > 0.0)) throw std::invalid_argument("pauc: far_max must be positive");

  std::vector<std::pair<double, double>> pts = roc.points;
  std::sort(pts.begin(), pts.end());
  double area = 0.0, pd = 0.0, prev_far = 0.0;
  for (const auto& [f, p] : pts) {
    if (f > prev_far) {
      const double seg_end = std::min(f, far_max);
      if (seg_end > prev_far) {
        area += (seg_end - prev_far) * pd;
        prev_far = seg_end;
      }
      if (f > far_max) break;
    }
    pd = std::max(pd, p);
  }
  area += (far_max - prev_far) * pd;
  return area / far_max;
}

struct MeanRocCurve {
  std::vector<double> fars;
  std::vector<double> mean_pd;
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
  int n_curves = 0;
};

/// Vertically averaged ROC over a fixed FAR grid with a normal-approximation
/// 95% band (mean +/- 1.96 sd / sqrt(n); zero-width for a single curve).
inline MeanRocCurve vertical_average(const std::vector<RocCurve>& rocs,
                                     double far_max = kDefaultFarMax,
                                     double far_step = 0.0005) {
  if (rocs.empty()) throw std::invalid_argument("vertical_average: need at least one curve");
  MeanRocCurve out;
  out.n_curves = static_cast<int>(rocs.size());
  const int steps = static_cast<int>(std::llround(far_max / far_step));
  for (int i = 0; i <= steps; ++i) {
    const double far = i * far_step;
    double sum = 0.0, sumsq = 0.0;
    for (const RocCurve& roc : rocs) {
      const double pd = roc_pd_at(roc, far);
      sum += pd;
      sumsq += pd * pd;
    }
    const double n = static_cast<double>(rocs.size());
    const double mean = sum / n;
    double sd = 0.0;
    if (rocs.size() > 1) {
      const double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0));
      sd = std::sqrt(var);
    }
    const double half = 1.96 * sd / std::sqrt(n);
    out.fars.push_back(far);
    out.mean_pd.push_back(mean);
    out.ci_lo.push_back(mean - half);
    out.ci_hi.push_back(mean + half);
  }
  return out;
}

struct PaucScore {
  double value = 0.0;  // mean over bootstrap trials
  double far_max = kDefaultFarMax;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::vector<double> trials;
};

/// Bootstrap evaluation: n_boot resamples (with replacement, same size) of the
/// training rows; `fit_and_score` fits on a resample and returns the test-set
/// pAUC of the resulting model against the unchanged test data. Resamples
/// missing a class are redrawn (bounded retries). CI is the normal
/// approximation mean +/- 1.96 sd / sqrt(n_boot).
inline PaucScore bootstrap_eval(
    const std::vector<int>& train_labels, int n_boot, std::uint64_t seed,
    const std::function<double(const std::vector<int>&)>& fit_and_score) {
  if (n_boot < 2) throw std::invalid_argument("bootstrap_eval: need n_boot >= 2");
  const int n = static_cast<int>(train_labels.size());
  if (n < 2) throw std::invalid_argument("bootstrap_eval: need at least 2 training rows");

  Rng rng(seed);
  PaucScore score;
  for (int b = 0; b < n_boot; ++b) {
    std::vector<int> indices(n);
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      bool pos = false, neg = false;
      for (int i = 0; i < n; ++i) {
        indices[i] = rng.uniform_int(n);
        (train_labels[indices[i]] > 0 ? pos : neg) = true;
      }
      ok = pos && neg;
    }
    if (!ok)
      throw std::runtime_error("bootstrap_eval: could not draw a resample with both classes");
    score.trials.push_back(fit_and_score(indices));
  }

  double sum = 0.0;
  for (double v : score.trials) sum += v;
  score.value = sum / n_boot;
  double var = 0.0;
  for (double v : score.trials) var += (v - score.value) * (v - score.value);
  var /= (n_boot - 1);
  const double half = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(n_boot));
  score.ci_lo = score.value - half;
  score.ci_hi = score.value + half;
  return score;
}

}  // namespace flgpr
