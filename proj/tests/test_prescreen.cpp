#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "flgpr/prescreen.hpp"

using namespace flgpr;

namespace {

ImageF random_magnitude(int rows, int cols, std::uint64_t seed) {
  ImageF img(rows, cols);
  Rng rng(seed);
  for (auto& v : img.storage()) v = std::abs(rng.normal(1.5, 0.4));
  return img;
}

/// Direct per-pixel RX evaluation, no integral images. The independent oracle
/// for rx_confidence_image.
double rx_direct(const ImageF& mag, int r, int c, int fore, int back) {
  const int f_lo = fore / 2, f_hi = fore - f_lo;
  const int b_lo = back / 2, b_hi = back - b_lo;
  double fore_sum = 0.0, fore_sq = 0.0, back_sum = 0.0, back_sq = 0.0;
  int n_fore = 0, n_back = 0;
  for (int rr = r - b_lo; rr < r + b_hi; ++rr) {
    for (int cc = c - b_lo; cc < c + b_hi; ++cc) {
      const double v = mag(rr, cc);
      const bool in_fore =
          rr >= r - f_lo && rr < r + f_hi && cc >= c - f_lo && cc < c + f_hi;
      if (in_fore) {
        fore_sum += v;
        fore_sq += v * v;
        ++n_fore;
      } else {
        back_sum += v;
        back_sq += v * v;
        ++n_back;
      }
    }
  }
  const double mu_t = fore_sum / n_fore;
  const double mu_b = back_sum / n_back;
  const double var_b = back_sq / n_back - mu_b * mu_b;
  if (!(var_b > 0.0)) return 0.0;
  return (mu_t - mu_b) * (mu_t - mu_b) / var_b;
}

ConfidenceImage make_conf(const ImageF& values) {
  ConfidenceImage conf;
  conf.values = values;
  conf.resolution_m = 0.03;
  conf.origin_utm = {100.0, 200.0};
  return conf;
}

}  // namespace

TEST(Rx, ConstantFrameIsZero) {
  ImageF mag(90, 90, 3.25);
  const ImageF conf = rx_confidence_image(mag, 40, 80);
  for (double v : conf.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Rx, NonNegativeEverywhere) {
  const ImageF conf = rx_confidence_image(random_magnitude(120, 160, 7), 40, 80);
  for (double v : conf.storage()) EXPECT_GE(v, 0.0);
}

TEST(Rx, AffineInvariance) {
  const ImageF mag = random_magnitude(100, 100, 21);
  const ImageF base = rx_confidence_image(mag, 40, 80);
  Rng rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    const double a = rng.uniform(0.5, 3.0);
    const double b = rng.uniform(0.0, 4.0);
    ImageF mapped(mag.rows(), mag.cols());
    for (std::size_t i = 0; i < mag.size(); ++i) mapped.data()[i] = a * mag.data()[i] + b;
    const ImageF out = rx_confidence_image(mapped, 40, 80);
    for (std::size_t i = 0; i < out.size(); ++i)
      EXPECT_NEAR(out.data()[i], base.data()[i], 1e-11);
  }
}

TEST(Rx, MatchesDirectWindowedOracle) {
  // Single bright 10x10 block in a 100x100 frame; lambda at the block center
  // must match the direct computation.
  ImageF mag = random_magnitude(100, 100, 5);
  for (int r = 45; r < 55; ++r)
    for (int c = 45; c < 55; ++c) mag(r, c) += 9.0;
  const ImageF conf = rx_confidence_image(mag, 40, 80);
  EXPECT_GT(conf(50, 50), 0.0);
  const double direct = rx_direct(mag, 50, 50, 40, 80);
  EXPECT_NEAR(conf(50, 50), direct, 1e-12 * std::max(1.0, std::abs(direct)));

  // A handful of other valid pixels.
  for (int r : {41, 50, 59}) {
    for (int c : {40, 52, 59}) {
      const double want = rx_direct(mag, r, c, 40, 80);
      EXPECT_NEAR(conf(r, c), want, 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST(Rx, BorderPixelsZeroAndSmallFrameRejected) {
  const ImageF conf = rx_confidence_image(random_magnitude(96, 96, 9), 40, 80);
  EXPECT_EQ(conf(0, 48), 0.0);
  EXPECT_EQ(conf(39, 48), 0.0);  // back window does not fit above row 40
  EXPECT_THROW(rx_confidence_image(ImageF(60, 100, 1.0), 40, 80), std::invalid_argument);
  EXPECT_THROW(rx_confidence_image(ImageF(100, 100, 1.0), 80, 40), std::invalid_argument);
}

TEST(LocalMaxima, MonotoneRampIsEmpty) {
  ImageF ramp(20, 20);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 20; ++c) ramp(r, c) = r + 2.0 * c;
  EXPECT_TRUE(local_maxima(make_conf(ramp), 0.0).empty());
}

TEST(LocalMaxima, SingleIsolatedPeak) {
  ImageF img(15, 15, 0.0);
  img(7, 9) = 4.0;
  const auto alarms = local_maxima(make_conf(img), 0.5);
  ASSERT_EQ(alarms.size(), 1u);
  EXPECT_DOUBLE_EQ(alarms[0].confidence, 4.0);
  EXPECT_DOUBLE_EQ(alarms[0].utm.easting, 100.0 + 9 * 0.03);
  EXPECT_DOUBLE_EQ(alarms[0].utm.northing, 200.0 + 7 * 0.03);
}

TEST(LocalMaxima, TwoEqualPeaksThreePixelsApart) {
  ImageF img(15, 15, 0.0);
  img(7, 5) = 4.0;
  img(7, 8) = 4.0;
  EXPECT_EQ(local_maxima(make_conf(img), 0.0).size(), 2u);
}

TEST(LocalMaxima, PlateauYieldsNoAlarm) {
  ImageF img(9, 9, 0.0);
  img(4, 4) = img(4, 5) = 2.0;  // non-strict neighbors
  EXPECT_TRUE(local_maxima(make_conf(img), 0.0).empty());
}

TEST(LocalMaxima, ThresholdFilters) {
  ImageF img(9, 9, 0.0);
  img(4, 4) = 2.0;
  EXPECT_EQ(local_maxima(make_conf(img), 2.0).size(), 1u);
  EXPECT_TRUE(local_maxima(make_conf(img), 2.0001).empty());
}

namespace {
Alarm alarm_at(double e, double n, double conf) {
  Alarm a;
  a.utm = {e, n};
  a.confidence = conf;
  return a;
}
}  // namespace

TEST(DpMeans, MergesWithinRadiusWithL2Confidence) {
  const auto out = dp_means_cluster({alarm_at(0.0, 0.0, 3.0), alarm_at(0.5, 0.0, 4.0)}, 1.0);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out[0].confidence, 5.0, 1e-12);  // sqrt(9 + 16)
  EXPECT_NEAR(out[0].utm.easting, 0.25, 1e-12);
  EXPECT_EQ(out[0].cluster_members, 2);
}

TEST(DpMeans, KeepsDistantAlarmsSeparate) {
  const auto out = dp_means_cluster({alarm_at(0.0, 0.0, 3.0), alarm_at(2.5, 0.0, 4.0)}, 1.0);
  ASSERT_EQ(out.size(), 2u);
  double confs[2] = {out[0].confidence, out[1].confidence};
  std::sort(confs, confs + 2);
  EXPECT_DOUBLE_EQ(confs[0], 3.0);
  EXPECT_DOUBLE_EQ(confs[1], 4.0);
}

TEST(DpMeans, EmptyInput) { EXPECT_TRUE(dp_means_cluster({}, 1.0).empty()); }

TEST(DpMeans, MembersWithinRadiusOfSomeCenter) {
  Rng rng(31);
  std::vector<Alarm> alarms;
  for (int i = 0; i < 50; ++i)
    alarms.push_back(alarm_at(rng.uniform(0.0, 12.0), rng.uniform(0.0, 12.0),
                              rng.uniform(0.5, 9.0)));
  const double radius = 1.0;
  const auto clusters = dp_means_cluster(alarms, radius);
  int members = 0;
  for (const auto& c : clusters) members += c.cluster_members;
  EXPECT_EQ(members, 50);
  for (const Alarm& a : alarms) {
    double best = 1e9;
    for (const auto& c : clusters) best = std::min(best, distance(a.utm, c.utm));
    EXPECT_LE(best, radius + 1e-9);
  }
}

TEST(DpMeans, ObjectiveNonIncreasing) {
  Rng rng(77);
  std::vector<Alarm> alarms;
  for (int i = 0; i < 80; ++i)
    alarms.push_back(alarm_at(rng.uniform(0.0, 20.0), rng.uniform(0.0, 20.0),
                              rng.uniform(0.5, 9.0)));
  std::vector<double> trace;
  dp_means_cluster(alarms, 1.5, &trace);
  ASSERT_GE(trace.size(), 1u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-9);
}

TEST(PrescreenLane, FindsHighSnrTarget) {
  LaneSpec spec;
  spec.lane_id = "P";
  spec.length_m = 18.0;
  spec.width_m = 9.0;
  spec.n_targets = 1;
  spec.clutter_density = 0.0;
  spec.seed = 17;
  spec.target_snr_db[static_cast<int>(Channel::VV)] = {24.0, 26.0};
  const Lane lane = generate_lane(spec);

  PrescreenParams params;
  params.min_confidence = 0.05;
  const auto alarms = prescreen_lane(lane, params);
  ASSERT_FALSE(alarms.empty());
  double best = 1e9;
  for (const Alarm& a : alarms) best = std::min(best, distance(a.utm, lane.truth[0].utm));
  EXPECT_LE(best, 1.0);
  // Sorted by confidence descending.
  for (std::size_t i = 1; i < alarms.size(); ++i)
    EXPECT_GE(alarms[i - 1].confidence, alarms[i].confidence);
  // Deterministic.
  const auto again = prescreen_lane(lane, params);
  ASSERT_EQ(alarms.size(), again.size());
  for (std::size_t i = 0; i < alarms.size(); ++i) {
    EXPECT_EQ(alarms[i].confidence, again[i].confidence);
    EXPECT_TRUE(alarms[i].utm == again[i].utm);
  }
}

TEST(PrescreenLane, InfiniteThresholdYieldsEmpty) {
  LaneSpec spec;
  spec.lane_id = "Z";
  spec.length_m = 12.0;
  spec.width_m = 6.0;
  spec.n_targets = 0;
  spec.clutter_density = 0.0;
  spec.seed = 4;
  const Lane lane = generate_lane(spec);
  PrescreenParams params;
  params.min_confidence = std::numeric_limits<double>::infinity();
  EXPECT_TRUE(prescreen_lane(lane, params).empty());
}

TEST(PrescreenLane, AlarmCsvRoundTrip) {
  std::vector<Alarm> alarms = {alarm_at(100.25, 7.5, 3.75), alarm_at(101.5, 9.0, 0.125)};
  alarms[0].cluster_members = 4;
  alarms[1].source = AlarmSource::Classifier;
  const std::string path =
      (std::filesystem::temp_directory_path() / "flgpr_alarms_test.csv").string();
  write_alarms_csv(alarms, path);
  const auto back = read_alarms_csv(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].utm.easting, 100.25);
  EXPECT_EQ(back[0].confidence, 3.75);
  EXPECT_EQ(back[0].cluster_members, 4);
  EXPECT_EQ(back[1].source, AlarmSource::Classifier);
}
