#include <gtest/gtest.h>

#include <cmath>

#include "flgpr/confmap.hpp"

using namespace flgpr;

namespace {

NormalizedPatch noise_patch(std::uint64_t seed) {
  NormalizedPatch p;
  p.pixels = ImageF(100, 100);
  Rng rng(seed);
  for (auto& v : p.pixels.storage()) v = rng.normal();
  return p;
}

NormalizedPatch with_blob(NormalizedPatch p, double amplitude) {
  for (int r = 0; r < 100; ++r)
    for (int c = 0; c < 100; ++c) {
      const double d2 = (r - 50.0) * (r - 50.0) + (c - 50.0) * (c - 50.0);
      p.pixels(r, c) += amplitude * std::exp(-d2 / (2.0 * 100.0));
    }
  return p;
}

BovDictionary train_dict(int k, std::uint64_t seed) {
  const DescriptorSet set = dense_descriptors(noise_patch(seed), FeatureKind::Raw);
  BovOptions opt;
  opt.k = k;
  BovDictionary dict = spherical_kmeans(set.descriptors, opt, seed + 1);
  dict.descriptor_kind = FeatureKind::Raw;
  return dict;
}

}  // namespace

TEST(ConfidenceMap, GridDimsFromRawDefaults) {
  const BovDictionary dict = train_dict(8, 3);
  const std::vector<double> weights(4 * 8, 0.5);
  const ConfidenceMap map = confidence_map(noise_patch(5), dict, weights);
  EXPECT_EQ(map.values.rows(), 12);  // (13 - 1) sliding 2x2 windows
  EXPECT_EQ(map.values.cols(), 12);
}

TEST(ConfidenceMap, BlobScoresHigherThanNoise) {
  // Dictionary trained on a mix so it has blob-like and noise atoms; PLSDA
  // trained on pooled BOV features of blob vs noise patches.
  std::vector<NormalizedPatch> noise, blobs;
  for (int i = 0; i < 8; ++i) {
    noise.push_back(noise_patch(100 + i));
    blobs.push_back(with_blob(noise_patch(200 + i), 8.0));
  }
  Eigen::MatrixXd all_desc;
  {
    std::vector<Eigen::MatrixXd> blocks;
    for (const auto& p : noise) blocks.push_back(dense_descriptors(p, FeatureKind::Raw).descriptors);
    for (const auto& p : blobs) blocks.push_back(dense_descriptors(p, FeatureKind::Raw).descriptors);
    all_desc.resize(blocks.size() * blocks[0].rows(), blocks[0].cols());
    for (std::size_t b = 0; b < blocks.size(); ++b)
      all_desc.middleRows(static_cast<int>(b) * blocks[0].rows(),
                          static_cast<int>(blocks[0].rows())) = blocks[b];
  }
  BovOptions opt;
  opt.k = 12;
  BovDictionary dict = spherical_kmeans(all_desc, opt, 7);
  dict.descriptor_kind = FeatureKind::Raw;

  Eigen::MatrixXd x(16, 4 * 12);
  Eigen::VectorXd y(16);
  for (int i = 0; i < 8; ++i) {
    const FeatureVector fn = bov_encode(dense_descriptors(noise[i], FeatureKind::Raw), dict, 2);
    const FeatureVector fb = bov_encode(dense_descriptors(blobs[i], FeatureKind::Raw), dict, 2);
    for (int j = 0; j < fn.dim(); ++j) {
      x(i, j) = fn.values[j];
      x(8 + i, j) = fb.values[j];
    }
    y[i] = -1.0;
    y[8 + i] = 1.0;
  }
  const PlsdaModel model = plsda_fit(x, y, 3);

  const NormalizedPatch test_noise = noise_patch(999);
  const NormalizedPatch test_blob = with_blob(test_noise, 8.0);
  const ConfidenceMap map_noise = confidence_map(test_noise, dict, model);
  const ConfidenceMap map_blob = confidence_map(test_blob, dict, model);
  double max_noise = -1e300, max_blob = -1e300;
  for (double v : map_noise.values.storage()) max_noise = std::max(max_noise, v);
  for (double v : map_blob.values.storage()) max_blob = std::max(max_blob, v);
  EXPECT_GT(max_blob, max_noise);
}

TEST(ConfidenceMap, ConstantPatchWithTiledWeightsIsConstant) {
  const BovDictionary dict = train_dict(6, 11);
  // Equal weight blocks across the four quadrants.
  std::vector<double> weights(4 * 6);
  Rng rng(13);
  for (int j = 0; j < 6; ++j) {
    const double w = rng.normal();
    for (int q = 0; q < 4; ++q) weights[q * 6 + j] = w;
  }
  NormalizedPatch constant;
  constant.pixels = ImageF(100, 100, 0.75);
  const ConfidenceMap map = confidence_map(constant, dict, weights);
  const double first = map.values(0, 0);
  for (double v : map.values.storage()) EXPECT_NEAR(v, first, 1e-9);
}

TEST(ConfidenceMap, LocalityOutsideReceptiveField) {
  const BovDictionary dict = train_dict(8, 17);
  std::vector<double> weights(4 * 8);
  Rng rng(19);
  for (auto& w : weights) w = rng.normal();

  NormalizedPatch patch = noise_patch(21);
  const ConfidenceMap before = confidence_map(patch, dict, weights);
  // Window (0, 0) draws on pixels [0, 18) x [0, 18); perturb far outside.
  for (int r = 60; r < 100; ++r)
    for (int c = 60; c < 100; ++c) patch.pixels(r, c) += 3.0;
  const ConfidenceMap after = confidence_map(patch, dict, weights);
  EXPECT_EQ(after.values(0, 0), before.values(0, 0));
  // And the perturbed corner did change.
  EXPECT_NE(after.values(11, 11), before.values(11, 11));
}

TEST(ConfidenceMap, DimensionMismatchRejected) {
  const BovDictionary dict = train_dict(6, 23);
  EXPECT_THROW(confidence_map(noise_patch(25), dict, std::vector<double>(10, 0.0)),
               std::invalid_argument);
}

TEST(RenderDictionary, ThirtyAtomsTileAsFiveBySix) {
  const BovDictionary dict = train_dict(30, 29);
  const DictionaryImage img = render_dictionary(dict);
  EXPECT_EQ(img.tile_rows, 5);
  EXPECT_EQ(img.tile_cols, 6);
  EXPECT_EQ(img.tile_size, 11);
  EXPECT_EQ(img.image.rows(), 5 * 12 - 1);
  EXPECT_EQ(img.image.cols(), 6 * 12 - 1);
  for (double v : img.image.storage()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(RenderDictionary, ZcaRoundTripRecoversStamp) {
  // Atom = ZCA(stamp) with zero-mean fit data: the rendered tile equals the
  // stamp up to contrast stretch.
  Rng rng(31);
  Eigen::MatrixXd fit(804, 121);
  for (int t = 0; t < fit.rows(); ++t)
    for (int j = 0; j < 121; ++j) fit(t, j) = rng.normal();
  const Eigen::RowVectorXd fit_mean = fit.colwise().mean();
  fit.rowwise() -= fit_mean;  // kill the mean so scaling is pure

  BovDictionary dict;
  dict.descriptor_kind = FeatureKind::Raw;
  dict.whiten = true;
  dict.zca = zca_fit(fit, 1e-3);

  Eigen::VectorXd stamp(121);
  for (int r = 0; r < 11; ++r)
    for (int c = 0; c < 11; ++c)
      stamp[r * 11 + c] = std::exp(-((r - 5.0) * (r - 5.0) + (c - 5.0) * (c - 5.0)) / 8.0);

  dict.atoms.resize(1, 121);
  dict.atoms.row(0) = zca_apply(dict.zca, stamp.transpose()).row(0).normalized();

  const DictionaryImage img = render_dictionary(dict);
  // Correlation between the rendered tile and the stamp.
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int r = 0; r < 11; ++r)
    for (int c = 0; c < 11; ++c) {
      const double a = img.image(r, c);
      const double b = stamp[r * 11 + c];
      sx += a; sy += b; sxx += a * a; syy += b * b; sxy += a * b;
    }
  const int n = 121;
  const double corr = (n * sxy - sx * sy) /
                      std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  EXPECT_GT(corr, 0.999);
}

TEST(RenderDictionary, AllZeroAtomIsMidGray) {
  BovDictionary dict;
  dict.descriptor_kind = FeatureKind::Raw;
  dict.whiten = false;
  dict.atoms = Eigen::MatrixXd::Zero(1, 121);
  const DictionaryImage img = render_dictionary(dict);
  for (int r = 0; r < 11; ++r)
    for (int c = 0; c < 11; ++c) EXPECT_DOUBLE_EQ(img.image(r, c), 0.5);
}

TEST(RenderDictionary, SiftDictionaryUnsupported) {
  BovDictionary dict;
  dict.descriptor_kind = FeatureKind::Sift;
  dict.whiten = false;
  dict.atoms = Eigen::MatrixXd::Zero(2, 128);
  EXPECT_THROW(render_dictionary(dict), std::invalid_argument);
}
