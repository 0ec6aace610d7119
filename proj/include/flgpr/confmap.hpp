#pragma once

// Confidence-map rendering: sliding 2x2 windows over the dense descriptor
// grid are BOV-encoded (one K block, no pooling) and scored with the
// quadrant-specific block of a PLSDA model trained on 2x2-pooled encodings.
// Also renders dictionary atoms (un-whitened, contrast-stretched tiles).

#include <cmath>
#include <vector>

#include "flgpr/classifiers.hpp"
#include "flgpr/encoders.hpp"
#include "flgpr/imaging.hpp"

namespace flgpr {

struct ConfidenceMap {
  ImageF values;  // one scalar per sliding 2x2 descriptor window
};

/// Core entry point taking explicit quadrant weights (length 4K, quadrants
/// row-major). The PLSDA intercept is a global shift and is excluded; maps
/// are relative.
inline ConfidenceMap confidence_map(const NormalizedPatch& xp, const BovDictionary& dict,
                                    const std::vector<double>& quadrant_weights,
                                    const DenseDescriptorParams& params = {}) {
  const int k = dict.k();
  if (static_cast<int>(quadrant_weights.size()) != 4 * k)
    throw std::invalid_argument("confidence_map: weight length must be 4K");

  const DescriptorSet desc = dense_descriptors(xp, dict.descriptor_kind, params);
  if (desc.grid_rows < 2 || desc.grid_cols < 2)
    throw std::invalid_argument("confidence_map: descriptor grid too small");

  Eigen::MatrixXd work =
      dict.whiten ? zca_apply(dict.zca, desc.descriptors) : desc.descriptors;
  detail::normalize_rows(work);
  const Eigen::MatrixXd gamma = work * dict.atoms.transpose();  // T x K

  ConfidenceMap map;
  map.values = ImageF(desc.grid_rows - 1, desc.grid_cols - 1);
  for (int wr = 0; wr + 1 < desc.grid_rows; ++wr) {
    for (int wc = 0; wc + 1 < desc.grid_cols; ++wc) {
      const int t00 = wr * desc.grid_cols + wc;
      const int t01 = t00 + 1;
      const int t10 = t00 + desc.grid_cols;
      const int t11 = t10 + 1;

      double center_row = 0.0, center_col = 0.0;
      for (int t : {t00, t01, t10, t11}) {
        center_row += desc.centers_px[t].first;
        center_col += desc.centers_px[t].second;
      }
      const int qr = detail::pool_cell(center_row / 4.0, desc.patch_rows, 2);
      const int qc = detail::pool_cell(center_col / 4.0, desc.patch_cols, 2);
      const double* w = quadrant_weights.data() + static_cast<std::size_t>(qr * 2 + qc) * k;

      double score = 0.0;
      for (int j = 0; j < k; ++j) {
        double enc = gamma(t00, j);
        enc = std::max(enc, gamma(t01, j));
        enc = std::max(enc, gamma(t10, j));
        enc = std::max(enc, gamma(t11, j));
        score += w[j] * enc;
      }
      map.values(wr, wc) = score;
    }
  }
  return map;
}

/// Spec-shaped entry point: scores with the PLSDA coefficient blocks directly
/// (model trained on 2x2-pooled BOV features, coefficient length 4K).
inline ConfidenceMap confidence_map(const NormalizedPatch& xp, const BovDictionary& dict,
                                    const PlsdaModel& plsda,
                                    const DenseDescriptorParams& params = {}) {
  if (plsda.coefficients.size() != 4 * dict.k())
    throw std::invalid_argument("confidence_map: PLSDA dimension is not 4K");
  std::vector<double> weights(plsda.coefficients.data(),
                              plsda.coefficients.data() + plsda.coefficients.size());
  return confidence_map(xp, dict, weights, params);
}

struct DictionaryImage {
  ImageF image;
  int tile_rows = 0;
  int tile_cols = 0;
  int tile_size = 0;
};

/// Tiles the un-whitened dictionary atoms as contrast-stretched thumbnails.
/// Raw-descriptor dictionaries only (SIFT atoms have no pixel layout).
inline DictionaryImage render_dictionary(const BovDictionary& dict) {
  if (dict.descriptor_kind != FeatureKind::Raw)
    throw std::invalid_argument("render_dictionary: unsupported for SIFT dictionaries");
  const int d = dict.dim();
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
  if (side * side != d)
    throw std::invalid_argument("render_dictionary: atom dim is not a square");

  DictionaryImage out;
  out.tile_size = side;
  out.tile_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dict.k()))));
  out.tile_rows = (dict.k() + out.tile_cols - 1) / out.tile_cols;
  const int gap = 1;
  out.image = ImageF(out.tile_rows * (side + gap) - gap,
                     out.tile_cols * (side + gap) - gap, 0.0);

  for (int a = 0; a < dict.k(); ++a) {
    Eigen::VectorXd atom = dict.atoms.row(a).transpose();
    if (dict.whiten) atom = zca_unapply(dict.zca, atom);
    ImageF tile(side, side);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) tile(r, c) = atom[r * side + c];
    tile = minmax_stretch(tile);  // constant atoms render mid-gray
    const int tr = (a / out.tile_cols) * (side + gap);
    const int tc = (a % out.tile_cols) * (side + gap);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) out.image(tr + r, tc + c) = tile(r, c);
  }
  return out;
}

}  // namespace flgpr
