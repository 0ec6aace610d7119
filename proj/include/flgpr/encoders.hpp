#pragma once

// Feature learning: dense local descriptors, ZCA whitening, spherical k-means
// dictionaries with max-similarity BOV encoding, diagonal-covariance GMM
// codebooks fit by EM, Fisher-vector encoding, and 2x2 spatial pooling.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flgpr/core.hpp"
#include "flgpr/features.hpp"
#include "flgpr/serialize.hpp"

namespace flgpr {

// ---------------------------------------------------------------------------
// Dense descriptors
// ---------------------------------------------------------------------------

struct DescriptorSet {
  Eigen::MatrixXd descriptors;  // T x D, one row per descriptor
  std::vector<std::pair<double, double>> centers_px;  // (row, col) window centers
  FeatureKind kind = FeatureKind::Raw;  // descriptor flavor: Raw or Sift
  int grid_rows = 0;
  int grid_cols = 0;
  int patch_rows = kPatchSize;
  int patch_cols = kPatchSize;

  int count() const { return static_cast<int>(descriptors.rows()); }
  int dim() const { return static_cast<int>(descriptors.cols()); }
};

struct DenseDescriptorParams {
  int raw_window = 11;
  int raw_stride = 7;
  int sift_window = 8;
  int sift_stride = 8;
};

/// Densely sampled local descriptors over a normalized patch. Raw: window
/// pixels rasterized (D = window^2). Sift: sift_descriptor per window
/// (D = 128). Grid count per axis is 1 + floor((size - window) / stride).
inline DescriptorSet dense_descriptors(const NormalizedPatch& xp, FeatureKind kind,
                                       const DenseDescriptorParams& params = {}) {
  const bool raw = kind == FeatureKind::Raw;
  if (!raw && kind != FeatureKind::Sift)
    throw std::invalid_argument("dense_descriptors: kind must be raw or sift");
  const int window = raw ? params.raw_window : params.sift_window;
  const int stride = raw ? params.raw_stride : params.sift_stride;
  const int rows = xp.pixels.rows();
  const int cols = xp.pixels.cols();
  if (rows < window || cols < window)
    throw std::invalid_argument("dense_descriptors: patch smaller than window");

  DescriptorSet set;
  set.kind = kind;
  set.patch_rows = rows;
  set.patch_cols = cols;
  set.grid_rows = 1 + (rows - window) / stride;
  set.grid_cols = 1 + (cols - window) / stride;
  const int t_total = set.grid_rows * set.grid_cols;
  const int dim = raw ? window * window : 128;
  set.descriptors.resize(t_total, dim);
  set.centers_px.reserve(t_total);

  int t = 0;
  for (int gr = 0; gr < set.grid_rows; ++gr) {
    const int r0 = gr * stride;
    for (int gc = 0; gc < set.grid_cols; ++gc, ++t) {
      const int c0 = gc * stride;
      set.centers_px.emplace_back(r0 + (window - 1) / 2.0, c0 + (window - 1) / 2.0);
      if (raw) {
        int d = 0;
        for (int r = 0; r < window; ++r)
          for (int c = 0; c < window; ++c, ++d)
            set.descriptors(t, d) = xp.pixels(r0 + r, c0 + c);
      } else {
        ImageF win(window, window);
        for (int r = 0; r < window; ++r)
          for (int c = 0; c < window; ++c) win(r, c) = xp.pixels(r0 + r, c0 + c);
        const FeatureVector d = sift_descriptor(win);
        for (int j = 0; j < dim; ++j) set.descriptors(t, j) = d.values[j];
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// ZCA whitening
// ---------------------------------------------------------------------------

struct ZcaTransform {
  Eigen::VectorXd mean;
  Eigen::MatrixXd projection;          // symmetric (Sigma + eps I)^(-1/2)
  Eigen::MatrixXd inverse_projection;  // (Sigma + eps I)^(+1/2)
  double epsilon = 0.0;

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Fits a symmetric whitening transform on the rows of `desc` (population
/// covariance). `eps_rel` scales the regularizer by the mean eigenvalue;
/// zero eigen-directions project to zero.
inline ZcaTransform zca_fit(const Eigen::MatrixXd& desc, double eps_rel = 1e-2) {
  const auto t_count = desc.rows();
  if (t_count < 2) throw std::invalid_argument("zca_fit: need at least 2 descriptors");
  if (!desc.allFinite()) throw std::invalid_argument("zca_fit: non-finite input");

  ZcaTransform zca;
  zca.mean = desc.colwise().mean();
  const Eigen::MatrixXd centered = desc.rowwise() - zca.mean.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(t_count);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("zca_fit: eigensolver failed");
  Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  zca.epsilon = eps_rel * lambda.mean();

  Eigen::VectorXd fwd(lambda.size()), inv(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double v = lambda[i] + zca.epsilon;
    fwd[i] = v > 0.0 ? 1.0 / std::sqrt(v) : 0.0;
    inv[i] = v > 0.0 ? std::sqrt(v) : 0.0;
  }
  const Eigen::MatrixXd& vecs = eig.eigenvectors();
  zca.projection = vecs * fwd.asDiagonal() * vecs.transpose();
  zca.inverse_projection = vecs * inv.asDiagonal() * vecs.transpose();
  return zca;
}

inline Eigen::MatrixXd zca_apply(const ZcaTransform& zca, const Eigen::MatrixXd& desc) {
  return (desc.rowwise() - zca.mean.transpose()) * zca.projection;
}

inline Eigen::VectorXd zca_unapply(const ZcaTransform& zca, const Eigen::VectorXd& row) {
  return zca.inverse_projection * row + zca.mean;
}

// ---------------------------------------------------------------------------
// Spherical k-means / BOV
// ---------------------------------------------------------------------------

struct BovDictionary {
  Eigen::MatrixXd atoms;  // K x D, unit l2 rows
  ZcaTransform zca;
  bool whiten = true;
  FeatureKind descriptor_kind = FeatureKind::Raw;

  int k() const { return static_cast<int>(atoms.rows()); }
  int dim() const { return static_cast<int>(atoms.cols()); }
};

struct BovOptions {
  int k = 30;
  bool whiten = true;
  double zca_eps_rel = 1e-2;
  int max_iterations = 100;
};

namespace detail {

inline void normalize_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (norm > 0.0) m.row(r) /= norm;
  }
}

/// Alternating maximization of the summed cosine similarity. Returns unit-row
/// centers; assignments optional. Empty clusters reseed with the descriptor
/// worst-fit by its current center.
inline Eigen::MatrixXd spherical_kmeans_core(const Eigen::MatrixXd& unit_desc, int k,
                                             std::uint64_t seed, int max_iterations,
                                             std::vector<int>* assignments_out = nullptr,
                                             std::vector<double>* objective_trace = nullptr) {
  const int t_count = static_cast<int>(unit_desc.rows());
  if (t_count < k) throw std::invalid_argument("spherical_kmeans: need T >= K");

  // Seed centers with K distinct descriptor rows.
  Rng rng(seed);
  std::vector<int> order(t_count);
  for (int i = 0; i < t_count; ++i) order[i] = i;
  for (int i = t_count - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
  Eigen::MatrixXd centers(k, unit_desc.cols());
  for (int j = 0; j < k; ++j) centers.row(j) = unit_desc.row(order[j]);

  std::vector<int> assign(t_count, -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    const Eigen::MatrixXd sim = unit_desc * centers.transpose();  // T x K
    bool changed = false;
    double objective = 0.0;
    for (int t = 0; t < t_count; ++t) {
      int best = 0;
      double best_sim = sim(t, 0);
      for (int j = 1; j < k; ++j)
        if (sim(t, j) > best_sim) { best_sim = sim(t, j); best = j; }
      objective += best_sim;
      if (assign[t] != best) { assign[t] = best; changed = true; }
    }
    if (objective_trace) objective_trace->push_back(objective);
    if (!changed && iter > 0) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, unit_desc.cols());
    std::vector<int> counts(k, 0);
    for (int t = 0; t < t_count; ++t) {
      sums.row(assign[t]) += unit_desc.row(t);
      ++counts[assign[t]];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[j] == 0 || sums.row(j).norm() == 0.0) {
        // Reseed from the descriptor with the worst fit to its own center.
        int worst = 0;
        double worst_sim = std::numeric_limits<double>::infinity();
        for (int t = 0; t < t_count; ++t) {
          const double s = sim(t, assign[t]);
          if (s < worst_sim) { worst_sim = s; worst = t; }
        }
        centers.row(j) = unit_desc.row(worst);
      } else {
        centers.row(j) = sums.row(j) / sums.row(j).norm();
      }
    }
  }
  if (assignments_out) *assignments_out = assign;
  return centers;
}

}  // namespace detail

/// Learns a BOV dictionary: optional ZCA whitening of the descriptors, l2
/// row normalization, then spherical k-means.
inline BovDictionary spherical_kmeans(const Eigen::MatrixXd& descriptors,
                                      const BovOptions& options, std::uint64_t seed,
                                      std::vector<double>* objective_trace = nullptr) {
  BovDictionary dict;
  dict.whiten = options.whiten;
  Eigen::MatrixXd work;
  if (options.whiten) {
    dict.zca = zca_fit(descriptors, options.zca_eps_rel);
    work = zca_apply(dict.zca, descriptors);
  } else {
    work = descriptors;
  }
  detail::normalize_rows(work);
  dict.atoms = detail::spherical_kmeans_core(work, options.k, seed, options.max_iterations,
                                             nullptr, objective_trace);
  return dict;
}

namespace detail {

/// Pooling cell of a descriptor center: floor(pos / cell) with centers exactly
/// on a boundary assigned to the lower-index cell.
inline int pool_cell(double center, double extent, int grid) {
  const double pos = center / (extent / grid);
  int cell = static_cast<int>(std::ceil(pos)) - 1;
  return std::clamp(cell, 0, grid - 1);
}

}  // namespace detail

/// Max-similarity BOV encoding with spatial pooling. Per pooling cell and
/// dictionary atom, the feature is the maximum inner product between the atom
/// and the cell's (whitened, unit-normalized) descriptors; cells with no
/// descriptors contribute a zero block. Cells are concatenated row-major.
inline FeatureVector bov_encode(const DescriptorSet& desc, const BovDictionary& dict,
                                int pool_grid = 2) {
  if (desc.dim() != dict.dim())
    throw std::invalid_argument("bov_encode: descriptor dim does not match dictionary");
  if (pool_grid < 1) throw std::invalid_argument("bov_encode: pool_grid must be >= 1");

  Eigen::MatrixXd work =
      dict.whiten ? zca_apply(dict.zca, desc.descriptors) : desc.descriptors;
  detail::normalize_rows(work);
  const Eigen::MatrixXd gamma = work * dict.atoms.transpose();  // T x K

  const int k = dict.k();
  const int cells = pool_grid * pool_grid;
  FeatureVector f;
  f.kind = desc.kind == FeatureKind::Raw ? FeatureKind::BovRaw : FeatureKind::BovSift;
  f.values.assign(static_cast<std::size_t>(cells) * k, 0.0);
  std::vector<char> seen(static_cast<std::size_t>(cells) * k, 0);
  for (int t = 0; t < desc.count(); ++t) {
    const int qr = detail::pool_cell(desc.centers_px[t].first, desc.patch_rows, pool_grid);
    const int qc = detail::pool_cell(desc.centers_px[t].second, desc.patch_cols, pool_grid);
    const int q = qr * pool_grid + qc;
    for (int j = 0; j < k; ++j) {
      const std::size_t idx = static_cast<std::size_t>(q) * k + j;
      if (!seen[idx] || gamma(t, j) > f.values[idx]) {
        f.values[idx] = gamma(t, j);
        seen[idx] = 1;
      }
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Diagonal-covariance GMM / Fisher vector
// ---------------------------------------------------------------------------

struct GmmCodebook {
  Eigen::VectorXd weights;    // K
  Eigen::MatrixXd means;      // K x D
  Eigen::MatrixXd variances;  // K x D (diagonal covariances)
  FeatureKind descriptor_kind = FeatureKind::Raw;

  int k() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }
};

struct GmmOptions {
  int k = 30;
  int max_iterations = 200;
  double tol_per_point = 1e-6;       // stop when LL gain per point drops below
  double variance_floor_rel = 1e-6;  // floor relative to per-dim data variance
  double degenerate_weight = 1e-8;   // re-split threshold
};

namespace detail {

/// Log density matrix and per-point log-evidence for a diagonal GMM.
/// Returns T x K posterior matrix; log_likelihood gets the compensated sum of
/// per-point log evidences.
inline Eigen::MatrixXd gmm_posteriors(const Eigen::MatrixXd& x, const GmmCodebook& gmm,
                                      double* log_likelihood = nullptr) {
  const int t_count = static_cast<int>(x.rows());
  const int k = gmm.k();
  const int d = gmm.dim();

  const Eigen::MatrixXd inv_var = gmm.variances.cwiseInverse();        // K x D
  const Eigen::MatrixXd mu_over_var = gmm.means.cwiseProduct(inv_var); // K x D
  Eigen::VectorXd log_const(k);
  for (int j = 0; j < k; ++j) {
    log_const[j] = std::log(gmm.weights[j]) -
                   0.5 * (d * std::log(2.0 * M_PI) +
                          gmm.variances.row(j).array().log().sum() +
                          gmm.means.row(j).cwiseProduct(mu_over_var.row(j)).sum());
  }

  Eigen::MatrixXd logp = x.cwiseProduct(x) * (-0.5 * inv_var).transpose();  // T x K
  logp.noalias() += x * mu_over_var.transpose();
  logp.rowwise() += log_const.transpose();

  CompensatedSum ll;
  for (int t = 0; t < t_count; ++t) {
    const double mx = logp.row(t).maxCoeff();
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(logp(t, j) - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < k; ++j) logp(t, j) = std::exp(logp(t, j) - lse);
    ll.add(lse);
  }
  if (log_likelihood) *log_likelihood = ll.value();
  return logp;  // now the posterior matrix
}

}  // namespace detail

/// Diagonal-covariance EM initialized from spherical k-means assignments.
/// `ll_trace` records the log-likelihood after every E-step (non-decreasing
/// up to floating rounding).
inline GmmCodebook gmm_fit(const Eigen::MatrixXd& desc, const GmmOptions& options,
                           std::uint64_t seed, std::vector<double>* ll_trace = nullptr) {
  const int t_count = static_cast<int>(desc.rows());
  const int d = static_cast<int>(desc.cols());
  const int k = options.k;
  if (t_count < k) throw std::invalid_argument("gmm_fit: need T >= K");
  if (!desc.allFinite()) throw std::invalid_argument("gmm_fit: non-finite input");

  const Eigen::VectorXd data_mean = desc.colwise().mean();
  Eigen::VectorXd data_var =
      ((desc.rowwise() - data_mean.transpose()).array().square().colwise().sum() /
       static_cast<double>(t_count))
          .matrix();
  Eigen::VectorXd floor_var(d);
  for (int j = 0; j < d; ++j)
    floor_var[j] = std::max(options.variance_floor_rel * data_var[j], 1e-12);

  // Init from spherical k-means hard assignments on row-normalized data.
  GmmCodebook gmm;
  gmm.weights.resize(k);
  gmm.means.resize(k, d);
  gmm.variances.resize(k, d);
  {
    Eigen::MatrixXd unit = desc;
    detail::normalize_rows(unit);
    std::vector<int> assign;
    detail::spherical_kmeans_core(unit, k, seed, 50, &assign);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, d);
    for (int t = 0; t < t_count; ++t) {
      counts[assign[t]] += 1.0;
      sums.row(assign[t]) += desc.row(t);
    }
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0.0)
        gmm.means.row(j) = sums.row(j) / counts[j];
      else
        gmm.means.row(j) = data_mean.transpose();
      gmm.weights[j] = std::max(counts[j] / t_count, options.degenerate_weight);
    }
    gmm.weights /= gmm.weights.sum();
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(k, d);
    for (int t = 0; t < t_count; ++t)
      sq.row(assign[t]) +=
          (desc.row(t) - gmm.means.row(assign[t])).array().square().matrix();
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0.0)
        gmm.variances.row(j) = sq.row(j) / counts[j];
      else
        gmm.variances.row(j) = data_var.transpose();
      gmm.variances.row(j) = gmm.variances.row(j).cwiseMax(floor_var.transpose());
    }
  }

  Rng jitter_rng(mix_seed(seed, 0x9e5d));
  const Eigen::MatrixXd desc_sq = desc.cwiseProduct(desc);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double ll = 0.0;
    const Eigen::MatrixXd gamma = detail::gmm_posteriors(desc, gmm, &ll);
    if (ll_trace) ll_trace->push_back(ll);

    // M step.
    Eigen::VectorXd nk = gamma.colwise().sum();
    Eigen::MatrixXd new_means(k, d);
    Eigen::MatrixXd new_vars(k, d);
    const Eigen::MatrixXd gx = gamma.transpose() * desc;      // K x D
    const Eigen::MatrixXd gxx = gamma.transpose() * desc_sq;  // K x D
    for (int j = 0; j < k; ++j) {
      const double n = std::max(nk[j], 1e-300);
      new_means.row(j) = gx.row(j) / n;
      new_vars.row(j) = (gxx.row(j) / n -
                         new_means.row(j).cwiseProduct(new_means.row(j)))
                            .cwiseMax(floor_var.transpose());
    }
    gmm.means = new_means;
    gmm.variances = new_vars;
    gmm.weights = nk / static_cast<double>(t_count);

    // Re-split the largest component over any collapsed one.
    for (int j = 0; j < k; ++j) {
      if (gmm.weights[j] >= options.degenerate_weight) continue;
      int big = 0;
      gmm.weights.maxCoeff(&big);
      gmm.weights[big] /= 2.0;
      gmm.weights[j] = gmm.weights[big];
      gmm.variances.row(j) = gmm.variances.row(big);
      for (int jj = 0; jj < d; ++jj)
        gmm.means(j, jj) = gmm.means(big, jj) +
                           1e-3 * std::sqrt(gmm.variances(big, jj)) * jitter_rng.normal();
    }
    gmm.weights /= gmm.weights.sum();

    if (iter > 0 && ll - prev_ll < options.tol_per_point * t_count) {
      prev_ll = ll;
      break;
    }
    prev_ll = ll;
  }
  return gmm;
}

/// Posterior responsibilities of descriptors under a codebook (Eq.-style
/// soft assignment). Exposed for tests and the Fisher encoder.
inline Eigen::MatrixXd gmm_posteriors(const Eigen::MatrixXd& x, const GmmCodebook& gmm,
                                      double* log_likelihood = nullptr) {
  return detail::gmm_posteriors(x, gmm, log_likelihood);
}

struct FvOptions {
  bool improved_normalization = false;  // signed sqrt + global l2 (off: faithful)
};

/// Fisher-vector encoding with spatial pooling. Per pooling cell and
/// component: first-order and second-order weighted residual statistics,
/// concatenated (G_mu_1, G_sigma_1, ..., G_mu_K, G_sigma_K); cells row-major.
/// Dimensionality: pool_grid^2 * 2 * D * K.
inline FeatureVector fv_encode(const DescriptorSet& desc, const GmmCodebook& gmm,
                               int pool_grid = 2, const FvOptions& options = {}) {
  if (desc.dim() != gmm.dim())
    throw std::invalid_argument("fv_encode: descriptor dim does not match codebook");
  if (pool_grid < 1) throw std::invalid_argument("fv_encode: pool_grid must be >= 1");

  const int k = gmm.k();
  const int d = gmm.dim();
  const int cells = pool_grid * pool_grid;
  const Eigen::MatrixXd gamma = detail::gmm_posteriors(desc.descriptors, gmm);
  const Eigen::MatrixXd sigma = gmm.variances.cwiseSqrt();

  FeatureVector f;
  f.kind = desc.kind == FeatureKind::Raw ? FeatureKind::FvRaw : FeatureKind::FvSift;
  f.values.assign(static_cast<std::size_t>(cells) * 2 * d * k, 0.0);

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int t = 0; t < desc.count(); ++t) {
    int q = 0;
    if (pool_grid > 1) {
      const int qr = detail::pool_cell(desc.centers_px[t].first, desc.patch_rows, pool_grid);
      const int qc = detail::pool_cell(desc.centers_px[t].second, desc.patch_cols, pool_grid);
      q = qr * pool_grid + qc;
    }
    double* block = f.values.data() + static_cast<std::size_t>(q) * 2 * d * k;
    for (int j = 0; j < k; ++j) {
      const double g = gamma(t, j);
      if (g == 0.0) continue;
      const double scale = g / std::sqrt(gmm.weights[j]);
      double* g_mu = block + static_cast<std::size_t>(j) * 2 * d;
      double* g_sigma = g_mu + d;
      for (int jj = 0; jj < d; ++jj) {
        const double z = (desc.descriptors(t, jj) - gmm.means(j, jj)) / sigma(j, jj);
        g_mu[jj] += scale * z;
        g_sigma[jj] += scale * inv_sqrt2 * (z * z - 1.0);
      }
    }
  }

  if (options.improved_normalization) {
    for (auto& v : f.values) v = v >= 0.0 ? std::sqrt(v) : -std::sqrt(-v);
    double norm = 0.0;
    for (double v : f.values) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (auto& v : f.values) v /= norm;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Codebook persistence (magic "FLCB", version 1; record 0 = BOV dictionary,
// record 1 = GMM codebook)
// ---------------------------------------------------------------------------

namespace detail {

inline void write_matrix(BinaryWriter& w, const Eigen::MatrixXd& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
}

inline Eigen::MatrixXd read_matrix(BinaryReader& r) {
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28))
    throw FormatError("unreasonable matrix dims in " + r.path());
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f64();
  return m;
}

inline void write_vector(BinaryWriter& w, const Eigen::VectorXd& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

inline Eigen::VectorXd read_vector(BinaryReader& r) {
  const std::uint32_t n = r.u32();
  if (n > (1u << 26)) throw FormatError("unreasonable vector length in " + r.path());
  Eigen::VectorXd v(n);
  for (std::uint32_t i = 0; i < n; ++i) v[i] = r.f64();
  return v;
}

}  // namespace detail

inline void write_bov_dictionary(const BovDictionary& dict, const std::string& path) {
  BinaryWriter w(path);
  w.bytes("FLCB", 4);
  w.u32(1);
  w.u8(0);  // record kind: BOV
  w.u8(static_cast<std::uint8_t>(dict.descriptor_kind));
  w.u32(static_cast<std::uint32_t>(dict.k()));
  w.u32(static_cast<std::uint32_t>(dict.dim()));
  w.u8(dict.whiten ? 1 : 0);
  if (dict.whiten) {
    w.f64(dict.zca.epsilon);
    detail::write_vector(w, dict.zca.mean);
    detail::write_matrix(w, dict.zca.projection);
    detail::write_matrix(w, dict.zca.inverse_projection);
  }
  detail::write_matrix(w, dict.atoms);
  w.close();
}

inline BovDictionary read_bov_dictionary(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic("FLCB");
  if (r.u32() != 1) throw FormatError("unsupported codebook version in " + path);
  if (r.u8() != 0) throw FormatError("not a BOV dictionary record: " + path);
  BovDictionary dict;
  dict.descriptor_kind = static_cast<FeatureKind>(r.u8());
  const std::uint32_t k = r.u32();
  const std::uint32_t d = r.u32();
  dict.whiten = r.u8() != 0;
  if (dict.whiten) {
    dict.zca.epsilon = r.f64();
    dict.zca.mean = detail::read_vector(r);
    dict.zca.projection = detail::read_matrix(r);
    dict.zca.inverse_projection = detail::read_matrix(r);
  }
  dict.atoms = detail::read_matrix(r);
  if (dict.atoms.rows() != k || dict.atoms.cols() != d)
    throw FormatError("dictionary dims disagree with header in " + path);
  return dict;
}

inline void write_gmm_codebook(const GmmCodebook& gmm, const std::string& path) {
  BinaryWriter w(path);
  w.bytes("FLCB", 4);
  w.u32(1);
  w.u8(1);  // record kind: GMM
  w.u8(static_cast<std::uint8_t>(gmm.descriptor_kind));
  w.u32(static_cast<std::uint32_t>(gmm.k()));
  w.u32(static_cast<std::uint32_t>(gmm.dim()));
  detail::write_vector(w, gmm.weights);
  detail::write_matrix(w, gmm.means);
  detail::write_matrix(w, gmm.variances);
  w.close();
}

inline GmmCodebook read_gmm_codebook(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic("FLCB");
  if (r.u32() != 1) throw FormatError("unsupported codebook version in " + path);
  if (r.u8() != 1) throw FormatError("not a GMM codebook record: " + path);
  GmmCodebook gmm;
  gmm.descriptor_kind = static_cast<FeatureKind>(r.u8());
  const std::uint32_t k = r.u32();
  const std::uint32_t d = r.u32();
  gmm.weights = detail::read_vector(r);
  gmm.means = detail::read_matrix(r);
  gmm.variances = detail::read_matrix(r);
  if (gmm.weights.size() != k || gmm.means.rows() != k || gmm.means.cols() != d)
    throw FormatError("codebook dims disagree with header in " + path);
  return gmm;
}

}  // namespace flgpr
