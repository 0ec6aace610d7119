#pragma once

// Classifiers over feature vectors: z-scoring against training statistics,
// PLS1-based discriminant analysis (NIPALS), and soft-margin SVMs (linear and
// RBF) solved in the dual by SMO with maximal-violating-pair selection.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "flgpr/core.hpp"
#include "flgpr/serialize.hpp"

namespace flgpr {

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

struct StandardizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // floored, never below epsilon

  int dim() const { return static_cast<int>(mean.size()); }
};

inline constexpr double kStdFloor = 1e-12;

inline StandardizationStats standardize_fit(const Eigen::MatrixXd& train) {
  if (train.rows() < 2) throw std::invalid_argument("standardize_fit: need N >= 2");
  StandardizationStats stats;
  stats.mean = train.colwise().mean();
  const Eigen::MatrixXd centered = train.rowwise() - stats.mean.transpose();
  stats.std = (centered.array().square().colwise().sum() / train.rows())
                  .sqrt()
                  .matrix()
                  .transpose();
  stats.std = stats.std.cwiseMax(kStdFloor);
  return stats;
}

inline Eigen::MatrixXd standardize_apply(const StandardizationStats& stats,
                                         const Eigen::MatrixXd& x) {
  if (x.cols() != stats.mean.size())
    throw std::invalid_argument("standardize_apply: dimension mismatch");
  return (x.rowwise() - stats.mean.transpose()).array().rowwise() /
         stats.std.transpose().array();
}

// ---------------------------------------------------------------------------
// PLSDA (NIPALS PLS1 on +/-1 labels)
// ---------------------------------------------------------------------------

struct PlsdaModel {
  Eigen::VectorXd coefficients;  // beta in the input feature space
  double intercept = 0.0;
  int n_components = 0;            // components actually used
  Eigen::MatrixXd training_scores; // N x A latent scores (orthogonality checks)
};

/// NIPALS PLS1: iteratively extract weight directions proportional to X'y,
/// deflate, and assemble the regression vector. Larger predicted values mean
/// more target-like. Deflation that exhausts y stops early with fewer
/// components.
inline PlsdaModel plsda_fit(const Eigen::MatrixXd& x_in, const Eigen::VectorXd& y_in,
                            int n_components) {
  const int n = static_cast<int>(x_in.rows());
  const int d = static_cast<int>(x_in.cols());
  if (n < 2 || y_in.size() != n) throw std::invalid_argument("plsda_fit: bad shapes");
  bool has_pos = false, has_neg = false;
  for (int i = 0; i < n; ++i) (y_in[i] > 0 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw std::invalid_argument("plsda_fit: both classes must be present");
  if (n_components < 1 || n_components > std::min(n - 1, d))
    throw std::invalid_argument("plsda_fit: n_components out of range");

  const Eigen::VectorXd x_mean = x_in.colwise().mean();
  const double y_mean = y_in.mean();
  Eigen::MatrixXd x = x_in.rowwise() - x_mean.transpose();
  Eigen::VectorXd y = y_in.array() - y_mean;

  Eigen::MatrixXd weights(d, n_components);
  Eigen::MatrixXd loadings(d, n_components);
  Eigen::MatrixXd scores(n, n_components);
  Eigen::VectorXd y_loadings(n_components);

  constexpr double kTiny = 1e-14;
  int used = 0;
  for (int a = 0; a < n_components; ++a) {
    Eigen::VectorXd w = x.transpose() * y;
    const double wn = w.norm();
    if (wn < kTiny) break;  // y exhausted by deflation
    w /= wn;
    const Eigen::VectorXd t = x * w;
    const double tt = t.squaredNorm();
    if (tt < kTiny) break;
    const Eigen::VectorXd p = x.transpose() * t / tt;
    const double q = y.dot(t) / tt;
    weights.col(a) = w;
    loadings.col(a) = p;
    scores.col(a) = t;
    y_loadings[a] = q;
    x.noalias() -= t * p.transpose();
    y -= q * t;
    ++used;
  }
  if (used == 0) throw std::invalid_argument("plsda_fit: no usable components");

  const auto w_used = weights.leftCols(used);
  const auto p_used = loadings.leftCols(used);
  const auto q_used = y_loadings.head(used);

  PlsdaModel model;
  model.n_components = used;
  model.training_scores = scores.leftCols(used);
  // beta = W (P^T W)^{-1} q
  const Eigen::MatrixXd pw = p_used.transpose() * w_used;
  model.coefficients = w_used * pw.colPivHouseholderQr().solve(q_used);
  model.intercept = y_mean - x_mean.dot(model.coefficients);
  return model;
}

inline Eigen::VectorXd plsda_predict(const PlsdaModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.coefficients.size())
    throw std::invalid_argument("plsda_predict: dimension mismatch");
  return (x * model.coefficients).array() + model.intercept;
}

// ---------------------------------------------------------------------------
// SVM
// ---------------------------------------------------------------------------

enum class SvmKind : std::uint8_t { Linear = 0, Rbf = 1 };

struct SvmModel {
  SvmKind kind = SvmKind::Linear;
  Eigen::MatrixXd support_vectors;  // S x D
  Eigen::VectorXd alpha_y;          // alpha_i * y_i per support vector
  double bias = 0.0;
  double c = 1.0;
  double gamma = 0.0;       // RBF only
  Eigen::VectorXd weights;  // linear only: w = sum alpha_i y_i x_i
};

struct SvmFitInfo {
  int iterations = 0;
  double kkt_residual = 0.0;
};

struct SvmDualSolution {
  Eigen::VectorXd alpha;
  double bias = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

/// SMO on a precomputed kernel matrix: maximal-violating-pair selection until
/// the KKT residual m(alpha) - M(alpha) drops below `tol`; throws (carrying
/// the residual) if the iteration cap is reached first. `objective_trace`
/// records the dual objective sum(alpha) - 0.5 alpha' Q alpha per iteration
/// (non-decreasing).
inline SvmDualSolution svm_solve_dual(const Eigen::MatrixXd& kmat, const Eigen::VectorXd& y,
                                      double c, double tol = 1e-3,
                                      std::vector<double>* objective_trace = nullptr) {
  const int n = static_cast<int>(y.size());
  if (kmat.rows() != n || kmat.cols() != n)
    throw std::invalid_argument("svm_solve_dual: kernel/label size mismatch");
  bool has_pos = false, has_neg = false;
  for (int i = 0; i < n; ++i) (y[i] > 0 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw std::invalid_argument("svm_solve_dual: both classes must be present");

  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);  // sum_j alpha_j y_j K_ij
  const long max_iter = std::max<long>(100000, 200L * n);
  long iter = 0;
  double residual = std::numeric_limits<double>::infinity();

  for (; iter < max_iter; ++iter) {
    // Maximal violating pair over (y_i - u_i).
    int i_up = -1, i_low = -1;
    double m_up = -std::numeric_limits<double>::infinity();
    double m_low = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const double g = y[i] - u[i];
      const bool in_up = (y[i] > 0 && alpha[i] < c) || (y[i] < 0 && alpha[i] > 0);
      const bool in_low = (y[i] < 0 && alpha[i] < c) || (y[i] > 0 && alpha[i] > 0);
      if (in_up && g > m_up) { m_up = g; i_up = i; }
      if (in_low && g < m_low) { m_low = g; i_low = i; }
    }
    residual = m_up - m_low;
    if (i_up < 0 || i_low < 0 || residual <= tol) break;

    const int i = i_up, j = i_low;
    const double eta = std::max(kmat(i, i) + kmat(j, j) - 2.0 * kmat(i, j), 1e-12);
    const double e_i = u[i] - y[i];
    const double e_j = u[j] - y[j];
    double aj_new = alpha[j] + y[j] * (e_i - e_j) / eta;
    double lo, hi;
    if (y[i] != y[j]) {
      lo = std::max(0.0, alpha[j] - alpha[i]);
      hi = std::min(c, c + alpha[j] - alpha[i]);
    } else {
      lo = std::max(0.0, alpha[i] + alpha[j] - c);
      hi = std::min(c, alpha[i] + alpha[j]);
    }
    aj_new = std::clamp(aj_new, lo, hi);
    const double ai_new = alpha[i] + y[i] * y[j] * (alpha[j] - aj_new);
    const double di = (ai_new - alpha[i]) * y[i];
    const double dj = (aj_new - alpha[j]) * y[j];
    if (di == 0.0 && dj == 0.0) break;  // no progress possible at this pair
    alpha[i] = ai_new;
    alpha[j] = aj_new;
    u += di * kmat.col(i) + dj * kmat.col(j);
    if (objective_trace) {
      double obj = 0.0;
      for (int t = 0; t < n; ++t) obj += alpha[t] * (1.0 - 0.5 * y[t] * u[t]);
      objective_trace->push_back(obj);
    }
  }

  if (residual > tol && iter >= max_iter)
    throw std::runtime_error("svm_solve_dual: SMO did not converge, KKT residual " +
                             std::to_string(residual));

  // Bias from free support vectors, midpoint of the KKT interval otherwise.
  double bias;
  {
    CompensatedSum acc;
    int free_count = 0;
    for (int i = 0; i < n; ++i) {
      if (alpha[i] > 1e-9 && alpha[i] < c - 1e-9) {
        acc.add(y[i] - u[i]);
        ++free_count;
      }
    }
    if (free_count > 0) {
      bias = acc.value() / free_count;
    } else {
      double m_up = -std::numeric_limits<double>::infinity();
      double m_low = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) {
        const double g = y[i] - u[i];
        const bool in_up = (y[i] > 0 && alpha[i] < c) || (y[i] < 0 && alpha[i] > 0);
        const bool in_low = (y[i] < 0 && alpha[i] < c) || (y[i] > 0 && alpha[i] > 0);
        if (in_up) m_up = std::max(m_up, g);
        if (in_low) m_low = std::min(m_low, g);
      }
      bias = (m_up + m_low) / 2.0;
    }
  }

  SvmDualSolution sol;
  sol.alpha = std::move(alpha);
  sol.bias = bias;
  sol.residual = residual;
  sol.iterations = static_cast<int>(iter);
  return sol;
}

/// RBF pairwise kernel between row sets.
inline Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  double gamma) {
  const Eigen::VectorXd a_sq = a.rowwise().squaredNorm();
  const Eigen::VectorXd b_sq = b.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * (a * b.transpose());
  d2.colwise() += a_sq;
  d2.rowwise() += b_sq.transpose();
  return (-gamma * d2.array()).exp();
}

/// Soft-margin SVM on raw features (builds the kernel matrix internally).
inline SvmModel svm_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, SvmKind kind,
                        double c = 1.0, double gamma = -1.0, double tol = 1e-3,
                        SvmFitInfo* info = nullptr) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  if (n < 2 || y.size() != n) throw std::invalid_argument("svm_fit: bad shapes");
  if (gamma <= 0.0) gamma = 1.0 / d;
  if (static_cast<std::size_t>(n) * n > (1ull << 27))
    throw std::invalid_argument("svm_fit: problem too large for dense kernel matrix");

  const Eigen::MatrixXd kmat =
      kind == SvmKind::Linear ? Eigen::MatrixXd(x * x.transpose()) : rbf_kernel(x, x, gamma);
  const SvmDualSolution sol = svm_solve_dual(kmat, y, c, tol);
  if (info) {
    info->iterations = sol.iterations;
    info->kkt_residual = sol.residual;
  }

  SvmModel model;
  model.kind = kind;
  model.c = c;
  model.gamma = kind == SvmKind::Rbf ? gamma : 0.0;
  model.bias = sol.bias;
  std::vector<int> sv;
  for (int i = 0; i < n; ++i)
    if (sol.alpha[i] > 0.0) sv.push_back(i);
  model.support_vectors.resize(static_cast<int>(sv.size()), d);
  model.alpha_y.resize(static_cast<int>(sv.size()));
  for (std::size_t s = 0; s < sv.size(); ++s) {
    model.support_vectors.row(static_cast<int>(s)) = x.row(sv[s]);
    model.alpha_y[static_cast<int>(s)] = sol.alpha[sv[s]] * y[sv[s]];
  }
  if (kind == SvmKind::Linear)
    model.weights = model.support_vectors.transpose() * model.alpha_y;
  return model;
}

inline Eigen::VectorXd svm_predict(const SvmModel& model, const Eigen::MatrixXd& x) {
  if (model.kind == SvmKind::Linear) {
    if (x.cols() != model.weights.size())
      throw std::invalid_argument("svm_predict: dimension mismatch");
    return (x * model.weights).array() + model.bias;
  }
  if (x.cols() != model.support_vectors.cols())
    throw std::invalid_argument("svm_predict: dimension mismatch");
  const Eigen::VectorXd sv_sq = model.support_vectors.rowwise().squaredNorm();
  const Eigen::VectorXd x_sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * (x * model.support_vectors.transpose());
  d2.colwise() += x_sq;
  d2.rowwise() += sv_sq.transpose();
  return ((-model.gamma * d2.array()).exp().matrix() * model.alpha_y).array() + model.bias;
}

// ---------------------------------------------------------------------------
// Model persistence (magic "FLMD", version 1; record 0 = PLSDA, 1 = SVM,
// each prefixed by the standardization block of the training pipeline)
// ---------------------------------------------------------------------------

namespace detail {

inline void write_vectorxd(BinaryWriter& w, const Eigen::VectorXd& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

inline Eigen::VectorXd read_vectorxd(BinaryReader& r) {
  const std::uint32_t n = r.u32();
  if (n > (1u << 26)) throw FormatError("unreasonable vector length in " + r.path());
  Eigen::VectorXd v(n);
  for (std::uint32_t i = 0; i < n; ++i) v[i] = r.f64();
  return v;
}

inline void write_matrixxd(BinaryWriter& w, const Eigen::MatrixXd& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) w.f64(m(i, j));
}

inline Eigen::MatrixXd read_matrixxd(BinaryReader& r) {
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28))
    throw FormatError("unreasonable matrix dims in " + r.path());
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f64();
  return m;
}

}  // namespace detail

inline void write_plsda_model(const PlsdaModel& model, const StandardizationStats& stats,
                              const std::string& path) {
  BinaryWriter w(path);
  w.bytes("FLMD", 4);
  w.u32(1);
  w.u8(0);
  detail::write_vectorxd(w, stats.mean);
  detail::write_vectorxd(w, stats.std);
  w.u32(static_cast<std::uint32_t>(model.n_components));
  w.f64(model.intercept);
  detail::write_vectorxd(w, model.coefficients);
  w.close();
}

inline void read_plsda_model(const std::string& path, PlsdaModel& model,
                             StandardizationStats& stats) {
  BinaryReader r(path);
  r.expect_magic("FLMD");
  if (r.u32() != 1) throw FormatError("unsupported model version in " + path);
  if (r.u8() != 0) throw FormatError("not a PLSDA record: " + path);
  stats.mean = detail::read_vectorxd(r);
  stats.std = detail::read_vectorxd(r);
  model.n_components = static_cast<int>(r.u32());
  model.intercept = r.f64();
  model.coefficients = detail::read_vectorxd(r);
}

inline void write_svm_model(const SvmModel& model, const StandardizationStats& stats,
                            const std::string& path) {
  BinaryWriter w(path);
  w.bytes("FLMD", 4);
  w.u32(1);
  w.u8(1);
  detail::write_vectorxd(w, stats.mean);
  detail::write_vectorxd(w, stats.std);
  w.u8(static_cast<std::uint8_t>(model.kind));
  w.f64(model.bias);
  w.f64(model.c);
  w.f64(model.gamma);
  detail::write_vectorxd(w, model.alpha_y);
  detail::write_matrixxd(w, model.support_vectors);
  detail::write_vectorxd(w, model.weights);
  w.close();
}

inline void read_svm_model(const std::string& path, SvmModel& model,
                           StandardizationStats& stats) {
  BinaryReader r(path);
  r.expect_magic("FLMD");
  if (r.u32() != 1) throw FormatError("unsupported model version in " + path);
  if (r.u8() != 1) throw FormatError("not an SVM record: " + path);
  stats.mean = detail::read_vectorxd(r);
  stats.std = detail::read_vectorxd(r);
  model.kind = static_cast<SvmKind>(r.u8());
  model.bias = r.f64();
  model.c = r.f64();
  model.gamma = r.f64();
  model.alpha_y = detail::read_vectorxd(r);
  model.support_vectors = detail::read_matrixxd(r);
  model.weights = detail::read_vectorxd(r);
}

}  // namespace flgpr
