#pragma once

// Decision-level fusion: sequential forward search over per-algorithm
// prediction columns, driven by inner-cross-validated pAUC of a second-stage
// PLSDA, with optional auto-stopping when the best attainable score starts to
// decrease.

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <vector>

#include "flgpr/classifiers.hpp"
#include "flgpr/core.hpp"
#include "flgpr/evaluation.hpp"

namespace flgpr {

struct PredictionMatrix {
  Eigen::MatrixXd values;           // rows = alarms, cols = algorithms
  std::vector<std::string> labels;  // column names, e.g. "HH/fv_sift/plsda"

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
};

struct FusionStep {
  int column = -1;
  std::string label;
  double inner_cv_pauc = 0.0;
};

struct FusionModel {
  std::vector<int> selected;                 // column indices, selection order
  std::vector<std::string> selected_labels;  // label-keyed lookup at predict time
  StandardizationStats stats;
  PlsdaModel plsda;
  std::vector<FusionStep> trace;  // observed inner-CV pAUC per accepted step
};

/// Alarm-level pAUC of a score vector: every hit alarm counts as its own
/// target, FAR is normalized by `area_m2`.
inline double alarm_level_pauc(const Eigen::VectorXd& scores, const std::vector<char>& is_hit,
                               double area_m2, double far_max = kDefaultFarMax) {
  if (scores.size() != static_cast<Eigen::Index>(is_hit.size()))
    throw std::invalid_argument("alarm_level_pauc: size mismatch");
  std::vector<ScoredAlarm> scored(is_hit.size());
  int n_targets = 0;
  for (std::size_t i = 0; i < is_hit.size(); ++i) {
    scored[i].alarm.confidence = scores[static_cast<Eigen::Index>(i)];
    scored[i].hit = is_hit[i] != 0;
    scored[i].target_index = scored[i].hit ? n_targets++ : -1;
  }
  if (n_targets == 0) throw std::invalid_argument("alarm_level_pauc: no positive alarms");
  return pauc(roc_curve(scored, n_targets, area_m2), far_max);
}

struct SfsOptions {
  int max_nf = 10;
  int inner_folds = 5;
  bool auto_stop = true;
  int plsda_components = 5;
  double far_max = kDefaultFarMax;
  int max_reshuffles = 32;
};

namespace detail {

/// Stratified random fold assignment; every fold and every fold-complement
/// must contain both classes, reshuffling up to the retry bound.
inline std::vector<int> stratified_folds(const std::vector<char>& is_hit, int n_folds,
                                         std::uint64_t seed, int max_reshuffles) {
  const int n = static_cast<int>(is_hit.size());
  std::vector<int> hits, fas;
  for (int i = 0; i < n; ++i) (is_hit[i] ? hits : fas).push_back(i);
  if (hits.size() < 2 || fas.size() < 2)
    throw std::invalid_argument("sfs_select: need at least two alarms of each class");

  Rng rng(seed);
  std::vector<int> fold(n, 0);
  for (int attempt = 0; attempt < max_reshuffles; ++attempt) {
    auto shuffle = [&rng](std::vector<int>& v) {
      for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
        std::swap(v[i], v[rng.uniform_int(i + 1)]);
    };
    shuffle(hits);
    shuffle(fas);
    for (std::size_t i = 0; i < hits.size(); ++i)
      fold[hits[i]] = static_cast<int>(i) % n_folds;
    for (std::size_t i = 0; i < fas.size(); ++i)
      fold[fas[i]] = static_cast<int>(i) % n_folds;

    // Each complement (training side) needs both classes.
    bool ok = true;
    for (int f = 0; f < n_folds && ok; ++f) {
      bool train_hit = false, train_fa = false;
      for (int i = 0; i < n; ++i) {
        if (fold[i] == f) continue;
        (is_hit[i] ? train_hit : train_fa) = true;
      }
      ok = train_hit && train_fa;
    }
    if (ok) return fold;
  }
  throw std::runtime_error("sfs_select: could not build usable inner folds");
}

/// Pooled out-of-fold PLSDA predictions for a candidate column set, reduced
/// to one alarm-level pAUC.
inline double inner_cv_pauc(const Eigen::MatrixXd& preds, const std::vector<char>& is_hit,
                            const std::vector<int>& fold, int n_folds,
                            const std::vector<int>& columns, double area_m2,
                            int plsda_components, double far_max) {
  const int n = static_cast<int>(preds.rows());
  Eigen::MatrixXd sub(n, static_cast<int>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) sub.col(static_cast<int>(j)) = preds.col(columns[j]);

  Eigen::VectorXd pooled(n);
  for (int f = 0; f < n_folds; ++f) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < n; ++i) (fold[i] == f ? test_rows : train_rows).push_back(i);
    if (test_rows.empty()) continue;
    Eigen::MatrixXd x_train(static_cast<int>(train_rows.size()), sub.cols());
    Eigen::VectorXd y_train(static_cast<int>(train_rows.size()));
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      x_train.row(static_cast<int>(i)) = sub.row(train_rows[i]);
      y_train[static_cast<int>(i)] = is_hit[train_rows[i]] ? 1.0 : -1.0;
    }
    Eigen::MatrixXd x_test(static_cast<int>(test_rows.size()), sub.cols());
    for (std::size_t i = 0; i < test_rows.size(); ++i)
      x_test.row(static_cast<int>(i)) = sub.row(test_rows[i]);

    const StandardizationStats stats = standardize_fit(x_train);
    const int comps = std::min({plsda_components, static_cast<int>(sub.cols()),
                                static_cast<int>(train_rows.size()) - 1});
    const PlsdaModel model = plsda_fit(standardize_apply(stats, x_train), y_train, comps);
    const Eigen::VectorXd scores = plsda_predict(model, standardize_apply(stats, x_test));
    for (std::size_t i = 0; i < test_rows.size(); ++i)
      pooled[test_rows[i]] = scores[static_cast<Eigen::Index>(i)];
  }
  return alarm_level_pauc(pooled, is_hit, area_m2, far_max);
}

}  // namespace detail

/// Second-stage fit over an explicit column subset (used for the final SFS
/// model and for N_f sweep prefixes).
inline FusionModel fit_fusion_stage(const PredictionMatrix& train_preds,
                                    const std::vector<char>& is_hit,
                                    const std::vector<int>& columns, int plsda_components) {
  if (columns.empty()) throw std::invalid_argument("fit_fusion_stage: empty column set");
  const int n = train_preds.rows();
  FusionModel model;
  model.selected = columns;
  Eigen::MatrixXd x(n, static_cast<int>(columns.size()));
  Eigen::VectorXd y(n);
  for (std::size_t j = 0; j < columns.size(); ++j) {
    model.selected_labels.push_back(train_preds.labels[columns[j]]);
    x.col(static_cast<int>(j)) = train_preds.values.col(columns[j]);
  }
  for (int i = 0; i < n; ++i) y[i] = is_hit[i] ? 1.0 : -1.0;
  model.stats = standardize_fit(x);
  const int comps = std::min({plsda_components, static_cast<int>(columns.size()), n - 1});
  model.plsda = plsda_fit(standardize_apply(model.stats, x), y, comps);
  return model;
}

/// Greedy forward selection of prediction columns. Starts from the single
/// best column by inner-CV pAUC, adds the column that maximizes it (ties to
/// the lower column index), and in auto-stop mode stops when the best
/// achievable score strictly decreases versus the incumbent.
inline FusionModel sfs_select(const PredictionMatrix& train_preds,
                              const std::vector<char>& is_hit, double area_m2,
                              const SfsOptions& options, std::uint64_t seed) {
  if (options.max_nf < 1) throw std::invalid_argument("sfs_select: max_nf must be >= 1");
  if (options.inner_folds < 2)
    throw std::invalid_argument("sfs_select: inner_folds must be >= 2");
  if (train_preds.rows() != static_cast<int>(is_hit.size()))
    throw std::invalid_argument("sfs_select: label/row mismatch");
  if (train_preds.cols() < 1) throw std::invalid_argument("sfs_select: no prediction columns");
  if (static_cast<int>(train_preds.labels.size()) != train_preds.cols())
    throw std::invalid_argument("sfs_select: label/column mismatch");

  const std::vector<int> fold = detail::stratified_folds(
      is_hit, options.inner_folds, mix_seed(seed, 0xf01d5), options.max_reshuffles);

  FusionModel model;
  double incumbent = -std::numeric_limits<double>::infinity();
  std::vector<char> in_set(train_preds.cols(), 0);

  while (static_cast<int>(model.selected.size()) < options.max_nf) {
    int best_col = -1;
    double best_pauc = -std::numeric_limits<double>::infinity();
    std::vector<int> candidate_set = model.selected;
    candidate_set.push_back(-1);
    for (int c = 0; c < train_preds.cols(); ++c) {
      if (in_set[c]) continue;
      candidate_set.back() = c;
      const double score = detail::inner_cv_pauc(
          train_preds.values, is_hit, fold, options.inner_folds, candidate_set, area_m2,
          options.plsda_components, options.far_max);
      if (score > best_pauc) { best_pauc = score; best_col = c; }
    }
    if (best_col < 0) break;  // no candidates left
    if (options.auto_stop && !model.selected.empty() && best_pauc < incumbent) break;

    in_set[best_col] = 1;
    model.selected.push_back(best_col);
    model.selected_labels.push_back(train_preds.labels[best_col]);
    model.trace.push_back({best_col, train_preds.labels[best_col], best_pauc});
    incumbent = best_pauc;
  }

  // Final second-stage fit on the full training rows over the selected set.
  FusionModel fitted =
      fit_fusion_stage(train_preds, is_hit, model.selected, options.plsda_components);
  fitted.trace = std::move(model.trace);
  return fitted;
}

/// Applies the fused second-stage model to a test prediction matrix. Columns
/// are matched by label; a missing selected column is an error naming it.
inline Eigen::VectorXd fuse_predict(const FusionModel& model,
                                    const PredictionMatrix& test_preds) {
  Eigen::MatrixXd x(test_preds.rows(), static_cast<int>(model.selected_labels.size()));
  for (std::size_t j = 0; j < model.selected_labels.size(); ++j) {
    const auto& label = model.selected_labels[j];
    const auto it = std::find(test_preds.labels.begin(), test_preds.labels.end(), label);
    if (it == test_preds.labels.end())
      throw std::invalid_argument("fuse_predict: test matrix missing selected column '" +
                                  label + "'");
    x.col(static_cast<int>(j)) =
        test_preds.values.col(static_cast<int>(it - test_preds.labels.begin()));
  }
  return plsda_predict(model.plsda, standardize_apply(model.stats, x));
}

/// Fusion report rows: step, added_column, inner_cv_pauc.
inline void write_fusion_trace_csv(const FusionModel& model, const std::string& path) {
  CsvTable t;
  t.header = {"step", "added_column", "inner_cv_pauc"};
  for (std::size_t i = 0; i < model.trace.size(); ++i) {
    t.rows.push_back({std::to_string(i + 1), model.trace[i].label,
                      format_double(model.trace[i].inner_cv_pauc)});
  }
  write_csv(path, t);
}

}  // namespace flgpr
