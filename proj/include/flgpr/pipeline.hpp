#pragma once

// Stage orchestration behind the CLI: generate -> prescreen -> extract ->
// train -> evaluate -> fuse -> confmap -> report. Artifacts live under
// out_dir/{lanes,alarms,features,models,results,figures} with filenames that
// carry the seed and a chained stage-config hash, so artifacts from different
// configurations never collide and re-runs are byte-identical.
//
// Cross-validation is lane-based: fold k trains on every lane but k and
// evaluates on lane k. Codebooks, standardization statistics, and classifiers
// for a fold are fit from training-lane data only.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "flgpr/classifiers.hpp"
#include "flgpr/config.hpp"
#include "flgpr/confmap.hpp"
#include "flgpr/dataset.hpp"
#include "flgpr/encoders.hpp"
#include "flgpr/evaluation.hpp"
#include "flgpr/features.hpp"
#include "flgpr/fusion.hpp"
#include "flgpr/imaging.hpp"
#include "flgpr/patch.hpp"
#include "flgpr/prescreen.hpp"

namespace flgpr::pipeline {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Artifact paths
// ---------------------------------------------------------------------------

struct Paths {
  fs::path out;
  std::string gen_tag, pre_tag, feat_tag, train_tag, fuse_tag;

  fs::path lanes() const { return out / "lanes"; }
  fs::path alarms() const { return out / "alarms"; }
  fs::path features() const { return out / "features"; }
  fs::path models() const { return out / "models"; }
  fs::path results() const { return out / "results"; }
  fs::path figures() const { return out / "figures"; }

  fs::path lane(const std::string& id) const {
    return lanes() / (id + "." + gen_tag + ".lane");
  }
  fs::path alarm_csv(const std::string& id) const {
    return alarms() / (id + "." + pre_tag + ".alarms.csv");
  }
  fs::path feature_mat(const std::string& lane, Channel ch, FeatureKind kind) const {
    return features() / (lane + "." + channel_name(ch) + "." + feature_kind_name(kind) +
                         "." + feat_tag + ".fmat");
  }
  fs::path fold_feature_mat(int fold, const std::string& lane, Channel ch,
                            FeatureKind kind) const {
    return features() / ("fold" + std::to_string(fold) + "." + lane + "." +
                         channel_name(ch) + "." + feature_kind_name(kind) + "." +
                         train_tag + ".fmat");
  }
  fs::path codebook(int fold, Channel ch, const std::string& kind) const {
    return models() / ("fold" + std::to_string(fold) + "." + channel_name(ch) + "." + kind +
                       "." + train_tag + ".codebook");
  }
  fs::path model(int fold, Channel ch, FeatureKind feat, ClassifierKind clf) const {
    return models() / ("fold" + std::to_string(fold) + "." + channel_name(ch) + "." +
                       feature_kind_name(feat) + "." + classifier_kind_name(clf) + "." +
                       train_tag + ".model");
  }
  fs::path predictions_csv(int fold, const std::string& split) const {
    return results() /
           ("predictions_" + split + "_fold" + std::to_string(fold) + "." + train_tag + ".csv");
  }
  fs::path results_csv() const { return results() / ("evaluation." + train_tag + ".csv"); }
  fs::path roc_csv(const std::string& name) const {
    return results() / ("roc_" + name + "." + train_tag + ".csv");
  }
  fs::path report_csv() const { return results() / ("report." + train_tag + ".csv"); }
};

namespace detail {

inline std::string hash_tag(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%08x", static_cast<std::uint32_t>(h ^ (h >> 32)));
  return buf;
}

}  // namespace detail

inline Paths make_paths(const ExperimentConfig& cfg) {
  const Json full = config_to_json(cfg);
  auto section_hash = [&](std::initializer_list<const char*> keys, std::uint64_t chain) {
    std::uint64_t h = chain;
    h = fnv1a64(std::to_string(cfg.seed), h);
    for (const char* key : keys) h = fnv1a64(full[key].dump(), h);
    return h;
  };
  Paths p;
  p.out = cfg.out_dir;
  const std::uint64_t gen = section_hash({"lanes"}, 0xcbf29ce484222325ULL);
  const std::uint64_t pre = section_hash({"prescreener"}, gen);
  const std::uint64_t feat = section_hash({"features", "encoder", "channels"}, pre);
  const std::uint64_t train =
      section_hash({"classifiers", "classifier_params", "evaluation"}, feat);
  const std::uint64_t fuse = section_hash({"fusion"}, train);
  p.gen_tag = "s" + std::to_string(cfg.seed) + "-" + detail::hash_tag(gen);
  p.pre_tag = "s" + std::to_string(cfg.seed) + "-" + detail::hash_tag(pre);
  p.feat_tag = "s" + std::to_string(cfg.seed) + "-" + detail::hash_tag(feat);
  p.train_tag = "s" + std::to_string(cfg.seed) + "-" + detail::hash_tag(train);
  p.fuse_tag = "s" + std::to_string(cfg.seed) + "-" + detail::hash_tag(fuse);
  return p;
}

// ---------------------------------------------------------------------------
// Feature matrix records (magic "FLFM", version 1)
// ---------------------------------------------------------------------------

inline void write_feature_matrix(const Eigen::MatrixXd& m, FeatureKind kind,
                                 const fs::path& path) {
  BinaryWriter w(path.string());
  w.bytes("FLFM", 4);
  w.u32(1);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
  w.close();
}

inline Eigen::MatrixXd read_feature_matrix(const fs::path& path, FeatureKind* kind = nullptr) {
  if (!fs::exists(path))
    throw IoError("missing feature matrix: " + path.string() +
                  " (run the extract/train stages first)");
  BinaryReader r(path.string());
  r.expect_magic("FLFM");
  if (r.u32() != 1) throw FormatError("unsupported feature matrix version in " + path.string());
  const FeatureKind k = static_cast<FeatureKind>(r.u8());
  if (kind) *kind = k;
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (static_cast<std::uint64_t>(rows) * cols > (1ull << 31))
    throw FormatError("unreasonable feature matrix dims in " + path.string());
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f64();
  return m;
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

inline bool is_learned(FeatureKind k) {
  return k == FeatureKind::BovRaw || k == FeatureKind::BovSift || k == FeatureKind::FvRaw ||
         k == FeatureKind::FvSift;
}

inline bool is_bov(FeatureKind k) {
  return k == FeatureKind::BovRaw || k == FeatureKind::BovSift;
}

inline FeatureKind descriptor_kind_of(FeatureKind k) {
  switch (k) {
    case FeatureKind::BovRaw:
    case FeatureKind::FvRaw: return FeatureKind::Raw;
    case FeatureKind::BovSift:
    case FeatureKind::FvSift: return FeatureKind::Sift;
    default: throw std::invalid_argument("not a learned feature kind");
  }
}

inline std::string algo_label(Channel ch, FeatureKind feat, ClassifierKind clf) {
  return std::string(channel_name(ch)) + "/" + feature_kind_name(feat) + "/" +
         classifier_kind_name(clf);
}

inline std::string sanitize(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c == '/') c = '_';
  return out;
}

struct AlarmTable {
  std::vector<Alarm> alarms;
  std::vector<GroundTruthTarget> truth;
  std::vector<ScoredAlarm> scored;  // halo-scored against this lane's truth
  std::vector<char> is_hit;
};

inline std::vector<GroundTruthTarget> read_truth_csv(const std::string& path) {
  if (!fs::exists(path)) throw IoError("missing ground truth: " + path);
  const CsvTable t = read_csv(path);
  std::vector<GroundTruthTarget> truth;
  for (const auto& row : t.rows) {
    if (row.size() != 4) throw FormatError("bad truth row in " + path);
    GroundTruthTarget g;
    g.target_id = row[0];
    g.utm = {std::stod(row[1]), std::stod(row[2])};
    g.metal_class = metal_class_from_name(row[3]);
    truth.push_back(std::move(g));
  }
  return truth;
}

inline AlarmTable load_alarm_table(const Paths& paths, const std::string& lane_id,
                                   double halo_m) {
  const fs::path alarm_path = paths.alarm_csv(lane_id);
  if (!fs::exists(alarm_path))
    throw IoError("missing alarm list: " + alarm_path.string() + " (run prescreen first)");
  AlarmTable table;
  table.alarms = read_alarms_csv(alarm_path.string());
  table.truth = read_truth_csv(lane_truth_path(paths.lane(lane_id).string()));
  table.scored = score_alarms(table.alarms, table.truth, halo_m);
  table.is_hit.reserve(table.scored.size());
  for (const auto& s : table.scored) table.is_hit.push_back(s.hit ? 1 : 0);
  return table;
}

inline double realized_area_m2(const LaneSpec& spec) {
  const double w = std::llround(spec.width_m / spec.resolution_m) * spec.resolution_m;
  const double l = std::llround(spec.length_m / spec.resolution_m) * spec.resolution_m;
  return w * l;
}

/// Normalized (and optionally complex) patches for one lane/channel, aligned
/// with the lane's alarm list.
struct PatchStore {
  std::vector<NormalizedPatch> normalized;
  std::vector<ComplexPatch> complex_patches;  // kept only when requested
};

inline PatchStore build_patch_store(const Lane& lane, const std::vector<Alarm>& alarms,
                                    Channel channel, bool keep_complex) {
  PatchStore store;
  store.normalized.resize(alarms.size());
  if (keep_complex) store.complex_patches.resize(alarms.size());
  parallel_for(alarms.size(), [&](std::size_t i) {
    ComplexPatch patch = extract_patch(lane, alarms[i].utm, channel);
    store.normalized[i] = normalize_patch(patch);
    if (keep_complex) store.complex_patches[i] = std::move(patch);
  });
  return store;
}

// ---------------------------------------------------------------------------
// Stage: generate
// ---------------------------------------------------------------------------

inline std::string run_generate(const ExperimentConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.lanes());
  std::set<std::string> ids;
  double total_area = 0.0;
  int total_targets = 0;
  for (const LaneSpec& spec : cfg.lanes) {
    if (!ids.insert(spec.lane_id).second)
      throw std::invalid_argument("duplicate lane_id: " + spec.lane_id);
    const Lane lane = generate_lane(spec);
    write_lane(lane, paths.lane(spec.lane_id).string());
    total_area += lane.area_m2();
    total_targets += static_cast<int>(lane.truth.size());
  }
  std::ostringstream msg;
  msg << "generate: " << cfg.lanes.size() << " lanes, " << total_targets << " targets, "
      << format_double(total_area) << " m^2 -> " << paths.lanes().string();
  return msg.str();
}

// ---------------------------------------------------------------------------
// Stage: prescreen
// ---------------------------------------------------------------------------

inline std::string run_prescreen(const ExperimentConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.alarms());
  std::size_t total = 0;
  for (const LaneSpec& spec : cfg.lanes) {
    const fs::path lane_path = paths.lane(spec.lane_id);
    if (!fs::exists(lane_path))
      throw IoError("missing lane: " + lane_path.string() + " (run generate first)");
    const Lane lane = read_lane(lane_path.string());
    const std::vector<Alarm> alarms = prescreen_lane(lane, cfg.prescreener);
    write_alarms_csv(alarms, paths.alarm_csv(spec.lane_id).string());
    total += alarms.size();
  }
  std::ostringstream msg;
  msg << "prescreen: " << total << " clustered alarms across " << cfg.lanes.size()
      << " lanes -> " << paths.alarms().string();
  return msg.str();
}

// ---------------------------------------------------------------------------
// Stage: extract (handcrafted features; fold-independent)
// ---------------------------------------------------------------------------

inline std::string run_extract(const ExperimentConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.features());

  std::vector<FeatureKind> handcrafted;
  for (FeatureKind k : cfg.features)
    if (!is_learned(k)) handcrafted.push_back(k);

  std::optional<LogGaborBank> bank;
  if (std::find(handcrafted.begin(), handcrafted.end(), FeatureKind::LogGabor) !=
      handcrafted.end())
    bank = build_log_gabor_bank();

  std::size_t matrices = 0;
  for (const LaneSpec& spec : cfg.lanes) {
    const fs::path lane_path = paths.lane(spec.lane_id);
    if (!fs::exists(lane_path))
      throw IoError("missing lane: " + lane_path.string() + " (run generate first)");
    const fs::path alarm_path = paths.alarm_csv(spec.lane_id);
    if (!fs::exists(alarm_path))
      throw IoError("missing alarm list: " + alarm_path.string() + " (run prescreen first)");

    const Lane lane = read_lane(lane_path.string());
    const std::vector<Alarm> alarms = read_alarms_csv(alarm_path.string());
    const bool need_complex =
        std::find(handcrafted.begin(), handcrafted.end(), FeatureKind::Fft2d) !=
        handcrafted.end();

    for (Channel ch : cfg.channels) {
      if (handcrafted.empty()) break;
      const PatchStore store = build_patch_store(lane, alarms, ch, need_complex);
      for (FeatureKind kind : handcrafted) {
        const int dim = handcrafted_dim(kind);
        Eigen::MatrixXd m(static_cast<int>(alarms.size()), dim);
        parallel_for(alarms.size(), [&](std::size_t i) {
          FeatureVector f;
          switch (kind) {
            case FeatureKind::Raw: f = feat_raw(store.normalized[i]); break;
            case FeatureKind::Sift: f = feat_sift(store.normalized[i]); break;
            case FeatureKind::Lstat: f = feat_lstat(store.normalized[i]); break;
            case FeatureKind::Fft2d: f = feat_fft2d(store.complex_patches[i]); break;
            case FeatureKind::LogGabor: f = feat_loggabor(store.normalized[i], *bank); break;
            default: throw std::logic_error("unexpected feature kind");
          }
          if (f.dim() != dim)
            throw std::logic_error(std::string("dimensionality contract violated for ") +
                                   feature_kind_name(kind));
          for (int j = 0; j < dim; ++j) m(static_cast<int>(i), j) = f.values[j];
        });
        write_feature_matrix(m, kind, paths.feature_mat(spec.lane_id, ch, kind));
        ++matrices;
      }
    }
  }
  std::ostringstream msg;
  msg << "extract: " << matrices << " handcrafted feature matrices -> "
      << paths.features().string();
  return msg.str();
}

// ---------------------------------------------------------------------------
// Fold machinery
// ---------------------------------------------------------------------------

struct Fold {
  int index = 0;
  int test_lane = 0;
  std::vector<int> train_lanes;
};

inline std::vector<Fold> lane_folds(int n_lanes) {
  if (n_lanes < 2) throw std::invalid_argument("lane cross-validation needs >= 2 lanes");
  std::vector<Fold> folds(n_lanes);
  for (int k = 0; k < n_lanes; ++k) {
    folds[k].index = k;
    folds[k].test_lane = k;
    for (int i = 0; i < n_lanes; ++i)
      if (i != k) folds[k].train_lanes.push_back(i);
  }
  return folds;
}

namespace detail {

/// Deterministic subsample of descriptor rows pooled across the training
/// alarms (partial Fisher-Yates on row indices).
inline Eigen::MatrixXd subsample_rows(const Eigen::MatrixXd& m, int max_rows,
                                      std::uint64_t seed) {
  const int n = static_cast<int>(m.rows());
  if (n <= max_rows) return m;
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (int i = 0; i < max_rows; ++i) {
    const int j = i + rng.uniform_int(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_rows);
  std::sort(idx.begin(), idx.end());
  Eigen::MatrixXd out(max_rows, m.cols());
  for (int i = 0; i < max_rows; ++i) out.row(i) = m.row(idx[i]);
  return out;
}

}  // namespace detail

/// Everything `train` fits for one (fold, channel, descriptor kind).
struct FoldCodebooks {
  std::optional<BovDictionary> bov;
  std::optional<GmmCodebook> gmm;
};

/// Learned-feature encoding of one patch list under fold codebooks.
inline Eigen::MatrixXd encode_learned(const std::vector<NormalizedPatch>& patches,
                                      FeatureKind kind, const BovDictionary* bov,
                                      const GmmCodebook* gmm, const EncoderConfig& enc) {
  const FeatureKind desc_kind = descriptor_kind_of(kind);
  const int cells = enc.pool_grid * enc.pool_grid;
  const int dim = is_bov(kind) ? cells * enc.k
                               : cells * 2 * enc.k *
                                     (desc_kind == FeatureKind::Raw
                                          ? enc.dense.raw_window * enc.dense.raw_window
                                          : 128);
  Eigen::MatrixXd m(static_cast<int>(patches.size()), dim);
  FvOptions fv_options;
  fv_options.improved_normalization = enc.fv_improved_normalization;
  parallel_for(patches.size(), [&](std::size_t i) {
    const DescriptorSet desc = dense_descriptors(patches[i], desc_kind, enc.dense);
    const FeatureVector f = is_bov(kind)
                                ? bov_encode(desc, *bov, enc.pool_grid)
                                : fv_encode(desc, *gmm, enc.pool_grid, fv_options);
    if (f.dim() != dim)
      throw std::logic_error(std::string("dimensionality contract violated for ") +
                             feature_kind_name(kind));
    for (int j = 0; j < dim; ++j) m(static_cast<int>(i), j) = f.values[j];
  });
  return m;
}

// ---------------------------------------------------------------------------
// Stage: train
// ---------------------------------------------------------------------------

inline std::string run_train(const ExperimentConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.models());
  fs::create_directories(paths.features());
  const std::vector<Fold> folds = lane_folds(static_cast<int>(cfg.lanes.size()));

  // Descriptor kinds needed by the learned features in the config, and which
  // codebook families each kind requires.
  std::set<FeatureKind> desc_kinds;
  std::map<FeatureKind, std::pair<bool, bool>> wants;  // kind -> (bov, fv)
  for (FeatureKind k : cfg.features) {
    if (!is_learned(k)) continue;
    const FeatureKind dk = descriptor_kind_of(k);
    desc_kinds.insert(dk);
    (is_bov(k) ? wants[dk].first : wants[dk].second) = true;
  }

  int models_written = 0;
  for (const Fold& fold : folds) {
    // Alarm tables and labels for the training lanes.
    std::vector<AlarmTable> train_tables;
    for (int li : fold.train_lanes)
      train_tables.push_back(
          load_alarm_table(paths, cfg.lanes[li].lane_id, cfg.evaluation.halo_m));
    std::size_t n_train = 0;
    int n_hits = 0;
    for (const auto& t : train_tables) {
      n_train += t.alarms.size();
      for (char h : t.is_hit) n_hits += h;
    }
    if (n_hits == 0)
      throw std::runtime_error("train: fold " + std::to_string(fold.index) +
                               " has no target-labeled alarms (fold without targets)");
    Eigen::VectorXd y_train(static_cast<int>(n_train));
    {
      int r = 0;
      for (const auto& t : train_tables)
        for (char h : t.is_hit) y_train[r++] = h ? 1.0 : -1.0;
    }

    for (Channel ch : cfg.channels) {
      // Patches for learned features, keyed by train-lane order.
      std::vector<std::vector<NormalizedPatch>> lane_patches(fold.train_lanes.size());
      if (!desc_kinds.empty()) {
        for (std::size_t t = 0; t < fold.train_lanes.size(); ++t) {
          const LaneSpec& spec = cfg.lanes[fold.train_lanes[t]];
          const fs::path lane_path = paths.lane(spec.lane_id);
          if (!fs::exists(lane_path))
            throw IoError("missing lane: " + lane_path.string() + " (run generate first)");
          const Lane lane = read_lane(lane_path.string());
          lane_patches[t] =
              build_patch_store(lane, train_tables[t].alarms, ch, false).normalized;
        }
      }

      // Codebooks per descriptor kind, then learned train features.
      std::map<FeatureKind, FoldCodebooks> codebooks;
      for (FeatureKind desc_kind : desc_kinds) {
        // Pool descriptors across training alarms.
        std::vector<Eigen::MatrixXd> blocks;
        std::size_t total_rows = 0;
        for (const auto& patches : lane_patches)
          for (const auto& p : patches) {
            blocks.push_back(dense_descriptors(p, desc_kind, cfg.encoder.dense).descriptors);
            total_rows += blocks.back().rows();
          }
        if (blocks.empty())
          throw std::runtime_error("train: no alarms to fit codebooks on in fold " +
                                   std::to_string(fold.index));
        Eigen::MatrixXd pooled(static_cast<int>(total_rows), blocks.front().cols());
        {
          int r = 0;
          for (const auto& b : blocks) {
            pooled.middleRows(r, static_cast<int>(b.rows())) = b;
            r += static_cast<int>(b.rows());
          }
        }
        const std::uint64_t kind_tag = static_cast<std::uint64_t>(desc_kind) * 131 +
                                       static_cast<std::uint64_t>(ch) * 17 +
                                       static_cast<std::uint64_t>(fold.index);
        const Eigen::MatrixXd fit_sample = detail::subsample_rows(
            pooled, cfg.encoder.fit_max_descriptors, mix_seed(cfg.seed, 0x5a371e, kind_tag));

        FoldCodebooks books;
        const auto [want_bov, want_fv] = wants[desc_kind];
        if (want_bov) {
          BovOptions opt;
          opt.k = cfg.encoder.k;
          opt.whiten = cfg.encoder.bov_whiten;
          opt.zca_eps_rel = cfg.encoder.zca_eps_rel;
          BovDictionary dict =
              spherical_kmeans(fit_sample, opt, mix_seed(cfg.seed, 0xb0b, kind_tag));
          dict.descriptor_kind = desc_kind;
          write_bov_dictionary(
              dict, paths
                        .codebook(fold.index, ch,
                                  std::string("bov_") + feature_kind_name(desc_kind))
                        .string());
          books.bov = std::move(dict);
        }
        if (want_fv) {
          GmmOptions opt;
          opt.k = cfg.encoder.k;
          GmmCodebook gmm = gmm_fit(fit_sample, opt, mix_seed(cfg.seed, 0x6e6e, kind_tag));
          gmm.descriptor_kind = desc_kind;
          write_gmm_codebook(
              gmm, paths
                       .codebook(fold.index, ch,
                                 std::string("gmm_") + feature_kind_name(desc_kind))
                       .string());
          books.gmm = std::move(gmm);
        }
        codebooks[desc_kind] = std::move(books);
      }

      // Per-feature training matrices (handcrafted loaded, learned encoded),
      // then classifier fits.
      for (FeatureKind feat : cfg.features) {
        Eigen::MatrixXd x_train;
        if (is_learned(feat)) {
          const FoldCodebooks& books = codebooks.at(descriptor_kind_of(feat));
          std::vector<Eigen::MatrixXd> lane_mats;
          for (std::size_t t = 0; t < fold.train_lanes.size(); ++t) {
            Eigen::MatrixXd m = encode_learned(
                lane_patches[t], feat, books.bov ? &*books.bov : nullptr,
                books.gmm ? &*books.gmm : nullptr, cfg.encoder);
            write_feature_matrix(m, feat,
                                 paths.fold_feature_mat(fold.index,
                                                        cfg.lanes[fold.train_lanes[t]].lane_id,
                                                        ch, feat));
            lane_mats.push_back(std::move(m));
          }
          x_train.resize(static_cast<int>(n_train), lane_mats.front().cols());
          int r = 0;
          for (const auto& m : lane_mats) {
            x_train.middleRows(r, static_cast<int>(m.rows())) = m;
            r += static_cast<int>(m.rows());
          }
        } else {
          std::vector<Eigen::MatrixXd> lane_mats;
          Eigen::Index cols = 0;
          for (int li : fold.train_lanes) {
            lane_mats.push_back(
                read_feature_matrix(paths.feature_mat(cfg.lanes[li].lane_id, ch, feat)));
            cols = lane_mats.back().cols();
          }
          x_train.resize(static_cast<int>(n_train), cols);
          int r = 0;
          for (const auto& m : lane_mats) {
            x_train.middleRows(r, static_cast<int>(m.rows())) = m;
            r += static_cast<int>(m.rows());
          }
        }

        const StandardizationStats stats = standardize_fit(x_train);
        const Eigen::MatrixXd x_std = standardize_apply(stats, x_train);
        for (ClassifierKind clf : cfg.classifiers) {
          const fs::path model_path = paths.model(fold.index, ch, feat, clf);
          if (clf == ClassifierKind::Plsda) {
            const int comps =
                std::min({cfg.classifier_params.plsda_components,
                          static_cast<int>(x_std.rows()) - 1, static_cast<int>(x_std.cols())});
            const PlsdaModel model = plsda_fit(x_std, y_train, comps);
            write_plsda_model(model, stats, model_path.string());
          } else {
            const SvmKind kind =
                clf == ClassifierKind::SvmLinear ? SvmKind::Linear : SvmKind::Rbf;
            const SvmModel model =
                svm_fit(x_std, y_train, kind, cfg.classifier_params.svm_c,
                        cfg.classifier_params.svm_gamma, cfg.classifier_params.svm_tol);
            write_svm_model(model, stats, model_path.string());
          }
          ++models_written;
        }
      }
    }
  }
  std::ostringstream msg;
  msg << "train: " << models_written << " classifier models across " << folds.size()
      << " folds -> " << paths.models().string();
  return msg.str();
}

// ---------------------------------------------------------------------------
// Stage: evaluate
// ---------------------------------------------------------------------------

namespace detail {

/// Assembles the pooled training feature matrix for (fold, channel, feature):
/// handcrafted features from extract artifacts, learned features from the
/// train stage's per-lane fold matrices.
inline Eigen::MatrixXd assemble_train_features(const ExperimentConfig& cfg, const Paths& paths,
                                               const Fold& fold, Channel ch, FeatureKind feat) {
  std::vector<Eigen::MatrixXd> mats;
  std::size_t rows = 0;
  for (int li : fold.train_lanes) {
    const std::string& id = cfg.lanes[li].lane_id;
    const fs::path p = is_learned(feat) ? paths.fold_feature_mat(fold.index, id, ch, feat)
                                        : paths.feature_mat(id, ch, feat);
    mats.push_back(read_feature_matrix(p));
    rows += mats.back().rows();
  }
  Eigen::MatrixXd x(static_cast<int>(rows), mats.front().cols());
  int r = 0;
  for (const auto& m : mats) {
    x.middleRows(r, static_cast<int>(m.rows())) = m;
    r += static_cast<int>(m.rows());
  }
  return x;
}

struct AlgoPooled {
  std::vector<RocCurve> fold_curves;
  std::vector<ScoredAlarm> pooled_scored;             // full-model confidences
  std::vector<std::vector<ScoredAlarm>> trial_scored; // per bootstrap trial
  int pooled_targets = 0;
  double pooled_area = 0.0;
};

inline void write_prediction_csv(const fs::path& path, const std::vector<std::string>& lane_ids,
                                 const std::vector<const AlarmTable*>& tables,
                                 const std::vector<std::string>& algo_labels,
                                 const Eigen::MatrixXd& columns) {
  CsvTable t;
  t.header = {"lane_id", "easting_m", "northing_m", "is_hit"};
  for (const auto& label : algo_labels) t.header.push_back(label);
  int r = 0;
  for (std::size_t ti = 0; ti < tables.size(); ++ti) {
    const AlarmTable& table = *tables[ti];
    for (std::size_t i = 0; i < table.alarms.size(); ++i, ++r) {
      std::vector<std::string> row = {lane_ids[ti], format_double(table.alarms[i].utm.easting),
                                      format_double(table.alarms[i].utm.northing),
                                      table.is_hit[i] ? "1" : "0"};
      for (int c = 0; c < columns.cols(); ++c) row.push_back(format_double(columns(r, c)));
      t.rows.push_back(std::move(row));
    }
  }
  write_csv(path.string(), t);
}

}  // namespace detail

inline std::string run_evaluate(const ExperimentConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.results());
  const std::vector<Fold> folds = lane_folds(static_cast<int>(cfg.lanes.size()));

  std::vector<std::string> algo_labels;
  std::vector<std::tuple<Channel, FeatureKind, ClassifierKind>> algos;
  for (Channel ch : cfg.channels)
    for (FeatureKind feat : cfg.features)
      for (ClassifierKind clf : cfg.classifiers) {
        algos.emplace_back(ch, feat, clf);
        algo_labels.push_back(algo_label(ch, feat, clf));
      }

  CsvTable results;
  results.header = {"fold",       "polarization", "feature",    "classifier",
                    "pauc_mean",  "pauc_ci_lo",   "pauc_ci_hi"};
  std::vector<detail::AlgoPooled> pooled(algos.size());
  for (auto& p : pooled) p.trial_scored.resize(cfg.evaluation.n_boot);

  for (const Fold& fold : folds) {
    const LaneSpec& test_spec = cfg.lanes[fold.test_lane];
    AlarmTable test_table = load_alarm_table(paths, test_spec.lane_id, cfg.evaluation.halo_m);
    const int n_test_targets = static_cast<int>(test_table.truth.size());
    if (n_test_targets == 0)
      throw std::runtime_error("evaluate: fold " + std::to_string(fold.index) +
                               " test lane has no targets (fold without targets)");
    const double test_area = realized_area_m2(test_spec);

    std::vector<AlarmTable> train_tables;
    std::vector<const AlarmTable*> train_table_ptrs;
    std::vector<std::string> train_lane_ids;
    for (int li : fold.train_lanes) {
      train_tables.push_back(
          load_alarm_table(paths, cfg.lanes[li].lane_id, cfg.evaluation.halo_m));
      train_lane_ids.push_back(cfg.lanes[li].lane_id);
    }
    for (const auto& t : train_tables) train_table_ptrs.push_back(&t);
    std::size_t n_train = 0;
    for (const auto& t : train_tables) n_train += t.alarms.size();
    Eigen::VectorXd y_train(static_cast<int>(n_train));
    std::vector<int> train_labels(n_train);
    {
      int r = 0;
      for (const auto& t : train_tables)
        for (char h : t.is_hit) {
          y_train[r] = h ? 1.0 : -1.0;
          train_labels[r] = h ? 1 : -1;
          ++r;
        }
    }

    // Test-lane patches per channel (learned features only).
    bool any_learned = false;
    for (FeatureKind k : cfg.features) any_learned |= is_learned(k);
    std::map<int, std::vector<NormalizedPatch>> test_patches;
    if (any_learned) {
      const fs::path lane_path = paths.lane(test_spec.lane_id);
      if (!fs::exists(lane_path))
        throw IoError("missing lane: " + lane_path.string() + " (run generate first)");
      const Lane lane = read_lane(lane_path.string());
      for (Channel ch : cfg.channels)
        test_patches[static_cast<int>(ch)] =
            build_patch_store(lane, test_table.alarms, ch, false).normalized;
    }

    Eigen::MatrixXd train_pred_cols(static_cast<int>(n_train), static_cast<int>(algos.size()));
    Eigen::MatrixXd test_pred_cols(static_cast<int>(test_table.alarms.size()),
                                   static_cast<int>(algos.size()));

    // Codebooks for this fold, loaded lazily per (channel, descriptor kind).
    std::map<std::pair<int, int>, FoldCodebooks> fold_codebooks;
    auto codebooks_for = [&](Channel ch, FeatureKind desc_kind) -> FoldCodebooks& {
      const auto key = std::make_pair(static_cast<int>(ch), static_cast<int>(desc_kind));
      auto it = fold_codebooks.find(key);
      if (it != fold_codebooks.end()) return it->second;
      FoldCodebooks books;
      bool want_bov = false, want_fv = false;
      for (FeatureKind k : cfg.features) {
        if (!is_learned(k) || descriptor_kind_of(k) != desc_kind) continue;
        (is_bov(k) ? want_bov : want_fv) = true;
      }
      if (want_bov) {
        const fs::path p = paths.codebook(
            fold.index, ch, std::string("bov_") + feature_kind_name(desc_kind));
        if (!fs::exists(p))
          throw IoError("missing codebook: " + p.string() + " (run train first)");
        books.bov = read_bov_dictionary(p.string());
      }
      if (want_fv) {
        const fs::path p = paths.codebook(
            fold.index, ch, std::string("gmm_") + feature_kind_name(desc_kind));
        if (!fs::exists(p))
          throw IoError("missing codebook: " + p.string() + " (run train first)");
        books.gmm = read_gmm_codebook(p.string());
      }
      fold_codebooks[key] = std::move(books);
      return fold_codebooks[key];
    };

    int algo_index = -1;
    for (Channel ch : cfg.channels) {
      for (FeatureKind feat : cfg.features) {
        // Feature matrices for this (channel, feature).
        Eigen::MatrixXd x_train =
            detail::assemble_train_features(cfg, paths, fold, ch, feat);
        Eigen::MatrixXd x_test;
        if (is_learned(feat)) {
          const FoldCodebooks& books = codebooks_for(ch, descriptor_kind_of(feat));
          x_test = encode_learned(test_patches.at(static_cast<int>(ch)), feat,
                                  books.bov ? &*books.bov : nullptr,
                                  books.gmm ? &*books.gmm : nullptr, cfg.encoder);
        } else {
          x_test = read_feature_matrix(paths.feature_mat(test_spec.lane_id, ch, feat));
        }

        for (ClassifierKind clf : cfg.classifiers) {
          ++algo_index;
          const int target_offset = pooled[algo_index].pooled_targets;
          const fs::path model_path = paths.model(fold.index, ch, feat, clf);
          if (!fs::exists(model_path))
            throw IoError("missing model: " + model_path.string() + " (run train first)");

          StandardizationStats stats;
          Eigen::VectorXd test_scores, train_scores;
          Eigen::MatrixXd x_train_std, x_test_std;
          if (clf == ClassifierKind::Plsda) {
            PlsdaModel model;
            read_plsda_model(model_path.string(), model, stats);
            x_train_std = standardize_apply(stats, x_train);
            x_test_std = standardize_apply(stats, x_test);
            test_scores = plsda_predict(model, x_test_std);
            train_scores = plsda_predict(model, x_train_std);
          } else {
            SvmModel model;
            read_svm_model(model_path.string(), model, stats);
            x_train_std = standardize_apply(stats, x_train);
            x_test_std = standardize_apply(stats, x_test);
            test_scores = svm_predict(model, x_test_std);
            train_scores = svm_predict(model, x_train_std);
          }
          test_pred_cols.col(algo_index) = test_scores;
          train_pred_cols.col(algo_index) = train_scores;

          // Fold ROC/pAUC with full-model confidences.
          std::vector<ScoredAlarm> fold_scored = test_table.scored;
          for (std::size_t i = 0; i < fold_scored.size(); ++i)
            fold_scored[i].alarm.confidence = test_scores[static_cast<Eigen::Index>(i)];
          const RocCurve fold_roc = roc_curve(fold_scored, n_test_targets, test_area);

          // Bootstrap refits. Standardization stays the full-fold transform;
          // kernels are cached so RBF resamples reuse pairwise entries.
          Eigen::MatrixXd train_kernel, test_kernel;
          if (clf != ClassifierKind::Plsda) {
            const double gamma = cfg.classifier_params.svm_gamma > 0.0
                                     ? cfg.classifier_params.svm_gamma
                                     : 1.0 / static_cast<double>(x_train_std.cols());
            if (clf == ClassifierKind::SvmLinear) {
              train_kernel = x_train_std * x_train_std.transpose();
              test_kernel = x_test_std * x_train_std.transpose();
            } else {
              train_kernel = rbf_kernel(x_train_std, x_train_std, gamma);
              test_kernel = rbf_kernel(x_test_std, x_train_std, gamma);
            }
          }

          int trial_index = 0;
          auto fit_and_score = [&](const std::vector<int>& idx) {
            Eigen::VectorXd yb(static_cast<int>(idx.size()));
            for (std::size_t i = 0; i < idx.size(); ++i) yb[static_cast<int>(i)] = y_train[idx[i]];
            Eigen::VectorXd trial_scores;
            if (clf == ClassifierKind::Plsda) {
              Eigen::MatrixXd xb(static_cast<int>(idx.size()), x_train_std.cols());
              for (std::size_t i = 0; i < idx.size(); ++i)
                xb.row(static_cast<int>(i)) = x_train_std.row(idx[i]);
              const int comps = std::min({cfg.classifier_params.plsda_components,
                                          static_cast<int>(idx.size()) - 1,
                                          static_cast<int>(xb.cols())});
              const PlsdaModel mb = plsda_fit(xb, yb, comps);
              trial_scores = plsda_predict(mb, x_test_std);
            } else {
              Eigen::MatrixXd kb(static_cast<int>(idx.size()), static_cast<int>(idx.size()));
              for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < idx.size(); ++j)
                  kb(static_cast<int>(i), static_cast<int>(j)) = train_kernel(idx[i], idx[j]);
              const SvmDualSolution sol =
                  svm_solve_dual(kb, yb, cfg.classifier_params.svm_c,
                                 cfg.classifier_params.svm_tol);
              trial_scores = Eigen::VectorXd::Constant(test_kernel.rows(), sol.bias);
              for (std::size_t i = 0; i < idx.size(); ++i)
                if (sol.alpha[static_cast<int>(i)] > 0.0)
                  trial_scores += sol.alpha[static_cast<int>(i)] * yb[static_cast<int>(i)] *
                                  test_kernel.col(idx[i]);
            }
            std::vector<ScoredAlarm> trial_scored = test_table.scored;
            for (std::size_t i = 0; i < trial_scored.size(); ++i)
              trial_scored[i].alarm.confidence = trial_scores[static_cast<Eigen::Index>(i)];
            auto& pooled_trial = pooled[algo_index].trial_scored[trial_index];
            for (ScoredAlarm s : trial_scored) {
              if (s.target_index >= 0) s.target_index += target_offset;
              pooled_trial.push_back(s);
            }
            ++trial_index;
            return pauc(roc_curve(trial_scored, n_test_targets, test_area),
                        cfg.evaluation.far_max);
          };
          const PaucScore score = bootstrap_eval(
              train_labels, cfg.evaluation.n_boot,
              mix_seed(cfg.seed, 0xb007, static_cast<std::uint64_t>(fold.index) * 1009 +
                                             static_cast<std::uint64_t>(algo_index)),
              fit_and_score);

          results.rows.push_back({std::to_string(fold.index), channel_name(ch),
                                  feature_kind_name(feat), classifier_kind_name(clf),
                                  format_double(score.value), format_double(score.ci_lo),
                                  format_double(score.ci_hi)});

          pooled[algo_index].fold_curves.push_back(fold_roc);
          for (ScoredAlarm s : fold_scored) {
            if (s.target_index >= 0) s.target_index += target_offset;
            pooled[algo_index].pooled_scored.push_back(s);
          }
          pooled[algo_index].pooled_targets += n_test_targets;
          pooled[algo_index].pooled_area += test_area;
        }
      }
    }

    detail::write_prediction_csv(paths.predictions_csv(fold.index, "train"), train_lane_ids,
                                 train_table_ptrs, algo_labels, train_pred_cols);
    detail::write_prediction_csv(paths.predictions_csv(fold.index, "test"),
                                 {test_spec.lane_id}, {&test_table}, algo_labels,
                                 test_pred_cols);
  }

  // Prescreener baseline: pooled over all lanes with the raw prescreener
  // confidences; ROC CSV vertically averaged over per-lane curves.
  {
    std::vector<ScoredAlarm> ps_scored;
    std::vector<RocCurve> ps_curves;
    int ps_targets = 0;
    double ps_area = 0.0;
    for (const LaneSpec& spec : cfg.lanes) {
      const AlarmTable table = load_alarm_table(paths, spec.lane_id, cfg.evaluation.halo_m);
      const double area = realized_area_m2(spec);
      if (!table.truth.empty())
        ps_curves.push_back(
            roc_curve(table.scored, static_cast<int>(table.truth.size()), area));
      for (ScoredAlarm s : table.scored) {
        if (s.target_index >= 0) s.target_index += ps_targets;
        ps_scored.push_back(s);
      }
      ps_targets += static_cast<int>(table.truth.size());
      ps_area += area;
    }
    if (ps_targets > 0) {
      const RocCurve ps_roc = roc_curve(ps_scored, ps_targets, ps_area);
      const double ps_pauc = pauc(ps_roc, cfg.evaluation.far_max);
      results.rows.push_back({"pooled", "VV", "prescreener", "rx",
                              format_double(ps_pauc), format_double(ps_pauc),
                              format_double(ps_pauc)});
      const MeanRocCurve mean_roc =
          vertical_average(ps_curves, cfg.evaluation.far_max, cfg.evaluation.roc_grid_step);
      CsvTable roc_table;
      roc_table.header = {"far", "pd", "ci_lo", "ci_hi"};
      for (std::size_t i = 0; i < mean_roc.fars.size(); ++i)
        roc_table.rows.push_back(
            {format_double(mean_roc.fars[i]), format_double(mean_roc.mean_pd[i]),
             format_double(mean_roc.ci_lo[i]), format_double(mean_roc.ci_hi[i])});
      write_csv(paths.roc_csv("prescreener").string(), roc_table);
    }
  }

  // Pooled rows per algorithm: full-model confidences pooled across folds,
  // bootstrap CI from pooling each trial's fold predictions.
  for (std::size_t a = 0; a < algos.size(); ++a) {
    detail::AlgoPooled& agg = pooled[a];
    const double full_pauc =
        pauc(roc_curve(agg.pooled_scored, agg.pooled_targets, agg.pooled_area),
             cfg.evaluation.far_max);
    std::vector<double> trial_paucs;
    for (const auto& trial : agg.trial_scored)
      trial_paucs.push_back(pauc(roc_curve(trial, agg.pooled_targets, agg.pooled_area),
                                 cfg.evaluation.far_max));
    double mean = 0.0;
    for (double v : trial_paucs) mean += v;
    mean /= static_cast<double>(trial_paucs.size());
    double var = 0.0;
    for (double v : trial_paucs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(trial_paucs.size()) - 1.0;
    // Bootstrap half-width, centered on the full-model pooled estimate.
    const double half = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(trial_paucs.size()));

    const auto& [ch, feat, clf] = algos[a];
    results.rows.push_back({"pooled", channel_name(ch), feature_kind_name(feat),
                            classifier_kind_name(clf), format_double(full_pauc),
                            format_double(full_pauc - half), format_double(full_pauc + half)});

    const MeanRocCurve mean_roc =
        vertical_average(agg.fold_curves, cfg.evaluation.far_max, cfg.evaluation.roc_grid_step);
    CsvTable roc_table;
    roc_table.header = {"far", "pd", "ci_lo", "ci_hi"};
    for (std::size_t i = 0; i < mean_roc.fars.size(); ++i)
      roc_table.rows.push_back(
          {format_double(mean_roc.fars[i]), format_double(mean_roc.mean_pd[i]),
           format_double(mean_roc.ci_lo[i]), format_double(mean_roc.ci_hi[i])});
    write_csv(paths.roc_csv(sanitize(algo_labels[a])).string(), roc_table);
  }

  write_csv(paths.results_csv().string(), results);
  std::ostringstream msg;
  msg << "evaluate: " << results.rows.size() << " result rows -> "
      << paths.results_csv().string();
  return msg.str();
}

// ---------------------------------------------------------------------------
// Stage: fuse
// ---------------------------------------------------------------------------

namespace detail {

struct FoldPredictions {
  PredictionMatrix preds;
  std::vector<char> is_hit;
  std::vector<ScoredAlarm> scored;  // geometry-scored against the lane truth
  int n_targets = 0;
  double area = 0.0;
};

inline FoldPredictions load_prediction_csv(const ExperimentConfig& cfg, const Paths& paths,
                                           const fs::path& path) {
  if (!fs::exists(path))
    throw IoError("missing predictions: " + path.string() + " (run evaluate first)");
  const CsvTable t = read_csv(path.string());
  if (t.header.size() < 5) throw FormatError("prediction CSV too narrow: " + path.string());
  FoldPredictions out;
  const int n_algos = static_cast<int>(t.header.size()) - 4;
  out.preds.labels.assign(t.header.begin() + 4, t.header.end());
  out.preds.values.resize(static_cast<int>(t.rows.size()), n_algos);
  std::map<std::string, std::vector<int>> lane_rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size())
      throw FormatError("ragged prediction row in " + path.string());
    out.is_hit.push_back(row[3] == "1");
    for (int c = 0; c < n_algos; ++c)
      out.preds.values(static_cast<int>(r), c) = std::stod(row[4 + c]);
    lane_rows[row[0]].push_back(static_cast<int>(r));
  }
  // Rebuild truth-keyed scoring from the lanes referenced by the file so
  // fused confidences can be ROC-scored per target.
  out.scored.resize(t.rows.size());
  for (const auto& [lane_id, rows] : lane_rows) {
    auto spec_it = std::find_if(cfg.lanes.begin(), cfg.lanes.end(),
                                [&](const LaneSpec& s) { return s.lane_id == lane_id; });
    if (spec_it == cfg.lanes.end())
      throw FormatError("prediction CSV references unknown lane " + lane_id);
    AlarmTable table = load_alarm_table(paths, lane_id, cfg.evaluation.halo_m);
    if (table.alarms.size() != rows.size())
      throw FormatError("prediction CSV row count disagrees with alarms for lane " + lane_id);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ScoredAlarm s = table.scored[i];
      if (s.target_index >= 0) s.target_index += out.n_targets;
      out.scored[rows[i]] = s;
    }
    out.n_targets += static_cast<int>(table.truth.size());
    out.area += realized_area_m2(*spec_it);
  }
  return out;
}

}  // namespace detail

inline std::string run_fuse(const ExperimentConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.results());
  fs::create_directories(paths.figures());
  const std::vector<Fold> folds = lane_folds(static_cast<int>(cfg.lanes.size()));

  std::vector<detail::FoldPredictions> train_preds, test_preds;
  for (const Fold& fold : folds) {
    train_preds.push_back(
        detail::load_prediction_csv(cfg, paths, paths.predictions_csv(fold.index, "train")));
    test_preds.push_back(
        detail::load_prediction_csv(cfg, paths, paths.predictions_csv(fold.index, "test")));
  }

  SfsOptions options;
  options.max_nf = cfg.fusion.max_nf;
  options.inner_folds = cfg.fusion.inner_folds;
  options.auto_stop = cfg.fusion.auto_stop;
  options.plsda_components = cfg.fusion.plsda_components;
  options.far_max = cfg.evaluation.far_max;

  // Final fused models per fold (configured auto-stop policy).
  std::vector<ScoredAlarm> fused_pooled;
  std::vector<RocCurve> fused_curves;
  int fused_targets = 0;
  double fused_area = 0.0;
  std::size_t selected_total = 0;
  for (const Fold& fold : folds) {
    const FusionModel model =
        sfs_select(train_preds[fold.index].preds, train_preds[fold.index].is_hit,
                   train_preds[fold.index].area, options,
                   mix_seed(cfg.seed, 0xf00d, static_cast<std::uint64_t>(fold.index)));
    write_fusion_trace_csv(
        model,
        (paths.results() / ("fusion_steps_fold" + std::to_string(fold.index) + "." +
                            paths.fuse_tag + ".csv"))
            .string());
    selected_total += model.selected.size();

    const Eigen::VectorXd fused = fuse_predict(model, test_preds[fold.index].preds);
    std::vector<ScoredAlarm> scored = test_preds[fold.index].scored;
    for (std::size_t i = 0; i < scored.size(); ++i) {
      scored[i].alarm.confidence = fused[static_cast<Eigen::Index>(i)];
      scored[i].alarm.source = AlarmSource::Fusion;
    }
    fused_curves.push_back(
        roc_curve(scored, test_preds[fold.index].n_targets, test_preds[fold.index].area));
    for (ScoredAlarm s : scored) {
      if (s.target_index >= 0) s.target_index += fused_targets;
      fused_pooled.push_back(s);
    }
    fused_targets += test_preds[fold.index].n_targets;
    fused_area += test_preds[fold.index].area;
  }
  const double fused_pauc =
      pauc(roc_curve(fused_pooled, fused_targets, fused_area), cfg.evaluation.far_max);
  {
    const MeanRocCurve mean_roc =
        vertical_average(fused_curves, cfg.evaluation.far_max, cfg.evaluation.roc_grid_step);
    CsvTable roc_table;
    roc_table.header = {"far", "pd", "ci_lo", "ci_hi"};
    for (std::size_t i = 0; i < mean_roc.fars.size(); ++i)
      roc_table.rows.push_back(
          {format_double(mean_roc.fars[i]), format_double(mean_roc.mean_pd[i]),
           format_double(mean_roc.ci_lo[i]), format_double(mean_roc.ci_hi[i])});
    write_csv(paths.roc_csv("fused").string(), roc_table);

    CsvTable summary;
    summary.header = {"quantity", "value"};
    summary.rows.push_back({"fused_pooled_pauc", format_double(fused_pauc)});
    summary.rows.push_back({"mean_selected_nf",
                            format_double(static_cast<double>(selected_total) /
                                          static_cast<double>(folds.size()))});
    write_csv((paths.results() / ("fusion_result." + paths.fuse_tag + ".csv")).string(),
              summary);
  }

  // N_f sweep: repeated selection runs (fresh inner folds per repetition),
  // test pAUC of each selection prefix, pooled over folds.
  const int n_cols = train_preds.front().preds.cols();
  const int sweep_max = std::min(cfg.fusion.sweep_max_nf, n_cols);
  CsvTable sweep;
  sweep.header = {"repetition", "n_f", "pauc"};
  std::vector<std::vector<double>> by_nf(static_cast<std::size_t>(sweep_max));
  for (int rep = 0; rep < cfg.fusion.repetitions; ++rep) {
    std::vector<FusionModel> selections;
    for (const Fold& fold : folds) {
      SfsOptions sweep_options = options;
      sweep_options.auto_stop = false;
      sweep_options.max_nf = sweep_max;
      selections.push_back(sfs_select(
          train_preds[fold.index].preds, train_preds[fold.index].is_hit,
          train_preds[fold.index].area, sweep_options,
          mix_seed(cfg.seed, 0x5eed,
                   static_cast<std::uint64_t>(rep) * 131 +
                       static_cast<std::uint64_t>(fold.index))));
    }
    for (int nf = 1; nf <= sweep_max; ++nf) {
      std::vector<ScoredAlarm> pooled_scored;
      int pooled_targets = 0;
      double pooled_area = 0.0;
      for (const Fold& fold : folds) {
        const auto& selection = selections[fold.index].selected;
        if (static_cast<int>(selection.size()) < nf) continue;
        const std::vector<int> prefix(selection.begin(), selection.begin() + nf);
        const FusionModel stage =
            fit_fusion_stage(train_preds[fold.index].preds, train_preds[fold.index].is_hit,
                             prefix, cfg.fusion.plsda_components);
        const Eigen::VectorXd fused_scores = fuse_predict(stage, test_preds[fold.index].preds);
        for (std::size_t i = 0; i < test_preds[fold.index].scored.size(); ++i) {
          ScoredAlarm s = test_preds[fold.index].scored[i];
          s.alarm.confidence = fused_scores[static_cast<Eigen::Index>(i)];
          if (s.target_index >= 0) s.target_index += pooled_targets;
          pooled_scored.push_back(s);
        }
        pooled_targets += test_preds[fold.index].n_targets;
        pooled_area += test_preds[fold.index].area;
      }
      const double value =
          pauc(roc_curve(pooled_scored, pooled_targets, pooled_area), cfg.evaluation.far_max);
      sweep.rows.push_back({std::to_string(rep), std::to_string(nf), format_double(value)});
      by_nf[static_cast<std::size_t>(nf - 1)].push_back(value);
    }
  }
  write_csv((paths.results() / ("fusion_sweep." + paths.fuse_tag + ".csv")).string(), sweep);

  CsvTable sweep_summary;
  sweep_summary.header = {"n_f", "pauc_mean", "pauc_ci_lo", "pauc_ci_hi"};
  PlotSeries sweep_series;
  sweep_series.name = "SFS FUSION";
  for (int nf = 1; nf <= sweep_max; ++nf) {
    const auto& vals = by_nf[static_cast<std::size_t>(nf - 1)];
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var = vals.size() > 1 ? var / (static_cast<double>(vals.size()) - 1.0) : 0.0;
    const double half = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(vals.size()));
    sweep_summary.rows.push_back({std::to_string(nf), format_double(mean),
                                  format_double(mean - half), format_double(mean + half)});
    sweep_series.x.push_back(nf);
    sweep_series.y.push_back(mean);
    sweep_series.band_lo.push_back(mean - half);
    sweep_series.band_hi.push_back(mean + half);
  }
  write_csv((paths.results() / ("fusion_sweep_summary." + paths.fuse_tag + ".csv")).string(),
            sweep_summary);
  plot_xy_png({sweep_series}, 1.0, static_cast<double>(std::max(sweep_max, 2)), 0.0, 1.0,
              "N F SELECTED", "PAUC",
              (paths.figures() / ("fusion_sweep." + paths.fuse_tag + ".png")).string());

  // Fig.11-style ROC figure: prescreener, best single algorithm, fusion.
  {
    std::vector<PlotSeries> series;
    auto roc_series = [&](const fs::path& p, const std::string& name) {
      if (!fs::exists(p)) return;
      const CsvTable t = read_csv(p.string());
      PlotSeries ps;
      ps.name = name;
      for (const auto& row : t.rows) {
        ps.x.push_back(std::stod(row[0]));
        ps.y.push_back(std::stod(row[1]));
        ps.band_lo.push_back(std::stod(row[2]));
        ps.band_hi.push_back(std::stod(row[3]));
      }
      series.push_back(std::move(ps));
    };
    roc_series(paths.roc_csv("prescreener"), "PS");
    // Best pooled algorithm from the evaluation results.
    if (fs::exists(paths.results_csv())) {
      const CsvTable results = read_csv(paths.results_csv().string());
      double best = -1.0;
      std::string best_label;
      for (const auto& row : results.rows) {
        if (row[0] != "pooled" || row[2] == "prescreener") continue;
        const double v = std::stod(row[4]);
        if (v > best) {
          best = v;
          best_label = row[1] + "/" + row[2] + "/" + row[3];
        }
      }
      if (!best_label.empty())
        roc_series(paths.roc_csv(sanitize(best_label)), "BEST: " + sanitize(best_label));
    }
    roc_series(paths.roc_csv("fused"), "SFS");
    plot_roc_png(series, cfg.evaluation.far_max,
                 (paths.figures() / ("roc_fusion." + paths.fuse_tag + ".png")).string());
  }

  std::ostringstream msg;
  msg << "fuse: pooled fused pAUC " << format_double(fused_pauc) << ", mean N_f "
      << format_double(static_cast<double>(selected_total) / static_cast<double>(folds.size()))
      << " -> " << paths.results().string();
  return msg.str();
}

// ---------------------------------------------------------------------------
// Stage: confmap
// ---------------------------------------------------------------------------

inline std::string run_confmap(const ExperimentConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.figures());
  const std::vector<Fold> folds = lane_folds(static_cast<int>(cfg.lanes.size()));

  const Channel ch = cfg.confmap.channel;
  if (std::find(cfg.channels.begin(), cfg.channels.end(), ch) == cfg.channels.end())
    throw std::invalid_argument("confmap: configured channel is not in channels");
  if (std::find(cfg.features.begin(), cfg.features.end(), FeatureKind::BovRaw) ==
      cfg.features.end())
    throw std::invalid_argument("confmap: requires bov_raw in features");
  if (std::find(cfg.classifiers.begin(), cfg.classifiers.end(), ClassifierKind::Plsda) ==
      cfg.classifiers.end())
    throw std::invalid_argument("confmap: requires plsda in classifiers");

  CsvTable index;
  index.header = {"fold", "lane_id", "alarm_rank", "easting_m", "northing_m",
                  "confidence", "confidence_percentile", "map_png", "map_csv"};
  const std::string label = algo_label(ch, FeatureKind::BovRaw, ClassifierKind::Plsda);
  int maps_written = 0;

  for (const Fold& fold : folds) {
    const fs::path dict_path = paths.codebook(fold.index, ch, "bov_raw");
    if (!fs::exists(dict_path))
      throw IoError("missing codebook: " + dict_path.string() + " (run train first)");
    const BovDictionary dict = read_bov_dictionary(dict_path.string());

    const fs::path model_path =
        paths.model(fold.index, ch, FeatureKind::BovRaw, ClassifierKind::Plsda);
    if (!fs::exists(model_path))
      throw IoError("missing model: " + model_path.string() + " (run train first)");
    PlsdaModel model;
    StandardizationStats stats;
    read_plsda_model(model_path.string(), model, stats);
    // Fold the standardization scale into the weights so maps are computed in
    // raw encoding space (mean offsets and the intercept only shift the map).
    std::vector<double> weights(static_cast<std::size_t>(model.coefficients.size()));
    for (Eigen::Index i = 0; i < model.coefficients.size(); ++i)
      weights[static_cast<std::size_t>(i)] = model.coefficients[i] / stats.std[i];

    const detail::FoldPredictions preds =
        detail::load_prediction_csv(cfg, paths, paths.predictions_csv(fold.index, "test"));
    const auto label_it =
        std::find(preds.preds.labels.begin(), preds.preds.labels.end(), label);
    if (label_it == preds.preds.labels.end())
      throw std::invalid_argument("confmap: prediction column '" + label +
                                  "' not found (re-run evaluate)");
    const int col = static_cast<int>(label_it - preds.preds.labels.begin());
    const Eigen::VectorXd scores = preds.preds.values.col(col);

    const LaneSpec& test_spec = cfg.lanes[fold.test_lane];
    const AlarmTable table = load_alarm_table(paths, test_spec.lane_id, cfg.evaluation.halo_m);
    const Lane lane = read_lane(paths.lane(test_spec.lane_id).string());

    std::vector<int> order(table.alarms.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return scores[a] > scores[b]; });
    const int n_maps = std::min<int>(cfg.confmap.top_alarms, static_cast<int>(order.size()));

    // Dictionary atoms figure for this fold.
    const DictionaryImage dict_img = render_dictionary(dict);
    write_png_gray(dict_img.image,
                   (paths.figures() / ("dictionary_fold" + std::to_string(fold.index) + "_" +
                                       channel_name(ch) + "." + paths.train_tag + ".png"))
                       .string());

    for (int rank = 0; rank < n_maps; ++rank) {
      const int i = order[rank];
      const ComplexPatch patch = extract_patch(lane, table.alarms[i].utm, ch);
      const NormalizedPatch norm = normalize_patch(patch);
      const ConfidenceMap map = confidence_map(norm, dict, weights, cfg.encoder.dense);

      const std::string stem = "confmap_fold" + std::to_string(fold.index) + "_" +
                               test_spec.lane_id + "_rank" + std::to_string(rank) + "." +
                               paths.train_tag;
      const fs::path png_path = paths.figures() / (stem + ".png");
      const fs::path csv_path = paths.figures() / (stem + ".csv");
      const fs::path mag_path = paths.figures() / (stem + ".magnitude.png");
      write_png_gray(minmax_stretch(map.values), png_path.string());
      write_png_gray(minmax_stretch(patch_magnitude(patch)), mag_path.string());

      CsvTable map_csv;
      for (int c = 0; c < map.values.cols(); ++c)
        map_csv.header.push_back("c" + std::to_string(c));
      for (int r = 0; r < map.values.rows(); ++r) {
        std::vector<std::string> row;
        for (int c = 0; c < map.values.cols(); ++c)
          row.push_back(format_double(map.values(r, c)));
        map_csv.rows.push_back(std::move(row));
      }
      write_csv(csv_path.string(), map_csv);

      int below = 0;
      for (Eigen::Index s = 0; s < scores.size(); ++s)
        if (scores[s] < scores[i]) ++below;
      const double percentile =
          scores.size() > 1
              ? 100.0 * below / static_cast<double>(scores.size() - 1)
              : 100.0;
      index.rows.push_back({std::to_string(fold.index), test_spec.lane_id,
                            std::to_string(rank),
                            format_double(table.alarms[i].utm.easting),
                            format_double(table.alarms[i].utm.northing),
                            format_double(scores[i]), format_double(percentile),
                            png_path.filename().string(), csv_path.filename().string()});
      ++maps_written;
    }
  }

  write_csv((paths.figures() / ("confmap_index." + paths.train_tag + ".csv")).string(), index);
  std::ostringstream msg;
  msg << "confmap: " << maps_written << " confidence maps -> " << paths.figures().string();
  return msg.str();
}

// ---------------------------------------------------------------------------
// Stage: report
// ---------------------------------------------------------------------------

inline std::string run_report(const ExperimentConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.figures());
  if (!fs::exists(paths.results_csv()))
    throw IoError("missing evaluation results: " + paths.results_csv().string() +
                  " (run evaluate first)");
  const CsvTable results = read_csv(paths.results_csv().string());

  CsvTable report;
  report.header = {"polarization", "feature", "classifier", "pauc_mean", "pauc_ci_lo",
                   "pauc_ci_hi"};
  std::map<std::string, std::vector<BarEntry>> bars_by_channel;
  for (const auto& row : results.rows) {
    if (row[0] != "pooled" || row[2] == "prescreener") continue;
    report.rows.push_back({row[1], row[2], row[3], row[4], row[5], row[6]});
    BarEntry bar;
    bar.label = row[2] + "/" + row[3];
    bar.value = std::stod(row[4]);
    bar.ci_lo = std::stod(row[5]);
    bar.ci_hi = std::stod(row[6]);
    bars_by_channel[row[1]].push_back(bar);
  }
  const std::size_t expected =
      cfg.channels.size() * cfg.features.size() * cfg.classifiers.size();
  if (report.rows.size() != expected)
    throw std::runtime_error("report: expected " + std::to_string(expected) +
                             " pooled algorithm rows, found " +
                             std::to_string(report.rows.size()) +
                             " (re-run evaluate with this config)");
  write_csv(paths.report_csv().string(), report);

  for (auto& [channel, bars] : bars_by_channel) {
    std::sort(bars.begin(), bars.end(),
              [](const BarEntry& a, const BarEntry& b) { return a.value > b.value; });
    plot_bars_png(bars, "PAUC AT 0.02 FA/M2: " + channel,
                  (paths.figures() / ("pauc_bars_" + channel + "." + paths.train_tag + ".png"))
                      .string());
  }

  // ROC overview: prescreener + the best algorithm per channel.
  std::vector<PlotSeries> series;
  auto add_series = [&](const fs::path& p, const std::string& name) {
    if (!fs::exists(p)) return;
    const CsvTable t = read_csv(p.string());
    PlotSeries ps;
    ps.name = name;
    for (const auto& row : t.rows) {
      ps.x.push_back(std::stod(row[0]));
      ps.y.push_back(std::stod(row[1]));
      ps.band_lo.push_back(std::stod(row[2]));
      ps.band_hi.push_back(std::stod(row[3]));
    }
    series.push_back(std::move(ps));
  };
  add_series(paths.roc_csv("prescreener"), "PS");
  for (Channel ch : cfg.channels) {
    double best = -1.0;
    std::string best_label;
    for (const auto& row : results.rows) {
      if (row[0] != "pooled" || row[2] == "prescreener" || row[1] != channel_name(ch)) continue;
      const double v = std::stod(row[4]);
      if (v > best) {
        best = v;
        best_label = row[1] + "/" + row[2] + "/" + row[3];
      }
    }
    if (!best_label.empty()) add_series(paths.roc_csv(sanitize(best_label)), sanitize(best_label));
  }
  plot_roc_png(series, cfg.evaluation.far_max,
               (paths.figures() / ("roc_overview." + paths.train_tag + ".png")).string());

  std::ostringstream msg;
  msg << "report: " << report.rows.size() << " algorithm rows -> "
      << paths.report_csv().string();
  return msg.str();
}

}  // namespace flgpr::pipeline
