#pragma once

// Experiment configuration: a JSON file drives every pipeline stage. Parsing
// applies defaults, validates field values, and reports violations with the
// offending field path. A parsed config serializes back to canonical JSON
// losslessly.

#include <json.hpp>

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include "flgpr/classifiers.hpp"
#include "flgpr/core.hpp"
#include "flgpr/dataset.hpp"
#include "flgpr/encoders.hpp"
#include "flgpr/evaluation.hpp"
#include "flgpr/features.hpp"
#include "flgpr/prescreen.hpp"

namespace flgpr {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error("config error at " + path + ": " + what) {}
};

enum class ClassifierKind : std::uint8_t { Plsda = 0, SvmLinear = 1, SvmRbf = 2 };

inline const char* classifier_kind_name(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::Plsda: return "plsda";
    case ClassifierKind::SvmLinear: return "svm_linear";
    case ClassifierKind::SvmRbf: return "svm_rbf";
  }
  throw std::invalid_argument("unknown classifier kind");
}

inline ClassifierKind classifier_kind_from_name(const std::string& s) {
  if (s == "plsda") return ClassifierKind::Plsda;
  if (s == "svm_linear") return ClassifierKind::SvmLinear;
  if (s == "svm_rbf") return ClassifierKind::SvmRbf;
  throw std::invalid_argument("unknown classifier kind: " + s);
}

struct EncoderConfig {
  int k = 30;
  DenseDescriptorParams dense;
  double zca_eps_rel = 1e-2;
  int pool_grid = 2;
  int fit_max_descriptors = 10000;
  bool bov_whiten = true;
  bool fv_improved_normalization = false;
};

struct ClassifierParams {
  int plsda_components = 5;
  double svm_c = 1.0;
  double svm_gamma = 0.0;  // 0 = 1 / n_features
  double svm_tol = 1e-3;
};

struct EvaluationConfig {
  double halo_m = kDefaultHaloM;
  double far_max = kDefaultFarMax;
  int n_boot = 10;
  double roc_grid_step = 0.0005;
};

struct FusionConfig {
  int max_nf = 10;
  int inner_folds = 5;
  bool auto_stop = true;
  int repetitions = 10;
  int sweep_max_nf = 6;
  int plsda_components = 5;
};

struct ConfmapConfig {
  int top_alarms = 4;
  Channel channel = Channel::HH;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int threads = 0;
  std::vector<Channel> channels{Channel::HH, Channel::VV, Channel::VH};
  std::vector<LaneSpec> lanes;
  PrescreenParams prescreener;
  std::vector<FeatureKind> features{
      FeatureKind::Raw,    FeatureKind::Sift,    FeatureKind::Lstat,
      FeatureKind::Fft2d,  FeatureKind::LogGabor, FeatureKind::BovRaw,
      FeatureKind::BovSift, FeatureKind::FvRaw,   FeatureKind::FvSift};
  EncoderConfig encoder;
  std::vector<ClassifierKind> classifiers{ClassifierKind::Plsda, ClassifierKind::SvmLinear,
                                          ClassifierKind::SvmRbf};
  ClassifierParams classifier_params;
  EvaluationConfig evaluation;
  FusionConfig fusion;
  ConfmapConfig confmap;
};

namespace detail {

inline double get_number(const Json& j, const char* key, double fallback,
                         const std::string& path) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ConfigError(path + "." + key, "expected a number");
  return j[key].get<double>();
}

inline int get_int(const Json& j, const char* key, int fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw ConfigError(path + "." + key, "expected an integer");
  return j[key].get<int>();
}

inline bool get_bool(const Json& j, const char* key, bool fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) throw ConfigError(path + "." + key, "expected a boolean");
  return j[key].get<bool>();
}

inline std::string get_string(const Json& j, const char* key, const std::string& fallback,
                              const std::string& path) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw ConfigError(path + "." + key, "expected a string");
  return j[key].get<std::string>();
}

inline SnrRangeDb get_range(const Json& j, const char* key, SnrRangeDb fallback,
                            const std::string& path) {
  if (!j.contains(key)) return fallback;
  const Json& v = j[key];
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(path + "." + key, "expected [lo, hi]");
  SnrRangeDb r{v[0].get<double>(), v[1].get<double>()};
  if (r.hi < r.lo) throw ConfigError(path + "." + key, "hi must be >= lo");
  return r;
}

/// Generator knobs shared between the "generator" section and per-lane
/// overrides.
inline void apply_generator_fields(const Json& j, LaneSpec& spec, const std::string& path) {
  if (j.contains("target_snr_db")) {
    const Json& snr = j["target_snr_db"];
    if (!snr.is_object()) throw ConfigError(path + ".target_snr_db", "expected an object");
    for (int ch = 0; ch < kNumChannels; ++ch) {
      const char* name = channel_name(static_cast<Channel>(ch));
      spec.target_snr_db[ch] =
          get_range(snr, name, spec.target_snr_db[ch], path + ".target_snr_db");
    }
  }
  if (j.contains("target_extent_range_m")) {
    const Json& v = j["target_extent_range_m"];
    if (!v.is_array() || v.size() != 2)
      throw ConfigError(path + ".target_extent_range_m", "expected [min, max]");
    spec.target_extent_range_m = {v[0].get<double>(), v[1].get<double>()};
  }
  spec.clutter_snr_db = get_range(j, "clutter_snr_db", spec.clutter_snr_db, path);
  spec.clutter_density = get_number(j, "clutter_density", spec.clutter_density, path);
  spec.speckle_sigma = get_number(j, "speckle_sigma", spec.speckle_sigma, path);
  spec.frame_extent_m = get_number(j, "frame_extent_m", spec.frame_extent_m, path);
  spec.frame_near_m = get_number(j, "frame_near_m", spec.frame_near_m, path);
  spec.frame_spacing_m = get_number(j, "frame_spacing_m", spec.frame_spacing_m, path);
  spec.resolution_m = get_number(j, "resolution_m", spec.resolution_m, path);
  spec.standoff_m = get_number(j, "standoff_m", spec.standoff_m, path);
  spec.target_margin_m = get_number(j, "target_margin_m", spec.target_margin_m, path);
  spec.min_target_separation_m =
      get_number(j, "min_target_separation_m", spec.min_target_separation_m, path);
  spec.metal_fraction = get_number(j, "metal_fraction", spec.metal_fraction, path);
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  ExperimentConfig cfg;
  if (!j.is_object()) throw ConfigError("$", "config root must be an object");
  if (!j.contains("seed")) throw ConfigError("$.seed", "seed is mandatory");
  if (!j["seed"].is_number_integer()) throw ConfigError("$.seed", "expected an integer");
  cfg.seed = j["seed"].get<std::uint64_t>();
  cfg.out_dir = detail::get_string(j, "out_dir", cfg.out_dir, "$");
  cfg.threads = detail::get_int(j, "threads", cfg.threads, "$");

  if (j.contains("channels")) {
    cfg.channels.clear();
    const Json& chans = j["channels"];
    if (!chans.is_array() || chans.empty()) throw ConfigError("$.channels", "expected an array");
    for (std::size_t i = 0; i < chans.size(); ++i) {
      try {
        cfg.channels.push_back(channel_from_name(chans[i].get<std::string>()));
      } catch (const std::exception& e) {
        throw ConfigError("$.channels[" + std::to_string(i) + "]", e.what());
      }
    }
  }

  LaneSpec base;  // defaults, then shared generator overrides
  if (j.contains("generator")) detail::apply_generator_fields(j["generator"], base, "$.generator");

  if (!j.contains("lanes") || !j["lanes"].is_array() || j["lanes"].empty())
    throw ConfigError("$.lanes", "at least one lane spec is required");
  const Json& lanes = j["lanes"];
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const std::string path = "$.lanes[" + std::to_string(i) + "]";
    const Json& lj = lanes[i];
    if (!lj.is_object()) throw ConfigError(path, "expected an object");
    LaneSpec spec = base;
    spec.lane_id = detail::get_string(lj, "lane_id", "", path);
    if (spec.lane_id.empty()) throw ConfigError(path + ".lane_id", "lane_id is required");
    spec.length_m = detail::get_number(lj, "length_m", -1.0, path);
    spec.width_m = detail::get_number(lj, "width_m", -1.0, path);
    if (!(spec.length_m > 0.0)) throw ConfigError(path + ".length_m", "must be positive");
    if (!(spec.width_m > 0.0)) throw ConfigError(path + ".width_m", "must be positive");
    spec.n_targets = detail::get_int(lj, "n_targets", -1, path);
    if (spec.n_targets < 0) throw ConfigError(path + ".n_targets", "must be >= 0");
    spec.seed = lj.contains("seed")
                    ? lj["seed"].get<std::uint64_t>()
                    : mix_seed(cfg.seed, 0x1a9e, static_cast<std::uint64_t>(i));
    if (lj.contains("origin")) {
      const Json& o = lj["origin"];
      if (!o.is_array() || o.size() != 2)
        throw ConfigError(path + ".origin", "expected [easting, northing]");
      spec.origin = {o[0].get<double>(), o[1].get<double>()};
    } else {
      spec.origin = {10000.0 * (static_cast<double>(i) + 1.0), 0.0};
    }
    detail::apply_generator_fields(lj, spec, path);
    cfg.lanes.push_back(std::move(spec));
  }

  if (j.contains("prescreener")) {
    const Json& p = j["prescreener"];
    cfg.prescreener.fore_px = detail::get_int(p, "fore_px", cfg.prescreener.fore_px, "$.prescreener");
    cfg.prescreener.back_px = detail::get_int(p, "back_px", cfg.prescreener.back_px, "$.prescreener");
    cfg.prescreener.min_confidence =
        detail::get_number(p, "min_confidence", cfg.prescreener.min_confidence, "$.prescreener");
    cfg.prescreener.cluster_radius_m =
        detail::get_number(p, "cluster_radius_m", cfg.prescreener.cluster_radius_m, "$.prescreener");
    if (cfg.prescreener.fore_px <= 0 || cfg.prescreener.back_px <= cfg.prescreener.fore_px)
      throw ConfigError("$.prescreener", "need 0 < fore_px < back_px");
  }

  if (j.contains("features")) {
    cfg.features.clear();
    const Json& feats = j["features"];
    if (!feats.is_array() || feats.empty()) throw ConfigError("$.features", "expected an array");
    for (std::size_t i = 0; i < feats.size(); ++i) {
      try {
        cfg.features.push_back(feature_kind_from_name(feats[i].get<std::string>()));
      } catch (const std::exception& e) {
        throw ConfigError("$.features[" + std::to_string(i) + "]", e.what());
      }
    }
  }

  if (j.contains("encoder")) {
    const Json& e = j["encoder"];
    cfg.encoder.k = detail::get_int(e, "k", cfg.encoder.k, "$.encoder");
    cfg.encoder.dense.raw_window =
        detail::get_int(e, "raw_window", cfg.encoder.dense.raw_window, "$.encoder");
    cfg.encoder.dense.raw_stride =
        detail::get_int(e, "raw_stride", cfg.encoder.dense.raw_stride, "$.encoder");
    cfg.encoder.dense.sift_window =
        detail::get_int(e, "sift_window", cfg.encoder.dense.sift_window, "$.encoder");
    cfg.encoder.dense.sift_stride =
        detail::get_int(e, "sift_stride", cfg.encoder.dense.sift_stride, "$.encoder");
    cfg.encoder.zca_eps_rel =
        detail::get_number(e, "zca_eps_rel", cfg.encoder.zca_eps_rel, "$.encoder");
    cfg.encoder.pool_grid = detail::get_int(e, "pool_grid", cfg.encoder.pool_grid, "$.encoder");
    cfg.encoder.fit_max_descriptors =
        detail::get_int(e, "fit_max_descriptors", cfg.encoder.fit_max_descriptors, "$.encoder");
    cfg.encoder.bov_whiten = detail::get_bool(e, "bov_whiten", cfg.encoder.bov_whiten, "$.encoder");
    cfg.encoder.fv_improved_normalization = detail::get_bool(
        e, "fv_improved_normalization", cfg.encoder.fv_improved_normalization, "$.encoder");
    if (cfg.encoder.k < 1) throw ConfigError("$.encoder.k", "must be >= 1");
    if (cfg.encoder.pool_grid < 1) throw ConfigError("$.encoder.pool_grid", "must be >= 1");
  }

  if (j.contains("classifiers")) {
    cfg.classifiers.clear();
    const Json& cls = j["classifiers"];
    if (!cls.is_array() || cls.empty()) throw ConfigError("$.classifiers", "expected an array");
    for (std::size_t i = 0; i < cls.size(); ++i) {
      try {
        cfg.classifiers.push_back(classifier_kind_from_name(cls[i].get<std::string>()));
      } catch (const std::exception& e) {
        throw ConfigError("$.classifiers[" + std::to_string(i) + "]", e.what());
      }
    }
  }

  if (j.contains("classifier_params")) {
    const Json& p = j["classifier_params"];
    cfg.classifier_params.plsda_components = detail::get_int(
        p, "plsda_components", cfg.classifier_params.plsda_components, "$.classifier_params");
    cfg.classifier_params.svm_c =
        detail::get_number(p, "svm_c", cfg.classifier_params.svm_c, "$.classifier_params");
    cfg.classifier_params.svm_gamma =
        detail::get_number(p, "svm_gamma", cfg.classifier_params.svm_gamma, "$.classifier_params");
    cfg.classifier_params.svm_tol =
        detail::get_number(p, "svm_tol", cfg.classifier_params.svm_tol, "$.classifier_params");
    if (cfg.classifier_params.plsda_components < 1)
      throw ConfigError("$.classifier_params.plsda_components", "must be >= 1");
  }

  if (j.contains("evaluation")) {
    const Json& e = j["evaluation"];
    cfg.evaluation.halo_m = detail::get_number(e, "halo_m", cfg.evaluation.halo_m, "$.evaluation");
    cfg.evaluation.far_max =
        detail::get_number(e, "far_max", cfg.evaluation.far_max, "$.evaluation");
    cfg.evaluation.n_boot = detail::get_int(e, "n_boot", cfg.evaluation.n_boot, "$.evaluation");
    cfg.evaluation.roc_grid_step =
        detail::get_number(e, "roc_grid_step", cfg.evaluation.roc_grid_step, "$.evaluation");
    if (!(cfg.evaluation.far_max > 0.0))
      throw ConfigError("$.evaluation.far_max", "must be positive");
    if (cfg.evaluation.n_boot < 2) throw ConfigError("$.evaluation.n_boot", "must be >= 2");
  }

  if (j.contains("fusion")) {
    const Json& f = j["fusion"];
    cfg.fusion.max_nf = detail::get_int(f, "max_nf", cfg.fusion.max_nf, "$.fusion");
    cfg.fusion.inner_folds = detail::get_int(f, "inner_folds", cfg.fusion.inner_folds, "$.fusion");
    cfg.fusion.auto_stop = detail::get_bool(f, "auto_stop", cfg.fusion.auto_stop, "$.fusion");
    cfg.fusion.repetitions = detail::get_int(f, "repetitions", cfg.fusion.repetitions, "$.fusion");
    cfg.fusion.sweep_max_nf =
        detail::get_int(f, "sweep_max_nf", cfg.fusion.sweep_max_nf, "$.fusion");
    cfg.fusion.plsda_components =
        detail::get_int(f, "plsda_components", cfg.fusion.plsda_components, "$.fusion");
    if (cfg.fusion.max_nf < 1) throw ConfigError("$.fusion.max_nf", "must be >= 1");
    if (cfg.fusion.inner_folds < 2) throw ConfigError("$.fusion.inner_folds", "must be >= 2");
  }

  if (j.contains("confmap")) {
    const Json& c = j["confmap"];
    cfg.confmap.top_alarms = detail::get_int(c, "top_alarms", cfg.confmap.top_alarms, "$.confmap");
    if (c.contains("channel")) {
      try {
        cfg.confmap.channel = channel_from_name(c["channel"].get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError("$.confmap.channel", e.what());
      }
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Canonical JSON form (every field explicit). parse_config(config_to_json(c))
/// reproduces c exactly.
inline Json config_to_json(const ExperimentConfig& cfg) {
  Json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["threads"] = cfg.threads;
  j["channels"] = Json::array();
  for (Channel c : cfg.channels) j["channels"].push_back(channel_name(c));
  j["lanes"] = Json::array();
  for (const LaneSpec& s : cfg.lanes) {
    Json lj;
    lj["lane_id"] = s.lane_id;
    lj["length_m"] = s.length_m;
    lj["width_m"] = s.width_m;
    lj["n_targets"] = s.n_targets;
    lj["seed"] = s.seed;
    lj["origin"] = {s.origin.easting, s.origin.northing};
    Json snr;
    for (int ch = 0; ch < kNumChannels; ++ch)
      snr[channel_name(static_cast<Channel>(ch))] = {s.target_snr_db[ch].lo,
                                                     s.target_snr_db[ch].hi};
    lj["target_snr_db"] = snr;
    lj["target_extent_range_m"] = {s.target_extent_range_m[0], s.target_extent_range_m[1]};
    lj["clutter_snr_db"] = {s.clutter_snr_db.lo, s.clutter_snr_db.hi};
    lj["clutter_density"] = s.clutter_density;
    lj["speckle_sigma"] = s.speckle_sigma;
    lj["frame_extent_m"] = s.frame_extent_m;
    lj["frame_near_m"] = s.frame_near_m;
    lj["frame_spacing_m"] = s.frame_spacing_m;
    lj["resolution_m"] = s.resolution_m;
    lj["standoff_m"] = s.standoff_m;
    lj["target_margin_m"] = s.target_margin_m;
    lj["min_target_separation_m"] = s.min_target_separation_m;
    lj["metal_fraction"] = s.metal_fraction;
    j["lanes"].push_back(lj);
  }
  j["prescreener"] = {{"fore_px", cfg.prescreener.fore_px},
                      {"back_px", cfg.prescreener.back_px},
                      {"min_confidence", cfg.prescreener.min_confidence},
                      {"cluster_radius_m", cfg.prescreener.cluster_radius_m}};
  j["features"] = Json::array();
  for (FeatureKind k : cfg.features) j["features"].push_back(feature_kind_name(k));
  j["encoder"] = {{"k", cfg.encoder.k},
                  {"raw_window", cfg.encoder.dense.raw_window},
                  {"raw_stride", cfg.encoder.dense.raw_stride},
                  {"sift_window", cfg.encoder.dense.sift_window},
                  {"sift_stride", cfg.encoder.dense.sift_stride},
                  {"zca_eps_rel", cfg.encoder.zca_eps_rel},
                  {"pool_grid", cfg.encoder.pool_grid},
                  {"fit_max_descriptors", cfg.encoder.fit_max_descriptors},
                  {"bov_whiten", cfg.encoder.bov_whiten},
                  {"fv_improved_normalization", cfg.encoder.fv_improved_normalization}};
  j["classifiers"] = Json::array();
  for (ClassifierKind k : cfg.classifiers) j["classifiers"].push_back(classifier_kind_name(k));
  j["classifier_params"] = {{"plsda_components", cfg.classifier_params.plsda_components},
                            {"svm_c", cfg.classifier_params.svm_c},
                            {"svm_gamma", cfg.classifier_params.svm_gamma},
                            {"svm_tol", cfg.classifier_params.svm_tol}};
  j["evaluation"] = {{"halo_m", cfg.evaluation.halo_m},
                     {"far_max", cfg.evaluation.far_max},
                     {"n_boot", cfg.evaluation.n_boot},
                     {"roc_grid_step", cfg.evaluation.roc_grid_step}};
  j["fusion"] = {{"max_nf", cfg.fusion.max_nf},
                 {"inner_folds", cfg.fusion.inner_folds},
                 {"auto_stop", cfg.fusion.auto_stop},
                 {"repetitions", cfg.fusion.repetitions},
                 {"sweep_max_nf", cfg.fusion.sweep_max_nf},
                 {"plsda_components", cfg.fusion.plsda_components}};
  j["confmap"] = {{"top_alarms", cfg.confmap.top_alarms},
                  {"channel", channel_name(cfg.confmap.channel)}};
  return j;
}

}  // namespace flgpr
