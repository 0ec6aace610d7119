#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "flgpr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace flgpr;

namespace {

Json tiny_config_json(const std::string& out_dir) {
  Json j;
  j["seed"] = 77;
  j["out_dir"] = out_dir;
  j["channels"] = {"HH", "VV"};
  j["lanes"] = Json::array();
  for (const char* id : {"A", "B"}) {
    Json lane;
    lane["lane_id"] = id;
    lane["length_m"] = 24.0;
    lane["width_m"] = 9.0;
    lane["n_targets"] = 4;
    j["lanes"].push_back(lane);
  }
  j["generator"] = {{"clutter_density", 0.01},
                    {"target_snr_db", {{"HH", {20.0, 26.0}}, {"VV", {15.0, 19.0}},
                                       {"VH", {8.0, 12.0}}}}};
  j["prescreener"] = {{"min_confidence", 0.05}};
  j["features"] = {"lstat", "bov_raw"};
  j["encoder"] = {{"k", 8}, {"fit_max_descriptors", 4000}};
  j["classifiers"] = {"plsda"};
  j["evaluation"] = {{"n_boot", 2}};
  j["fusion"] = {{"max_nf", 2}, {"repetitions", 2}, {"sweep_max_nf", 2}};
  j["confmap"] = {{"top_alarms", 1}, {"channel", "HH"}};
  return j;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  EXPECT_TRUE(in.good()) << p;
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Config, RoundTripsThroughJsonLosslessly) {
  const Json j = tiny_config_json("/tmp/x");
  const ExperimentConfig cfg = parse_config(j);
  const Json canonical = config_to_json(cfg);
  const ExperimentConfig cfg2 = parse_config(canonical);
  EXPECT_EQ(canonical.dump(), config_to_json(cfg2).dump());
  EXPECT_EQ(cfg.seed, cfg2.seed);
  EXPECT_EQ(cfg.lanes.size(), cfg2.lanes.size());
  EXPECT_TRUE(cfg.lanes[0] == cfg2.lanes[0]);
  EXPECT_EQ(cfg.features, cfg2.features);
}

TEST(Config, SeedIsMandatory) {
  Json j = tiny_config_json("/tmp/x");
  j.erase("seed");
  try {
    parse_config(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("$.seed"), std::string::npos);
  }
}

TEST(Config, UnknownFeatureNamesFieldPath) {
  Json j = tiny_config_json("/tmp/x");
  j["features"] = {"lstat", "hog"};
  try {
    parse_config(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("$.features[1]"), std::string::npos);
  }
}

TEST(Config, LaneValidation) {
  Json j = tiny_config_json("/tmp/x");
  j["lanes"][0].erase("lane_id");
  EXPECT_THROW(parse_config(j), ConfigError);
  j = tiny_config_json("/tmp/x");
  j["lanes"][1]["length_m"] = -2.0;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = tiny_config_json("/tmp/x");
  j["lanes"] = Json::array();
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Pipeline, MissingUpstreamArtifactNamesPath) {
  const fs::path dir = fresh_dir("flgpr_missing_artifact");
  const ExperimentConfig cfg = parse_config(tiny_config_json(dir.string()));
  try {
    pipeline::run_prescreen(cfg);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(".lane"), std::string::npos);
  }
  pipeline::run_generate(cfg);
  pipeline::run_prescreen(cfg);
  // evaluate without extract/train names the missing feature matrix.
  try {
    pipeline::run_evaluate(cfg);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(".fmat"), std::string::npos);
  }
}

TEST(Pipeline, FullChainRunsAndIsDeterministic) {
  const fs::path dir = fresh_dir("flgpr_pipeline_chain");
  const ExperimentConfig cfg = parse_config(tiny_config_json(dir.string()));
  const pipeline::Paths paths = pipeline::make_paths(cfg);

  pipeline::run_generate(cfg);
  pipeline::run_prescreen(cfg);
  pipeline::run_extract(cfg);
  pipeline::run_train(cfg);
  pipeline::run_evaluate(cfg);
  pipeline::run_fuse(cfg);
  pipeline::run_confmap(cfg);
  pipeline::run_report(cfg);

  // Spot-check artifacts exist.
  EXPECT_TRUE(fs::exists(paths.lane("A")));
  EXPECT_TRUE(fs::exists(paths.alarm_csv("B")));
  EXPECT_TRUE(fs::exists(paths.feature_mat("A", Channel::HH, FeatureKind::Lstat)));
  EXPECT_TRUE(fs::exists(paths.codebook(0, Channel::HH, "bov_raw")));
  EXPECT_TRUE(
      fs::exists(paths.model(1, Channel::VV, FeatureKind::BovRaw, ClassifierKind::Plsda)));
  EXPECT_TRUE(fs::exists(paths.results_csv()));
  EXPECT_TRUE(fs::exists(paths.report_csv()));
  EXPECT_TRUE(fs::exists(paths.roc_csv("prescreener")));

  // Report has one row per (polarization, feature, classifier).
  const CsvTable report = read_csv(paths.report_csv().string());
  EXPECT_EQ(report.rows.size(), 2u * 2u * 1u);

  // Stage determinism: rerun every stage into the same paths; artifacts must
  // be byte-identical.
  const auto lane_before = read_bytes(paths.lane("A"));
  const auto alarms_before = read_bytes(paths.alarm_csv("A"));
  const auto model_before =
      read_bytes(paths.model(0, Channel::HH, FeatureKind::BovRaw, ClassifierKind::Plsda));
  const auto results_before = read_bytes(paths.results_csv());
  const auto preds_before = read_bytes(paths.predictions_csv(0, "test"));
  const auto report_before = read_bytes(paths.report_csv());
  const fs::path sweep_csv =
      paths.results() / ("fusion_sweep_summary." + paths.fuse_tag + ".csv");
  const auto sweep_before = read_bytes(sweep_csv);
  pipeline::run_generate(cfg);
  pipeline::run_prescreen(cfg);
  pipeline::run_extract(cfg);
  pipeline::run_train(cfg);
  pipeline::run_evaluate(cfg);
  pipeline::run_fuse(cfg);
  pipeline::run_report(cfg);
  EXPECT_EQ(read_bytes(paths.lane("A")), lane_before);
  EXPECT_EQ(read_bytes(paths.alarm_csv("A")), alarms_before);
  EXPECT_EQ(read_bytes(paths.model(0, Channel::HH, FeatureKind::BovRaw,
                                   ClassifierKind::Plsda)),
            model_before);
  EXPECT_EQ(read_bytes(paths.results_csv()), results_before);
  EXPECT_EQ(read_bytes(paths.predictions_csv(0, "test")), preds_before);
  EXPECT_EQ(read_bytes(paths.report_csv()), report_before);
  EXPECT_EQ(read_bytes(sweep_csv), sweep_before);
}

TEST(Config, DefaultAlgorithmGridIs81) {
  // Default feature set {raw, sift, lstat, fft2d, loggabor, bov_raw,
  // bov_sift, fv_raw, fv_sift} x 3 channels x 3 classifiers.
  Json j;
  j["seed"] = 1;
  j["lanes"] = Json::array();
  Json lane;
  lane["lane_id"] = "A";
  lane["length_m"] = 10.0;
  lane["width_m"] = 10.0;
  lane["n_targets"] = 1;
  j["lanes"].push_back(lane);
  const ExperimentConfig cfg = parse_config(j);
  EXPECT_EQ(cfg.features.size(), 9u);
  EXPECT_EQ(cfg.channels.size(), 3u);
  EXPECT_EQ(cfg.classifiers.size(), 3u);
  EXPECT_EQ(cfg.features.size() * cfg.channels.size() * cfg.classifiers.size(), 81u);
}

TEST(Pipeline, LaneFoldsShape) {
  const auto folds = pipeline::lane_folds(3);
  ASSERT_EQ(folds.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(folds[k].test_lane, k);
    EXPECT_EQ(folds[k].train_lanes.size(), 2u);
    for (int t : folds[k].train_lanes) EXPECT_NE(t, k);
  }
  EXPECT_THROW(pipeline::lane_folds(1), std::invalid_argument);
}

TEST(Pipeline, FeatureMatrixRecordRoundTrip) {
  const fs::path dir = fresh_dir("flgpr_fmat");
  Eigen::MatrixXd m(3, 4);
  m << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12.5;
  pipeline::write_feature_matrix(m, FeatureKind::Lstat, dir / "t.fmat");
  FeatureKind kind;
  const Eigen::MatrixXd back = pipeline::read_feature_matrix(dir / "t.fmat", &kind);
  EXPECT_EQ(kind, FeatureKind::Lstat);
  EXPECT_EQ((back - m).norm(), 0.0);
  EXPECT_THROW(pipeline::read_feature_matrix(dir / "absent.fmat"), IoError);
}
