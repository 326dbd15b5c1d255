// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_PIPELINE_HPP
#define WW_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ww/classifier.hpp"
#include "ww/cqcc.hpp"
#include "ww/detection.hpp"
#include "ww/fusion.hpp"

namespace ww::pipeline {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kToolkitVersion = "0.1.0";

struct PipelinePaths {
  std::optional<std::filesystem::path> registry;        // device CSV
  std::optional<std::filesystem::path> records;         // sensor NDJSON
  std::optional<std::filesystem::path> audio_manifest;  // labeled training CSV
  std::optional<std::filesystem::path> detections;
  std::optional<std::filesystem::path> truths;
  std::optional<std::filesystem::path> world_file;
  std::filesystem::path output_dir = "out";
};

struct ClassifierSettings {
  classify::ModelKind kind = classify::ModelKind::Logistic;
  classify::TrainConfig train;
  classify::SplitSpec split;
};

struct DetectionSettings {
  double conf_threshold = 0.25;
  double iou_threshold = 0.45;
  std::size_t network_size = 1280;
  double alignment_alpha = 1.0;
  double alignment_beta = 6.0;
  std::size_t alignment_m = 10;
  double operating_confidence = 0.25;
  double original_width = 0.0;   // required to rescale network-space boxes
  double original_height = 0.0;
};

struct FusionSettings {
  double radius_m = 5.0;
};

struct PipelineConfig {
  int version = kConfigVersion;
  std::string image_id = "image";
  PipelinePaths paths;
  cqcc::CqccConfig cqcc;
  ClassifierSettings classifier;
  DetectionSettings detection;
  FusionSettings fusion;
};

/// Parses and validates a config file, filling defaults. `overrides` are
/// dotted key=value pairs applied on top of the file before validation (e.g.
/// "detection.conf_threshold=0.3"). Every violation is reported in one pass.
PipelineConfig validate_config(const std::filesystem::path& path,
                               const std::vector<std::string>& overrides = {});

/// Same validation applied to an already-parsed JSON text.
PipelineConfig validate_config_text(const std::string& text,
                                    const std::vector<std::string>& overrides = {});

std::string config_to_json(const PipelineConfig& config);

struct StageResult {
  std::string name;
  std::string status;  // "ok", "skipped", "failed"
  std::string detail;
  double seconds = 0.0;
};

struct RunManifest {
  std::string toolkit_version = kToolkitVersion;
  std::string started_at;  // ISO-8601 UTC
  std::string config_json;
  std::vector<StageResult> stages;
  std::map<std::string, std::string> artifacts;  // relative name -> digest
  std::optional<classify::ClassificationMetrics> classification;
  std::optional<detect::EvalReport> detection_eval;
  std::optional<fuse::StatusCounts> map_counts;

  bool all_ok() const;
  const StageResult* find_stage(const std::string& name) const;
};

/// Which stages a run executes; unselected stages are left out entirely.
/// Stages scoped out of a run pick their upstream inputs from the output
/// directory when present (model.json, device_statuses.csv).
struct StageSelection {
  bool ingest = true;
  bool train = true;
  bool classify_devices = true;
  bool detections = true;
  bool detection_eval = true;
  bool map = true;

  static StageSelection all() { return StageSelection{}; }
};

/// Runs every selected stage whose inputs are present, in dependency order:
/// ingest -> train/evaluate classifier -> classify devices ->
/// detections + NMS -> detection eval -> sensor matching + map.
/// A stage with missing inputs is marked skipped and downstream stages
/// degrade (e.g. no classifier, all map statuses unknown). A stage failure
/// aborts the stages depending on it; the manifest records everything.
RunManifest run_pipeline(const PipelineConfig& config,
                         const StageSelection& selection = StageSelection::all());

void save_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace ww::pipeline

#endif  // WW_PIPELINE_HPP
