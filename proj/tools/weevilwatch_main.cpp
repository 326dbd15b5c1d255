// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ww/audio.hpp"
#include "ww/cqcc.hpp"
#include "ww/error.hpp"
#include "ww/ingest_listener.hpp"
#include "ww/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using ww::Error;
using ww::ErrorKind;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitStageFailure = 3;

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

LogLevel log_level_from_env() {
  const char* raw = std::getenv("WEEVILWATCH_LOG");
  if (!raw) return LogLevel::Info;
  const std::string value(raw);
  if (value == "debug") return LogLevel::Debug;
  if (value == "info") return LogLevel::Info;
  if (value == "warn") return LogLevel::Warn;
  if (value == "error") return LogLevel::Error;
  return LogLevel::Info;
}

LogLevel g_log_level = LogLevel::Info;

void log_at(LogLevel level, const char* tag, const std::string& message) {
  if (level < g_log_level) return;
  std::cerr << "[" << tag << "] " << message << "\n";
}

void log_info(const std::string& message) { log_at(LogLevel::Info, "info", message); }
void log_error(const std::string& message) { log_at(LogLevel::Error, "error", message); }

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common_options(CLI::App* cmd, CommonOptions& options) {
  cmd->add_option("--config", options.config_path, "pipeline config file (JSON)")
      ->required();
  cmd->add_option("--override", options.overrides,
                  "dotted key=value applied over the config, repeatable");
}

int classify_error(const Error& err) {
  switch (err.kind()) {
    case ErrorKind::Validation:
    case ErrorKind::Format:
    case ErrorKind::Domain:
      return kExitValidation;
    default:
      return kExitStageFailure;
  }
}

void print_stage_lines(const ww::pipeline::RunManifest& manifest) {
  for (const ww::pipeline::StageResult& stage : manifest.stages) {
    std::cout << "stage " << stage.name << ": " << stage.status;
    if (!stage.detail.empty()) std::cout << " (" << stage.detail << ")";
    std::cout << "\n";
  }
}

// Runs the selected pipeline slice; nonzero when the named stage did not
// finish, or (with no primary stage) when anything failed.
int run_scoped(const CommonOptions& options,
               const ww::pipeline::StageSelection& selection,
               const char* primary_stage) {
  const ww::pipeline::PipelineConfig config =
      ww::pipeline::validate_config(options.config_path, options.overrides);
  const ww::pipeline::RunManifest manifest =
      ww::pipeline::run_pipeline(config, selection);
  print_stage_lines(manifest);
  std::cout << "manifest: " << (config.paths.output_dir / "run_manifest.json").string()
            << "\n";
  if (primary_stage) {
    const ww::pipeline::StageResult* stage = manifest.find_stage(primary_stage);
    if (!stage || stage->status != "ok") {
      log_error(std::string(primary_stage) + " did not complete" +
                (stage && !stage->detail.empty() ? ": " + stage->detail : ""));
      return kExitStageFailure;
    }
    return kExitOk;
  }
  return manifest.all_ok() ? kExitOk : kExitStageFailure;
}

struct FeaturesOptions {
  CommonOptions common;
  std::string input;
  std::string output;
  std::string csv;
  std::string image;
  std::size_t image_width = 0;
  std::size_t image_height = 0;
};

int run_features(const FeaturesOptions& options) {
  const ww::pipeline::PipelineConfig config =
      ww::pipeline::validate_config(options.common.config_path,
                                    options.common.overrides);
  const ww::audio::AudioClip clip = ww::audio::read_wav(options.input);
  const ww::cqcc::RealMatrix features = ww::cqcc::cqcc_features(clip, config.cqcc);
  ww::cqcc::save_features(options.output, features);
  log_info("wrote " + options.output + " (" + std::to_string(features.rows) +
           " frames x " + std::to_string(features.cols) + " coefficients)");
  if (!options.csv.empty()) ww::cqcc::save_features_csv(options.csv, features);
  if (!options.image.empty()) {
    const std::size_t width =
        options.image_width > 0 ? options.image_width : features.cols;
    const std::size_t height =
        options.image_height > 0 ? options.image_height : features.rows;
    ww::cqcc::write_pgm(options.image,
                        ww::cqcc::features_to_image(features, width, height));
  }
  return kExitOk;
}

volatile std::sig_atomic_t g_stop_requested = 0;

extern "C" void handle_stop_signal(int) { g_stop_requested = 1; }

struct ListenOptions {
  CommonOptions common;
  std::uint16_t port = 0;
  std::size_t max_records = 0;  // 0 = until signalled
};

int run_ingest_listen(const ListenOptions& options) {
  const ww::pipeline::PipelineConfig config =
      ww::pipeline::validate_config(options.common.config_path,
                                    options.common.overrides);
  fs::create_directories(config.paths.output_dir);
  const fs::path sink_path = config.paths.output_dir / "ingested.ndjson";

  std::ofstream sink_file(sink_path, std::ios::app);
  if (!sink_file) {
    throw Error(ErrorKind::Io, "cannot open " + sink_path.string());
  }

  std::mutex sink_mutex;
  std::atomic<std::size_t> accepted{0};
  ww::sensor::IngestListener listener;
  const std::uint16_t port =
      listener.start(options.port, [&](const ww::sensor::SensorRecord& record) {
        std::lock_guard<std::mutex> lock(sink_mutex);
        sink_file << ww::sensor::record_to_line(record) << "\n";
        sink_file.flush();
        accepted.fetch_add(1);
      });

  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  std::cout << "listening on 127.0.0.1:" << port << std::endl;
  log_info("appending records to " + sink_path.string());

  while (!g_stop_requested &&
         (options.max_records == 0 || accepted.load() < options.max_records)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  listener.stop();
  std::cout << "ingested " << accepted.load() << " records" << std::endl;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  g_log_level = log_level_from_env();

  CLI::App app{"WeevilWatch: acoustic RPW classification, UAV palm detection "
               "post-processing, and infestation mapping"};
  app.require_subcommand(1);

  FeaturesOptions features_options;
  CLI::App* features = app.add_subcommand(
      "features", "Extract CQCC features from one WAV clip");
  add_common_options(features, features_options.common);
  features->add_option("--input", features_options.input, "input WAV file")
      ->required();
  features->add_option("--output", features_options.output, "output feature file")
      ->required();
  features->add_option("--csv", features_options.csv, "also write features as CSV");
  features->add_option("--image", features_options.image, "also write a PGM rendering");
  features->add_option("--image-width", features_options.image_width,
                       "PGM width (default: coefficient count)");
  features->add_option("--image-height", features_options.image_height,
                       "PGM height (default: frame count)");

  CommonOptions train_options;
  CLI::App* train = app.add_subcommand(
      "train", "Train and evaluate the infestation classifier");
  add_common_options(train, train_options);

  CommonOptions classify_options;
  CLI::App* classify = app.add_subcommand(
      "classify", "Classify sensor devices with a trained model");
  add_common_options(classify, classify_options);

  CommonOptions eval_options;
  CLI::App* eval_detections = app.add_subcommand(
      "eval-detections", "Post-process detections and evaluate against truths");
  add_common_options(eval_detections, eval_options);

  CommonOptions map_options;
  CLI::App* map_cmd = app.add_subcommand(
      "map", "Match sensors to detected palms and write the infestation map");
  add_common_options(map_cmd, map_options);

  ListenOptions listen_options;
  CLI::App* ingest_listen = app.add_subcommand(
      "ingest-listen", "Listen for newline-delimited sensor records over TCP");
  add_common_options(ingest_listen, listen_options.common);
  ingest_listen->add_option("--port", listen_options.port,
                            "TCP port, 0 picks an ephemeral port");
  ingest_listen->add_option("--max-records", listen_options.max_records,
                            "stop after this many accepted records (0 = run until "
                            "SIGINT/SIGTERM)");

  CommonOptions run_all_options;
  CLI::App* run_all = app.add_subcommand("run-all", "Run the full pipeline");
  add_common_options(run_all, run_all_options);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (features->parsed()) return run_features(features_options);
    if (train->parsed()) {
      ww::pipeline::StageSelection selection{};
      selection.ingest = selection.classify_devices = false;
      selection.detections = selection.detection_eval = selection.map = false;
      return run_scoped(train_options, selection, "train");
    }
    if (classify->parsed()) {
      ww::pipeline::StageSelection selection{};
      selection.train = false;
      selection.detections = selection.detection_eval = selection.map = false;
      return run_scoped(classify_options, selection, "classify-devices");
    }
    if (eval_detections->parsed()) {
      ww::pipeline::StageSelection selection{};
      selection.ingest = selection.train = selection.classify_devices = false;
      selection.map = false;
      return run_scoped(eval_options, selection, "detection-eval");
    }
    if (map_cmd->parsed()) {
      ww::pipeline::StageSelection selection{};
      selection.ingest = selection.train = selection.classify_devices = false;
      selection.detection_eval = false;
      return run_scoped(map_options, selection, "map");
    }
    if (ingest_listen->parsed()) return run_ingest_listen(listen_options);
    if (run_all->parsed()) {
      return run_scoped(run_all_options, ww::pipeline::StageSelection::all(), nullptr);
    }
  } catch (const Error& err) {
    log_error(err.what());
    return classify_error(err);
  } catch (const std::exception& err) {
    log_error(err.what());
    return kExitStageFailure;
  }
  return kExitUsage;
}
