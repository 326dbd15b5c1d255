// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ww/audio.hpp"
#include "ww/digest.hpp"
#include "ww/error.hpp"
#include "ww/geo.hpp"
#include "ww/sensor.hpp"

namespace ww::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string join_issues(const std::vector<std::string>& issues) {
  std::string joined;
  for (const std::string& issue : issues) {
    if (!joined.empty()) joined += "; ";
    joined += issue;
  }
  return joined;
}

std::string now_utc_iso8601() {
  const std::time_t now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

struct IssueList {
  std::vector<std::string> issues;

  void add(const std::string& issue) { issues.push_back(issue); }
};

// Typed field extraction that records a problem instead of throwing, so one
// validation pass reports everything.
class SectionReader {
 public:
  SectionReader(const json& node, std::string prefix, IssueList& issues)
      : node_(node), prefix_(std::move(prefix)), issues_(issues) {}

  template <typename T>
  void read(const char* key, T& out) {
    auto it = node_.find(key);
    if (it == node_.end()) return;
    seen_.push_back(key);
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      issues_.add(prefix_ + key + ": wrong type");
    }
  }

  void read_string(const char* key, std::string& out) { read<std::string>(key, out); }

  void finish() {
    for (const auto& [key, value] : node_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        issues_.add(prefix_ + key + ": unknown key");
      }
    }
  }

 private:
  const json& node_;
  std::string prefix_;
  IssueList& issues_;
  std::vector<std::string> seen_;
};

void read_optional_path(SectionReader& reader, const char* key,
                        std::optional<fs::path>& out) {
  std::string text;
  reader.read_string(key, text);
  if (!text.empty()) out = fs::path(text);
}

cqcc::WindowKind parse_window_kind(const std::string& token, IssueList& issues) {
  if (token == "hamming") return cqcc::WindowKind::Hamming;
  if (token == "rectangular") return cqcc::WindowKind::Rectangular;
  issues.add("cqcc.window: expected 'hamming' or 'rectangular', got '" + token + "'");
  return cqcc::WindowKind::Hamming;
}

cqcc::DctMode parse_dct_mode(const std::string& token, IssueList& issues) {
  if (token == "standard") return cqcc::DctMode::Standard;
  if (token == "literal") return cqcc::DctMode::Literal;
  issues.add("cqcc.dct_mode: expected 'standard' or 'literal', got '" + token + "'");
  return cqcc::DctMode::Standard;
}

void check_unit_interval(double value, const char* field, IssueList& issues) {
  if (!(value >= 0.0 && value <= 1.0)) {
    issues.add(std::string(field) + " must lie in [0, 1]");
  }
}

PipelineConfig config_from_json(const json& body) {
  if (!body.is_object()) {
    throw Error(ErrorKind::Validation, "config root must be an object");
  }
  IssueList issues;
  PipelineConfig config;

  {
    SectionReader top(body, "", issues);
    top.read("version", config.version);
    top.read_string("image_id", config.image_id);

    json empty = json::object();
    const json& paths = body.contains("paths") ? body["paths"] : empty;
    const json& cqcc_node = body.contains("cqcc") ? body["cqcc"] : empty;
    const json& cls = body.contains("classifier") ? body["classifier"] : empty;
    const json& det = body.contains("detection") ? body["detection"] : empty;
    const json& fusion = body.contains("fusion") ? body["fusion"] : empty;

    json ignore;
    top.read("paths", ignore);
    top.read("cqcc", ignore);
    top.read("classifier", ignore);
    top.read("detection", ignore);
    top.read("fusion", ignore);
    top.finish();

    if (config.version != kConfigVersion) {
      issues.add("version: expected " + std::to_string(kConfigVersion) + ", got " +
                 std::to_string(config.version));
    }

    {
      SectionReader reader(paths, "paths.", issues);
      read_optional_path(reader, "registry", config.paths.registry);
      read_optional_path(reader, "records", config.paths.records);
      read_optional_path(reader, "audio_manifest", config.paths.audio_manifest);
      read_optional_path(reader, "detections", config.paths.detections);
      read_optional_path(reader, "truths", config.paths.truths);
      read_optional_path(reader, "world_file", config.paths.world_file);
      std::string out_dir;
      reader.read_string("output_dir", out_dir);
      if (!out_dir.empty()) config.paths.output_dir = out_dir;
      reader.finish();
    }

    {
      SectionReader reader(cqcc_node, "cqcc.", issues);
      reader.read("q_factor", config.cqcc.q_factor);
      reader.read("window_len", config.cqcc.window_len);
      reader.read("hop", config.cqcc.hop);
      reader.read("bins", config.cqcc.bins);
      reader.read("compression_mu", config.cqcc.compression_mu);
      reader.read("epsilon", config.cqcc.epsilon);
      reader.read("n_cepstra", config.cqcc.n_cepstra);
      std::string window, dct_mode;
      reader.read_string("window", window);
      reader.read_string("dct_mode", dct_mode);
      if (!window.empty()) config.cqcc.window_kind = parse_window_kind(window, issues);
      if (!dct_mode.empty()) config.cqcc.dct_mode = parse_dct_mode(dct_mode, issues);
      reader.finish();
      try {
        config.cqcc.validate();
      } catch (const Error& err) {
        issues.add(std::string("cqcc: ") + err.what());
      }
    }

    {
      SectionReader reader(cls, "classifier.", issues);
      std::string kind;
      reader.read_string("kind", kind);
      if (!kind.empty()) {
        try {
          config.classifier.kind = classify::parse_model_kind(kind);
        } catch (const Error& err) {
          issues.add(std::string("classifier.kind: ") + err.what());
        }
      }
      reader.read("batch_size", config.classifier.train.batch_size);
      reader.read("learning_rate", config.classifier.train.learning_rate);
      reader.read("epochs", config.classifier.train.epochs);
      reader.read("seed", config.classifier.train.seed);
      reader.read("train_ratio", config.classifier.split.train_ratio);
      reader.read("val_ratio", config.classifier.split.val_ratio);
      reader.read("test_ratio", config.classifier.split.test_ratio);
      reader.finish();
      config.classifier.split.seed = config.classifier.train.seed;
      if (config.classifier.train.batch_size == 0) {
        issues.add("classifier.batch_size must be at least 1");
      }
      if (!(config.classifier.train.learning_rate > 0.0) ||
          !std::isfinite(config.classifier.train.learning_rate)) {
        issues.add("classifier.learning_rate must be positive and finite");
      }
      if (config.classifier.train.epochs == 0) {
        issues.add("classifier.epochs must be at least 1");
      }
      try {
        config.classifier.split.validate();
      } catch (const Error& err) {
        issues.add(std::string("classifier: ") + err.what());
      }
    }

    {
      SectionReader reader(det, "detection.", issues);
      reader.read("conf_threshold", config.detection.conf_threshold);
      reader.read("iou_threshold", config.detection.iou_threshold);
      reader.read("network_size", config.detection.network_size);
      reader.read("alignment_alpha", config.detection.alignment_alpha);
      reader.read("alignment_beta", config.detection.alignment_beta);
      reader.read("alignment_m", config.detection.alignment_m);
      reader.read("operating_confidence", config.detection.operating_confidence);
      reader.read("original_width", config.detection.original_width);
      reader.read("original_height", config.detection.original_height);
      reader.finish();
      check_unit_interval(config.detection.conf_threshold,
                          "detection.conf_threshold", issues);
      check_unit_interval(config.detection.iou_threshold,
                          "detection.iou_threshold", issues);
      check_unit_interval(config.detection.operating_confidence,
                          "detection.operating_confidence", issues);
      if (config.detection.network_size == 0) {
        issues.add("detection.network_size must be positive");
      }
      if (!std::isfinite(config.detection.alignment_alpha) ||
          !std::isfinite(config.detection.alignment_beta)) {
        issues.add("detection.alignment exponents must be finite");
      }
      if (config.detection.original_width < 0.0 ||
          config.detection.original_height < 0.0 ||
          !std::isfinite(config.detection.original_width) ||
          !std::isfinite(config.detection.original_height)) {
        issues.add("detection.original_width/original_height must be non-negative");
      }
    }

    {
      SectionReader reader(fusion, "fusion.", issues);
      reader.read("radius_m", config.fusion.radius_m);
      reader.finish();
      if (!(config.fusion.radius_m > 0.0) || !std::isfinite(config.fusion.radius_m)) {
        issues.add("fusion.radius_m must be positive");
      }
    }
  }

  const struct {
    const char* name;
    const std::optional<fs::path>* path;
  } input_paths[] = {
      {"paths.registry", &config.paths.registry},
      {"paths.records", &config.paths.records},
      {"paths.audio_manifest", &config.paths.audio_manifest},
      {"paths.detections", &config.paths.detections},
      {"paths.truths", &config.paths.truths},
      {"paths.world_file", &config.paths.world_file},
  };
  for (const auto& entry : input_paths) {
    if (entry.path->has_value() && !fs::exists(**entry.path)) {
      issues.add(std::string(entry.name) + ": file not found: " +
                 (*entry.path)->string());
    }
  }

  if (!issues.issues.empty()) {
    throw Error(ErrorKind::Validation, join_issues(issues.issues));
  }
  return config;
}

json apply_overrides(json body, const std::vector<std::string>& overrides) {
  for (const std::string& override_text : overrides) {
    const std::size_t eq = override_text.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorKind::Validation,
                  "override must look like key=value, got '" + override_text + "'");
    }
    std::string key = override_text.substr(0, eq);
    const std::string value_text = override_text.substr(eq + 1);
    std::replace(key.begin(), key.end(), '.', '/');
    json value;
    try {
      value = json::parse(value_text);
    } catch (const json::exception&) {
      value = value_text;  // unquoted strings pass through verbatim
    }
    body[json::json_pointer("/" + key)] = value;
  }
  return body;
}

}  // namespace

PipelineConfig validate_config_text(const std::string& text,
                                    const std::vector<std::string>& overrides) {
  json body;
  try {
    body = json::parse(text);
  } catch (const json::exception& err) {
    throw Error(ErrorKind::Format, std::string("config parse: ") + err.what());
  }
  return config_from_json(apply_overrides(std::move(body), overrides));
}

PipelineConfig validate_config(const std::filesystem::path& path,
                               const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return validate_config_text(buffer.str(), overrides);
}

std::string config_to_json(const PipelineConfig& config) {
  json paths = json::object();
  auto put_path = [&](const char* key, const std::optional<fs::path>& path) {
    if (path) paths[key] = path->string();
  };
  put_path("registry", config.paths.registry);
  put_path("records", config.paths.records);
  put_path("audio_manifest", config.paths.audio_manifest);
  put_path("detections", config.paths.detections);
  put_path("truths", config.paths.truths);
  put_path("world_file", config.paths.world_file);
  paths["output_dir"] = config.paths.output_dir.string();

  const json body{
      {"version", config.version},
      {"image_id", config.image_id},
      {"paths", paths},
      {"cqcc",
       {{"q_factor", config.cqcc.q_factor},
        {"window_len", config.cqcc.window_len},
        {"hop", config.cqcc.hop},
        {"bins", config.cqcc.bins},
        {"compression_mu", config.cqcc.compression_mu},
        {"epsilon", config.cqcc.epsilon},
        {"n_cepstra", config.cqcc.n_cepstra},
        {"window", config.cqcc.window_kind == cqcc::WindowKind::Hamming
                       ? "hamming"
                       : "rectangular"},
        {"dct_mode", config.cqcc.dct_mode == cqcc::DctMode::Standard ? "standard"
                                                                     : "literal"}}},
      {"classifier",
       {{"kind", classify::to_string(config.classifier.kind)},
        {"batch_size", config.classifier.train.batch_size},
        {"learning_rate", config.classifier.train.learning_rate},
        {"epochs", config.classifier.train.epochs},
        {"seed", config.classifier.train.seed},
        {"train_ratio", config.classifier.split.train_ratio},
        {"val_ratio", config.classifier.split.val_ratio},
        {"test_ratio", config.classifier.split.test_ratio}}},
      {"detection",
       {{"conf_threshold", config.detection.conf_threshold},
        {"iou_threshold", config.detection.iou_threshold},
        {"network_size", config.detection.network_size},
        {"alignment_alpha", config.detection.alignment_alpha},
        {"alignment_beta", config.detection.alignment_beta},
        {"alignment_m", config.detection.alignment_m},
        {"operating_confidence", config.detection.operating_confidence},
        {"original_width", config.detection.original_width},
        {"original_height", config.detection.original_height}}},
      {"fusion", {{"radius_m", config.fusion.radius_m}}},
  };
  return body.dump(2);
}

bool RunManifest::all_ok() const {
  return std::none_of(stages.begin(), stages.end(), [](const StageResult& stage) {
    return stage.status == "failed";
  });
}

const StageResult* RunManifest::find_stage(const std::string& name) const {
  for (const StageResult& stage : stages) {
    if (stage.name == name) return &stage;
  }
  return nullptr;
}

namespace {

struct StageScope {
  RunManifest& manifest;
  StageResult result;
  std::chrono::steady_clock::time_point start;

  StageScope(RunManifest& m, std::string name)
      : manifest(m), start(std::chrono::steady_clock::now()) {
    result.name = std::move(name);
    result.status = "ok";
  }

  void skip(const std::string& why) {
    result.status = "skipped";
    result.detail = why;
  }

  void fail(const std::string& why) {
    result.status = "failed";
    result.detail = why;
  }

  ~StageScope() {
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    manifest.stages.push_back(result);
  }
};

fs::path resolve_relative(const fs::path& base_file, const fs::path& path) {
  if (path.is_absolute()) return path;
  return base_file.parent_path() / path;
}

void register_artifact(RunManifest& manifest, const fs::path& output_dir,
                       const std::string& name) {
  manifest.artifacts[name] = ww::file_digest(output_dir / name);
}

struct ExamplesFromManifest {
  std::vector<classify::TrainExample> examples;
  std::size_t failures = 0;
};

ExamplesFromManifest examples_for(const sensor::DatasetManifest& manifest,
                                  const fs::path& manifest_path,
                                  const cqcc::CqccConfig& cfg) {
  ExamplesFromManifest out;
  for (const sensor::ManifestRecord& record : manifest.records) {
    try {
      const audio::AudioClip clip =
          audio::read_wav(resolve_relative(manifest_path, record.path));
      const cqcc::RealMatrix features = cqcc::cqcc_features(clip, cfg);
      out.examples.push_back(classify::TrainExample{
          classify::pool_features(features),
          record.label == sensor::Label::Infested});
    } catch (const Error&) {
      ++out.failures;
    }
  }
  return out;
}

std::map<std::string, fuse::DeviceClassification> load_statuses_csv(
    const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::Format, "empty statuses file: " + path.string());
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "device_id,label,score") {
    throw Error(ErrorKind::Format,
                "statuses header must be 'device_id,label,score', got '" + line + "'");
  }
  std::map<std::string, fuse::DeviceClassification> statuses;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t first = line.find(',');
    const std::size_t second = line.find(',', first + 1);
    if (first == std::string::npos || second == std::string::npos) {
      throw Error(ErrorKind::Format, "bad statuses row: '" + line + "'");
    }
    const std::string device_id = line.substr(0, first);
    const std::string label = line.substr(first + 1, second - first - 1);
    const std::string score_text = line.substr(second + 1);
    double score = 0.0;
    const auto [ptr, ec] = std::from_chars(
        score_text.data(), score_text.data() + score_text.size(), score);
    if (ec != std::errc() || ptr != score_text.data() + score_text.size()) {
      throw Error(ErrorKind::Format, "bad status score: '" + line + "'");
    }
    if (score < 0.0 || score > 1.0) {
      throw Error(ErrorKind::Validation, "status score out of [0, 1]: '" + line + "'");
    }
    statuses[device_id] =
        fuse::DeviceClassification{fuse::parse_status(label) == fuse::Status::Infested,
                                   score};
  }
  return statuses;
}

void save_statuses_csv(const fs::path& path,
                       const std::map<std::string, fuse::DeviceClassification>& statuses) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  out << "device_id,label,score\n";
  for (const auto& [device_id, cls] : statuses) {
    out << device_id << ','
        << (cls.infested ? "infested" : "not_infested") << ',' << cls.score << "\n";
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config,
                         const StageSelection& selection) {
  RunManifest manifest;
  manifest.started_at = now_utc_iso8601();
  manifest.config_json = config_to_json(config);

  const fs::path out_dir = config.paths.output_dir;
  fs::create_directories(out_dir);

  std::vector<sensor::SensorRecord> records;
  bool records_loaded = false;
  std::optional<classify::ClassifierModel> model;
  std::map<std::string, fuse::DeviceClassification> statuses;
  bool statuses_available = false;
  std::vector<detect::Detection> final_detections;
  bool detections_ready = false;

  if (selection.ingest) {
    StageScope stage(manifest, "ingest");
    if (!config.paths.records) {
      stage.skip("no sensor records configured");
    } else {
      try {
        std::ifstream in(*config.paths.records, std::ios::binary);
        if (!in) {
          throw Error(ErrorKind::Io, "cannot open " + config.paths.records->string());
        }
        sensor::IngestResult result = sensor::ingest_stream(in);
        records = std::move(result.records);
        records_loaded = true;
        stage.result.detail = std::to_string(records.size()) + " records, " +
                              std::to_string(result.rejections.size()) + " rejected";
      } catch (const std::exception& err) {
        stage.fail(err.what());
      }
    }
  }

  if (selection.train) {
    StageScope stage(manifest, "train");
    if (!config.paths.audio_manifest) {
      stage.skip("no labeled audio manifest configured");
    } else {
      try {
        const sensor::DatasetManifest labeled =
            sensor::load_manifest(*config.paths.audio_manifest);
        const classify::SplitResult split =
            classify::split_dataset(labeled, config.classifier.split);
        const ExamplesFromManifest train_set =
            examples_for(split.train, *config.paths.audio_manifest, config.cqcc);
        const ExamplesFromManifest test_set =
            examples_for(split.test, *config.paths.audio_manifest, config.cqcc);
        const classify::TrainOutcome outcome = classify::train(
            config.classifier.kind, train_set.examples, config.classifier.train);
        model = outcome.model;
        classify::save_model(out_dir / "model.json", *model);
        register_artifact(manifest, out_dir, "model.json");
        if (!test_set.examples.empty()) {
          manifest.classification = classify::evaluate(*model, test_set.examples);
          classify::save_metrics(out_dir / "classification_metrics.json",
                                 *manifest.classification);
          register_artifact(manifest, out_dir, "classification_metrics.json");
        }
        stage.result.detail =
            "train=" + std::to_string(split.train.records.size()) +
            " val=" + std::to_string(split.val.records.size()) +
            " test=" + std::to_string(split.test.records.size()) +
            (train_set.failures + test_set.failures > 0
                 ? " unreadable=" + std::to_string(train_set.failures +
                                                   test_set.failures)
                 : "");
      } catch (const std::exception& err) {
        stage.fail(err.what());
      }
    }
  }

  if (selection.classify_devices) {
    StageScope stage(manifest, "classify-devices");
    if (!model && fs::exists(out_dir / "model.json")) {
      try {
        model = classify::load_model(out_dir / "model.json");
      } catch (const std::exception&) {
        // fall through; stage reports the missing classifier below
      }
    }
    if (!config.paths.records) {
      stage.skip("no sensor records configured");
    } else if (!records_loaded) {
      stage.skip("upstream ingest failed");
    } else if (records.empty()) {
      stage.skip("no sensor records available");
    } else if (!model) {
      stage.skip("no classifier available");
    } else {
      try {
        // Latest record per device wins; ties go to the later line.
        std::map<std::string, const sensor::SensorRecord*> latest;
        for (const sensor::SensorRecord& record : records) {
          if (!record.has_audio()) continue;
          auto it = latest.find(record.device_id);
          if (it == latest.end() ||
              record.captured_at_epoch_s >= it->second->captured_at_epoch_s) {
            latest[record.device_id] = &record;
          }
        }
        std::size_t failures = 0;
        for (const auto& [device_id, record] : latest) {
          try {
            audio::AudioClip clip;
            if (const auto* path = std::get_if<fs::path>(&record->audio)) {
              clip = audio::read_wav(resolve_relative(*config.paths.records, *path));
            } else {
              clip = std::get<audio::AudioClip>(record->audio);
            }
            const cqcc::RealMatrix features = cqcc::cqcc_features(clip, config.cqcc);
            const classify::Prediction prediction =
                classify::classify(*model, classify::pool_features(features));
            statuses[device_id] = fuse::DeviceClassification{
                prediction.label == sensor::Label::Infested, prediction.score};
          } catch (const Error&) {
            ++failures;
          }
        }
        statuses_available = true;
        save_statuses_csv(out_dir / "device_statuses.csv", statuses);
        register_artifact(manifest, out_dir, "device_statuses.csv");
        stage.result.detail = std::to_string(statuses.size()) + " devices classified" +
                              (failures > 0
                                   ? ", " + std::to_string(failures) + " unreadable"
                                   : "");
      } catch (const std::exception& err) {
        stage.fail(err.what());
      }
    }
  }

  if (selection.detections) {
    StageScope stage(manifest, "detections");
    if (!config.paths.detections) {
      stage.skip("no detection file configured");
    } else {
      try {
        const detect::DetectionFile loaded =
            detect::load_detections(*config.paths.detections);
        std::vector<detect::Detection> in_original;
        std::size_t dropped = 0;
        if (loaded.space == detect::CoordinateSpace::Network) {
          if (!(config.detection.original_width > 0.0) ||
              !(config.detection.original_height > 0.0)) {
            throw Error(ErrorKind::Validation,
                        "detection.original_width/original_height required to rescale "
                        "network-space detections");
          }
          const detect::LetterboxTransform t = detect::LetterboxTransform::fit(
              config.detection.network_size, config.detection.original_width,
              config.detection.original_height);
          for (const detect::Detection& det : loaded.detections) {
            const std::optional<detect::BoundingBox> box =
                detect::letterbox_to_original(det.box, t);
            if (!box) {
              ++dropped;
              continue;
            }
            detect::Detection mapped = det;
            mapped.box = *box;
            in_original.push_back(std::move(mapped));
          }
        } else {
          in_original = loaded.detections;
        }
        final_detections =
            detect::nms(in_original, config.detection.conf_threshold,
                        config.detection.iou_threshold);
        detections_ready = true;
        detect::save_detections(out_dir / "detections_nms.txt",
                                detect::CoordinateSpace::Original, final_detections);
        register_artifact(manifest, out_dir, "detections_nms.txt");
        stage.result.detail =
            std::to_string(loaded.detections.size()) + " in, " +
            std::to_string(final_detections.size()) + " kept" +
            (dropped > 0 ? ", " + std::to_string(dropped) + " off-canvas" : "");
      } catch (const std::exception& err) {
        stage.fail(err.what());
      }
    }
  }

  if (selection.detection_eval) {
    StageScope stage(manifest, "detection-eval");
    if (!detections_ready) {
      stage.skip(config.paths.detections ? "upstream detection stage failed"
                                         : "no detection file configured");
    } else if (!config.paths.truths) {
      stage.skip("no ground-truth file configured");
    } else {
      try {
        const std::vector<detect::GroundTruth> truths =
            detect::load_truths(*config.paths.truths);
        manifest.detection_eval = detect::evaluate_detections(
            final_detections, truths, config.detection.operating_confidence);
        detect::save_eval_report(out_dir / "detection_eval.json",
                                 *manifest.detection_eval);
        register_artifact(manifest, out_dir, "detection_eval.json");
        std::ostringstream detail;
        detail.precision(6);
        detail << "map50=" << manifest.detection_eval->map50
               << " map50_95=" << manifest.detection_eval->map50_95;
        stage.result.detail = detail.str();
      } catch (const std::exception& err) {
        stage.fail(err.what());
      }
    }
  }

  if (selection.map) {
    StageScope stage(manifest, "map");
    if (!detections_ready) {
      stage.skip(config.paths.detections ? "upstream detection stage failed"
                                         : "no detection file configured");
    } else if (!config.paths.world_file) {
      stage.skip("no world file configured");
    } else if (!config.paths.registry) {
      stage.skip("no sensor registry configured");
    } else {
      try {
        if (!statuses_available && fs::exists(out_dir / "device_statuses.csv")) {
          statuses = load_statuses_csv(out_dir / "device_statuses.csv");
        }
        const geo::PixelToGeoTransform t =
            geo::load_world_file(*config.paths.world_file);
        const sensor::SensorRegistry registry =
            sensor::load_registry(*config.paths.registry);
        std::vector<detect::BoundingBox> palm_boxes;
        for (const detect::Detection& det : final_detections) {
          if (det.class_id == detect::ObjectClass::Palm) palm_boxes.push_back(det.box);
        }
        const std::vector<fuse::MatchedBox> matched = fuse::match_sensors(
            palm_boxes, registry, statuses, t, config.fusion.radius_m);
        const fuse::RpwMapDocument doc =
            fuse::generate_map(config.image_id, matched, t);
        fuse::write_geojson(out_dir / "map.geojson", doc);
        register_artifact(manifest, out_dir, "map.geojson");

        double width = config.detection.original_width;
        double height = config.detection.original_height;
        if (!(width > 0.0) || !(height > 0.0)) {
          width = height = 1.0;
          for (const fuse::MapEntry& entry : doc.entries) {
            width = std::max(width, entry.box.x2);
            height = std::max(height, entry.box.y2);
          }
        }
        fuse::write_svg(out_dir / "map.svg", doc, width, height);
        register_artifact(manifest, out_dir, "map.svg");

        manifest.map_counts = doc.counts;
        stage.result.detail = "infested=" + std::to_string(doc.counts.infested) +
                              " not_infested=" + std::to_string(doc.counts.not_infested) +
                              " unknown=" + std::to_string(doc.counts.unknown);
      } catch (const std::exception& err) {
        stage.fail(err.what());
      }
    }
  }

  save_manifest(out_dir / "run_manifest.json", manifest);
  return manifest;
}

void save_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  json stages = json::array();
  for (const StageResult& stage : manifest.stages) {
    stages.push_back(json{{"name", stage.name},
                          {"status", stage.status},
                          {"detail", stage.detail},
                          {"seconds", stage.seconds}});
  }

  json summary = json::object();
  if (manifest.classification) {
    const classify::ClassificationMetrics& m = *manifest.classification;
    summary["classification"] = json{
        {"accuracy", m.accuracy}, {"precision", m.precision},
        {"recall", m.recall},     {"f1", m.f1},
        {"tp", m.tp},             {"fp", m.fp},
        {"tn", m.tn},             {"fn", m.fn},
        {"degenerate_precision", m.degenerate_precision},
        {"degenerate_recall", m.degenerate_recall}};
  }
  if (manifest.detection_eval) {
    const detect::EvalReport& r = *manifest.detection_eval;
    json per_class = json::object();
    for (const detect::ClassAp& entry : r.per_class) {
      per_class[detect::to_string(entry.class_id)] =
          json{{"ap50", entry.ap50},
               {"ap50_95", entry.ap50_95},
               {"degenerate", entry.degenerate}};
    }
    summary["detection_eval"] = json{{"precision", r.precision},
                                     {"recall", r.recall},
                                     {"map50", r.map50},
                                     {"map50_95", r.map50_95},
                                     {"per_class", per_class},
                                     {"degenerate", r.degenerate}};
  }
  if (manifest.map_counts) {
    summary["map_counts"] = json{{"infested", manifest.map_counts->infested},
                                 {"not_infested", manifest.map_counts->not_infested},
                                 {"unknown", manifest.map_counts->unknown}};
  }

  const json body{
      {"version", 1},
      {"toolkit_version", manifest.toolkit_version},
      {"started_at", manifest.started_at},
      {"config", json::parse(manifest.config_json)},
      {"stages", stages},
      {"artifacts", manifest.artifacts},
      {"summary", summary},
  };

  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << body.dump(2) << "\n";
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace ww::pipeline
