// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_SENSOR_HPP
#define WW_SENSOR_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ww/audio.hpp"
#include "ww/geo.hpp"

namespace ww::sensor {

/// Audio attachment of a record: absent, a file reference, or inline samples.
using AudioRef =
    std::variant<std::monostate, std::filesystem::path, audio::AudioClip>;

struct SensorRecord {
  std::string device_id;
  std::int64_t captured_at_epoch_s = 0;  // UTC
  std::string captured_at_text;          // original ISO-8601 form
  geo::GeoPoint geo;
  std::optional<double> temperature_c;
  std::optional<double> humidity_pct;
  AudioRef audio;

  bool has_audio() const {
    return !std::holds_alternative<std::monostate>(audio);
  }
};

/// Device-id -> coordinates lookup. Immutable once loaded.
struct SensorRegistry {
  std::map<std::string, geo::GeoPoint> entries;

  const geo::GeoPoint* find(const std::string& device_id) const {
    auto it = entries.find(device_id);
    return it == entries.end() ? nullptr : &it->second;
  }
};

enum class Label { Infested, NotInfested, Unlabeled };

const char* to_string(Label label);
Label parse_label(const std::string& token);

struct ManifestRecord {
  std::string path;
  Label label = Label::Unlabeled;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;

  std::size_t count(Label label) const;
};

/// Loads the registry CSV (header `device_id,lat,lon`). Duplicate ids are a
/// conflict; out-of-bounds coordinates a validation error.
SensorRegistry load_registry(const std::filesystem::path& path);

void save_registry(const std::filesystem::path& path,
                   const SensorRegistry& registry);

/// Loads the dataset manifest CSV (header `path,label`).
DatasetManifest load_manifest(const std::filesystem::path& path);

void save_manifest(const std::filesystem::path& path,
                   const DatasetManifest& manifest);

/// Parses one wire-format line (a JSON object, see the record wire format)
/// into a validated SensorRecord. Throws on malformed or invalid lines.
SensorRecord parse_record_line(const std::string& line);

std::string record_to_line(const SensorRecord& record);

/// Maximum accepted wire line length.
inline constexpr std::size_t kMaxLineBytes = 1 << 20;

struct LineRejection {
  std::size_t line_number = 0;  // 1-based
  std::string reason;
};

struct IngestResult {
  std::vector<SensorRecord> records;
  std::vector<LineRejection> rejections;
};

/// Consumes newline-delimited records from a byte stream. Invalid lines are
/// reported and skipped; valid records are yielded in arrival order. An
/// oversized line (> kMaxLineBytes) is rejected without ending the stream.
IngestResult ingest_stream(std::istream& in);

std::vector<std::uint8_t> base64_decode(const std::string& text);
std::string base64_encode(std::span<const std::uint8_t> bytes);

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff]Z" to epoch seconds. Returns nullopt on
/// any malformed or out-of-range field.
std::optional<std::int64_t> parse_iso8601_utc(const std::string& text);

}  // namespace ww::sensor

#endif  // WW_SENSOR_HPP
