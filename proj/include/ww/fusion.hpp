// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_FUSION_HPP
#define WW_FUSION_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ww/detection.hpp"
#include "ww/geo.hpp"
#include "ww/sensor.hpp"

namespace ww::fuse {

enum class Status { Infested, NotInfested, Unknown };

const char* to_string(Status status);
Status parse_status(const std::string& token);

/// Fixed status palette: infested red, healthy blue, unmatched gray.
const char* status_color(Status status);

/// Infestation verdict attached to a detected palm. Classified verdicts carry
/// the score and source device; unknown carries neither.
struct PalmStatus {
  Status status = Status::Unknown;
  std::optional<double> score;
  std::optional<std::string> source_device;
};

/// Per-device classifier output keyed by device id.
struct DeviceClassification {
  bool infested = false;
  double score = 0.0;  // probability of infestation
};

struct MatchedBox {
  detect::BoundingBox box;
  PalmStatus status;
};

/// Matches detected palm boxes to classified sensor devices. Box location is
/// the georeferenced box center; candidate pairs within radius_m are claimed
/// globally nearest-first, so each device ends up on at most one box and the
/// pairing is independent of input order. Boxes with no device in range stay
/// unknown. Classified devices absent from the registry are a consistency
/// error.
std::vector<MatchedBox> match_sensors(
    std::span<const detect::BoundingBox> boxes,
    const sensor::SensorRegistry& registry,
    const std::map<std::string, DeviceClassification>& statuses,
    const geo::PixelToGeoTransform& t, double radius_m);

struct MapEntry {
  detect::BoundingBox box;
  geo::GeoPoint center;
  PalmStatus status;
  std::string color;
};

struct StatusCounts {
  std::size_t infested = 0;
  std::size_t not_infested = 0;
  std::size_t unknown = 0;

  std::size_t total() const { return infested + not_infested + unknown; }
};

struct RpwMapDocument {
  std::string image_id;
  std::vector<MapEntry> entries;
  geo::PixelToGeoTransform transform{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  StatusCounts counts;
};

RpwMapDocument generate_map(const std::string& image_id,
                            std::span<const MatchedBox> matched,
                            const geo::PixelToGeoTransform& t);

/// FeatureCollection of polygon features (georeferenced box corners,
/// longitude-first coordinates) with status/score/device_id/color properties.
void write_geojson(const std::filesystem::path& path, const RpwMapDocument& doc);

RpwMapDocument read_geojson(const std::filesystem::path& path);

/// Renders the document over a width x height pixel canvas: one box outline
/// per entry in its status color, plus a legend. Box coordinates are emitted
/// unchanged.
std::string render_svg(const RpwMapDocument& doc, double width, double height);

void write_svg(const std::filesystem::path& path, const RpwMapDocument& doc,
               double width, double height);

}  // namespace ww::fuse

#endif  // WW_FUSION_HPP
