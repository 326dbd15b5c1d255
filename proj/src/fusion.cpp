// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "ww/error.hpp"

namespace ww::fuse {
namespace {

using nlohmann::json;

geo::GeoPoint box_center_geo(const detect::BoundingBox& box,
                             const geo::PixelToGeoTransform& t) {
  return t.pixel_to_geo(
      geo::PixelPoint{(box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0});
}

void check_palm_status(const PalmStatus& status) {
  const bool classified = status.status != Status::Unknown;
  if (classified != status.score.has_value() ||
      classified != status.source_device.has_value()) {
    throw Error(ErrorKind::Validation,
                "classified statuses carry a score and a device; unknown carries neither");
  }
  if (status.score && (*status.score < 0.0 || *status.score > 1.0)) {
    throw Error(ErrorKind::Validation, "status score must lie in [0, 1]");
  }
}

}  // namespace

const char* to_string(Status status) {
  switch (status) {
    case Status::Infested: return "infested";
    case Status::NotInfested: return "not_infested";
    default: return "unknown";
  }
}

Status parse_status(const std::string& token) {
  if (token == "infested") return Status::Infested;
  if (token == "not_infested") return Status::NotInfested;
  if (token == "unknown") return Status::Unknown;
  throw Error(ErrorKind::Validation, "unknown palm status '" + token + "'");
}

const char* status_color(Status status) {
  switch (status) {
    case Status::Infested: return "#FF0000";
    case Status::NotInfested: return "#0000FF";
    default: return "#808080";
  }
}

std::vector<MatchedBox> match_sensors(
    std::span<const detect::BoundingBox> boxes,
    const sensor::SensorRegistry& registry,
    const std::map<std::string, DeviceClassification>& statuses,
    const geo::PixelToGeoTransform& t, double radius_m) {
  if (!(radius_m > 0.0) || !std::isfinite(radius_m)) {
    throw Error(ErrorKind::Domain, "matching radius must be positive");
  }
  for (const auto& [device_id, cls] : statuses) {
    if (!registry.find(device_id)) {
      throw Error(ErrorKind::Consistency,
                  "classified device '" + device_id + "' is not in the registry");
    }
    if (cls.score < 0.0 || cls.score > 1.0) {
      throw Error(ErrorKind::Validation,
                  "classification score out of [0, 1] for device '" + device_id + "'");
    }
  }

  std::vector<geo::GeoPoint> centers;
  centers.reserve(boxes.size());
  for (const detect::BoundingBox& box : boxes) {
    if (!box.valid()) {
      throw Error(ErrorKind::Validation, "palm box must have positive area");
    }
    centers.push_back(box_center_geo(box, t));
  }

  struct Candidate {
    double distance;
    std::size_t box_index;
    const std::string* device_id;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (const auto& [device_id, cls] : statuses) {
      const geo::GeoPoint* pos = registry.find(device_id);
      const double distance = geo::haversine_m(centers[i], *pos);
      if (distance <= radius_m) candidates.push_back({distance, i, &device_id});
    }
  }
  // Content-based ordering keeps the pairing invariant under any permutation
  // of the inputs.
  std::sort(candidates.begin(), candidates.end(),
            [&](const Candidate& lhs, const Candidate& rhs) {
              if (lhs.distance != rhs.distance) return lhs.distance < rhs.distance;
              if (*lhs.device_id != *rhs.device_id)
                return *lhs.device_id < *rhs.device_id;
              const detect::BoundingBox& a = boxes[lhs.box_index];
              const detect::BoundingBox& b = boxes[rhs.box_index];
              return std::tie(a.x1, a.y1, a.x2, a.y2) <
                     std::tie(b.x1, b.y1, b.x2, b.y2);
            });

  std::vector<MatchedBox> out(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) out[i].box = boxes[i];

  std::vector<bool> box_taken(boxes.size(), false);
  std::map<std::string, bool> device_taken;
  for (const Candidate& cand : candidates) {
    if (box_taken[cand.box_index] || device_taken[*cand.device_id]) continue;
    box_taken[cand.box_index] = true;
    device_taken[*cand.device_id] = true;
    const DeviceClassification& cls = statuses.at(*cand.device_id);
    PalmStatus& status = out[cand.box_index].status;
    status.status = cls.infested ? Status::Infested : Status::NotInfested;
    status.score = cls.score;
    status.source_device = *cand.device_id;
  }
  return out;
}

RpwMapDocument generate_map(const std::string& image_id,
                            std::span<const MatchedBox> matched,
                            const geo::PixelToGeoTransform& t) {
  RpwMapDocument doc;
  doc.image_id = image_id;
  doc.transform = t;
  for (const MatchedBox& m : matched) {
    if (!m.box.valid()) {
      throw Error(ErrorKind::Validation, "map entries need boxes with positive area");
    }
    check_palm_status(m.status);
    MapEntry entry;
    entry.box = m.box;
    entry.center = box_center_geo(m.box, t);
    entry.status = m.status;
    entry.color = status_color(m.status.status);
    switch (m.status.status) {
      case Status::Infested: ++doc.counts.infested; break;
      case Status::NotInfested: ++doc.counts.not_infested; break;
      default: ++doc.counts.unknown; break;
    }
    doc.entries.push_back(std::move(entry));
  }
  return doc;
}

void write_geojson(const std::filesystem::path& path, const RpwMapDocument& doc) {
  json features = json::array();
  for (const MapEntry& entry : doc.entries) {
    const detect::BoundingBox& b = entry.box;
    json ring = json::array();
    const geo::PixelPoint corners[5] = {{b.x1, b.y1}, {b.x2, b.y1}, {b.x2, b.y2},
                                        {b.x1, b.y2}, {b.x1, b.y1}};
    for (const geo::PixelPoint& corner : corners) {
      const geo::GeoPoint g = doc.transform.pixel_to_geo(corner);
      ring.push_back(json::array({g.lon, g.lat}));
    }
    json props{
        {"status", to_string(entry.status.status)},
        {"color", entry.color},
        {"score", entry.status.score ? json(*entry.status.score) : json(nullptr)},
        {"device_id", entry.status.source_device ? json(*entry.status.source_device)
                                                 : json(nullptr)},
        {"box_px", json::array({b.x1, b.y1, b.x2, b.y2})},
    };
    features.push_back(json{{"type", "Feature"},
                            {"geometry", json{{"type", "Polygon"},
                                              {"coordinates", json::array({ring})}}},
                            {"properties", props}});
  }

  const json body{
      {"type", "FeatureCollection"},
      {"image_id", doc.image_id},
      {"transform", json::array({doc.transform.a(), doc.transform.b(),
                                 doc.transform.c(), doc.transform.d(),
                                 doc.transform.e(), doc.transform.f()})},
      {"summary", json{{"infested", doc.counts.infested},
                       {"not_infested", doc.counts.not_infested},
                       {"unknown", doc.counts.unknown}}},
      {"features", features},
  };

  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << body.dump(2) << "\n";
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

RpwMapDocument read_geojson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  json body;
  try {
    in >> body;
  } catch (const json::exception& err) {
    throw Error(ErrorKind::Format, std::string("GeoJSON parse: ") + err.what());
  }
  try {
    if (body.at("type").get<std::string>() != "FeatureCollection") {
      throw Error(ErrorKind::Format, "expected a FeatureCollection");
    }
    const auto coeffs = body.at("transform");
    geo::PixelToGeoTransform t(coeffs.at(0).get<double>(), coeffs.at(1).get<double>(),
                               coeffs.at(2).get<double>(), coeffs.at(3).get<double>(),
                               coeffs.at(4).get<double>(), coeffs.at(5).get<double>());
    std::vector<MatchedBox> matched;
    for (const json& feature : body.at("features")) {
      const json& props = feature.at("properties");
      const json& box_px = props.at("box_px");
      MatchedBox m;
      m.box = detect::BoundingBox{box_px.at(0).get<double>(), box_px.at(1).get<double>(),
                                  box_px.at(2).get<double>(), box_px.at(3).get<double>()};
      m.status.status = parse_status(props.at("status").get<std::string>());
      if (!props.at("score").is_null()) m.status.score = props.at("score").get<double>();
      if (!props.at("device_id").is_null()) {
        m.status.source_device = props.at("device_id").get<std::string>();
      }
      matched.push_back(std::move(m));
    }
    return generate_map(body.at("image_id").get<std::string>(), matched, t);
  } catch (const json::exception& err) {
    throw Error(ErrorKind::Format, std::string("GeoJSON structure: ") + err.what());
  }
}

std::string render_svg(const RpwMapDocument& doc, double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw Error(ErrorKind::Domain, "SVG canvas needs positive dimensions");
  }
  std::ostringstream out;
  out.precision(17);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
      << "\">\n";
  out << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"#FFFFFF\" stroke=\"#000000\"/>\n";
  for (const MapEntry& entry : doc.entries) {
    const detect::BoundingBox& b = entry.box;
    out << "  <rect class=\"palm\" x=\"" << b.x1 << "\" y=\"" << b.y1
        << "\" width=\"" << b.width() << "\" height=\"" << b.height()
        << "\" fill=\"none\" stroke=\"" << entry.color << "\" stroke-width=\"3\"/>\n";
  }
  const struct {
    Status status;
    const char* label;
  } legend[] = {{Status::Infested, "infested"},
                {Status::NotInfested, "not infested"},
                {Status::Unknown, "unknown"}};
  out << "  <g font-family=\"sans-serif\" font-size=\"14\">\n";
  double y = 20.0;
  for (const auto& item : legend) {
    out << "    <rect x=\"10\" y=\"" << y - 11 << "\" width=\"14\" height=\"14\" fill=\""
        << status_color(item.status) << "\"/>\n";
    out << "    <text x=\"30\" y=\"" << y << "\">" << item.label << "</text>\n";
    y += 20.0;
  }
  out << "  </g>\n</svg>\n";
  return out.str();
}

void write_svg(const std::filesystem::path& path, const RpwMapDocument& doc,
               double width, double height) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << render_svg(doc, width, height);
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace ww::fuse
