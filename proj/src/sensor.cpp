// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/sensor.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ww/error.hpp"

namespace ww::sensor {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream row(line);
  while (std::getline(row, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double_field(const std::string& text, const std::string& what) {
  const std::string t = strip(text);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw Error(ErrorKind::Validation, what + " is not a number: " + text);
  }
  return value;
}

// Days since 1970-01-01 for a proleptic Gregorian civil date.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

const char* to_string(Label label) {
  switch (label) {
    case Label::Infested: return "infested";
    case Label::NotInfested: return "not_infested";
    case Label::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

Label parse_label(const std::string& token) {
  if (token == "infested") return Label::Infested;
  if (token == "not_infested") return Label::NotInfested;
  if (token == "unlabeled") return Label::Unlabeled;
  throw Error(ErrorKind::Validation, "unknown label token: " + token);
}

std::size_t DatasetManifest::count(Label label) const {
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.label == label) ++n;
  }
  return n;
}

SensorRegistry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || strip(line) != "device_id,lat,lon") {
    throw Error(ErrorKind::Format,
                "registry must start with header device_id,lat,lon");
  }

  SensorRegistry registry;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    auto fields = split_csv_row(line);
    if (fields.size() != 3) {
      throw Error(ErrorKind::Format, "registry line " + std::to_string(line_no) +
                                         ": expected 3 fields");
    }
    const std::string id = strip(fields[0]);
    if (id.empty()) {
      throw Error(ErrorKind::Validation,
                  "registry line " + std::to_string(line_no) + ": empty device_id");
    }
    geo::GeoPoint p{parse_double_field(fields[1], "lat"),
                    parse_double_field(fields[2], "lon")};
    if (!geo::coordinates_valid(p)) {
      throw Error(ErrorKind::Validation,
                  "registry line " + std::to_string(line_no) +
                      ": coordinates out of bounds for " + id);
    }
    auto [_, inserted] = registry.entries.emplace(id, p);
    if (!inserted) {
      throw Error(ErrorKind::Conflict, "duplicate device_id " + id);
    }
  }
  return registry;
}

void save_registry(const std::filesystem::path& path,
                   const SensorRegistry& registry) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.precision(12);
  out << "device_id,lat,lon\n";
  for (const auto& [id, p] : registry.entries) {
    out << id << "," << p.lat << "," << p.lon << "\n";
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || strip(line) != "path,label") {
    throw Error(ErrorKind::Format, "manifest must start with header path,label");
  }

  DatasetManifest manifest;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    // Paths may contain commas only if the label still parses; split on the
    // last comma so plain paths with commas do not need quoting.
    auto pos = line.find_last_of(',');
    if (pos == std::string::npos) {
      throw Error(ErrorKind::Format, "manifest line " + std::to_string(line_no) +
                                         ": expected path,label");
    }
    ManifestRecord record;
    record.path = strip(line.substr(0, pos));
    record.label = parse_label(strip(line.substr(pos + 1)));
    manifest.records.push_back(std::move(record));
  }
  return manifest;
}

void save_manifest(const std::filesystem::path& path,
                   const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "path,label\n";
  for (const auto& r : manifest.records) {
    out << r.path << "," << to_string(r.label) << "\n";
  }
}

std::optional<std::int64_t> parse_iso8601_utc(const std::string& text) {
  // YYYY-MM-DDTHH:MM:SS[.fraction]Z
  if (text.size() < 20) return std::nullopt;
  auto digits = [&](std::size_t pos, std::size_t n, int& out) {
    out = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (text[i] < '0' || text[i] > '9') return false;
      out = out * 10 + (text[i] - '0');
    }
    return true;
  };
  int year, month, day, hour, minute, second;
  if (!digits(0, 4, year) || text[4] != '-' || !digits(5, 2, month) ||
      text[7] != '-' || !digits(8, 2, day) || text[10] != 'T' ||
      !digits(11, 2, hour) || text[13] != ':' || !digits(14, 2, minute) ||
      text[16] != ':' || !digits(17, 2, second)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  if (text[pos] == '.') {
    ++pos;
    std::size_t start = pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    if (pos == start) return std::nullopt;
  }
  if (pos + 1 != text.size() || text[pos] != 'Z') return std::nullopt;

  if (month < 1 || month > 12 || hour > 23 || minute > 59 || second > 60) {
    return std::nullopt;
  }
  constexpr int kMonthDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  const int days_in_month =
      month == 2 && leap ? 29 : kMonthDays[month - 1];
  if (day < 1 || day > days_in_month) return std::nullopt;
  return days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 +
         second;
}

namespace {

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::array<std::int8_t, 256> build_b64_lut() {
  std::array<std::int8_t, 256> lut{};
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) {
    lut[static_cast<unsigned char>(kB64Alphabet[i])] = static_cast<std::int8_t>(i);
  }
  return lut;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back(kB64Alphabet[v & 63]);
  }
  if (i + 1 == bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == bytes.size()) {
    std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out += "=";
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  static const auto lut = build_b64_lut();
  if (text.size() % 4 != 0) {
    throw Error(ErrorKind::Format, "base64 length not a multiple of 4");
  }
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      std::int8_t s = lut[static_cast<unsigned char>(c)];
      if (s < 0 || pad > 0) {
        throw Error(ErrorKind::Format, "invalid base64 character");
      }
      v = (v << 6) | static_cast<std::uint32_t>(s);
    }
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  return out;
}

SensorRecord parse_record_line(const std::string& line) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Format, std::string("bad record syntax: ") + e.what());
  }
  if (!obj.is_object()) {
    throw Error(ErrorKind::Format, "record line must be an object");
  }

  SensorRecord record;
  auto require = [&](const char* key) -> const json& {
    auto it = obj.find(key);
    if (it == obj.end()) {
      throw Error(ErrorKind::Validation, std::string("missing key ") + key);
    }
    return *it;
  };

  const json& id = require("device_id");
  if (!id.is_string() || id.get<std::string>().empty()) {
    throw Error(ErrorKind::Validation, "device_id must be a non-empty string");
  }
  record.device_id = id.get<std::string>();

  const json& ts = require("captured_at");
  if (!ts.is_string()) {
    throw Error(ErrorKind::Validation, "captured_at must be a string");
  }
  record.captured_at_text = ts.get<std::string>();
  auto epoch = parse_iso8601_utc(record.captured_at_text);
  if (!epoch) {
    throw Error(ErrorKind::Validation,
                "captured_at is not ISO-8601 UTC: " + record.captured_at_text);
  }
  record.captured_at_epoch_s = *epoch;

  const json& lat = require("lat");
  const json& lon = require("lon");
  if (!lat.is_number() || !lon.is_number()) {
    throw Error(ErrorKind::Validation, "lat/lon must be numbers");
  }
  record.geo = geo::GeoPoint{lat.get<double>(), lon.get<double>()};
  if (!geo::coordinates_valid(record.geo)) {
    throw Error(ErrorKind::Validation, "coordinates out of bounds");
  }

  if (auto it = obj.find("temperature_c"); it != obj.end() && !it->is_null()) {
    if (!it->is_number()) {
      throw Error(ErrorKind::Validation, "temperature_c must be a number");
    }
    record.temperature_c = it->get<double>();
  }
  if (auto it = obj.find("humidity_pct"); it != obj.end() && !it->is_null()) {
    if (!it->is_number()) {
      throw Error(ErrorKind::Validation, "humidity_pct must be a number");
    }
    double h = it->get<double>();
    if (h < 0.0 || h > 100.0) {
      throw Error(ErrorKind::Validation, "humidity_pct outside [0, 100]");
    }
    record.humidity_pct = h;
  }

  const bool has_b64 = obj.contains("audio_b64") && !obj["audio_b64"].is_null();
  const bool has_path = obj.contains("audio_path") && !obj["audio_path"].is_null();
  if (has_b64 && has_path) {
    throw Error(ErrorKind::Validation,
                "audio_b64 and audio_path are mutually exclusive");
  }
  if (has_b64) {
    const json& b64 = obj["audio_b64"];
    if (!b64.is_string()) {
      throw Error(ErrorKind::Validation, "audio_b64 must be a string");
    }
    auto bytes = base64_decode(b64.get<std::string>());
    record.audio = audio::parse_wav(bytes);
  } else if (has_path) {
    const json& p = obj["audio_path"];
    if (!p.is_string() || p.get<std::string>().empty()) {
      throw Error(ErrorKind::Validation, "audio_path must be a non-empty string");
    }
    record.audio = std::filesystem::path(p.get<std::string>());
  }
  return record;
}

std::string record_to_line(const SensorRecord& record) {
  json obj;
  obj["device_id"] = record.device_id;
  obj["captured_at"] = record.captured_at_text;
  obj["lat"] = record.geo.lat;
  obj["lon"] = record.geo.lon;
  if (record.temperature_c) obj["temperature_c"] = *record.temperature_c;
  if (record.humidity_pct) obj["humidity_pct"] = *record.humidity_pct;
  if (const auto* path = std::get_if<std::filesystem::path>(&record.audio)) {
    obj["audio_path"] = path->string();
  } else if (const auto* clip = std::get_if<audio::AudioClip>(&record.audio)) {
    obj["audio_b64"] = base64_encode(audio::write_wav(*clip));
  }
  return obj.dump();
}

IngestResult ingest_stream(std::istream& in) {
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.size() > kMaxLineBytes) {
      result.rejections.push_back({line_no, "line exceeds 1 MiB"});
      continue;
    }
    try {
      result.records.push_back(parse_record_line(line));
    } catch (const Error& e) {
      result.rejections.push_back({line_no, e.what()});
    }
  }
  return result;
}

}  // namespace ww::sensor
