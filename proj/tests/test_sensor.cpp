// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ww/audio.hpp"
#include "ww/error.hpp"
#include "ww/sensor.hpp"

using namespace ww;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "ww_sensor_test";
  std::filesystem::create_directories(dir);
  return dir;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& err) {
    return err.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("registry load and save round-trip") {
  const auto path = temp_dir() / "registry.csv";
  {
    std::ofstream out(path);
    out << "device_id,lat,lon\nalpha,24.5,46.5\nbeta,-10.25,121.0\n";
  }
  const sensor::SensorRegistry registry = sensor::load_registry(path);
  REQUIRE(registry.entries.size() == 2);
  CHECK(registry.find("alpha")->lat == 24.5);
  CHECK(registry.find("beta")->lon == 121.0);
  CHECK(registry.find("gamma") == nullptr);

  const auto copy = temp_dir() / "registry2.csv";
  sensor::save_registry(copy, registry);
  CHECK(sensor::load_registry(copy).entries == registry.entries);
}

TEST_CASE("registry rejects duplicates, bad bounds, bad header") {
  const auto path = temp_dir() / "bad_registry.csv";

  auto write = [&](const std::string& text) {
    std::ofstream out(path);
    out << text;
  };

  write("device_id,lat,lon\na,1,2\na,3,4\n");
  CHECK(kind_of([&] { sensor::load_registry(path); }) == ErrorKind::Conflict);

  write("device_id,lat,lon\na,95.0,2\n");
  CHECK(kind_of([&] { sensor::load_registry(path); }) == ErrorKind::Validation);

  write("id,lat,lon\na,1,2\n");
  CHECK(kind_of([&] { sensor::load_registry(path); }) == ErrorKind::Format);
}

TEST_CASE("manifest parses labels and paths with commas") {
  const auto path = temp_dir() / "manifest.csv";
  {
    std::ofstream out(path);
    out << "path,label\n"
        << "clips/a.wav,infested\n"
        << "clips/with,comma.wav,not_infested\n"
        << "clips/c.wav,unlabeled\n";
  }
  const sensor::DatasetManifest manifest = sensor::load_manifest(path);
  REQUIRE(manifest.records.size() == 3);
  CHECK(manifest.records[0].label == sensor::Label::Infested);
  CHECK(manifest.records[1].path == "clips/with,comma.wav");
  CHECK(manifest.records[1].label == sensor::Label::NotInfested);
  CHECK(manifest.count(sensor::Label::Infested) == 1);
  CHECK(manifest.count(sensor::Label::Unlabeled) == 1);

  const auto copy = temp_dir() / "manifest2.csv";
  sensor::save_manifest(copy, manifest);
  const sensor::DatasetManifest back = sensor::load_manifest(copy);
  REQUIRE(back.records.size() == manifest.records.size());
  CHECK(back.records[1].path == manifest.records[1].path);
}

TEST_CASE("unknown label is rejected") {
  CHECK_THROWS_AS(sensor::parse_label("sick"), Error);
  CHECK(sensor::parse_label("infested") == sensor::Label::Infested);
}

TEST_CASE("base64 round-trip and strictness") {
  std::mt19937_64 rng(9);
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 57u, 256u}) {
    std::vector<std::uint8_t> bytes(n);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    const std::string text = sensor::base64_encode(bytes);
    CHECK(sensor::base64_decode(text) == bytes);
  }
  CHECK_THROWS_AS(sensor::base64_decode("ab!d"), Error);
  CHECK_THROWS_AS(sensor::base64_decode("abcde"), Error);  // bad length
  CHECK_THROWS_AS(sensor::base64_decode("=abc"), Error);
}

TEST_CASE("iso8601 parsing") {
  CHECK(sensor::parse_iso8601_utc("1970-01-01T00:00:00Z") == 0);
  CHECK(sensor::parse_iso8601_utc("1970-01-02T00:00:00Z") == 86400);
  CHECK(sensor::parse_iso8601_utc("2000-03-01T00:00:00Z") ==
        951868800);  // leap-year February handled
  CHECK(sensor::parse_iso8601_utc("2026-08-19T12:30:45Z") == 1787142645);
  CHECK(sensor::parse_iso8601_utc("2026-08-19T12:30:45.125Z") == 1787142645);

  CHECK_FALSE(sensor::parse_iso8601_utc("2026-02-30T00:00:00Z").has_value());
  CHECK_FALSE(sensor::parse_iso8601_utc("2026-08-19T12:30:45").has_value());
  CHECK_FALSE(sensor::parse_iso8601_utc("2026-08-19 12:30:45Z").has_value());
  CHECK_FALSE(sensor::parse_iso8601_utc("not-a-date").has_value());
  CHECK_FALSE(sensor::parse_iso8601_utc("2026-13-01T00:00:00Z").has_value());
}

TEST_CASE("record line parsing") {
  SUBCASE("minimal valid record") {
    const sensor::SensorRecord record = sensor::parse_record_line(
        R"({"device_id":"d1","captured_at":"2026-08-19T10:00:00Z","lat":24.7,"lon":46.7})");
    CHECK(record.device_id == "d1");
    CHECK(record.geo.lat == 24.7);
    CHECK_FALSE(record.has_audio());
    CHECK_FALSE(record.temperature_c.has_value());
  }

  SUBCASE("optional environment fields") {
    const sensor::SensorRecord record = sensor::parse_record_line(
        R"({"device_id":"d1","captured_at":"2026-08-19T10:00:00Z","lat":0,"lon":0,)"
        R"("temperature_c":31.5,"humidity_pct":55})");
    CHECK(record.temperature_c == 31.5);
    CHECK(record.humidity_pct == 55.0);
  }

  SUBCASE("inline audio decodes to samples") {
    audio::AudioClip clip;
    clip.sample_rate = 8000;
    clip.samples = {0.0, 0.25, -0.25, 0.5};
    const std::string b64 = sensor::base64_encode(audio::write_wav(clip));
    const sensor::SensorRecord record = sensor::parse_record_line(
        R"({"device_id":"d1","captured_at":"2026-08-19T10:00:00Z","lat":0,"lon":0,)"
        R"("audio_b64":")" + b64 + R"("})");
    REQUIRE(record.has_audio());
    const auto& inline_clip = std::get<audio::AudioClip>(record.audio);
    CHECK(inline_clip.samples.size() == 4);
  }

  SUBCASE("rejections") {
    // missing required key
    CHECK_THROWS_AS(sensor::parse_record_line(
                        R"({"captured_at":"2026-08-19T10:00:00Z","lat":0,"lon":0})"),
                    Error);
    // both audio forms at once
    CHECK_THROWS_AS(
        sensor::parse_record_line(
            R"({"device_id":"d","captured_at":"2026-08-19T10:00:00Z","lat":0,)"
            R"("lon":0,"audio_b64":"AAAA","audio_path":"x.wav"})"),
        Error);
    // out-of-range humidity
    CHECK_THROWS_AS(
        sensor::parse_record_line(
            R"({"device_id":"d","captured_at":"2026-08-19T10:00:00Z","lat":0,)"
            R"("lon":0,"humidity_pct":130})"),
        Error);
    // bad timestamp
    CHECK_THROWS_AS(
        sensor::parse_record_line(
            R"({"device_id":"d","captured_at":"yesterday","lat":0,"lon":0})"),
        Error);
    // bad coordinates
    CHECK_THROWS_AS(
        sensor::parse_record_line(
            R"({"device_id":"d","captured_at":"2026-08-19T10:00:00Z","lat":99,"lon":0})"),
        Error);
    // not json at all
    CHECK_THROWS_AS(sensor::parse_record_line("hello"), Error);
  }
}

TEST_CASE("record to line round-trips") {
  sensor::SensorRecord record;
  record.device_id = "dev-7";
  record.captured_at_text = "2026-08-19T10:00:00Z";
  record.captured_at_epoch_s = *sensor::parse_iso8601_utc(record.captured_at_text);
  record.geo = {24.7, 46.7};
  record.temperature_c = 28.0;
  record.audio = std::filesystem::path("clips/a.wav");

  const sensor::SensorRecord back =
      sensor::parse_record_line(sensor::record_to_line(record));
  CHECK(back.device_id == record.device_id);
  CHECK(back.captured_at_epoch_s == record.captured_at_epoch_s);
  CHECK(back.temperature_c == record.temperature_c);
  REQUIRE(back.has_audio());
  CHECK(std::get<std::filesystem::path>(back.audio) == "clips/a.wav");
}

TEST_CASE("ingest stream keeps good lines and reports bad ones") {
  std::stringstream in;
  in << R"({"device_id":"a","captured_at":"2026-08-19T10:00:00Z","lat":1,"lon":2})"
     << "\n"
     << "garbage\n"
     << R"({"device_id":"b","captured_at":"2026-08-19T10:00:01Z","lat":3,"lon":4})"
     << "\n"
     << R"({"device_id":"c","captured_at":"bad","lat":3,"lon":4})" << "\n";

  const sensor::IngestResult result = sensor::ingest_stream(in);
  REQUIRE(result.records.size() == 2);
  CHECK(result.records[0].device_id == "a");
  CHECK(result.records[1].device_id == "b");
  REQUIRE(result.rejections.size() == 2);
  CHECK(result.rejections[0].line_number == 2);
  CHECK(result.rejections[1].line_number == 4);
}

TEST_CASE("oversized ingest line is rejected without ending the stream") {
  std::stringstream in;
  in << std::string(sensor::kMaxLineBytes + 10, 'x') << "\n"
     << R"({"device_id":"a","captured_at":"2026-08-19T10:00:00Z","lat":1,"lon":2})"
     << "\n";
  const sensor::IngestResult result = sensor::ingest_stream(in);
  REQUIRE(result.records.size() == 1);
  CHECK(result.records[0].device_id == "a");
  REQUIRE(result.rejections.size() == 1);
  CHECK(result.rejections[0].line_number == 1);
}
