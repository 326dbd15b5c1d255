// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_TESTS_SYNTH_HPP
#define WW_TESTS_SYNTH_HPP

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "ww/audio.hpp"
#include "ww/geo.hpp"

namespace synth {

inline constexpr double kPi = 3.14159265358979323846;

inline ww::audio::AudioClip silence(std::uint32_t rate, double seconds) {
  ww::audio::AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.assign(static_cast<std::size_t>(rate * seconds), 0.0);
  return clip;
}

/// Pure cosine at `cycles_per_sample` (normalized frequency).
inline ww::audio::AudioClip tone(std::uint32_t rate, double seconds,
                                 double cycles_per_sample, double amplitude) {
  ww::audio::AudioClip clip = silence(rate, seconds);
  for (std::size_t m = 0; m < clip.samples.size(); ++m) {
    clip.samples[m] =
        amplitude * std::cos(2.0 * kPi * cycles_per_sample * static_cast<double>(m));
  }
  return clip;
}

/// Leading silence, then a tone at the center frequency of analysis bin k
/// (normalized k*q/window_len). The split gives the tone bin frame-to-frame
/// contrast, which per-bin standardization needs to keep it visible.
inline ww::audio::AudioClip silence_then_tone(std::uint32_t rate, double seconds,
                                              std::size_t k, double q,
                                              std::size_t window_len,
                                              double silence_fraction = 0.5) {
  ww::audio::AudioClip clip = silence(rate, seconds);
  const double freq = static_cast<double>(k) * q / static_cast<double>(window_len);
  const std::size_t start = static_cast<std::size_t>(
      static_cast<double>(clip.samples.size()) * silence_fraction);
  for (std::size_t m = start; m < clip.samples.size(); ++m) {
    clip.samples[m] = 0.8 * std::cos(2.0 * kPi * freq * static_cast<double>(m));
  }
  return clip;
}

/// Low-level uniform noise: the "clean palm" sound.
inline ww::audio::AudioClip noise(std::uint32_t rate, double seconds,
                                  double amplitude, std::mt19937_64& rng) {
  ww::audio::AudioClip clip = silence(rate, seconds);
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  for (double& sample : clip.samples) sample = dist(rng);
  return clip;
}

/// Broadband burst train over a quiet floor: the "infested palm" sound.
inline ww::audio::AudioClip burst_train(std::uint32_t rate, double seconds,
                                        std::mt19937_64& rng) {
  ww::audio::AudioClip clip = noise(rate, seconds, 0.01, rng);
  std::uniform_real_distribution<double> burst(-0.9, 0.9);
  const std::size_t period = rate / 4;      // four bursts per second
  const std::size_t burst_len = rate / 40;  // 25 ms each
  for (std::size_t start = period / 2; start + burst_len <= clip.samples.size();
       start += period) {
    for (std::size_t m = 0; m < burst_len; ++m) clip.samples[start + m] = burst(rng);
  }
  return clip;
}

/// Complete on-disk fixture of one surveyed plantation: georeferenced palm
/// boxes, sensors at the box centers, labeled training audio, per-device
/// audio, detections equal to the boxes, and a ready-to-run config.
struct Farm {
  std::filesystem::path dir;
  std::filesystem::path config_path;
  std::size_t n_palms = 0;
  std::size_t n_infested = 0;
  std::vector<std::array<double, 4>> boxes;  // x1, y1, x2, y2
  std::vector<std::string> device_ids;
};

inline Farm make_farm(const std::filesystem::path& dir, std::size_t n_palms,
                      std::size_t n_infested, double clip_seconds,
                      std::size_t train_per_class, std::uint64_t seed = 7,
                      const std::string& output_dir_name = "out") {
  namespace fs = std::filesystem;
  Farm farm;
  farm.dir = dir;
  farm.n_palms = n_palms;
  farm.n_infested = n_infested;
  fs::create_directories(dir / "audio");

  const std::uint32_t rate = 8000;
  std::mt19937_64 rng(seed);

  // World file: ~0.11 m per pixel, north-up.
  const ww::geo::PixelToGeoTransform transform(1e-6, 0.0, 46.6, 0.0, -1e-6, 24.8);
  ww::geo::save_world_file(dir / "world.wld", transform);

  // Palm boxes on a 5-column grid inside a 4000x3000 image.
  std::ofstream detections(dir / "detections.txt");
  std::ofstream truths(dir / "truths.txt");
  std::ofstream registry(dir / "registry.csv");
  std::ofstream records(dir / "records.ndjson");
  detections << "space=original\n";
  registry << "device_id,lat,lon\n";
  registry.precision(17);
  records.precision(17);

  for (std::size_t i = 0; i < n_palms; ++i) {
    const std::size_t col = i % 5;
    const std::size_t row = i / 5;
    const double x1 = 200.0 + 750.0 * static_cast<double>(col);
    const double y1 = 200.0 + 700.0 * static_cast<double>(row);
    const double x2 = x1 + 200.0;
    const double y2 = y1 + 200.0;
    farm.boxes.push_back({x1, y1, x2, y2});

    detections << "farm palm 0.9 " << x1 << ' ' << y1 << ' ' << x2 << ' ' << y2
               << "\n";
    truths << "farm palm " << x1 << ' ' << y1 << ' ' << x2 << ' ' << y2 << "\n";

    char device_id[16];
    std::snprintf(device_id, sizeof(device_id), "dev-%02zu", i);
    farm.device_ids.push_back(device_id);
    const ww::geo::GeoPoint center = transform.pixel_to_geo(
        ww::geo::PixelPoint{(x1 + x2) / 2.0, (y1 + y2) / 2.0});
    registry << device_id << ',' << center.lat << ',' << center.lon << "\n";

    const std::string wav_name = std::string("audio/") + device_id + ".wav";
    const ww::audio::AudioClip clip = i < n_infested
                                          ? burst_train(rate, clip_seconds, rng)
                                          : noise(rate, clip_seconds, 0.01, rng);
    ww::audio::write_wav_file(dir / wav_name, clip);
    records << "{\"device_id\":\"" << device_id
            << "\",\"captured_at\":\"2026-08-19T10:00:00Z\",\"lat\":" << center.lat
            << ",\"lon\":" << center.lon << ",\"audio_path\":\"" << wav_name
            << "\"}\n";
  }

  std::ofstream manifest(dir / "train_manifest.csv");
  manifest << "path,label\n";
  for (std::size_t i = 0; i < train_per_class; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "audio/train_inf_%02zu.wav", i);
    ww::audio::write_wav_file(dir / name, burst_train(rate, clip_seconds, rng));
    manifest << name << ",infested\n";
    std::snprintf(name, sizeof(name), "audio/train_cln_%02zu.wav", i);
    ww::audio::write_wav_file(dir / name, noise(rate, clip_seconds, 0.01, rng));
    manifest << name << ",not_infested\n";
  }
  manifest.close();

  std::ofstream config(dir / "config.json");
  config << "{\n"
         << "  \"version\": 1,\n"
         << "  \"image_id\": \"farm\",\n"
         << "  \"paths\": {\n"
         << "    \"registry\": \"" << (dir / "registry.csv").string() << "\",\n"
         << "    \"records\": \"" << (dir / "records.ndjson").string() << "\",\n"
         << "    \"audio_manifest\": \"" << (dir / "train_manifest.csv").string()
         << "\",\n"
         << "    \"detections\": \"" << (dir / "detections.txt").string() << "\",\n"
         << "    \"truths\": \"" << (dir / "truths.txt").string() << "\",\n"
         << "    \"world_file\": \"" << (dir / "world.wld").string() << "\",\n"
         << "    \"output_dir\": \"" << (dir / output_dir_name).string() << "\"\n"
         << "  },\n"
         << "  \"detection\": {\"original_width\": 4000, \"original_height\": 3000}\n"
         << "}\n";
  config.close();
  farm.config_path = dir / "config.json";
  return farm;
}

}  // namespace synth

#endif  // WW_TESTS_SYNTH_HPP
