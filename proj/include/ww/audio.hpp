// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_AUDIO_HPP
#define WW_AUDIO_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace ww::audio {

/// Mono audio, samples normalized to [-1, 1].
struct AudioClip {
  std::uint32_t sample_rate = 0;
  std::vector<double> samples;

  double duration_s() const {
    return sample_rate == 0 ? 0.0
                            : static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Parses a RIFF/WAVE container holding mono PCM16 or IEEE-float32 audio.
/// Integer samples are scaled by 1/2^15; float samples are clamped to [-1, 1].
/// Throws Format / UnsupportedEncoding / EmptyAudio on bad input.
AudioClip parse_wav(std::span<const std::uint8_t> bytes);

AudioClip read_wav(const std::filesystem::path& path);

enum class WavEncoding { Pcm16, Float32 };

/// Serializes a clip back to a RIFF/WAVE container (mono).
std::vector<std::uint8_t> write_wav(const AudioClip& clip,
                                    WavEncoding encoding = WavEncoding::Pcm16);

void write_wav_file(const std::filesystem::path& path, const AudioClip& clip,
                    WavEncoding encoding = WavEncoding::Pcm16);

}  // namespace ww::audio

#endif  // WW_AUDIO_HPP
