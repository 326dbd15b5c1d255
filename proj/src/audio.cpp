// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ww/error.hpp"

namespace ww::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatIeeeFloat = 3;

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void require(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw Error(ErrorKind::Format,
                  std::string("truncated WAV while reading ") + what);
    }
  }

  std::uint32_t u32(const char* what) {
    require(4, what);
    std::uint32_t v = static_cast<std::uint32_t>(bytes_[pos_]) |
                      static_cast<std::uint32_t>(bytes_[pos_ + 1]) << 8 |
                      static_cast<std::uint32_t>(bytes_[pos_ + 2]) << 16 |
                      static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24;
    pos_ += 4;
    return v;
  }

  std::uint16_t u16(const char* what) {
    require(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(
        bytes_[pos_] | (static_cast<std::uint16_t>(bytes_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }

  std::span<const std::uint8_t> raw(std::size_t n, const char* what) {
    require(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void skip(std::size_t n, const char* what) {
    require(n, what);
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

bool tag_is(std::span<const std::uint8_t> tag, const char* expect) {
  return std::memcmp(tag.data(), expect, 4) == 0;
}

struct FmtChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits_per_sample = 0;
};

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

void append_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

AudioClip parse_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!tag_is(r.raw(4, "RIFF tag"), "RIFF")) {
    throw Error(ErrorKind::Format, "missing RIFF tag");
  }
  r.u32("RIFF size");
  if (!tag_is(r.raw(4, "WAVE tag"), "WAVE")) {
    throw Error(ErrorKind::Format, "missing WAVE tag");
  }

  FmtChunk fmt;
  bool have_fmt = false;
  bool have_data = false;
  std::span<const std::uint8_t> data;

  while (r.remaining() >= 8) {
    auto tag = r.raw(4, "chunk tag");
    std::uint32_t size = r.u32("chunk size");
    if (tag_is(tag, "fmt ")) {
      if (size < 16) throw Error(ErrorKind::Format, "fmt chunk too small");
      auto body = r.raw(size, "fmt chunk");
      ByteReader f(body);
      fmt.format = f.u16("format tag");
      fmt.channels = f.u16("channel count");
      fmt.sample_rate = f.u32("sample rate");
      f.u32("byte rate");
      f.u16("block align");
      fmt.bits_per_sample = f.u16("bits per sample");
      have_fmt = true;
    } else if (tag_is(tag, "data")) {
      data = r.raw(size, "data chunk");
      have_data = true;
    } else {
      r.skip(size, "chunk body");
    }
    if (size % 2 == 1 && r.remaining() > 0) r.skip(1, "chunk padding");
  }

  if (!have_fmt) throw Error(ErrorKind::Format, "missing fmt chunk");
  if (!have_data) throw Error(ErrorKind::Format, "missing data chunk");
  if (fmt.sample_rate == 0) {
    throw Error(ErrorKind::Format, "sample rate is zero");
  }
  if (fmt.channels != 1) {
    throw Error(ErrorKind::UnsupportedEncoding,
                "expected mono, got " + std::to_string(fmt.channels) +
                    " channels");
  }

  AudioClip clip;
  clip.sample_rate = fmt.sample_rate;

  if (fmt.format == kFormatPcm && fmt.bits_per_sample == 16) {
    std::size_t count = data.size() / 2;
    if (count == 0) throw Error(ErrorKind::EmptyAudio, "data chunk is empty");
    clip.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      auto v = static_cast<std::int16_t>(
          static_cast<std::uint16_t>(data[2 * i]) |
          (static_cast<std::uint16_t>(data[2 * i + 1]) << 8));
      clip.samples.push_back(static_cast<double>(v) / 32768.0);
    }
  } else if (fmt.format == kFormatIeeeFloat && fmt.bits_per_sample == 32) {
    std::size_t count = data.size() / 4;
    if (count == 0) throw Error(ErrorKind::EmptyAudio, "data chunk is empty");
    clip.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u = static_cast<std::uint32_t>(data[4 * i]) |
                        static_cast<std::uint32_t>(data[4 * i + 1]) << 8 |
                        static_cast<std::uint32_t>(data[4 * i + 2]) << 16 |
                        static_cast<std::uint32_t>(data[4 * i + 3]) << 24;
      float f = std::bit_cast<float>(u);
      clip.samples.push_back(std::clamp(static_cast<double>(f), -1.0, 1.0));
    }
  } else {
    throw Error(ErrorKind::UnsupportedEncoding,
                "format tag " + std::to_string(fmt.format) + " at " +
                    std::to_string(fmt.bits_per_sample) +
                    " bits is not supported (PCM16 or float32 only)");
  }
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_wav(bytes);
}

std::vector<std::uint8_t> write_wav(const AudioClip& clip,
                                    WavEncoding encoding) {
  const bool pcm = encoding == WavEncoding::Pcm16;
  const std::uint16_t bytes_per_sample = pcm ? 2 : 4;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(clip.samples.size()) * bytes_per_sample;

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  append_tag(out, "RIFF");
  append_u32(out, 36 + data_size);
  append_tag(out, "WAVE");
  append_tag(out, "fmt ");
  append_u32(out, 16);
  append_u16(out, pcm ? kFormatPcm : kFormatIeeeFloat);
  append_u16(out, 1);
  append_u32(out, clip.sample_rate);
  append_u32(out, clip.sample_rate * bytes_per_sample);
  append_u16(out, bytes_per_sample);
  append_u16(out, pcm ? 16 : 32);
  append_tag(out, "data");
  append_u32(out, data_size);

  for (double s : clip.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    if (pcm) {
      auto q = static_cast<std::int32_t>(std::lrint(c * 32768.0));
      q = std::clamp(q, -32768, 32767);
      append_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      append_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(c)));
    }
  }
  return out;
}

void write_wav_file(const std::filesystem::path& path, const AudioClip& clip,
                    WavEncoding encoding) {
  auto bytes = write_wav(clip, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ww::audio
