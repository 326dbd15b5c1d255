// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#include "ww/cqcc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "ww/error.hpp"

namespace ww::cqcc {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr char kMagic[4] = {'C', 'Q', 'C', 'C'};
constexpr std::uint32_t kFeatureFileVersion = 1;

void append_u32_le(std::ofstream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF),
               static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

std::uint32_t read_u32_le(std::ifstream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw Error(ErrorKind::Format, std::string("truncated feature file at ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void CqccConfig::validate() const {
  if (!(q_factor > 0.0) || !std::isfinite(q_factor)) {
    throw Error(ErrorKind::Domain, "Q must be a positive finite real");
  }
  if (window_len == 0) throw Error(ErrorKind::Domain, "window length must be >= 1");
  if (hop == 0 || hop > window_len) {
    throw Error(ErrorKind::Domain, "hop must satisfy 1 <= hop <= window length");
  }
  if (bins == 0) throw Error(ErrorKind::Domain, "bin count must be >= 1");
  if (!(compression_mu > 0.0)) throw Error(ErrorKind::Domain, "mu must be > 0");
  if (epsilon < 0.0) throw Error(ErrorKind::Domain, "epsilon must be >= 0");
  if (n_cepstra == 0) throw Error(ErrorKind::Domain, "n_cepstra must be >= 1");
  if (dct_mode == DctMode::Standard && n_cepstra > bins) {
    throw Error(ErrorKind::Domain, "n_cepstra exceeds bin count");
  }
  const double top = static_cast<double>(bins) * q_factor /
                     static_cast<double>(window_len);
  if (top > 0.5) {
    throw Error(ErrorKind::Domain,
                "K*Q/M = " + std::to_string(top) + " exceeds Nyquist (0.5)");
  }
}

std::size_t frame_count(std::size_t n_samples, const CqccConfig& config) {
  if (n_samples < config.window_len) return 0;
  return (n_samples - config.window_len) / config.hop + 1;
}

std::vector<double> make_window(std::size_t length, WindowKind kind) {
  if (length == 0) throw Error(ErrorKind::Domain, "window length must be >= 1");
  std::vector<double> w(length, 1.0);
  if (kind == WindowKind::Hamming) {
    if (length == 1) return w;  // degenerate taper is unity
    for (std::size_t m = 0; m < length; ++m) {
      w[m] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(m) /
                                    static_cast<double>(length - 1));
    }
  }
  return w;
}

CqtMatrix cqt(const audio::AudioClip& clip, const CqccConfig& config) {
  config.validate();
  const std::size_t M = config.window_len;
  const std::size_t K = config.bins;
  if (clip.samples.size() < M) {
    throw Error(ErrorKind::InsufficientData,
                "clip has " + std::to_string(clip.samples.size()) +
                    " samples, needs at least " + std::to_string(M));
  }

  const auto window = make_window(M, config.window_kind);
  const std::size_t frames = frame_count(clip.samples.size(), config);

  // Kernel rows, split into real/imag planes so the per-frame inner product
  // reduces to two plain dot products.
  std::vector<double> kernel_re(K * M), kernel_im(K * M);
  for (std::size_t k = 0; k < K; ++k) {
    const double step = -2.0 * kPi * static_cast<double>(k) * config.q_factor /
                        static_cast<double>(M);
    for (std::size_t m = 0; m < M; ++m) {
      const double phase = step * static_cast<double>(m);
      kernel_re[k * M + m] = std::cos(phase);
      kernel_im[k * M + m] = std::sin(phase);
    }
  }

  CqtMatrix out;
  out.frames = frames;
  out.bins = K;
  out.values.resize(frames * K);

  std::vector<double> windowed(M);
  for (std::size_t n = 0; n < frames; ++n) {
    const double* x = clip.samples.data() + n * config.hop;
    for (std::size_t m = 0; m < M; ++m) windowed[m] = x[m] * window[m];
    for (std::size_t k = 0; k < K; ++k) {
      const double* kr = kernel_re.data() + k * M;
      const double* ki = kernel_im.data() + k * M;
      double acc_re = 0.0, acc_im = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        acc_re += windowed[m] * kr[m];
        acc_im += windowed[m] * ki[m];
      }
      out.values[n * K + k] = {acc_re, acc_im};
    }
  }
  return out;
}

RealMatrix log_compress(const CqtMatrix& spectrum, double mu) {
  if (!(mu > 0.0)) throw Error(ErrorKind::Domain, "mu must be > 0");
  RealMatrix out(spectrum.frames, spectrum.bins);
  for (std::size_t i = 0; i < spectrum.values.size(); ++i) {
    out.data[i] = std::log1p(mu * std::abs(spectrum.values[i]));
  }
  return out;
}

NormalizedSpectral power_normalize(const RealMatrix& log_spectrum,
                                   double epsilon) {
  if (log_spectrum.rows == 0) {
    throw Error(ErrorKind::Domain, "need at least one frame");
  }
  const std::size_t N = log_spectrum.rows;
  const std::size_t K = log_spectrum.cols;

  NormalizedSpectral out;
  out.values = RealMatrix(N, K);
  out.bin_mean.assign(K, 0.0);
  out.bin_std.assign(K, 0.0);

  for (std::size_t k = 0; k < K; ++k) {
    double sum = 0.0;
    for (std::size_t n = 0; n < N; ++n) sum += log_spectrum.at(n, k);
    const double mean = sum / static_cast<double>(N);
    double var = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double d = log_spectrum.at(n, k) - mean;
      var += d * d;
    }
    const double stddev = std::sqrt(var / static_cast<double>(N));
    out.bin_mean[k] = mean;
    out.bin_std[k] = stddev;
    const double denom = std::max(stddev, epsilon);
    for (std::size_t n = 0; n < N; ++n) {
      out.values.at(n, k) = (log_spectrum.at(n, k) - mean) / denom;
    }
  }
  return out;
}

std::vector<double> dct2_orthonormal(std::span<const double> frame,
                                     std::size_t n_out) {
  const std::size_t K = frame.size();
  if (n_out > K) {
    throw Error(ErrorKind::Domain, "n_cepstra exceeds bin count");
  }
  std::vector<double> out(n_out, 0.0);
  const double scale0 = std::sqrt(1.0 / static_cast<double>(K));
  const double scale = std::sqrt(2.0 / static_cast<double>(K));
  for (std::size_t j = 0; j < n_out; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      acc += frame[k] * std::cos(kPi * static_cast<double>(j) *
                                 (static_cast<double>(k) + 0.5) /
                                 static_cast<double>(K));
    }
    out[j] = acc * (j == 0 ? scale0 : scale);
  }
  return out;
}

RealMatrix cepstra(const NormalizedSpectral& spectral,
                   const CqccConfig& config) {
  const std::size_t N = spectral.values.rows;
  const std::size_t K = spectral.values.cols;

  if (config.dct_mode == DctMode::Literal) {
    // The printed sum runs over window samples m while every factor except
    // the cosine is independent of m, so each column just scales by
    // S_k = sum_m cos(pi*k*(m+0.5)/M). S_0 = M and S_k vanishes for
    // 1 <= k <= M-1.
    const std::size_t M = config.window_len;
    std::vector<double> column_scale(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        s += std::cos(kPi * static_cast<double>(k) *
                      (static_cast<double>(m) + 0.5) / static_cast<double>(M));
      }
      column_scale[k] = s;
    }
    RealMatrix out(N, K);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) {
        out.at(n, k) = spectral.values.at(n, k) * column_scale[k];
      }
    }
    return out;
  }

  if (config.n_cepstra > K) {
    throw Error(ErrorKind::Domain, "n_cepstra exceeds bin count");
  }
  RealMatrix out(N, config.n_cepstra);
  for (std::size_t n = 0; n < N; ++n) {
    auto coeffs = dct2_orthonormal(spectral.values.row(n), config.n_cepstra);
    std::copy(coeffs.begin(), coeffs.end(), out.data.begin() + n * config.n_cepstra);
  }
  return out;
}

RealMatrix cqcc_features(const audio::AudioClip& clip,
                         const CqccConfig& config) {
  const CqtMatrix spectrum = cqt(clip, config);
  const RealMatrix compressed = log_compress(spectrum, config.compression_mu);
  const NormalizedSpectral normalized =
      power_normalize(compressed, config.epsilon);
  return cepstra(normalized, config);
}

GrayImage features_to_image(const RealMatrix& features, std::size_t width,
                            std::size_t height) {
  if (features.rows == 0 || features.cols == 0 || width == 0 || height == 0) {
    throw Error(ErrorKind::Domain, "feature matrix and image size must be non-empty");
  }
  const auto [min_it, max_it] =
      std::minmax_element(features.data.begin(), features.data.end());
  const double lo = *min_it, hi = *max_it;

  GrayImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(width * height);

  for (std::size_t r = 0; r < height; ++r) {
    const std::size_t src_r = std::min(
        features.rows - 1,
        static_cast<std::size_t>((static_cast<double>(r) + 0.5) *
                                 static_cast<double>(features.rows) /
                                 static_cast<double>(height)));
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t src_c = std::min(
          features.cols - 1,
          static_cast<std::size_t>((static_cast<double>(c) + 0.5) *
                                   static_cast<double>(features.cols) /
                                   static_cast<double>(width)));
      std::uint8_t value = 128;
      if (hi > lo) {
        const double v = (features.at(src_r, src_c) - lo) / (hi - lo);
        value = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
      img.pixels[r * width + c] = value;
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

void save_features(const std::filesystem::path& path, const RealMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(kMagic, 4);
  append_u32_le(out, kFeatureFileVersion);
  append_u32_le(out, static_cast<std::uint32_t>(m.rows));
  append_u32_le(out, static_cast<std::uint32_t>(m.cols));
  for (double v : m.data) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(b, 8);
  }
}

RealMatrix load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::Format, "bad feature file magic");
  }
  const std::uint32_t version = read_u32_le(in, "version");
  if (version != kFeatureFileVersion) {
    throw Error(ErrorKind::Format,
                "unsupported feature file version " + std::to_string(version));
  }
  const std::uint32_t rows = read_u32_le(in, "rows");
  const std::uint32_t cols = read_u32_le(in, "cols");
  RealMatrix m(rows, cols);
  for (auto& v : m.data) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
      throw Error(ErrorKind::Format, "truncated feature file body");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, 8);
  }
  return m;
}

void save_features_csv(const std::filesystem::path& path, const RealMatrix& m) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out << ",";
      out << m.at(r, c);
    }
    out << "\n";
  }
}

}  // namespace ww::cqcc
