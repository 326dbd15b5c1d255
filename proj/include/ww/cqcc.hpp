// Copyright 2026 WeevilWatch contributors. Licensed under the Apache-2.0 license.

#ifndef WW_CQCC_HPP
#define WW_CQCC_HPP

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ww/audio.hpp"

namespace ww::cqcc {

struct RealMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  RealMatrix() = default;
  RealMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data).subspan(r * cols, cols);
  }
};

enum class WindowKind { Hamming, Rectangular };
enum class DctMode { Standard, Literal };

/// Analysis parameters for the constant-Q cepstral chain. Frame n covers
/// samples [n*hop, n*hop + window_len); bin k sits at normalized frequency
/// k*q_factor/window_len, which must stay at or below Nyquist.
struct CqccConfig {
  double q_factor = 1.0;          // Q
  std::size_t window_len = 512;   // M, samples
  std::size_t hop = 256;          // frame advance, samples
  std::size_t bins = 96;          // K
  double compression_mu = 1000.0; // log-compression constant
  double epsilon = 1e-8;          // std-deviation guard
  std::size_t n_cepstra = 20;
  WindowKind window_kind = WindowKind::Hamming;
  DctMode dct_mode = DctMode::Standard;

  /// Throws Domain when any invariant fails.
  void validate() const;
};

/// Spectral frames: frames x bins complex coefficients.
struct CqtMatrix {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> values;  // row-major

  std::complex<double> at(std::size_t n, std::size_t k) const {
    return values[n * bins + k];
  }
};

/// Per-bin standardized log-spectrum plus the statistics that produced it.
struct NormalizedSpectral {
  RealMatrix values;
  std::vector<double> bin_mean;
  std::vector<double> bin_std;  // population std, before the epsilon guard
};

std::size_t frame_count(std::size_t n_samples, const CqccConfig& config);

std::vector<double> make_window(std::size_t length, WindowKind kind);

/// Fixed-window constant-Q transform:
///   X[n,k] = sum_m x[n*hop+m] * w[m] * exp(-i*2*pi*k*Q*m/M)
/// One window length for every bin, exactly as the feature chain defines it.
CqtMatrix cqt(const audio::AudioClip& clip, const CqccConfig& config);

/// ln(1 + mu*|X|), elementwise.
RealMatrix log_compress(const CqtMatrix& spectrum, double mu);

/// Standardizes each frequency-bin column to zero mean, unit variance over
/// frames; degenerate bins divide by epsilon instead of their (zero) std.
NormalizedSpectral power_normalize(const RealMatrix& log_spectrum,
                                   double epsilon);

/// Orthonormal DCT-II over one frame; keeps the first n_out coefficients.
std::vector<double> dct2_orthonormal(std::span<const double> frame,
                                     std::size_t n_out);

/// Cepstral stage. Standard mode applies the orthonormal DCT-II across the
/// bins of each frame and keeps n_cepstra coefficients. Literal mode computes
///   C[n,k] = sum_{m=0}^{M-1} X_norm[n,k] * cos(pi*k*(m+0.5)/M)
/// which collapses to a per-column scale; it is kept as a fidelity mode and
/// returns all bins untruncated.
RealMatrix cepstra(const NormalizedSpectral& spectral,
                   const CqccConfig& config);

/// Full chain: cqt -> log_compress -> power_normalize -> cepstra.
RealMatrix cqcc_features(const audio::AudioClip& clip,
                         const CqccConfig& config);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Min-max scales the matrix to [0,255] and nearest-neighbor resizes it.
/// A constant matrix maps to mid-gray 128.
GrayImage features_to_image(const RealMatrix& features, std::size_t width,
                            std::size_t height);

void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// Binary feature container: 16-byte header (magic "CQCC", u32 version,
/// u32 rows, u32 cols) followed by row-major little-endian f64.
void save_features(const std::filesystem::path& path, const RealMatrix& m);
RealMatrix load_features(const std::filesystem::path& path);

void save_features_csv(const std::filesystem::path& path, const RealMatrix& m);

}  // namespace ww::cqcc

#endif  // WW_CQCC_HPP
