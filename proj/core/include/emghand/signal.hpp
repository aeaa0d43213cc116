#pragma once

#include <span>
#include <vector>

#include "emghand/tensor.hpp"

namespace emghand::signal {

/// One analysis window of rectified sEMG: n samples x c channels, rows in
/// ascending time order at the fixed 50 Hz tick.
struct EmgWindow {
  Tensor samples;               // n x c, amplitudes in [0, 255]
  double start_time_ms = 0.0;
  double sample_rate_hz = 50.0;

  std::int64_t rows() const { return samples.rows(); }
  std::int64_t cols() const { return samples.cols(); }

  /// Throws std::invalid_argument when a structural invariant is broken.
  void validate() const;
};

struct TimeFeatures {
  double mav = 0.0;  // mean absolute value
  double rms = 0.0;  // root mean square
  double var = 0.0;  // population variance
};

/// Time-domain features of one channel. Requires at least 2 samples.
TimeFeatures time_features(std::span<const double> x);

/// Power spectrum |X_k|^2 of the real-input DFT, bins k = 0..floor(n/2).
std::vector<double> power_spectrum(std::span<const double> x);

struct FreqFeatures {
  double mdf = 0.0;  // median frequency bin / highest bin
  double mnf = 0.0;  // mean frequency bin / highest bin
  double pf = 0.0;   // peak frequency bin / highest bin
};

/// Spectral bin statistics, DC excluded, normalized by the highest bin
/// index. An all-zero (non-DC) spectrum maps to zeros.
FreqFeatures freq_features(std::span<const double> power);

struct WaveletCoeffs {
  std::vector<double> approx;  // level-4 approximation
  std::vector<double> detail;  // level-4 detail
};

/// Four-level db4 DWT (zero-padded full convolution, downsample by two,
/// output length floor((L+7)/2) per level). Input length must be 150,
/// giving the 150 -> 78 -> 42 -> 24 -> 15 cascade.
WaveletCoeffs dwt_level4(std::span<const double> x);

/// Same cascade for arbitrary input length (used by reduced test configs).
WaveletCoeffs dwt_level4_any(std::span<const double> x);

struct FeatureVector {
  Tensor time_freq;  // c x 6: [mav rms var mdf mnf pf]
  Tensor wavelet;    // c x 2k: level-4 approx then detail per channel
};

/// Per-channel feature extraction over a window's sample matrix. Used both
/// on raw windows and on the model's normalized copies.
FeatureVector features_of_matrix(const Tensor& samples);

FeatureVector extract_features(const EmgWindow& w);

/// Slices a T x c stream into windows of n rows every `hop` rows; a partial
/// tail is discarded. A stream shorter than n yields an empty sequence.
std::vector<EmgWindow> make_windows(const Tensor& stream, double t0_ms,
                                    double dt_ms, std::int64_t n,
                                    std::int64_t hop);

}  // namespace emghand::signal
