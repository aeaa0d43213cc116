#include "emghand/signal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace emghand::signal {

namespace {

// db4 (8-tap Daubechies) analysis filters, PyWavelets orientation.
constexpr double kDb4Lo[8] = {
    -0.010597401784997278, 0.032883011666982945, 0.030841381835986965,
    -0.18703481171888114,  -0.02798376941698385, 0.6308807679295904,
    0.7148465705525415,    0.23037781330885523};

constexpr double kDb4Hi[8] = {
    -0.23037781330885523, 0.7148465705525415,   -0.6308807679295904,
    -0.02798376941698385, 0.18703481171888114,  0.030841381835986965,
    -0.032883011666982945, -0.010597401784997278};

struct DftTables {
  std::int64_t n;
  std::vector<double> cos_kt;  // (n/2+1) x n
  std::vector<double> sin_kt;
};

// Twiddle tables are cached per input length; building them dominates the
// per-bin dot products otherwise.
const DftTables& dft_tables(std::int64_t n) {
  static std::mutex mu;
  static std::map<std::int64_t, std::unique_ptr<DftTables>> cache;
  std::scoped_lock lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    auto t = std::make_unique<DftTables>();
    t->n = n;
    const std::int64_t bins = n / 2 + 1;
    t->cos_kt.resize(static_cast<std::size_t>(bins * n));
    t->sin_kt.resize(static_cast<std::size_t>(bins * n));
    for (std::int64_t k = 0; k < bins; ++k) {
      for (std::int64_t i = 0; i < n; ++i) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(k) *
                         static_cast<double>(i) / static_cast<double>(n);
        t->cos_kt[static_cast<std::size_t>(k * n + i)] = std::cos(w);
        t->sin_kt[static_cast<std::size_t>(k * n + i)] = std::sin(w);
      }
    }
    it = cache.emplace(n, std::move(t)).first;
  }
  return *it->second;
}

std::vector<double> conv_downsample(std::span<const double> x,
                                    const double (&filt)[8]) {
  const std::int64_t len = static_cast<std::int64_t>(x.size());
  const std::int64_t out_len = (len + 7) / 2;  // floor((L+7)/2), full conv has L+7 lags
  std::vector<double> out(static_cast<std::size_t>(out_len), 0.0);
  for (std::int64_t i = 0; i < out_len; ++i) {
    const std::int64_t m = 2 * i + 1;  // odd lags of the full convolution
    double acc = 0.0;
    for (std::int64_t k = 0; k < 8; ++k) {
      const std::int64_t j = m - k;
      if (j >= 0 && j < len) acc += filt[k] * x[static_cast<std::size_t>(j)];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

}  // namespace

void EmgWindow::validate() const {
  if (samples.rank() != 2)
    throw std::invalid_argument("EmgWindow samples must be a matrix, got " +
                                samples.shape_str());
  if (samples.rows() < 1 || samples.cols() < 1)
    throw std::invalid_argument("EmgWindow must be non-empty");
  for (double v : samples.values()) {
    if (!(v >= 0.0) || v > 255.0)
      throw std::invalid_argument("EmgWindow samples must lie in [0, 255]");
  }
  if (sample_rate_hz <= 0.0)
    throw std::invalid_argument("EmgWindow sample rate must be positive");
}

TimeFeatures time_features(std::span<const double> x) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (n < 2) throw std::invalid_argument("time_features requires at least 2 samples");
  double sum_abs = 0.0, sum_sq = 0.0, sum = 0.0;
  for (double v : x) {
    sum_abs += std::abs(v);
    sum_sq += v * v;
    sum += v;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const double mean = sum * inv_n;
  double sum_dev = 0.0;
  for (double v : x) sum_dev += (v - mean) * (v - mean);
  return {sum_abs * inv_n, std::sqrt(sum_sq * inv_n), sum_dev * inv_n};
}

std::vector<double> power_spectrum(std::span<const double> x) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (n < 2) throw std::invalid_argument("power_spectrum requires at least 2 samples");
  const DftTables& t = dft_tables(n);
  const std::int64_t bins = n / 2 + 1;
  std::vector<double> power(static_cast<std::size_t>(bins), 0.0);
  for (std::int64_t k = 0; k < bins; ++k) {
    const double* c = t.cos_kt.data() + k * n;
    const double* s = t.sin_kt.data() + k * n;
    double re = 0.0, im = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      re += x[static_cast<std::size_t>(i)] * c[i];
      im -= x[static_cast<std::size_t>(i)] * s[i];
    }
    power[static_cast<std::size_t>(k)] = re * re + im * im;
  }
  return power;
}

FreqFeatures freq_features(std::span<const double> power) {
  const std::int64_t bins = static_cast<std::int64_t>(power.size());
  if (bins < 2) throw std::invalid_argument("freq_features requires at least 2 bins");
  for (double p : power)
    if (p < 0.0) throw std::invalid_argument("power spectrum must be non-negative");

  const std::int64_t top = bins - 1;
  double total = 0.0;
  for (std::int64_t k = 1; k <= top; ++k) total += power[static_cast<std::size_t>(k)];
  if (total <= 0.0) return {0.0, 0.0, 0.0};  // degenerate: silent channel

  double cum = 0.0, weighted = 0.0, best = -1.0;
  std::int64_t mdf = top, pf = 1;
  bool mdf_found = false;
  for (std::int64_t k = 1; k <= top; ++k) {
    const double p = power[static_cast<std::size_t>(k)];
    cum += p;
    if (!mdf_found && cum >= 0.5 * total) {
      mdf = k;
      mdf_found = true;
    }
    weighted += static_cast<double>(k) * p;
    if (p > best) {
      best = p;
      pf = k;
    }
  }
  const double denom = static_cast<double>(top);
  return {static_cast<double>(mdf) / denom, weighted / total / denom,
          static_cast<double>(pf) / denom};
}

WaveletCoeffs dwt_level4_any(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("dwt_level4 requires a non-empty input");
  std::vector<double> approx(x.begin(), x.end());
  std::vector<double> detail;
  for (int level = 0; level < 4; ++level) {
    detail = conv_downsample(approx, kDb4Hi);
    approx = conv_downsample(approx, kDb4Lo);
  }
  return {std::move(approx), std::move(detail)};
}

WaveletCoeffs dwt_level4(std::span<const double> x) {
  if (x.size() != 150)
    throw std::invalid_argument("dwt_level4 expects 150 samples, got " +
                                std::to_string(x.size()));
  return dwt_level4_any(x);
}

FeatureVector features_of_matrix(const Tensor& samples) {
  const std::int64_t n = samples.rows();
  const std::int64_t c = samples.cols();
  std::vector<double> chan(static_cast<std::size_t>(n));

  FeatureVector out;
  out.time_freq = Tensor({c, 6});
  std::vector<Tensor> wrows;
  std::int64_t wav_len = -1;

  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t i = 0; i < n; ++i) chan[static_cast<std::size_t>(i)] = samples.at(i, ch);
    const TimeFeatures tf = time_features(chan);
    const std::vector<double> power = power_spectrum(chan);
    const FreqFeatures ff = freq_features(power);
    WaveletCoeffs wc = dwt_level4_any(chan);

    out.time_freq.at(ch, 0) = tf.mav;
    out.time_freq.at(ch, 1) = tf.rms;
    out.time_freq.at(ch, 2) = tf.var;
    out.time_freq.at(ch, 3) = ff.mdf;
    out.time_freq.at(ch, 4) = ff.mnf;
    out.time_freq.at(ch, 5) = ff.pf;

    const std::int64_t k = static_cast<std::int64_t>(wc.approx.size());
    if (wav_len < 0) {
      wav_len = k;
      out.wavelet = Tensor({c, 2 * k});
    }
    for (std::int64_t i = 0; i < k; ++i) {
      out.wavelet.at(ch, i) = wc.approx[static_cast<std::size_t>(i)];
      out.wavelet.at(ch, k + i) = wc.detail[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

FeatureVector extract_features(const EmgWindow& w) {
  w.validate();
  return features_of_matrix(w.samples);
}

std::vector<EmgWindow> make_windows(const Tensor& stream, double t0_ms,
                                    double dt_ms, std::int64_t n,
                                    std::int64_t hop) {
  if (n < 1) throw std::invalid_argument("window length must be >= 1");
  if (hop < 1) throw std::invalid_argument("hop must be >= 1");
  const std::int64_t total = stream.rows();
  const std::int64_t c = stream.cols();
  std::vector<EmgWindow> out;
  for (std::int64_t start = 0; start + n <= total; start += hop) {
    EmgWindow w;
    w.samples = Tensor({n, c});
    std::copy_n(stream.data() + start * c, n * c, w.samples.data());
    w.start_time_ms = t0_ms + static_cast<double>(start) * dt_ms;
    w.sample_rate_hz = 1000.0 / dt_ms;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace emghand::signal
