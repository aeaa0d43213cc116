#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "emghand/rng.hpp"
#include "emghand/signal.hpp"

using namespace emghand;
using namespace emghand::signal;

namespace {

// Independent oracles: straight transcriptions of the defining formulas,
// kept free of the library's table caching and cascade plumbing.

std::vector<double> naive_dft_power(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double w = 2.0 * std::numbers::pi * static_cast<double>(k) *
                       static_cast<double>(t) / static_cast<double>(n);
      re += x[t] * std::cos(w);
      im -= x[t] * std::sin(w);
    }
    out[k] = re * re + im * im;
  }
  return out;
}

// db4 analysis filters (same frozen constants the library pins down).
const std::vector<double> kLo = {
    -0.010597401784997278, 0.032883011666982945, 0.030841381835986965,
    -0.18703481171888114,  -0.02798376941698385, 0.6308807679295904,
    0.7148465705525415,    0.23037781330885523};
const std::vector<double> kHi = {
    -0.23037781330885523, 0.7148465705525415,   -0.6308807679295904,
    -0.02798376941698385, 0.18703481171888114,  0.030841381835986965,
    -0.032883011666982945, -0.010597401784997278};

std::vector<double> oracle_conv_down(const std::vector<double>& x,
                                     const std::vector<double>& f) {
  // Full zero-padded convolution, then keep the odd lags.
  std::vector<double> conv(x.size() + f.size() - 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t k = 0; k < f.size(); ++k) conv[i + k] += x[i] * f[k];
  std::vector<double> out;
  for (std::size_t m = 1; m < conv.size(); m += 2) out.push_back(conv[m]);
  return out;
}

Tensor random_window_matrix(Rng& rng, std::int64_t n, std::int64_t c, double hi) {
  Tensor t({n, c});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.0, hi);
  return t;
}

}  // namespace

TEST_CASE("make_windows basic framing") {
  Tensor stream({150, 2});
  auto w = make_windows(stream, 0.0, 20.0, 150, 1);
  CHECK(w.size() == 1);

  Tensor longer({160, 2});
  for (std::int64_t i = 0; i < longer.size(); ++i) longer[i] = static_cast<double>(i % 7);
  auto w2 = make_windows(longer, 100.0, 20.0, 150, 5);
  REQUIRE(w2.size() == 3);
  CHECK(w2[0].start_time_ms == doctest::Approx(100.0));
  CHECK(w2[1].start_time_ms == doctest::Approx(200.0));
  CHECK(w2[2].start_time_ms == doctest::Approx(300.0));
  CHECK(w2[1].samples.at(0, 0) == longer.at(5, 0));
  CHECK(w2[2].samples.at(0, 1) == longer.at(10, 1));

  Tensor shorter({149, 2});
  CHECK(make_windows(shorter, 0.0, 20.0, 150, 1).empty());
  CHECK_THROWS_AS(make_windows(stream, 0.0, 20.0, 150, 0), std::invalid_argument);
}

TEST_CASE("time_features hand values") {
  {
    const std::vector<double> x = {1.0, -1.0, 2.0, -2.0};
    CHECK(time_features(x).mav == doctest::Approx(1.5));
  }
  {
    const std::vector<double> x = {2.0, 2.0, 2.0, 2.0};
    const auto f = time_features(x);
    CHECK(f.rms == doctest::Approx(2.0));
    CHECK(f.var == doctest::Approx(0.0));
  }
  {
    const std::vector<double> x = {1.0, -1.0, 1.0, -1.0};
    CHECK(time_features(x).var == doctest::Approx(1.0));
  }
  const std::vector<double> one = {1.0};
  CHECK_THROWS_AS(time_features(one), std::invalid_argument);
}

TEST_CASE("time_features invariants on random windows") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(150);
    double sum = 0.0;
    for (auto& v : x) {
      v = rng.uniform(0.0, 255.0);
      sum += v;
    }
    const double mean = sum / static_cast<double>(x.size());
    const auto f = time_features(x);
    CHECK(f.rms >= f.mav - 1e-12);
    CHECK(std::abs(f.var - (f.rms * f.rms - mean * mean)) < 1e-9);
  }
}

TEST_CASE("power_spectrum spectral lines and oracle") {
  {
    const std::vector<double> zeros(150, 0.0);
    for (double p : power_spectrum(zeros)) CHECK(p == 0.0);
  }
  {
    std::vector<double> x(150);
    for (std::size_t t = 0; t < x.size(); ++t)
      x[t] = std::cos(2.0 * std::numbers::pi * 5.0 * static_cast<double>(t) / 150.0);
    const auto p = power_spectrum(x);
    REQUIRE(p.size() == 76);
    const double peak = p[5];
    CHECK(peak > 1.0);
    for (std::size_t k = 0; k < p.size(); ++k)
      if (k != 5) CHECK(p[k] < 1e-9 * peak);
  }
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(150);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    const auto got = power_spectrum(x);
    const auto want = naive_dft_power(x);
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < got.size(); ++k)
      CHECK(std::abs(got[k] - want[k]) < 1e-9);
  }
}

TEST_CASE("power_spectrum satisfies Parseval") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = (trial % 2 == 0) ? 150 : 149;  // even and odd lengths
    std::vector<double> x(n);
    double time_energy = 0.0;
    for (auto& v : x) {
      v = rng.uniform(-2.0, 2.0);
      time_energy += v * v;
    }
    const auto p = power_spectrum(x);
    double spec_energy = p[0];
    const std::size_t last = p.size() - 1;
    for (std::size_t k = 1; k < p.size(); ++k) {
      const bool self_conjugate = (n % 2 == 0) && k == last;
      spec_energy += self_conjugate ? p[k] : 2.0 * p[k];
    }
    spec_energy /= static_cast<double>(n);
    CHECK(std::abs(spec_energy - time_energy) < 1e-9 * std::max(1.0, time_energy));
  }
}

TEST_CASE("freq_features bin statistics") {
  {
    std::vector<double> p(76, 0.0);
    p[5] = 3.0;
    const auto f = freq_features(p);
    CHECK(f.mdf == doctest::Approx(5.0 / 75.0));
    CHECK(f.mnf == doctest::Approx(5.0 / 75.0));
    CHECK(f.pf == doctest::Approx(5.0 / 75.0));
  }
  {
    std::vector<double> p(76, 0.0);
    p[2] = 1.0;
    p[4] = 1.0;
    CHECK(freq_features(p).mnf == doctest::Approx(3.0 / 75.0));
    CHECK(freq_features(p).pf == doctest::Approx(2.0 / 75.0));  // lowest bin on ties
  }
  {
    std::vector<double> p(76, 0.0);
    p[0] = 100.0;  // DC only: degenerate
    const auto f = freq_features(p);
    CHECK(f.mdf == 0.0);
    CHECK(f.mnf == 0.0);
    CHECK(f.pf == 0.0);
  }
}

TEST_CASE("freq_features matches cumulative-sum oracle") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(76);
    for (auto& v : p) v = rng.uniform(0.0, 1.0);
    const auto f = freq_features(p);

    double total = 0.0;
    for (std::size_t k = 1; k < p.size(); ++k) total += p[k];
    double cum = 0.0, weighted = 0.0, best = -1.0;
    std::size_t mdf = 0, pf = 0;
    for (std::size_t k = 1; k < p.size(); ++k) {
      if (mdf == 0) {
        cum += p[k];
        if (cum >= 0.5 * total) mdf = k;
      }
      weighted += static_cast<double>(k) * p[k];
      if (p[k] > best) {
        best = p[k];
        pf = k;
      }
    }
    CHECK(f.mdf == static_cast<double>(mdf) / 75.0);
    CHECK(f.pf == static_cast<double>(pf) / 75.0);
    CHECK(f.mnf == doctest::Approx(weighted / total / 75.0).epsilon(1e-12));

    // MDF defining property: cumulative power through the bin reaches half
    // the total, through the previous bin it does not.
    double through = 0.0;
    for (std::size_t k = 1; k <= mdf; ++k) through += p[k];
    CHECK(through >= 0.5 * total);
    CHECK(through - p[mdf] < 0.5 * total);
  }
}

TEST_CASE("db4 filter bank is orthonormal") {
  double sum_lo = 0.0, norm_lo = 0.0, sum_hi = 0.0, dot = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    sum_lo += kLo[k];
    norm_lo += kLo[k] * kLo[k];
    sum_hi += kHi[k];
    dot += kLo[k] * kHi[k];
  }
  CHECK(sum_lo == doctest::Approx(std::numbers::sqrt2).epsilon(1e-12));
  CHECK(norm_lo == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(sum_hi) < 1e-12);
  CHECK(std::abs(dot) < 1e-12);
  for (int shift = 1; shift <= 3; ++shift) {
    double d = 0.0;
    for (int k = 0; k + 2 * shift < 8; ++k) d += kLo[k] * kLo[k + 2 * shift];
    CHECK(std::abs(d) < 1e-12);
  }
}

TEST_CASE("dwt_level4 shapes, linearity, and convolution oracle") {
  {
    const std::vector<double> zeros(150, 0.0);
    const auto w = dwt_level4(zeros);
    REQUIRE(w.approx.size() == 15);
    REQUIRE(w.detail.size() == 15);
    for (double v : w.approx) CHECK(v == 0.0);
    for (double v : w.detail) CHECK(v == 0.0);
  }
  const std::vector<double> short_input(149, 0.0);
  CHECK_THROWS_AS(dwt_level4(short_input), std::invalid_argument);

  Rng rng(17);
  std::vector<double> x(150), y(150), mix(150);
  for (std::size_t i = 0; i < 150; ++i) {
    x[i] = rng.uniform(-1.0, 1.0);
    y[i] = rng.uniform(-1.0, 1.0);
    mix[i] = 2.0 * x[i] - 3.0 * y[i];
  }
  const auto wx = dwt_level4(x);
  const auto wy = dwt_level4(y);
  const auto wm = dwt_level4(mix);
  for (std::size_t i = 0; i < 15; ++i) {
    CHECK(std::abs(wm.approx[i] - (2.0 * wx.approx[i] - 3.0 * wy.approx[i])) < 1e-9);
    CHECK(std::abs(wm.detail[i] - (2.0 * wx.detail[i] - 3.0 * wy.detail[i])) < 1e-9);
  }

  // Direct cascade oracle on a fixed seeded input.
  std::vector<double> a(x);
  std::vector<double> d;
  std::vector<std::size_t> lengths;
  for (int level = 0; level < 4; ++level) {
    d = oracle_conv_down(a, kHi);
    a = oracle_conv_down(a, kLo);
    lengths.push_back(a.size());
  }
  CHECK(lengths == std::vector<std::size_t>{78, 42, 24, 15});
  for (std::size_t i = 0; i < 15; ++i) {
    CHECK(std::abs(wx.approx[i] - a[i]) < 1e-9);
    CHECK(std::abs(wx.detail[i] - d[i]) < 1e-9);
  }
}

TEST_CASE("extract_features shapes and degenerate window") {
  EmgWindow w;
  w.samples = Tensor({150, 8});
  const auto f = extract_features(w);
  CHECK(f.time_freq.rows() == 8);
  CHECK(f.time_freq.cols() == 6);
  CHECK(f.wavelet.rows() == 8);
  CHECK(f.wavelet.cols() == 30);
  for (double v : f.time_freq.values()) CHECK(v == 0.0);
  for (double v : f.wavelet.values()) CHECK(v == 0.0);
}

TEST_CASE("extract_features scaling behaviour") {
  Rng rng(23);
  EmgWindow w;
  w.samples = random_window_matrix(rng, 150, 8, 100.0);
  EmgWindow w2 = w;
  for (std::int64_t i = 0; i < w2.samples.size(); ++i) w2.samples[i] *= 2.0;

  const auto f1 = extract_features(w);
  const auto f2 = extract_features(w2);
  for (std::int64_t ch = 0; ch < 8; ++ch) {
    CHECK(f2.time_freq.at(ch, 0) == doctest::Approx(2.0 * f1.time_freq.at(ch, 0)));
    CHECK(f2.time_freq.at(ch, 1) == doctest::Approx(2.0 * f1.time_freq.at(ch, 1)));
    CHECK(f2.time_freq.at(ch, 2) == doctest::Approx(4.0 * f1.time_freq.at(ch, 2)));
    // power-of-two scale: spectral bin statistics are bit-identical
    CHECK(f2.time_freq.at(ch, 3) == f1.time_freq.at(ch, 3));
    CHECK(f2.time_freq.at(ch, 4) == f1.time_freq.at(ch, 4));
    CHECK(f2.time_freq.at(ch, 5) == f1.time_freq.at(ch, 5));
  }
}

TEST_CASE("EmgWindow validation") {
  EmgWindow w;
  w.samples = Tensor({10, 2});
  w.samples.at(3, 1) = -0.5;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w.samples.at(3, 1) = 256.0;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w.samples.at(3, 1) = 255.0;
  CHECK_NOTHROW(w.validate());
}
