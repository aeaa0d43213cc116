#include "emghand/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "emghand/model.hpp"
#include "emghand/nn.hpp"
#include "emghand/occlusion.hpp"
#include "emghand/rng.hpp"
#include "emghand/signal.hpp"
#include "emghand/stats.hpp"

namespace emghand::selftest {

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::int64_t> shape, double scale) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

CheckResult check(const std::string& name, bool passed, const std::string& detail) {
  return {name, passed, detail};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

CheckResult gradient_linear() {
  Rng rng(101);
  nn::ParamStore store;
  store.create("w", random_tensor(rng, {6, 3}, 0.5));
  store.create("b", random_tensor(rng, {3}, 0.5));
  Tensor x = random_tensor(rng, {4, 6}, 1.0);
  Tensor target = random_tensor(rng, {4, 3}, 1.0);
  auto build = [&](nn::Tape& tape) {
    nn::Var y = nn::fc(tape, nn::input(tape, x), nn::param(tape, store.at("w")),
                       nn::param(tape, store.at("b")), nn::Activation::identity);
    return nn::mse_loss(tape, y, target);
  };
  const auto res = nn::gradient_check(store, build);
  return check("gradient/linear", res.max_rel_err < 1e-6,
               "max rel err " + fmt(res.max_rel_err) + " (tol 1e-6)");
}

CheckResult gradient_lstm() {
  Rng rng(102);
  const std::int64_t hidden = 8;
  nn::ParamStore store;
  store.create("wx", random_tensor(rng, {3, 4 * hidden}, 0.5));
  store.create("wh", random_tensor(rng, {hidden, 4 * hidden}, 0.5));
  store.create("b", random_tensor(rng, {4 * hidden}, 0.2));
  Tensor x = random_tensor(rng, {2, 5, 3}, 1.0);
  Tensor target = random_tensor(rng, {2, hidden}, 1.0);
  auto build = [&](nn::Tape& tape) {
    nn::Var h =
        nn::lstm_last_hidden(tape, nn::input(tape, x), nn::param(tape, store.at("wx")),
                             nn::param(tape, store.at("wh")), nn::param(tape, store.at("b")),
                             hidden);
    return nn::mse_loss(tape, h, target);
  };
  const auto res = nn::gradient_check(store, build);
  return check("gradient/lstm", res.max_rel_err < 1e-4,
               "max rel err " + fmt(res.max_rel_err) + " (tol 1e-4)");
}

CheckResult gradient_full_model() {
  model::ModelConfig cfg;
  cfg.n = 20;
  cfg.n_hat = 8;
  cfg.channels = 2;
  cfg.lstm_hidden = 8;
  cfg.feat_hidden = 8;
  cfg.wav_hidden = 8;
  cfg.filt_hidden = 8;
  cfg.final_hidden = 8;
  cfg.seed = 103;
  model::Model m(cfg);
  Rng rng(104);
  Tensor seq = random_tensor(rng, {2, cfg.n_hat, cfg.channels}, 1.0);
  Tensor feat = random_tensor(rng, {2, cfg.feat_width()}, 1.0);
  Tensor wav = random_tensor(rng, {2, cfg.wav_width()}, 1.0);
  Tensor target = random_tensor(rng, {2, cfg.joints}, 5.0);
  auto build = [&](nn::Tape& tape) {
    return model::Model::testing::build_loss(m, tape, seq, feat, wav, target);
  };
  const auto res = nn::gradient_check(m.params(), build);
  return check("gradient/full-model", res.max_rel_err < 1e-4,
               "max rel err " + fmt(res.max_rel_err) + " (tol 1e-4)");
}

CheckResult dft_oracle() {
  Rng rng(105);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x(150);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    const auto got = signal::power_spectrum(x);
    for (std::size_t k = 0; k < got.size(); ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t t = 0; t < x.size(); ++t) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(k) *
                         static_cast<double>(t) / static_cast<double>(x.size());
        re += x[t] * std::cos(w);
        im -= x[t] * std::sin(w);
      }
      worst = std::max(worst, std::abs(got[k] - (re * re + im * im)));
    }
  }
  return check("signal/dft-oracle", worst < 1e-9, "max abs dev " + fmt(worst));
}

CheckResult parseval() {
  Rng rng(106);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = trial % 2 == 0 ? 150 : 149;
    std::vector<double> x(n);
    double energy = 0.0;
    for (auto& v : x) {
      v = rng.uniform(-2.0, 2.0);
      energy += v * v;
    }
    const auto p = signal::power_spectrum(x);
    double spec = p[0];
    for (std::size_t k = 1; k < p.size(); ++k)
      spec += (n % 2 == 0 && k == p.size() - 1) ? p[k] : 2.0 * p[k];
    spec /= static_cast<double>(n);
    worst = std::max(worst, std::abs(spec - energy) / energy);
  }
  return check("signal/parseval", worst < 1e-9, "max rel dev " + fmt(worst));
}

CheckResult dwt_oracle() {
  // direct convolution cascade with independently-coded filters
  const double lo[8] = {-0.010597401784997278, 0.032883011666982945,
                        0.030841381835986965,  -0.18703481171888114,
                        -0.02798376941698385,  0.6308807679295904,
                        0.7148465705525415,    0.23037781330885523};
  const double hi[8] = {-0.23037781330885523, 0.7148465705525415,
                        -0.6308807679295904,  -0.02798376941698385,
                        0.18703481171888114,  0.030841381835986965,
                        -0.032883011666982945, -0.010597401784997278};
  auto conv_down = [](const std::vector<double>& x, const double (&f)[8]) {
    std::vector<double> conv(x.size() + 7, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t k = 0; k < 8; ++k) conv[i + k] += x[i] * f[k];
    std::vector<double> out;
    for (std::size_t m = 1; m < conv.size(); m += 2) out.push_back(conv[m]);
    return out;
  };
  Rng rng(107);
  std::vector<double> x(150);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  const auto got = signal::dwt_level4(x);
  std::vector<double> approx = x, detail;
  for (int level = 0; level < 4; ++level) {
    detail = conv_down(approx, hi);
    approx = conv_down(approx, lo);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < approx.size(); ++i) {
    worst = std::max(worst, std::abs(approx[i] - got.approx[i]));
    worst = std::max(worst, std::abs(detail[i] - got.detail[i]));
  }
  return check("signal/dwt-oracle", worst < 1e-9 && got.approx.size() == 15,
               "max abs dev " + fmt(worst));
}

CheckResult wilcoxon_oracle() {
  Rng rng(108);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_int(10));
    std::vector<double> x, y, d;
    for (int i = 0; i < n; ++i) {
      x.push_back(rng.uniform(-3.0, 3.0));
      y.push_back(rng.uniform() < 0.25 ? x.back() : rng.uniform(-3.0, 3.0));
    }
    for (int i = 0; i < n; ++i)
      if (x[static_cast<std::size_t>(i)] != y[static_cast<std::size_t>(i)])
        d.push_back(x[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(i)]);
    if (d.empty()) continue;

    const auto got =
        stats::wilcoxon_signed_rank(x, y, stats::Alternative::less, stats::WilcoxonMethod::exact);

    const std::size_t m = d.size();
    std::vector<double> ranks(m);
    for (std::size_t i = 0; i < m; ++i) {
      double below = 0.0, equal = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (std::abs(d[j]) < std::abs(d[i])) below += 1.0;
        if (std::abs(d[j]) == std::abs(d[i])) equal += 1.0;
      }
      ranks[i] = below + 0.5 * (equal + 1.0);
    }
    double observed = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (d[i] > 0.0) observed += ranks[i];
    std::size_t count = 0;
    const std::size_t total = static_cast<std::size_t>(1) << m;
    for (std::size_t mask = 0; mask < total; ++mask) {
      double wplus = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        if (mask & (static_cast<std::size_t>(1) << i)) wplus += ranks[i];
      if (wplus <= observed + 1e-12) ++count;
    }
    const double want = static_cast<double>(count) / static_cast<double>(total);
    worst = std::max(worst, std::abs(got.p - want));
  }
  return check("stats/wilcoxon-enumeration", worst < 1e-12, "max abs dev " + fmt(worst));
}

CheckResult shapiro_sanity() {
  int rejections = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(2000 + static_cast<std::uint64_t>(trial));
    std::vector<double> x;
    for (int i = 0; i < 100; ++i) x.push_back(rng.normal());
    if (stats::shapiro_wilk(x).p < 0.05) ++rejections;
  }
  Rng rng(109);
  std::vector<double> unif;
  for (int i = 0; i < 500; ++i) unif.push_back(rng.uniform());
  const double up = stats::shapiro_wilk(unif).p;
  const bool ok = rejections <= 14 && up < 0.01;  // ~5% +- 3 sigma over 100 trials
  return check("stats/shapiro-sanity", ok,
               std::to_string(rejections) + "/100 normal rejections, uniform p " + fmt(up));
}

CheckResult ray_oracles() {
  Rng rng(110);
  int mismatches = 0;
  const int trials = 2000;
  for (int i = 0; i < trials; ++i) {
    occlusion::Capsule c;
    c.a = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    c.b = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    c.radius = rng.uniform(0.3, 1.5);
    const Vec3 origin{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
    if (dir.norm() == 0.0) continue;
    dir = dir.normalized();
    const bool got = occlusion::ray_capsule_intersect(origin, dir, c).has_value();
    bool want = false;
    for (int k = 0; k <= 1500 && !want; ++k) {
      const double u = static_cast<double>(k) / 1500.0;
      const Vec3 center = c.a + u * (c.b - c.a);
      const double along = (center - origin).dot(dir);
      const Vec3 closest = along >= 0.0 ? origin + along * dir : origin;
      want = (center - closest).norm() <= c.radius;
    }
    if (got != want) ++mismatches;
  }
  return check("geometry/ray-capsule-oracle", mismatches <= trials / 1000,
               std::to_string(mismatches) + "/" + std::to_string(trials) + " mismatches");
}

CheckResult kinematics_spot() {
  const auto skel = occlusion::HandSkeleton::canonical();
  JointAngleVector a;
  a[0] = 90.0;
  a[1] = 90.0;
  const auto bones = occlusion::forward_kinematics(skel, a, Pose{});
  const Vec3 tip = bones[0].distal.b;
  const double err = std::abs(tip.x - 5.3244294954150537) + std::abs(tip.y - 3.0) +
                     std::abs(tip.z - (-2.8819660112501055));
  return check("geometry/forward-kinematics", err < 1e-9, "abs dev " + fmt(err));
}

}  // namespace

std::vector<CheckResult> run_all(bool inject_lstm_fault) {
  nn::testing::set_lstm_backward_fault(inject_lstm_fault);
  std::vector<CheckResult> results;
  results.push_back(gradient_linear());
  results.push_back(gradient_lstm());
  results.push_back(gradient_full_model());
  nn::testing::set_lstm_backward_fault(false);
  results.push_back(dft_oracle());
  results.push_back(parseval());
  results.push_back(dwt_oracle());
  results.push_back(wilcoxon_oracle());
  results.push_back(shapiro_sanity());
  results.push_back(ray_oracles());
  results.push_back(kinematics_spot());
  return results;
}

}  // namespace emghand::selftest
