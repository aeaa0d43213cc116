#include <benchmark/benchmark.h>

#include "emghand/fusion.hpp"
#include "emghand/model.hpp"
#include "emghand/occlusion.hpp"
#include "emghand/rng.hpp"
#include "emghand/signal.hpp"
#include "emghand/stats.hpp"

using namespace emghand;

namespace {

signal::EmgWindow make_window(std::int64_t n, std::int64_t c, std::uint64_t seed) {
  Rng rng(seed);
  signal::EmgWindow w;
  w.samples = Tensor({n, c});
  for (std::int64_t i = 0; i < w.samples.size(); ++i) w.samples[i] = rng.uniform(0.0, 255.0);
  return w;
}

model::Model default_model() {
  model::Model m{model::ModelConfig{}};
  model::Normalization norm;
  norm.mean.assign(8, 120.0);
  norm.stddev.assign(8, 55.0);
  m.set_normalization(norm);
  return m;
}

}  // namespace

static void BM_ExtractFeatures(benchmark::State& state) {
  const auto w = make_window(150, 8, 1);
  for (auto _ : state) benchmark::DoNotOptimize(signal::extract_features(w));
}
BENCHMARK(BM_ExtractFeatures);

// Per-tick inference cost in the fusion service (normalization, features,
// four branches, head, clamp). The 50 Hz budget is 20 ms.
static void BM_ModelForwardTick(benchmark::State& state) {
  auto m = default_model();
  const auto w = make_window(150, 8, 2);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(w));
}
BENCHMARK(BM_ModelForwardTick);

static void BM_TrainStep(benchmark::State& state) {
  const auto batch = state.range(0);
  model::ModelConfig cfg;
  auto m = default_model();
  Rng rng(3);
  Tensor seq({batch, cfg.n_hat, cfg.channels});
  for (std::int64_t i = 0; i < seq.size(); ++i) seq[i] = rng.uniform(-1.0, 1.0);
  Tensor feat({batch, cfg.feat_width()});
  for (std::int64_t i = 0; i < feat.size(); ++i) feat[i] = rng.uniform(-1.0, 1.0);
  Tensor wav({batch, cfg.wav_width()});
  for (std::int64_t i = 0; i < wav.size(); ++i) wav[i] = rng.uniform(-1.0, 1.0);
  Tensor target({batch, cfg.joints});
  for (std::int64_t i = 0; i < target.size(); ++i) target[i] = rng.uniform(0.0, 90.0);

  for (auto _ : state) {
    nn::Tape tape;
    nn::Var loss = model::Model::testing::build_loss(m, tape, seq, feat, wav, target);
    nn::backward(tape, loss);
    nn::adam_step(m.params(), 1e-3);
    benchmark::DoNotOptimize(loss->val()[0]);
  }
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_RayCastFrame(benchmark::State& state) {
  const auto skel = occlusion::HandSkeleton::canonical();
  JointAngleVector angles;
  for (int j = 0; j < kJointCount; ++j) angles[j] = is_pip(j) ? 60.0 : 45.0;
  const Vec3 camera{-40.0, 10.0, 5.0};
  for (auto _ : state) {
    const auto geometry = occlusion::build_geometry(skel, angles, Pose{});
    int occluded = 0;
    for (int bone = 0; bone < kJointCount; ++bone)
      occluded += occlusion::bone_occluded(camera, bone, geometry) ? 1 : 0;
    benchmark::DoNotOptimize(occluded);
  }
}
BENCHMARK(BM_RayCastFrame);

static void BM_WilcoxonExact(benchmark::State& state) {
  Rng rng(4);
  std::vector<double> x, y;
  for (int i = 0; i < 25; ++i) {
    x.push_back(rng.normal(0.0, 1.0));
    y.push_back(rng.normal(0.5, 1.0));
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(
        stats::wilcoxon_signed_rank(x, y, stats::Alternative::less,
                                    stats::WilcoxonMethod::exact));
}
BENCHMARK(BM_WilcoxonExact);

static void BM_ShapiroWilk5000(benchmark::State& state) {
  Rng rng(5);
  std::vector<double> x;
  for (int i = 0; i < 5000; ++i) x.push_back(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(stats::shapiro_wilk(x));
}
BENCHMARK(BM_ShapiroWilk5000);

BENCHMARK_MAIN();
