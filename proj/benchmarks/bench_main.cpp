// Hot-path timings: network forward/backward at the phantom training size,
// loss kernels, morphology and the augmentation resampler.

#include <benchmark/benchmark.h>

#include <vector>

#include "imfseg/augmentation.hpp"
#include "imfseg/evaluation.hpp"
#include "imfseg/losses.hpp"
#include "imfseg/network.hpp"
#include "imfseg/phantom.hpp"
#include "imfseg/rng.hpp"

using namespace imfseg;

namespace {

ImageSlice random_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  ImageSlice img = ImageSlice::zeros(size, size);
  for (double& p : img.pixels) p = rng.uniform();
  return img;
}

BinaryMask random_mask(int size, std::uint64_t seed) {
  Rng rng(seed);
  BinaryMask m = BinaryMask::zeros(size, size);
  for (auto& p : m.pixels) p = rng.bernoulli(0.3) ? 1 : 0;
  return m;
}

ProbabilityMap random_prob(int size, std::uint64_t seed) {
  Rng rng(seed);
  ProbabilityMap p = ProbabilityMap::zeros(size, size);
  for (double& v : p.pixels) v = rng.uniform();
  return p;
}

void BM_forward(benchmark::State& state) {
  int size = static_cast<int>(state.range(0));
  DualDecoderNet net(ArchConfig{3, 8});
  std::vector<double> params = net.init_params(1);
  Workspace ws = net.make_workspace();
  ImageSlice img = random_image(size, 7);
  for (auto _ : state) {
    DecoderOutputs out = net.forward(params, img, ws);
    benchmark::DoNotOptimize(out.p_a.pixels.data());
  }
}
BENCHMARK(BM_forward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_forward_backward(benchmark::State& state) {
  int size = static_cast<int>(state.range(0));
  DualDecoderNet net(ArchConfig{3, 8});
  std::vector<double> params = net.init_params(1);
  Workspace ws = net.make_workspace();
  ImageSlice img = random_image(size, 7);
  std::vector<double> grad(net.param_count());
  std::vector<double> dla(static_cast<std::size_t>(size) * size, 1e-3);
  std::vector<double> dlb(static_cast<std::size_t>(size) * size, -1e-3);
  for (auto _ : state) {
    net.forward(params, img, ws);
    std::fill(grad.begin(), grad.end(), 0.0);
    net.backward(params, ws, dla, dlb, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_forward_backward)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_dice_loss(benchmark::State& state) {
  int size = static_cast<int>(state.range(0));
  ProbabilityMap p = random_prob(size, 3);
  BinaryMask y = random_mask(size, 4);
  for (auto _ : state) benchmark::DoNotOptimize(dice_loss(p, y));
}
BENCHMARK(BM_dice_loss)->Arg(256);

void BM_consistency_loss(benchmark::State& state) {
  int size = static_cast<int>(state.range(0));
  ProbabilityMap pa = random_prob(size, 3), pb = random_prob(size, 5);
  BinaryMask pla = random_mask(size, 6), plb = random_mask(size, 7);
  for (auto _ : state) benchmark::DoNotOptimize(consistency_loss(pa, pb, pla, plb));
}
BENCHMARK(BM_consistency_loss)->Arg(256);

void BM_binary_closing(benchmark::State& state) {
  int size = static_cast<int>(state.range(0));
  BinaryMask m = random_mask(size, 11);
  BinaryMask se = make_disk(auto_struct_radius(size, 0));
  for (auto _ : state) {
    BinaryMask closed = binary_closing(m, se);
    benchmark::DoNotOptimize(closed.pixels.data());
  }
}
BENCHMARK(BM_binary_closing)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_augment(benchmark::State& state) {
  int size = static_cast<int>(state.range(0));
  TrainingConfig cfg;
  ImageSlice img = random_image(size, 13);
  BinaryMask mask = random_mask(size, 14);
  int epoch = 0;
  for (auto _ : state) {
    AugmentationSpec spec = draw_spec(1, "bench", epoch++, cfg);
    ImageSlice out_img;
    BinaryMask out_mask;
    apply_geometric(spec, img, &mask, out_img, &out_mask);
    out_img = apply_contrast(spec, out_img, cfg.contrast_mode);
    benchmark::DoNotOptimize(out_img.pixels.data());
  }
}
BENCHMARK(BM_augment)->Arg(64)->Arg(256);

void BM_phantom_slice(benchmark::State& state) {
  TrainingConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    PhantomSlice s = generate(phantom_spec_from(cfg, seed++));
    benchmark::DoNotOptimize(s.image.pixels.data());
  }
}
BENCHMARK(BM_phantom_slice)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
