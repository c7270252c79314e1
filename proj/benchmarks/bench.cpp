#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "mmct/config.hpp"
#include "mmct/encoder.hpp"
#include "mmct/evaluator.hpp"
#include "mmct/losses.hpp"
#include "mmct/numerics.hpp"
#include "mmct/queue.hpp"
#include "mmct/synthdata.hpp"
#include "mmct/trainer.hpp"

namespace {

using namespace mmct;

EncoderParams default_image_encoder() {
    SeededRng rng(1);
    return init_encoder({.backbone_dims = {32, 64, 64},
                         .intra_dim = 16,
                         .inter_dim = 64},
                        rng);
}

Vector random_input(SeededRng& rng, std::size_t dim) {
    Vector v(dim);
    for (double& x : v) x = rng.normal();
    return v;
}

void bm_encoder_forward(benchmark::State& state) {
    const EncoderParams params = default_image_encoder();
    SeededRng rng(2);
    const Vector x = random_input(rng, 32);
    for (auto _ : state) {
        FeaturePair f = forward(params, x);
        benchmark::DoNotOptimize(f);
    }
}
BENCHMARK(bm_encoder_forward);

void bm_encoder_backward(benchmark::State& state) {
    const EncoderParams params = default_image_encoder();
    SeededRng rng(3);
    const Vector x = random_input(rng, 32);
    ForwardCache cache;
    forward(params, x, &cache);
    Vector g_intra(16), g_inter(64);
    for (double& v : g_intra) v = rng.normal();
    for (double& v : g_inter) v = rng.normal();
    for (auto _ : state) {
        EncoderParams grads = backward(params, cache, g_intra, g_inter);
        benchmark::DoNotOptimize(grads);
    }
}
BENCHMARK(bm_encoder_backward);

// Full five-term loss over a 64-sample batch against 256-entry queues —
// the per-step training workload at default settings.
void bm_combined_loss(benchmark::State& state) {
    SeededRng rng(4);
    const auto unit = [&rng](std::size_t d) {
        Vector v(d);
        for (double& x : v) x = rng.normal();
        return l2_normalize(v);
    };
    const auto tags = [&rng]() {
        Vector t(20, 0.0);
        for (double& x : t)
            if (rng.uniform() < 0.2) x = 1.0;
        return t;
    };
    std::vector<SampleFeatures> batch(64);
    for (auto& s : batch) {
        s.q_ii = unit(16);
        s.k_ii = unit(16);
        s.q_cc = unit(16);
        s.k_cc = unit(16);
        s.q_ic = unit(64);
        s.k_ic = unit(64);
        s.q_ci = unit(64);
        s.k_ci = unit(64);
        s.tags = tags();
    }
    std::vector<QueueEntry> image_q(256), caption_q(256);
    for (auto& e : image_q) {
        e.intra_key = unit(16);
        e.inter_key = unit(64);
        e.tags = tags();
    }
    for (auto& e : caption_q) {
        e.intra_key = unit(16);
        e.inter_key = unit(64);
    }
    LossConfig cfg;
    for (auto _ : state) {
        LossBreakdown out = combined_loss(batch, image_q, caption_q, cfg);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(bm_combined_loss);

// One full optimizer step (augment, forward, loss, backward, SGD, EMA,
// enqueue) on a default-sized model and a 64-sample batch.
void bm_train_step(benchmark::State& state) {
    GenConfig gen;
    gen.samples_per_class = 16; // 128 samples; two batches' worth
    const SplitDataset data = generate(gen);
    RunConfig cfg;
    cfg.data = gen;
    TrainState ts = make_train_state(trainer_init_from(cfg));
    const TrainConfig tc = train_config_from(cfg);
    std::vector<std::size_t> batch(64);
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
    for (auto _ : state) {
        LossBreakdown out = train_step(ts, data.train, batch, tc, 1000000);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(bm_train_step)->Unit(benchmark::kMillisecond);

void bm_retrieval_eval(benchmark::State& state) {
    SeededRng rng(5);
    std::vector<Vector> img(200), cap(200);
    for (std::size_t i = 0; i < img.size(); ++i) {
        Vector v(64), w(64);
        for (double& x : v) x = rng.normal();
        for (double& x : w) x = rng.normal();
        img[i] = l2_normalize(v);
        cap[i] = l2_normalize(w);
    }
    const std::vector<std::size_t> ks = {1, 5, 10};
    for (auto _ : state) {
        RetrievalPair out = retrieval_eval(img, cap, ks);
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(bm_retrieval_eval)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
