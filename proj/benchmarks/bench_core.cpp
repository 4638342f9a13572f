// Microbenchmarks for the audit hot paths: forward scoring, noisy-neighbor
// scoring, training steps and the ROC/AUC sweep.

#include <benchmark/benchmark.h>

#include "mia/attack.hpp"
#include "mia/lm.hpp"
#include "mia/metrics.hpp"
#include "mia/rng.hpp"

namespace {

mia::TokenSequence random_seq(mia::Rng& rng, std::size_t len) {
    mia::TokenSequence x;
    for (std::size_t i = 0; i < len; ++i) {
        x.tokens.push_back(static_cast<std::int32_t>(rng.bounded(256)));
    }
    return x;
}

const mia::LmModel& default_model() {
    static mia::LmModel model =
        mia::LmModel::random_init(mia::LmConfig{}, 42);
    return model;
}

void BM_Perplexity(benchmark::State& state) {
    mia::Rng rng(1);
    mia::TokenSequence x = random_seq(rng, 126);
    const auto& model = default_model();
    for (auto _ : state) {
        benchmark::DoNotOptimize(mia::perplexity(model, x));
    }
}
BENCHMARK(BM_Perplexity);

void BM_ScoreNoisy(benchmark::State& state) {
    mia::Rng rng(2);
    mia::TokenSequence x = random_seq(rng, 126);
    const auto& model = default_model();
    const int k = static_cast<int>(state.range(0));
    mia::Rng stream(7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mia::score_noisy(model, x, 0.1, k, stream));
    }
}
BENCHMARK(BM_ScoreNoisy)->Arg(1)->Arg(10);

void BM_TrainStep(benchmark::State& state) {
    mia::Rng rng(3);
    std::vector<mia::TokenSequence> data;
    for (int i = 0; i < 64; ++i) data.push_back(random_seq(rng, 126));
    mia::LmConfig cfg;
    cfg.batch_size = static_cast<int>(state.range(0));
    for (auto _ : state) {
        cfg.train_steps = 1;
        benchmark::DoNotOptimize(mia::train(cfg, data, 5));
    }
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_RocAuc(benchmark::State& state) {
    mia::Rng rng(4);
    std::vector<mia::ScoreRecord> records;
    const auto n = static_cast<std::size_t>(state.range(0));
    for (std::size_t i = 0; i < n; ++i) {
        mia::ScoreRecord r;
        r.sample_id = i;
        r.is_member = i % 2 == 0;
        r.calibrated_score = rng.next_normal(r.is_member ? -0.2 : 0.2, 1.0);
        records.push_back(r);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(mia::auc(mia::roc(records)));
    }
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(8000);

void BM_ClopperPearson(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(mia::clopper_pearson(13, 2500, 0.95));
    }
}
BENCHMARK(BM_ClopperPearson);

}  // namespace

BENCHMARK_MAIN();
