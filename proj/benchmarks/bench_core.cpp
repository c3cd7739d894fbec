#include <benchmark/benchmark.h>

#include "cgps/data.hpp"
#include "cgps/harness.hpp"
#include "cgps/model.hpp"

using namespace cgps;

namespace {

std::vector<double> random_values(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

void BM_matmul_64x32_32x128(benchmark::State& state) {
    Tape tape;
    Tensor a = tape.leaf({64, 32}, random_values(64 * 32, 1));
    Tensor b = tape.leaf({32, 128}, random_values(32 * 128, 2));
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.value().data());
    }
}
BENCHMARK(BM_matmul_64x32_32x128);

void BM_lstm_gates(benchmark::State& state) {
    Tape tape;
    Tensor pre = tape.leaf({64, 128}, random_values(64 * 128, 3));
    Tensor c = tape.leaf({64, 32}, random_values(64 * 32, 4));
    for (auto _ : state) {
        Tensor hc = lstm_gates(pre, c);
        benchmark::DoNotOptimize(hc.value().data());
    }
}
BENCHMARK(BM_lstm_gates);

void BM_softmax_rows(benchmark::State& state) {
    Tape tape;
    Tensor x = tape.leaf({64, 10}, random_values(64 * 10, 5));
    for (auto _ : state) {
        Tensor y = softmax_rows(x);
        benchmark::DoNotOptimize(y.value().data());
    }
}
BENCHMARK(BM_softmax_rows);

// one full optimization step on a jump-scale batch, graph build to adam
void BM_training_step(benchmark::State& state) {
    data::Split split = data::build_primitive_split("jump");
    harness::TaskData task = harness::prepare(std::move(split.train), std::move(split.test));
    const harness::Preset& preset = harness::find_preset("scan-jump");
    Rng init(1);
    Model model = build_model(preset.model, task.input_vocab.size(), task.output_vocab.size(), init);
    Adam adam(model.params, preset.optim.adam);
    Rng batch_rng(2), noise_rng(3);
    Tape tape;
    std::vector<std::vector<int>> ins(64), outs(64);
    for (auto _ : state) {
        for (int b = 0; b < 64; ++b) {
            const auto pick = batch_rng.uniform_int(task.train_in.size());
            ins[b] = task.train_in[pick];
            outs[b] = task.train_out[pick];
        }
        Batch batch = make_batch(ins, outs, task.input_vocab.eos);
        tape.reset();
        std::vector<Tensor> staged = stage(tape, model.params);
        Tensor loss = training_loss(tape, model, staged, batch, &noise_rng);
        tape.backward(loss);
        collect_grads(staged, model.params);
        adam.step(model.params);
        benchmark::DoNotOptimize(model.params[0].value.data());
    }
}
BENCHMARK(BM_training_step)->Unit(benchmark::kMillisecond);

void BM_greedy_decode_batch(benchmark::State& state) {
    data::Split split = data::build_primitive_split("jump");
    harness::TaskData task = harness::prepare(std::move(split.train), std::move(split.test));
    Rng init(1);
    Model model = build_model(harness::find_preset("scan-jump").model, task.input_vocab.size(),
                              task.output_vocab.size(), init);
    std::vector<std::vector<int>> inputs;
    for (int i = 0; i < 128; ++i) inputs.push_back(task.train_in[i * 17]);
    for (auto _ : state) {
        auto preds = greedy_decode(model, inputs, task.input_vocab.eos, task.output_vocab.eos);
        benchmark::DoNotOptimize(preds.data());
    }
}
BENCHMARK(BM_greedy_decode_batch)->Unit(benchmark::kMillisecond);

void BM_scan_universe_interpret(benchmark::State& state) {
    for (auto _ : state) {
        std::size_t total = 0;
        for (const auto& cmd : data::scan_universe()) total += data::interpret(cmd).size();
        benchmark::DoNotOptimize(total);
    }
}
BENCHMARK(BM_scan_universe_interpret)->Unit(benchmark::kMillisecond);

void BM_jump_split(benchmark::State& state) {
    for (auto _ : state) {
        data::Split s = data::build_primitive_split("jump");
        benchmark::DoNotOptimize(s.train.size());
    }
}
BENCHMARK(BM_jump_split)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
