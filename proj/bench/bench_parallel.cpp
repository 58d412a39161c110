// Serial references against their OpenMP counterparts: evaluator calls in
// rerank and dialogue replay in run_eval.

#include <benchmark/benchmark.h>

#include <chrono>
#include <sstream>
#include <thread>

#include "cps/eval.hpp"
#include "cps/synth.hpp"
#include "cps/ttr.hpp"
#include "engine_fixture.hpp"

using namespace cps;

namespace {

/// Stands in for a remote judge: fixed latency per call.
class SlowEvaluator final : public Evaluator {
public:
    explicit SlowEvaluator(std::chrono::microseconds latency) : latency_(latency) {}
    EvaluatorVerdict evaluate(const SidCandidate& sid, std::string_view query) const override {
        std::this_thread::sleep_for(latency_);
        return evaluate_lexical(sid.text, query);
    }
    std::string describe() const override { return "slow"; }

private:
    std::chrono::microseconds latency_;
};

RerankBatch make_batch(std::size_t products, std::size_t sids_per_product) {
    RerankBatch batch;
    batch.query = "a red silk dress with a bohemian look";
    SidId next = 0;
    for (std::size_t p = 0; p < products; ++p) {
        ProductCandidates pc{"p" + std::to_string(p), {}};
        for (std::size_t s = 0; s < sids_per_product; ++s) {
            pc.sids.push_back({next, pc.product_id, "red silk dress number " + std::to_string(next),
                               -1.0 - 0.01 * static_cast<double>(next)});
            ++next;
        }
        batch.products.push_back(std::move(pc));
    }
    return batch;
}

struct EvalFixture {
    std::shared_ptr<const Engine> engine;
    std::vector<EvalDialogue> dataset;

    static const EvalFixture& get() {
        static const EvalFixture f = [] {
            const auto files = synth_generate({3, 500, 32, 4, 0.3});
            EvalFixture out;
            out.engine =
                cps::testing::make_engine(cps::testing::bind(cps::testing::ingest_string(files.corpus_jsonl)));
            std::istringstream in(files.dialogues_jsonl);
            out.dataset = parse_dataset(in);
            return out;
        }();
        return f;
    }
};

void BM_RerankSerial_Lexical(benchmark::State& state) {
    const auto batch = make_batch(100, 2);
    LexicalEvaluator lexical;
    for (auto _ : state) benchmark::DoNotOptimize(rerank_serial(batch, lexical, {true, 1}));
}

void BM_RerankParallel_Lexical(benchmark::State& state) {
    const auto batch = make_batch(100, 2);
    LexicalEvaluator lexical;
    const int threads = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(rerank(batch, lexical, {true, threads}));
}

void BM_RerankSerial_Latency(benchmark::State& state) {
    const auto batch = make_batch(20, 2);
    SlowEvaluator slow(std::chrono::microseconds(500));
    for (auto _ : state) benchmark::DoNotOptimize(rerank_serial(batch, slow, {true, 1}));
}

void BM_RerankParallel_Latency(benchmark::State& state) {
    const auto batch = make_batch(20, 2);
    SlowEvaluator slow(std::chrono::microseconds(500));
    const int threads = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(rerank(batch, slow, {true, threads}));
}

void BM_EvalSerial(benchmark::State& state) {
    const auto& f = EvalFixture::get();
    const auto runner = engine_runner(*f.engine, f.engine->defaults());
    EvalOptions options;
    options.parallelism = 1;
    for (auto _ : state) benchmark::DoNotOptimize(run_eval_serial(f.dataset, f.engine->corpus(), runner, options));
}

void BM_EvalParallel(benchmark::State& state) {
    const auto& f = EvalFixture::get();
    const auto runner = engine_runner(*f.engine, f.engine->defaults());
    EvalOptions options;
    options.parallelism = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(run_eval(f.dataset, f.engine->corpus(), runner, options));
}

}  // namespace

BENCHMARK(BM_RerankSerial_Lexical);
BENCHMARK(BM_RerankParallel_Lexical)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->UseRealTime();
BENCHMARK(BM_RerankSerial_Latency)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_RerankParallel_Latency)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_EvalSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvalParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK_MAIN();
