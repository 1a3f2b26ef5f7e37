// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#include <benchmark/benchmark.h>

#include <sstream>

#include "mtr/bm25.hpp"
#include "mtr/metrics.hpp"
#include "mtr/models.hpp"
#include "mtr/train.hpp"

namespace {

using namespace mtr;

TensorPtr random_tensor(std::vector<int> shape, Rng& rng) {
    auto n = static_cast<std::size_t>(shape_size(shape));
    std::vector<double> v(n);
    for (auto& x : v) x = uniform_real(rng, -1.0, 1.0);
    return Tensor::make(std::move(shape), std::move(v));
}

std::pair<Vocabulary, EmbeddingTable> bench_embeddings(int tokens, int dim) {
    std::ostringstream os;
    os << tokens << ' ' << dim << '\n';
    Rng rng(1);
    for (int t = 0; t < tokens; ++t) {
        os << 'w' << t;
        for (int d = 0; d < dim; ++d) os << ' ' << uniform_real(rng, -0.5, 0.5);
        os << '\n';
    }
    return parse_embeddings(os.str());
}

void BM_Matmul(benchmark::State& state) {
    Rng rng(2);
    const auto n = static_cast<int>(state.range(0));
    auto a = random_tensor({n, n}, rng);
    auto b = random_tensor({n, n}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ops::matmul(nullptr, a, b));
    }
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128);

void BM_Conv2dFullDepth(benchmark::State& state) {
    Rng rng(3);
    auto x = random_tensor({6, 100, 7}, rng);
    auto w = random_tensor({6, 3, 4, 7}, rng);
    auto bias = random_tensor({6}, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ops::conv2d_full_depth(nullptr, x, w, bias, Padding::same));
    }
}
BENCHMARK(BM_Conv2dFullDepth);

void BM_BiLstmEncode(benchmark::State& state) {
    auto [vocab, table] = bench_embeddings(500, 24);
    Rng rng(4);
    auto proj = InputProjection::init(24, 12, rng);
    Encoder enc = BiLstmEncoder::init(12, 10, 0.0, rng);
    std::string body;
    for (int i = 0; i < 180; ++i) body += "w" + std::to_string(i % 500) + " ";
    auto doc = assemble_document({{"body", body}}, vocab);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            encode_states(nullptr, doc, table, proj, enc, EvalMode::infer, nullptr));
    }
}
BENCHMARK(BM_BiLstmEncode);

void BM_MatchTensorScore(benchmark::State& state) {
    auto [vocab, table] = bench_embeddings(500, 24);
    ModelConfig cfg;
    cfg.projection_dim = 12;
    cfg.query_hidden = 6;
    cfg.doc_hidden = 10;
    cfg.state_dim = 6;
    cfg.filters1 = 4;
    cfg.filters2 = 8;
    cfg.hidden_dim = 8;
    auto model = RankingModel::create(Arch::match_tensor, cfg, table.dim, 5);
    auto q = process_query("w3 w14 w15", vocab);
    std::string body;
    for (int i = 0; i < 80; ++i) body += "w" + std::to_string((i * 7) % 500) + " ";
    auto d = assemble_document({{"body", body}}, vocab);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.score(table, vocab, q, d));
    }
}
BENCHMARK(BM_MatchTensorScore);

void BM_MatchTensorTrainStep(benchmark::State& state) {
    auto [vocab, table] = bench_embeddings(500, 24);
    ModelConfig cfg;
    cfg.projection_dim = 12;
    cfg.query_hidden = 6;
    cfg.doc_hidden = 10;
    cfg.state_dim = 6;
    cfg.filters1 = 4;
    cfg.filters2 = 8;
    cfg.hidden_dim = 8;
    cfg.dropout = 0.1;
    auto model = RankingModel::create(Arch::match_tensor, cfg, table.dim, 6);
    auto params = model.parameters();
    AdamOptimizer adam(params, {});
    Rng drop(7);
    auto q = process_query("w3 w14 w15", vocab);
    std::string body;
    for (int i = 0; i < 80; ++i) body += "w" + std::to_string((i * 7) % 500) + " ";
    auto d = assemble_document({{"body", body}}, vocab);
    for (auto _ : state) {
        AdamOptimizer::zero_grad(params);
        Tape tape;
        auto p = model.score_on_tape(&tape, table, vocab, q, d, EvalMode::train, &drop);
        auto loss = bce_loss(&tape, p, 1.0);
        tape.backward(loss);
        adam.step(params);
    }
}
BENCHMARK(BM_MatchTensorTrainStep);

void BM_Bm25Score(benchmark::State& state) {
    Rng rng(8);
    std::vector<std::vector<std::string>> docs;
    for (int d = 0; d < 1000; ++d) {
        std::vector<std::string> doc;
        for (int t = 0; t < 60; ++t) {
            doc.push_back("w" + std::to_string(static_cast<int>(uniform_real(rng, 0.0, 400.0))));
        }
        docs.push_back(std::move(doc));
    }
    auto stats = CorpusStats::build(docs);
    std::vector<std::string> query{"w10", "w20", "w30"};
    for (auto _ : state) {
        double total = 0.0;
        for (const auto& doc : docs) total += bm25_score(query, doc, stats, {});
        benchmark::DoNotOptimize(total);
    }
}
BENCHMARK(BM_Bm25Score);

void BM_NdcgErr(benchmark::State& state) {
    Rng rng(9);
    std::vector<ScoredRecord> records;
    for (int q = 0; q < 500; ++q) {
        for (int d = 0; d < 17; ++d) {
            records.push_back(ScoredRecord{"q" + std::to_string(q), uniform_real(rng, 0.0, 1.0),
                                           static_cast<RelevanceGrade>(d % 3)});
        }
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(compute_metrics(records));
    }
}
BENCHMARK(BM_NdcgErr);

}  // namespace

BENCHMARK_MAIN();
