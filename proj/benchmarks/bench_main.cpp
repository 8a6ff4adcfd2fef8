#include <benchmark/benchmark.h>

#include <random>

#include "saedit/directions.hpp"
#include "saedit/editing.hpp"
#include "saedit/sae.hpp"

using namespace saedit;
using linalg::Matrix;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (double& x : m.values()) x = n(rng);
    return m;
}

sae::SaeModel calibrated(std::size_t d_model, std::size_t d_latent) {
    auto m = sae::init_model(d_model, d_latent, 1);
    m.theta = 0.5;
    return m;
}

directions::EditDirection random_direction(std::size_t dim, std::size_t nnz, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    directions::EditDirection d;
    d.d_edit.dim = dim;
    const std::size_t stride = dim / nnz;
    for (std::size_t i = 0; i < nnz; ++i) d.d_edit.entries.push_back({static_cast<std::uint32_t>(i * stride), u(rng)});
    for (const auto& e : d.d_edit.entries) d.index_set.push_back(e.index);
    return d;
}

}  // namespace

static void BM_Matmul(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    for (auto _ : st) benchmark::DoNotOptimize(linalg::matmul(a, b));
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_BatchTopK(benchmark::State& st) {
    const auto d_latent = static_cast<std::size_t>(st.range(0));
    Matrix pre = random_matrix(256, d_latent, 3);
    for (double& x : pre.values()) x = std::max(x, 0.0);
    for (auto _ : st) benchmark::DoNotOptimize(sae::batch_topk(pre, 8));
    st.SetItemsProcessed(st.iterations() * 256);
}
BENCHMARK(BM_BatchTopK)->Arg(256)->Arg(4096);

static void BM_EncodeToken(benchmark::State& st) {
    const auto d_model = static_cast<std::size_t>(st.range(0)), d_latent = static_cast<std::size_t>(st.range(1));
    const auto m = calibrated(d_model, d_latent);
    const Matrix e = random_matrix(1, d_model, 4);
    for (auto _ : st) benchmark::DoNotOptimize(sae::encode(m, e.row(0)));
}
BENCHMARK(BM_EncodeToken)->Args({32, 256})->Args({512, 8192});

static void BM_LossAndGradients(benchmark::State& st) {
    const auto batch_tokens = static_cast<std::size_t>(st.range(0));
    const auto m = sae::init_model(32, 256, 5);
    const Matrix batch = random_matrix(batch_tokens, 32, 6);
    sae::TrainConfig cfg;
    cfg.k = 8;
    const std::vector<bool> dead(256, false);
    for (auto _ : st) {
        const auto support = sae::select_support(m, batch, cfg, dead);
        sae::Gradients g;
        benchmark::DoNotOptimize(sae::evaluate_loss(m, batch, support, sae::LossSpec{cfg.alpha, {}}, &g));
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(batch_tokens));
}
BENCHMARK(BM_LossAndGradients)->Arg(256)->Arg(1024);

static void BM_AdamUpdate(benchmark::State& st) {
    Matrix p = random_matrix(256, 32, 7);
    const Matrix g = random_matrix(256, 32, 8);
    linalg::AdamState s(256, 32);
    for (auto _ : st) {
        linalg::adam_update(p, g, s);
        benchmark::ClobberMemory();
    }
}
BENCHMARK(BM_AdamUpdate);

static void BM_PowerIterationDense(benchmark::State& st) {
    const Matrix d = random_matrix(100, static_cast<std::size_t>(st.range(0)), 9);
    for (auto _ : st) benchmark::DoNotOptimize(linalg::top_singular_vector(d));
}
BENCHMARK(BM_PowerIterationDense)->Arg(256)->Arg(1024);

static void BM_AggregateDirections(benchmark::State& st) {
    std::vector<directions::EditDirection> dirs;
    for (std::uint64_t i = 0; i < 100; ++i) dirs.push_back(random_direction(65536, 64, i));
    for (auto _ : st) benchmark::DoNotOptimize(directions::aggregate_directions(dirs));
}
BENCHMARK(BM_AggregateDirections);

static void BM_ApplyDirection(benchmark::State& st) {
    const auto m = calibrated(512, 8192);
    const Matrix e = random_matrix(1, 512, 10);
    const auto d = random_direction(8192, 16, 11);
    for (auto _ : st) benchmark::DoNotOptimize(editing::apply_direction(m, e.row(0), d, 1.5));
}
BENCHMARK(BM_ApplyDirection);
BENCHMARK_MAIN();
