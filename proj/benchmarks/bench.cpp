#include <benchmark/benchmark.h>

#include "dctx/cells.hpp"
#include "dctx/crf.hpp"
#include "dctx/models.hpp"
#include "dctx/optim.hpp"

#include <random>

namespace {

using namespace dctx;

void bm_lstm_cell(benchmark::State& state) {
  int d_in = 100, d_h = 100;
  ParamSet ps(7);
  add_lstm_params(ps, "lstm", d_in, d_h);
  Mat x = Mat::Random(1, d_in);
  for (auto _ : state) {
    Tape t;
    CellVars cv = cell_vars(t, ps, "lstm");
    Var h = t.constant(Mat::Zero(1, d_h));
    Var c = t.constant(Mat::Zero(1, d_h));
    auto hc = lstm_cell(t, t.constant(x), h, c, cv);
    benchmark::DoNotOptimize(hc.first.val()(0, 0));
  }
}
BENCHMARK(bm_lstm_cell);

void bm_bclstm_forward_backward(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  ModelConfig cfg;
  cfg.extractor = Extractor::precomputed;
  cfg.precomputed_dim = 100;
  cfg.classifier = Classifier::bclstm;
  ParamSet ps(7);
  build_model_params(ps, cfg, 6);
  std::vector<Mat> feats;
  for (int i = 0; i < n; ++i) feats.push_back(Mat::Random(1, 100));
  std::vector<SpeakerId> speakers(static_cast<size_t>(n), "A");
  std::vector<int> gold(static_cast<size_t>(n), 1);
  std::vector<bool> mask(static_cast<size_t>(n), true);
  for (auto _ : state) {
    Tape t;
    std::vector<Var> fv;
    for (const Mat& f : feats) fv.push_back(t.constant(f));
    auto mf = classify_dialogue(t, ps, cfg, fv, speakers);
    Var loss = t.softmax_cross_entropy(t.stack_rows(mf.logits), gold, mask);
    t.backward(loss);
    ps.zero_grads();
    benchmark::DoNotOptimize(loss.val()(0, 0));
  }
}
BENCHMARK(bm_bclstm_forward_backward)->Arg(10)->Arg(50);

void bm_crf_forward(benchmark::State& state) {
  int n = 50, K = 6;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Mat scores(n, K);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) scores(i, k) = g(rng);
  CrfParams p = CrfParams::zeros(2, K);
  p.trans.setRandom();
  p.trans2.setRandom();
  EmissionSeq e(scores);
  for (auto _ : state) benchmark::DoNotOptimize(log_partition(e, p));
}
BENCHMARK(bm_crf_forward);

void bm_viterbi_order2(benchmark::State& state) {
  int n = 50, K = 6;
  Mat scores = Mat::Random(n, K);
  CrfParams p = CrfParams::zeros(2, K);
  p.trans.setRandom();
  p.trans2.setRandom();
  EmissionSeq e(scores);
  for (auto _ : state) benchmark::DoNotOptimize(viterbi(e, p).score);
}
BENCHMARK(bm_viterbi_order2);

}  // namespace

BENCHMARK_MAIN();
