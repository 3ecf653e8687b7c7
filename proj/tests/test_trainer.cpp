#include <doctest.h>

#include "dctx/trainer.hpp"

#include <set>

using namespace dctx;

namespace {

TrainConfig tiny_config(Classifier cls = Classifier::bclstm) {
  TrainConfig tc;
  tc.model.classifier = cls;
  tc.model.embed_dim = 8;
  tc.model.max_utt_len = 10;
  tc.model.cnn_filter_sizes = {1, 2};
  tc.model.cnn_maps_per_size = 4;
  tc.model.cnn_out = 8;
  tc.model.d_h = 8;
  tc.model.d_g = tc.model.d_p = tc.model.d_e = 8;
  tc.model.dropout = 0.0;
  tc.batch_size = 8;
  tc.epochs = 2;
  tc.seed = 5;
  return tc;
}

Corpus tiny_corpus(uint64_t seed = 2) {
  return synth_copy_corpus(10, {3, 6}, 3, 0.8, 0.8, seed);
}

}  // namespace

TEST_CASE("make_batches groups and reshuffles deterministically") {
  auto corpus = tiny_corpus();
  std::vector<Dialogue> five(corpus.split(Split::train).begin(),
                             corpus.split(Split::train).begin() + 5);
  auto b = make_batches(five, Batching::dialogue, 2, 7);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 2);
  CHECK(b[1].size() == 2);
  CHECK(b[2].size() == 1);
  std::set<int> seen;
  for (const auto& batch : b)
    for (const auto& item : batch) {
      CHECK(item.target == -1);
      seen.insert(item.dialogue);
    }
  CHECK(seen.size() == 5);

  // one dialogue with 7 eval targets, utterance mode, size 3 -> 3 batches
  Dialogue d;
  d.id = "d";
  for (int i = 0; i < 7; ++i) {
    Utterance u;
    u.text = "x";
    u.speaker = "A";
    u.label = 0;
    u.eval_mask = true;
    d.utterances.push_back(u);
  }
  auto ub = make_batches({d}, Batching::utterance, 3, 1);
  REQUIRE(ub.size() == 3);
  int targets = 0;
  for (const auto& batch : ub) targets += static_cast<int>(batch.size());
  CHECK(targets == 7);

  auto again = make_batches(five, Batching::dialogue, 2, 7);
  for (size_t i = 0; i < b.size(); ++i)
    for (size_t j = 0; j < b[i].size(); ++j)
      CHECK(b[i][j].dialogue == again[i][j].dialogue);
  auto other = make_batches(five, Batching::dialogue, 2, 8);
  bool differs = false;
  for (size_t i = 0; i < b.size() && !differs; ++i)
    for (size_t j = 0; j < b[i].size(); ++j)
      if (b[i][j].dialogue != other[i][j].dialogue) differs = true;
  CHECK(differs);
}

TEST_CASE("training runs, tracks history, and repeats exactly per seed") {
  auto corpus = tiny_corpus();
  TrainConfig tc = tiny_config();
  RunResult a = train(tc, corpus);
  REQUIRE(a.history.size() == 2);
  CHECK(a.best_epoch >= 1);
  CHECK(!a.test_report.rows.empty());
  CHECK(a.test_report.aggregate.count("w_avg_f1") == 1);

  RunResult b = train(tc, corpus);
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_score == b.history[i].val_score);
  }
  for (size_t i = 0; i < a.test_report.rows.size(); ++i)
    CHECK(a.test_report.rows[i].pred == b.test_report.rows[i].pred);
}

TEST_CASE("invalid configurations are rejected up front") {
  auto corpus = tiny_corpus();
  TrainConfig tc = tiny_config();
  tc.batch_size = 0;
  CHECK_THROWS_AS(train(tc, corpus), TrainError);
  tc = tiny_config();
  tc.epochs = 0;
  CHECK_THROWS_AS(train(tc, corpus), TrainError);
  tc = tiny_config();
  tc.crf = CrfKind::global;
  tc.batching = Batching::utterance;
  CHECK_THROWS_AS(train(tc, corpus), TrainError);
  tc = tiny_config();
  PerturbationSpec drop;
  drop.kind = PerturbKind::drop;
  tc.train_perturb = drop;  // per-target spec in dialogue mode
  CHECK_THROWS_AS(train(tc, corpus), TrainError);
  tc = tiny_config();
  tc.model.extractor = Extractor::precomputed;
  CHECK_THROWS_AS(train(tc, corpus), TrainError);  // no feature file
}

TEST_CASE("evaluation modes agree without perturbation") {
  auto corpus = tiny_corpus(4);
  TrainConfig tc = tiny_config();
  tc.epochs = 1;
  RunResult r = train(tc, corpus);
  EvalReport dialogue_mode = evaluate(r.best, corpus, Split::test, std::nullopt,
                                      Batching::dialogue);
  EvalReport utterance_mode = evaluate(r.best, corpus, Split::test,
                                       std::nullopt, Batching::utterance);
  REQUIRE(dialogue_mode.rows.size() == utterance_mode.rows.size());
  for (size_t i = 0; i < dialogue_mode.rows.size(); ++i) {
    CHECK(dialogue_mode.rows[i].dialogue_id ==
          utterance_mode.rows[i].dialogue_id);
    CHECK(dialogue_mode.rows[i].index == utterance_mode.rows[i].index);
    CHECK(dialogue_mode.rows[i].pred == utterance_mode.rows[i].pred);
  }
}

TEST_CASE("keep-all window evaluation equals the unperturbed report") {
  auto corpus = tiny_corpus(6);
  TrainConfig tc = tiny_config(Classifier::clstm);
  tc.epochs = 1;
  RunResult r = train(tc, corpus);
  EvalReport plain = evaluate(r.best, corpus, Split::test, std::nullopt,
                              Batching::utterance);
  PerturbationSpec keepall;
  keepall.kind = PerturbKind::drop;  // KeepAll/KeepAll windows
  EvalReport windowed = evaluate(r.best, corpus, Split::test, keepall,
                                 Batching::utterance);
  REQUIRE(plain.rows.size() == windowed.rows.size());
  for (size_t i = 0; i < plain.rows.size(); ++i)
    CHECK(plain.rows[i].pred == windowed.rows[i].pred);
  CHECK(plain.aggregate.at("w_avg_f1") ==
        doctest::Approx(windowed.aggregate.at("w_avg_f1")));
}

TEST_CASE("incompatible checkpoints are rejected") {
  auto corpus = tiny_corpus();
  TrainConfig tc = tiny_config();
  tc.epochs = 1;
  RunResult r = train(tc, corpus);
  Corpus other = synth_copy_corpus(4, {3, 5}, 4, 0.5, 0.5, 1);  // 4 labels
  CHECK_THROWS_AS(
      evaluate(r.best, other, Split::test, std::nullopt, Batching::dialogue),
      TrainError);
}

TEST_CASE("crf-decoded training produces full-length decodes") {
  auto corpus = tiny_corpus(8);
  for (CrfKind kind : {CrfKind::global, CrfKind::global_ext,
                       CrfKind::speaker}) {
    TrainConfig tc = tiny_config(Classifier::clstm);
    tc.crf = kind;
    tc.epochs = 1;
    RunResult r = train(tc, corpus);
    CHECK(!r.test_report.rows.empty());
    for (const auto& row : r.test_report.rows) {
      CHECK(row.pred >= 0);
      CHECK(row.pred < corpus.n_labels());
    }
  }
}

TEST_CASE("order prediction and shuffled training run end to end") {
  auto corpus = tiny_corpus(9);
  TrainConfig tc = tiny_config();
  tc.model.order_prediction = true;
  tc.model.max_dialogue_len = 8;
  PerturbationSpec shuf;
  shuf.kind = PerturbKind::shuffle;
  shuf.seed = 3;
  tc.train_perturb = shuf;
  tc.epochs = 1;
  RunResult r = train(tc, corpus);
  CHECK(!r.test_report.rows.empty());
}

TEST_CASE("multi_run aggregates mean and sample std") {
  auto corpus = tiny_corpus(3);
  TrainConfig tc = tiny_config(Classifier::logreg);
  tc.epochs = 1;
  MultiRunResult one = multi_run(tc, corpus, 1);
  for (const auto& [k, sd] : one.std_dev) CHECK(sd == 0.0);
  MultiRunResult three = multi_run(tc, corpus, 3);
  REQUIRE(three.runs.size() == 3);
  for (const auto& [k, m] : three.mean) {
    double sum = 0.0;
    for (const auto& r : three.runs) sum += r.test_report.aggregate.at(k);
    CHECK(m == doctest::Approx(sum / 3.0));
    CHECK(three.std_dev.at(k) >= 0.0);
  }
}
