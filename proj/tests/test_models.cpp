#include <doctest.h>

#include "dctx/gradcheck.hpp"
#include "dctx/models.hpp"

#include <fstream>

using namespace dctx;

namespace {

ModelConfig small_cnn_config() {
  ModelConfig cfg;
  cfg.extractor = Extractor::cnn;
  cfg.classifier = Classifier::bclstm;
  cfg.embed_dim = 4;
  cfg.max_utt_len = 6;
  cfg.cnn_filter_sizes = {1, 2, 3};
  cfg.cnn_maps_per_size = 3;
  cfg.cnn_out = 6;
  cfg.d_h = 5;
  cfg.d_g = cfg.d_p = cfg.d_e = 5;
  cfg.max_dialogue_len = 8;
  cfg.dropout = 0.0;
  return cfg;
}

ModelConfig small_feat_config(Classifier cls) {
  ModelConfig cfg = small_cnn_config();
  cfg.extractor = Extractor::precomputed;
  cfg.precomputed_dim = 6;
  cfg.classifier = cls;
  return cfg;
}

std::vector<Mat> random_feats(int n, int dim, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<Mat> out;
  for (int i = 0; i < n; ++i) {
    Mat f(1, dim);
    for (int j = 0; j < dim; ++j) f(0, j) = g(rng);
    out.push_back(f);
  }
  return out;
}

double model_loss(ParamSet& ps, const ModelConfig& cfg,
                  const std::vector<Mat>& feats,
                  const std::vector<SpeakerId>& speakers, bool backward) {
  Tape t;
  std::vector<Var> fv;
  for (const Mat& f : feats) fv.push_back(t.constant(f));
  auto mf = classify_dialogue(t, ps, cfg, fv, speakers);
  std::vector<int> gold(feats.size(), 1);
  std::vector<bool> mask(feats.size(), true);
  Var loss = t.softmax_cross_entropy(t.stack_rows(mf.logits), gold, mask);
  if (backward) t.backward(loss);
  return loss.val()(0, 0);
}

}  // namespace

TEST_CASE("cnn extractor shapes, zero-length path, determinism") {
  ModelConfig cfg = small_cnn_config();
  ParamSet ps(21);
  build_model_params(ps, cfg, 3);
  Mat tokens = Mat::Random(cfg.max_utt_len, cfg.embed_dim);
  Tape t;
  Var f = cnn_extract(t, ps, cfg, tokens, 4);
  CHECK(f.val().rows() == 1);
  CHECK(f.val().cols() == cfg.cnn_out);
  Var f0 = cnn_extract(t, ps, cfg, Mat::Zero(cfg.max_utt_len, cfg.embed_dim),
                       0);
  CHECK(f0.val().cols() == cfg.cnn_out);
  // shorter-than-largest-filter utterances still work
  Var f1 = cnn_extract(t, ps, cfg, tokens, 1);
  CHECK(f1.val().allFinite());
  Tape t2;
  Var g = cnn_extract(t2, ps, cfg, tokens, 4);
  CHECK((f.val() - g.val()).norm() == 0.0);
}

TEST_CASE("cnn extractor passes finite differences") {
  ModelConfig cfg = small_cnn_config();
  ParamSet ps(31);
  build_model_params(ps, cfg, 3);
  Mat tokens = Mat::Random(cfg.max_utt_len, cfg.embed_dim);
  auto fwd = [&](ParamSet& p) {
    Tape t;
    Var f = cnn_extract(t, p, cfg, tokens, 4);
    return t.sum(t.mul(f, f)).val()(0, 0);
  };
  ps.zero_grads();
  {
    Tape t;
    Var f = cnn_extract(t, ps, cfg, tokens, 4);
    t.backward(t.sum(t.mul(f, f)));
  }
  auto res = finite_diff_check(fwd, ps, 120, 1e-5);
  CHECK(res.coords_checked >= 100);
  CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("classifier output shapes across all variants") {
  std::vector<SpeakerId> speakers = {"A", "B", "A", "B"};
  auto feats = random_feats(4, 6, 3);
  for (Classifier cls : {Classifier::logreg, Classifier::clstm,
                         Classifier::bclstm, Classifier::dialoguernn}) {
    ModelConfig cfg = small_feat_config(cls);
    ParamSet ps(9);
    build_model_params(ps, cfg, 3);
    Tape t;
    std::vector<Var> fv;
    for (const Mat& f : feats) fv.push_back(t.constant(f));
    auto mf = classify_dialogue(t, ps, cfg, fv, speakers);
    REQUIRE(mf.logits.size() == 4);
    REQUIRE(mf.states.size() == 4);
    for (const Var& l : mf.logits) {
      CHECK(l.val().rows() == 1);
      CHECK(l.val().cols() == 3);
      CHECK(l.val().allFinite());
    }
    CHECK(mf.states[0].val().cols() == cfg.state_dim());
  }
}

TEST_CASE("logreg is context-free; clstm causal; bclstm anticausal too") {
  std::vector<SpeakerId> speakers = {"A", "B", "A", "B"};
  auto feats = random_feats(4, 6, 5);
  auto feats2 = feats;
  feats2[3] = Mat::Random(1, 6);  // change only the last utterance

  auto logits_at = [&](Classifier cls, const std::vector<Mat>& fs, int pos) {
    ModelConfig cfg = small_feat_config(cls);
    ParamSet ps(17);
    build_model_params(ps, cfg, 3);
    Tape t;
    std::vector<Var> fv;
    for (const Mat& f : fs) fv.push_back(t.constant(f));
    return Mat(classify_dialogue(t, ps, cfg, fv, speakers)
                   .logits[static_cast<size_t>(pos)]
                   .val());
  };
  CHECK((logits_at(Classifier::logreg, feats, 0) -
         logits_at(Classifier::logreg, feats2, 0)).norm() == 0.0);
  CHECK((logits_at(Classifier::clstm, feats, 0) -
         logits_at(Classifier::clstm, feats2, 0)).norm() == 0.0);
  CHECK((logits_at(Classifier::bclstm, feats, 0) -
         logits_at(Classifier::bclstm, feats2, 0)).norm() > 0.0);
  CHECK((logits_at(Classifier::dialoguernn, feats, 0) -
         logits_at(Classifier::dialoguernn, feats2, 0)).norm() > 0.0);
}

TEST_CASE("residual connection shifts the logits") {
  std::vector<SpeakerId> speakers = {"A", "B"};
  auto feats = random_feats(2, 6, 8);
  auto run = [&](bool residual) {
    ModelConfig cfg = small_feat_config(Classifier::bclstm);
    cfg.residual = residual;
    ParamSet ps(23);
    build_model_params(ps, cfg, 3);
    Tape t;
    std::vector<Var> fv;
    for (const Mat& f : feats) fv.push_back(t.constant(f));
    return Mat(classify_dialogue(t, ps, cfg, fv, speakers).logits[0].val());
  };
  CHECK((run(true) - run(false)).norm() > 0.0);
}

TEST_CASE("recurrent classifiers pass finite differences end to end") {
  std::vector<SpeakerId> speakers = {"A", "B", "A"};
  auto feats = random_feats(3, 6, 13);
  for (Classifier cls : {Classifier::bclstm, Classifier::dialoguernn}) {
    ModelConfig cfg = small_feat_config(cls);
    ParamSet ps(41);
    build_model_params(ps, cfg, 3);
    ps.zero_grads();
    model_loss(ps, cfg, feats, speakers, true);
    auto res = finite_diff_check(
        [&](ParamSet& p) { return model_loss(p, cfg, feats, speakers, false); },
        ps, 120, 1e-5);
    CHECK(res.coords_checked >= 100);
    CHECK(res.max_rel_err < 1e-3);
  }
}

TEST_CASE("listener update adds parameters and changes the forward pass") {
  std::vector<SpeakerId> speakers = {"A", "B", "A"};
  auto feats = random_feats(3, 6, 17);
  ModelConfig cfg = small_feat_config(Classifier::dialoguernn);
  ParamSet base(3);
  build_model_params(base, cfg, 3);
  cfg.listener_update = true;
  ParamSet with(3);
  build_model_params(with, cfg, 3);
  CHECK(with.all().size() > base.all().size());
  // still differentiable
  with.zero_grads();
  model_loss(with, cfg, feats, speakers, true);
  auto res = finite_diff_check(
      [&](ParamSet& p) { return model_loss(p, cfg, feats, speakers, false); },
      with, 100, 1e-5);
  CHECK(res.max_rel_err < 1e-3);
}

TEST_CASE("order head emits max_dialogue_len position logits") {
  ModelConfig cfg = small_feat_config(Classifier::bclstm);
  cfg.order_prediction = true;
  ParamSet ps(19);
  build_model_params(ps, cfg, 3);
  std::vector<SpeakerId> speakers = {"A", "B"};
  auto feats = random_feats(2, 6, 19);
  Tape t;
  std::vector<Var> fv;
  for (const Mat& f : feats) fv.push_back(t.constant(f));
  auto mf = classify_dialogue(t, ps, cfg, fv, speakers);
  auto ol = order_head_forward(t, ps, cfg, mf.states);
  REQUIRE(ol.size() == 2);
  CHECK(ol[0].val().cols() == cfg.max_dialogue_len);
}

TEST_CASE("feature files load per-dialogue matrices") {
  {
    std::ofstream f("tm_feats.jsonl");
    f << R"({"dialogue_id":"d1","features":[[1.0,2.0],[3.0,4.0]]})" << "\n";
    f << R"({"dialogue_id":"d2","features":[[5.0,6.0]]})" << "\n";
  }
  auto m = load_feature_file("tm_feats.jsonl");
  REQUIRE(m.count("d1") == 1);
  CHECK(m.at("d1").rows() == 2);
  CHECK(m.at("d1")(1, 0) == 3.0);
  CHECK(m.at("d2")(0, 1) == 6.0);
}
