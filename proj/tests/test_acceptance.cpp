// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Usage: test_acceptance <path-to-dctx-binary>
#include "dctx/crf.hpp"
#include "dctx/gradcheck.hpp"
#include "dctx/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

using namespace dctx;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok,
            const std::string& detail = "") {
  std::printf("criterion %2d  %-38s %s%s%s\n", idx, name.c_str(),
              ok ? "PASS" : "FAIL", detail.empty() ? "" : "  -- ",
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------- criterion 1: CRF vs exhaustive enumeration ----------

std::vector<std::vector<int>> all_label_seqs(int n, int K) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(n, 0);
  while (true) {
    out.push_back(cur);
    int i = n - 1;
    while (i >= 0 && ++cur[i] == K) cur[i--] = 0;
    if (i < 0) break;
  }
  return out;
}

void criterion_crf_oracle() {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> g;
  double worst_lp = 0.0, worst_sum = 0.0;
  bool viterbi_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    int order = 1 + static_cast<int>(rng() % 2);
    int K = 2 + static_cast<int>(rng() % 3);
    int n = 1 + static_cast<int>(rng() % 6);
    CrfParams p = CrfParams::zeros(order, K);
    for (int k = 0; k < K; ++k) {
      p.start(k) = g(rng);
      p.stop(k) = g(rng);
    }
    for (long i = 0; i < p.trans.size(); ++i) p.trans.data()[i] = g(rng);
    for (long i = 0; i < p.trans2.size(); ++i) p.trans2.data()[i] = g(rng);
    Mat scores(n, K);
    for (long i = 0; i < scores.size(); ++i) scores.data()[i] = g(rng);
    EmissionSeq e(scores);

    auto seqs = all_label_seqs(n, K);
    Eigen::VectorXd all(seqs.size());
    double best = -1e300;
    std::vector<int> best_seq;
    double prob_sum = 0.0;
    for (size_t i = 0; i < seqs.size(); ++i) {
      all(static_cast<long>(i)) = sequence_score(e, p, seqs[i]);
      if (all(static_cast<long>(i)) > best) {
        best = all(static_cast<long>(i));
        best_seq = seqs[i];
      }
      prob_sum += std::exp(-crf_nll(e, p, seqs[i]));
    }
    double lp_brute = log_sum_exp(all);
    double lp = log_partition(e, p);
    worst_lp = std::max(worst_lp,
                        std::abs(lp - lp_brute) / std::max(1.0, std::abs(lp_brute)));
    worst_sum = std::max(worst_sum, std::abs(prob_sum - 1.0));
    if (viterbi(e, p).labels != best_seq) viterbi_ok = false;
  }
  report(1, "crf matches exhaustive enumeration",
         worst_lp <= 1e-9 && worst_sum <= 1e-9 && viterbi_ok,
         "log-partition rel err " + std::to_string(worst_lp) +
             ", prob-sum err " + std::to_string(worst_sum) +
             (viterbi_ok ? "" : ", viterbi mismatch"));
}

// ---------- criterion 2: gradients vs finite differences ----------

struct GradCase {
  std::string name;
  double tol;
  double err;
  int coords;
};

GradCase check_grad(const std::string& name, double tol, ParamSet& ps,
                    const LossFn& fwd, const std::function<void()>& backward) {
  ps.zero_grads();
  backward();
  auto res = finite_diff_check(fwd, ps, 120, 1e-5);
  return {name, tol, res.max_rel_err, res.coords_checked};
}

void criterion_gradients() {
  std::vector<GradCase> cases;

  {  // cnn_extract
    ModelConfig cfg;
    cfg.embed_dim = 4;
    cfg.max_utt_len = 6;
    cfg.cnn_filter_sizes = {1, 2, 3};
    cfg.cnn_maps_per_size = 3;
    cfg.cnn_out = 6;
    cfg.dropout = 0.0;
    ParamSet ps(7);
    build_model_params(ps, cfg, 3);
    Mat tokens = Mat::Random(cfg.max_utt_len, cfg.embed_dim);
    auto fwd = [&](ParamSet& p) {
      Tape t;
      Var f = cnn_extract(t, p, cfg, tokens, 5);
      return t.sum(t.mul(f, f)).val()(0, 0);
    };
    cases.push_back(check_grad("cnn_extract", 1e-3, ps, fwd, [&] {
      Tape t;
      Var f = cnn_extract(t, ps, cfg, tokens, 5);
      t.backward(t.sum(t.mul(f, f)));
    }));
  }

  for (bool is_lstm : {true, false}) {  // recurrent cells, two steps
    ParamSet ps(is_lstm ? 11 : 13);
    if (is_lstm)
      add_lstm_params(ps, "cell", 4, 5);
    else
      add_gru_params(ps, "cell", 4, 5);
    Mat x1 = Mat::Random(1, 4), x2 = Mat::Random(1, 4);
    auto run = [&](ParamSet& p, Tape& t) {
      CellVars cv = cell_vars(t, p, "cell");
      Var h = t.constant(Mat::Zero(1, 5));
      if (is_lstm) {
        Var c = t.constant(Mat::Zero(1, 5));
        auto [h1, c1] = lstm_cell(t, t.constant(x1), h, c, cv);
        auto [h2, c2] = lstm_cell(t, t.constant(x2), h1, c1, cv);
        (void)c2;
        return h2;
      }
      Var h1 = gru_cell(t, t.constant(x1), h, cv);
      return gru_cell(t, t.constant(x2), h1, cv);
    };
    auto fwd = [&](ParamSet& p) {
      Tape t;
      Var h = run(p, t);
      return t.sum(t.mul(h, h)).val()(0, 0);
    };
    cases.push_back(
        check_grad(is_lstm ? "lstm_cell" : "gru_cell", 1e-4, ps, fwd, [&] {
          Tape t;
          Var h = run(ps, t);
          t.backward(t.sum(t.mul(h, h)));
        }));
  }

  for (Classifier cls : {Classifier::bclstm, Classifier::dialoguernn}) {
    ModelConfig cfg;
    cfg.extractor = Extractor::precomputed;
    cfg.precomputed_dim = 6;
    cfg.classifier = cls;
    cfg.d_h = 5;
    cfg.d_g = cfg.d_p = cfg.d_e = 5;
    cfg.dropout = 0.0;
    ParamSet ps(cls == Classifier::bclstm ? 17 : 19);
    build_model_params(ps, cfg, 3);
    std::vector<SpeakerId> speakers = {"A", "B", "A"};
    std::vector<Mat> feats = {Mat::Random(1, 6), Mat::Random(1, 6),
                              Mat::Random(1, 6)};
    auto run = [&](ParamSet& p, bool back) {
      Tape t;
      std::vector<Var> fv;
      for (const Mat& f : feats) fv.push_back(t.constant(f));
      auto mf = classify_dialogue(t, p, cfg, fv, speakers);
      Var loss = t.softmax_cross_entropy(t.stack_rows(mf.logits), {0, 2, 1},
                                         {true, true, true});
      if (back) t.backward(loss);
      return loss.val()(0, 0);
    };
    cases.push_back(check_grad(std::string(classifier_name(cls)) + " loss",
                               1e-3, ps,
                               [&](ParamSet& p) { return run(p, false); },
                               [&] { run(ps, true); }));
  }

  for (int order : {1, 2}) {  // crf_nll with masked positions
    int K = 3, n = 5;
    ParamSet ps(order);
    ps.add("em", Mat::Random(n, K));
    ps.add("start", Mat::Random(1, K));
    ps.add("stop", Mat::Random(1, K));
    ps.add("trans", Mat::Random(K, K));
    ps.add("trans2", Mat::Random(K * K, K));
    std::vector<int> gold = {0, 2, 1, 0, 2};
    std::vector<bool> mask = {true, false, true, true, false};
    auto run = [&](ParamSet& p, bool back) {
      Tape t;
      CrfVars cv{order, t.param(p.at("start")), t.param(p.at("stop")),
                 t.param(p.at("trans")), t.param(p.at("trans2"))};
      Var loss = crf_nll_loss(t, t.param(p.at("em")), cv, gold, mask);
      if (back) t.backward(loss);
      return loss.val()(0, 0);
    };
    cases.push_back(check_grad("crf_nll order " + std::to_string(order), 1e-3,
                               ps, [&](ParamSet& p) { return run(p, false); },
                               [&] { run(ps, true); }));
  }

  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    if (c.err > c.tol || c.coords < 100) {
      ok = false;
      detail += c.name + " err " + std::to_string(c.err) + " (tol " +
                std::to_string(c.tol) + ", coords " +
                std::to_string(c.coords) + "); ";
    }
  }
  report(2, "gradients match finite differences", ok, detail);
}

// ---------- criterion 3: f1 vs hand formula ----------

double hand_f1(const std::vector<EvalRow>& rows, F1Scheme scheme, int K) {
  std::vector<long> tp(K, 0), fp(K, 0), fn(K, 0), support(K, 0);
  for (const auto& r : rows) {
    if (!r.eval_mask) continue;
    ++support[static_cast<size_t>(r.gold)];
    if (r.pred == r.gold)
      ++tp[static_cast<size_t>(r.gold)];
    else {
      ++fp[static_cast<size_t>(r.pred)];
      ++fn[static_cast<size_t>(r.gold)];
    }
  }
  auto class_f1 = [&](int k) {
    double denom = 2.0 * tp[k] + fp[k] + fn[k];
    return denom == 0.0 ? 0.0 : 2.0 * tp[k] / denom;
  };
  if (scheme == F1Scheme::micro) {
    long t = 0, p = 0, n = 0;
    for (int k = 0; k < K; ++k) t += tp[k], p += fp[k], n += fn[k];
    double denom = 2.0 * t + p + n;
    return denom == 0.0 ? 0.0 : 2.0 * t / denom;
  }
  double total = 0.0, acc = 0.0;
  long n_classes = 0;
  for (int k = 0; k < K; ++k) {
    if (scheme == F1Scheme::weighted) {
      acc += support[k] * class_f1(k);
      total += support[k];
    } else if (support[k] > 0) {
      acc += class_f1(k);
      ++n_classes;
    }
  }
  if (scheme == F1Scheme::weighted) return total == 0.0 ? 0.0 : acc / total;
  return n_classes == 0 ? 0.0 : acc / n_classes;
}

void criterion_f1_oracle() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  bool masked_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    int K = 2 + static_cast<int>(rng() % 5);
    int n = 5 + static_cast<int>(rng() % 40);
    std::vector<EvalRow> rows;
    for (int i = 0; i < n; ++i) {
      EvalRow r;
      r.dialogue_id = "d";
      r.index = i;
      r.gold = static_cast<int>(rng() % K);
      r.pred = static_cast<int>(rng() % K);
      r.eval_mask = true;
      rows.push_back(r);
    }
    for (auto scheme : {F1Scheme::weighted, F1Scheme::macro, F1Scheme::micro})
      worst = std::max(worst,
                       std::abs(f1(rows, scheme) - hand_f1(rows, scheme, K)));
    // masked rows must not move the metric
    auto noisy = rows;
    for (int i = 0; i < 3; ++i) {
      EvalRow r;
      r.gold = -1;
      r.pred = static_cast<int>(rng() % K);
      r.eval_mask = false;
      noisy.push_back(r);
    }
    for (auto scheme : {F1Scheme::weighted, F1Scheme::macro, F1Scheme::micro})
      if (f1(noisy, scheme) != f1(rows, scheme)) masked_ok = false;
  }
  report(3, "f1 matches the hand formula", worst <= 1e-12 && masked_ok,
         "max abs err " + std::to_string(worst) +
             (masked_ok ? "" : ", masked rows leaked into the metric"));
}

// ---------- criteria 4-8: behavior of trained models ----------

TrainConfig context_config(Classifier cls, uint64_t seed) {
  TrainConfig tc;
  tc.model.classifier = cls;
  tc.model.embed_dim = 16;
  tc.model.max_utt_len = 12;
  tc.model.cnn_filter_sizes = {1, 2};
  tc.model.cnn_maps_per_size = 8;
  tc.model.cnn_out = 16;
  tc.model.d_h = 16;
  tc.model.d_g = tc.model.d_p = tc.model.d_e = 16;
  tc.model.dropout = 0.0;
  tc.batch_size = 32;
  tc.lr = 3e-3;
  tc.epochs = 30;
  tc.seed = seed;
  return tc;
}

void criteria_trained_models(const fs::path& work) {
  Corpus corpus = synth_copy_corpus(500, {10, 20}, 4, 0.9, 0.2, 101);

  MultiRunResult contextual =
      multi_run(context_config(Classifier::bclstm, 21), corpus, 3);
  MultiRunResult context_free =
      multi_run(context_config(Classifier::logreg, 21), corpus, 3);
  double gap =
      contextual.mean.at("macro_f1") - context_free.mean.at("macro_f1");
  report(4, "context model beats context-free", gap >= 0.10,
         "macro-F1 " + std::to_string(contextual.mean.at("macro_f1")) +
             " vs " + std::to_string(context_free.mean.at("macro_f1")) +
             " (gap " + std::to_string(gap) + ", need >= 0.10)");

  const Checkpoint& ckpt = contextual.runs[0].best;
  EvalReport plain =
      evaluate(ckpt, corpus, Split::test, std::nullopt, Batching::dialogue);
  double base = plain.aggregate.at("w_avg_f1");

  PerturbationSpec shuf;
  shuf.kind = PerturbKind::shuffle;
  shuf.seed = 5;
  EvalReport shuffled =
      evaluate(ckpt, corpus, Split::test, shuf, Batching::utterance);
  double shuffle_drop = base - shuffled.aggregate.at("w_avg_f1");
  report(5, "test-time shuffle degrades the model", shuffle_drop >= 0.03,
         "w-avg F1 " + std::to_string(base) + " -> " +
             std::to_string(shuffled.aggregate.at("w_avg_f1")) + " (drop " +
             std::to_string(shuffle_drop) + ", need >= 0.03)");

  PerturbationSpec lca;
  lca.kind = PerturbKind::lca;
  lca.w = 5;
  lca.lca_strategy = LcaStrategy::replace;
  lca.seed = 5;
  lca.lca_constraint = LcaConstraint::same_label;
  EvalReport sl = evaluate(ckpt, corpus, Split::test, lca, Batching::utterance);
  lca.lca_constraint = LcaConstraint::different_label;
  EvalReport dl = evaluate(ckpt, corpus, Split::test, lca, Batching::utterance);
  double sl_drop = base - sl.aggregate.at("w_avg_f1");
  double dl_drop = base - dl.aggregate.at("w_avg_f1");
  report(6, "lca: same-label mild, diff-label harsh",
         sl_drop <= 0.03 && dl_drop >= 0.10,
         "SL drop " + std::to_string(sl_drop) + " (need <= 0.03), DL drop " +
             std::to_string(dl_drop) + " (need >= 0.10)");

  EvalReport per_utt =
      evaluate(ckpt, corpus, Split::test, std::nullopt, Batching::utterance);
  bool same = per_utt.rows.size() == plain.rows.size();
  for (size_t i = 0; same && i < plain.rows.size(); ++i)
    same = plain.rows[i].dialogue_id == per_utt.rows[i].dialogue_id &&
           plain.rows[i].index == per_utt.rows[i].index &&
           plain.rows[i].pred == per_utt.rows[i].pred;
  report(7, "dialogue/utterance evaluation agree", same);

  // neutral-parameter perturbations must reproduce the report byte-for-byte
  fs::create_directories(work);
  std::string ref_path = (work / "report_ref.json").string();
  write_report_json(plain, corpus, ref_path);
  std::string ref = read_bytes(ref_path);

  std::string empty_lexicon = (work / "empty_lexicon.tsv").string();
  std::ofstream(empty_lexicon).close();

  std::vector<std::pair<std::string, PerturbationSpec>> neutral;
  PerturbationSpec keepall;
  keepall.kind = PerturbKind::drop;  // both sides default KeepAll
  neutral.emplace_back("keepall window", keepall);
  PerturbationSpec subst;
  subst.kind = PerturbKind::word_substitution;
  subst.lexicon_path = empty_lexicon;
  neutral.emplace_back("empty lexicon substitution", subst);
  PerturbationSpec no_dir;
  no_dir.kind = PerturbKind::spelling_attack;
  no_dir.past = no_dir.future = no_dir.target = false;
  neutral.emplace_back("directionless attack", no_dir);

  bool bytes_ok = true;
  std::string detail;
  for (const auto& [name, spec] : neutral) {
    EvalReport r =
        evaluate(ckpt, corpus, Split::test, spec, Batching::utterance);
    std::string path = (work / "report_neutral.json").string();
    write_report_json(r, corpus, path);
    if (read_bytes(path) != ref) {
      bytes_ok = false;
      detail += name + " diverged; ";
    }
  }
  report(8, "neutral perturbations are byte-identical", bytes_ok, detail);
}

// ---------- criterion 9: statistics invariants ----------

void criterion_stats_invariants() {
  double copy_prob = 0.8;
  Corpus c = synth_copy_corpus(400, {6, 12}, 3, copy_prob, 0.5, 202);
  const auto& train = c.split(Split::train);
  bool ok = true;
  std::string detail;

  double diag = 0.0;
  for (auto mode : {TransitionMode::intra, TransitionMode::inter}) {
    auto m = transition_matrix(train, mode, c.n_labels());
    if (std::abs(m.freq.sum() - 1.0) > 1e-9) {
      ok = false;
      detail += "transition freq sum off; ";
    }
    if (mode == TransitionMode::intra) diag = m.freq.diagonal().sum();
  }
  if (std::abs(diag - copy_prob) > 0.03) {
    ok = false;
    detail += "intra diagonal " + std::to_string(diag) + " vs copy_prob " +
              std::to_string(copy_prob) + "; ";
  }

  EvalReport empty;
  for (int n : {2, 3, 5}) {
    auto s = ngram_patterns(train, empty, {}, n, PatternScope::intra,
                            c.n_labels());
    double sum = 0.0;
    for (const auto& p : s.patterns) sum += p.train_freq_pct;
    if (!s.patterns.empty() && std::abs(sum - 100.0) > 1e-6) {
      ok = false;
      detail += "intra " + std::to_string(n) + "-gram pct sum " +
                std::to_string(sum) + "; ";
    }
  }
  auto s2 = ngram_patterns(train, empty, {}, 2, PatternScope::inter,
                           c.n_labels());
  double sum2 = 0.0;
  for (const auto& p : s2.patterns) sum2 += p.train_freq_pct;
  if (!s2.patterns.empty() && std::abs(sum2 - 100.0) > 1e-6) {
    ok = false;
    detail += "inter bigram pct sum " + std::to_string(sum2) + "; ";
  }
  report(9, "statistics invariants hold", ok, detail);
}

// ---------- criterion 10: CLI training determinism ----------

void criterion_cli_determinism(const std::string& dctx, const fs::path& work) {
  fs::create_directories(work);
  std::string corpus = (work / "c.jsonl").string();
  std::string config = (work / "train.cfg").string();
  {
    std::ofstream f(config);
    f << "corpus = " << corpus << "\n"
      << "seed = 3\nepochs = 2\nbatch_size = 8\nlr = 0.003\ndropout = 0.3\n"
      << "model.classifier = bclstm\nmodel.d_h = 8\n"
      << "model.cnn_filters = 1,2\nmodel.cnn_maps = 4\nmodel.cnn_out = 8\n"
      << "model.max_utt_len = 10\nembed.dim = 8\n";
  }
  auto run = [&](const std::string& args) {
    std::string cmd = "\"" + dctx + "\" " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  bool ok =
      run("synth --out " + corpus + " --n 20 --labels 3 --seed 2") == 0 &&
      run("train --config " + config + " --out " + (work / "a").string()) ==
          0 &&
      run("train --config " + config + " --out " + (work / "b").string()) == 0;
  std::string a = read_bytes((work / "a" / "metrics.csv").string());
  std::string b = read_bytes((work / "b" / "metrics.csv").string());
  report(10, "repeated cli training is byte-identical",
         ok && !a.empty() && a == b,
         ok ? "" : "dctx invocation failed");
}

}  // namespace

int main(int argc, char** argv) {
  auto t0 = std::chrono::steady_clock::now();
  fs::path work = fs::current_path() / "acceptance_work";

  criterion_crf_oracle();
  criterion_gradients();
  criterion_f1_oracle();
  criteria_trained_models(work);
  criterion_stats_invariants();
  if (argc > 1)
    criterion_cli_determinism(argv[1], work / "cli");
  else
    report(10, "repeated cli training is byte-identical", false,
           "pass the dctx binary path as argv[1]");

  auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0).count();
  std::printf("%s (%d of 10 criteria, %.0f s)\n",
              g_failures == 0 ? "ACCEPTED" : "REJECTED", 10 - g_failures,
              secs);
  return g_failures == 0 ? 0 : 1;
}
