#include "dctx/trainer.hpp"

#include "dctx/crf.hpp"
#include "dctx/embed.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace dctx {

const char* batching_name(Batching b) {
  return b == Batching::dialogue ? "dialogue" : "utterance";
}

std::optional<Batching> parse_batching(const std::string& s) {
  if (s == "dialogue") return Batching::dialogue;
  if (s == "utterance") return Batching::utterance;
  return std::nullopt;
}

std::vector<std::vector<BatchItem>> make_batches(
    const std::vector<Dialogue>& split, Batching mode, int size,
    uint64_t seed) {
  if (size < 1) throw TrainError("batch size must be >= 1");
  std::vector<BatchItem> items;
  for (int d = 0; d < static_cast<int>(split.size()); ++d) {
    if (mode == Batching::dialogue) {
      items.push_back({d, -1});
    } else {
      const auto& utts = split[static_cast<size_t>(d)].utterances;
      for (int t = 0; t < static_cast<int>(utts.size()); ++t)
        if (utts[static_cast<size_t>(t)].eval_mask) items.push_back({d, t});
    }
  }
  std::mt19937_64 rng(seed);
  for (size_t i = 0; i + 1 < items.size(); ++i) {
    size_t j = i + static_cast<size_t>(rng() % (items.size() - i));
    std::swap(items[i], items[j]);
  }
  std::vector<std::vector<BatchItem>> batches;
  for (size_t i = 0; i < items.size(); i += static_cast<size_t>(size)) {
    size_t end = std::min(items.size(), i + static_cast<size_t>(size));
    batches.emplace_back(items.begin() + static_cast<long>(i),
                         items.begin() + static_cast<long>(end));
  }
  return batches;
}

namespace {

/// One classification sequence: a whole dialogue or a perturbed context view.
struct SeqInputs {
  std::string dialogue_id;
  std::vector<std::string> texts;
  std::vector<SpeakerId> speakers;
  std::vector<int> gold;   // -1 when no label
  std::vector<bool> mask;  // eval_mask and label present
  std::vector<int> orig_index;
  int target_pos = -1;  // position within this sequence; -1 = all positions
  std::vector<int> order_targets;  // 1-based original positions; empty = none
};

struct Session {
  ModelConfig model;
  CrfKind crf = CrfKind::none;
  int n_labels = 0;
  Vocab vocab;
  EmbeddingTable table;
  const std::map<std::string, Mat>* features = nullptr;
};

SeqInputs inputs_from_dialogue(const Dialogue& d) {
  SeqInputs in;
  in.dialogue_id = d.id;
  for (int i = 0; i < static_cast<int>(d.utterances.size()); ++i) {
    const Utterance& u = d.utterances[static_cast<size_t>(i)];
    in.texts.push_back(u.text);
    in.speakers.push_back(u.speaker);
    in.gold.push_back(u.label ? *u.label : -1);
    in.mask.push_back(u.eval_mask && u.label.has_value());
    in.orig_index.push_back(i);
  }
  return in;
}

SeqInputs inputs_from_view(const Dialogue& d, const ContextView& v) {
  SeqInputs in;
  in.dialogue_id = d.id;
  in.order_targets = v.order_targets;
  for (size_t j = 0; j < v.visible.size(); ++j) {
    int i = v.visible[j];
    const Utterance& u = d.utterances[static_cast<size_t>(i)];
    auto to = v.text_override.find(i);
    in.texts.push_back(to != v.text_override.end() ? to->second : u.text);
    in.speakers.push_back(u.speaker);
    auto lo = v.label_override.find(i);
    int gold = lo != v.label_override.end() ? lo->second
                                            : (u.label ? *u.label : -1);
    in.gold.push_back(gold);
    in.mask.push_back(u.eval_mask && gold >= 0);
    in.orig_index.push_back(i);
    if (i == v.target_index) in.target_pos = static_cast<int>(j);
  }
  if (in.target_pos < 0)
    throw TrainError("context view does not include its own target");
  return in;
}

struct SeqForward {
  ModelForward mf;
  Mat logits;  // n x K values
};

SeqForward forward_sequence(Tape& t, ParamSet& ps, const Session& s,
                            const SeqInputs& in, bool training,
                            std::mt19937_64* drop_rng) {
  int n = static_cast<int>(in.texts.size());
  std::vector<Var> feats;
  for (int i = 0; i < n; ++i) {
    Var f;
    if (s.model.extractor == Extractor::cnn) {
      auto emb = embed_utterance(tokenize(in.texts[static_cast<size_t>(i)]),
                                 s.vocab, s.table, s.model.max_utt_len);
      f = cnn_extract(t, ps, s.model, emb.matrix, emb.length);
    } else {
      if (!s.features)
        throw TrainError("precomputed extractor needs a feature file");
      auto it = s.features->find(in.dialogue_id);
      if (it == s.features->end())
        throw TrainError("no features for dialogue " + in.dialogue_id);
      int row = in.orig_index[static_cast<size_t>(i)];
      if (row >= it->second.rows())
        throw TrainError("feature file too short for dialogue " +
                         in.dialogue_id);
      f = t.constant(it->second.row(row));
    }
    if (training && s.model.dropout > 0.0)
      f = t.dropout(f, s.model.dropout, *drop_rng, true);
    feats.push_back(f);
  }
  SeqForward out;
  out.mf = classify_dialogue(t, ps, s.model, feats, in.speakers);
  out.logits = Mat(n, s.n_labels);
  for (int i = 0; i < n; ++i)
    out.logits.row(i) = out.mf.logits[static_cast<size_t>(i)].val().row(0);
  return out;
}

// --- CRF parameter plumbing ---

void add_crf_params(ParamSet& ps, CrfKind crf, int K) {
  auto add_group = [&](const std::string& prefix, bool ext) {
    ps.add_zeros(prefix + "start", 1, K);
    ps.add_zeros(prefix + "stop", 1, K);
    ps.add_zeros(prefix + "trans", K, K);
    if (ext) ps.add_zeros(prefix + "trans2", static_cast<long>(K) * K, K);
  };
  switch (crf) {
    case CrfKind::none: break;
    case CrfKind::global: add_group("crf.", false); break;
    case CrfKind::global_ext: add_group("crf.", true); break;
    case CrfKind::speaker:
      add_group("crf.role0.", false);
      add_group("crf.role1.", false);
      break;
  }
}

CrfVars crf_vars(Tape& t, ParamSet& ps, const std::string& prefix, bool ext) {
  CrfVars cv;
  cv.order = ext ? 2 : 1;
  cv.start = t.param(ps.at(prefix + "start"));
  cv.stop = t.param(ps.at(prefix + "stop"));
  cv.trans = t.param(ps.at(prefix + "trans"));
  if (ext) cv.trans2 = t.param(ps.at(prefix + "trans2"));
  return cv;
}

CrfParams crf_params_from(const ParamSet& ps, const std::string& prefix,
                          bool ext, int K) {
  CrfParams p = CrfParams::zeros(ext ? 2 : 1, K);
  p.start = ps.at(prefix + "start").value.row(0).transpose();
  p.stop = ps.at(prefix + "stop").value.row(0).transpose();
  p.trans = ps.at(prefix + "trans").value;
  if (ext) p.trans2 = ps.at(prefix + "trans2").value;
  return p;
}

/// Role prefix per speaker by order of first appearance (wrapping past two
/// roles for multi-party data).
std::map<SpeakerId, std::string> role_prefixes(
    const std::vector<SpeakerId>& speakers) {
  std::map<SpeakerId, std::string> out;
  int next = 0;
  for (const auto& sp : speakers) {
    if (out.count(sp)) continue;
    out[sp] = "crf.role" + std::to_string(next % 2) + ".";
    ++next;
  }
  return out;
}

Var sequence_loss(Tape& t, ParamSet& ps, const Session& s, const SeqInputs& in,
                  const SeqForward& fwd, double order_lambda) {
  int n = static_cast<int>(in.texts.size());
  std::vector<bool> loss_mask = in.mask;
  if (in.target_pos >= 0) {
    loss_mask.assign(static_cast<size_t>(n), false);
    loss_mask[static_cast<size_t>(in.target_pos)] =
        in.mask[static_cast<size_t>(in.target_pos)];
  }
  std::vector<int> gold = in.gold;
  for (int& g : gold)
    if (g < 0) g = 0;  // masked; value never consulted

  Var base;
  Var emissions;
  if (s.crf != CrfKind::none) emissions = t.stack_rows(fwd.mf.logits);
  switch (s.crf) {
    case CrfKind::none:
      base = t.softmax_cross_entropy(t.stack_rows(fwd.mf.logits), gold,
                                     loss_mask);
      break;
    case CrfKind::global:
    case CrfKind::global_ext: {
      bool ext = s.crf == CrfKind::global_ext;
      base = crf_nll_loss(t, emissions, crf_vars(t, ps, "crf.", ext), gold,
                          loss_mask);
      break;
    }
    case CrfKind::speaker: {
      auto roles = role_prefixes(in.speakers);
      std::vector<Var> losses;
      std::map<SpeakerId, bool> done;
      for (const auto& sp : in.speakers) {
        if (done[sp]) continue;
        done[sp] = true;
        std::vector<Var> sub_logits;
        std::vector<int> sub_gold;
        std::vector<bool> sub_mask;
        for (int i = 0; i < n; ++i) {
          if (in.speakers[static_cast<size_t>(i)] != sp) continue;
          sub_logits.push_back(fwd.mf.logits[static_cast<size_t>(i)]);
          sub_gold.push_back(gold[static_cast<size_t>(i)]);
          sub_mask.push_back(loss_mask[static_cast<size_t>(i)]);
        }
        losses.push_back(crf_nll_loss(t, t.stack_rows(sub_logits),
                                      crf_vars(t, ps, roles.at(sp), false),
                                      sub_gold, sub_mask));
      }
      base = t.add_scalars(losses);
      break;
    }
  }

  if (s.model.order_prediction) {
    auto order_logits = order_head_forward(t, ps, s.model, fwd.mf.states);
    std::vector<int> targets(static_cast<size_t>(n));
    std::vector<bool> omask(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
      int pos = in.order_targets.empty()
                    ? j + 1
                    : in.order_targets[static_cast<size_t>(j)];
      targets[static_cast<size_t>(j)] = pos - 1;
      omask[static_cast<size_t>(j)] = pos <= s.model.max_dialogue_len &&
                                      j < s.model.max_dialogue_len;
    }
    Var oce = t.softmax_cross_entropy(t.stack_rows(order_logits), targets,
                                      omask);
    base = t.add(base, t.scale(oce, order_lambda));
  }
  return base;
}

std::vector<int> predict_sequence(const ParamSet& ps, const Session& s,
                                  const SeqInputs& in, const Mat& logits) {
  int n = static_cast<int>(logits.rows());
  switch (s.crf) {
    case CrfKind::none: {
      std::vector<int> out(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int k = 1; k < s.n_labels; ++k)
          if (logits(i, k) > logits(i, best)) best = k;
        out[static_cast<size_t>(i)] = best;
      }
      return out;
    }
    case CrfKind::global:
    case CrfKind::global_ext: {
      bool ext = s.crf == CrfKind::global_ext;
      CrfParams p = crf_params_from(ps, "crf.", ext, s.n_labels);
      return viterbi(EmissionSeq(logits), p).labels;
    }
    case CrfKind::speaker: {
      auto roles = role_prefixes(in.speakers);
      std::map<std::string, CrfParams> by_prefix;
      for (const auto& [sp, prefix] : roles)
        if (!by_prefix.count(prefix))
          by_prefix.emplace(prefix,
                            crf_params_from(ps, prefix, false, s.n_labels));
      std::map<SpeakerId, const CrfParams*> by_role;
      for (const auto& [sp, prefix] : roles)
        by_role[sp] = &by_prefix.at(prefix);
      return speaker_viterbi(EmissionSeq(logits), in.speakers, by_role);
    }
  }
  return {};
}

EvalReport evaluate_session(const Session& s, ParamSet& ps,
                            const Corpus& corpus, Split split,
                            const std::optional<PerturbationSpec>& perturb,
                            Batching mode) {
  EvalReport rep;
  const auto& dialogues = corpus.split(split);
  auto gold_at = [](const Dialogue& d, int t) {
    const auto& u = d.utterances[static_cast<size_t>(t)];
    return u.label ? *u.label : -1;
  };

  if (perturb && perturb->kind != PerturbKind::none) {
    Plan plan = plan_expand(*perturb, corpus, split);
    std::unordered_map<std::string, const Dialogue*> by_id;
    for (const Dialogue& d : dialogues) by_id[d.id] = &d;
    for (const ContextView& v : plan.views) {
      const Dialogue& d = *by_id.at(v.dialogue_id);
      SeqInputs in = inputs_from_view(d, v);
      Tape tape;
      SeqForward fwd = forward_sequence(tape, ps, s, in, false, nullptr);
      auto preds = predict_sequence(ps, s, in, fwd.logits);
      rep.rows.push_back({d.id, v.target_index, gold_at(d, v.target_index),
                          preds[static_cast<size_t>(in.target_pos)], true});
    }
  } else {
    for (const Dialogue& d : dialogues) {
      SeqInputs in = inputs_from_dialogue(d);
      if (mode == Batching::dialogue) {
        Tape tape;
        SeqForward fwd = forward_sequence(tape, ps, s, in, false, nullptr);
        auto preds = predict_sequence(ps, s, in, fwd.logits);
        for (int t = 0; t < static_cast<int>(d.utterances.size()); ++t)
          if (d.utterances[static_cast<size_t>(t)].eval_mask)
            rep.rows.push_back({d.id, t, gold_at(d, t),
                                preds[static_cast<size_t>(t)], true});
      } else {
        for (int t = 0; t < static_cast<int>(d.utterances.size()); ++t) {
          if (!d.utterances[static_cast<size_t>(t)].eval_mask) continue;
          Tape tape;
          SeqForward fwd = forward_sequence(tape, ps, s, in, false, nullptr);
          auto preds = predict_sequence(ps, s, in, fwd.logits);
          rep.rows.push_back({d.id, t, gold_at(d, t),
                              preds[static_cast<size_t>(t)], true});
        }
      }
    }
  }
  fill_aggregates(rep);
  return rep;
}

void check_config(const TrainConfig& cfg, const Corpus& corpus) {
  if (cfg.batch_size < 1) throw TrainError("batch_size must be >= 1");
  if (cfg.epochs < 1) throw TrainError("epochs must be >= 1");
  if (corpus.split(Split::train).empty())
    throw TrainError("corpus has no train dialogues");
  if (corpus.split(Split::val).empty())
    throw TrainError("corpus has no val dialogues");
  if (cfg.crf != CrfKind::none && cfg.batching == Batching::utterance)
    throw TrainError("CRF training requires dialogue batching");
  if (cfg.train_perturb) {
    PerturbKind k = cfg.train_perturb->kind;
    bool per_target = k != PerturbKind::none && k != PerturbKind::shuffle;
    if (per_target && cfg.batching == Batching::dialogue)
      throw TrainError("per-target train perturbations require utterance "
                       "batching");
  }
  if (cfg.model.extractor == Extractor::precomputed && cfg.feature_path.empty())
    throw TrainError("precomputed extractor requires feature_path");
}

ParamSet copy_params(const ParamSet& src) {
  ParamSet out;
  for (const auto& [name, p] : src.all()) out.add(name, p->value);
  return out;
}

}  // namespace

RunResult train(const TrainConfig& cfg, const Corpus& corpus) {
  check_config(cfg, corpus);
  int K = corpus.n_labels();
  const auto& train_split = corpus.split(Split::train);

  Session session;
  session.model = cfg.model;
  session.crf = cfg.crf;
  session.n_labels = K;
  session.vocab = build_vocab(corpus, cfg.vocab_min_freq);
  session.table = load_embeddings(cfg.embeddings_path, session.vocab,
                                  cfg.model.embed_dim, cfg.seed);
  std::map<std::string, Mat> features;
  if (cfg.model.extractor == Extractor::precomputed) {
    features = load_feature_file(cfg.feature_path);
    if (session.model.precomputed_dim == 0 && !features.empty())
      session.model.precomputed_dim =
          static_cast<int>(features.begin()->second.cols());
    session.features = &features;
  }

  ParamSet ps(cfg.seed);
  build_model_params(ps, session.model, K);
  add_crf_params(ps, cfg.crf, K);
  AdamState adam(cfg.lr);
  std::mt19937_64 drop_rng(mix_seed(cfg.seed, "dropout", 0));

  // Per-target training views are fixed across epochs; dialogue-mode shuffle
  // re-draws each epoch.
  std::map<std::pair<int, int>, SeqInputs> item_inputs;
  if (cfg.batching == Batching::utterance) {
    std::unordered_map<std::string, int> idx_by_id;
    for (int d = 0; d < static_cast<int>(train_split.size()); ++d)
      idx_by_id[train_split[static_cast<size_t>(d)].id] = d;
    if (cfg.train_perturb && cfg.train_perturb->kind != PerturbKind::none) {
      Plan plan = plan_expand(*cfg.train_perturb, corpus, Split::train);
      for (const ContextView& v : plan.views) {
        int d = idx_by_id.at(v.dialogue_id);
        item_inputs[{d, v.target_index}] = inputs_from_view(
            train_split[static_cast<size_t>(d)], v);
      }
    } else {
      for (int d = 0; d < static_cast<int>(train_split.size()); ++d) {
        const Dialogue& dlg = train_split[static_cast<size_t>(d)];
        SeqInputs base = inputs_from_dialogue(dlg);
        for (int t = 0; t < static_cast<int>(dlg.utterances.size()); ++t) {
          if (!dlg.utterances[static_cast<size_t>(t)].eval_mask) continue;
          SeqInputs in = base;
          in.target_pos = t;
          item_inputs[{d, t}] = std::move(in);
        }
      }
    }
  }

  bool epoch_shuffle = cfg.batching == Batching::dialogue && cfg.train_perturb &&
                       cfg.train_perturb->kind == PerturbKind::shuffle;

  RunResult result;
  double best_score = -1.0;
  ParamSet best_params;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<SeqInputs> dialogue_inputs;
    if (cfg.batching == Batching::dialogue) {
      for (const Dialogue& d : train_split) {
        if (epoch_shuffle) {
          ShuffleResult sh = shuffle_dialogue(
              d, mix_seed(cfg.train_perturb->seed + static_cast<uint64_t>(epoch),
                          d.id, -1));
          SeqInputs in = inputs_from_dialogue(sh.dialogue);
          in.order_targets = sh.order;
          dialogue_inputs.push_back(std::move(in));
        } else {
          dialogue_inputs.push_back(inputs_from_dialogue(d));
        }
      }
    }

    auto batches = make_batches(train_split, cfg.batching, cfg.batch_size,
                                mix_seed(cfg.seed, "batches", epoch));
    double epoch_loss = 0.0;
    for (size_t b = 0; b < batches.size(); ++b) {
      Tape tape;
      std::vector<Var> losses;
      for (const BatchItem& item : batches[b]) {
        const SeqInputs& in =
            cfg.batching == Batching::dialogue
                ? dialogue_inputs[static_cast<size_t>(item.dialogue)]
                : item_inputs.at({item.dialogue, item.target});
        SeqForward fwd = forward_sequence(tape, ps, session, in, true,
                                          &drop_rng);
        losses.push_back(
            sequence_loss(tape, ps, session, in, fwd, cfg.order_lambda));
      }
      Var total = tape.add_scalars(losses);
      double lv = total.val()(0, 0);
      if (!std::isfinite(lv))
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(b + 1));
      epoch_loss += lv;
      tape.backward(total);
      adam.step(ps);
    }

    EvalReport val = evaluate_session(session, ps, corpus, Split::val,
                                      cfg.val_perturb, Batching::dialogue);
    double score = val.aggregate.at("w_avg_f1");
    result.history.push_back({epoch, epoch_loss, score});
    if (score > best_score) {
      best_score = score;
      result.best_epoch = epoch;
      best_params = copy_params(ps);
    }
  }

  result.best.model = session.model;
  result.best.crf = cfg.crf;
  result.best.label_set = corpus.label_set;
  result.best.vocab_tokens = session.vocab.tokens();
  result.best.embedding = session.table.matrix;
  result.best.params = std::make_unique<ParamSet>(copy_params(best_params));
  result.test_report = evaluate_session(session, *result.best.params, corpus,
                                        Split::test, std::nullopt,
                                        cfg.batching);
  return result;
}

EvalReport evaluate(const Checkpoint& ckpt, const Corpus& corpus, Split split,
                    const std::optional<PerturbationSpec>& perturb,
                    Batching mode, const std::map<std::string, Mat>* features) {
  if (ckpt.label_set != corpus.label_set)
    throw TrainError("incompatible checkpoint: label set differs from corpus");
  Session session;
  session.model = ckpt.model;
  session.crf = ckpt.crf;
  session.n_labels = static_cast<int>(ckpt.label_set.size());
  session.vocab = Vocab(ckpt.vocab_tokens);
  session.table.dim = ckpt.model.embed_dim;
  session.table.matrix = ckpt.embedding;
  session.features = features;
  ParamSet ps = copy_params(*ckpt.params);
  return evaluate_session(session, ps, corpus, split, perturb, mode);
}

MultiRunResult multi_run(const TrainConfig& cfg, const Corpus& corpus,
                         int n_runs) {
  if (n_runs < 1) throw TrainError("n_runs must be >= 1");
  MultiRunResult out;
  for (int r = 0; r < n_runs; ++r) {
    TrainConfig c = cfg;
    c.seed = cfg.seed + static_cast<uint64_t>(r);
    out.runs.push_back(train(c, corpus));
  }
  for (const auto& [key, v0] : out.runs.front().test_report.aggregate) {
    double sum = 0.0;
    for (const RunResult& r : out.runs) sum += r.test_report.aggregate.at(key);
    double mean = sum / n_runs;
    double sq = 0.0;
    for (const RunResult& r : out.runs) {
      double d = r.test_report.aggregate.at(key) - mean;
      sq += d * d;
    }
    out.mean[key] = mean;
    out.std_dev[key] = n_runs > 1 ? std::sqrt(sq / (n_runs - 1)) : 0.0;
  }
  return out;
}

}  // namespace dctx
