// Command-line front end: validate/stats/synth/train/probe/report.
#include <CLI11.hpp>
#include <json.hpp>

#include "dctx/analysis.hpp"
#include "dctx/checkpoint.hpp"
#include "dctx/config.hpp"
#include "dctx/corpus.hpp"
#include "dctx/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dctx;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;   // validation / data failure
constexpr int kExitUsage = 2;  // usage / IO failure

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
}

// --- config readers ---

std::optional<PerturbationSpec> read_perturb(FlatConfig& cfg,
                                             const std::string& prefix) {
  if (!cfg.has(prefix + "kind")) return std::nullopt;
  PerturbationSpec spec;
  std::string kind = cfg.require_str(prefix + "kind");
  static const std::map<std::string, PerturbKind> kinds = {
      {"none", PerturbKind::none},
      {"shuffle", PerturbKind::shuffle},
      {"drop", PerturbKind::drop},
      {"speaker_filter", PerturbKind::speaker_filter},
      {"spelling_attack", PerturbKind::spelling_attack},
      {"word_substitution", PerturbKind::word_substitution},
      {"style_flip", PerturbKind::style_flip},
      {"lca", PerturbKind::lca}};
  auto it = kinds.find(kind);
  if (it == kinds.end())
    throw ConfigError("unknown perturbation kind: " + kind);
  spec.kind = it->second;

  auto side = [&](const std::string& key, WindowSide dflt) {
    if (!cfg.has(key)) return dflt;
    auto w = parse_window_side(cfg.require_str(key));
    if (!w) throw ConfigError("bad window rule in " + key);
    return *w;
  };
  spec.window.past = side(prefix + "window.past", spec.window.past);
  spec.window.future = side(prefix + "window.future", spec.window.future);
  if (cfg.has(prefix + "speaker_mode")) {
    std::string m = cfg.require_str(prefix + "speaker_mode");
    if (m == "wo_inter") spec.speaker_mode = SpeakerMode::wo_inter;
    else if (m == "wo_intra") spec.speaker_mode = SpeakerMode::wo_intra;
    else throw ConfigError("unknown speaker_mode: " + m);
  }
  spec.w = cfg.get_int(prefix + "w", spec.w);
  spec.past = cfg.get_bool(prefix + "past", spec.past);
  spec.future = cfg.get_bool(prefix + "future", spec.future);
  spec.target = cfg.get_bool(prefix + "target", spec.target);
  if (cfg.has(prefix + "lca.constraint")) {
    std::string c = cfg.require_str(prefix + "lca.constraint");
    if (c == "same_label") spec.lca_constraint = LcaConstraint::same_label;
    else if (c == "different_label")
      spec.lca_constraint = LcaConstraint::different_label;
    else throw ConfigError("unknown lca.constraint: " + c);
  }
  if (cfg.has(prefix + "lca.strategy")) {
    std::string s = cfg.require_str(prefix + "lca.strategy");
    if (s == "concat") spec.lca_strategy = LcaStrategy::concat;
    else if (s == "replace") spec.lca_strategy = LcaStrategy::replace;
    else throw ConfigError("unknown lca.strategy: " + s);
  }
  spec.seed = cfg.get_u64(prefix + "seed", spec.seed);
  spec.lexicon_path = cfg.get_str(prefix + "lexicon", spec.lexicon_path);
  return spec;
}

ModelConfig read_model(FlatConfig& cfg) {
  ModelConfig m;
  if (cfg.has("model.extractor")) {
    auto e = parse_extractor(cfg.require_str("model.extractor"));
    if (!e) throw ConfigError("unknown model.extractor");
    m.extractor = *e;
  }
  if (cfg.has("model.classifier")) {
    auto c = parse_classifier(cfg.require_str("model.classifier"));
    if (!c) throw ConfigError("unknown model.classifier");
    m.classifier = *c;
  }
  m.residual = cfg.get_bool("model.residual", m.residual);
  m.d_h = cfg.get_int("model.d_h", m.d_h);
  m.d_g = cfg.get_int("model.d_g", m.d_g);
  m.d_p = cfg.get_int("model.d_p", m.d_p);
  m.d_e = cfg.get_int("model.d_e", m.d_e);
  if (cfg.has("model.cnn_filters")) {
    m.cnn_filter_sizes.clear();
    std::istringstream ss(cfg.require_str("model.cnn_filters"));
    std::string tok;
    while (std::getline(ss, tok, ','))
      m.cnn_filter_sizes.push_back(std::stoi(tok));
  }
  m.cnn_maps_per_size = cfg.get_int("model.cnn_maps", m.cnn_maps_per_size);
  m.cnn_out = cfg.get_int("model.cnn_out", m.cnn_out);
  m.order_prediction =
      cfg.get_bool("model.order_prediction", m.order_prediction);
  m.max_dialogue_len = cfg.get_int("model.max_dialogue_len", m.max_dialogue_len);
  m.max_utt_len = cfg.get_int("model.max_utt_len", m.max_utt_len);
  m.embed_dim = cfg.get_int("embed.dim", m.embed_dim);
  m.listener_update = cfg.get_bool("model.listener_update", m.listener_update);
  m.dropout = cfg.get_double("dropout", m.dropout);
  return m;
}

struct ExperimentConfig {
  TrainConfig tc;
  std::string corpus_path;
  std::string out_dir;
  int runs = 1;
};

ExperimentConfig read_experiment(FlatConfig& cfg) {
  ExperimentConfig ec;
  ec.corpus_path = cfg.get_str("corpus", "");
  const char* root = std::getenv("DCTX_OUT_ROOT");
  ec.out_dir = cfg.get_str("out", std::string(root ? root : ".") + "/run");
  ec.runs = cfg.get_int("runs", 1);
  TrainConfig& tc = ec.tc;
  tc.model = read_model(cfg);
  if (cfg.has("crf")) {
    auto k = parse_crf_kind(cfg.require_str("crf"));
    if (!k) throw ConfigError("unknown crf kind");
    tc.crf = *k;
  }
  if (cfg.has("batching")) {
    auto b = parse_batching(cfg.require_str("batching"));
    if (!b) throw ConfigError("unknown batching mode");
    tc.batching = *b;
  }
  tc.batch_size = cfg.get_int("batch_size", tc.batch_size);
  tc.lr = cfg.get_double("lr", tc.lr);
  tc.epochs = cfg.get_int("epochs", tc.epochs);
  tc.seed = cfg.get_u64("seed", tc.seed);
  tc.order_lambda = cfg.get_double("order_lambda", tc.order_lambda);
  tc.vocab_min_freq = cfg.get_int("embed.min_freq", tc.vocab_min_freq);
  tc.embeddings_path = cfg.get_str("embed.path", "");
  tc.feature_path = cfg.get_str("features", "");
  tc.train_perturb = read_perturb(cfg, "train.perturb.");
  tc.val_perturb = read_perturb(cfg, "val.perturb.");
  return ec;
}

// --- output helpers ---

void write_metrics_csv(const RunResult& r, const std::string& path) {
  std::ostringstream out;
  out << "epoch,train_loss,val_w_avg_f1\n";
  for (const EpochStats& e : r.history)
    out << e.epoch << "," << fmt(e.train_loss) << "," << fmt(e.val_score)
        << "\n";
  write_file(path, out.str());
}

void write_run_dir(const fs::path& dir, const RunResult& r,
                   const Corpus& corpus) {
  fs::create_directories(dir);
  write_metrics_csv(r, (dir / "metrics.csv").string());
  save_checkpoint(r.best, (dir / "checkpoint.json").string());
  write_report_json(r.test_report, corpus, (dir / "eval_report.json").string());
}

void write_aggregate_json(const std::map<std::string, double>& mean,
                          const std::map<std::string, double>& std_dev,
                          int best_epoch_first_run, const std::string& path) {
  nlohmann::json j;
  for (const auto& [k, v] : mean) {
    j["mean"][k] = v;
    j["std"][k] = std_dev.at(k);
  }
  j["best_epoch_run0"] = best_epoch_first_run;
  write_file(path, j.dump(2) + "\n");
}

// --- commands ---

int cmd_validate(const std::string& corpus_path) {
  if (!fs::exists(corpus_path)) {
    std::cerr << "no such file: " << corpus_path << "\n";
    return kExitUsage;
  }
  Corpus c = load_corpus(corpus_path);
  auto violations = validate(c);
  for (const auto& v : violations) {
    std::cerr << (v.dialogue_id.empty() ? std::string("<corpus>")
                                        : v.dialogue_id);
    if (v.utterance_index >= 0) std::cerr << "[" << v.utterance_index << "]";
    std::cerr << ": " << v.message << "\n";
  }
  if (!violations.empty()) return kExitData;
  std::cout << "ok\n";
  return kExitOk;
}

int cmd_stats(const std::string& corpus_path, const std::string& out_dir) {
  Corpus c = load_corpus(corpus_path);
  fs::create_directories(out_dir);
  fs::path out(out_dir);
  const auto& train = c.split(Split::train);
  for (auto mode : {TransitionMode::intra, TransitionMode::inter}) {
    auto m = transition_matrix(train, mode, c.n_labels());
    std::string name = mode == TransitionMode::intra ? "transitions_intra.csv"
                                                     : "transitions_inter.csv";
    write_transition_csv(m, c, (out / name).string());
  }
  EvalReport empty;
  for (int n : {2, 3, 5}) {
    auto s = ngram_patterns(train, empty, {}, n, PatternScope::intra,
                            c.n_labels());
    write_patterns_csv(s, c,
                       (out / ("patterns_intra_" + std::to_string(n) + ".csv"))
                           .string());
  }
  auto s2 = ngram_patterns(train, empty, {}, 2, PatternScope::inter,
                           c.n_labels());
  write_patterns_csv(s2, c, (out / "patterns_inter_2.csv").string());
  std::cout << "stats written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_synth(const std::string& out_path, int n, int min_len, int max_len,
              int labels, double copy_prob, double informativeness,
              uint64_t seed) {
  Corpus c = synth_copy_corpus(n, {min_len, max_len}, labels, copy_prob,
                               informativeness, seed);
  write_corpus(c, out_path);
  std::cout << "wrote " << out_path << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              std::optional<uint64_t> seed_override,
              std::optional<int> runs_override,
              const std::string& corpus_override) {
  std::string config_text = read_file(config_path);
  FlatConfig cfg = FlatConfig::parse_string(config_text);
  ExperimentConfig ec = read_experiment(cfg);
  cfg.reject_unconsumed();
  if (!out_override.empty()) ec.out_dir = out_override;
  if (seed_override) ec.tc.seed = *seed_override;
  if (runs_override) ec.runs = *runs_override;
  if (!corpus_override.empty()) ec.corpus_path = corpus_override;
  if (ec.corpus_path.empty())
    throw ConfigError("missing required key: corpus");
  if (ec.runs < 1) throw ConfigError("runs must be >= 1");

  Corpus corpus = load_corpus(ec.corpus_path);
  fs::path out(ec.out_dir);
  fs::create_directories(out);
  write_file((out / "config.txt").string(), config_text);

  if (ec.runs == 1) {
    RunResult r = train(ec.tc, corpus);
    write_run_dir(out, r, corpus);
    std::map<std::string, double> mean = r.test_report.aggregate, sd;
    for (const auto& [k, v] : mean) sd[k] = 0.0;
    write_aggregate_json(mean, sd, r.best_epoch,
                         (out / "aggregate.json").string());
  } else {
    MultiRunResult mr = multi_run(ec.tc, corpus, ec.runs);
    for (size_t i = 0; i < mr.runs.size(); ++i)
      write_run_dir(out / ("run_" + std::to_string(i)), mr.runs[i], corpus);
    write_aggregate_json(mr.mean, mr.std_dev, mr.runs.front().best_epoch,
                         (out / "aggregate.json").string());
  }
  std::cout << "run directory: " << ec.out_dir << "\n";
  return kExitOk;
}

int cmd_probe(const std::string& config_path, const std::string& out_override) {
  std::string config_text = read_file(config_path);
  FlatConfig cfg = FlatConfig::parse_string(config_text);
  ExperimentConfig ec = read_experiment(cfg);
  std::string checkpoint_path = cfg.get_str("checkpoint", "");

  struct Cell {
    std::string name;
    std::optional<PerturbationSpec> spec;
  };
  auto read_cells = [&](const std::string& prefix) {
    std::vector<Cell> cells;
    for (const std::string& idx : cfg.group_indices(prefix)) {
      std::string p = prefix + idx + ".";
      std::string kind = cfg.has(p + "kind") ? cfg.get_str(p + "kind", "") : "";
      auto spec = read_perturb(cfg, p);
      cells.push_back({idx + (kind.empty() ? "" : ":" + kind), spec});
    }
    if (cells.empty()) cells.push_back({"0:none", std::nullopt});
    return cells;
  };
  std::vector<Cell> train_cells = read_cells("probe.train.");
  std::vector<Cell> test_cells = read_cells("probe.test.");
  cfg.reject_unconsumed();
  if (!out_override.empty()) ec.out_dir = out_override;
  if (ec.corpus_path.empty())
    throw ConfigError("missing required key: corpus");
  if (!checkpoint_path.empty() && train_cells.size() > 1)
    throw ConfigError("checkpoint reuse allows only one train cell");

  Corpus corpus = load_corpus(ec.corpus_path);
  fs::path out(ec.out_dir);
  fs::create_directories(out);
  write_file((out / "config.txt").string(), config_text);

  std::map<std::string, Mat> features;
  const std::map<std::string, Mat>* feat_ptr = nullptr;
  if (!ec.tc.feature_path.empty()) {
    features = load_feature_file(ec.tc.feature_path);
    feat_ptr = &features;
  }

  std::ostringstream summary;
  summary << "train\\test";
  for (const Cell& tc : test_cells) summary << "," << tc.name;
  summary << "\n";
  for (size_t i = 0; i < train_cells.size(); ++i) {
    Checkpoint ckpt;
    if (!checkpoint_path.empty()) {
      ckpt = load_checkpoint(checkpoint_path);
    } else {
      TrainConfig tc = ec.tc;
      tc.train_perturb = train_cells[i].spec;
      RunResult r = train(tc, corpus);
      write_run_dir(out / ("train_" + std::to_string(i)), r, corpus);
      ckpt = std::move(r.best);
    }
    summary << train_cells[i].name;
    for (size_t j = 0; j < test_cells.size(); ++j) {
      EvalReport rep = evaluate(ckpt, corpus, Split::test, test_cells[j].spec,
                                Batching::utterance, feat_ptr);
      fs::path cell = out / ("cell_" + std::to_string(i) + "_" +
                             std::to_string(j));
      fs::create_directories(cell);
      write_report_json(rep, corpus, (cell / "report.json").string());
      summary << "," << fmt(rep.aggregate.at("w_avg_f1"));
    }
    summary << "\n";
  }
  write_file((out / "summary.csv").string(), summary.str());
  std::cout << "probe grid written to " << ec.out_dir << "\n";
  return kExitOk;
}

void write_shift_csv(const EvalReport& rep, const Corpus& corpus,
                     const std::string& path) {
  std::ostringstream out;
  out << "slice,score,support,shifts_per_dialogue,formatted\n";
  auto row = [&](const std::string& name, const ShiftReport& s) {
    out << name << ",";
    if (s.score >= 0.0) out << fmt(s.score);
    out << "," << s.support << "," << fmt(s.shifts_per_dialogue) << ",";
    if (s.score >= 0.0) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f (%.1f)", 100.0 * s.score,
                    s.shifts_per_dialogue);
      out << "\"" << buf << "\"";
    }
    out << "\n";
  };
  const auto& test = corpus.split(Split::test);
  row("label_intra", label_shift_report(rep, test, ShiftMode::intra));
  row("label_inter", label_shift_report(rep, test, ShiftMode::inter));
  if (corpus.sentiment_groups) {
    row("sentiment_strict", sentiment_shift_report(rep, corpus, test, false));
    row("sentiment_all", sentiment_shift_report(rep, corpus, test, true));
  }
  write_file(path, out.str());
}

int cmd_report(const std::vector<std::string>& run_dirs,
               const std::string& corpus_path, const std::string& out_dir) {
  Corpus corpus = load_corpus(corpus_path);
  const auto& train = corpus.split(Split::train);
  const auto& test = corpus.split(Split::test);
  for (const std::string& rd : run_dirs) {
    fs::path report_path = fs::path(rd) / "eval_report.json";
    if (!fs::exists(report_path))
      throw std::runtime_error("missing report: " + report_path.string());
    EvalReport rep = read_report_json(report_path.string());
    fs::path out = fs::path(out_dir) / fs::path(rd).filename();
    fs::create_directories(out);
    write_position_csv(position_report(rep), (out / "position.csv").string());
    write_shift_csv(rep, corpus, (out / "shifts.csv").string());
    for (int n : {2, 3, 5}) {
      auto s =
          ngram_patterns(train, rep, test, n, PatternScope::intra,
                         corpus.n_labels());
      write_patterns_csv(s, corpus,
                         (out / ("patterns_intra_" + std::to_string(n) +
                                 ".csv")).string());
    }
    auto s2 = ngram_patterns(train, rep, test, 2, PatternScope::inter,
                             corpus.n_labels());
    write_patterns_csv(s2, corpus, (out / "patterns_inter_2.csv").string());
    nlohmann::json j;
    for (const auto& [k, v] : rep.aggregate) j["aggregate"][k] = v;
    j["rows"] = rep.rows.size();
    write_file((out / "summary.json").string(), j.dump(2) + "\n");
  }
  std::cout << "reports written to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialogue-context experiment toolkit"};
  app.require_subcommand(1);

  std::string corpus_path, out_dir, config_path;
  std::vector<std::string> run_dirs;
  int threads = 1;
  app.add_option("--threads", threads, "worker threads (reserved)");

  auto* v = app.add_subcommand("validate", "check a corpus file");
  v->add_option("--corpus", corpus_path, "corpus JSONL path")->required();

  auto* st = app.add_subcommand("stats", "label transition / n-gram tables");
  st->add_option("--corpus", corpus_path)->required();
  st->add_option("--out", out_dir)->required();

  auto* sy = app.add_subcommand("synth", "generate a synthetic copy corpus");
  std::string synth_out;
  int synth_n = 100, synth_min = 5, synth_max = 12, synth_labels = 4;
  double synth_copy = 0.9, synth_inform = 0.2;
  uint64_t synth_seed = 1;
  sy->add_option("--out", synth_out)->required();
  sy->add_option("--n", synth_n, "train dialogues");
  sy->add_option("--min-len", synth_min);
  sy->add_option("--max-len", synth_max);
  sy->add_option("--labels", synth_labels);
  sy->add_option("--copy-prob", synth_copy);
  sy->add_option("--informativeness", synth_inform);
  sy->add_option("--seed", synth_seed);

  auto* tr = app.add_subcommand("train", "train per a config file");
  std::optional<uint64_t> seed_override;
  std::optional<int> runs_override;
  tr->add_option("--config", config_path)->required();
  tr->add_option("--out", out_dir);
  tr->add_option("--seed", seed_override);
  tr->add_option("--runs", runs_override);
  tr->add_option("--corpus", corpus_path);

  auto* pr = app.add_subcommand("probe", "train/test perturbation grid");
  pr->add_option("--config", config_path)->required();
  pr->add_option("--out", out_dir);

  auto* rp = app.add_subcommand("report", "consolidated analysis tables");
  rp->add_option("runs", run_dirs, "run directories")->required();
  rp->add_option("--corpus", corpus_path)->required();
  rp->add_option("--out", out_dir)->required();

  try {
    app.parse(argc, argv);
    if (v->parsed()) return cmd_validate(corpus_path);
    if (st->parsed()) return cmd_stats(corpus_path, out_dir);
    if (sy->parsed())
      return cmd_synth(synth_out, synth_n, synth_min, synth_max, synth_labels,
                       synth_copy, synth_inform, synth_seed);
    if (tr->parsed())
      return cmd_train(config_path, out_dir, seed_override, runs_override,
                       corpus_path);
    if (pr->parsed()) return cmd_probe(config_path, out_dir);
    if (rp->parsed()) return cmd_report(run_dirs, corpus_path, out_dir);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CorpusError& e) {
    std::cerr << "corpus error: " << e.what() << "\n";
    return kExitData;
  } catch (const TrainError& e) {
    std::cerr << "train error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
