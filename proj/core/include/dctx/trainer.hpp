#pragma once

#include "dctx/analysis.hpp"
#include "dctx/checkpoint.hpp"
#include "dctx/corpus.hpp"
#include "dctx/models.hpp"
#include "dctx/perturb.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dctx {

enum class Batching { dialogue, utterance };
const char* batching_name(Batching b);
std::optional<Batching> parse_batching(const std::string& s);

struct TrainError : std::runtime_error {
  explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainConfig {
  ModelConfig model;
  CrfKind crf = CrfKind::none;
  Batching batching = Batching::dialogue;
  int batch_size = 32;
  double lr = 1e-3;
  int epochs = 100;
  uint64_t seed = 1;
  std::optional<PerturbationSpec> train_perturb;
  std::optional<PerturbationSpec> val_perturb;
  double order_lambda = 1.0;
  int vocab_min_freq = 1;
  std::string embeddings_path;  // empty: random table
  std::string feature_path;     // extractor == precomputed
};

struct EpochStats {
  int epoch = 1;  // 1-based
  double train_loss = 0.0;
  double val_score = 0.0;  // weighted F1
};

struct RunResult {
  Checkpoint best;
  std::vector<EpochStats> history;
  int best_epoch = 1;
  EvalReport test_report;  // at best-val epoch, unperturbed
};

struct BatchItem {
  int dialogue = 0;  // index into the split
  int target = -1;   // utterance index; -1 for whole-dialogue items
};

/// Dialogue mode: shuffled dialogue indices grouped `size` at a time.
/// Utterance mode: shuffled (dialogue, eval-masked target) pairs.
std::vector<std::vector<BatchItem>> make_batches(
    const std::vector<Dialogue>& split, Batching mode, int size, uint64_t seed);

/// End-to-end training with per-epoch validation; the returned test report is
/// taken at the epoch maximizing validation weighted F1 (ties -> earliest).
/// Deterministic per (cfg, corpus). Throws TrainError on invalid configs and
/// on non-finite loss (with epoch/batch).
RunResult train(const TrainConfig& cfg, const Corpus& corpus);

/// Inference over one split. Without a perturbation both batching modes give
/// identical predictions; with one, each target is classified within its own
/// context view. `features` backs the precomputed extractor.
EvalReport evaluate(const Checkpoint& ckpt, const Corpus& corpus, Split split,
                    const std::optional<PerturbationSpec>& perturb,
                    Batching mode,
                    const std::map<std::string, Mat>* features = nullptr);

struct MultiRunResult {
  std::vector<RunResult> runs;
  std::map<std::string, double> mean;  // over test-report aggregates
  std::map<std::string, double> std_dev;  // sample std; 0 when n_runs == 1
};

/// Trains with seeds cfg.seed + 0 .. n_runs-1.
MultiRunResult multi_run(const TrainConfig& cfg, const Corpus& corpus,
                         int n_runs);

}  // namespace dctx
