#pragma once

#include "dctx/autodiff.hpp"
#include "dctx/cells.hpp"
#include "dctx/corpus.hpp"
#include "dctx/optim.hpp"

#include <map>
#include <string>
#include <vector>

namespace dctx {

enum class Extractor { cnn, precomputed };
enum class Classifier { logreg, clstm, bclstm, dialoguernn };

const char* extractor_name(Extractor e);
const char* classifier_name(Classifier c);
std::optional<Extractor> parse_extractor(const std::string& s);
std::optional<Classifier> parse_classifier(const std::string& s);

struct ModelConfig {
  Extractor extractor = Extractor::cnn;
  Classifier classifier = Classifier::bclstm;
  bool residual = false;
  int d_h = 100;  // LSTM hidden
  int d_g = 100;  // DialogueRNN global
  int d_p = 100;  // DialogueRNN party
  int d_e = 100;  // DialogueRNN emotion
  std::vector<int> cnn_filter_sizes = {1, 2, 3};
  int cnn_maps_per_size = 100;
  int cnn_out = 100;
  bool order_prediction = false;
  int max_dialogue_len = 110;
  int max_utt_len = 60;
  int embed_dim = 300;
  int precomputed_dim = 0;  // feature dim when extractor == precomputed
  bool listener_update = false;
  double dropout = 0.5;  // extractor output, training only

  int feature_dim() const {
    return extractor == Extractor::cnn ? cnn_out : precomputed_dim;
  }
  /// Width of the per-step state the classification head reads.
  int state_dim() const;
};

/// Registers every trainable tensor the configured model needs (extractor,
/// recurrent stacks, heads, residual projection, optional order head).
void build_model_params(ParamSet& ps, const ModelConfig& cfg, int n_labels);

/// CNN feature extractor: per-size 1-D convolutions over token windows,
/// max-pool over positions 1..length, concat, dense + ReLU. The token matrix
/// holds one embedding row per token (max_utt_len x embed_dim); extra window
/// overhang is zero-padded internally. length == 0 degrades to the bias path.
Var cnn_extract(Tape& t, ParamSet& ps, const ModelConfig& cfg,
                const Mat& token_matrix, int length);

struct ModelForward {
  std::vector<Var> logits;  // per step, 1 x K
  std::vector<Var> states;  // per step, 1 x state_dim (order-head input)
};

/// Runs the configured classifier over per-utterance features. speakers is
/// only consulted by dialoguernn.
ModelForward classify_dialogue(Tape& t, ParamSet& ps, const ModelConfig& cfg,
                               const std::vector<Var>& features,
                               const std::vector<SpeakerId>& speakers);

/// Position logits (max_dialogue_len classes) over the recurrent states.
std::vector<Var> order_head_forward(Tape& t, ParamSet& ps,
                                    const ModelConfig& cfg,
                                    const std::vector<Var>& states);

/// FeatureFile: JSONL of {dialogue_id, features: [[...], ...]}.
std::map<std::string, Mat> load_feature_file(const std::string& path);

}  // namespace dctx
