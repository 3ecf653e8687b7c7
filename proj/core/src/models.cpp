#include "dctx/models.hpp"

#include <json.hpp>

#include <fstream>

namespace dctx {

const char* extractor_name(Extractor e) {
  return e == Extractor::cnn ? "cnn" : "precomputed";
}

const char* classifier_name(Classifier c) {
  switch (c) {
    case Classifier::logreg: return "logreg";
    case Classifier::clstm: return "clstm";
    case Classifier::bclstm: return "bclstm";
    case Classifier::dialoguernn: return "dialoguernn";
  }
  return "?";
}

std::optional<Extractor> parse_extractor(const std::string& s) {
  if (s == "cnn") return Extractor::cnn;
  if (s == "precomputed") return Extractor::precomputed;
  return std::nullopt;
}

std::optional<Classifier> parse_classifier(const std::string& s) {
  if (s == "logreg") return Classifier::logreg;
  if (s == "clstm") return Classifier::clstm;
  if (s == "bclstm") return Classifier::bclstm;
  if (s == "dialoguernn") return Classifier::dialoguernn;
  return std::nullopt;
}

int ModelConfig::state_dim() const {
  switch (classifier) {
    case Classifier::logreg: return d_h;
    case Classifier::clstm: return d_h;
    case Classifier::bclstm: return 2 * d_h;
    case Classifier::dialoguernn: return 2 * d_e;
  }
  return 0;
}

void build_model_params(ParamSet& ps, const ModelConfig& cfg, int n_labels) {
  const int f = cfg.feature_dim();
  if (cfg.extractor == Extractor::cnn) {
    for (int s : cfg.cnn_filter_sizes) {
      ps.add_weight("cnn.w" + std::to_string(s),
                    static_cast<long>(s) * cfg.embed_dim,
                    cfg.cnn_maps_per_size);
      ps.add_zeros("cnn.b" + std::to_string(s), 1, cfg.cnn_maps_per_size);
    }
    ps.add_weight("cnn.dense.w",
                  static_cast<long>(cfg.cnn_filter_sizes.size()) *
                      cfg.cnn_maps_per_size,
                  cfg.cnn_out);
    ps.add_zeros("cnn.dense.b", 1, cfg.cnn_out);
  }

  switch (cfg.classifier) {
    case Classifier::logreg:
      ps.add_weight("logreg.w1", f, cfg.d_h);
      ps.add_zeros("logreg.b1", 1, cfg.d_h);
      break;
    case Classifier::clstm:
      add_lstm_params(ps, "clstm.fw", f, cfg.d_h);
      break;
    case Classifier::bclstm:
      add_lstm_params(ps, "bclstm.fw", f, cfg.d_h);
      add_lstm_params(ps, "bclstm.bw", f, cfg.d_h);
      break;
    case Classifier::dialoguernn:
      for (const char* dir : {"fw", "bw"}) {
        std::string pre = std::string("drnn.") + dir;
        add_gru_params(ps, pre + ".global", f + cfg.d_p, cfg.d_g);
        add_gru_params(ps, pre + ".party", f + cfg.d_g, cfg.d_p);
        add_gru_params(ps, pre + ".emotion", cfg.d_p, cfg.d_e);
        ps.add_weight(pre + ".att.w", f, cfg.d_g);
        if (cfg.listener_update)
          add_gru_params(ps, pre + ".listener", f + cfg.d_g, cfg.d_p);
      }
      break;
  }

  const int s = cfg.state_dim();
  ps.add_weight("head.w", s, n_labels);
  ps.add_zeros("head.b", 1, n_labels);
  if (cfg.residual && f != s) {
    ps.add_weight("res.proj.w", f, s);
    ps.add_zeros("res.proj.b", 1, s);
  }
  if (cfg.order_prediction) {
    ps.add_weight("order.w", s, cfg.max_dialogue_len);
    ps.add_zeros("order.b", 1, cfg.max_dialogue_len);
  }
}

Var cnn_extract(Tape& t, ParamSet& ps, const ModelConfig& cfg,
                const Mat& token_matrix, int length) {
  if (length < 0) throw ShapeError("cnn_extract: negative length");
  int max_s = 1;
  for (int s : cfg.cnn_filter_sizes) max_s = std::max(max_s, s);
  const int d = cfg.embed_dim;
  const int n_win = std::max(length, 1);

  // Zero rows so every window starting at 1..length is fully defined.
  Mat padded(token_matrix.rows() + max_s, d);
  padded << token_matrix, Mat::Zero(max_s, d);
  Var tok = t.constant(std::move(padded));

  Var pooled;
  for (size_t si = 0; si < cfg.cnn_filter_sizes.size(); ++si) {
    int s = cfg.cnn_filter_sizes[si];
    Var w = t.param(ps.at("cnn.w" + std::to_string(s)));
    Var b = t.param(ps.at("cnn.b" + std::to_string(s)));
    Var conv;
    for (int j = 0; j < s; ++j) {
      Var part = t.matmul(t.rows(tok, j, n_win), t.rows(w, j * d, d));
      conv = j == 0 ? part : t.add(conv, part);
    }
    conv = t.add_rowvec(conv, b);
    Var mx = t.max_over_rows(conv, n_win);
    pooled = si == 0 ? mx : t.concat_cols(pooled, mx);
  }
  Var dw = t.param(ps.at("cnn.dense.w"));
  Var db = t.param(ps.at("cnn.dense.b"));
  return t.relu_(t.add(t.matmul(pooled, dw), db));
}

namespace {

Var head(Tape& t, ParamSet& ps, Var state) {
  return t.add(t.matmul(state, t.param(ps.at("head.w"))),
               t.param(ps.at("head.b")));
}

Var residual_state(Tape& t, ParamSet& ps, const ModelConfig& cfg, Var state,
                   Var feature) {
  if (!cfg.residual) return state;
  if (cfg.feature_dim() == cfg.state_dim()) return t.add(state, feature);
  Var proj = t.add(t.matmul(feature, t.param(ps.at("res.proj.w"))),
                   t.param(ps.at("res.proj.b")));
  return t.add(state, proj);
}

std::vector<Var> lstm_run(Tape& t, ParamSet& ps, const std::string& prefix,
                          const std::vector<Var>& features, int hidden,
                          bool reversed) {
  CellVars cv = cell_vars(t, ps, prefix);
  Var h = t.constant(Mat::Zero(1, hidden));
  Var c = t.constant(Mat::Zero(1, hidden));
  std::vector<Var> out(features.size());
  const int n = static_cast<int>(features.size());
  for (int i = 0; i < n; ++i) {
    int idx = reversed ? n - 1 - i : i;
    auto hc = lstm_cell(t, features[static_cast<size_t>(idx)], h, c, cv);
    h = hc.first;
    c = hc.second;
    out[static_cast<size_t>(idx)] = h;
  }
  return out;
}

/// One directional DialogueRNN pass; returns per-step emotion states.
std::vector<Var> dialoguernn_run(Tape& t, ParamSet& ps,
                                 const ModelConfig& cfg,
                                 const std::vector<Var>& features,
                                 const std::vector<SpeakerId>& speakers,
                                 bool reversed) {
  std::string pre = std::string("drnn.") + (reversed ? "bw" : "fw");
  CellVars global_cell = cell_vars(t, ps, pre + ".global");
  CellVars party_cell = cell_vars(t, ps, pre + ".party");
  CellVars emotion_cell = cell_vars(t, ps, pre + ".emotion");
  Var att_w = t.param(ps.at(pre + ".att.w"));
  CellVars listener_cell;
  if (cfg.listener_update) listener_cell = cell_vars(t, ps, pre + ".listener");

  Var global = t.constant(Mat::Zero(1, cfg.d_g));
  Var emotion = t.constant(Mat::Zero(1, cfg.d_e));
  std::map<SpeakerId, Var> party;
  std::vector<Var> history;  // past global states
  std::vector<Var> out(features.size());

  const int n = static_cast<int>(features.size());
  for (int step = 0; step < n; ++step) {
    int idx = reversed ? n - 1 - step : step;
    Var feat = features[static_cast<size_t>(idx)];
    const SpeakerId& sp = speakers[static_cast<size_t>(idx)];
    if (!party.count(sp)) party[sp] = t.constant(Mat::Zero(1, cfg.d_p));

    global = gru_cell(t, t.concat_cols(feat, party[sp]), global, global_cell);
    history.push_back(global);

    // Attention over the history before this step; empty history -> zero.
    Var context;
    if (history.size() <= 1) {
      context = t.constant(Mat::Zero(1, cfg.d_g));
    } else {
      std::vector<Var> past(history.begin(), history.end() - 1);
      Var g_stack = t.stack_rows(past);                       // m x d_g
      Var scores = t.matmul(t.matmul(feat, att_w),            // 1 x d_g
                            t.transpose(g_stack));            // 1 x m
      Var weights = t.softmax_rows(scores);
      context = t.matmul(weights, g_stack);  // 1 x d_g
    }

    party[sp] = gru_cell(t, t.concat_cols(feat, context), party[sp],
                         party_cell);
    if (cfg.listener_update) {
      for (auto& [other, state] : party)
        if (other != sp)
          state = gru_cell(t, t.concat_cols(feat, context), state,
                           listener_cell);
    }
    emotion = gru_cell(t, party[sp], emotion, emotion_cell);
    out[static_cast<size_t>(idx)] = emotion;
  }
  return out;
}

}  // namespace

ModelForward classify_dialogue(Tape& t, ParamSet& ps, const ModelConfig& cfg,
                               const std::vector<Var>& features,
                               const std::vector<SpeakerId>& speakers) {
  if (features.empty())
    throw ShapeError("classify_dialogue: empty feature list");
  ModelForward out;
  const size_t n = features.size();

  std::vector<Var> states(n);
  switch (cfg.classifier) {
    case Classifier::logreg: {
      Var w1 = t.param(ps.at("logreg.w1"));
      Var b1 = t.param(ps.at("logreg.b1"));
      for (size_t i = 0; i < n; ++i)
        states[i] = t.relu_(t.add(t.matmul(features[i], w1), b1));
      break;
    }
    case Classifier::clstm:
      states = lstm_run(t, ps, "clstm.fw", features, cfg.d_h, false);
      break;
    case Classifier::bclstm: {
      auto fw = lstm_run(t, ps, "bclstm.fw", features, cfg.d_h, false);
      auto bw = lstm_run(t, ps, "bclstm.bw", features, cfg.d_h, true);
      for (size_t i = 0; i < n; ++i)
        states[i] = t.concat_cols(fw[i], bw[i]);
      break;
    }
    case Classifier::dialoguernn: {
      auto fw = dialoguernn_run(t, ps, cfg, features, speakers, false);
      auto bw = dialoguernn_run(t, ps, cfg, features, speakers, true);
      for (size_t i = 0; i < n; ++i)
        states[i] = t.concat_cols(fw[i], bw[i]);
      break;
    }
  }

  out.logits.resize(n);
  out.states.resize(n);
  for (size_t i = 0; i < n; ++i) {
    Var s = cfg.classifier == Classifier::logreg
                ? states[i]
                : residual_state(t, ps, cfg, states[i], features[i]);
    out.states[i] = s;
    out.logits[i] = head(t, ps, s);
  }
  return out;
}

std::vector<Var> order_head_forward(Tape& t, ParamSet& ps,
                                    const ModelConfig& cfg,
                                    const std::vector<Var>& states) {
  Var w = t.param(ps.at("order.w"));
  Var b = t.param(ps.at("order.b"));
  std::vector<Var> out;
  out.reserve(states.size());
  for (Var s : states) out.push_back(t.add(t.matmul(s, w), b));
  return out;
}

std::map<std::string, Mat> load_feature_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file: " + path);
  std::map<std::string, Mat> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("feature file line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    std::string id = j.at("dialogue_id").get<std::string>();
    const auto& rows = j.at("features");
    if (rows.empty())
      throw std::runtime_error("feature file line " + std::to_string(line_no) +
                               ": empty feature list");
    Mat m(rows.size(), rows[0].size());
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size())
        throw std::runtime_error("feature file line " +
                                 std::to_string(line_no) +
                                 ": ragged feature vectors");
      for (size_t k = 0; k < rows[i].size(); ++k)
        m(static_cast<long>(i), static_cast<long>(k)) =
            rows[i][k].get<double>();
    }
    out[id] = std::move(m);
  }
  return out;
}

}  // namespace dctx
