#include "dctx/checkpoint.hpp"

#include <json.hpp>

#include <fstream>

namespace dctx {

using nlohmann::json;

const char* crf_kind_name(CrfKind k) {
  switch (k) {
    case CrfKind::none: return "none";
    case CrfKind::global: return "global";
    case CrfKind::global_ext: return "global_ext";
    case CrfKind::speaker: return "speaker";
  }
  return "?";
}

std::optional<CrfKind> parse_crf_kind(const std::string& s) {
  if (s == "none") return CrfKind::none;
  if (s == "global") return CrfKind::global;
  if (s == "global_ext") return CrfKind::global_ext;
  if (s == "speaker") return CrfKind::speaker;
  return std::nullopt;
}

namespace {

json mat_to_json(const Mat& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<size_t>(m.size()));
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = std::move(data);
  return j;
}

Mat mat_from_json(const json& j) {
  long rows = j.at("rows").get<long>();
  long cols = j.at("cols").get<long>();
  const auto& data = j.at("data");
  if (static_cast<long>(data.size()) != rows * cols)
    throw std::runtime_error("checkpoint: tensor size mismatch");
  Mat m(rows, cols);
  size_t i = 0;
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = data[i++].get<double>();
  return m;
}

json model_to_json(const ModelConfig& m) {
  json j;
  j["extractor"] = extractor_name(m.extractor);
  j["classifier"] = classifier_name(m.classifier);
  j["residual"] = m.residual;
  j["d_h"] = m.d_h;
  j["d_g"] = m.d_g;
  j["d_p"] = m.d_p;
  j["d_e"] = m.d_e;
  j["cnn_filter_sizes"] = m.cnn_filter_sizes;
  j["cnn_maps_per_size"] = m.cnn_maps_per_size;
  j["cnn_out"] = m.cnn_out;
  j["order_prediction"] = m.order_prediction;
  j["max_dialogue_len"] = m.max_dialogue_len;
  j["max_utt_len"] = m.max_utt_len;
  j["embed_dim"] = m.embed_dim;
  j["precomputed_dim"] = m.precomputed_dim;
  j["listener_update"] = m.listener_update;
  j["dropout"] = m.dropout;
  return j;
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  auto ex = parse_extractor(j.at("extractor").get<std::string>());
  auto cl = parse_classifier(j.at("classifier").get<std::string>());
  if (!ex || !cl) throw std::runtime_error("checkpoint: unknown model kind");
  m.extractor = *ex;
  m.classifier = *cl;
  m.residual = j.at("residual").get<bool>();
  m.d_h = j.at("d_h").get<int>();
  m.d_g = j.at("d_g").get<int>();
  m.d_p = j.at("d_p").get<int>();
  m.d_e = j.at("d_e").get<int>();
  m.cnn_filter_sizes = j.at("cnn_filter_sizes").get<std::vector<int>>();
  m.cnn_maps_per_size = j.at("cnn_maps_per_size").get<int>();
  m.cnn_out = j.at("cnn_out").get<int>();
  m.order_prediction = j.at("order_prediction").get<bool>();
  m.max_dialogue_len = j.at("max_dialogue_len").get<int>();
  m.max_utt_len = j.at("max_utt_len").get<int>();
  m.embed_dim = j.at("embed_dim").get<int>();
  m.precomputed_dim = j.at("precomputed_dim").get<int>();
  m.listener_update = j.at("listener_update").get<bool>();
  m.dropout = j.at("dropout").get<double>();
  return m;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json j;
  j["format"] = "dctx-checkpoint-v1";
  j["model"] = model_to_json(ckpt.model);
  j["crf"] = crf_kind_name(ckpt.crf);
  j["labels"] = ckpt.label_set;
  j["vocab"] = ckpt.vocab_tokens;
  j["embedding"] = mat_to_json(ckpt.embedding);
  json params = json::object();
  for (const auto& [name, p] : ckpt.params->all())
    params[name] = mat_to_json(p->value);
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "dctx-checkpoint-v1")
    throw std::runtime_error("checkpoint: unknown format");
  Checkpoint ckpt;
  ckpt.model = model_from_json(j.at("model"));
  auto crf = parse_crf_kind(j.at("crf").get<std::string>());
  if (!crf) throw std::runtime_error("checkpoint: unknown crf kind");
  ckpt.crf = *crf;
  ckpt.label_set = j.at("labels").get<std::vector<std::string>>();
  ckpt.vocab_tokens = j.at("vocab").get<std::vector<std::string>>();
  ckpt.embedding = mat_from_json(j.at("embedding"));
  for (const auto& [name, jm] : j.at("params").items())
    ckpt.params->add(name, mat_from_json(jm));
  return ckpt;
}

}  // namespace dctx
