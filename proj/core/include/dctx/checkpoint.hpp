#pragma once

#include "dctx/embed.hpp"
#include "dctx/models.hpp"
#include "dctx/optim.hpp"

#include <memory>
#include <string>
#include <vector>

namespace dctx {

enum class CrfKind { none, global, global_ext, speaker };
const char* crf_kind_name(CrfKind k);
std::optional<CrfKind> parse_crf_kind(const std::string& s);

/// Everything needed to re-run inference: model shape, trained tensors, the
/// vocabulary and (frozen) embedding table, and the label set the model was
/// fit against.
struct Checkpoint {
  ModelConfig model;
  CrfKind crf = CrfKind::none;
  std::vector<std::string> label_set;
  std::vector<std::string> vocab_tokens;  // non-special, insertion order
  Mat embedding;                          // |vocab| x embed_dim
  std::unique_ptr<ParamSet> params;

  Checkpoint() : params(std::make_unique<ParamSet>()) {}
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dctx
