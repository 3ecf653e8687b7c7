#pragma once

#include "dctx/autodiff.hpp"
#include "dctx/corpus.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace dctx {

/// Lowercases, splits punctuation into separate tokens, whitespace-delimits.
/// Clitics like 'm / 're / n't stay attached to the apostrophe token.
std::vector<std::string> tokenize(const std::string& text);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kOov = 1;

  Vocab();
  explicit Vocab(const std::vector<std::string>& tokens);  // non-special only

  int add(const std::string& token);
  int lookup(const std::string& token) const;  // kOov when absent
  int size() const { return static_cast<int>(index_to_token_.size()); }
  const std::string& token(int idx) const { return index_to_token_.at(
      static_cast<size_t>(idx)); }
  const std::vector<std::string>& tokens() const { return index_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_index_;
  std::vector<std::string> index_to_token_;
};

/// Vocabulary over train-split tokens with frequency >= min_freq.
Vocab build_vocab(const Corpus& c, int min_freq);

struct EmbeddingTable {
  int dim = 300;
  Mat matrix;  // |vocab| x dim
  bool trainable = false;
};

/// Reads GloVe-layout text ("token v1 ... v_dim" per line). Tokens missing
/// from the file (and OOV) get uniform [-0.05, 0.05] rows from seed; PAD row
/// is zero. Empty path initializes every non-PAD row randomly.
EmbeddingTable load_embeddings(const std::string& path, const Vocab& vocab,
                               int dim, uint64_t seed);

struct EmbeddedUtterance {
  Mat matrix;  // max_len x dim, PAD rows zero
  int length = 0;
};

EmbeddedUtterance embed_utterance(const std::vector<std::string>& tokens,
                                  const Vocab& v, const EmbeddingTable& e,
                                  int max_len);

/// Token ids with the same truncation policy as embed_utterance.
std::vector<int> token_ids(const std::vector<std::string>& tokens,
                           const Vocab& v, int max_len);

}  // namespace dctx
