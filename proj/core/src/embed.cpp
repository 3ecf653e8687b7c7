#include "dctx/embed.hpp"

#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

namespace dctx {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (size_t i = 0; i < text.size(); ++i) {
    unsigned char ch = static_cast<unsigned char>(text[i]);
    if (std::isspace(ch)) {
      flush();
    } else if (std::isalnum(ch)) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (ch == '\'') {
      // clitic: "'m", "'re" stay one token
      flush();
      cur.push_back('\'');
      while (i + 1 < text.size() &&
             std::isalpha(static_cast<unsigned char>(text[i + 1]))) {
        ++i;
        cur.push_back(static_cast<char>(
            std::tolower(static_cast<unsigned char>(text[i]))));
      }
      flush();
    } else {
      flush();
      out.push_back(std::string(1, static_cast<char>(ch)));
    }
  }
  flush();
  return out;
}

Vocab::Vocab() {
  index_to_token_ = {"<pad>", "<oov>"};
  token_to_index_ = {{"<pad>", kPad}, {"<oov>", kOov}};
}

Vocab::Vocab(const std::vector<std::string>& tokens) : Vocab() {
  for (const auto& t : tokens) add(t);
}

int Vocab::add(const std::string& token) {
  auto it = token_to_index_.find(token);
  if (it != token_to_index_.end()) return it->second;
  int idx = size();
  token_to_index_[token] = idx;
  index_to_token_.push_back(token);
  return idx;
}

int Vocab::lookup(const std::string& token) const {
  auto it = token_to_index_.find(token);
  return it == token_to_index_.end() ? kOov : it->second;
}

Vocab build_vocab(const Corpus& c, int min_freq) {
  if (min_freq < 1) throw std::invalid_argument("build_vocab: min_freq >= 1");
  const auto& train = c.split(Split::train);
  if (train.empty()) throw CorpusError("build_vocab: empty train split");
  // Ordered by first appearance so vocab ids are reproducible.
  std::vector<std::string> order;
  std::unordered_map<std::string, int> freq;
  for (const Dialogue& d : train)
    for (const Utterance& u : d.utterances)
      for (const std::string& t : tokenize(u.text)) {
        if (freq.find(t) == freq.end()) order.push_back(t);
        ++freq[t];
      }
  Vocab v;
  for (const std::string& t : order)
    if (freq[t] >= min_freq) v.add(t);
  return v;
}

EmbeddingTable load_embeddings(const std::string& path, const Vocab& vocab,
                               int dim, uint64_t seed) {
  EmbeddingTable table;
  table.dim = dim;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  table.matrix = Mat(vocab.size(), dim);
  // Random rows drawn in vocab order so the result is seed-deterministic.
  for (int i = 0; i < vocab.size(); ++i)
    for (int j = 0; j < dim; ++j) table.matrix(i, j) = u(rng);
  table.matrix.row(Vocab::kPad).setZero();

  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string token;
      ss >> token;
      int idx = vocab.lookup(token);
      std::vector<double> vals;
      double x;
      while (ss >> x) vals.push_back(x);
      if (static_cast<int>(vals.size()) != dim) {
        std::ostringstream os;
        os << "embedding file " << path << " line " << line_no << ": expected "
           << dim << " values, got " << vals.size();
        throw std::runtime_error(os.str());
      }
      if (idx != Vocab::kOov && idx != Vocab::kPad)
        for (int j = 0; j < dim; ++j) table.matrix(idx, j) = vals[
            static_cast<size_t>(j)];
    }
  }
  return table;
}

std::vector<int> token_ids(const std::vector<std::string>& tokens,
                           const Vocab& v, int max_len) {
  if (max_len < 1) throw std::invalid_argument("token_ids: max_len >= 1");
  std::vector<int> ids;
  for (const std::string& t : tokens) {
    if (static_cast<int>(ids.size()) >= max_len) break;
    ids.push_back(v.lookup(t));
  }
  return ids;
}

EmbeddedUtterance embed_utterance(const std::vector<std::string>& tokens,
                                  const Vocab& v, const EmbeddingTable& e,
                                  int max_len) {
  std::vector<int> ids = token_ids(tokens, v, max_len);
  EmbeddedUtterance out;
  out.length = static_cast<int>(ids.size());
  out.matrix = Mat::Zero(max_len, e.dim);
  for (size_t i = 0; i < ids.size(); ++i)
    out.matrix.row(static_cast<long>(i)) = e.matrix.row(ids[i]);
  return out;
}

}  // namespace dctx
