#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dctx {

using LabelId = int;
using SpeakerId = std::string;

enum class Split { train, val, test };
const char* split_name(Split s);
std::optional<Split> parse_split(const std::string& s);

enum class Sentiment { positive, negative, neutral };
const char* sentiment_name(Sentiment s);
std::optional<Sentiment> parse_sentiment(const std::string& s);

struct Utterance {
  std::string text;
  SpeakerId speaker;
  std::optional<LabelId> label;
  bool eval_mask = false;
};

struct Dialogue {
  std::string id;
  std::vector<Utterance> utterances;
};

/// Immutable after load; safe to share read-only across workers.
struct Corpus {
  std::string task_name;
  std::vector<std::string> label_set;  // LabelId is the index into this
  std::map<Split, std::vector<Dialogue>> splits;
  std::optional<std::map<LabelId, Sentiment>> sentiment_groups;

  int n_labels() const { return static_cast<int>(label_set.size()); }
  const std::vector<Dialogue>& split(Split s) const;
  std::optional<LabelId> label_id(const std::string& name) const;
};

struct CorpusError : std::runtime_error {
  explicit CorpusError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Violation {
  std::string dialogue_id;  // empty for corpus-level problems
  int utterance_index = -1;
  std::string message;
};

/// Reads the JSONL corpus format: header line with {task, labels,
/// sentiment_groups?}, then one dialogue object per line. Labels are interned
/// in declared label_set order. Throws CorpusError with the offending line
/// number on malformed input.
Corpus load_corpus(const std::string& path);
void write_corpus(const Corpus& c, const std::string& path);

std::vector<Violation> validate(const Corpus& c);

/// Two-speaker synthetic dialogues (speakers hold the floor for short runs)
/// with a first-order label chain:
/// label_t repeats label_{t-1} with probability copy_prob, else is uniform
/// over the other labels. Each utterance's text contains a token revealing its
/// own label with probability text_informativeness, otherwise neutral filler.
/// Emits n_dialogues train dialogues plus max(1, n/5) val and test dialogues.
/// Pure function of its arguments.
Corpus synth_copy_corpus(int n_dialogues, std::pair<int, int> len_range,
                         int n_labels, double copy_prob,
                         double text_informativeness, uint64_t seed);

}  // namespace dctx
