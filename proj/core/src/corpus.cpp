#include "dctx/corpus.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <sstream>

namespace dctx {

using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val" || s == "valid" || s == "validation") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

const char* sentiment_name(Sentiment s) {
  switch (s) {
    case Sentiment::positive: return "positive";
    case Sentiment::negative: return "negative";
    case Sentiment::neutral: return "neutral";
  }
  return "?";
}

std::optional<Sentiment> parse_sentiment(const std::string& s) {
  if (s == "positive") return Sentiment::positive;
  if (s == "negative") return Sentiment::negative;
  if (s == "neutral") return Sentiment::neutral;
  return std::nullopt;
}

const std::vector<Dialogue>& Corpus::split(Split s) const {
  static const std::vector<Dialogue> empty;
  auto it = splits.find(s);
  return it == splits.end() ? empty : it->second;
}

std::optional<LabelId> Corpus::label_id(const std::string& name) const {
  for (size_t i = 0; i < label_set.size(); ++i)
    if (label_set[i] == name) return static_cast<LabelId>(i);
  return std::nullopt;
}

namespace {

[[noreturn]] void fail_line(int line_no, const std::string& msg) {
  std::ostringstream os;
  os << "line " << line_no << ": " << msg;
  throw CorpusError(os.str());
}

std::string trimmed(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path);

  Corpus c;
  std::string line;
  int line_no = 0;

  // Header.
  if (!std::getline(in, line)) throw CorpusError("empty corpus file: " + path);
  ++line_no;
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    fail_line(line_no, std::string("malformed header: ") + e.what());
  }
  if (!header.contains("task") || !header["task"].is_string())
    fail_line(line_no, "header missing string field \"task\"");
  if (!header.contains("labels") || !header["labels"].is_array())
    fail_line(line_no, "header missing array field \"labels\"");
  c.task_name = header["task"].get<std::string>();
  for (const auto& l : header["labels"]) {
    if (!l.is_string()) fail_line(line_no, "label names must be strings");
    c.label_set.push_back(l.get<std::string>());
  }
  if (header.contains("sentiment_groups")) {
    std::map<LabelId, Sentiment> groups;
    for (auto& [label, group] : header["sentiment_groups"].items()) {
      auto id = c.label_id(label);
      if (!id) fail_line(line_no, "sentiment_groups has unknown label: " + label);
      auto s = parse_sentiment(group.get<std::string>());
      if (!s)
        fail_line(line_no, "unknown sentiment group: " +
                               group.get<std::string>());
      groups[*id] = *s;
    }
    c.sentiment_groups = std::move(groups);
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (trimmed(line).empty()) continue;
    json d;
    try {
      d = json::parse(line);
    } catch (const json::exception& e) {
      fail_line(line_no, std::string("malformed dialogue: ") + e.what());
    }
    if (!d.contains("dialogue_id") || !d["dialogue_id"].is_string())
      fail_line(line_no, "dialogue missing \"dialogue_id\"");
    if (!d.contains("split") || !d["split"].is_string())
      fail_line(line_no, "dialogue missing \"split\"");
    auto sp = parse_split(d["split"].get<std::string>());
    if (!sp)
      fail_line(line_no, "unknown split: " + d["split"].get<std::string>());
    if (!d.contains("utterances") || !d["utterances"].is_array() ||
        d["utterances"].empty())
      fail_line(line_no, "dialogue \"" + d["dialogue_id"].get<std::string>() +
                             "\" has no utterances");

    Dialogue dlg;
    dlg.id = d["dialogue_id"].get<std::string>();
    for (const auto& ju : d["utterances"]) {
      Utterance u;
      if (!ju.contains("text") || !ju["text"].is_string())
        fail_line(line_no, "utterance missing \"text\"");
      if (!ju.contains("speaker") || !ju["speaker"].is_string())
        fail_line(line_no, "utterance missing \"speaker\"");
      u.text = ju["text"].get<std::string>();
      u.speaker = ju["speaker"].get<std::string>();
      if (ju.contains("label") && !ju["label"].is_null()) {
        std::string name = ju["label"].get<std::string>();
        auto id = c.label_id(name);
        if (!id) fail_line(line_no, "unknown label: " + name);
        u.label = *id;
      }
      u.eval_mask = ju.contains("eval_mask") ? ju["eval_mask"].get<bool>()
                                             : u.label.has_value();
      dlg.utterances.push_back(std::move(u));
    }
    c.splits[*sp].push_back(std::move(dlg));
  }
  return c;
}

void write_corpus(const Corpus& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot open for writing: " + path);
  json header;
  header["task"] = c.task_name;
  header["labels"] = c.label_set;
  if (c.sentiment_groups) {
    json groups;
    for (const auto& [id, s] : *c.sentiment_groups)
      groups[c.label_set[static_cast<size_t>(id)]] = sentiment_name(s);
    header["sentiment_groups"] = groups;
  }
  out << header.dump() << "\n";
  for (Split sp : {Split::train, Split::val, Split::test}) {
    for (const Dialogue& d : c.split(sp)) {
      json jd;
      jd["dialogue_id"] = d.id;
      jd["split"] = split_name(sp);
      json arr = json::array();
      for (const Utterance& u : d.utterances) {
        json ju;
        ju["text"] = u.text;
        ju["speaker"] = u.speaker;
        if (u.label) ju["label"] = c.label_set[static_cast<size_t>(*u.label)];
        ju["eval_mask"] = u.eval_mask;
        arr.push_back(std::move(ju));
      }
      jd["utterances"] = std::move(arr);
      out << jd.dump() << "\n";
    }
  }
}

std::vector<Violation> validate(const Corpus& c) {
  std::vector<Violation> out;
  std::map<std::string, int> id_counts;
  for (Split sp : {Split::train, Split::val, Split::test}) {
    for (const Dialogue& d : c.split(sp)) {
      ++id_counts[d.id];
      if (d.utterances.empty()) {
        out.push_back({d.id, -1, "dialogue has no utterances"});
        continue;
      }
      bool any_eval = false;
      for (size_t i = 0; i < d.utterances.size(); ++i) {
        const Utterance& u = d.utterances[i];
        int idx = static_cast<int>(i);
        if (trimmed(u.text).empty())
          out.push_back({d.id, idx, "utterance text empty after trimming"});
        if (u.eval_mask && !u.label)
          out.push_back({d.id, idx, "eval_mask set but label absent"});
        if (u.label && (*u.label < 0 || *u.label >= c.n_labels()))
          out.push_back({d.id, idx, "label not in label_set"});
        any_eval = any_eval || u.eval_mask;
      }
      if (!any_eval)
        out.push_back({d.id, -1, "no utterance with eval_mask=true"});
    }
  }
  for (const auto& [id, n] : id_counts)
    if (n > 1) out.push_back({id, -1, "dialogue id appears in multiple splits"});
  if (c.sentiment_groups) {
    for (LabelId l = 0; l < c.n_labels(); ++l)
      if (!c.sentiment_groups->count(l))
        out.push_back({"", -1, "sentiment_groups missing label " +
                                   c.label_set[static_cast<size_t>(l)]});
  }
  return out;
}

namespace {

const char* kFillers[] = {"well", "okay",  "right", "so",    "hmm",
                          "yeah", "sure",  "anyway", "maybe", "really"};
constexpr int kNumFillers = 10;

Dialogue synth_dialogue(const std::string& id, std::pair<int, int> len_range,
                        int n_labels, double copy_prob,
                        double text_informativeness, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len_d(len_range.first, len_range.second);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int n = len_d(rng);
  Dialogue d;
  d.id = id;
  int prev = -1;
  bool speaker_a = true;
  for (int t = 0; t < n; ++t) {
    int label;
    if (prev >= 0 && u(rng) < copy_prob) {
      label = prev;
    } else if (prev < 0) {
      label = static_cast<int>(rng() % static_cast<uint64_t>(n_labels));
    } else {
      // uniform over the other labels
      int r = static_cast<int>(rng() % static_cast<uint64_t>(n_labels - 1));
      label = r < prev ? r : r + 1;
    }
    prev = label;

    int n_words = 3 + static_cast<int>(rng() % 3);
    std::vector<std::string> words;
    for (int w = 0; w < n_words; ++w)
      words.push_back(kFillers[rng() % kNumFillers]);
    if (u(rng) < text_informativeness) {
      size_t pos = rng() % (words.size() + 1);
      words.insert(words.begin() + static_cast<long>(pos),
                   "cue" + std::to_string(label));
    }
    std::string text;
    for (size_t w = 0; w < words.size(); ++w) {
      if (w) text += " ";
      text += words[w];
    }
    // Speakers hold the floor for short runs so both intra- and
    // inter-speaker adjacent transitions occur.
    if (t > 0 && u(rng) < 0.5) speaker_a = !speaker_a;
    Utterance ut;
    ut.text = text;
    ut.speaker = speaker_a ? "A" : "B";
    ut.label = label;
    ut.eval_mask = true;
    d.utterances.push_back(std::move(ut));
  }
  return d;
}

}  // namespace

Corpus synth_copy_corpus(int n_dialogues, std::pair<int, int> len_range,
                         int n_labels, double copy_prob,
                         double text_informativeness, uint64_t seed) {
  if (n_labels < 2) throw std::invalid_argument("synth: n_labels must be >= 2");
  if (n_dialogues < 1)
    throw std::invalid_argument("synth: n_dialogues must be >= 1");
  if (len_range.first < 1 || len_range.second < len_range.first)
    throw std::invalid_argument("synth: bad len_range");
  if (copy_prob < 0.0 || copy_prob > 1.0 || text_informativeness < 0.0 ||
      text_informativeness > 1.0)
    throw std::invalid_argument("synth: probabilities must be in [0,1]");

  Corpus c;
  c.task_name = "synth_copy";
  for (int l = 0; l < n_labels; ++l)
    c.label_set.push_back("l" + std::to_string(l));
  std::map<LabelId, Sentiment> groups;
  for (int l = 0; l < n_labels; ++l)
    groups[l] = static_cast<Sentiment>(l % 3);
  c.sentiment_groups = std::move(groups);

  std::mt19937_64 rng(seed);
  int n_side = std::max(1, n_dialogues / 5);
  auto gen = [&](Split sp, const char* prefix, int count) {
    for (int i = 0; i < count; ++i)
      c.splits[sp].push_back(
          synth_dialogue(std::string(prefix) + std::to_string(i), len_range,
                         n_labels, copy_prob, text_informativeness, rng));
  };
  gen(Split::train, "train_", n_dialogues);
  gen(Split::val, "val_", n_side);
  gen(Split::test, "test_", n_side);
  return c;
}

}  // namespace dctx
