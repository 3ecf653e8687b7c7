#include "dctx/perturb.hpp"

#include "dctx/embed.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

namespace dctx {

namespace {

/// Bounded draw independent of stdlib distribution internals.
uint64_t draw(std::mt19937_64& rng, uint64_t n) { return rng() % n; }

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream ss(text);
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += " ";
    out += words[i];
  }
  return out;
}

/// Picks k distinct elements of idx, order-independent of container details.
std::vector<size_t> sample_distinct(std::vector<size_t> idx, size_t k,
                                    std::mt19937_64& rng) {
  for (size_t i = 0; i + 1 < idx.size(); ++i) {
    size_t j = i + static_cast<size_t>(draw(rng, idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(std::min(k, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::optional<WindowSide> parse_window_side(const std::string& s) {
  auto num_after = [&](size_t pos) -> std::optional<int> {
    try {
      return std::stoi(s.substr(pos));
    } catch (...) {
      return std::nullopt;
    }
  };
  if (s == "keepall" || s == "--") return WindowSide{WindowRule::keep_all, 0};
  if (s == "dropall" || s == "-all" || s == "-ALL")
    return WindowSide{WindowRule::drop_all, 0};
  if (s.rfind("dropnearest:", 0) == 0) {
    auto k = num_after(12);
    if (k && *k >= 1) return WindowSide{WindowRule::drop_nearest, *k};
    return std::nullopt;
  }
  if (s.rfind("keepnearest:", 0) == 0) {
    auto k = num_after(12);
    if (k && *k >= 1) return WindowSide{WindowRule::keep_nearest, *k};
    return std::nullopt;
  }
  if (!s.empty() && s[0] == '-') {
    auto k = num_after(1);
    if (k && *k >= 1) return WindowSide{WindowRule::drop_nearest, *k};
  }
  if (!s.empty() && s[0] == '+') {
    auto k = num_after(1);
    if (k && *k >= 1) return WindowSide{WindowRule::keep_nearest, *k};
  }
  return std::nullopt;
}

std::string window_side_name(const WindowSide& w) {
  switch (w.rule) {
    case WindowRule::keep_all: return "keepall";
    case WindowRule::drop_all: return "dropall";
    case WindowRule::drop_nearest:
      return "dropnearest:" + std::to_string(w.k);
    case WindowRule::keep_nearest:
      return "keepnearest:" + std::to_string(w.k);
  }
  return "?";
}

LexiconProvider::LexiconProvider(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("lexicon line missing tab: " + line);
    mapping_[line.substr(0, tab)] = line.substr(tab + 1);
  }
}

std::optional<std::string> LexiconProvider::substitute(
    const std::string& token, const std::string&) const {
  auto it = mapping_.find(token);
  if (it == mapping_.end()) return std::nullopt;
  return it->second;
}

LexiconFlipper::LexiconFlipper(std::map<std::string, std::string> mapping) {
  for (const auto& [a, b] : mapping) {
    mapping_[a] = b;
    if (!mapping_.count(b)) mapping_[b] = a;
  }
}

LexiconFlipper::LexiconFlipper(const std::string& path)
    : LexiconFlipper([&path] {
        std::map<std::string, std::string> m;
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open lexicon file: " + path);
        std::string line;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          size_t tab = line.find('\t');
          if (tab == std::string::npos)
            throw std::runtime_error("lexicon line missing tab: " + line);
          m[line.substr(0, tab)] = line.substr(tab + 1);
        }
        return m;
      }()) {}

std::string LexiconFlipper::flip(const std::string& text,
                                 Sentiment source) const {
  if (source == Sentiment::neutral) return text;
  std::vector<std::string> words = split_words(text);
  for (auto& w : words) {
    std::string lower = w;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    auto it = mapping_.find(lower);
    if (it != mapping_.end()) w = it->second;
  }
  return join_words(words);
}

ShuffleResult shuffle_with_permutation(const Dialogue& d,
                                       const std::vector<int>& perm) {
  if (perm.size() != d.utterances.size())
    throw std::invalid_argument("shuffle: permutation size mismatch");
  ShuffleResult res;
  res.dialogue.id = d.id;
  for (size_t j = 0; j < perm.size(); ++j) {
    res.dialogue.utterances.push_back(
        d.utterances[static_cast<size_t>(perm[j])]);
    res.order.push_back(perm[j] + 1);
  }
  return res;
}

ShuffleResult shuffle_dialogue(const Dialogue& d, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> perm(d.utterances.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  for (size_t i = 0; i + 1 < perm.size(); ++i) {
    size_t j = i + static_cast<size_t>(draw(rng, perm.size() - i));
    std::swap(perm[i], perm[j]);
  }
  return shuffle_with_permutation(d, perm);
}

std::vector<int> apply_window(const Dialogue& d, int t,
                              const ContextWindowSpec& spec) {
  const int n = static_cast<int>(d.utterances.size());
  if (t < 1 || t > n) throw std::out_of_range("apply_window: t out of range");
  auto side_visible = [&](const WindowSide& w, bool is_past, int i) {
    int dist = is_past ? t - i : i - t;  // >= 1
    switch (w.rule) {
      case WindowRule::keep_all: return true;
      case WindowRule::drop_all: return false;
      case WindowRule::drop_nearest: return dist > w.k;
      case WindowRule::keep_nearest: return dist <= w.k;
    }
    return true;
  };
  std::vector<int> out;
  for (int i = 1; i <= n; ++i) {
    if (i == t) {
      out.push_back(i);
    } else if (i < t) {
      if (side_visible(spec.past, true, i)) out.push_back(i);
    } else {
      if (side_visible(spec.future, false, i)) out.push_back(i);
    }
  }
  return out;
}

std::vector<int> speaker_filter(const Dialogue& d, int t, SpeakerMode mode) {
  const int n = static_cast<int>(d.utterances.size());
  if (t < 1 || t > n) throw std::out_of_range("speaker_filter: t out of range");
  const SpeakerId& target_sp = d.utterances[static_cast<size_t>(t - 1)].speaker;
  std::vector<int> out;
  for (int i = 1; i <= n; ++i) {
    if (i == t) {
      out.push_back(i);
      continue;
    }
    bool same = d.utterances[static_cast<size_t>(i - 1)].speaker == target_sp;
    bool keep = mode == SpeakerMode::wo_inter ? same : !same;
    if (keep) out.push_back(i);
  }
  return out;
}

namespace {

std::string edit_word(const std::string& w, std::mt19937_64& rng) {
  std::string out = w;
  switch (draw(rng, 3)) {
    case 0: {  // adjacent swap
      size_t p = static_cast<size_t>(draw(rng, out.size() - 1));
      std::swap(out[p], out[p + 1]);
      break;
    }
    case 1: {  // delete
      size_t p = static_cast<size_t>(draw(rng, out.size()));
      out.erase(p, 1);
      break;
    }
    default: {  // duplicate
      size_t p = static_cast<size_t>(draw(rng, out.size()));
      out.insert(p, 1, out[p]);
      break;
    }
  }
  return out;
}

std::vector<size_t> long_word_indices(const std::vector<std::string>& words) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < words.size(); ++i)
    if (words[i].size() >= 3) idx.push_back(i);
  return idx;
}

}  // namespace

Utterance spelling_attack(const Utterance& u, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> words = split_words(u.text);
  std::vector<size_t> eligible = long_word_indices(words);
  if (eligible.empty()) return u;
  size_t k = 3 + static_cast<size_t>(draw(rng, 2));
  for (size_t i : sample_distinct(eligible, k, rng))
    words[i] = edit_word(words[i], rng);
  Utterance out = u;
  out.text = join_words(words);
  return out;
}

Utterance word_substitution_attack(const Utterance& u,
                                   const WordSubstitutionProvider& provider,
                                   uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> words = split_words(u.text);
  std::vector<size_t> eligible = long_word_indices(words);
  if (eligible.empty()) return u;
  size_t k = 3 + static_cast<size_t>(draw(rng, 2));
  for (size_t i : sample_distinct(eligible, k, rng)) {
    auto repl = provider.substitute(words[i], u.text);
    if (repl) words[i] = *repl;
  }
  Utterance out = u;
  out.text = join_words(words);
  return out;
}

uint64_t mix_seed(uint64_t seed, const std::string& dialogue_id, int target) {
  // FNV-1a over the id, then splitmix-style finalize with seed and target.
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : dialogue_id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  uint64_t x = h ^ (seed * 0x9e3779b97f4a7c15ull) ^
               (static_cast<uint64_t>(static_cast<int64_t>(target)) + 0x632be59bd9b4e019ull);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

namespace {

std::vector<int> window_positions(int t, int n, int w, bool past, bool future) {
  // 0-based target t, 0-based result.
  std::vector<int> out;
  if (past)
    for (int i = std::max(0, t - w); i < t; ++i) out.push_back(i);
  if (future)
    for (int i = t + 1; i <= std::min(n - 1, t + w); ++i) out.push_back(i);
  return out;
}

std::vector<int> all_indices(int n) {
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = i;
  return out;
}

}  // namespace

std::vector<ContextView> flip_context_views(
    const Corpus& corpus, const Dialogue& d, const PerturbationSpec& spec,
    const SentimentFlipper& flipper) {
  if (!corpus.sentiment_groups)
    throw CorpusError("style flip requires sentiment_groups in the corpus");
  const int n = static_cast<int>(d.utterances.size());
  std::vector<ContextView> views;
  for (int t = 0; t < n; ++t) {
    if (!d.utterances[static_cast<size_t>(t)].eval_mask) continue;
    ContextView v;
    v.dialogue_id = d.id;
    v.target_index = t;
    v.visible = all_indices(n);
    for (int i : window_positions(t, n, spec.w, spec.past, spec.future)) {
      const Utterance& u = d.utterances[static_cast<size_t>(i)];
      if (!u.label) continue;
      Sentiment s = corpus.sentiment_groups->at(*u.label);
      if (s == Sentiment::neutral) continue;
      std::string flipped = flipper.flip(u.text, s);
      if (flipped != u.text) v.text_override[i] = flipped;
    }
    views.push_back(std::move(v));
  }
  return views;
}

std::vector<ContextView> lca_views(const Corpus& corpus,
                                   const std::vector<Dialogue>& test_split,
                                   const Dialogue& d,
                                   const PerturbationSpec& spec) {
  // Donor pool: labeled utterances from other test dialogues, by label.
  std::map<LabelId, std::vector<const Utterance*>> donors;
  for (const Dialogue& other : test_split) {
    if (other.id == d.id) continue;
    for (const Utterance& u : other.utterances)
      if (u.label) donors[*u.label].push_back(&u);
  }
  int total_donors = 0;
  for (auto& [l, v] : donors) total_donors += static_cast<int>(v.size());

  const int n = static_cast<int>(d.utterances.size());
  std::vector<ContextView> views;
  for (int t = 0; t < n; ++t) {
    if (!d.utterances[static_cast<size_t>(t)].eval_mask) continue;
    std::mt19937_64 rng(mix_seed(spec.seed, d.id, t));
    ContextView v;
    v.dialogue_id = d.id;
    v.target_index = t;
    v.visible = all_indices(n);
    for (int i : window_positions(t, n, spec.w, spec.past, spec.future)) {
      const Utterance& u = d.utterances[static_cast<size_t>(i)];
      if (!u.label) continue;
      const Utterance* donor = nullptr;
      if (spec.lca_constraint == LcaConstraint::same_label) {
        auto it = donors.find(*u.label);
        if (it == donors.end() || it->second.empty())
          throw CorpusError("lca: no same-label donor for label " +
                            corpus.label_set[static_cast<size_t>(*u.label)]);
        donor = it->second[draw(rng, it->second.size())];
      } else {
        int eligible = total_donors -
                       (donors.count(*u.label)
                            ? static_cast<int>(donors[*u.label].size())
                            : 0);
        if (eligible <= 0)
          throw CorpusError("lca: no different-label donor for label " +
                            corpus.label_set[static_cast<size_t>(*u.label)]);
        uint64_t pick = draw(rng, static_cast<uint64_t>(eligible));
        for (auto& [l, pool] : donors) {
          if (l == *u.label) continue;
          if (pick < pool.size()) {
            donor = pool[pick];
            break;
          }
          pick -= pool.size();
        }
      }
      if (spec.lca_strategy == LcaStrategy::concat) {
        v.text_override[i] = u.text + " " + donor->text;
      } else {
        v.text_override[i] = donor->text;
        v.label_override[i] = *donor->label;
      }
    }
    views.push_back(std::move(v));
  }
  return views;
}

Plan plan_expand(const PerturbationSpec& spec, const Corpus& corpus,
                 Split split, const WordSubstitutionProvider* provider,
                 const SentimentFlipper* flipper) {
  Plan plan;
  const auto& dialogues = corpus.split(split);

  std::unique_ptr<LexiconProvider> owned_provider;
  std::unique_ptr<LexiconFlipper> owned_flipper;
  if (spec.kind == PerturbKind::word_substitution && provider == nullptr) {
    if (spec.lexicon_path.empty())
      throw std::invalid_argument(
          "word_substitution needs a provider or lexicon_path");
    owned_provider = std::make_unique<LexiconProvider>(spec.lexicon_path);
    provider = owned_provider.get();
  }
  if (spec.kind == PerturbKind::style_flip && flipper == nullptr) {
    if (spec.lexicon_path.empty())
      throw std::invalid_argument("style_flip needs a flipper or lexicon_path");
    owned_flipper = std::make_unique<LexiconFlipper>(spec.lexicon_path);
    flipper = owned_flipper.get();
  }

  for (const Dialogue& d : dialogues) {
    const int n = static_cast<int>(d.utterances.size());
    switch (spec.kind) {
      case PerturbKind::none:
      case PerturbKind::drop:
      case PerturbKind::speaker_filter: {
        for (int t = 0; t < n; ++t) {
          if (!d.utterances[static_cast<size_t>(t)].eval_mask) continue;
          ContextView v;
          v.dialogue_id = d.id;
          v.target_index = t;
          if (spec.kind == PerturbKind::drop) {
            for (int i : apply_window(d, t + 1, spec.window))
              v.visible.push_back(i - 1);
          } else if (spec.kind == PerturbKind::speaker_filter) {
            for (int i : speaker_filter(d, t + 1, spec.speaker_mode))
              v.visible.push_back(i - 1);
          } else {
            v.visible = all_indices(n);
          }
          plan.views.push_back(std::move(v));
        }
        break;
      }
      case PerturbKind::shuffle: {
        ShuffleResult sh = shuffle_dialogue(d, mix_seed(spec.seed, d.id, -1));
        std::vector<int> visible;
        for (int o : sh.order) visible.push_back(o - 1);
        for (int t = 0; t < n; ++t) {
          if (!d.utterances[static_cast<size_t>(t)].eval_mask) continue;
          ContextView v;
          v.dialogue_id = d.id;
          v.target_index = t;
          v.visible = visible;
          v.order_targets = sh.order;
          plan.views.push_back(std::move(v));
        }
        break;
      }
      case PerturbKind::spelling_attack:
      case PerturbKind::word_substitution: {
        for (int t = 0; t < n; ++t) {
          if (!d.utterances[static_cast<size_t>(t)].eval_mask) continue;
          ContextView v;
          v.dialogue_id = d.id;
          v.target_index = t;
          v.visible = all_indices(n);
          std::vector<int> attacked =
              window_positions(t, n, spec.w, spec.past, spec.future);
          if (spec.target) attacked.push_back(t);
          for (int i : attacked) {
            const Utterance& u = d.utterances[static_cast<size_t>(i)];
            uint64_t s = mix_seed(spec.seed, d.id, t * 10000 + i);
            Utterance mod = spec.kind == PerturbKind::spelling_attack
                                ? spelling_attack(u, s)
                                : word_substitution_attack(u, *provider, s);
            if (mod.text != u.text) v.text_override[i] = mod.text;
          }
          plan.views.push_back(std::move(v));
        }
        break;
      }
      case PerturbKind::style_flip: {
        auto views = flip_context_views(corpus, d, spec, *flipper);
        for (auto& v : views) plan.views.push_back(std::move(v));
        break;
      }
      case PerturbKind::lca: {
        auto views = lca_views(corpus, dialogues, d, spec);
        for (auto& v : views) plan.views.push_back(std::move(v));
        break;
      }
    }
  }
  return plan;
}

void write_plan_jsonl(const Plan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const ContextView& v : plan.views) {
    nlohmann::json j;
    j["dialogue_id"] = v.dialogue_id;
    j["target_index"] = v.target_index;
    j["visible"] = v.visible;
    if (!v.text_override.empty()) {
      nlohmann::json o;
      for (const auto& [i, text] : v.text_override)
        o[std::to_string(i)] = text;
      j["text_override"] = o;
    }
    if (!v.label_override.empty()) {
      nlohmann::json o;
      for (const auto& [i, l] : v.label_override) o[std::to_string(i)] = l;
      j["label_override"] = o;
    }
    if (!v.order_targets.empty()) j["order_targets"] = v.order_targets;
    out << j.dump() << "\n";
  }
}

}  // namespace dctx
