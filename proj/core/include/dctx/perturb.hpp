#pragma once

#include "dctx/corpus.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dctx {

enum class WindowRule { keep_all, drop_nearest, drop_all, keep_nearest };

struct WindowSide {
  WindowRule rule = WindowRule::keep_all;
  int k = 5;  // for drop_nearest / keep_nearest
};

struct ContextWindowSpec {
  WindowSide past;
  WindowSide future;
};

/// Parses forms like "keepall", "dropall", "dropnearest:5", "keepnearest:5"
/// and the paper-style shorthands "--", "-5", "-all", "+5".
std::optional<WindowSide> parse_window_side(const std::string& s);
std::string window_side_name(const WindowSide& w);

enum class SpeakerMode { wo_inter, wo_intra };
enum class LcaConstraint { same_label, different_label };
enum class LcaStrategy { concat, replace };
enum class PerturbKind {
  none,
  shuffle,
  drop,
  speaker_filter,
  spelling_attack,
  word_substitution,
  style_flip,
  lca
};

/// Replaces a token in context, or declines. Implementations must be
/// deterministic.
class WordSubstitutionProvider {
 public:
  virtual ~WordSubstitutionProvider() = default;
  virtual std::optional<std::string> substitute(
      const std::string& token, const std::string& sentence) const = 0;
};

/// tab-separated "source<TAB>replacement" lines.
class LexiconProvider : public WordSubstitutionProvider {
 public:
  explicit LexiconProvider(const std::string& path);
  explicit LexiconProvider(std::map<std::string, std::string> mapping)
      : mapping_(std::move(mapping)) {}
  std::optional<std::string> substitute(
      const std::string& token, const std::string& sentence) const override;

 private:
  std::map<std::string, std::string> mapping_;
};

class SentimentFlipper {
 public:
  virtual ~SentimentFlipper() = default;
  /// Returns text unchanged on unknown polarity / no rewrite available.
  virtual std::string flip(const std::string& text, Sentiment source) const = 0;
};

/// Word-level antonym substitution from a valence lexicon
/// ("word<TAB>antonym" lines, applied in either direction).
class LexiconFlipper : public SentimentFlipper {
 public:
  explicit LexiconFlipper(const std::string& path);
  explicit LexiconFlipper(std::map<std::string, std::string> mapping);
  std::string flip(const std::string& text, Sentiment source) const override;

 private:
  std::map<std::string, std::string> mapping_;  // symmetric closure
};

struct PerturbationSpec {
  PerturbKind kind = PerturbKind::none;
  ContextWindowSpec window;           // drop
  SpeakerMode speaker_mode = SpeakerMode::wo_inter;
  int w = 0;                          // style_flip / lca / attacks
  bool past = true, future = true, target = false;  // attack directions
  LcaConstraint lca_constraint = LcaConstraint::same_label;
  LcaStrategy lca_strategy = LcaStrategy::replace;
  uint64_t seed = 0;
  std::string lexicon_path;  // word_substitution / style_flip default provider
};

struct ShuffleResult {
  Dialogue dialogue;
  /// order[j] = 1-based original position of the utterance now at j.
  std::vector<int> order;
};

ShuffleResult shuffle_dialogue(const Dialogue& d, uint64_t seed);
/// Test hook: apply a fixed permutation (new position j takes original
/// utterance perm[j], 0-based).
ShuffleResult shuffle_with_permutation(const Dialogue& d,
                                       const std::vector<int>& perm);

/// 1-based visible index set (sorted) for classifying position t; t is always
/// a member.
std::vector<int> apply_window(const Dialogue& d, int t,
                              const ContextWindowSpec& spec);

std::vector<int> speaker_filter(const Dialogue& d, int t, SpeakerMode mode);

/// Edits 3-4 words (length >= 3) with one of swap / delete / duplicate each.
Utterance spelling_attack(const Utterance& u, uint64_t seed);

Utterance word_substitution_attack(const Utterance& u,
                                   const WordSubstitutionProvider& provider,
                                   uint64_t seed);

/// One evaluation view: classify `target_index` with the listed visible
/// context (original indices, in presentation order) and optional text/label
/// overrides.
struct ContextView {
  std::string dialogue_id;
  int target_index = 0;            // 0-based original index
  std::vector<int> visible;        // 0-based original indices, in order
  std::map<int, std::string> text_override;
  std::map<int, LabelId> label_override;
  std::vector<int> order_targets;  // shuffle only; 1-based original positions
};

/// Flips positive-group context to negative and vice versa within window w of
/// target t (0-based); neutral context and the target stay untouched.
/// Directions via spec.past/spec.future.
std::vector<ContextView> flip_context_views(
    const Corpus& corpus, const Dialogue& d, const PerturbationSpec& spec,
    const SentimentFlipper& flipper);

/// Per-target donor augmentation from other test dialogues under the SL/DL
/// constraint; throws with the offending label when no donor exists.
std::vector<ContextView> lca_views(const Corpus& corpus,
                                   const std::vector<Dialogue>& test_split,
                                   const Dialogue& d,
                                   const PerturbationSpec& spec);

struct Plan {
  std::vector<ContextView> views;
};

/// Expands a spec over every eval-masked utterance of the corpus split.
/// Pure description: no model invocation. Deterministic per (spec.seed).
Plan plan_expand(const PerturbationSpec& spec, const Corpus& corpus,
                 Split split,
                 const WordSubstitutionProvider* provider = nullptr,
                 const SentimentFlipper* flipper = nullptr);

void write_plan_jsonl(const Plan& plan, const std::string& path);

/// Stable per-(dialogue, target) stream so parallel evaluation order never
/// changes outputs.
uint64_t mix_seed(uint64_t seed, const std::string& dialogue_id, int target);

}  // namespace dctx
