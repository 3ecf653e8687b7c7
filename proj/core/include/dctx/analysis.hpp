#pragma once

#include "dctx/corpus.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace dctx {

struct EvalRow {
  std::string dialogue_id;
  int index = 0;  // 0-based position in the dialogue
  int gold = -1;  // -1 when masked
  int pred = -1;
  bool eval_mask = true;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::map<std::string, double> aggregate;  // metric name -> value
};

enum class F1Scheme { weighted, macro, micro };

/// Per-class F1 aggregation over unmasked rows. Macro averages only classes
/// with gold support. Throws when every row is masked.
double f1(const std::vector<EvalRow>& rows, F1Scheme scheme);

/// Fills the standard aggregate metrics of a report in place.
void fill_aggregates(EvalReport& report);

enum class TransitionMode { intra, inter };

struct TransitionMatrix {
  TransitionMode mode = TransitionMode::intra;
  Eigen::MatrixXd counts;  // K x K
  Eigen::MatrixXd freq;    // normalized; zero matrix when no transitions
  long total = 0;
};

/// Adjacent labeled utterance pairs; intra keeps pairs sharing a speaker,
/// inter keeps pairs with different speakers. freq sums to 1 when total > 0.
TransitionMatrix transition_matrix(const std::vector<Dialogue>& dialogues,
                                   TransitionMode mode, int n_labels);

enum class PatternScope { intra, inter };

struct PatternEntry {
  std::vector<int> labels;
  double train_freq_pct = 0.0;
  double test_freq_pct = 0.0;
  double test_score = -1.0;  // -1 when no test occurrences
  long test_support = 0;
};

struct PatternStats {
  int n = 2;
  PatternScope scope = PatternScope::intra;
  std::vector<PatternEntry> patterns;  // sorted by train frequency, desc
};

/// Label n-grams: intra over each speaker's subsequence, inter over adjacent
/// cross-speaker pairs (n == 2 only). Test score is F1 over the final
/// positions of test occurrences of the pattern.
PatternStats ngram_patterns(const std::vector<Dialogue>& train,
                            const EvalReport& test_report,
                            const std::vector<Dialogue>& test, int n,
                            PatternScope scope, int n_labels);

struct ShiftReport {
  double score = -1.0;  // -1 when no shift rows
  long support = 0;
  double shifts_per_dialogue = 0.0;
};

enum class ShiftMode { intra, inter };

/// Scores only utterances whose label differs from the previous labeled
/// utterance of the same (intra) or the other (inter) speaker.
ShiftReport label_shift_report(const EvalReport& report,
                               const std::vector<Dialogue>& dialogues,
                               ShiftMode mode);

/// Same restriction over sentiment group of the label. With
/// include_neutral=false only positive<->negative switches count as shifts.
ShiftReport sentiment_shift_report(const EvalReport& report,
                                   const Corpus& corpus,
                                   const std::vector<Dialogue>& dialogues,
                                   bool include_neutral);

struct PositionBucket {
  int first_pos = 1, last_pos = 1;  // 1-based inclusive
  double score = -1.0;
  long support = 0;
};

/// Groups unmasked rows by 1-based dialogue position: exact positions up to
/// exact_until, then width-10 buckets.
std::vector<PositionBucket> position_report(const EvalReport& report,
                                            int exact_until = 30);

// --- serialization ---
void write_report_json(const EvalReport& report, const Corpus& corpus,
                       const std::string& path);
EvalReport read_report_json(const std::string& path);
void write_transition_csv(const TransitionMatrix& m, const Corpus& corpus,
                          const std::string& path);
void write_patterns_csv(const PatternStats& s, const Corpus& corpus,
                        const std::string& path);
void write_position_csv(const std::vector<PositionBucket>& buckets,
                        const std::string& path);

}  // namespace dctx
