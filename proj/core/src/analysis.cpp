#include "dctx/analysis.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace dctx {

namespace {

struct ClassCounts {
  long tp = 0, fp = 0, fn = 0;
  long support() const { return tp + fn; }
  double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
  double f1() const {
    double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

std::map<int, ClassCounts> per_class_counts(const std::vector<EvalRow>& rows) {
  std::map<int, ClassCounts> by_class;
  for (const EvalRow& r : rows) {
    if (!r.eval_mask) continue;
    if (r.gold == r.pred) {
      ++by_class[r.gold].tp;
    } else {
      ++by_class[r.gold].fn;
      ++by_class[r.pred].fp;
    }
  }
  return by_class;
}

}  // namespace

double f1(const std::vector<EvalRow>& rows, F1Scheme scheme) {
  long unmasked = 0;
  for (const EvalRow& r : rows) unmasked += r.eval_mask ? 1 : 0;
  if (unmasked == 0) throw std::invalid_argument("f1: all rows masked");

  auto by_class = per_class_counts(rows);
  if (scheme == F1Scheme::micro) {
    long tp = 0, fp = 0, fn = 0;
    for (const auto& [c, k] : by_class) {
      tp += k.tp;
      fp += k.fp;
      fn += k.fn;
    }
    double p = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
    double r = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  double total = 0.0, weight_sum = 0.0;
  long classes = 0;
  for (const auto& [c, k] : by_class) {
    if (k.support() == 0) continue;  // predicted-only classes don't count
    if (scheme == F1Scheme::weighted) {
      total += double(k.support()) * k.f1();
      weight_sum += double(k.support());
    } else {
      total += k.f1();
      ++classes;
    }
  }
  if (scheme == F1Scheme::weighted) return total / weight_sum;
  return classes == 0 ? 0.0 : total / double(classes);
}

void fill_aggregates(EvalReport& report) {
  report.aggregate["w_avg_f1"] = f1(report.rows, F1Scheme::weighted);
  report.aggregate["macro_f1"] = f1(report.rows, F1Scheme::macro);
  report.aggregate["micro_f1"] = f1(report.rows, F1Scheme::micro);
}

TransitionMatrix transition_matrix(const std::vector<Dialogue>& dialogues,
                                   TransitionMode mode, int n_labels) {
  TransitionMatrix m;
  m.mode = mode;
  m.counts = Eigen::MatrixXd::Zero(n_labels, n_labels);
  for (const Dialogue& d : dialogues) {
    for (size_t i = 0; i + 1 < d.utterances.size(); ++i) {
      const Utterance& a = d.utterances[i];
      const Utterance& b = d.utterances[i + 1];
      if (!a.label || !b.label) continue;
      bool same = a.speaker == b.speaker;
      if ((mode == TransitionMode::intra) != same) continue;
      m.counts(*a.label, *b.label) += 1.0;
      ++m.total;
    }
  }
  m.freq = m.total > 0 ? Eigen::MatrixXd(m.counts / double(m.total))
                       : Eigen::MatrixXd::Zero(n_labels, n_labels);
  return m;
}

namespace {

using Gram = std::vector<int>;

/// Label n-grams with the dialogue position of the final element.
std::vector<std::pair<Gram, int>> collect_grams(const Dialogue& d, int n,
                                                PatternScope scope) {
  std::vector<std::pair<Gram, int>> out;
  if (scope == PatternScope::intra) {
    std::map<SpeakerId, std::vector<std::pair<int, int>>> seq;  // (label, pos)
    for (size_t i = 0; i < d.utterances.size(); ++i)
      if (d.utterances[i].label)
        seq[d.utterances[i].speaker].push_back(
            {*d.utterances[i].label, static_cast<int>(i)});
    for (const auto& [sp, labels] : seq)
      for (size_t i = 0; i + n <= labels.size(); ++i) {
        Gram g;
        for (int j = 0; j < n; ++j)
          g.push_back(labels[i + static_cast<size_t>(j)].first);
        out.push_back({g, labels[i + static_cast<size_t>(n) - 1].second});
      }
  } else {
    for (size_t i = 0; i + 1 < d.utterances.size(); ++i) {
      const Utterance& a = d.utterances[i];
      const Utterance& b = d.utterances[i + 1];
      if (!a.label || !b.label || a.speaker == b.speaker) continue;
      out.push_back({{*a.label, *b.label}, static_cast<int>(i) + 1});
    }
  }
  return out;
}

}  // namespace

PatternStats ngram_patterns(const std::vector<Dialogue>& train,
                            const EvalReport& test_report,
                            const std::vector<Dialogue>& test, int n,
                            PatternScope scope, int n_labels) {
  if (n < 2) throw std::invalid_argument("ngram_patterns: n must be >= 2");
  if (scope == PatternScope::inter && n != 2)
    throw std::invalid_argument("ngram_patterns: inter scope supports n=2 only");
  (void)n_labels;

  std::map<Gram, long> train_counts, test_counts;
  long train_total = 0, test_total = 0;
  for (const Dialogue& d : train)
    for (const auto& [g, pos] : collect_grams(d, n, scope)) {
      ++train_counts[g];
      ++train_total;
    }

  // Rows of the test report keyed by (dialogue, position).
  std::map<std::pair<std::string, int>, const EvalRow*> row_at;
  for (const EvalRow& r : test_report.rows)
    row_at[{r.dialogue_id, r.index}] = &r;

  std::map<Gram, std::vector<const EvalRow*>> final_rows;
  for (const Dialogue& d : test)
    for (const auto& [g, pos] : collect_grams(d, n, scope)) {
      ++test_counts[g];
      ++test_total;
      auto it = row_at.find({d.id, pos});
      if (it != row_at.end() && it->second->eval_mask)
        final_rows[g].push_back(it->second);
    }

  std::set<Gram> all;
  for (const auto& [g, c] : train_counts) all.insert(g);
  for (const auto& [g, c] : test_counts) all.insert(g);

  PatternStats stats;
  stats.n = n;
  stats.scope = scope;
  for (const Gram& g : all) {
    PatternEntry e;
    e.labels = g;
    if (train_total > 0 && train_counts.count(g))
      e.train_freq_pct = 100.0 * double(train_counts[g]) / double(train_total);
    if (test_total > 0 && test_counts.count(g))
      e.test_freq_pct = 100.0 * double(test_counts[g]) / double(test_total);
    auto it = final_rows.find(g);
    if (it != final_rows.end() && !it->second.empty()) {
      std::vector<EvalRow> rows;
      for (const EvalRow* r : it->second) rows.push_back(*r);
      e.test_score = f1(rows, F1Scheme::weighted);
      e.test_support = static_cast<long>(rows.size());
    }
    stats.patterns.push_back(std::move(e));
  }
  std::stable_sort(stats.patterns.begin(), stats.patterns.end(),
                   [](const PatternEntry& a, const PatternEntry& b) {
                     return a.train_freq_pct > b.train_freq_pct;
                   });
  return stats;
}

namespace {

/// Marks, for each labeled position, whether its label differs from the
/// previous labeled utterance of the same (intra) or the other (inter)
/// speaker.
std::map<std::pair<std::string, int>, bool> shift_positions(
    const std::vector<Dialogue>& dialogues, ShiftMode mode) {
  std::map<std::pair<std::string, int>, bool> out;
  for (const Dialogue& d : dialogues) {
    std::vector<std::pair<int, SpeakerId>> history;  // (label, speaker)
    for (size_t i = 0; i < d.utterances.size(); ++i) {
      const Utterance& u = d.utterances[i];
      if (!u.label) continue;
      int prev = -1;
      for (auto it = history.rbegin(); it != history.rend(); ++it) {
        bool same = it->second == u.speaker;
        if ((mode == ShiftMode::intra) == same) {
          prev = it->first;
          break;
        }
      }
      out[{d.id, static_cast<int>(i)}] = prev >= 0 && prev != *u.label;
      history.push_back({*u.label, u.speaker});
    }
  }
  return out;
}

}  // namespace

ShiftReport label_shift_report(const EvalReport& report,
                               const std::vector<Dialogue>& dialogues,
                               ShiftMode mode) {
  auto is_shift = shift_positions(dialogues, mode);

  ShiftReport out;
  std::vector<EvalRow> shifted;
  std::map<std::string, long> per_dialogue;
  for (const Dialogue& d : dialogues) per_dialogue[d.id] = 0;
  for (const EvalRow& r : report.rows) {
    if (!r.eval_mask) continue;
    auto it = is_shift.find({r.dialogue_id, r.index});
    if (it != is_shift.end() && it->second) {
      shifted.push_back(r);
      ++per_dialogue[r.dialogue_id];
    }
  }
  out.support = static_cast<long>(shifted.size());
  if (!shifted.empty()) out.score = f1(shifted, F1Scheme::weighted);
  if (!per_dialogue.empty()) {
    double total = 0.0;
    for (const auto& [id, c] : per_dialogue) total += double(c);
    out.shifts_per_dialogue = total / double(per_dialogue.size());
  }
  return out;
}

ShiftReport sentiment_shift_report(const EvalReport& report,
                                   const Corpus& corpus,
                                   const std::vector<Dialogue>& dialogues,
                                   bool include_neutral) {
  if (!corpus.sentiment_groups)
    throw CorpusError("sentiment_shift_report requires sentiment_groups");
  const auto& groups = *corpus.sentiment_groups;

  std::map<std::pair<std::string, int>, bool> is_shift;
  std::map<std::string, long> per_dialogue;
  for (const Dialogue& d : dialogues) {
    per_dialogue[d.id] = 0;
    std::map<SpeakerId, Sentiment> last_group;
    for (size_t i = 0; i < d.utterances.size(); ++i) {
      const Utterance& u = d.utterances[i];
      if (!u.label) continue;
      Sentiment cur = groups.at(*u.label);
      auto it = last_group.find(u.speaker);
      bool shift = false;
      if (it != last_group.end()) {
        Sentiment prev = it->second;
        if (include_neutral) {
          shift = prev != cur;
        } else {
          shift = (prev == Sentiment::positive && cur == Sentiment::negative) ||
                  (prev == Sentiment::negative && cur == Sentiment::positive);
        }
      }
      is_shift[{d.id, static_cast<int>(i)}] = shift;
      if (shift) ++per_dialogue[d.id];
      last_group[u.speaker] = cur;
    }
  }

  ShiftReport out;
  std::vector<EvalRow> shifted;
  for (const EvalRow& r : report.rows) {
    if (!r.eval_mask) continue;
    auto it = is_shift.find({r.dialogue_id, r.index});
    if (it != is_shift.end() && it->second) shifted.push_back(r);
  }
  out.support = static_cast<long>(shifted.size());
  if (!shifted.empty()) out.score = f1(shifted, F1Scheme::weighted);
  double total = 0.0;
  for (const auto& [id, c] : per_dialogue) total += double(c);
  if (!per_dialogue.empty())
    out.shifts_per_dialogue = total / double(per_dialogue.size());
  return out;
}

std::vector<PositionBucket> position_report(const EvalReport& report,
                                            int exact_until) {
  std::map<std::pair<int, int>, std::vector<EvalRow>> buckets;
  for (const EvalRow& r : report.rows) {
    if (!r.eval_mask) continue;
    int pos = r.index + 1;
    std::pair<int, int> key;
    if (pos <= exact_until) {
      key = {pos, pos};
    } else {
      int b = (pos - exact_until - 1) / 10;
      key = {exact_until + 1 + 10 * b, exact_until + 10 * (b + 1)};
    }
    buckets[key].push_back(r);
  }
  std::vector<PositionBucket> out;
  for (const auto& [key, rows] : buckets) {
    PositionBucket b;
    b.first_pos = key.first;
    b.last_pos = key.second;
    b.support = static_cast<long>(rows.size());
    b.score = f1(rows, F1Scheme::weighted);
    out.push_back(b);
  }
  return out;
}

void write_report_json(const EvalReport& report, const Corpus& corpus,
                       const std::string& path) {
  nlohmann::json j;
  j["task"] = corpus.task_name;
  j["labels"] = corpus.label_set;
  j["aggregate"] = report.aggregate;
  nlohmann::json rows = nlohmann::json::array();
  for (const EvalRow& r : report.rows) {
    rows.push_back({{"dialogue_id", r.dialogue_id},
                    {"index", r.index},
                    {"gold", r.gold},
                    {"pred", r.pred},
                    {"eval_mask", r.eval_mask}});
  }
  j["rows"] = std::move(rows);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

EvalReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report: " + path);
  nlohmann::json j;
  in >> j;
  EvalReport rep;
  for (const auto& [k, v] : j.at("aggregate").items())
    rep.aggregate[k] = v.get<double>();
  for (const auto& r : j.at("rows")) {
    EvalRow row;
    row.dialogue_id = r.at("dialogue_id").get<std::string>();
    row.index = r.at("index").get<int>();
    row.gold = r.at("gold").get<int>();
    row.pred = r.at("pred").get<int>();
    row.eval_mask = r.at("eval_mask").get<bool>();
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

void write_transition_csv(const TransitionMatrix& m, const Corpus& corpus,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "from\\to";
  for (const std::string& l : corpus.label_set) out << "," << l;
  out << "\n";
  for (long i = 0; i < m.freq.rows(); ++i) {
    out << corpus.label_set[static_cast<size_t>(i)];
    for (long j = 0; j < m.freq.cols(); ++j) out << "," << m.freq(i, j);
    out << "\n";
  }
}

void write_patterns_csv(const PatternStats& s, const Corpus& corpus,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "pattern,train_freq_pct,test_freq_pct,test_score,test_support\n";
  for (const PatternEntry& e : s.patterns) {
    std::string name;
    for (size_t i = 0; i < e.labels.size(); ++i) {
      if (i) name += "|";
      name += corpus.label_set[static_cast<size_t>(e.labels[i])];
    }
    out << name << "," << e.train_freq_pct << "," << e.test_freq_pct << ",";
    if (e.test_score >= 0.0) out << e.test_score;
    out << "," << e.test_support << "\n";
  }
}

void write_position_csv(const std::vector<PositionBucket>& buckets,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "first_pos,last_pos,score,support\n";
  for (const PositionBucket& b : buckets) {
    out << b.first_pos << "," << b.last_pos << ",";
    if (b.score >= 0.0) out << b.score;
    out << "," << b.support << "\n";
  }
}

}  // namespace dctx
