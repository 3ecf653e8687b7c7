#pragma once

#include "dctx/autodiff.hpp"
#include "dctx/corpus.hpp"

#include <map>
#include <string>
#include <vector>

namespace dctx {

/// Linear-chain CRF scores. Order 1 uses `trans` (K x K) between every
/// adjacent pair. Order 2 uses `trans` only at position 2 (conditioned on the
/// single previous label) and `trans2` (K^2 x K, row index = y_{i-2}*K +
/// y_{i-1}) from position 3 on.
struct CrfParams {
  int order = 1;
  int K = 0;
  Eigen::VectorXd start;  // K
  Eigen::VectorXd stop;   // K
  Mat trans;              // K x K
  Mat trans2;             // K^2 x K (order 2 only)

  static CrfParams zeros(int order, int K);
};

struct EmissionSeq {
  int n = 0;
  Mat scores;  // n x K log-potentials

  EmissionSeq() = default;
  EmissionSeq(Mat s) : n(static_cast<int>(s.rows())), scores(std::move(s)) {}
};

/// Total unnormalized log-score of one label sequence.
double sequence_score(const EmissionSeq& e, const CrfParams& p,
                      const std::vector<int>& labels);

/// log sum over all K^n sequences of exp(score), via the forward algorithm
/// in log space (pair-state recursion for order 2).
double log_partition(const EmissionSeq& e, const CrfParams& p);

/// -gold score + log_partition. Gold labels must be in [0, K).
double crf_nll(const EmissionSeq& e, const CrfParams& p,
               const std::vector<int>& gold);

struct ViterbiResult {
  std::vector<int> labels;
  double score = 0.0;
};

/// Exact argmax decoding; ties resolved toward the lowest label index.
ViterbiResult viterbi(const EmissionSeq& e, const CrfParams& p);

/// Splits the sequence into per-speaker subsequences (each keeping its own
/// order) and sums the per-subsequence NLL under that role's parameters.
double speaker_crf_nll(const EmissionSeq& e,
                       const std::vector<SpeakerId>& speakers,
                       const std::map<SpeakerId, const CrfParams*>& params_by_role,
                       const std::vector<int>& gold);

/// Per-speaker Viterbi; returns a full-length label sequence assembled from
/// the per-role decodes.
std::vector<int> speaker_viterbi(const EmissionSeq& e,
                                 const std::vector<SpeakerId>& speakers,
                                 const std::map<SpeakerId, const CrfParams*>&
                                     params_by_role);

/// CRF parameters already on a tape (for training).
struct CrfVars {
  int order = 1;
  Var start;   // 1 x K
  Var stop;    // 1 x K
  Var trans;   // K x K
  Var trans2;  // K^2 x K; only consulted when order == 2
};

/// Differentiable NLL with masked-position marginalization: positions with
/// mask=false are summed over all labels in the gold path, so they shape the
/// chain without contributing supervision. Gradients flow into emissions and
/// all CRF score tensors (exact, via forward-backward expectations).
Var crf_nll_loss(Tape& t, Var emissions, const CrfVars& p,
                 const std::vector<int>& gold, const std::vector<bool>& mask);

}  // namespace dctx
